#!/usr/bin/python -B
# -*- coding: utf-8 -*-
#
# Dumps convergence tables (R_n, running max and union per grid point) for the
# sample models in ./data/ into ./output/ as CSV, and prints a summary table.
#

# --- Python standard library ---
import os, sys
import logging

logging.basicConfig(format = '%(asctime)s %(module)s %(levelname)s: %(message)s',
                datefmt = '%m/%d/%Y %I:%M:%S %p', level = logging.INFO)
logger = logging.getLogger(__name__)

from resources.lib import event_models, simulate
from resources.lib.gram_core import WeightScheme
from resources.lib.settings import BoundSettings

# --- configuration ------------------------------------------------------------------------------
DATA_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'data')
OUTPUT_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'output')
TRIALS = 20000
SEED = 0

# (model file, weight scheme, horizon)
RUNS = [
    ('constant.json', WeightScheme.unit(), 100),
    ('two_coins.json', WeightScheme.unit(), 300),
    ('two_coins.json', WeightScheme.periodic_pattern([1, 1, -1]), 300),
    ('independent_half.json', WeightScheme.unit(), 1000),
    ('harmonic.json', WeightScheme.unit(), 10000),
    ('parity3.json', WeightScheme.unit(), 700),
    ('parity11.json', WeightScheme.unit(), 1400),
    ('markov2.json', WeightScheme.unit(), 200),
    ('markov2.json', WeightScheme.optimal(), 200),
]

# --- main ---------------------------------------------------------------------------------------
os.makedirs(OUTPUT_DIR, exist_ok=True)
settings = BoundSettings(workers=os.cpu_count() or 1)

sl = []
sl.append('{:24s} {:20s} {:>6s} {:>14s} {:>14s} {:>14s} {:>5s}'.format(
    'model', 'weights', 'n', 'ratio', 'running max', 'union', 'src'))
for model_file, scheme, n in RUNS:
    model = event_models.load_model(os.path.join(DATA_DIR, model_file))
    grid = simulate.geometric_grid(n, 15)
    rows = simulate.convergence_experiment(model, scheme, grid, TRIALS, SEED, settings)

    csv_fname = os.path.join(OUTPUT_DIR, '{}_{}_{}.csv'.format(
        os.path.splitext(model_file)[0], scheme.variant.value, n))
    logger.info('Writing file "{}"'.format(csv_fname))
    with open(csv_fname, 'w', encoding='utf-8', newline='') as f:
        simulate.write_convergence_csv(rows, f)

    last = rows[-1]
    sl.append('{:24s} {:20s} {:6d} {:14.10f} {:14.10f} {:14.10f} {:>5s}'.format(
        model_file, scheme.describe(), last.n, last.ratio, last.running_max, last.union, last.source))

print('\n'.join(sl))
sys.exit(0)
