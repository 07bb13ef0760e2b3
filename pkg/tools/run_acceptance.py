#!/usr/bin/python -B
# -*- coding: utf-8 -*-
#
# Runs the headline numbers against the sample models in ./data/ and prints a
# timing table. Exits 1 if any check fails.
#

# --- Python standard library ---
import os, sys
import time
import logging

logging.basicConfig(format = '%(asctime)s %(module)s %(levelname)s: %(message)s',
                datefmt = '%m/%d/%Y %I:%M:%S %p', level = logging.INFO)
logger = logging.getLogger(__name__)

import numpy as np

from resources.lib import event_models, gram_core, simulate
from resources.lib.errors import fail_status, new_status_dic
from resources.lib.gram_core import WeightScheme
from resources.lib.settings import BoundSettings

# --- configuration ------------------------------------------------------------------------------
DATA_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'data')
TOLERANCE = 1e-12


def load(name: str):
    return event_models.load_model(os.path.join(DATA_DIR, name))


def expect_close(status_dic: dict, actual: float, expected: float, tol: float = TOLERANCE):
    if not abs(actual - expected) <= tol:
        fail_status(status_dic, f'got {actual!r}, expected {expected!r}')


# --- checks -------------------------------------------------------------------------------------
def check_two_coins_unit():
    status_dic = new_status_dic('two coins, unit weights: R_3k = 25/44')
    g = event_models.gram(load('two_coins.json'), 30)
    for n in range(3, 31, 3):
        expect_close(status_dic, gram_core.ratio(g, np.ones(30), n), 25.0 / 44.0)
    return status_dic


def check_two_coins_signed():
    status_dic = new_status_dic('two coins, weights 1,1,-1: R_3k = 0.75')
    g = event_models.gram(load('two_coins.json'), 30)
    w = WeightScheme.periodic_pattern([1, 1, -1]).resolve(g)
    for n in range(3, 31, 3):
        expect_close(status_dic, gram_core.ratio(g, w, n), 0.75)
    return status_dic


def check_two_coins_optimal():
    status_dic = new_status_dic('two coins, optimal weights at n=3 are proportional to 1,1,-1')
    g = event_models.gram(load('two_coins.json'), 3)
    best = gram_core.optimal_weights(g, 3)
    target = np.array([1.0, 1.0, -1.0])
    cosine = float(np.dot(best.weights, target) / (np.linalg.norm(best.weights) * np.linalg.norm(target)))
    if cosine <= 1.0 - 1e-9:
        fail_status(status_dic, f'cosine similarity {cosine!r}')
    expect_close(status_dic, best.value, 0.75)
    return status_dic


def check_fair_coins_optimal():
    status_dic = new_status_dic('fair coins, optimal value at n=10 is 10/11')
    g = event_models.gram(load('independent_half.json'), 10)
    expect_close(status_dic, gram_core.optimal_weights(g, 10).value, 10.0 / 11.0)
    return status_dic


def check_harmonic():
    status_dic = new_status_dic('harmonic events, unit weights: R_10000 >= 0.90')
    report = gram_core.ratio_sequence(event_models.gram(load('harmonic.json'), 10000), WeightScheme.unit())
    if not report.ratio_at(10000) >= 0.90:
        fail_status(status_dic, f'R_10000 = {report.ratio_at(10000)!r}')
    return status_dic


def check_parity():
    status_dic = new_status_dic('11-bit parity, unit weights: R_1400 = 1400/1401')
    g = event_models.gram(load('parity11.json'), 1400)
    expect_close(status_dic, gram_core.ratio(g, np.ones(1400), 1400), 1400.0 / 1401.0, 1e-9)
    return status_dic


def check_wilson_coverage():
    status_dic = new_status_dic('Wilson 99% interval covers the truth in >= 97% of 500 runs')
    model = load('independent_half.json')
    settings = BoundSettings(force_simulation=True)
    covered = 0
    for seed in range(500):
        estimate = simulate.estimate_union(model, 1, 2, 2000, seed, settings)
        covered += estimate.ci_low <= 0.75 <= estimate.ci_high
    if covered < 485:
        fail_status(status_dic, f'{covered} of 500 covered')
    return status_dic


def check_worker_determinism():
    status_dic = new_status_dic('Markov estimate identical for 1 and 4 workers')
    model = load('markov2.json')
    serial = simulate.estimate_union(model, 1, 50, 40000, 0, BoundSettings())
    parallel = simulate.estimate_union(model, 1, 50, 40000, 0, BoundSettings(workers=4))
    if serial != parallel:
        fail_status(status_dic, f'{serial.hits} vs {parallel.hits} hits')
    return status_dic


CHECKS = [
    check_two_coins_unit,
    check_two_coins_signed,
    check_two_coins_optimal,
    check_fair_coins_optimal,
    check_harmonic,
    check_parity,
    check_wilson_coverage,
    check_worker_determinism,
]

# --- main ---------------------------------------------------------------------------------------
failed = 0
for check in CHECKS:
    start = time.perf_counter()
    try:
        status_dic = check()
    except Exception as ex:
        logger.error('Exception in {}'.format(check.__name__), exc_info=ex)
        status_dic = new_status_dic(check.__name__)
        fail_status(status_dic, str(ex))
    elapsed = time.perf_counter() - start
    failed += not status_dic['status']
    print('{:4s} {:8.3f}s  {}'.format('OK' if status_dic['status'] else 'FAIL', elapsed, status_dic['msg']))

print('\n{} of {} checks passed'.format(len(CHECKS) - failed, len(CHECKS)))
sys.exit(1 if failed else 0)
