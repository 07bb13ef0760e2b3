# -*- coding: utf-8 -*-
#
# Monte Carlo estimates of P(A_s | ... | A_n) and checks that ratio bounds stay below them.
#
# Trials run in chunks of settings.chunk_size. Chunk c draws from substream (seed, c),
# so a chunk's trajectories never depend on which worker runs it. Chunks reduce by
# summing integer hit counts, which is exact and order-independent.
#
from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, TextIO, Tuple

import numpy as np
from scipy import stats

from resources.lib import rng
from resources.lib.errors import PreconditionError, SizeGuardError
from resources.lib.event_models import EventSeqModel, gram
from resources.lib.gram_core import (WeightScheme, WeightVariant, format_real, optimal_weights, ratio,
                                     ratio_sequence)
from resources.lib.settings import DEFAULT_SETTINGS, BoundSettings

logger = logging.getLogger(__name__)

SOURCE_EXACT = 'exact'
SOURCE_MC = 'mc'

CONVERGENCE_CSV_HEADER = ['n', 'ratio', 'running_max', 'union', 'ci_low', 'ci_high', 'source']


@dataclass(frozen=True)
class UnionEstimate:
    estimate: float
    trials: int
    hits: int
    stderr: float
    ci_low: float
    ci_high: float
    seed: int
    s: int
    n: int
    level: float
    source: str = SOURCE_MC


class Verdict(Enum):
    CONSISTENT = 'consistent'
    VIOLATED = 'violated'
    UNDEFINED = 'undefined'


@dataclass(frozen=True)
class ValidationReport:
    bound_value: float
    estimate: Optional[UnionEstimate]
    slack: float
    verdict: Verdict
    n: int
    scheme: WeightScheme


@dataclass(frozen=True)
class ConvergenceRow:
    n: int
    ratio: float
    running_max: float
    union: float
    ci_low: float
    ci_high: float
    source: str


# ------------------------------------------------------------------------------------------------
# Intervals
# ------------------------------------------------------------------------------------------------
def wilson_interval(hits: int, trials: int, level: float) -> Tuple[float, float]:
    """Wilson score interval for a binomial proportion; stays inside [0, 1] near the ends."""
    if trials < 1:
        raise PreconditionError(f'Wilson interval needs at least one trial, got {trials}')
    z = float(stats.norm.ppf(0.5 + level / 2.0))
    phat = hits / trials
    z2n = z * z / trials
    centre = phat + z2n / 2.0
    half = z * math.sqrt(phat * (1.0 - phat) / trials + z2n / (4.0 * trials))
    low = (centre - half) / (1.0 + z2n)
    high = (centre + half) / (1.0 + z2n)
    return max(0.0, min(low, phat)), min(1.0, max(high, phat))


def _mc_estimate(hits: int, trials: int, seed: int, s: int, n: int, level: float) -> UnionEstimate:
    estimate = hits / trials
    low, high = wilson_interval(hits, trials, level)
    return UnionEstimate(
        estimate=estimate,
        trials=trials,
        hits=hits,
        stderr=math.sqrt(estimate * (1.0 - estimate) / trials),
        ci_low=low,
        ci_high=high,
        seed=seed,
        s=s,
        n=n,
        level=level,
        source=SOURCE_MC,
    )


# ------------------------------------------------------------------------------------------------
# Monte Carlo
# ------------------------------------------------------------------------------------------------
def _chunks(trials: int, chunk_size: int) -> List[Tuple[int, int]]:
    return [(index, min(chunk_size, trials - start))
            for index, start in enumerate(range(0, trials, chunk_size))]


def _first_hit_counts(model: EventSeqModel, s: int, n: int, trials: int, seed: int,
                      settings: BoundSettings) -> np.ndarray:
    """counts[k] = trials whose first event in s..n is A_k; counts[n + 1] = trials with none."""

    def run(job: Tuple[int, int]) -> np.ndarray:
        index, size = job
        window = model.sample(n, size, rng.substream(seed, index))[:, s - 1:n]
        hit = np.any(window, axis=1)
        first = np.where(hit, np.argmax(window, axis=1) + s, n + 1)
        return np.bincount(first, minlength=n + 2)

    jobs = _chunks(trials, settings.chunk_size)
    logger.debug('_first_hit_counts() %s s=%d n=%d trials=%d chunks=%d workers=%d',
                 model.describe(), s, n, trials, len(jobs), settings.workers)
    if settings.workers > 1:
        with ThreadPoolExecutor(max_workers=settings.workers) as pool:
            parts = list(pool.map(run, jobs))
    else:
        parts = [run(job) for job in jobs]

    counts = np.zeros(n + 2, dtype=np.int64)
    for part in parts:
        counts += part
    return counts


def estimate_union_curve(model: EventSeqModel, s: int, n_grid: Sequence[int], trials: int, seed: int,
                         settings: BoundSettings = DEFAULT_SETTINGS) -> List[UnionEstimate]:
    """estimate_union at every grid point from one simulation at the largest horizon."""
    grid = _check_grid(n_grid, s)
    if trials < 1:
        raise PreconditionError(f'trials must be positive, got {trials}')
    counts = _first_hit_counts(model, s, grid[-1], trials, seed, settings)
    cumulative = np.cumsum(counts)
    return [_mc_estimate(int(cumulative[n]), trials, seed, s, n, settings.ci_level) for n in grid]


def estimate_union(model: EventSeqModel, s: int, n: int, trials: int, seed: int,
                   settings: BoundSettings = DEFAULT_SETTINGS) -> UnionEstimate:
    return estimate_union_curve(model, s, [n], trials, seed, settings)[0]


def exact_estimate(model: EventSeqModel, s: int, n: int, seed: int = 0,
                   level: float = DEFAULT_SETTINGS.ci_level) -> Optional[UnionEstimate]:
    try:
        value = model.exact_union(s, n)
    except SizeGuardError as ex:
        logger.debug('exact_estimate() falling back to simulation: %s', ex)
        return None
    if value is None:
        return None
    return UnionEstimate(estimate=value, trials=0, hits=0, stderr=0.0, ci_low=value, ci_high=value,
                         seed=seed, s=s, n=n, level=level, source=SOURCE_EXACT)


def union_value(model: EventSeqModel, s: int, n: int, trials: int, seed: int,
                settings: BoundSettings = DEFAULT_SETTINGS) -> UnionEstimate:
    """Exact union when the model has one, unless simulation is forced."""
    if not settings.force_simulation:
        exact = exact_estimate(model, s, n, seed, settings.ci_level)
        if exact is not None:
            return exact
    return estimate_union(model, s, n, trials, seed, settings)


# ------------------------------------------------------------------------------------------------
# Bound validation
# ------------------------------------------------------------------------------------------------
def validate_bound(model: EventSeqModel, scheme: WeightScheme, n: int, trials: int, seed: int,
                   settings: BoundSettings = DEFAULT_SETTINGS) -> ValidationReport:
    g = gram(model, n, settings.max_dense_horizon)
    w = scheme.resolve(g, n, settings)
    bound = ratio(g, w, n, settings.denominator_guard)
    if math.isnan(bound):
        logger.warning('validate_bound() ratio undefined at n=%d for %s', n, scheme.describe())
        return ValidationReport(bound, None, math.nan, Verdict.UNDEFINED, n, scheme)

    estimate = union_value(model, 1, n, trials, seed, settings)
    # A bound above the point estimate but inside the interval is still consistent.
    violated = bound > estimate.ci_high + settings.verdict_tol
    verdict = Verdict.VIOLATED if violated else Verdict.CONSISTENT
    logger.debug('validate_bound() n=%d bound=%r union=%r source=%s verdict=%s',
                 n, bound, estimate.estimate, estimate.source, verdict.value)
    return ValidationReport(bound, estimate, estimate.ci_high - bound, verdict, n, scheme)


def convergence_experiment(model: EventSeqModel, scheme: WeightScheme, n_grid: Sequence[int], trials: int,
                           seed: int, settings: BoundSettings = DEFAULT_SETTINGS,
                           s: int = 1) -> List[ConvergenceRow]:
    """R_n, its running max and the union over [s, n] at every grid point."""
    grid = _check_grid(n_grid, s)
    N = grid[-1]
    g = gram(model, N, settings.max_dense_horizon)

    if scheme.variant == WeightVariant.OPTIMAL:
        ratios = np.array([optimal_weights(g, n, settings.cutoff, settings.max_dense_horizon).value
                           for n in grid])
        running = np.fmax.accumulate(ratios)
    else:
        report = ratio_sequence(g, scheme, settings)
        index = np.array(grid) - 1
        ratios = report.ratios[index]
        running = report.running_max[index]

    unions = None
    if not settings.force_simulation:
        unions = [exact_estimate(model, s, n, seed, settings.ci_level) for n in grid]
        if any(u is None for u in unions):
            unions = None
    if unions is None:
        unions = estimate_union_curve(model, s, grid, trials, seed, settings)

    return [ConvergenceRow(n, float(r), float(m), u.estimate, u.ci_low, u.ci_high, u.source)
            for n, r, m, u in zip(grid, ratios, running, unions)]


def write_convergence_csv(rows: Sequence[ConvergenceRow], stream: TextIO):
    writer = csv.writer(stream, lineterminator='\n')
    writer.writerow(CONVERGENCE_CSV_HEADER)
    for row in rows:
        writer.writerow([row.n, format_real(row.ratio), format_real(row.running_max), format_real(row.union),
                         format_real(row.ci_low), format_real(row.ci_high), row.source])


def geometric_grid(n: int, points: int = 20, start: int = 1) -> List[int]:
    """Roughly geometric grid of integers from start to n, both included."""
    if not 1 <= start <= n:
        raise PreconditionError(f'grid range {start}..{n} is empty')
    grid = np.unique(np.round(np.geomspace(start, n, num=max(2, points))).astype(int))
    return sorted(set(int(x) for x in grid) | {start, n})


def _check_grid(n_grid: Sequence[int], s: int) -> List[int]:
    grid = [int(n) for n in n_grid]
    if not grid:
        raise PreconditionError('n grid is empty')
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise PreconditionError('n grid must be strictly increasing')
    if s < 1 or grid[0] < s:
        raise PreconditionError(f'n grid must start at or after s = {s}')
    return grid
