# -*- coding: utf-8 -*-
#
# Gram data of events and the weighted ratio bounds computed from it.
#
# For events A_1..A_n with p_i = P(A_i) and M_ij = P(A_i & A_j), and real weights
# w_i of any sign, the library evaluates
#
#     R_n = (sum_k w_k p_k)^2 / sum_ij w_i w_j M_ij
#
# whose limsup over n lower-bounds P(limsup A_n) whenever sum_k w_k p_k diverges.
# The per-n inequality (sum_i w_i p_i)^2 <= P(A_1 | ... | A_n) * w'Mw holds with no
# divergence assumption at all.
#
# * M is positive semi-definite for every family of events, so w'Mw >= 0. Signed
#   weights can still drive it to zero; such ratios are reported as NaN.
# * M is stored as a packed lower triangle, row i holding M[i, 0..i]. Large
#   horizons use a row supplier instead so M is never materialized.
# * Indices in the public functions are 1-based counts; storage is 0-based.
#
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, List, NamedTuple, Optional, Sequence, TextIO, Tuple, Union

import numpy as np
from scipy import linalg

from resources.lib.errors import DegenerateGramError, ModelSpecError, PreconditionError, SizeGuardError
from resources.lib.settings import (DEFAULT_SETTINGS, DENOMINATOR_GUARD, DIVERGENCE_MARGIN,
                                    MAX_DENSE_HORIZON, PINV_CUTOFF, PSD_TOLERANCE, BoundSettings)

logger = logging.getLogger(__name__)

RowSupplier = Callable[[int], np.ndarray]

# Slack for the Fréchet checks; masses of nested atom sets can round apart.
FRECHET_SLACK = 1e-12

GRAM_CSV_HEADER = ['i', 'j', 'p_i', 'p_j', 'm_ij']


# ------------------------------------------------------------------------------------------------
# Gram data
# ------------------------------------------------------------------------------------------------
class GramData:
    """Probabilities p_i and pairwise intersection probabilities M_ij of n events.

    Exactly one of ``lower`` (packed lower triangle, length n(n+1)/2) or
    ``row_supplier`` (a function returning M[i, 0..i] for a 0-based i) backs the
    matrix. Instances are immutable.
    """

    def __init__(self, p, lower=None, row_supplier: Optional[RowSupplier] = None):
        p = np.array(p, dtype=np.float64)
        if p.ndim != 1 or p.size < 1:
            raise PreconditionError('Gram data needs a non-empty probability vector')
        if not np.all(np.isfinite(p)):
            raise PreconditionError('Probabilities must be finite')
        if (lower is None) == (row_supplier is None):
            raise ValueError('GramData needs exactly one of lower or row_supplier')

        n = p.size
        if lower is not None:
            lower = np.array(lower, dtype=np.float64)
            if lower.shape != (n * (n + 1) // 2,):
                raise PreconditionError(
                    f'Packed lower triangle has {lower.size} entries, expected {n * (n + 1) // 2}')
            if not np.all(np.isfinite(lower)):
                raise PreconditionError('Gram entries must be finite')
            lower.flags.writeable = False
        p.flags.writeable = False

        self._p = p
        self._lower = lower
        self._rows = row_supplier

    @staticmethod
    def from_matrix(p, M) -> 'GramData':
        p = np.asarray(p, dtype=np.float64)
        M = np.asarray(M, dtype=np.float64)
        n = p.size
        if M.shape != (n, n):
            raise PreconditionError(f'Gram matrix shape {M.shape} does not match {n} events')
        if np.any(M != M.T):
            raise PreconditionError('Gram matrix is not symmetric')
        rows, cols = np.tril_indices(n)
        return GramData(p, lower=M[rows, cols])

    @property
    def n(self) -> int:
        return self._p.size

    @property
    def p(self) -> np.ndarray:
        return self._p

    @property
    def is_virtual(self) -> bool:
        return self._lower is None

    def row(self, i: int) -> np.ndarray:
        """M[i, 0..i] for a 0-based row index."""
        if not 0 <= i < self.n:
            raise IndexError(f'Gram row {i} outside 0..{self.n - 1}')
        if self._lower is not None:
            start = i * (i + 1) // 2
            return self._lower[start:start + i + 1]
        return np.asarray(self._rows(i), dtype=np.float64)

    def entry(self, i: int, j: int) -> float:
        if j > i:
            i, j = j, i
        return float(self.row(i)[j])

    def matrix(self, n: Optional[int] = None, limit: int = MAX_DENSE_HORIZON) -> np.ndarray:
        n = self.n if n is None else n
        _check_count(self, n)
        if n > limit:
            raise SizeGuardError(f'Dense Gram matrix of size {n} exceeds the limit {limit}')
        M = np.empty((n, n), dtype=np.float64)
        if self._lower is not None:
            rows, cols = np.tril_indices(n)
            packed = self._lower[:n * (n + 1) // 2]
            M[rows, cols] = packed
            M[cols, rows] = packed
        else:
            for i in range(n):
                r = self.row(i)
                M[i, :i + 1] = r
                M[:i + 1, i] = r
        return M


# ------------------------------------------------------------------------------------------------
# Weight schemes and reports
# ------------------------------------------------------------------------------------------------
class WeightVariant(Enum):
    UNIT = 'unit'
    INVERSE_PROBABILITY = 'inverse_probability'
    OPTIMAL = 'optimal'
    EXPLICIT = 'explicit'


@dataclass(frozen=True)
class WeightScheme:
    variant: WeightVariant
    weights: Optional[Tuple[float, ...]] = None
    periodic: bool = False

    def __post_init__(self):
        if self.variant == WeightVariant.EXPLICIT and not self.weights:
            raise PreconditionError('Explicit weight scheme needs at least one weight')

    @staticmethod
    def unit() -> 'WeightScheme':
        return WeightScheme(WeightVariant.UNIT)

    @staticmethod
    def inverse_probability() -> 'WeightScheme':
        return WeightScheme(WeightVariant.INVERSE_PROBABILITY)

    @staticmethod
    def optimal() -> 'WeightScheme':
        return WeightScheme(WeightVariant.OPTIMAL)

    @staticmethod
    def explicit(weights: Sequence[float]) -> 'WeightScheme':
        return WeightScheme(WeightVariant.EXPLICIT, tuple(float(x) for x in weights))

    # The pattern is repeated to any length: 1,1,-1 gives 1,1,-1,1,1,-1,...
    @staticmethod
    def periodic_pattern(pattern: Sequence[float]) -> 'WeightScheme':
        return WeightScheme(WeightVariant.EXPLICIT, tuple(float(x) for x in pattern), periodic=True)

    def describe(self) -> str:
        if self.variant != WeightVariant.EXPLICIT:
            return self.variant.value
        head = ', '.join(f'{x:g}' for x in self.weights[:6])
        if self.periodic:
            return f'periodic({head})'
        tail = ', ...' if len(self.weights) > 6 else ''
        return f'explicit({head}{tail}) [{len(self.weights)} weights]'

    def resolve(self, g: GramData, n: Optional[int] = None,
                settings: BoundSettings = DEFAULT_SETTINGS) -> np.ndarray:
        n = g.n if n is None else n
        _check_count(g, n)
        if self.variant == WeightVariant.UNIT:
            return np.ones(n)
        if self.variant == WeightVariant.INVERSE_PROBABILITY:
            return inverse_probability_weights(g.p[:n])
        if self.variant == WeightVariant.OPTIMAL:
            return optimal_weights(g, n, settings.cutoff, settings.max_dense_horizon).weights

        weights = np.array(self.weights, dtype=np.float64)
        if self.periodic:
            return np.resize(weights, n)
        if weights.size < n:
            raise PreconditionError(f'Explicit weights have {weights.size} entries but n = {n}')
        return weights[:n]


@dataclass(frozen=True)
class BoundReport:
    scheme: WeightScheme
    weights: np.ndarray
    ratios: np.ndarray
    defined: np.ndarray
    running_max: np.ndarray
    final_estimate: float
    partial_sums: np.ndarray
    denominators: np.ndarray
    denominator_min: float
    diverging_flag: bool
    diagonal_share: float

    @property
    def n(self) -> int:
        return self.ratios.size

    def ratio_at(self, n: int) -> float:
        return float(self.ratios[n - 1])

    def write_csv(self, stream: TextIO):
        writer = csv.writer(stream, lineterminator='\n')
        writer.writerow(['n', 'ratio', 'running_max', 'partial_sum'])
        for k in range(self.n):
            writer.writerow([k + 1, format_real(self.ratios[k]), format_real(self.running_max[k]),
                             format_real(self.partial_sums[k])])


class PsdVerdict(NamedTuple):
    passed: bool
    min_eigenvalue: float


class OptimalWeights(NamedTuple):
    weights: np.ndarray
    value: float


class Divergence(NamedTuple):
    partial_sums: np.ndarray
    diverging_flag: bool


# ------------------------------------------------------------------------------------------------
# Matrix primitives
# ------------------------------------------------------------------------------------------------
def gamma(E) -> float:
    """Sum of all entries of a rectangular matrix."""
    E = np.asarray(E, dtype=np.float64)
    if E.size == 0:
        return 0.0
    return float(np.sum(E))


def check_psd(M, tol: float = PSD_TOLERANCE) -> PsdVerdict:
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise PreconditionError(f'PSD check needs a square matrix, got shape {M.shape}')
    if M.size == 0:
        return PsdVerdict(True, 0.0)
    if not np.all(np.isfinite(M)):
        raise PreconditionError('PSD check needs finite entries')
    if np.any(M != M.T):
        raise PreconditionError('PSD check needs a symmetric matrix')

    scale = max(1.0, float(np.max(np.abs(M))))
    min_eigenvalue = float(linalg.eigvalsh(M)[0])
    return PsdVerdict(min_eigenvalue >= -tol * scale, min_eigenvalue)


def partition_inequality(E, m: int) -> Tuple[float, float]:
    """(Γ(C)², Γ(A)Γ(B)) for the split of E into [[A, C], [C', B]] after row m."""
    E = np.asarray(E, dtype=np.float64)
    if E.ndim != 2 or E.shape[0] != E.shape[1]:
        raise PreconditionError(f'Partition needs a square matrix, got shape {E.shape}')
    size = E.shape[0]
    if not 1 <= m < size:
        raise PreconditionError(f'Split {m} outside 1..{size - 1}')

    A = E[:m, :m]
    B = E[m:, m:]
    C = E[:m, m:]
    return gamma(C) ** 2, gamma(A) * gamma(B)


# ------------------------------------------------------------------------------------------------
# Ratio bounds
# ------------------------------------------------------------------------------------------------
def weighted_chung_erdos(g: GramData, w, n: int, union_prob: float) -> Tuple[float, float]:
    _check_count(g, n)
    w = _weights(w, n)
    lhs = float(np.dot(w, g.p[:n])) ** 2
    rhs = union_prob * _forms(g, w, 0, n)[0]
    return lhs, rhs


def ratio(g: GramData, w, n: int, guard: float = DENOMINATOR_GUARD) -> float:
    _check_count(g, n)
    w = _weights(w, n)
    numerator = float(np.dot(w, g.p[:n])) ** 2
    denominator = _forms(g, w, 0, n)[0]
    if denominator <= guard:
        logger.debug('ratio() n=%d denominator %g below guard', n, denominator)
        return math.nan
    return numerator / denominator


def ratio_sequence(g: GramData, scheme: Union[WeightScheme, Sequence[float], np.ndarray],
                   settings: BoundSettings = DEFAULT_SETTINGS) -> BoundReport:
    """Ratios R_1..R_N for N = g.n, each step costing one Gram row."""
    if not isinstance(scheme, WeightScheme):
        scheme = WeightScheme.explicit(np.asarray(scheme, dtype=np.float64))
    N = g.n
    w = scheme.resolve(g, N, settings)
    p = g.p
    guard = settings.denominator_guard
    logger.debug('ratio_sequence() N=%d scheme=%s virtual=%s', N, scheme.describe(), g.is_virtual)

    ratios = np.full(N, np.nan)
    denominators = np.empty(N)
    numerator = 0.0
    denominator = 0.0
    diagonal = 0.0
    for i in range(N):
        r = g.row(i)
        numerator += w[i] * p[i]
        denominator += w[i] * (2.0 * np.dot(r[:i], w[:i]) + r[i] * w[i])
        diagonal += w[i] * w[i] * r[i]
        denominators[i] = denominator
        if denominator > guard:
            ratios[i] = numerator * numerator / denominator

    defined = ~np.isnan(ratios)
    running_max = np.fmax.accumulate(ratios)

    # tail window counts defined ratios only
    kept = np.flatnonzero(defined)
    window = max(1, math.ceil(settings.tail_fraction * kept.size))
    final_estimate = float(np.max(ratios[kept[-window:]])) if kept.size else math.nan

    divergence = divergence_diagnostic(g, w, settings.divergence_margin)
    diagonal_share_value = diagonal / denominator if denominator > guard else math.nan

    for arr in (w, ratios, defined, running_max, denominators):
        arr.flags.writeable = False
    return BoundReport(
        scheme=scheme,
        weights=w,
        ratios=ratios,
        defined=defined,
        running_max=running_max,
        final_estimate=final_estimate,
        partial_sums=divergence.partial_sums,
        denominators=denominators,
        denominator_min=float(np.min(denominators)),
        diverging_flag=divergence.diverging_flag,
        diagonal_share=diagonal_share_value,
    )


def inverse_probability_weights(p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    zero = np.flatnonzero(p <= 0.0)
    if zero.size:
        raise PreconditionError('Inverse-probability weights need P(A_i) > 0', index=int(zero[0]) + 1)
    return 1.0 / p


def corollary_ratio(g: GramData, n: int, guard: float = DENOMINATOR_GUARD) -> float:
    """n² / sum_ij M_ij / (p_i p_j)."""
    _check_count(g, n)
    q = inverse_probability_weights(g.p[:n])
    denominator = _forms(g, q, 0, n)[0]
    if denominator <= guard:
        return math.nan
    return float(n) * float(n) / denominator


def optimal_weights(g: GramData, n: int, cutoff: float = PINV_CUTOFF,
                    limit: int = MAX_DENSE_HORIZON) -> OptimalWeights:
    """Maximizer of (w'p)² / (w'Mw) over the first n events.

    The quotient is a generalized Rayleigh quotient; its maximum is p'M⁺p, reached
    at w = M⁺p. Eigencomponents below cutoff times the largest eigenvalue are
    dropped from the pseudo-inverse. Weights come back with p'w >= 0 and
    max|w_i| = 1.
    """
    _check_count(g, n)
    p = np.array(g.p[:n])
    if not np.any(p != 0.0):
        raise DegenerateGramError('degenerate Gram data: every probability is zero')

    eigenvalues, eigenvectors = linalg.eigh(g.matrix(n, limit))
    top = eigenvalues[-1]
    if top <= 0.0:
        raise DegenerateGramError('degenerate Gram data')
    keep = eigenvalues > cutoff * top
    V = eigenvectors[:, keep]
    w = V @ ((V.T @ p) / eigenvalues[keep])
    logger.debug('optimal_weights() n=%d kept %d of %d eigencomponents', n, int(keep.sum()), n)

    if np.dot(p, w) < 0.0:
        w = -w
    scale = float(np.max(np.abs(w)))
    if scale == 0.0 or np.dot(p, w) <= 0.0:
        raise DegenerateGramError('degenerate Gram data')
    w = w / scale
    return OptimalWeights(w, ratio(g, w, n))


def off_diagonal_ratio(g: GramData, w, n: int, guard: float = DENOMINATOR_GUARD) -> float:
    """sum_{i<j} w_i w_j p_i p_j / sum_{i<j} w_i w_j M_ij for nonnegative weights."""
    _check_count(g, n)
    if n < 2:
        raise PreconditionError(f'Off-diagonal ratio needs n >= 2, got {n}')
    w = _weights(w, n)
    negative = np.flatnonzero(w < 0.0)
    if negative.size:
        raise PreconditionError('Off-diagonal ratio needs nonnegative weights', index=int(negative[0]) + 1)

    a = w * g.p[:n]
    prefix = np.concatenate(([0.0], np.cumsum(a)[:-1]))
    numerator = float(np.dot(a, prefix))
    denominator = 0.0
    for i in range(1, n):
        denominator += w[i] * np.dot(g.row(i)[:i], w[:i])
    if denominator <= guard:
        return math.nan
    return numerator / denominator


def tail_ratio(g: GramData, w, s: int, n: int, guard: float = DENOMINATOR_GUARD) -> float:
    """w'Mw over [1..n]² divided by w'Mw over [s..n]²; tends to 1 under divergence."""
    _check_count(g, n)
    if not 1 <= s <= n:
        raise PreconditionError(f'Start {s} outside 1..{n}')
    w = _weights(w, n)
    full = _forms(g, w, 0, n)[0]
    tail = full if s == 1 else _forms(g, w, s - 1, n)[0]
    if abs(tail) <= guard:
        return math.nan
    return full / tail


def shifted_ratio(g: GramData, w, s: int, n: int, guard: float = DENOMINATOR_GUARD) -> float:
    """The ratio with both sums restricted to indices s..n."""
    _check_count(g, n)
    if not 1 <= s <= n:
        raise PreconditionError(f'Start {s} outside 1..{n}')
    w = _weights(w, n)
    numerator = float(np.dot(w[s - 1:], g.p[s - 1:n])) ** 2
    denominator = _forms(g, w, s - 1, n)[0]
    if denominator <= guard:
        return math.nan
    return numerator / denominator


# Lower bound for the ratio: drops the nonnegative w_i² p_i² terms from the numerator.
def cross_term_ratio(g: GramData, w, n: int, guard: float = DENOMINATOR_GUARD) -> float:
    _check_count(g, n)
    w = _weights(w, n)
    a = w * g.p[:n]
    prefix = np.concatenate(([0.0], np.cumsum(a)[:-1]))
    denominator = _forms(g, w, 0, n)[0]
    if denominator <= guard:
        return math.nan
    return 2.0 * float(np.dot(a, prefix)) / denominator


def diagonal_share(g: GramData, w, n: int, guard: float = DENOMINATOR_GUARD) -> float:
    _check_count(g, n)
    w = _weights(w, n)
    denominator, diagonal = _forms(g, w, 0, n)
    if denominator <= guard:
        return math.nan
    return diagonal / denominator


def divergence_diagnostic(g: GramData, w, margin: float = DIVERGENCE_MARGIN) -> Divergence:
    """Partial sums S_m of w_k p_k and the advisory flag S_n >= S_{n/2} + margin."""
    n = g.n
    w = _weights(w, n)
    partial_sums = np.cumsum(w * g.p)
    half = n // 2
    s_half = float(partial_sums[half - 1]) if half >= 1 else 0.0
    diverging = bool(partial_sums[-1] >= s_half + margin)
    partial_sums.flags.writeable = False
    return Divergence(partial_sums, diverging)


def convergent_case_note(g: GramData, margin: float = DIVERGENCE_MARGIN) -> Optional[str]:
    divergence = divergence_diagnostic(g, np.ones(g.n), margin)
    if divergence.diverging_flag:
        return None
    return (f'sum of P(A_k) shows no divergence up to n={g.n} '
            f'(S_n = {divergence.partial_sums[-1]:.6g}); if the series converges then '
            'P(limsup A_n) = 0 and every ratio bound is vacuous')


# ------------------------------------------------------------------------------------------------
# Validation and CSV
# ------------------------------------------------------------------------------------------------
def validate_gram(g: GramData, tol: float = PSD_TOLERANCE, limit: int = MAX_DENSE_HORIZON,
                  max_reported: int = 5, include_psd: bool = True) -> List[str]:
    """Violations of the diagonal, Fréchet and (optionally) PSD invariants, empty when valid."""
    violations = []
    p = g.p
    M = g.matrix(limit=limit)

    for i in np.flatnonzero((p < 0.0) | (p > 1.0))[:max_reported]:
        violations.append(f'p_{i + 1} = {p[i]!r} outside [0, 1]')
    for i in np.flatnonzero(np.diag(M) != p)[:max_reported]:
        violations.append(f'diagonal M_{i + 1},{i + 1} = {M[i, i]!r} differs from p_{i + 1} = {p[i]!r}')

    upper = np.minimum.outer(p, p)
    lower = np.maximum(0.0, np.add.outer(p, p) - 1.0)
    bad = np.argwhere(np.triu((M > upper + FRECHET_SLACK) | (M < lower - FRECHET_SLACK)))
    for i, j in bad[:max_reported]:
        violations.append(f'Fréchet bound violated at M_{i + 1},{j + 1} = {M[i, j]!r} '
                          f'(allowed [{lower[i, j]!r}, {upper[i, j]!r}])')

    verdict = check_psd(M, tol) if include_psd else None
    if verdict is not None and not verdict.passed:
        violations.append(f'not positive semi-definite: min eigenvalue {verdict.min_eigenvalue!r}')
    return violations


def format_real(x: float) -> str:
    """Locale-free shortest round-trip text; empty for NaN."""
    x = float(x)
    if math.isnan(x):
        return ''
    return repr(x)


def write_gram_csv(g: GramData, stream: TextIO, limit: int = MAX_DENSE_HORIZON):
    """Upper triangle, row-major, 1-based indices."""
    M = g.matrix(limit=limit)
    p = g.p
    writer = csv.writer(stream, lineterminator='\n')
    writer.writerow(GRAM_CSV_HEADER)
    for i in range(g.n):
        for j in range(i, g.n):
            writer.writerow([i + 1, j + 1, format_real(p[i]), format_real(p[j]), format_real(M[i, j])])


def read_gram_csv(stream: TextIO) -> GramData:
    reader = csv.reader(stream)
    header = next(reader, None)
    if header != GRAM_CSV_HEADER:
        raise ModelSpecError(f'expected header {",".join(GRAM_CSV_HEADER)}', path='line 1')

    entries = {}
    probs = {}
    for line_no, row in enumerate(reader, start=2):
        if not row:
            continue
        path = f'line {line_no}'
        if len(row) != len(GRAM_CSV_HEADER):
            raise ModelSpecError(f'expected {len(GRAM_CSV_HEADER)} fields, got {len(row)}', path=path)
        try:
            i, j = int(row[0]), int(row[1])
            p_i, p_j, m_ij = float(row[2]), float(row[3]), float(row[4])
        except ValueError as ex:
            raise ModelSpecError(str(ex), path=path) from ex
        if i < 1 or j < i:
            raise ModelSpecError(f'indices ({i}, {j}) are not an upper-triangle pair', path=path)
        if (i, j) in entries:
            raise ModelSpecError(f'duplicate pair ({i}, {j})', path=path)
        for index, value in ((i, p_i), (j, p_j)):
            if probs.setdefault(index, value) != value:
                raise ModelSpecError(f'p_{index} given as {probs[index]!r} and {value!r}', path=path)
        entries[(i, j)] = m_ij

    if not entries:
        raise ModelSpecError('no Gram entries', path='line 2')
    n = max(probs)
    missing = [(i, j) for i in range(1, n + 1) for j in range(i, n + 1) if (i, j) not in entries]
    if missing:
        raise ModelSpecError(f'missing pair {missing[0]}', path='$')

    M = np.empty((n, n))
    for (i, j), value in entries.items():
        M[i - 1, j - 1] = value
        M[j - 1, i - 1] = value
    p = np.array([probs[i] for i in range(1, n + 1)])
    logger.debug('read_gram_csv() read %d events', n)
    return GramData.from_matrix(p, M)


# ------------------------------------------------------------------------------------------------
# Internal helpers
# ------------------------------------------------------------------------------------------------
def _check_count(g: GramData, n: int):
    if not 1 <= n <= g.n:
        raise PreconditionError(f'Count {n} outside the available Gram data 1..{g.n}')


def _weights(w, n: int) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 1 or w.size < n:
        raise PreconditionError(f'Need {n} weights, got {w.size}')
    return w[:n]


# (w'Mw, sum_i w_i² M_ii) over indices start..n-1, one Gram row at a time.
def _forms(g: GramData, w: np.ndarray, start: int, n: int) -> Tuple[float, float]:
    quadratic = 0.0
    diagonal = 0.0
    for i in range(start, n):
        r = g.row(i)
        quadratic += w[i] * (2.0 * np.dot(r[start:i], w[start:i]) + r[i] * w[i])
        diagonal += w[i] * w[i] * r[i]
    return float(quadratic), float(diagonal)
