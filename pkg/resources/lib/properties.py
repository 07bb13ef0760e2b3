# -*- coding: utf-8 -*-
#
# Property checks run by the verify command. Every check returns a status
# dictionary; a failing check carries its counterexample in 'msg'.
#
from __future__ import annotations

import logging
import math
from typing import List, Optional, Sequence

import numpy as np

from resources.lib.errors import PreconditionError, fail_status, new_status_dic
from resources.lib.gram_core import (GramData, check_psd, corollary_ratio, cross_term_ratio,
                                     inverse_probability_weights, partition_inequality, ratio, tail_ratio,
                                     validate_gram, weighted_chung_erdos)
from resources.lib.settings import DEFAULT_SETTINGS, BoundSettings
from resources.lib.simulate import UnionEstimate

logger = logging.getLogger(__name__)

# Relative agreement required between the corollary closed form and inverse weights.
COROLLARY_TOLERANCE = 1e-12


def check_gram_invariants(g: GramData, settings: BoundSettings) -> dict:
    status_dic = new_status_dic('Gram invariants (diagonal, Fréchet)')
    violations = validate_gram(g, settings.psd_tol, settings.max_dense_horizon, include_psd=False)
    if violations:
        fail_status(status_dic, '; '.join(violations))
    return status_dic


def check_positive_semidefinite(g: GramData, settings: BoundSettings) -> dict:
    status_dic = new_status_dic('positive semi-definite')
    verdict = check_psd(g.matrix(limit=settings.max_dense_horizon), settings.psd_tol)
    status_dic['msg'] += f' (min eigenvalue {verdict.min_eigenvalue:.6g})'
    if not verdict.passed:
        fail_status(status_dic, f'tolerance {settings.psd_tol:g}')
    return status_dic


def check_partition_inequality(g: GramData, w: np.ndarray, settings: BoundSettings) -> dict:
    status_dic = new_status_dic('partition inequality on (w_i w_j M_ij), all splits')
    M = g.matrix(limit=settings.max_dense_horizon)
    if not check_psd(M, settings.psd_tol).passed:
        status_dic['msg'] += ' skipped, Gram data is not PSD'
        return status_dic
    E = np.outer(w, w) * M
    for m in range(1, g.n):
        lhs, rhs = partition_inequality(E, m)
        if lhs > rhs + settings.inequality_tol * max(1.0, abs(lhs), abs(rhs)):
            fail_status(status_dic, f'split m={m}: Γ(C)²={lhs!r} > Γ(A)Γ(B)={rhs!r}')
            break
    return status_dic


def check_chung_erdos(g: GramData, w: np.ndarray, unions: Optional[Sequence[UnionEstimate]],
                      settings: BoundSettings) -> dict:
    status_dic = new_status_dic('weighted Chung-Erdős inequality at every n')
    if unions is None:
        status_dic['msg'] += ' skipped, no union probabilities'
        return status_dic
    for n, union in enumerate(unions, start=1):
        lhs, rhs = weighted_chung_erdos(g, w, n, union.ci_high)
        if lhs > rhs + settings.inequality_tol * max(1.0, abs(rhs)):
            fail_status(status_dic, f'n={n}: lhs={lhs!r} > rhs={rhs!r} (union {union.ci_high!r}, '
                                    f'{union.source})')
            break
    else:
        status_dic['msg'] += f' ({unions[-1].source} unions)'
    return status_dic


def check_corollary_consistency(g: GramData, settings: BoundSettings) -> dict:
    status_dic = new_status_dic('corollary ratio equals inverse-probability ratio')
    try:
        closed_form = corollary_ratio(g, g.n, settings.denominator_guard)
    except PreconditionError as ex:
        status_dic['msg'] += f' skipped, {ex}'
        return status_dic
    weighted = ratio(g, inverse_probability_weights(g.p), g.n, settings.denominator_guard)
    if math.isnan(closed_form) and math.isnan(weighted):
        return status_dic
    if not abs(closed_form - weighted) <= COROLLARY_TOLERANCE * max(abs(closed_form), abs(weighted)):
        fail_status(status_dic, f'n={g.n}: closed form {closed_form!r} vs weighted {weighted!r}')
    return status_dic


def check_tail_identity(g: GramData, w: np.ndarray, settings: BoundSettings) -> dict:
    status_dic = new_status_dic('tail ratio at s=1 equals 1')
    value = tail_ratio(g, w, 1, g.n, settings.denominator_guard)
    if not math.isnan(value) and value != 1.0:
        fail_status(status_dic, f'n={g.n}: tail ratio {value!r}')
    return status_dic


def check_cross_term_bound(g: GramData, w: np.ndarray, settings: BoundSettings) -> dict:
    status_dic = new_status_dic('cross-term ratio never exceeds the ratio')
    bound = ratio(g, w, g.n, settings.denominator_guard)
    cross = cross_term_ratio(g, w, g.n, settings.denominator_guard)
    if not math.isnan(bound) and cross > bound + settings.inequality_tol:
        fail_status(status_dic, f'n={g.n}: cross-term {cross!r} > ratio {bound!r}')
    return status_dic


def run_property_suite(g: GramData, w, unions: Optional[Sequence[UnionEstimate]] = None,
                       settings: BoundSettings = DEFAULT_SETTINGS) -> List[dict]:
    """All properties for Gram data g under weights w; unions[k] covers A_1..A_{k+1}."""
    w = np.asarray(w, dtype=np.float64)[:g.n]
    if unions is not None and len(unions) != g.n:
        raise PreconditionError(f'need {g.n} union values, got {len(unions)}')
    results = [
        check_gram_invariants(g, settings),
        check_positive_semidefinite(g, settings),
        check_partition_inequality(g, w, settings),
        check_chung_erdos(g, w, unions, settings),
        check_corollary_consistency(g, settings),
        check_tail_identity(g, w, settings),
        check_cross_term_bound(g, w, settings),
    ]
    logger.debug('run_property_suite() n=%d failures=%d', g.n, sum(not r['status'] for r in results))
    return results
