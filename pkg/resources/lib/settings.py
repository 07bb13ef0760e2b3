# -*- coding: utf-8 -*-
#
# Tolerances and knobs shared by the numerical core, the simulator and the cli.
#
from __future__ import annotations

import logging
from dataclasses import dataclass, fields, replace

logger = logging.getLogger(__name__)

# --- Numerical guards -----------------------------------------------------------------------------
PSD_TOLERANCE = 1e-8        # relative, scaled by max(1, max|M_ij|)
DENOMINATOR_GUARD = 1e-12   # w'Mw at or below this leaves the ratio undefined
PINV_CUTOFF = 1e-10         # relative to the largest eigenvalue
INEQUALITY_TOLERANCE = 1e-9
VERDICT_TOLERANCE = 1e-9

# --- Finite-horizon reporting ---------------------------------------------------------------------
TAIL_FRACTION = 0.25
DIVERGENCE_MARGIN = 1.0

# --- Monte Carlo ----------------------------------------------------------------------------------
CI_LEVEL = 0.99
CHUNK_SIZE = 4096
DEFAULT_TRIALS = 100000
DEFAULT_SEED = 0

# --- Size guards ----------------------------------------------------------------------------------
MAX_PARITY_BITS = 20
MAX_GRAM_HORIZON = 1000000
MAX_DENSE_HORIZON = 4096


@dataclass(frozen=True)
class BoundSettings:
    psd_tol: float = PSD_TOLERANCE
    denominator_guard: float = DENOMINATOR_GUARD
    cutoff: float = PINV_CUTOFF
    inequality_tol: float = INEQUALITY_TOLERANCE
    verdict_tol: float = VERDICT_TOLERANCE
    tail_fraction: float = TAIL_FRACTION
    divergence_margin: float = DIVERGENCE_MARGIN
    ci_level: float = CI_LEVEL
    chunk_size: int = CHUNK_SIZE
    workers: int = 1
    force_simulation: bool = False
    max_dense_horizon: int = MAX_DENSE_HORIZON

    def __post_init__(self):
        if self.psd_tol < 0 or self.denominator_guard < 0 or self.cutoff < 0:
            raise ValueError('Tolerances must be nonnegative')
        if not 0.0 < self.tail_fraction <= 1.0:
            raise ValueError(f'tail_fraction {self.tail_fraction} outside (0, 1]')
        if not 0.0 < self.ci_level < 1.0:
            raise ValueError(f'ci_level {self.ci_level} outside (0, 1)')
        if self.chunk_size < 1 or self.workers < 1:
            raise ValueError('chunk_size and workers must be positive')

    # Overrides with value None are ignored so argparse defaults can be passed straight in.
    @staticmethod
    def from_settings_dict(settings: dict) -> 'BoundSettings':
        known = {f.name for f in fields(BoundSettings)}
        unknown = set(settings) - known
        if unknown:
            raise ValueError('Unknown settings: {}'.format(', '.join(sorted(unknown))))
        overrides = {k: v for k, v in settings.items() if v is not None}
        logger.debug('BoundSettings.from_settings_dict() overrides %s', overrides)
        return replace(BoundSettings(), **overrides)


DEFAULT_SETTINGS = BoundSettings()
