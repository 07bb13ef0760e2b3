# -*- coding: utf-8 -*-
#
# Event-sequence models with exact probabilities.
#
# | Variant          | A_n                                                     | exact union |
# |------------------|---------------------------------------------------------|-------------|
# | finite_periodic  | cycles through a list of atom sets on a finite space    | yes         |
# | independent      | mutually independent, p_n from a constant/list/harmonic | yes         |
# | pairwise_parity  | "parity of the bits in S is even" over m fair bits      | yes         |
# | markov           | the chain sits in a target state after n transitions    | no          |
#
# Every model yields GramData for a horizon n, P(A_s | ... | A_n) where it is known
# exactly, and sampled indicator trajectories.
#
# * Trajectories are drawn position-major: the random numbers behind positions
#   1..n do not depend on the horizon, so a longer run extends a shorter one.
# * pairwise_parity orders its events by increasing bit mask 1, 2, ..., 2^m - 1
#   and repeats them with period 2^m - 1.
# * Model spec files are JSON objects keyed by `type`; see parse_model().
#
from __future__ import annotations

import contextlib
import json
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from resources.lib import rng
from resources.lib.errors import ModelSpecError, PreconditionError, SizeGuardError
from resources.lib.gram_core import GramData, RowSupplier
from resources.lib.settings import MAX_DENSE_HORIZON, MAX_GRAM_HORIZON, MAX_PARITY_BITS

logger = logging.getLogger(__name__)

MASS_TOLERANCE = 1e-12
# Positions drawn per block for independent trajectories.
SAMPLE_BLOCK = 256


class TrajectorySample(NamedTuple):
    n: int
    indicators: np.ndarray   # (trials, n) uint8


# ------------------------------------------------------------------------------------------------
# Probability rules for independent events
# ------------------------------------------------------------------------------------------------
@dataclass(frozen=True)
class ConstantRule:
    q: float

    def __post_init__(self):
        if not 0.0 <= self.q <= 1.0:
            raise PreconditionError(f'constant probability {self.q} outside [0, 1]')

    def probs(self, n: int) -> np.ndarray:
        return np.full(n, self.q)

    def describe(self):
        return f'constant({self.q:g})'


@dataclass(frozen=True)
class ListRule:
    values: Tuple[float, ...]

    def __post_init__(self):
        if not self.values:
            raise PreconditionError('probability list is empty')
        for k, v in enumerate(self.values):
            if not 0.0 <= v <= 1.0:
                raise PreconditionError(f'probability {v} outside [0, 1]', index=k + 1)

    def probs(self, n: int) -> np.ndarray:
        if n > len(self.values):
            raise PreconditionError(f'probability list defines {len(self.values)} events, asked for {n}')
        return np.array(self.values[:n], dtype=np.float64)

    def describe(self):
        return f'list({len(self.values)} values)'


# p_n = min(1, c/n) so c > 1 still gives a valid model.
@dataclass(frozen=True)
class HarmonicRule:
    c: float

    def __post_init__(self):
        if self.c < 0.0:
            raise PreconditionError(f'harmonic constant {self.c} is negative')

    def probs(self, n: int) -> np.ndarray:
        return np.minimum(1.0, self.c / np.arange(1, n + 1, dtype=np.float64))

    def describe(self):
        return f'harmonic({self.c:g})'


# ------------------------------------------------------------------------------------------------
# Models
# ------------------------------------------------------------------------------------------------
class EventSeqModel(ABC):
    variant = ''

    def event_prob(self, i: int) -> float:
        _check_index(i)
        return float(self.probabilities(i)[-1])

    @abstractmethod
    def probabilities(self, n: int) -> np.ndarray:
        """p_1..p_n."""

    @abstractmethod
    def row_supplier(self, n: int) -> RowSupplier:
        """Function returning Gram row M[i, 0..i] for 0-based i < n."""

    def pair_prob(self, i: int, j: int) -> float:
        _check_index(i)
        _check_index(j)
        n = max(i, j)
        return float(self.row_supplier(n)(n - 1)[min(i, j) - 1])

    def exact_limsup(self) -> Optional[float]:
        return None

    def exact_union(self, s: int, n: int) -> Optional[float]:
        return None

    @abstractmethod
    def sample(self, n: int, trials: int, generator: np.random.Generator) -> np.ndarray:
        """Boolean (trials, n) indicators drawn position-major."""

    @abstractmethod
    def describe(self) -> str:
        pass


@dataclass(frozen=True)
class FiniteSpace:
    atoms: Tuple[Tuple[str, float], ...]

    def __post_init__(self):
        if not self.atoms:
            raise PreconditionError('finite space has no atoms')
        ids = [atom_id for atom_id, _ in self.atoms]
        if len(set(ids)) != len(ids):
            raise PreconditionError('atom ids are not unique')
        masses = np.array([mass for _, mass in self.atoms], dtype=np.float64)
        if np.any(masses < 0.0) or np.any(masses > 1.0):
            raise PreconditionError('atom masses must lie in [0, 1]')
        if abs(float(np.sum(masses)) - 1.0) > MASS_TOLERANCE:
            raise PreconditionError(f'atom masses sum to {float(np.sum(masses))!r}, not 1')

    @property
    def ids(self) -> List[str]:
        return [atom_id for atom_id, _ in self.atoms]

    @property
    def masses(self) -> np.ndarray:
        return np.array([mass for _, mass in self.atoms], dtype=np.float64)

    def mask(self, ids: Sequence[str]) -> np.ndarray:
        index = {atom_id: k for k, atom_id in enumerate(self.ids)}
        mask = np.zeros(len(self.atoms), dtype=bool)
        for atom_id in ids:
            if atom_id not in index:
                raise PreconditionError(f'unknown atom id "{atom_id}"')
            mask[index[atom_id]] = True
        return mask

    def mass(self, mask: np.ndarray) -> float:
        return float(np.sum(self.masses[mask]))


class _CyclicModel(EventSeqModel):
    """Events repeating with a fixed period; subclasses supply per-position intersections."""

    @property
    @abstractmethod
    def period(self) -> int:
        pass

    @abstractmethod
    def period_probs(self, count: int) -> np.ndarray:
        """P(E_a) for the first `count` positions of the period."""

    @abstractmethod
    def cross(self, a: int, positions: np.ndarray) -> np.ndarray:
        """P(E_a & E_b) for period position a against each period position b."""

    def probabilities(self, n: int) -> np.ndarray:
        probs = self.period_probs(min(n, self.period))
        return probs[np.arange(n) % self.period]

    # Rows are built on request; no period x period table is held.
    def row_supplier(self, n: int) -> RowSupplier:
        period = self.period

        def row(i: int) -> np.ndarray:
            return self.cross(i % period, np.arange(i + 1) % period)
        return row

    def _positions(self, s: int, n: int) -> np.ndarray:
        _check_range(s, n)
        if n - s + 1 >= self.period:
            return np.arange(self.period)
        return np.unique(np.arange(s - 1, n) % self.period)


class PeriodicModel(_CyclicModel):
    variant = 'finite_periodic'

    def __init__(self, space: FiniteSpace, period_events: Sequence[Sequence[str]]):
        if len(period_events) < 1:
            raise PreconditionError('periodic model needs at least one event')
        self.space = space
        self.period_events = tuple(tuple(e) for e in period_events)
        self._membership = np.array([space.mask(e) for e in self.period_events])
        masses = space.masses
        self._G = (self._membership * masses) @ self._membership.T.astype(np.float64)
        self._G.flags.writeable = False

    @property
    def period(self) -> int:
        return len(self.period_events)

    def period_probs(self, count: int) -> np.ndarray:
        return np.diag(self._G)[:count].copy()

    def cross(self, a: int, positions: np.ndarray) -> np.ndarray:
        return self._G[a, positions]

    def exact_union(self, s: int, n: int) -> Optional[float]:
        positions = self._positions(s, n)
        return self.space.mass(np.any(self._membership[positions], axis=0))

    # Every event of the period recurs infinitely often, so limsup is their union.
    def exact_limsup(self) -> Optional[float]:
        return self.space.mass(np.any(self._membership, axis=0))

    def sample(self, n: int, trials: int, generator: np.random.Generator) -> np.ndarray:
        cumulative = np.cumsum(self.space.masses)
        u = generator.random(trials)
        atoms = np.minimum(np.searchsorted(cumulative, u, side='right'), len(cumulative) - 1)
        return self._membership[np.arange(n) % self.period][:, atoms].T

    def describe(self) -> str:
        return f'finite_periodic({len(self.space.atoms)} atoms, period {self.period})'


class PairwiseParityModel(_CyclicModel):
    """
    Event at period position a is "popcount(x & (a + 1)) is even" for a uniform m-bit pattern x.

    Pattern counts come from the characters of GF(2)^m: over all 2^m patterns,
    (-1)^popcount(x & c) sums to 2^m for c = 0 and to 0 otherwise. Two distinct
    nonzero masks are therefore even together on exactly a quarter of the patterns.
    Unions count the patterns that are odd on every mask, which form the solution
    set of a linear system over GF(2).
    """
    variant = 'pairwise_parity'

    def __init__(self, bits: int):
        if bits < 1:
            raise PreconditionError(f'pairwise_parity needs at least one bit, got {bits}')
        self.bits = bits

    @property
    def period(self) -> int:
        return (1 << self.bits) - 1

    def event_prob(self, i: int) -> float:
        _check_index(i)
        return 0.5

    def _guard(self):
        if self.bits > MAX_PARITY_BITS:
            raise SizeGuardError(f'pairwise_parity enumeration limited to {MAX_PARITY_BITS} bits, '
                                 f'got {self.bits}')

    def _membership(self, masks: np.ndarray, patterns: np.ndarray) -> np.ndarray:
        """(events, patterns) truth table of "popcount(pattern & mask) is even"."""
        overlap = patterns[None, :] & masks[:, None]
        parity = np.zeros(overlap.shape, dtype=np.uint64)
        for b in range(self.bits):
            parity ^= (overlap >> np.uint64(b)) & np.uint64(1)
        return parity == 0

    def period_probs(self, count: int) -> np.ndarray:
        self._guard()
        return np.full(count, 0.5)

    def cross(self, a: int, positions: np.ndarray) -> np.ndarray:
        self._guard()
        return np.where(positions == a, 0.5, 0.25)

    def exact_union(self, s: int, n: int) -> Optional[float]:
        self._guard()
        # rows are (mask << 1) | 1: the constraint popcount(x & mask) odd
        basis = {}
        for mask in (self._positions(s, n) + 1).tolist():
            row = (mask << 1) | 1
            while row > 1:
                pivot = row.bit_length() - 1
                if pivot not in basis:
                    basis[pivot] = row
                    break
                row ^= basis[pivot]
            if row == 1:
                # 0 = 1: no pattern is odd on every mask
                return 1.0
        return 1.0 - 2.0 ** -len(basis)

    def sample(self, n: int, trials: int, generator: np.random.Generator) -> np.ndarray:
        if self.bits > 62:
            raise SizeGuardError(f'pairwise_parity sampling limited to 62 bits, got {self.bits}')
        patterns = generator.integers(0, 1 << self.bits, size=trials, dtype=np.uint64)
        count = min(n, self.period)
        masks = np.arange(1, count + 1, dtype=np.uint64)
        table = self._membership(masks, patterns)
        return table[np.arange(n) % self.period].T

    def describe(self) -> str:
        return f'pairwise_parity({self.bits} bits, period {self.period})'


class IndependentModel(EventSeqModel):
    variant = 'independent'

    def __init__(self, rule):
        self.rule = rule

    def probabilities(self, n: int) -> np.ndarray:
        return self.rule.probs(n)

    def row_supplier(self, n: int) -> RowSupplier:
        p = self.probabilities(n)

        def row(i: int) -> np.ndarray:
            out = p[i] * p[:i + 1]
            out[i] = p[i]
            return out
        return row

    def exact_union(self, s: int, n: int) -> Optional[float]:
        _check_range(s, n)
        p = self.probabilities(n)[s - 1:]
        return float(1.0 - np.prod(1.0 - p))

    def sample(self, n: int, trials: int, generator: np.random.Generator) -> np.ndarray:
        p = self.probabilities(n)
        out = np.empty((trials, n), dtype=bool)
        for start in range(0, n, SAMPLE_BLOCK):
            stop = min(n, start + SAMPLE_BLOCK)
            u = generator.random((stop - start, trials))
            out[:, start:stop] = (u < p[start:stop, None]).T
        return out

    def describe(self) -> str:
        return f'independent({self.rule.describe()})'


def check_transition(transition, states: int) -> np.ndarray:
    P = np.array(transition, dtype=np.float64)
    if P.shape != (states, states):
        raise PreconditionError(f'transition shape {P.shape} does not match {states} states')
    if np.any(P < 0.0) or np.any(np.abs(P.sum(axis=1) - 1.0) > MASS_TOLERANCE):
        raise PreconditionError('transition rows must be nonnegative and sum to 1')
    return P


def check_initial(initial) -> np.ndarray:
    mu = np.array(initial, dtype=np.float64)
    if np.any(mu < 0.0) or abs(float(mu.sum()) - 1.0) > MASS_TOLERANCE:
        raise PreconditionError('initial distribution must be nonnegative and sum to 1')
    return mu


def check_target(target: Sequence[int], states: int) -> Tuple[int, ...]:
    target = tuple(sorted(set(int(t) for t in target)))
    if any(not 0 <= t < states for t in target):
        raise PreconditionError(f'target states must lie in 0..{states - 1}')
    return target


class MarkovModel(EventSeqModel):
    variant = 'markov'

    def __init__(self, transition, initial, target: Sequence[int]):
        mu = check_initial(initial)
        k = mu.size
        P = check_transition(transition, k)
        target = check_target(target, k)

        self.transition = P
        self.initial = mu
        self.target = target
        self._target_mask = np.zeros(k, dtype=bool)
        self._target_mask[list(target)] = True

    @property
    def states(self) -> int:
        return self.initial.size

    def distributions(self, n: int) -> np.ndarray:
        """Row t holds the state distribution after t + 1 transitions."""
        out = np.empty((n, self.states))
        mu = self.initial
        for t in range(n):
            mu = mu @ self.transition
            out[t] = mu
        return out

    def probabilities(self, n: int) -> np.ndarray:
        return self.distributions(n)[:, self._target_mask].sum(axis=1)

    def row_supplier(self, n: int) -> RowSupplier:
        masked = self.distributions(n) * self._target_mask
        p = masked.sum(axis=1)
        # returns[d] = P^d 1_T: probability of sitting in the target d steps later.
        returns = np.empty((n, self.states))
        r = self._target_mask.astype(np.float64)
        for d in range(n):
            returns[d] = r
            r = self.transition @ r

        def row(i: int) -> np.ndarray:
            out = np.empty(i + 1)
            out[:i] = np.sum(masked[:i] * returns[i:0:-1], axis=1)
            out[i] = p[i]
            return out
        return row

    # Single entry with repeated squaring for the gap.
    def pair_prob(self, i: int, j: int) -> float:
        _check_index(i)
        _check_index(j)
        i, j = min(i, j), max(i, j)
        mu = self.distributions(i)[-1] * self._target_mask
        if i == j:
            return float(mu.sum())
        gap = np.linalg.matrix_power(self.transition, j - i)
        return float(mu @ gap[:, self._target_mask].sum(axis=1))

    def sample(self, n: int, trials: int, generator: np.random.Generator) -> np.ndarray:
        k = self.states
        start = np.cumsum(self.initial)
        steps = np.cumsum(self.transition, axis=1)
        state = np.minimum((generator.random(trials)[:, None] >= start[None, :]).sum(axis=1), k - 1)
        out = np.empty((trials, n), dtype=bool)
        for t in range(n):
            u = generator.random(trials)
            state = np.minimum((u[:, None] >= steps[state]).sum(axis=1), k - 1)
            out[:, t] = self._target_mask[state]
        return out

    def describe(self) -> str:
        return f'markov({self.states} states, target {list(self.target)})'


# ------------------------------------------------------------------------------------------------
# Operations
# ------------------------------------------------------------------------------------------------
def event_prob(model: EventSeqModel, i: int) -> float:
    return model.event_prob(i)


def pair_prob(model: EventSeqModel, i: int, j: int) -> float:
    return model.pair_prob(i, j)


def gram(model: EventSeqModel, n: int, dense_limit: int = MAX_DENSE_HORIZON,
         horizon_limit: int = MAX_GRAM_HORIZON) -> GramData:
    """Exact Gram data of A_1..A_n; packed when n <= dense_limit, row-supplied above."""
    _check_index(n)
    if n > horizon_limit:
        raise SizeGuardError(f'Gram horizon {n} exceeds the limit {horizon_limit}')
    p = model.probabilities(n)
    supplier = model.row_supplier(n)
    logger.debug('gram() %s n=%d dense=%s', model.describe(), n, n <= dense_limit)
    if n <= dense_limit:
        return GramData(p, lower=np.concatenate([supplier(i) for i in range(n)]))
    return GramData(p, row_supplier=supplier)


def exact_limsup(model: EventSeqModel) -> Optional[float]:
    return model.exact_limsup()


def exact_union(model: EventSeqModel, s: int, n: int) -> Optional[float]:
    return model.exact_union(s, n)


def sample_indicators(model: EventSeqModel, n: int, seed: int, trials: int = 1,
                      stream: int = 0) -> TrajectorySample:
    """Indicator bits of A_1..A_n for `trials` independent outcomes, fixed by (seed, stream)."""
    _check_index(n)
    if trials < 1:
        raise PreconditionError(f'trials must be positive, got {trials}')
    indicators = model.sample(n, trials, rng.substream(seed, stream))
    return TrajectorySample(n, indicators.astype(np.uint8))


def _check_index(i: int):
    if i < 1:
        raise PreconditionError(f'event index {i} must be at least 1')


def _check_range(s: int, n: int):
    if not 1 <= s <= n:
        raise PreconditionError(f'range {s}..{n} is empty or starts below 1')


# ------------------------------------------------------------------------------------------------
# Model spec files
#
# {"type": "finite_periodic", "atoms": [{"id": "a1", "mass": 0.25}, ...],
#                             "events": [["a1", "a2"], ["a1", "a3"], ["a1"]]}
# {"type": "independent", "probs": {"kind": "constant", "q": 0.5}}
#                                  {"kind": "list", "values": [0.5, 0.25]}
#                                  {"kind": "harmonic", "c": 1}
# {"type": "pairwise_parity", "bits": 3}
# {"type": "markov", "states": 2, "transition": [[0.9, 0.1], [0.5, 0.5]],
#                    "initial": [1, 0], "target": [1]}
# ------------------------------------------------------------------------------------------------
MODEL_KEYS = {
    'finite_periodic': ('atoms', 'events'),
    'independent': ('probs',),
    'pairwise_parity': ('bits',),
    'markov': ('states', 'transition', 'initial', 'target'),
}
RULE_KEYS = {
    'constant': ('q',),
    'list': ('values',),
    'harmonic': ('c',),
}


def load_model(file_path: str) -> EventSeqModel:
    try:
        with open(file_path, 'r', encoding='utf-8') as f:
            spec = json.load(f)
    except json.JSONDecodeError as ex:
        raise ModelSpecError(f'invalid JSON ({ex.msg}, line {ex.lineno})') from ex
    except OSError as ex:
        raise ModelSpecError(f'cannot read "{file_path}": {ex.strerror}') from ex
    logger.debug('load_model() "%s"', file_path)
    return parse_model(spec)


def parse_model(spec, path: str = '$') -> EventSeqModel:
    _expect(isinstance(spec, dict), 'model spec must be an object', path)
    kind = spec.get('type')
    _expect(kind in MODEL_KEYS, f'unknown model type {kind!r}, expected one of {sorted(MODEL_KEYS)}',
            f'{path}.type')
    _check_keys(spec, ('type',) + MODEL_KEYS[kind], path)

    if kind == 'finite_periodic':
        return _parse_periodic(spec, path)
    if kind == 'independent':
        return IndependentModel(_parse_rule(spec['probs'], f'{path}.probs'))
    if kind == 'pairwise_parity':
        bits = _integer(spec['bits'], f'{path}.bits')
        with _at(f'{path}.bits'):
            return PairwiseParityModel(bits)
    return _parse_markov(spec, path)


def _parse_periodic(spec: dict, path: str) -> PeriodicModel:
    atoms_spec = _list(spec['atoms'], f'{path}.atoms')
    atoms = []
    for k, atom in enumerate(atoms_spec):
        atom_path = f'{path}.atoms[{k}]'
        _expect(isinstance(atom, dict), 'atom must be an object', atom_path)
        _check_keys(atom, ('id', 'mass'), atom_path)
        _expect(isinstance(atom['id'], str), 'atom id must be a string', f'{atom_path}.id')
        atoms.append((atom['id'], _number(atom['mass'], f'{atom_path}.mass')))
    with _at(f'{path}.atoms'):
        space = FiniteSpace(tuple(atoms))

    events = []
    known = set(space.ids)
    for k, event in enumerate(_list(spec['events'], f'{path}.events')):
        event_path = f'{path}.events[{k}]'
        for m, atom_id in enumerate(_list(event, event_path, allow_empty=True)):
            _expect(atom_id in known, f'unknown atom id {atom_id!r}', f'{event_path}[{m}]')
        events.append(event)
    with _at(f'{path}.events'):
        return PeriodicModel(space, events)


def _parse_rule(spec, path: str):
    _expect(isinstance(spec, dict), 'probs must be an object', path)
    kind = spec.get('kind')
    _expect(kind in RULE_KEYS, f'unknown probability rule {kind!r}, expected one of {sorted(RULE_KEYS)}',
            f'{path}.kind')
    _check_keys(spec, ('kind',) + RULE_KEYS[kind], path)
    if kind == 'constant':
        q = _number(spec['q'], f'{path}.q')
        with _at(f'{path}.q'):
            return ConstantRule(q)
    if kind == 'harmonic':
        c = _number(spec['c'], f'{path}.c')
        with _at(f'{path}.c'):
            return HarmonicRule(c)
    values = _list(spec['values'], f'{path}.values')
    values = tuple(_number(v, f'{path}.values[{k}]') for k, v in enumerate(values))
    with _at(f'{path}.values', indexed=True):
        return ListRule(values)


def _parse_markov(spec: dict, path: str) -> MarkovModel:
    states = _integer(spec['states'], f'{path}.states')
    _expect(states >= 1, 'states must be positive', f'{path}.states')
    rows = _list(spec['transition'], f'{path}.transition')
    _expect(len(rows) == states, f'transition needs {states} rows', f'{path}.transition')
    transition = []
    for k, row in enumerate(rows):
        row_path = f'{path}.transition[{k}]'
        row = _list(row, row_path)
        _expect(len(row) == states, f'row needs {states} entries', row_path)
        transition.append([_number(v, f'{row_path}[{m}]') for m, v in enumerate(row)])
    initial = _list(spec['initial'], f'{path}.initial')
    _expect(len(initial) == states, f'initial needs {states} entries', f'{path}.initial')
    initial = [_number(v, f'{path}.initial[{k}]') for k, v in enumerate(initial)]
    target = [_integer(v, f'{path}.target[{k}]')
              for k, v in enumerate(_list(spec['target'], f'{path}.target'))]
    with _at(f'{path}.transition'):
        check_transition(transition, states)
    with _at(f'{path}.initial'):
        check_initial(initial)
    with _at(f'{path}.target'):
        check_target(target, states)
    return MarkovModel(transition, initial, target)


@contextlib.contextmanager
def _at(path: str, indexed: bool = False):
    """Re-raise PreconditionError as ModelSpecError at `path`, or at path[index - 1] when indexed."""
    try:
        yield
    except PreconditionError as ex:
        if indexed and ex.index is not None:
            path = f'{path}[{ex.index - 1}]'
        raise ModelSpecError(str(ex), path) from ex


def _expect(condition: bool, msg: str, path: str):
    if not condition:
        raise ModelSpecError(msg, path)


def _check_keys(spec: dict, allowed: Tuple[str, ...], path: str):
    for key in spec:
        _expect(key in allowed, f'unknown key {key!r}', f'{path}.{key}')
    for key in allowed:
        _expect(key in spec, 'missing key', f'{path}.{key}')


def _number(value, path: str) -> float:
    _expect(isinstance(value, (int, float)) and not isinstance(value, bool), 'expected a number', path)
    return float(value)


def _integer(value, path: str) -> int:
    _expect(isinstance(value, int) and not isinstance(value, bool), 'expected an integer', path)
    return int(value)


def _list(value, path: str, allow_empty: bool = False) -> list:
    _expect(isinstance(value, list), 'expected a list', path)
    _expect(allow_empty or len(value) > 0, 'list is empty', path)
    return value
