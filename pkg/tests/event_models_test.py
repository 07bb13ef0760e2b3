import json
import logging
import os
import shutil
import tempfile
import unittest

import numpy as np
from hypothesis import given, settings

from resources.lib import event_models
from resources.lib.errors import ModelSpecError, PreconditionError, SizeGuardError
from resources.lib.event_models import FiniteSpace, HarmonicRule, IndependentModel, ListRule, PeriodicModel
from resources.lib.gram_core import validate_gram

from tests import fakes

logging.basicConfig(format='%(asctime)s %(module)s %(levelname)s: %(message)s',
                    datefmt='%m/%d/%Y %I:%M:%S %p', level=logging.DEBUG)
logger = logging.getLogger(__name__)


class ProbabilitiesTest(unittest.TestCase):

    def test_event_probabilities_of_each_variant(self):
        assert event_models.event_prob(fakes.two_coins_model(), 1) == 0.5
        assert event_models.event_prob(fakes.two_coins_model(), 3) == 0.25
        assert event_models.event_prob(fakes.parity_model(2), 5) == 0.5
        assert event_models.event_prob(fakes.harmonic_model(1.0), 4) == 0.25

    def test_event_index_below_one_is_rejected(self):
        with self.assertRaises(PreconditionError):
            event_models.event_prob(fakes.two_coins_model(), 0)

    def test_two_coins_gram_matches_atom_enumeration(self):
        # act
        g = event_models.gram(fakes.two_coins_model(), 3)

        # assert
        np.testing.assert_array_equal(g.p, [0.5, 0.5, 0.25])
        np.testing.assert_array_equal(g.matrix(), [[0.5, 0.25, 0.25], [0.25, 0.5, 0.25], [0.25, 0.25, 0.25]])

    def test_fair_coins_and_two_bit_parity_share_their_gram_data(self):
        # arrange
        expected = np.array([[0.5, 0.25, 0.25], [0.25, 0.5, 0.25], [0.25, 0.25, 0.5]])

        # act
        coins = event_models.gram(fakes.independent_model(0.5), 3)
        parity = event_models.gram(fakes.parity_model(2), 3)

        # assert
        np.testing.assert_array_equal(coins.matrix(), expected)
        np.testing.assert_allclose(parity.matrix(), expected, rtol=0, atol=1e-15)

    def test_parity_events_are_not_mutually_independent(self):
        # two-bit parity: every pattern lies in at least one of the three events
        assert event_models.exact_union(fakes.parity_model(2), 1, 3) == 1.0
        assert event_models.exact_union(fakes.independent_model(0.5), 1, 3) == 0.875

    def test_pair_prob_agrees_with_the_gram_row(self):
        # arrange
        model = fakes.markov_model()
        g = event_models.gram(model, 12)

        for i, j in ((1, 1), (2, 7), (12, 3)):
            # act
            actual = event_models.pair_prob(model, i, j)

            # assert
            self.assertAlmostEqual(actual, g.entry(i - 1, j - 1), delta=1e-14)

    def test_markov_probabilities_follow_the_chain(self):
        # arrange
        model = fakes.markov_model()

        # act
        p = model.probabilities(2)

        # assert
        self.assertAlmostEqual(p[0], 0.1, delta=1e-15)
        self.assertAlmostEqual(p[1], 0.9 * 0.1 + 0.1 * 0.5, delta=1e-15)
        self.assertAlmostEqual(event_models.pair_prob(model, 1, 2), 0.1 * 0.5, delta=1e-15)

    def test_gram_switches_to_rows_above_the_dense_limit(self):
        # act
        g = event_models.gram(fakes.harmonic_model(1.0), 50, dense_limit=10)

        # assert
        assert g.is_virtual
        self.assertAlmostEqual(g.entry(49, 1), 0.02 * 0.5, delta=1e-15)

    def test_gram_beyond_the_horizon_limit_raises_size_guard(self):
        with self.assertRaises(SizeGuardError):
            event_models.gram(fakes.independent_model(0.5), 100, horizon_limit=99)

    def test_parity_beyond_twenty_bits_raises_size_guard(self):
        with self.assertRaises(SizeGuardError):
            event_models.gram(fakes.parity_model(21), 3)

    @settings(max_examples=100, derandomize=True, deadline=None)
    @given(fakes.periodic_models())
    def test_gram_of_random_finite_models_is_psd_and_within_frechet_bounds(self, model):
        # act
        g = event_models.gram(model, 12)

        # assert
        assert validate_gram(g) == []


class ParityTest(unittest.TestCase):

    def enumerate_patterns(self, bits: int) -> np.ndarray:
        """(period, 2^bits) table of "popcount(pattern & mask) is even", one pattern at a time."""
        table = np.zeros(((1 << bits) - 1, 1 << bits), dtype=bool)
        for mask in range(1, 1 << bits):
            for pattern in range(1 << bits):
                table[mask - 1, pattern] = bin(pattern & mask).count('1') % 2 == 0
        return table

    def test_gram_and_unions_match_pattern_enumeration(self):
        for bits in range(1, 6):
            # arrange
            model = fakes.parity_model(bits)
            table = self.enumerate_patterns(bits)
            period = model.period

            # act
            g = event_models.gram(model, period)

            # assert
            expected = (table.astype(float) @ table.T.astype(float)) / float(1 << bits)
            np.testing.assert_array_equal(g.matrix(), expected)
            for s in range(1, period + 1):
                for n in range(s, period + 1):
                    union = np.any(table[s - 1:n], axis=0).mean()
                    assert event_models.exact_union(model, s, n) == union

    def test_twenty_bit_parity_supplies_rows_without_enumerating_the_period(self):
        # act
        g = event_models.gram(fakes.parity_model(20), 200000)

        # assert
        assert g.is_virtual
        row = g.row(199999)
        assert row.size == 200000
        assert row[-1] == 0.5
        assert np.all(row[:-1] == 0.25)
        assert event_models.pair_prob(fakes.parity_model(20), 5, 1048575 + 5) == 0.5

    def test_twenty_bit_parity_unions(self):
        # arrange
        model = fakes.parity_model(20)

        # act / assert
        assert event_models.exact_union(model, 1, 1) == 0.5
        assert event_models.exact_union(model, 1, 2) == 0.75
        assert event_models.exact_union(model, 1, 3) == 1.0
        assert event_models.exact_union(model, 1, 500000) == 1.0
        assert event_models.exact_union(model, 1 << 19, 1 << 19) == 0.5


class ExactValuesTest(unittest.TestCase):

    def test_two_coins_limsup_and_union(self):
        model = fakes.two_coins_model()
        assert event_models.exact_limsup(model) == 0.75
        assert event_models.exact_union(model, 1, 3) == 0.75
        assert event_models.exact_union(model, 3, 3) == 0.25

    def test_single_event_limsup_is_its_mass(self):
        assert event_models.exact_limsup(fakes.constant_event_model(0.3)) == 0.3

    def test_independent_models_have_no_exact_limsup(self):
        assert event_models.exact_limsup(fakes.independent_model(0.5)) is None

    def test_independent_union_is_one_minus_the_product(self):
        assert event_models.exact_union(fakes.independent_model(0.5), 1, 2) == 0.75
        self.assertAlmostEqual(event_models.exact_union(fakes.harmonic_model(1.0), 2, 4), 1.0 - 0.5 * 2 / 3 * 0.75,
                               delta=1e-15)

    def test_markov_union_is_unknown(self):
        assert event_models.exact_union(fakes.markov_model(), 1, 3) is None

    def test_empty_range_is_rejected(self):
        with self.assertRaises(PreconditionError):
            event_models.exact_union(fakes.two_coins_model(), 4, 3)


class SamplingTest(unittest.TestCase):

    def test_certain_and_null_events(self):
        # act
        certain = event_models.sample_indicators(fakes.constant_event_model(1.0), 5, seed=1, trials=10)
        null = event_models.sample_indicators(fakes.independent_model(0.0), 5, seed=1, trials=10)

        # assert
        assert certain.indicators.shape == (10, 5)
        assert certain.indicators.dtype == np.uint8
        assert certain.indicators.all()
        assert not null.indicators.any()

    def test_two_coins_first_event_frequency_is_within_three_sigma(self):
        # arrange
        trials = 100000

        # act
        sample = event_models.sample_indicators(fakes.two_coins_model(), 3, seed=42, trials=trials)

        # assert
        mean = sample.indicators[:, 0].mean()
        assert abs(mean - 0.5) <= 3.0 * np.sqrt(0.25 / trials)

    def test_same_seed_gives_identical_trajectories(self):
        for model in (fakes.two_coins_model(), fakes.independent_model(0.3), fakes.parity_model(4),
                      fakes.markov_model()):
            first = event_models.sample_indicators(model, 20, seed=9, trials=50)
            second = event_models.sample_indicators(model, 20, seed=9, trials=50)
            np.testing.assert_array_equal(first.indicators, second.indicators)

    def test_longer_horizons_extend_shorter_ones(self):
        for model in (fakes.independent_model(0.3), fakes.harmonic_model(2.0), fakes.markov_model()):
            short = event_models.sample_indicators(model, 300, seed=4, trials=20)
            long = event_models.sample_indicators(model, 700, seed=4, trials=20)
            np.testing.assert_array_equal(long.indicators[:, :300], short.indicators)

    def test_parity_indicators_repeat_with_the_period(self):
        sample = event_models.sample_indicators(fakes.parity_model(3), 14, seed=2, trials=30)
        np.testing.assert_array_equal(sample.indicators[:, :7], sample.indicators[:, 7:])

    def test_pairwise_co_occurrence_matches_the_gram_data_within_four_standard_errors(self):
        trials = 50000
        for model in (fakes.two_coins_model(), fakes.independent_model(0.3)):
            # arrange
            M = event_models.gram(model, 5).matrix()

            # act
            x = event_models.sample_indicators(model, 5, seed=21, trials=trials).indicators.astype(np.float64)

            # assert
            observed = (x.T @ x) / trials
            stderr = np.sqrt(M * (1.0 - M) / trials)
            assert np.all(np.abs(observed - M) <= 4.0 * stderr + 1e-12)

    def test_markov_visit_frequency_matches_the_state_distribution(self):
        # arrange
        model = fakes.markov_model()
        trials = 100000

        # act
        sample = event_models.sample_indicators(model, 5, seed=8, trials=trials)

        # assert
        p = model.probabilities(5)
        sigma = np.sqrt(p * (1.0 - p) / trials)
        assert np.all(np.abs(sample.indicators.mean(axis=0) - p) <= 4.0 * sigma)


class RulesAndSpacesTest(unittest.TestCase):

    def test_harmonic_rule_caps_at_one(self):
        np.testing.assert_array_equal(HarmonicRule(2.0).probs(4), [1.0, 1.0, 2.0 / 3.0, 0.5])

    def test_list_rule_is_limited_to_its_values(self):
        with self.assertRaises(PreconditionError):
            IndependentModel(ListRule((0.5, 0.5))).probabilities(3)

    def test_space_masses_must_sum_to_one(self):
        with self.assertRaises(PreconditionError):
            FiniteSpace((('a', 0.5), ('b', 0.4)))

    def test_space_ids_must_be_unique(self):
        with self.assertRaises(PreconditionError):
            FiniteSpace((('a', 0.5), ('a', 0.5)))

    def test_unknown_atom_in_an_event_is_rejected(self):
        with self.assertRaises(PreconditionError):
            PeriodicModel(FiniteSpace((('a', 1.0),)), [['b']])


class ParseModelTest(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.TEST_OUTPUT_DIR = tempfile.mkdtemp()

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.TEST_OUTPUT_DIR)

    def test_two_coins_spec_parses_to_the_periodic_model(self):
        # act
        model = event_models.parse_model(fakes.TWO_COINS_SPEC)

        # assert
        assert model.variant == 'finite_periodic'
        np.testing.assert_array_equal(event_models.gram(model, 3).matrix(),
                                      event_models.gram(fakes.two_coins_model(), 3).matrix())

    def test_each_probability_rule_parses(self):
        constant = event_models.parse_model({'type': 'independent', 'probs': {'kind': 'constant', 'q': 0.5}})
        listed = event_models.parse_model({'type': 'independent', 'probs': {'kind': 'list', 'values': [0.5, 0.1]}})
        harmonic = event_models.parse_model({'type': 'independent', 'probs': {'kind': 'harmonic', 'c': 1}})
        np.testing.assert_array_equal(constant.probabilities(2), [0.5, 0.5])
        np.testing.assert_array_equal(listed.probabilities(2), [0.5, 0.1])
        np.testing.assert_array_equal(harmonic.probabilities(2), [1.0, 0.5])

    def test_markov_and_parity_specs_parse(self):
        assert event_models.parse_model(fakes.MARKOV_SPEC).describe() == 'markov(2 states, target [1])'
        assert event_models.parse_model({'type': 'pairwise_parity', 'bits': 3}).period == 7

    def test_unknown_probability_kind_names_its_path(self):
        with self.assertRaises(ModelSpecError) as context:
            event_models.parse_model({'type': 'independent', 'probs': {'kind': 'poisson'}})
        assert context.exception.path == '$.probs.kind'
        assert str(context.exception).startswith('$.probs.kind:')

    def test_unknown_atom_names_the_event_entry(self):
        # arrange
        spec = json.loads(json.dumps(fakes.TWO_COINS_SPEC))
        spec['events'][1] = ['a1', 'zz']

        # act / assert
        with self.assertRaises(ModelSpecError) as context:
            event_models.parse_model(spec)
        assert context.exception.path == '$.events[1][1]'

    def test_unexpected_key_is_rejected(self):
        with self.assertRaises(ModelSpecError) as context:
            event_models.parse_model({'type': 'pairwise_parity', 'bits': 3, 'seed': 1})
        assert context.exception.path == '$.seed'

    def test_invalid_probability_value_becomes_a_spec_error(self):
        with self.assertRaises(ModelSpecError) as context:
            event_models.parse_model({'type': 'independent', 'probs': {'kind': 'constant', 'q': 1.5}})
        assert context.exception.path == '$.probs.q'

    def test_range_errors_name_the_offending_field(self):
        cases = [
            ({'type': 'pairwise_parity', 'bits': 0}, '$.bits'),
            ({'type': 'independent', 'probs': {'kind': 'list', 'values': [0.5, 1.5]}}, '$.probs.values[1]'),
            ({'type': 'independent', 'probs': {'kind': 'harmonic', 'c': -1}}, '$.probs.c'),
            ({'type': 'finite_periodic', 'atoms': [{'id': 'a', 'mass': 0.5}], 'events': [['a']]}, '$.atoms'),
            (dict(fakes.MARKOV_SPEC, transition=[[0.9, 0.2], [0.5, 0.5]]), '$.transition'),
            (dict(fakes.MARKOV_SPEC, initial=[0.5, 0.6]), '$.initial'),
            (dict(fakes.MARKOV_SPEC, target=[2]), '$.target'),
        ]
        for spec, path in cases:
            # act
            with self.assertRaises(ModelSpecError) as context:
                event_models.parse_model(spec)

            # assert
            assert context.exception.path == path
            assert str(context.exception).startswith(f'{path}: ')

    def test_load_model_reads_json_files(self):
        # arrange
        file_path = fakes.write_json(self.TEST_OUTPUT_DIR, 'markov.json', fakes.MARKOV_SPEC)

        # act
        model = event_models.load_model(file_path)

        # assert
        assert model.states == 2

    def test_load_model_reports_broken_json(self):
        # arrange
        file_path = os.path.join(self.TEST_OUTPUT_DIR, 'broken.json')
        with open(file_path, 'w', encoding='utf-8') as f:
            f.write('{"type": ')

        # act / assert
        with self.assertRaises(ModelSpecError):
            event_models.load_model(file_path)


if __name__ == '__main__':
    unittest.main()
