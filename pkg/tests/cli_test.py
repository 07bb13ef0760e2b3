import csv
import io
import logging
import os
import shutil
import tempfile
import unittest
from unittest.mock import patch

from resources.lib import cli, event_models
from resources.lib.errors import WeightSpecError
from resources.lib.gram_core import WeightVariant, ratio_sequence, WeightScheme

from tests import fakes

logging.basicConfig(format='%(asctime)s %(module)s %(levelname)s: %(message)s',
                    datefmt='%m/%d/%Y %I:%M:%S %p', level=logging.DEBUG)
logger = logging.getLogger(__name__)


class CliTest(unittest.TestCase):

    TEST_OUTPUT_DIR = ''

    @classmethod
    def setUpClass(cls):
        cls.TEST_OUTPUT_DIR = tempfile.mkdtemp()
        cls.TWO_COINS = fakes.write_json(cls.TEST_OUTPUT_DIR, 'two_coins.json', fakes.TWO_COINS_SPEC)
        cls.MARKOV = fakes.write_json(cls.TEST_OUTPUT_DIR, 'markov.json', fakes.MARKOV_SPEC)
        cls.CONSTANT = fakes.write_json(cls.TEST_OUTPUT_DIR, 'constant.json', {
            'type': 'finite_periodic',
            'atoms': [{'id': 'in', 'mass': 0.3}, {'id': 'out', 'mass': 0.7}],
            'events': [['in']],
        })
        cls.COINS = fakes.write_json(cls.TEST_OUTPUT_DIR, 'coins.json',
                                     {'type': 'independent', 'probs': {'kind': 'constant', 'q': 0.5}})
        cls.WITH_NULL = fakes.write_json(cls.TEST_OUTPUT_DIR, 'with_null.json',
                                         {'type': 'independent', 'probs': {'kind': 'list', 'values': [0.5, 0.0]}})
        cls.PARITY3 = fakes.write_json(cls.TEST_OUTPUT_DIR, 'parity3.json', {'type': 'pairwise_parity', 'bits': 3})
        cls.PARITY21 = fakes.write_json(cls.TEST_OUTPUT_DIR, 'parity21.json', {'type': 'pairwise_parity', 'bits': 21})
        cls.W113 = fakes.write_json(cls.TEST_OUTPUT_DIR, 'w113.json', {'periodic': [1, 1, -1]})
        cls.SHORT = fakes.write_json(cls.TEST_OUTPUT_DIR, 'short.json', [1, 1, -1])

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.TEST_OUTPUT_DIR)

    def run_cli(self, *argv):
        stream = io.StringIO()
        err = io.StringIO()
        exit_code = cli.run(list(argv), stream, err)
        return exit_code, stream.getvalue(), err.getvalue()

    # --- bound ---------------------------------------------------------------------------------
    def test_bound_with_signed_periodic_weights_prints_0_75(self):
        # act
        exit_code, output, _ = self.run_cli('bound', '--model', self.TWO_COINS, '--weights', f'file:{self.W113}',
                                            '--n', '30')

        # assert
        assert exit_code == cli.EXIT_OK
        assert 'final_estimate:  0.75\n' in output
        assert 'seed:            0' in output

    def test_bound_of_a_constant_event_prints_its_probability(self):
        exit_code, output, _ = self.run_cli('bound', '--model', self.CONSTANT, '--weights', 'unit', '--n', '10')
        assert exit_code == cli.EXIT_OK
        assert 'final_estimate:  0.3\n' in output

    def test_bound_output_equals_the_direct_library_call(self):
        # arrange
        g = event_models.gram(fakes.markov_model(), 40)
        expected = ratio_sequence(g, WeightScheme.unit()).final_estimate

        # act
        _, output, _ = self.run_cli('bound', '--model', self.MARKOV, '--n', '40')

        # assert
        assert f'final_estimate:  {expected:.12g}\n' in output

    def test_bound_uses_the_loaded_model(self):
        with patch('resources.lib.event_models.load_model', autospec=True,
                   return_value=fakes.two_coins_model()) as load_mock:
            # act
            exit_code, output, _ = self.run_cli('bound', '--model', 'anything.json', '--n', '3')

        # assert
        load_mock.assert_called_once_with('anything.json')
        assert exit_code == cli.EXIT_OK
        assert f'ratio(n):        {25.0 / 44.0:.12g}' in output

    def test_bound_inverse_weights_with_a_null_event_exits_3_naming_the_index(self):
        exit_code, _, err = self.run_cli('bound', '--model', self.WITH_NULL, '--weights', 'inverse', '--n', '2')
        assert exit_code == cli.EXIT_UNDEFINED
        assert '(index 2)' in err

    def test_bound_with_zero_ratio_denominator_exits_3(self):
        # arrange
        zeros = fakes.write_json(self.TEST_OUTPUT_DIR, 'zeros.json', [0, 0, 0])

        # act
        exit_code, _, err = self.run_cli('bound', '--model', self.TWO_COINS, '--weights', f'file:{zeros}',
                                         '--n', '3')

        # assert
        assert exit_code == cli.EXIT_UNDEFINED
        assert 'undefined' in err

    def test_bound_spec_error_exits_2_naming_the_json_path(self):
        # arrange
        broken = fakes.write_json(self.TEST_OUTPUT_DIR, 'broken.json',
                                  {'type': 'independent', 'probs': {'kind': 'poisson'}})

        # act
        exit_code, _, err = self.run_cli('bound', '--model', broken, '--n', '3')

        # assert
        assert exit_code == cli.EXIT_PARSE
        assert '$.probs.kind' in err

    def test_bound_weight_file_shorter_than_n_exits_2(self):
        exit_code, _, err = self.run_cli('bound', '--model', self.TWO_COINS, '--weights', f'file:{self.SHORT}',
                                         '--n', '6')
        assert exit_code == cli.EXIT_PARSE
        assert 'n = 6' in err

    def test_bound_writes_the_ratio_csv(self):
        # arrange
        out = os.path.join(self.TEST_OUTPUT_DIR, 'bound.csv')

        # act
        exit_code, _, _ = self.run_cli('bound', '--model', self.COINS, '--n', '5', '--out', out)

        # assert
        assert exit_code == cli.EXIT_OK
        with open(out, 'r', encoding='utf-8', newline='') as f:
            rows = list(csv.reader(f))
        assert rows[0] == ['n', 'ratio', 'running_max', 'partial_sum']
        assert len(rows) == 6
        assert float(rows[5][1]) == 5.0 / 6.0

    def test_missing_n_is_a_usage_error(self):
        exit_code, _, _ = self.run_cli('bound', '--model', self.COINS)
        assert exit_code == cli.EXIT_PARSE

    # --- verify --------------------------------------------------------------------------------
    def test_verify_two_coins_passes_every_property(self):
        # act
        exit_code, output, _ = self.run_cli('verify', '--model', self.TWO_COINS, '--n', '30')

        # assert
        assert exit_code == cli.EXIT_OK
        assert output.count('PASS') == 7
        assert '7 passed, 0 failed' in output

    def test_verify_three_bit_parity_passes(self):
        exit_code, output, _ = self.run_cli('verify', '--model', self.PARITY3, '--n', '70')
        assert exit_code == cli.EXIT_OK
        assert 'FAIL' not in output

    def test_verify_markov_chain_against_simulated_unions(self):
        exit_code, output, _ = self.run_cli('verify', '--model', self.MARKOV, '--n', '10', '--trials', '20000')
        assert exit_code == cli.EXIT_OK
        assert '(mc unions)' in output

    def test_verify_hand_edited_gram_csv_reports_the_frechet_failure(self):
        # arrange
        gram_path = os.path.join(self.TEST_OUTPUT_DIR, 'edited.csv')
        with open(gram_path, 'w', encoding='utf-8') as f:
            f.write('i,j,p_i,p_j,m_ij\n1,1,0.5,0.5,0.5\n1,2,0.5,0.3,0.4\n2,2,0.3,0.3,0.3\n')

        # act
        exit_code, output, _ = self.run_cli('verify', '--gram', gram_path)

        # assert
        assert exit_code == cli.EXIT_FAILURE
        assert 'FAIL  Gram invariants' in output
        assert 'Fréchet' in output

    def test_verify_needs_exactly_one_input(self):
        exit_code, _, _ = self.run_cli('verify', '--n', '3')
        assert exit_code == cli.EXIT_PARSE

    # --- simulate ------------------------------------------------------------------------------
    def test_simulate_fair_coins_is_consistent(self):
        # act
        exit_code, output, err = self.run_cli('simulate', '--model', self.COINS, '--n', '1000', '--trials', '2000')

        # assert
        assert exit_code == cli.EXIT_OK
        rows = list(csv.DictReader(io.StringIO(output)))
        assert rows[-1]['n'] == '1000'
        assert abs(float(rows[-1]['ratio']) - 1000.0 / 1001.0) < 1e-12
        assert 'verdict:         consistent' in err

    def test_simulate_two_coins_gives_0_75_at_every_full_period(self):
        # act
        exit_code, output, _ = self.run_cli('simulate', '--model', self.TWO_COINS, '--weights', f'file:{self.W113}',
                                            '--n', '300')

        # assert
        assert exit_code == cli.EXIT_OK
        rows = [row for row in csv.DictReader(io.StringIO(output)) if int(row['n']) % 3 == 0]
        assert rows
        for row in rows:
            assert abs(float(row['ratio']) - 0.75) < 1e-12

    def test_simulate_markov_rows_come_from_simulation_and_repeat_exactly(self):
        # act
        first = self.run_cli('simulate', '--model', self.MARKOV, '--n', '20', '--trials', '3000', '--seed', '7')
        second = self.run_cli('simulate', '--model', self.MARKOV, '--n', '20', '--trials', '3000', '--seed', '7',
                              '--workers', '3')

        # assert
        rows = list(csv.DictReader(io.StringIO(first[1])))
        assert {row['source'] for row in rows} == {'mc'}
        assert first[1] == second[1]

    # --- gram ----------------------------------------------------------------------------------
    def test_gram_of_two_coins_has_six_pairs_and_passes_psd(self):
        # act
        exit_code, output, err = self.run_cli('gram', '--model', self.TWO_COINS, '--n', '3')

        # assert
        assert exit_code == cli.EXIT_OK
        assert len(output.splitlines()) == 7
        assert 'psd:             pass' in err

    def test_gram_of_fair_coins_follows_the_product_rule(self):
        exit_code, output, _ = self.run_cli('gram', '--model', self.COINS, '--n', '2')
        assert exit_code == cli.EXIT_OK
        assert output.splitlines() == ['i,j,p_i,p_j,m_ij', '1,1,0.5,0.5,0.5', '1,2,0.5,0.5,0.25', '2,2,0.5,0.5,0.5']

    def test_gram_of_21_bit_parity_hits_the_size_guard(self):
        exit_code, _, err = self.run_cli('gram', '--model', self.PARITY21, '--n', '3')
        assert exit_code == cli.EXIT_PARSE
        assert '20 bits' in err

    # --- weights -------------------------------------------------------------------------------
    def test_named_weight_schemes(self):
        assert cli.parse_weights('unit').variant == WeightVariant.UNIT
        assert cli.parse_weights('inverse').variant == WeightVariant.INVERSE_PROBABILITY
        assert cli.parse_weights('optimal').variant == WeightVariant.OPTIMAL

    def test_weight_files_hold_arrays_or_periodic_patterns(self):
        assert cli.parse_weights(f'file:{self.SHORT}').weights == (1.0, 1.0, -1.0)
        assert cli.parse_weights(f'file:{self.W113}').periodic

    def test_unknown_weight_scheme_is_rejected(self):
        with self.assertRaises(WeightSpecError):
            cli.parse_weights('harmonic')

    def test_weight_file_with_a_non_number_is_rejected(self):
        bad = fakes.write_json(self.TEST_OUTPUT_DIR, 'bad_weights.json', [1, 'x'])
        with self.assertRaises(WeightSpecError):
            cli.parse_weights(f'file:{bad}')


if __name__ == '__main__':
    unittest.main()
