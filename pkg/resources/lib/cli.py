# -*- coding: utf-8 -*-
#
# Command line front end: bound, verify, simulate and gram.
#
# Exit codes
#   0  ok
#   1  property failure or violated verdict
#   2  model, weight file or Gram CSV parse failure; size guard
#   3  ratio undefined at the requested n; weight precondition violated
#
from __future__ import annotations

import argparse
import contextlib
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, TextIO

from resources.lib import boundlogging, event_models, simulate
from resources.lib.errors import (DegenerateGramError, ModelSpecError, PreconditionError, SizeGuardError,
                                  WeightSpecError)
from resources.lib.gram_core import (GramData, WeightScheme, WeightVariant, check_psd, convergent_case_note,
                                     read_gram_csv, ratio_sequence, shifted_ratio, write_gram_csv)
from resources.lib.properties import run_property_suite
from resources.lib.settings import DEFAULT_SEED, DEFAULT_SETTINGS, DEFAULT_TRIALS, BoundSettings

logger = logging.getLogger(__name__)

PROGRAM = 'weighted-bc'

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_PARSE = 2
EXIT_UNDEFINED = 3

# Running-max values printed at the end of a bound report.
RUNNING_MAX_TAIL = 5
# Points in the default geometric grid of the simulate command.
GRID_POINTS = 20


@dataclass
class CliConfig:
    command: str
    model_path: Optional[str] = None
    gram_path: Optional[str] = None
    weights: str = 'unit'
    n: Optional[int] = None
    s: int = 1
    trials: int = DEFAULT_TRIALS
    seed: int = DEFAULT_SEED
    out: Optional[str] = None
    settings: BoundSettings = field(default_factory=lambda: DEFAULT_SETTINGS)
    verbose: bool = False


# ------------------------------------------------------------------------------------------------
# Arguments
# ------------------------------------------------------------------------------------------------
class BoundArguments(object):
    BOUND = 'bound'
    VERIFY = 'verify'
    SIMULATE = 'simulate'
    GRAM = 'gram'

    def __init__(self, prog: str = PROGRAM):
        self.args = None
        self.parser = argparse.ArgumentParser(prog=prog,
                                              description='Weighted Borel-Cantelli lower bounds.')
        commands = self.parser.add_subparsers(dest='command', metavar='command')
        commands.required = True

        common = argparse.ArgumentParser(add_help=False)
        common.add_argument('--model', dest='model_path', help='JSON model spec')
        common.add_argument('--weights', default='unit', help='unit|inverse|optimal|file:<path>')
        common.add_argument('--n', type=int, help='horizon')
        common.add_argument('--s', type=int, default=1, help='start index of the union')
        common.add_argument('--trials', type=int, default=DEFAULT_TRIALS)
        common.add_argument('--seed', type=int, default=DEFAULT_SEED)
        common.add_argument('--out', help="CSV output path, '-' for stdout")
        common.add_argument('--psd-tol', dest='psd_tol', type=float)
        common.add_argument('--cutoff', type=float)
        common.add_argument('--ci-level', dest='ci_level', type=float)
        common.add_argument('--tail-fraction', dest='tail_fraction', type=float)
        common.add_argument('--workers', type=int)
        common.add_argument('--force-simulation', dest='force_simulation', action='store_true', default=None)
        common.add_argument('--verbose', action='store_true')

        commands.add_parser(self.BOUND, parents=[common], help='ratio sequence and final estimate')
        verify = commands.add_parser(self.VERIFY, parents=[common], help='property checks')
        verify.add_argument('--gram', dest='gram_path', help='Gram CSV instead of a model')
        commands.add_parser(self.SIMULATE, parents=[common], help='convergence CSV and verdict')
        commands.add_parser(self.GRAM, parents=[common], help='Gram data CSV and PSD verdict')

    def parse(self, argv: Optional[Sequence[str]] = None):
        self.args = self.parser.parse_args(argv)

    def get_command(self) -> str:
        return self.args.command

    def get_usage(self) -> str:
        return self.parser.format_usage()

    def get_help(self) -> str:
        return self.parser.format_help()

    def get_settings(self) -> dict:
        return {
            'psd_tol': self.args.psd_tol,
            'cutoff': self.args.cutoff,
            'ci_level': self.args.ci_level,
            'tail_fraction': self.args.tail_fraction,
            'workers': self.args.workers,
            'force_simulation': self.args.force_simulation,
        }

    def get_config(self) -> CliConfig:
        args = self.args
        gram_path = getattr(args, 'gram_path', None)
        if (args.model_path is None) == (gram_path is None):
            self.parser.error('exactly one of --model or --gram is required')
        if gram_path is None and args.n is None:
            self.parser.error(f'--n is required for {args.command}')
        if args.n is not None and args.n < 1:
            self.parser.error('--n must be at least 1')
        if args.s < 1 or (args.n is not None and args.s > args.n):
            self.parser.error('--s must lie in 1..n')
        if args.trials < 1:
            self.parser.error('--trials must be positive')
        try:
            settings = BoundSettings.from_settings_dict(self.get_settings())
        except ValueError as ex:
            self.parser.error(str(ex))
        return CliConfig(command=args.command, model_path=args.model_path, gram_path=gram_path,
                         weights=args.weights, n=args.n, s=args.s, trials=args.trials, seed=args.seed,
                         out=args.out, settings=settings, verbose=args.verbose)


def parse_weights(text: str) -> WeightScheme:
    """unit, inverse, optimal or file:<path> holding a JSON array or {"periodic": [...]}."""
    named = {
        'unit': WeightScheme.unit,
        'inverse': WeightScheme.inverse_probability,
        'optimal': WeightScheme.optimal,
    }
    if text in named:
        return named[text]()
    if not text.startswith('file:'):
        raise WeightSpecError(f'unknown weight scheme "{text}", expected unit|inverse|optimal|file:<path>')

    file_path = text[len('file:'):]
    try:
        with open(file_path, 'r', encoding='utf-8') as f:
            spec = json.load(f)
    except json.JSONDecodeError as ex:
        raise WeightSpecError(f'{file_path}: invalid JSON ({ex.msg}, line {ex.lineno})') from ex
    except OSError as ex:
        raise WeightSpecError(f'cannot read "{file_path}": {ex.strerror}') from ex

    periodic = isinstance(spec, dict)
    if periodic:
        if set(spec) != {'periodic'}:
            raise WeightSpecError(f'{file_path}: weight object needs exactly the key "periodic"')
        spec = spec['periodic']
    if not isinstance(spec, list) or not spec:
        raise WeightSpecError(f'{file_path}: weights must be a non-empty JSON array')
    for k, x in enumerate(spec):
        if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
            raise WeightSpecError(f'{file_path}: weight [{k}] is not a finite number')
    if periodic:
        return WeightScheme.periodic_pattern(spec)
    return WeightScheme.explicit(spec)


def _check_weight_length(scheme: WeightScheme, n: int):
    if scheme.variant == WeightVariant.EXPLICIT and not scheme.periodic and len(scheme.weights) < n:
        raise WeightSpecError(f'weight file has {len(scheme.weights)} weights but n = {n}')


@contextlib.contextmanager
def _csv_target(out: Optional[str], stream: TextIO):
    if out is None or out == '-':
        yield stream
    else:
        with open(out, 'w', encoding='utf-8', newline='') as f:
            yield f


def _fmt(x: float) -> str:
    return 'undefined' if math.isnan(x) else f'{x:.12g}'


def _header(cfg: CliConfig, source: str, scheme: Optional[WeightScheme], report: TextIO):
    print(f'{PROGRAM} {cfg.command}', file=report)
    print(f'  seed:            {cfg.seed}', file=report)
    print(f'  source:          {source}', file=report)
    if scheme is not None:
        print(f'  weights:         {scheme.describe()}', file=report)
    if cfg.n is not None:
        print(f'  n:               {cfg.n}', file=report)


# ------------------------------------------------------------------------------------------------
# Commands
# ------------------------------------------------------------------------------------------------
def cmd_bound(cfg: CliConfig, stream: TextIO = sys.stdout, err: TextIO = sys.stderr) -> int:
    scheme = parse_weights(cfg.weights)
    _check_weight_length(scheme, cfg.n)
    model = event_models.load_model(cfg.model_path)
    g = event_models.gram(model, cfg.n, cfg.settings.max_dense_horizon)
    report = ratio_sequence(g, scheme, cfg.settings)

    to_stdout = cfg.out == '-'
    out = err if to_stdout else stream
    _header(cfg, model.describe(), scheme, out)
    value = report.ratio_at(cfg.n)
    print(f'  ratio(n):        {_fmt(value)}', file=out)
    print(f'  final_estimate:  {_fmt(report.final_estimate)}', file=out)
    tail = ', '.join(_fmt(x) for x in report.running_max[-RUNNING_MAX_TAIL:])
    print(f'  running_max:     ... {tail}', file=out)
    print(f'  diverging:       {"yes" if report.diverging_flag else "no"} '
          f'(S_n = {_fmt(float(report.partial_sums[-1]))})', file=out)
    print(f'  diagonal_share:  {_fmt(report.diagonal_share)}', file=out)
    shifted = shifted_ratio(g, report.weights, cfg.s, cfg.n, cfg.settings.denominator_guard)
    print(f'  shifted(s={cfg.s}):    {_fmt(shifted)}', file=out)
    note = convergent_case_note(g, cfg.settings.divergence_margin)
    if note:
        print(f'  note:            {note}', file=out)

    if cfg.out is not None:
        with _csv_target(cfg.out, stream) as f:
            report.write_csv(f)

    if math.isnan(value):
        print(f'ratio undefined at n={cfg.n}: w\'Mw = {report.denominators[-1]!r} is at or below the guard',
              file=err)
        return EXIT_UNDEFINED
    return EXIT_OK


def _verify_inputs(cfg: CliConfig):
    if cfg.gram_path is not None:
        try:
            with open(cfg.gram_path, 'r', encoding='utf-8', newline='') as f:
                g = read_gram_csv(f)
        except OSError as ex:
            raise ModelSpecError(f'cannot read "{cfg.gram_path}": {ex.strerror}') from ex
        if cfg.n is not None and cfg.n < g.n:
            g = GramData.from_matrix(g.p[:cfg.n], g.matrix(cfg.n, cfg.settings.max_dense_horizon))
        elif cfg.n is not None and cfg.n > g.n:
            raise PreconditionError(f'Gram CSV holds {g.n} events but n = {cfg.n}')
        return g, None, f'gram csv "{cfg.gram_path}"'

    model = event_models.load_model(cfg.model_path)
    g = event_models.gram(model, cfg.n, cfg.settings.max_dense_horizon)
    unions = None
    if not cfg.settings.force_simulation:
        unions = [simulate.exact_estimate(model, 1, n, cfg.seed, cfg.settings.ci_level)
                  for n in range(1, cfg.n + 1)]
        if any(u is None for u in unions):
            unions = None
    if unions is None:
        unions = simulate.estimate_union_curve(model, 1, range(1, cfg.n + 1), cfg.trials, cfg.seed,
                                               cfg.settings)
    return g, unions, model.describe()


def cmd_verify(cfg: CliConfig, stream: TextIO = sys.stdout, err: TextIO = sys.stderr) -> int:
    scheme = parse_weights(cfg.weights)
    g, unions, source = _verify_inputs(cfg)
    _check_weight_length(scheme, g.n)
    w = scheme.resolve(g, g.n, cfg.settings)

    _header(cfg, source, scheme, stream)
    results = run_property_suite(g, w, unions, cfg.settings)
    for status_dic in results:
        print(f'{"PASS" if status_dic["status"] else "FAIL"}  {status_dic["msg"]}', file=stream)
    failures = sum(not status_dic['status'] for status_dic in results)
    print(f'{len(results) - failures} passed, {failures} failed', file=stream)
    return EXIT_OK if failures == 0 else EXIT_FAILURE


def cmd_simulate(cfg: CliConfig, stream: TextIO = sys.stdout, err: TextIO = sys.stderr) -> int:
    scheme = parse_weights(cfg.weights)
    _check_weight_length(scheme, cfg.n)
    model = event_models.load_model(cfg.model_path)
    grid = simulate.geometric_grid(cfg.n, GRID_POINTS, start=cfg.s)
    rows = simulate.convergence_experiment(model, scheme, grid, cfg.trials, cfg.seed, cfg.settings, s=cfg.s)
    with _csv_target(cfg.out, stream) as f:
        simulate.write_convergence_csv(rows, f)

    validation = simulate.validate_bound(model, scheme, cfg.n, cfg.trials, cfg.seed, cfg.settings)
    out = err if cfg.out is None or cfg.out == '-' else stream
    _header(cfg, model.describe(), scheme, out)
    print(f'  bound:           {_fmt(validation.bound_value)}', file=out)
    if validation.estimate is not None:
        estimate = validation.estimate
        print(f'  union:           {_fmt(estimate.estimate)} [{_fmt(estimate.ci_low)}, {_fmt(estimate.ci_high)}] '
              f'({estimate.source}, {estimate.trials} trials)', file=out)
        print(f'  slack:           {_fmt(validation.slack)}', file=out)
    print(f'  verdict:         {validation.verdict.value}', file=out)

    if validation.verdict == simulate.Verdict.VIOLATED:
        return EXIT_FAILURE
    if validation.verdict == simulate.Verdict.UNDEFINED:
        return EXIT_UNDEFINED
    return EXIT_OK


def cmd_gram(cfg: CliConfig, stream: TextIO = sys.stdout, err: TextIO = sys.stderr) -> int:
    model = event_models.load_model(cfg.model_path)
    g = event_models.gram(model, cfg.n, cfg.settings.max_dense_horizon)
    M = g.matrix(limit=cfg.settings.max_dense_horizon)
    with _csv_target(cfg.out, stream) as f:
        write_gram_csv(g, f, cfg.settings.max_dense_horizon)

    verdict = check_psd(M, cfg.settings.psd_tol)
    out = err if cfg.out is None or cfg.out == '-' else stream
    _header(cfg, model.describe(), None, out)
    print(f'  psd:             {"pass" if verdict.passed else "fail"} '
          f'(min eigenvalue {verdict.min_eigenvalue:.6g})', file=out)
    return EXIT_OK if verdict.passed else EXIT_FAILURE


COMMANDS = {
    BoundArguments.BOUND: cmd_bound,
    BoundArguments.VERIFY: cmd_verify,
    BoundArguments.SIMULATE: cmd_simulate,
    BoundArguments.GRAM: cmd_gram,
}


def run(argv: Optional[List[str]] = None, stream: TextIO = sys.stdout, err: TextIO = sys.stderr) -> int:
    args = BoundArguments()
    try:
        args.parse(argv)
        cfg = args.get_config()
    except SystemExit as ex:
        return EXIT_OK if ex.code in (0, None) else EXIT_PARSE

    if cfg.verbose:
        boundlogging.config(logging.DEBUG)
    logger.debug('run() command=%s config=%s', cfg.command, cfg)

    try:
        return COMMANDS[cfg.command](cfg, stream, err)
    except (ModelSpecError, WeightSpecError, SizeGuardError) as ex:
        logger.debug('run() %s', type(ex).__name__)
        print(f'error: {ex}', file=err)
        return EXIT_PARSE
    except (PreconditionError, DegenerateGramError) as ex:
        print(f'error: {ex}', file=err)
        return EXIT_UNDEFINED
