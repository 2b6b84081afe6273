#!/usr/bin/env python3
"""
oedsel command line
Runs greedy observation-selection experiments and the self-checks behind them.

    oedsel run --config oedsel.yaml --selector lsig,gauss,nmc,random --k 10 --trials 10 --desk
    oedsel evaluate --model epidemic --design "3;7;12" --nmc-inner 10000 --nmc-outer 1000
    oedsel check-gradients --model spatial_poisson
    oedsel bench --grid n=20,40,80 k=2,4,8
    oedsel spectrum --model linear_gaussian
    oedsel trajectory --model epidemic --rates 0.5,1,2
"""

import argparse
import json
import logging
import os
import sys
from typing import Any, Dict, List, Optional, Sequence, Tuple

from dotenv import load_dotenv

load_dotenv()

from lib.errors import AcceptanceCheckError, ConfigurationError, OedselError  # noqa: E402
from lib.harness import ExperimentRunner, check_gradients, load_config, run_bench, spectrum, trajectory  # noqa: E402
from lib.logging_setup import configure_logging  # noqa: E402
from lib.mi import mi_closed_form, mi_nmc  # noqa: E402
from lib.models import build_model  # noqa: E402
from lib.numerics import Design  # noqa: E402
from lib.op_stats import SelectionStats  # noqa: E402

SERVICE_NAME = os.getenv('OEDSEL_SERVICE_NAME', 'oedsel')

logger = logging.getLogger(SERVICE_NAME)


def _model_overrides(args) -> Dict[str, Any]:
    return {'name': args.model} if getattr(args, 'model', None) else {}


def run_command(args) -> int:
    overrides = {
        'models': _model_overrides(args),
        'score': {'M': args.M, 'm': args.m, 'workers': args.score_workers},
        'mi': {'eval_inner': args.eval_inner, 'eval_outer': args.eval_outer,
               'recycle_inner': True if args.recycle_inner else None},
        'selectors': {'names': args.selector, 'k_max': args.k, 'nmc_inner': args.nmc_inner,
                      'nmc_outer': args.nmc_outer,
                      'exact_moments': False if args.sample_moments else None},
        'harness': {'trials': args.trials, 'seed': args.seed, 'output': args.out, 'workers': args.workers,
                    'deterministic': True if args.deterministic else None, 'desk': True if args.desk else None},
    }
    config = load_config(args.config, overrides)

    stats = SelectionStats(SERVICE_NAME)
    metrics_port = args.metrics_port or os.getenv('OEDSEL_METRICS_PORT')
    if metrics_port:
        stats.start_metrics_server(int(metrics_port))

    runner = ExperimentRunner(config, stats)
    result = runner.run()
    runner.writer.flush(metadata=config.as_dict())
    if result.failures:
        logger.error(f"{len(result.failures)} selector runs failed; see {config.output}")
    return result.exit_code


def evaluate_command(args) -> int:
    config = load_config(args.config, {'models': _model_overrides(args)})
    model = build_model(config.model)
    try:
        design = Design.parse(args.design, model.n)
    except (ValueError, IndexError) as e:
        raise ConfigurationError(str(e)) from None

    use_nmc = args.estimator == 'nmc' or (args.estimator == 'auto' and not config.uses_closed_form)
    if use_nmc:
        inner = args.nmc_inner or config.eval_inner
        outer = args.nmc_outer or config.eval_outer
        seed = config.seed if args.seed is None else args.seed
        estimate = mi_nmc(model, design, inner, outer, seed, args.recycle_inner)
    else:
        estimate = mi_closed_form(model, design)
    print(json.dumps({
        'model': model.name,
        'design': design.to_string(),
        'value': estimate.value,
        'stderr': estimate.stderr,
        'estimator': estimate.estimator,
        'budgets': list(estimate.budgets) if estimate.budgets else None,
    }, sort_keys=True))
    return 0


def check_gradients_command(args) -> int:
    config = load_config(args.config, {'models': _model_overrides(args)})
    report = check_gradients(config.model, args.points, args.seed, corrupt=args.corrupt)
    print(json.dumps(report.as_dict(), sort_keys=True))
    if not report.passed:
        raise AcceptanceCheckError(
            f"Gradient check failed for {report.model}: max relative error {report.max_rel_err:.3e}"
        )
    return 0


def parse_grid(items: Sequence[str]) -> Tuple[List[int], List[int]]:
    """Parse ['n=20,40,80', 'k=2,4,8'] into the two value lists"""
    grid = {'n': [20, 40, 80], 'k': [2, 4, 8]}
    for item in items or ():
        key, _, values = item.partition('=')
        if key not in grid or not values:
            raise ConfigurationError(f"Invalid grid entry '{item}', expected n=... or k=...")
        try:
            grid[key] = [int(v) for v in values.split(',') if v]
        except ValueError:
            raise ConfigurationError(f"Invalid grid values in '{item}'") from None
    if any(k > n for n in grid['n'] for k in grid['k']):
        raise ConfigurationError(f"Every k must be <= every n, got n={grid['n']}, k={grid['k']}")
    return grid['n'], grid['k']


def bench_command(args) -> int:
    ns, ks = parse_grid(args.grid)
    report = run_bench(ns, ks, args.seed)
    print(json.dumps(report.as_dict(), sort_keys=True, indent=2))
    if not report.passed:
        raise AcceptanceCheckError("Operation counts do not match the expected complexity")
    return 0


def spectrum_command(args) -> int:
    config = load_config(args.config, {'models': _model_overrides(args)})
    print(json.dumps(spectrum(config.model), sort_keys=True))
    return 0


def trajectory_command(args) -> int:
    config = load_config(args.config, {'models': _model_overrides(args)})
    rates = None
    if args.rates:
        try:
            rates = [float(r) for r in args.rates.split(',') if r.strip()]
        except ValueError:
            raise ConfigurationError(f"Invalid rates '{args.rates}', expected comma-separated numbers") from None
        if not rates or any(r <= 0 for r in rates):
            raise ConfigurationError(f"Rates must be positive, got '{args.rates}'")
    print(json.dumps(trajectory(config.model, rates), sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='oedsel', description="Greedy Bayesian optimal experimental design")
    parser.add_argument('--log-level', default=None, help="Overrides OEDSEL_LOG_LEVEL")
    parser.add_argument('--log-format', choices=['text', 'json'], default=None, help="Overrides OEDSEL_LOG_FORMAT")
    subparsers = parser.add_subparsers(dest='command', required=True)

    def common(sub):
        sub.add_argument('--config', default=None, help="YAML experiment configuration")
        sub.add_argument('--model', choices=['linear_gaussian', 'epidemic', 'spatial_poisson'], default=None)

    run = subparsers.add_parser('run', help="Run a multi-trial selection experiment")
    common(run)
    run.add_argument('--selector', default=None, help="Comma-separated: lsig,gauss,nmc,random,exhaustive")
    run.add_argument('--k', type=int, default=None, help="Largest design size")
    run.add_argument('--trials', type=int, default=None)
    run.add_argument('--seed', type=int, default=None)
    run.add_argument('--out', default=None, help="Result CSV path")
    run.add_argument('--M', type=int, default=None, help="Joint samples for LSIG and Gaussian-greedy")
    run.add_argument('--m', type=int, default=None, help="Prior-bank size for the score estimate")
    run.add_argument('--nmc-inner', type=int, default=None, help="NMC-greedy inner budget")
    run.add_argument('--nmc-outer', type=int, default=None, help="NMC-greedy outer budget")
    run.add_argument('--eval-inner', type=int, default=None, help="Evaluation NMC inner budget")
    run.add_argument('--eval-outer', type=int, default=None, help="Evaluation NMC outer budget")
    run.add_argument('--recycle-inner', action='store_true', help="Share one inner prior bank in NMC")
    run.add_argument('--sample-moments', action='store_true',
                     help="Estimate moments from samples even for linear_gaussian")
    run.add_argument('--workers', type=int, default=None, help="Trials run in parallel")
    run.add_argument('--score-workers', type=int, default=None, help="Threads for the score matrix")
    run.add_argument('--desk', action='store_true', help="Desk-scale NMC budgets")
    run.add_argument('--deterministic', action='store_true', help="Single-threaded, byte-identical output")
    run.add_argument('--metrics-port', type=int, default=None, help="Expose Prometheus metrics")
    run.set_defaults(handler=run_command)

    evaluate = subparsers.add_parser('evaluate', help="Mutual information of one design")
    common(evaluate)
    evaluate.add_argument('--design', required=True, help="Semicolon-joined indices, e.g. '3;7;12'")
    evaluate.add_argument('--estimator', choices=['auto', 'closed_form', 'nmc'], default='auto')
    evaluate.add_argument('--nmc-inner', type=int, default=None)
    evaluate.add_argument('--nmc-outer', type=int, default=None)
    evaluate.add_argument('--recycle-inner', action='store_true')
    evaluate.add_argument('--seed', type=int, default=None)
    evaluate.set_defaults(handler=evaluate_command)

    gradients = subparsers.add_parser('check-gradients', help="Analytic vs finite-difference gradients")
    common(gradients)
    gradients.add_argument('--points', type=int, default=200)
    gradients.add_argument('--seed', type=int, default=0)
    gradients.add_argument('--corrupt', action='store_true', help="Perturb the analytic gradient (must fail)")
    gradients.set_defaults(handler=check_gradients_command)

    bench = subparsers.add_parser('bench', help="Operation-count scaling report")
    bench.add_argument('--grid', nargs='*', default=None, help="n=20,40,80 k=2,4,8")
    bench.add_argument('--seed', type=int, default=0)
    bench.set_defaults(handler=bench_command)

    spectrum_parser = subparsers.add_parser('spectrum', help="Spectra of the linear-Gaussian model")
    common(spectrum_parser)
    spectrum_parser.set_defaults(handler=spectrum_command)

    trajectory_parser = subparsers.add_parser('trajectory', help="Expected epidemic counts over time")
    common(trajectory_parser)
    trajectory_parser.add_argument('--rates', default=None, help="Comma-separated infection rates")
    trajectory_parser.set_defaults(handler=trajectory_command)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point; returns the process exit code"""
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        configure_logging(args.log_level, args.log_format)
        logger.debug(f"Starting {SERVICE_NAME} {args.command}")
        return args.handler(args)
    except KeyboardInterrupt:
        logger.info("Interrupted")
        return 130
    except OedselError as e:
        logger.error(f"{type(e).__name__}: {str(e)}")
        return e.exit_code
    except OSError as e:
        logger.error(f"I/O error: {str(e)}")
        return 1
    except Exception as e:
        logger.error(f"Unexpected error: {str(e)}", exc_info=True)
        return 2


if __name__ == "__main__":
    sys.exit(main())
