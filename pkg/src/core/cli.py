"""
Toeplitz GOF Command Line
=========================

Subcommands for calibration, single tests, lag selection, closed-form
thresholds, every Monte Carlo scenario and the JSON service. CSV goes to
stdout or --out; logs go to stderr and the log file.

Exit codes: 0 success, 1 configuration or parameter error, 2 runtime failure.
"""

import argparse
import json
import logging
import math
import os
import sys
from typing import Any, Dict, List, Optional

import pandas as pd

from src.core.config import ExperimentConfig, configure_logging, default_horizon, default_seed, default_workers
from src.core.harness import ResultTable, calibration_stream, run_experiment
from src.toeplitz_testing.concentration import (
    THRESHOLD_KINDS,
    ThresholdSpec,
    risk_bound,
    selector_threshold,
    separation_radius,
    theoretical_threshold,
)
from src.toeplitz_testing.errors import ConfigError, InvalidParameterError
from src.toeplitz_testing.estimator import SampleSet, lag_functionals
from src.toeplitz_testing.procedures import (
    AGGREGATE_MODES,
    THRESHOLD_SOURCES,
    aggregate_hs,
    calibrate_aggregate,
    calibrate_threshold,
    resolve_threshold,
    run_test,
    select_from_stats,
)

logger = logging.getLogger(__name__)

SCENARIO_COMMANDS = {
    "power-curve": "power_curve",
    "type1": "type1",
    "selection-risk": "selection_risk",
    "ma-power": "ma_power",
    "verify-bounds": "verify_concentration",
    "ms-vs-hs": "ms_vs_hs",
    "risk-check": "risk_check",
}


class _Parser(argparse.ArgumentParser):
    """argparse reports usage errors as ConfigError instead of exiting with status 2"""

    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def _int_list(text: str) -> List[int]:
    try:
        return [int(item) for item in text.split(",") if item.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{text}'")


def _float_list(text: str) -> List[float]:
    try:
        return [float(item) for item in text.split(",") if item.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{text}'")


def _str_list(text: str) -> List[str]:
    return [item.strip() for item in text.split(",") if item.strip()]


def read_samples(path: str) -> SampleSet:
    """One observation per row; a header row is detected by its non-numeric cells"""
    try:
        frame = pd.read_csv(path, header=None, dtype=str, skipinitialspace=True)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ConfigError(f"cannot read samples from {path}: {e}")
    if pd.to_numeric(frame.iloc[0], errors="coerce").isna().any():
        frame = frame.iloc[1:]
    values = frame.apply(pd.to_numeric, errors="coerce")
    if values.empty or values.isna().any().any():
        raise ConfigError(f"samples in {path} must be numeric with one observation per row")
    return SampleSet(values.to_numpy(dtype=float))


def _emit(text: str, out: Optional[str]) -> None:
    if out is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        with open(out, "w", encoding="utf-8", newline="") as f:
            f.write(text if text.endswith("\n") else text + "\n")
        logger.info(f"Wrote output to {out}")


def _add_run_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None, help="master seed (default: TOEPLITZ_GOF_SEED)")
    parser.add_argument("--workers", type=int, default=None, help="parallel workers, -1 for all CPUs")
    parser.add_argument("--out", default=None, help="write output here instead of stdout")


def _add_experiment_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default=None, help="JSON ExperimentConfig document")
    parser.add_argument("--n", type=int)
    parser.add_argument("--p", type=int)
    parser.add_argument("--S", type=int)
    parser.add_argument("--s", type=int)
    parser.add_argument("--s-rule", dest="s_rule", choices=["half", "minus_one"])
    parser.add_argument("--alpha", type=float)
    parser.add_argument("--R", type=int)
    parser.add_argument("--calibration-R", dest="calibration_R", type=int)
    parser.add_argument("--kinds", type=_str_list)
    parser.add_argument("--threshold-source", dest="threshold_source", choices=THRESHOLD_SOURCES)
    parser.add_argument("--placement", choices=["random", "near_diagonal", "far"])
    parser.add_argument("--sigma-grid", dest="sigma_grid", type=_float_list)
    parser.add_argument("--phi-grid", dest="phi_grid", type=_float_list)
    parser.add_argument("--n-values", dest="n_values", type=_int_list)
    parser.add_argument("--p-values", dest="p_values", type=_int_list)
    parser.add_argument("--s-values", dest="s_values", type=_int_list)
    parser.add_argument("--s-grid", dest="s_grid", type=_int_list)
    parser.add_argument("--aggregate-mode", dest="aggregate_mode", choices=AGGREGATE_MODES)
    parser.add_argument("--u", type=float)
    parser.add_argument("--K", type=float)
    parser.add_argument("--sigma-factor", dest="sigma_factor", type=float)
    parser.add_argument("--u-grid", dest="u_grid", type=_float_list)
    parser.add_argument("--w", type=int)
    parser.add_argument("--grid-points", dest="grid_points", type=int)
    parser.add_argument("--one-sided", dest="one_sided", action="store_const", const=True, default=None)
    parser.add_argument("--two-sided", dest="two_sided", action="store_const", const=True, default=None)
    _add_run_options(parser)


_OVERRIDE_KEYS = (
    "n", "p", "S", "s", "s_rule", "alpha", "R", "calibration_R", "kinds", "threshold_source",
    "placement", "sigma_grid", "phi_grid", "n_values", "p_values", "s_values", "s_grid",
    "aggregate_mode", "u", "K", "sigma_factor", "u_grid", "w", "grid_points", "one_sided",
    "two_sided", "workers",
)


def build_config(args: argparse.Namespace, scenario: str) -> ExperimentConfig:
    """Config file values first, then flags; the subcommand fixes the scenario"""
    document: Dict[str, Any] = {}
    if args.config:
        try:
            with open(args.config, "r", encoding="utf-8") as f:
                document = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot load configuration {args.config}: {e}")
        if not isinstance(document, dict):
            raise ConfigError("configuration must be a JSON object")
    document["scenario"] = scenario
    overrides = {key: getattr(args, key) for key in _OVERRIDE_KEYS}
    # a flag may move p below a file-level S; validate only the merged document
    merged = {**document, **{key: value for key, value in overrides.items() if value is not None}}
    if args.seed is not None:
        merged["master_seed"] = args.seed
    return ExperimentConfig.from_dict(merged)


def _horizon(args: argparse.Namespace, p: int) -> int:
    return args.S if args.S is not None else default_horizon(p)


def cmd_experiment(args: argparse.Namespace) -> int:
    config = build_config(args, SCENARIO_COMMANDS[args.command])
    table = run_experiment(config)
    _emit(table.to_csv(), args.out)
    return 0


def cmd_calibrate(args: argparse.Namespace) -> int:
    S = _horizon(args, args.p)
    seed = args.seed if args.seed is not None else default_seed()
    workers = args.workers if args.workers is not None else default_workers()
    stream = calibration_stream(seed, args.n, args.p, S)
    if args.s_grid:
        thresholds = calibrate_aggregate(
            args.n, args.p, S, args.s_grid, args.alpha, args.R, stream, args.aggregate_mode, workers, args.kind
        )
        table = ResultTable(["s", "threshold"])
        for s, threshold in zip(args.s_grid, thresholds):
            table.add(s=s, threshold=threshold)
        _emit(table.to_csv(), args.out)
        return 0
    threshold = calibrate_threshold(args.kind, args.n, args.p, S, args.s, args.alpha, args.R, stream, workers)
    _emit(f"{threshold:.15g}", args.out)
    return 0


def cmd_test(args: argparse.Namespace) -> int:
    samples = read_samples(args.data)
    S = _horizon(args, samples.p)
    seed = args.seed if args.seed is not None else default_seed()
    workers = args.workers if args.workers is not None else default_workers()
    stream = calibration_stream(seed, samples.n, samples.p, S)
    if args.s_grid:
        if args.threshold_source == "calibrated":
            thresholds = calibrate_aggregate(
                samples.n, samples.p, S, args.s_grid, args.alpha, args.R, stream,
                args.aggregate_mode, workers, args.kind,
            )
        else:
            thresholds = [
                theoretical_threshold(ThresholdSpec(args.kind, samples.n, samples.p, S, s, args.u))
                for s in args.s_grid
            ]
        outcome = aggregate_hs(samples, S, args.s_grid, thresholds, args.kind, args.threshold_source)
    else:
        if args.threshold is not None:
            threshold, source = args.threshold, "given"
            logger.info(f"Using the given threshold {threshold}")
        else:
            source = args.threshold_source
            threshold = resolve_threshold(
                args.kind, samples.n, samples.p, S, args.s, source, args.u, args.alpha, args.R, stream, workers
            )
        outcome = run_test(args.kind, samples, S, threshold, args.s, source)
    _emit(outcome.summary(), args.out)
    return 0


def cmd_select(args: argparse.Namespace) -> int:
    samples = read_samples(args.data)
    S = _horizon(args, samples.p)
    tau = args.tau
    if tau is None:
        if args.s is None:
            raise ConfigError("select needs --tau or the sparsity --s to derive tau")
        tau = selector_threshold(samples.n, samples.p, S, args.s, args.u)
    stats = lag_functionals(samples, S)
    result = select_from_stats(stats, tau, args.one_sided)
    logger.info(f"Selected lags {result.selected_lags()} at tau={tau:.6g}")
    table = ResultTable(["lag", "xi", "selected"])
    for lag, (xi, selected) in enumerate(zip(stats.xi, result.eta_hat), start=1):
        table.add(lag=lag, xi=float(xi), selected=int(selected))
    _emit(table.to_csv(), args.out)
    return 0


def cmd_thresholds(args: argparse.Namespace) -> int:
    spec = ThresholdSpec(kind=args.kind, n=args.n, p=args.p, S=args.S, s=args.s, u=args.u, K=args.K)
    threshold = theoretical_threshold(spec)
    if not args.table:
        _emit(f"{threshold:.6f}", args.out)
        return 0
    table = ResultTable(["kind", "u", "threshold", "separation_radius", "risk_bound"])
    radius = separation_radius(spec) if spec.s is not None else math.nan
    bound = risk_bound(spec, one_sided_selector=args.one_sided)
    table.add(kind=spec.kind, u=spec.u, threshold=threshold, separation_radius=radius, risk_bound=bound)
    _emit(table.to_csv(), args.out)
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    from src.core.main import create_app

    host = args.host or os.getenv("HOST", "0.0.0.0")
    port = args.port or int(os.getenv("PORT", "5000"))
    debug = os.getenv("DEBUG", "false").lower() == "true"
    logger.info(f"Starting toeplitz-gof service on {host}:{port}")
    create_app().run(host=host, port=port, debug=debug)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="toeplitz-gof", description="Sparse Toeplitz covariance goodness-of-fit tests")
    parser.add_argument("--log-level", default=None, help="overrides LOG_LEVEL")
    commands = parser.add_subparsers(dest="command", parser_class=_Parser)
    commands.required = True

    calibrate = commands.add_parser("calibrate", help="null-calibrated threshold of one test")
    calibrate.add_argument("--kind", required=True)
    calibrate.add_argument("--n", type=int, required=True)
    calibrate.add_argument("--p", type=int, required=True)
    calibrate.add_argument("--S", type=int)
    calibrate.add_argument("--s", type=int)
    calibrate.add_argument("--s-grid", dest="s_grid", type=_int_list)
    calibrate.add_argument("--aggregate-mode", dest="aggregate_mode", choices=AGGREGATE_MODES, default="bonferroni")
    calibrate.add_argument("--alpha", type=float, default=0.1)
    calibrate.add_argument("--R", type=int, default=5000)
    _add_run_options(calibrate)
    calibrate.set_defaults(handler=cmd_calibrate)

    test = commands.add_parser("test", help="run one test on a CSV of samples")
    test.add_argument("--kind", required=True)
    test.add_argument("--data", required=True)
    test.add_argument("--S", type=int)
    test.add_argument("--s", type=int)
    test.add_argument("--s-grid", dest="s_grid", type=_int_list, help="aggregate the scan test over these s")
    test.add_argument("--aggregate-mode", dest="aggregate_mode", choices=AGGREGATE_MODES, default="bonferroni")
    test.add_argument("--threshold", type=float, help="explicit threshold, skips calibration")
    test.add_argument("--threshold-source", dest="threshold_source", choices=THRESHOLD_SOURCES, default="theoretical")
    test.add_argument("--u", type=float)
    test.add_argument("--alpha", type=float, default=0.1)
    test.add_argument("--R", type=int, default=5000)
    _add_run_options(test)
    test.set_defaults(handler=cmd_test)

    select = commands.add_parser("select", help="thresholding lag selector on a CSV of samples")
    select.add_argument("--data", required=True)
    select.add_argument("--S", type=int)
    select.add_argument("--s", type=int)
    select.add_argument("--tau", type=float)
    select.add_argument("--u", type=float, default=2.0)
    select.add_argument("--one-sided", dest="one_sided", action="store_true")
    select.add_argument("--out", default=None)
    select.set_defaults(handler=cmd_select)

    thresholds = commands.add_parser("thresholds", help="closed-form threshold of a test or the selector")
    thresholds.add_argument("--kind", required=True, choices=THRESHOLD_KINDS)
    thresholds.add_argument("--n", type=int, required=True)
    thresholds.add_argument("--p", type=int, required=True)
    thresholds.add_argument("--S", type=int, required=True)
    thresholds.add_argument("--s", type=int)
    thresholds.add_argument("--u", type=float)
    thresholds.add_argument("--K", type=float, default=0.5)
    thresholds.add_argument("--one-sided", dest="one_sided", action="store_true", help="one-sided selector bound")
    thresholds.add_argument("--table", action="store_true", help="CSV with separation radius and risk bound")
    thresholds.add_argument("--out", default=None)
    thresholds.set_defaults(handler=cmd_thresholds)

    for command, scenario in SCENARIO_COMMANDS.items():
        experiment = commands.add_parser(command, help=f"Monte Carlo scenario '{scenario}'")
        _add_experiment_options(experiment)
        experiment.set_defaults(handler=cmd_experiment)

    serve = commands.add_parser("serve", help="start the JSON service")
    serve.add_argument("--host", default=None)
    serve.add_argument("--port", type=int, default=None)
    serve.set_defaults(handler=cmd_serve)
    return parser


def cli_main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(sys.argv[1:] if argv is None else argv)
    except ConfigError as e:
        sys.stderr.write(f"{e}\n")
        return 1
    except SystemExit as e:
        # --help
        return e.code if isinstance(e.code, int) else 0
    try:
        configure_logging(args.log_level)
    except ConfigError as e:
        sys.stderr.write(f"{e}\n")
        return 1
    try:
        return args.handler(args)
    except (ConfigError, InvalidParameterError) as e:
        logger.error(f"Invalid input: {e}")
        return 1
    except Exception as e:
        logger.error(f"Run failed: {e}")
        return 2


if __name__ == "__main__":
    sys.exit(cli_main())
