"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 data error, 3 runtime failure.
Progress and diagnostics go to stderr; results go to files or stdout.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bandit import BanditConfig, explain, load_state, save_state
from .core import FeatureVector
from .dataset import build_replay, hardware_for, load_csv, load_hardware_csv, write_csv, write_hardware_csv
from .exceptions import BanditWareError, ChecksumMismatch, DataError, SchemaError
from .experiment import ExperimentConfig, linear_regression_baseline, load_report, run_repeated, run_simulation
from .synth import MATMUL_FEATURES, bench_matmul, load_scenario, matmul_hardware

log = logging.getLogger("banditware")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _non_negative_int(text):
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return value


def _non_negative_float(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not value >= 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return value


def _list_of(kind):
    def parse(text):
        try:
            items = [kind(t) for t in text.replace(" ", "").split(",") if t]
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad list {text!r}") from None
        if not items:
            raise argparse.ArgumentTypeError("list must not be empty")
        return items
    return parse


def _names(text):
    return [t.strip() for t in text.split(",") if t.strip()]


def _default_threads():
    try:
        return max(1, int(os.environ.get("BANDITWARE_THREADS", "1")))
    except ValueError:
        return 1


def _add_bandit_flags(p, rounds_default=50):
    g = p.add_argument_group("bandit")
    g.add_argument("--alpha", type=float, default=0.99, help="epsilon decay factor per round")
    g.add_argument("--epsilon0", type=float, default=1.0, help="initial exploration rate")
    g.add_argument("--tolerance-ratio", type=_non_negative_float, default=0.0,
                   help="relative slack t_r for tolerant selection")
    g.add_argument("--tolerance-seconds", type=_non_negative_float, default=0.0,
                   help="absolute slack t_s (seconds) for tolerant selection")
    g.add_argument("--ridge-lambda", type=_non_negative_float, default=1e-8,
                   help="ridge penalty on model weights")
    g = p.add_argument_group("experiment")
    g.add_argument("--rounds", type=_positive_int, default=rounds_default, help="rounds per simulation")
    g.add_argument("--sims", type=_positive_int, default=100, help="independent simulations")
    g.add_argument("--seed", type=_non_negative_int, default=0, help="master random seed")
    g.add_argument("--eval-tolerance-ratio", type=_non_negative_float, default=0.0,
                   help="relative slack when scoring accuracy")
    g.add_argument("--eval-tolerance-seconds", type=_non_negative_float, default=0.0,
                   help="absolute slack (seconds) when scoring accuracy")
    g.add_argument("--standardize", action="store_true", help="standardize features before learning")
    g.add_argument("--decisions", action="store_true", help="embed per-simulation decision logs in the report")
    g.add_argument("--threads", type=_positive_int, default=_default_threads(),
                   help="parallel simulations (falls back to $BANDITWARE_THREADS)")
    g.add_argument("--out", required=True, help="report JSON path")
    g.add_argument("--csv", default=None, help="also write the flat CSV export here")


def _add_data_flags(p):
    p.add_argument("--data", required=True, help="run trace CSV")
    p.add_argument("--features", required=True, type=_names, help="comma-separated feature columns")
    p.add_argument("--hardware-column", default="hardware", help="column holding the hardware id")
    p.add_argument("--runtime-column", default="runtime", help="column holding runtime in seconds")
    p.add_argument("--instance-column", default=None,
                   help="column grouping runs of one workflow instance (default: identical features)")


def build_parser():
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = _Parser(prog="banditware", description="Hardware recommendation with a contextual bandit.",
                     formatter_class=fmt, allow_abbrev=False)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-q", "--quiet", action="store_true", help="suppress progress on stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="replay simulations over a run trace CSV",
                       formatter_class=fmt, allow_abbrev=False)
    _add_data_flags(p)
    p.add_argument("--hardware", required=True, help="hardware sidecar CSV (id,cpus,memory_gb[,cost_weight])")
    p.add_argument("--keep-incomplete", action="store_true",
                   help="keep instances that lack some hardware (simulation fails if one is drawn)")
    p.add_argument("--model-out", default=None, help="save the final bandit state of simulation 0 here")
    _add_bandit_flags(p)

    p = sub.add_parser("synth", help="simulations on a synthetic linear scenario",
                       formatter_class=fmt, allow_abbrev=False)
    p.add_argument("--scenario", default=None, help="scenario INI file (default: bundled scenario)")
    p.add_argument("--noise", type=_non_negative_float, default=None,
                   help="override noise as a fraction of mean runtime")
    p.add_argument("--instances", type=_positive_int, default=None,
                   help="instances to materialize (default: from scenario)")
    p.add_argument("--data-out", default=None, help="write the materialized runs as a dataset CSV")
    p.add_argument("--hardware-out", default=None, help="write the scenario hardware sidecar CSV")
    _add_bandit_flags(p)

    p = sub.add_parser("bench-matmul", help="time tiled matrix squaring across worker counts",
                       formatter_class=fmt, allow_abbrev=False)
    p.add_argument("--sizes", type=_list_of(int), default=[100, 500, 1000], help="matrix sizes")
    p.add_argument("--sparsities", type=_list_of(float), default=[0.0], help="zero-cell ratios")
    p.add_argument("--min-values", type=_list_of(int), default=[0], help="minimum cell values")
    p.add_argument("--max-values", type=_list_of(int), default=[100], help="maximum cell values")
    p.add_argument("--workers", type=_list_of(int), default=[1, 2, 4], help="worker counts (one hardware id each)")
    p.add_argument("--reps", type=_positive_int, default=1, help="repetitions per grid cell")
    p.add_argument("--tile-size", type=_positive_int, default=64, help="output tile edge length")
    p.add_argument("--seed", type=_non_negative_int, default=0, help="random seed for matrices")
    p.add_argument("--min-size", type=_non_negative_int, default=None, help="keep only rows with size >= this")
    p.add_argument("--from-csv", default=None, help="filter an existing benchmark CSV instead of running")
    p.add_argument("--out", required=True, help="dataset CSV path")
    p.add_argument("--hardware-out", default=None, help="hardware sidecar CSV path")

    p = sub.add_parser("baseline", help="pooled linear-regression baseline on small samples",
                       formatter_class=fmt, allow_abbrev=False)
    _add_data_flags(p)
    p.add_argument("--samples", type=_positive_int, default=25, help="rows per model")
    p.add_argument("--models", type=_positive_int, default=100, help="number of models")
    p.add_argument("--seed", type=_non_negative_int, default=0, help="random seed")
    p.add_argument("--ridge-lambda", type=_non_negative_float, default=1e-8, help="ridge penalty on weights")
    p.add_argument("--out", required=True, help="stats JSON path")

    p = sub.add_parser("recommend", help="recommend hardware from a saved model",
                       formatter_class=fmt, allow_abbrev=False)
    p.add_argument("--model", required=True, help="saved bandit state JSON")
    p.add_argument("--features", required=True, nargs="+", metavar="NAME=VALUE", help="feature values")
    p.add_argument("--verbose", action="store_true", help="also print per-arm estimates")

    p = sub.add_parser("report", help="convert a report JSON into plot-ready CSV",
                       formatter_class=fmt, allow_abbrev=False)
    p.add_argument("--report", required=True, help="report JSON")
    p.add_argument("--metric", choices=["rmse", "accuracy"], default=None, help="keep only this metric")
    p.add_argument("--out", default=None, help="CSV path (default: stdout)")
    return parser


def _experiment_config(args) -> ExperimentConfig:
    try:
        bandit = BanditConfig(args.alpha, args.epsilon0, args.tolerance_ratio, args.tolerance_seconds,
                              args.ridge_lambda)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return ExperimentConfig(args.rounds, args.sims, args.seed, bandit, args.eval_tolerance_ratio,
                            args.eval_tolerance_seconds, args.standardize, args.decisions)


def _write_report(report, args, out):
    report.save(args.out)
    if args.csv:
        Path(args.csv).write_text(report.to_csv(), encoding="utf-8")
    r, a = report.final("rmse"), report.final("accuracy")
    print(f"full-fit rmse: {report.full_fit_rmse:.6g}", file=out)
    print(f"full-fit accuracy: {report.full_fit_accuracy:.4f}", file=out)
    print(f"round {r.round} rmse: {r.mean:.6g} +/- {r.sd:.6g}", file=out)
    print(f"round {a.round} accuracy: {a.mean:.4f} +/- {a.sd:.4f}", file=out)


def _require_file(path):
    if not Path(path).is_file():
        raise FileNotFoundError(f"no such file: {path}")


def cmd_simulate(args, out):
    _require_file(args.data)
    _require_file(args.hardware)
    config = _experiment_config(args)
    dataset = load_csv(args.data, args.features, args.hardware_column, args.runtime_column, args.instance_column)
    hardware = load_hardware_csv(args.hardware)
    ids = [h.id for h in hardware if h.id in dataset.hardware_ids]
    env = build_replay(dataset, not args.keep_incomplete, ids)
    hardware = hardware_for(env.hardware_ids, hardware)
    log.info("replaying %d instances on %d arms (%d dropped)", len(env), len(ids), env.n_dropped)
    report = run_repeated(env, config, hardware, args.threads,
                          {"features": list(args.features), "n_dropped": env.n_dropped})
    _write_report(report, args, out)
    if args.model_out:
        save_state(run_simulation(env, config, 0, hardware).final_state, args.model_out)


def _scenario_rng(seed):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(7,)))


def cmd_synth(args, out):
    config = _experiment_config(args)
    scenario = load_scenario(args.scenario)
    if args.noise is not None:
        scenario = scenario.with_noise(args.noise)
    dataset = scenario.dataset(_scenario_rng(args.seed), args.instances)
    env = build_replay(dataset, True, [h.id for h in scenario.hardware])
    if args.data_out:
        write_csv(dataset, args.data_out)
    if args.hardware_out:
        write_hardware_csv(scenario.hardware, args.hardware_out)
    report = run_repeated(env, config, scenario.hardware, args.threads,
                          {"features": list(scenario.feature_names), "noise_sd": [a.noise_sd for a in scenario.arms]})
    _write_report(report, args, out)


def cmd_bench_matmul(args, out):
    if args.from_csv:
        _require_file(args.from_csv)
        dataset = load_csv(args.from_csv, MATMUL_FEATURES, instance_column="instance_id")
        hardware = matmul_hardware(sorted(int(h[1:]) for h in dataset.hardware_ids))
    else:
        ranges = [(lo, hi) for lo in args.min_values for hi in args.max_values if lo <= hi]
        if not ranges:
            raise UsageError("no (min, max) value pair with min <= max")
        rng = np.random.default_rng(args.seed)
        dataset = bench_matmul(args.sizes, args.sparsities, ranges, args.workers, args.reps, rng,
                               args.tile_size, progress=log.info)
        hardware = matmul_hardware(args.workers)
    if args.min_size is not None:
        dataset = dataset.filter(lambda r: r.observation.features.values[0] >= args.min_size)
    write_csv(dataset, args.out)
    if args.hardware_out:
        write_hardware_csv(hardware, args.hardware_out)
    print(f"wrote {len(dataset)} rows to {args.out}", file=out)


def cmd_baseline(args, out):
    _require_file(args.data)
    dataset = load_csv(args.data, args.features, args.hardware_column, args.runtime_column, args.instance_column)
    stats = linear_regression_baseline(dataset, args.samples, args.models, np.random.default_rng(args.seed),
                                       args.ridge_lambda)
    Path(args.out).write_text(json.dumps(stats.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    s = stats.summary()
    print(f"rmse min {s['rmse']['min']:.6g} max {s['rmse']['max']:.6g} mean {s['rmse']['mean']:.6g} "
          f"range {s['rmse']['range']:.6g}", file=out)
    print(f"r2 min {s['r2']['min']:.6g} max {s['r2']['max']:.6g} mean {s['r2']['mean']:.6g} "
          f"range {s['r2']['range']:.6g}", file=out)


def _parse_feature_pairs(pairs, names):
    given = {}
    for item in pairs:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"feature {item!r} is not NAME=VALUE")
        try:
            given[key.strip()] = float(value)
        except ValueError:
            raise DataError(f"feature {key!r}: {value!r} is not a number") from None
    for name in names:
        if name not in given:
            raise DataError(f"missing feature {name!r}")
    unknown = sorted(set(given) - set(names))
    if unknown:
        raise DataError(f"model has no feature(s) {', '.join(unknown)}")
    return FeatureVector([given[n] for n in names], names)


def cmd_recommend(args, out):
    _require_file(args.model)
    state = load_state(args.model)
    x = _parse_feature_pairs(args.features, state.feature_names)
    decision = explain(state, x)
    print(decision.hardware_id, file=out)
    if args.verbose:
        for hw_id, est in decision.estimates.items():
            mark = "*" if est <= decision.r_limit else " "
            print(f"{mark} {hw_id}\t{est:.6g}", file=out)
        print(f"r_limit\t{decision.r_limit:.6g}", file=out)


def cmd_report(args, out):
    _require_file(args.report)
    report = load_report(args.report)
    text = report.to_csv(args.metric)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        out.write(text)


COMMANDS = {
    "simulate": cmd_simulate,
    "synth": cmd_synth,
    "bench-matmul": cmd_bench_matmul,
    "baseline": cmd_baseline,
    "recommend": cmd_recommend,
    "report": cmd_report,
}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        COMMANDS[args.command](args, out)
    except UsageError as exc:
        print(f"banditware {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ChecksumMismatch as exc:
        print(f"banditware {args.command}: benchmark failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (DataError, SchemaError, FileNotFoundError, UnicodeDecodeError) as exc:
        print(f"banditware {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"banditware {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except BanditWareError as exc:
        print(f"banditware {args.command}: failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - last-resort exit code contract
        log.exception("unexpected failure")
        print(f"banditware {args.command}: failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
