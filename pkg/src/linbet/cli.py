"""Command-line entry point: ``linbet <command> [flags]``.

Exit codes: 0 success, 1 validation failure, 2 configuration error,
3 runtime failure. Flags override values from ``--config``, which override
built-in defaults.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import platform
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .algorithms import ALGOS, AlgoConfig
from .environments import DATASETS, generate_instance, lower_bound_instance
from .errors import ConfigError, InvalidInputError, LinbetError
from .harness import (
    aggregate,
    emit_plot,
    export_csv,
    fit_scaling_exponent,
    read_aggregate_csv,
    run_experiment,
)
from .validation import SUITES, run_suites

log = logging.getLogger("linbet")

EXIT_OK, EXIT_VALIDATION, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3

# reproduction protocol: which pair of algorithms and which horizon per dataset
PAIRINGS = {
    "S1": (("menu", "mom"), 20_000),
    "S2": (("menu", "mom"), 20_000),
    "S3": (("tofu", "crt"), 10_000),
    "S4": (("tofu", "crt"), 10_000),
}

DEFAULTS = {
    "dataset": None,
    "algo": "menu",
    "T": None,
    "reps": None,
    "seed": 42,
    "lambda": 1.0,
    "delta": 0.1,
    "epsilon": None,
    "moment_bound": "from-instance",
    "out": "results",
    "jobs": None,
    "truncation_convention": "proof",
    "suite": "all",
    "d": 2,
    "T_list": "1024,2048,4096,8192,16384",
    "input": None,
}


def _add_common(p: argparse.ArgumentParser, *names: str) -> None:
    spec = {
        "dataset": dict(help="dataset id S1..S4 (default: S1)"),
        "algo": dict(help=f"algorithm, one of {', '.join(ALGOS)} (default: menu)"),
        "T": dict(type=int, help="horizon (default: the dataset's protocol horizon)"),
        "reps": dict(type=int, help="repetitions (default: 10; 20 for lowerbound and scaling)"),
        "seed": dict(type=int, help="root seed (default: 42)"),
        "lambda": dict(type=float, dest="lambda_", help="ridge regularizer (default: 1.0)"),
        "delta": dict(type=float, help="confidence parameter (default: 0.1)"),
        "epsilon": dict(type=float, help="moment order minus one (default: from the instance)"),
        "moment-bound": dict(dest="moment_bound", help="b or c (default: from-instance)"),
        "out": dict(help="output directory (default: results)"),
        "jobs": dict(type=int, help="parallel repetitions (default: $LINBET_JOBS or CPU count)"),
        "truncation-convention": dict(dest="truncation_convention", choices=["proof", "literal"],
                                      help="TOFU threshold form (default: proof)"),
        "suite": dict(help=f"validation suite: all or one of {', '.join(SUITES)} (default: all)"),
        "d": dict(type=int, help="dimension of the lower-bound instance (default: 2)"),
        "T-list": dict(dest="T_list", help="comma separated horizons (default: 1024,...,16384)"),
        "input": dict(nargs="+", help="aggregate CSV files to plot"),
    }
    for name in names:
        p.add_argument(f"--{name}", default=None, **spec[name])
    p.add_argument("--config", default=None, help="JSON config file; flags take precedence")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="linbet", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_common(sub.add_parser("run", help="run one algorithm on one dataset"),
                "dataset", "algo", "T", "reps", "seed", "lambda", "delta", "epsilon", "moment-bound",
                "out", "jobs", "truncation-convention")
    _add_common(sub.add_parser("reproduce", help="the paired comparison for one dataset"),
                "dataset", "reps", "seed", "lambda", "delta", "out", "jobs", "truncation-convention")
    _add_common(sub.add_parser("validate", help="fast invariant suite"), "suite")
    _add_common(sub.add_parser("lowerbound", help="MENU and TOFU on the lower-bound instance"),
                "d", "epsilon", "T", "reps", "seed", "lambda", "delta", "out", "jobs")
    _add_common(sub.add_parser("scaling", help="final regret across horizons and a log-log fit"),
                "algo", "dataset", "epsilon", "T-list", "reps", "seed", "lambda", "delta", "out", "jobs",
                "truncation-convention")
    _add_common(sub.add_parser("plot", help="render aggregate CSVs to SVG"), "input", "out")
    return parser


def resolve(args: argparse.Namespace) -> dict:
    """Merge defaults, the optional config file and explicit flags."""
    cfg = dict(DEFAULTS)
    if args.config:
        try:
            with open(args.config) as fh:
                from_file = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        for key, value in from_file.items():
            cfg[{"lam": "lambda", "moment-bound": "moment_bound"}.get(key, key)] = value
    for key, value in vars(args).items():
        if value is None or key in ("command", "config", "verbose"):
            continue
        cfg["lambda" if key == "lambda_" else key] = value
    return cfg


def _algo_config(cfg: dict, algo: str) -> AlgoConfig:
    mb = cfg["moment_bound"]
    if mb != "from-instance":
        try:
            mb = float(mb)
        except (TypeError, ValueError):
            raise ConfigError(f"moment bound must be a number or 'from-instance', got {mb!r}") from None
    return AlgoConfig(algo, lam=float(cfg["lambda"]), delta=float(cfg["delta"]), moment_bound=mb,
                      epsilon=cfg["epsilon"] if cfg["epsilon"] is None else float(cfg["epsilon"]),
                      truncation_convention=cfg["truncation_convention"])


def _dataset(cfg: dict) -> str:
    ds = str(cfg["dataset"] or "S1").upper()
    if ds not in DATASETS:
        raise ConfigError(f"unknown dataset {cfg['dataset']!r}; expected one of {', '.join(DATASETS)}")
    return ds


def build_info() -> dict:
    return {
        "package": "linbet",
        "version": __version__,
        "kernel_backend": kernels.BACKEND,
        "python": platform.python_version(),
        "numpy": np.__version__,
    }


def write_manifest(out: Path, command: str, cfg: dict, summary: dict) -> None:
    manifest = {"command": command, "config": cfg, "build": build_info(), "summary": summary}
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _summarize(records) -> dict:
    final = np.array([r.cum_payoff[-1] for r in records])
    regret = np.array([r.cum_regret[-1] for r in records])
    return {
        "nominal_T": records[0].nominal_T,
        "effective_rounds": records[0].rounds,
        "unplayed_rounds": records[0].nominal_T - records[0].rounds,
        "mean_final_cum_payoff": float(final.mean()),
        "std_final_cum_payoff": float(final.std()),
        "mean_final_cum_regret": float(regret.mean()),
        "std_final_cum_regret": float(regret.std()),
    }


def _run_and_write(out: Path, ds: str, algos, T: int, cfg: dict):
    instance = generate_instance(ds, int(cfg["seed"]))
    out.mkdir(parents=True, exist_ok=True)
    all_records, aggs, summary = [], [], {}
    for algo in algos:
        acfg = _algo_config(cfg, algo)
        records = run_experiment(instance, acfg, T, int(cfg["reps"]), int(cfg["seed"]), jobs=cfg["jobs"])
        all_records.extend(records)
        aggs.append(aggregate(records))
        summary[algo] = _summarize(records)
        print(f"{ds} {algo.upper():5s} rounds={summary[algo]['effective_rounds']:6d}  "
              f"final cum payoff {summary[algo]['mean_final_cum_payoff']:.2f} "
              f"+- {summary[algo]['std_final_cum_payoff']:.2f}  "
              f"regret {summary[algo]['mean_final_cum_regret']:.2f}")
    export_csv(all_records, out / "runs.csv")
    export_csv(aggs, out / "aggregate.csv")
    emit_plot(aggs, out / "cumulative_payoff.svg", title=f"Cumulative payoff on {ds}")
    summary["instance"] = instance.to_dict()
    return instance, summary


def _reps(cfg: dict, default: int) -> dict:
    return {**cfg, "reps": default if cfg["reps"] is None else int(cfg["reps"])}


def cmd_run(cfg: dict) -> int:
    cfg = _reps(cfg, 10)
    ds = _dataset(cfg)
    algo = str(cfg["algo"]).lower()
    T = int(cfg["T"]) if cfg["T"] is not None else PAIRINGS[ds][1]
    out = Path(cfg["out"])
    _, summary = _run_and_write(out, ds, [algo], T, cfg)
    write_manifest(out, "run", {**cfg, "T": T, "dataset": ds}, summary)
    return EXIT_OK


def cmd_reproduce(cfg: dict) -> int:
    cfg = _reps(cfg, 10)
    ds = _dataset(cfg)
    algos, T = PAIRINGS[ds]
    out = Path(cfg["out"])
    _, summary = _run_and_write(out, ds, algos, T, cfg)
    write_manifest(out, "reproduce", {**cfg, "T": T, "dataset": ds, "algos": list(algos)}, summary)
    return EXIT_OK


def cmd_validate(cfg: dict) -> int:
    names = [s.strip() for s in str(cfg["suite"]).split(",")]
    unknown = [n for n in names if n != "all" and n not in SUITES]
    if unknown:
        raise ConfigError(f"unknown suite(s) {unknown}; expected all or {', '.join(SUITES)}")
    start = time.perf_counter()
    results = run_suites(names)
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.suite:10s} {r.name:{width}s}  {r.detail}")
    n_fail = sum(not r.passed for r in results)
    print(f"{len(results) - n_fail}/{len(results)} checks passed in {time.perf_counter() - start:.1f}s")
    return EXIT_OK if n_fail == 0 else EXIT_VALIDATION


def cmd_lowerbound(cfg: dict) -> int:
    d = int(cfg["d"])
    eps = 1.0 if cfg["epsilon"] is None else float(cfg["epsilon"])
    T = 10_000 if cfg["T"] is None else int(cfg["T"])
    cfg = _reps(cfg, 20)
    reps = cfg["reps"]
    if d < 2 or d % 2:
        raise ConfigError(f"d must be even and >= 2 (got {d})")
    if T < (d / 12.0) ** (eps / (1.0 + eps)):
        raise ConfigError(f"T={T} violates the lower-bound condition T >= (d/12)^(eps/(1+eps))")
    lb = lower_bound_instance(d, eps, T, int(cfg["seed"]))
    instance = lb.to_bandit()
    floor = lb.regret_floor(T)
    moments = lb.analytic_raw_moments()
    report = {
        "d": d, "epsilon": eps, "T": T, "reps": reps, "delta_gap": lb.delta_gap,
        "n_arms": int(instance.n_arms), "regret_floor": floor,
        "max_analytic_moment": float(moments.max()), "moment_bound_holds": bool(np.all(moments <= d)),
        "algorithms": {},
    }
    print(f"lower-bound instance d={d} eps={eps} T={T} Delta={lb.delta_gap:.6g} arms={instance.n_arms}")
    print(f"regret floor (d/192) T^(1/(1+eps)) = {floor:.4f}; max analytic moment {moments.max():.4f} <= {d}")
    for algo in ("menu", "tofu"):
        acfg = _algo_config({**cfg, "epsilon": eps}, algo)
        records = run_experiment(instance, acfg, T, reps, int(cfg["seed"]), jobs=cfg["jobs"])
        regrets = np.array([r.cum_regret[-1] for r in records])
        se = float(regrets.std(ddof=1) / math.sqrt(reps)) if reps > 1 else 0.0
        entry = {"mean_regret": float(regrets.mean()), "std_error": se,
                 "effective_rounds": records[0].rounds,
                 "above_floor": bool(regrets.mean() >= floor - 2 * se)}
        report["algorithms"][algo] = entry
        print(f"  {algo.upper():5s} mean regret {entry['mean_regret']:.4f} (se {se:.4f})  "
              f"{'>=' if entry['above_floor'] else '<'} floor - 2se")
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "lowerbound.json", "w") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    write_manifest(out, "lowerbound", cfg, report)
    return EXIT_OK


def parse_T_list(text) -> list[int]:
    if isinstance(text, (list, tuple)):
        items = [int(v) for v in text]
    else:
        try:
            items = [int(v) for v in str(text).split(",") if v.strip()]
        except ValueError:
            raise ConfigError(f"cannot parse horizon list {text!r}") from None
    unique = sorted(set(items))
    if len(unique) < len(items):
        warnings.warn("duplicate horizons removed from T-list", stacklevel=2)
    if len(unique) < 4:
        raise ConfigError(f"scaling needs at least 4 distinct horizons, got {len(unique)}")
    return unique


def scaling_points(algo: str, eps: float, Ts, reps: int, seed: int, dataset: str | None = None,
                   base_cfg: dict | None = None, jobs: int | None = None):
    """Mean final regret per horizon on one fixed instance."""
    ds = dataset or ("S1" if eps == 1.0 else "S3")
    spec = dict(DATASETS[ds.upper()])
    spec["epsilon"] = eps
    instance = generate_instance(spec, seed)
    instance.name = ds.upper()
    acfg = _algo_config({**DEFAULTS, **(base_cfg or {}), "epsilon": eps}, algo)
    points = []
    for T in Ts:
        records = run_experiment(instance, acfg, T, reps, seed, jobs=jobs)
        points.append((T, float(np.mean([r.cum_regret[-1] for r in records]))))
    return points


def cmd_scaling(cfg: dict) -> int:
    algo = str(cfg["algo"]).lower()
    if algo not in ALGOS:
        raise ConfigError(f"unknown algo {algo!r}")
    eps = 1.0 if cfg["epsilon"] is None else float(cfg["epsilon"])
    Ts = parse_T_list(cfg["T_list"])
    cfg = _reps(cfg, 20)
    points = scaling_points(algo, eps, Ts, cfg["reps"], int(cfg["seed"]), cfg["dataset"], cfg, cfg["jobs"])
    fit = fit_scaling_exponent(points)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "scaling.csv", "w") as fh:
        fh.write("algo,epsilon,T,mean_final_regret,slope,intercept,r2\n")
        for T, reg in points:
            fh.write(f"{algo},{eps:.17g},{T},{reg:.17g},{fit['slope']:.17g},{fit['intercept']:.17g},{fit['r2']:.17g}\n")
    for T, reg in points:
        print(f"T={T:7d}  mean final regret {reg:.3f}")
    print(f"slope {fit['slope']:.4f}  intercept {fit['intercept']:.4f}  r2 {fit['r2']:.4f}  "
          f"(reference exponent 1/(1+eps) = {1 / (1 + eps):.4f})")
    write_manifest(out, "scaling", cfg, {"points": points, **fit})
    return EXIT_OK


def cmd_plot(cfg: dict) -> int:
    if not cfg["input"]:
        raise ConfigError("plot needs --input aggregate CSV file(s)")
    aggs = []
    for path in cfg["input"]:
        try:
            aggs.extend(read_aggregate_csv(path))
        except (OSError, KeyError, ValueError) as exc:
            raise ConfigError(f"cannot read aggregate CSV {path}: {exc}") from None
    out = Path(cfg["out"])
    target = out if out.suffix == ".svg" else out / "cumulative_payoff.svg"
    target.parent.mkdir(parents=True, exist_ok=True)
    emit_plot(aggs, target)
    print(f"wrote {target}")
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "reproduce": cmd_reproduce,
    "validate": cmd_validate,
    "lowerbound": cmd_lowerbound,
    "scaling": cmd_scaling,
    "plot": cmd_plot,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(args)
        return COMMANDS[args.command](cfg)
    except (ConfigError, InvalidInputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LinbetError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (OSError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
