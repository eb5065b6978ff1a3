"""Seeded multi-repetition runs, aggregation and file artifacts."""
from __future__ import annotations

import csv
import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from html import escape

import numpy as np

from .algorithms import AlgoConfig, make_policy
from .environments import BanditInstance, PayoffStream, optimal_value, repetition_seed
from .errors import ConfigError, InvalidInputError

RUN_HEADER = ["dataset", "algo", "rep", "seed", "t", "arm", "payoff", "cum_payoff", "cum_regret"]
AGG_HEADER = ["dataset", "algo", "t", "mean_cum_payoff", "std_cum_payoff",
              "mean_cum_regret", "std_cum_regret", "reps"]


def fmt(x: float) -> str:
    return f"{x:.17g}"


@dataclass
class RunRecord:
    dataset: str
    algo: str
    rep: int
    seed: int
    arms: np.ndarray
    payoffs: np.ndarray
    regrets: np.ndarray
    nominal_T: int
    wall_time: float = 0.0
    cum_payoff: np.ndarray = field(init=False, repr=False)
    cum_regret: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.cum_payoff = np.cumsum(self.payoffs)
        self.cum_regret = np.cumsum(self.regrets)

    @property
    def rounds(self) -> int:
        return int(self.payoffs.size)


@dataclass
class AggregateCurve:
    dataset: str
    algo: str
    mean_cum_payoff: np.ndarray
    std_cum_payoff: np.ndarray
    mean_cum_regret: np.ndarray
    std_cum_regret: np.ndarray
    reps: int

    @property
    def rounds(self) -> int:
        return int(self.mean_cum_payoff.size)


def run_single(instance: BanditInstance, cfg: AlgoConfig, T: int, rep: int, root_seed: int,
               check_horizon: bool = True) -> RunRecord:
    """One repetition: fresh policy, payoff stream keyed on (root_seed, rep)."""
    start = time.perf_counter()
    policy = make_policy(cfg, instance, T, check_horizon=check_horizon)
    stream = PayoffStream(instance, repetition_seed(root_seed, rep))
    _, best = optimal_value(instance)
    rounds = policy.n_decisions * policy.pulls
    chosen = np.empty(rounds, dtype=np.int64)
    payoffs = np.empty(rounds)
    t = 0
    for _ in range(policy.n_decisions):
        a = policy.select(instance.arms)
        y = stream.payoffs(a, t, policy.pulls)
        policy.update(instance.arms[a], y)
        chosen[t:t + policy.pulls] = a
        payoffs[t:t + policy.pulls] = y
        t += policy.pulls
    regrets = best - instance.means[chosen]
    return RunRecord(instance.name, cfg.algo, rep, int(root_seed), chosen, payoffs, regrets, int(T),
                     wall_time=time.perf_counter() - start)


def _run_single_star(args):
    return run_single(*args)


def default_jobs() -> int:
    env = os.environ.get("LINBET_JOBS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_experiment(instance: BanditInstance, cfg: AlgoConfig, T: int, reps: int, root_seed: int,
                   jobs: int | None = None, check_horizon: bool = True) -> list[RunRecord]:
    if reps < 1:
        raise ConfigError("reps must be >= 1")
    # fail fast on configuration problems before spawning workers
    make_policy(cfg, instance, T, check_horizon=check_horizon)
    jobs = default_jobs() if jobs is None else max(1, int(jobs))
    tasks = [(instance, cfg, T, rep, root_seed, check_horizon) for rep in range(reps)]
    if jobs == 1 or reps == 1:
        return [_run_single_star(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=min(jobs, reps)) as pool:
        return list(pool.map(_run_single_star, tasks))


def aggregate(records: list[RunRecord]) -> AggregateCurve:
    if not records:
        raise InvalidInputError("nothing to aggregate")
    keys = {(r.dataset, r.algo, r.rounds) for r in records}
    if len(keys) != 1:
        raise InvalidInputError(f"records mix configurations: {sorted(keys)}")
    P = np.vstack([r.cum_payoff for r in records])
    R = np.vstack([r.cum_regret for r in records])
    return AggregateCurve(records[0].dataset, records[0].algo, P.mean(axis=0), P.std(axis=0),
                          R.mean(axis=0), R.std(axis=0), len(records))


def fit_scaling_exponent(points) -> dict[str, float]:
    """Least-squares line through (log T, log regret)."""
    kept = []
    for T, reg in points:
        if reg <= 0 or T <= 0:
            warnings.warn(f"dropping nonpositive point (T={T}, regret={reg})", stacklevel=2)
            continue
        kept.append((math.log(T), math.log(reg)))
    if len(kept) < 4:
        raise InvalidInputError(f"need at least 4 positive points, have {len(kept)}")
    x, y = np.array(kept).T
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return {"slope": float(slope), "intercept": float(intercept), "r2": r2}


# -- CSV ----------------------------------------------------------------------

def _write_runs(records, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(RUN_HEADER) + "\n")
        for r in records:
            prefix = f"{r.dataset},{r.algo},{r.rep},{r.seed},"
            lines = [
                f"{prefix}{t + 1},{a},{fmt(p)},{fmt(cp)},{fmt(cr)}\n"
                for t, (a, p, cp, cr) in enumerate(zip(r.arms.tolist(), r.payoffs.tolist(),
                                                       r.cum_payoff.tolist(), r.cum_regret.tolist()))
            ]
            fh.writelines(lines)


def _write_aggregates(aggs, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(AGG_HEADER) + "\n")
        for g in aggs:
            for t in range(g.rounds):
                fh.write(f"{g.dataset},{g.algo},{t + 1},{fmt(g.mean_cum_payoff[t])},{fmt(g.std_cum_payoff[t])},"
                         f"{fmt(g.mean_cum_regret[t])},{fmt(g.std_cum_regret[t])},{g.reps}\n")


def export_csv(obj, path) -> None:
    """Write run records or aggregate curves using the fixed CSV schemas."""
    if isinstance(obj, AggregateCurve):
        _write_aggregates([obj], path)
    elif isinstance(obj, (list, tuple)) and obj and all(isinstance(o, AggregateCurve) for o in obj):
        _write_aggregates(obj, path)
    else:
        _write_runs(list(obj), path)


def read_runs_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        for key in ("rep", "seed", "t", "arm"):
            row[key] = int(row[key])
        for key in ("payoff", "cum_payoff", "cum_regret"):
            row[key] = float(row[key])
    return rows


def read_aggregate_csv(path) -> list[AggregateCurve]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    groups: dict[tuple[str, str], list[dict]] = {}
    for row in rows:
        groups.setdefault((row["dataset"], row["algo"]), []).append(row)
    out = []
    for (ds, algo), rs in groups.items():
        rs.sort(key=lambda r: int(r["t"]))
        col = lambda k: np.array([float(r[k]) for r in rs])  # noqa: E731
        out.append(AggregateCurve(ds, algo, col("mean_cum_payoff"), col("std_cum_payoff"),
                                  col("mean_cum_regret"), col("std_cum_regret"), int(rs[0]["reps"])))
    return out


# -- SVG ----------------------------------------------------------------------

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"]


def emit_plot(aggregates, path, title: str | None = None, max_points: int = 800) -> None:
    """Mean cumulative payoff per algorithm with a +-1 std band, as standalone SVG."""
    aggs = [aggregates] if isinstance(aggregates, AggregateCurve) else list(aggregates)
    if not aggs:
        raise InvalidInputError("emit_plot needs at least one aggregate")
    W, H = 720, 480
    left, right, top, bottom = 80, 160, 50, 60
    pw, ph = W - left - right, H - top - bottom
    t_max = max(g.rounds for g in aggs)
    lo = min(float(np.min(g.mean_cum_payoff - g.std_cum_payoff)) for g in aggs)
    hi = max(float(np.max(g.mean_cum_payoff + g.std_cum_payoff)) for g in aggs)
    lo, hi = min(lo, 0.0), max(hi, 0.0)
    if hi - lo < 1e-12:
        hi = lo + 1.0

    def sx(t):
        return left + pw * (t / max(t_max, 1))

    def sy(v):
        return top + ph * (1.0 - (v - lo) / (hi - lo))

    title = title or "Cumulative payoff: " + ", ".join(sorted({g.dataset for g in aggs}))
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W / 2:.1f}" y="28" text-anchor="middle" font-family="sans-serif" font-size="16">'
        f'{escape(title)}</text>',
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
    ]
    for i in range(6):
        t = t_max * i / 5
        v = lo + (hi - lo) * i / 5
        parts.append(f'<text x="{sx(t):.1f}" y="{top + ph + 18}" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="11">{t:.0f}</text>')
        parts.append(f'<text x="{left - 6}" y="{sy(v) + 4:.1f}" text-anchor="end" '
                     f'font-family="sans-serif" font-size="11">{v:.4g}</text>')
    parts.append(f'<text x="{left + pw / 2:.1f}" y="{H - 15}" text-anchor="middle" '
                 f'font-family="sans-serif" font-size="13">rounds</text>')
    parts.append(f'<text x="18" y="{top + ph / 2:.1f}" text-anchor="middle" font-family="sans-serif" '
                 f'font-size="13" transform="rotate(-90 18 {top + ph / 2:.1f})">mean cumulative payoff</text>')
    for i, g in enumerate(aggs):
        color = PALETTE[i % len(PALETTE)]
        idx = np.unique(np.linspace(0, g.rounds - 1, min(g.rounds, max_points)).round().astype(int))
        ts = idx + 1
        m, s = g.mean_cum_payoff[idx], g.std_cum_payoff[idx]
        upper = " ".join(f"{sx(t):.2f},{sy(v):.2f}" for t, v in zip(ts, m + s))
        lower = " ".join(f"{sx(t):.2f},{sy(v):.2f}" for t, v in zip(ts[::-1], (m - s)[::-1]))
        parts.append(f'<polygon class="band" points="{upper} {lower}" fill="{color}" fill-opacity="0.2" stroke="none"/>')
        line = " ".join(f"{sx(t):.2f},{sy(v):.2f}" for t, v in zip(ts, m))
        parts.append(f'<polyline class="series" points="{line}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        ly = top + 20 + 22 * i
        parts.append(f'<g class="legend-entry"><line x1="{left + pw + 15}" y1="{ly}" x2="{left + pw + 40}" '
                     f'y2="{ly}" stroke="{color}" stroke-width="3"/><text x="{left + pw + 46}" y="{ly + 4}" '
                     f'font-family="sans-serif" font-size="12">{escape(g.algo.upper())} ({escape(g.dataset)})</text></g>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")
