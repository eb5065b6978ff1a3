"""Fast invariant checks behind ``linbet validate``.

Each check returns a :class:`CheckResult`; suites group checks by topic.
Everything here is seeded and finishes in well under a minute.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import algorithms as alg
from .environments import (
    NoiseModel,
    PayoffStream,
    STUDENT_T,
    draw_primitives,
    generate_instance,
    lower_bound_instance,
    verify_moment_bound,
)
from .linalg import DesignState, compute_weight_rows, lp_norm, weight_row_bound


@dataclass
class CheckResult:
    suite: str
    name: str
    passed: bool
    detail: str


def random_design(rng, d: int, t: int, lam: float = 1.0, scale: float = 1.0):
    X = rng.uniform(-1.0, 1.0, size=(t, d)) * scale
    state = DesignState(d, lam)
    for x in X:
        state.update(x)
    return state, X


def check_weight_rows(n_designs: int = 200, seed: int = 0, dims=(2, 5, 10, 20), t_max: int = 500,
                      epsilons=(0.25, 0.5, 1.0)) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst_l2, worst_lp = -np.inf, -np.inf
    for i in range(n_designs):
        d = dims[i % len(dims)]
        t = int(rng.integers(1, t_max + 1))
        lam = float(rng.choice([0.1, 1.0, 10.0]))
        state, X = random_design(rng, d, t, lam, scale=float(rng.choice([0.1, 1.0, 5.0])))
        U = compute_weight_rows(state, X)
        worst_l2 = max(worst_l2, float(np.max(np.linalg.norm(U, axis=1))) - 1.0)
        for eps in epsilons:
            lp = max(lp_norm(u, 1.0 + eps) for u in U)
            worst_lp = max(worst_lp, lp - weight_row_bound(t, eps))
    ok = worst_l2 <= 1e-9 and worst_lp <= 1e-6
    return CheckResult("weights", "weight-row norm bounds", ok,
                       f"max(||u||_2 - 1) = {worst_l2:.3e}, max(||u||_(1+eps) - bound) = {worst_lp:.3e}")


def check_tofu_noclip(n_histories: int = 100, seed: int = 1) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_histories):
        d = int(rng.integers(2, 8))
        t = int(rng.integers(1, 60))
        X = rng.uniform(0, 1, size=(t, d))
        y = rng.uniform(-1, 1, size=t)
        # a huge raw-moment bound keeps every |u y| below the threshold
        pol = alg.TofuPolicy(d, b=1e12, epsilon=0.5, delta=0.1, lam=1.0, S=1.0, T=t)
        for x, yy in zip(X, y):
            pol.update(x, [yy])
        if pol.last_clipped:
            return CheckResult("noclip", "TOFU no-clip identity", False, "truncation fired unexpectedly")
        lse = np.linalg.solve(np.eye(d) + X.T @ X, X.T @ y)
        worst = max(worst, float(np.linalg.norm(pol.ellipsoid.center - lse)))
    return CheckResult("noclip", "TOFU no-clip identity", worst <= 1e-8, f"max ||theta_dagger - LSE||_2 = {worst:.3e}")


def mom_configuration(rng, k: int, d: int, gamma: float = 1.0):
    """k estimates, more than 2/3 of them within V-distance gamma of theta_star.

    The outliers are spread from just outside the ball to far away, some
    clustered together to try to fool the median.
    """
    A = rng.normal(size=(d, d))
    V = A @ A.T + 0.5 * np.eye(d)
    L = np.linalg.cholesky(V)
    L_inv_T = np.linalg.inv(L).T  # maps whitened coordinates back: ||L_inv_T w||_V = ||w||
    theta = rng.normal(size=d)
    n_in = 2 * k // 3 + 1  # smallest count strictly above 2k/3
    W = np.empty((k, d))
    dirs = rng.normal(size=(k, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    W[:n_in] = dirs[:n_in] * gamma * rng.uniform(0, 1, size=(n_in, 1)) ** (1.0 / d)
    n_out = k - n_in
    if n_out:
        centre = rng.normal(size=d)
        centre *= rng.uniform(1.5, 20.0) * gamma / np.linalg.norm(centre)
        radii = rng.uniform(1.0 + 1e-6, 30.0, size=(n_out, 1)) * gamma
        clustered = rng.random(n_out) < 0.5
        W[n_in:] = np.where(clustered[:, None], centre + 0.1 * gamma * dirs[n_in:], dirs[n_in:] * radii)
    perm = rng.permutation(k)
    estimates = theta + W[perm] @ L_inv_T.T
    return estimates, theta, V, n_in


def check_median_of_means(n_configs: int = 1000, seed: int = 2, ks=(5, 25, 373)) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(n_configs):
        k = ks[i % len(ks)]
        d = int(rng.integers(1, 6))
        gamma = float(rng.uniform(0.1, 5.0))
        est, theta, V, _ = mom_configuration(rng, k, d, gamma)
        j, _ = alg.median_of_means_select(est, V)
        diff = est[j] - theta
        worst = max(worst, math.sqrt(max(float(diff @ V @ diff), 0.0)) / gamma)
    return CheckResult("mom", "median-of-means 3-gamma selection", worst <= 3.0,
                       f"max selected distance / gamma = {worst:.4f} over {n_configs} configurations")


def check_dominance(n_ellipsoids: int = 50, n_theta: int = 2000, seed: int = 3) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst_violation, worst_gap = -np.inf, 0.0
    for _ in range(n_ellipsoids):
        d = int(rng.integers(1, 6))
        state, _ = random_design(rng, d, int(rng.integers(0, 30)))
        ell = alg.ConfidenceEllipsoid(rng.normal(size=d), float(rng.uniform(0, 3)), state)
        arms = rng.normal(size=(10, d))
        opt = ell.optimistic_values(arms)
        # points on the boundary: centre + beta * V^{-1/2} w with ||w|| = 1
        w = rng.normal(size=(n_theta, d))
        w /= np.linalg.norm(w, axis=1, keepdims=True)
        Lc = np.linalg.cholesky(state.V)
        thetas = ell.center + ell.beta * np.linalg.solve(Lc.T, w.T).T
        vals = arms @ thetas.T
        worst_violation = max(worst_violation, float(np.max(vals - opt[:, None])))
        # the explicit maximizer attains the closed form
        for a in range(arms.shape[0]):
            worst_gap = max(worst_gap, abs(float(arms[a] @ ell.maximizer(arms[a])) - opt[a]))
    ok = worst_violation <= 1e-9 and worst_gap <= 1e-9
    return CheckResult("dominance", "optimistic value dominates the ellipsoid", ok,
                       f"max sampled excess = {worst_violation:.3e}, maximizer gap = {worst_gap:.3e}")


def check_moments(seed: int = 4, n_samples: int = 20_000) -> list[CheckResult]:
    out = []
    rng = np.random.default_rng(seed)
    for ds in ("S1", "S3"):
        inst = generate_instance(ds, seed)
        rep = verify_moment_bound(inst, n_samples, rng)
        out.append(CheckResult("moments", f"{ds} declared {rep['kind']} moment bound", rep["pass"],
                               f"empirical {rep['empirical_moment']:.4f} vs declared {rep['declared_bound']:.4f}"))
    lb = lower_bound_instance(2, 1.0, 10_000, seed)
    m = lb.analytic_raw_moments()
    out.append(CheckResult("moments", "lower-bound analytic moment <= d", bool(np.all(m <= lb.d)),
                           f"max analytic moment {m.max():.4f} (d = {lb.d})"))
    return out


def fixed_design_instance(seed: int, d: int = 5, n: int = 200, dof: float = 3.0):
    """Student-t world with n fixed arms played once each."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(0, 1, size=(n, d))
    theta = rng.uniform(0, 1, size=d)
    return X, theta


def lse_coverage(n_draws: int, seed: int, d: int = 5, n: int = 200, c: float = 3.0, epsilon: float = 1.0,
                 lam: float = 1.0) -> tuple[float, float]:
    """Fraction of noise draws with ||LSE - theta||_V inside the single-estimate radius."""
    X, theta = fixed_design_instance(seed, d, n)
    S = math.sqrt(d)
    V = lam * np.eye(d) + X.T @ X
    rng = np.random.default_rng(seed + 1)
    noise = NoiseModel(STUDENT_T, dof=3.0)
    eta = draw_primitives(noise, rng, n_draws * n).reshape(n_draws, n)
    Y = X @ theta + eta
    est = np.linalg.solve(V, X.T @ Y.T).T
    diff = est - theta
    dist = np.sqrt(np.einsum("ij,jk,ik->i", diff, V, diff))
    radius = alg.lse_radius(n, d, c, epsilon, lam, S)
    return float(np.mean(dist <= radius)), radius


def policy_coverage(algo: str, dataset: str, T: int, runs: int, seed: int, rounds: int | None = None):
    """Fraction of (run, decision) pairs whose ellipsoid contains theta_star."""
    inst = generate_instance(dataset, seed)
    cfg = alg.AlgoConfig(algo)
    hits = total = 0
    for r in range(runs):
        pol = alg.make_policy(cfg, inst, T)
        stream = PayoffStream(inst, np.random.SeedSequence([seed, r]))
        t = 0
        n_dec = pol.n_decisions if rounds is None else min(rounds, pol.n_decisions)
        for _ in range(n_dec):
            a = pol.select(inst.arms)
            pol.update(inst.arms[a], stream.payoffs(a, t, pol.pulls))
            t += pol.pulls
            hits += pol.certify(inst.theta_star)
            total += 1
    return hits / total


def check_coverage(seed: int = 5) -> list[CheckResult]:
    frac, radius = lse_coverage(400, seed)
    out = [CheckResult("coverage", "LSE ellipsoid coverage >= 3/4", frac >= 0.75,
                       f"covered {frac:.3f} at radius {radius:.3f}")]
    frac = policy_coverage("menu", "S1", 2000, 40, seed)
    out.append(CheckResult("coverage", "MENU ellipsoid coverage >= 1 - delta", frac >= 0.9,
                           f"covered {frac:.3f} of epochs"))
    frac = policy_coverage("tofu", "S3", 200, 10, seed)
    out.append(CheckResult("coverage", "TOFU ellipsoid coverage >= 1 - delta", frac >= 0.9,
                           f"covered {frac:.3f} of rounds"))
    return out


SUITES = {
    "weights": lambda: [check_weight_rows()],
    "noclip": lambda: [check_tofu_noclip()],
    "mom": lambda: [check_median_of_means()],
    "dominance": lambda: [check_dominance()],
    "moments": check_moments,
    "coverage": check_coverage,
}


def run_suites(names=None) -> list[CheckResult]:
    names = list(SUITES) if not names or names == ["all"] else names
    results = []
    for name in names:
        results.extend(SUITES[name]())
    return results
