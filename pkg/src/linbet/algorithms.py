"""Optimistic policies for heavy-tailed linear bandits.

Every policy exposes the same surface::

    idx = policy.select(arms)          # optimistic arm index
    policy.update(arms[idx], payoffs)  # ``policy.pulls`` payoffs
    policy.certify(theta_star)         # test hook: theta_star inside the ellipsoid?

``pulls`` is k for MENU, k_m for MoM and 1 for TOFU and CRT; ``n_decisions``
is the number of select/update cycles that fit in the horizon.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from . import kernels
from .errors import ConfigError, InvalidInputError
from .linalg import DesignState, inv_sqrt, weighted_norm

# Leading constant inside (const * d * c)^{1/(1+eps)} of the MENU radius.
MENU_RADIUS_CONSTANT = 9.0

ALGOS = ("menu", "tofu", "mom", "crt")
CONVENTIONS = ("proof", "literal")


@dataclass
class ConfidenceEllipsoid:
    center: np.ndarray
    beta: float
    design: DesignState

    @classmethod
    def initial(cls, design: DesignState, S: float) -> "ConfidenceEllipsoid":
        # B(0, S) seen through V_0 = lam*I has V-radius sqrt(lam)*S
        return cls(np.zeros(design.dim), math.sqrt(design.lam) * S, design)

    def contains(self, theta) -> bool:
        diff = np.asarray(theta, dtype=np.float64) - self.center
        return weighted_norm(self.design.V, diff) <= self.beta

    def optimistic_values(self, arms) -> np.ndarray:
        arms = np.asarray(arms, dtype=np.float64)
        q = np.einsum("ij,ij->i", arms @ self.design.V_inv, arms)
        return arms @ self.center + self.beta * np.sqrt(np.maximum(q, 0.0))

    def maximizer(self, x) -> np.ndarray:
        """The theta attaining max <x, theta> over the ellipsoid."""
        x = np.asarray(x, dtype=np.float64)
        Vx = self.design.V_inv @ x
        nrm = math.sqrt(max(float(x @ Vx), 0.0))
        if nrm == 0.0:
            return self.center.copy()
        return self.center + self.beta * Vx / nrm


def select_optimistic_arm(ellipsoid: ConfidenceEllipsoid, arms) -> int:
    arms = np.asarray(arms, dtype=np.float64)
    if arms.ndim != 2 or arms.shape[0] == 0:
        raise InvalidInputError("arm set must be a non-empty (n, d) array")
    return int(np.argmax(ellipsoid.optimistic_values(arms)))


def lower_median(values) -> float:
    """The ceil(m/2)-th smallest of m values."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise InvalidInputError("median of an empty set")
    pos = (v.size + 1) // 2 - 1
    return float(np.partition(v, pos)[pos])


def group_median(payoffs, m: int) -> float:
    """Lower median of the means of m equal consecutive groups; any remainder is dropped."""
    y = np.asarray(payoffs, dtype=np.float64)
    size = y.size // m
    if m < 1 or size < 1:
        raise InvalidInputError(f"cannot split {y.size} payoffs into {m} groups")
    return lower_median(y[: m * size].reshape(m, size).mean(axis=1))


def median_of_means_select(estimates, V) -> tuple[int, np.ndarray]:
    """Pick the estimate whose lower-median V-distance to the others is smallest.

    Returns ``(k_star, r)`` with ties in ``r`` resolved to the lowest index.
    """
    est = np.atleast_2d(np.asarray(estimates, dtype=np.float64))
    L = np.linalg.cholesky(0.5 * (V + V.T))
    r = kernels.lower_median_distances(est @ L)  # ||a - b||_V = ||L^T (a - b)||
    return int(np.argmin(r)), r


# -- schedules --------------------------------------------------------------

def _tail_exponent(epsilon: float) -> float:
    return (1.0 - epsilon) / (2.0 * (1.0 + epsilon))


def menu_min_horizon(delta: float) -> float:
    return 256.0 + 24.0 * math.log(math.e / delta)


def menu_schedule(T: int, delta: float, check: bool = True) -> tuple[int, int]:
    """(k, N): pulls per epoch and number of epochs."""
    if check and T < menu_min_horizon(delta):
        raise ConfigError(
            f"MENU needs T >= 256 + 24*log(e/delta) = {menu_min_horizon(delta):.2f} (got T={T})"
        )
    k = math.ceil(24.0 * math.log(math.e * T / delta))
    N = T // k
    if N < 1:
        raise ConfigError(f"T={T} leaves no complete MENU epoch of k={k} pulls")
    return k, N


def menu_radius(n: int, d: int, c: float, epsilon: float, lam: float, S: float,
                const: float | None = None) -> float:
    const = MENU_RADIUS_CONSTANT if const is None else const
    return 3.0 * ((const * d * c) ** (1.0 / (1.0 + epsilon)) * n ** _tail_exponent(epsilon)
                  + math.sqrt(lam) * S)


def lse_radius(n: int, d: int, c: float, epsilon: float, lam: float, S: float,
               const: float | None = None) -> float:
    """Single-estimate radius holding with probability 3/4 (one third of ``menu_radius``)."""
    return menu_radius(n, d, c, epsilon, lam, S, const) / 3.0


def tofu_threshold(t: int, b: float, epsilon: float, d: int, T: int, delta: float,
                   convention: str = "proof") -> float:
    if convention == "proof":
        scale = (b / math.log(2.0 * d * T / delta)) ** (1.0 / (1.0 + epsilon))
    elif convention == "literal":
        scale = (b / math.log(2.0 * T / delta)) ** (1.0 / epsilon)
    else:
        raise ConfigError(f"unknown truncation convention {convention!r}")
    return scale * t ** _tail_exponent(epsilon)


def tofu_radius(t: int, b: float, epsilon: float, d: int, T: int, delta: float,
                lam: float, S: float) -> float:
    return (4.0 * math.sqrt(d) * b ** (1.0 / (1.0 + epsilon))
            * math.log(2.0 * d * T / delta) ** (epsilon / (1.0 + epsilon))
            * t ** _tail_exponent(epsilon) + math.sqrt(lam) * S)


def mom_schedule(T: int, epsilon: float, delta: float, groups: int | None = None) -> tuple[int, int, int]:
    """(N_m, k_m, m): epochs, pulls per epoch and payoff groups per epoch."""
    N = math.ceil(T ** (2.0 * epsilon / (1.0 + 3.0 * epsilon)))
    k = T // N
    if k < 1:
        raise ConfigError(f"T={T} too small for MoM")
    m = groups if groups is not None else min(k, math.ceil(8.0 * math.log(T / delta)))
    if not 1 <= m <= k:
        raise ConfigError(f"MoM group count {m} must lie in [1, {k}]")
    return N, k, m


def mom_radius(n: int, c: float, epsilon: float, m: int, k: int, lam: float, S: float,
               const: float = 1.0) -> float:
    return (const * (12.0 * c) ** (1.0 / (1.0 + epsilon)) * (m / k) ** (epsilon / (1.0 + epsilon))
            * math.sqrt(n) + math.sqrt(lam) * S)


def crt_threshold(t: int, b: float, epsilon: float, T: int, delta: float) -> float:
    return (b * t / math.log(2.0 * T / delta)) ** (1.0 / (1.0 + epsilon))


def crt_radius(t: int, b: float, epsilon: float, T: int, delta: float, d: int, D: float,
               lam: float, S: float, const: float = 4.0) -> float:
    return (const * b ** (1.0 / (1.0 + epsilon))
            * math.log(2.0 * T / delta) ** (epsilon / (1.0 + epsilon))
            * t ** _tail_exponent(epsilon)
            * math.sqrt(math.log(1.0 + t * D * D / (lam * d)) * d)
            + math.sqrt(lam) * S)


# -- policies ---------------------------------------------------------------

class _OptimisticPolicy:
    name = "base"
    pulls = 1
    n_decisions = 0

    def __init__(self, d: int, lam: float, S: float, radius_scale: float = 1.0,
                 center_override=None):
        self.d = d
        self.lam = lam
        self.S = S
        self.design = DesignState(d, lam)
        self.ellipsoid = ConfidenceEllipsoid.initial(self.design, S)
        self.radius_scale = radius_scale
        self.center_override = None if center_override is None else np.asarray(center_override, dtype=np.float64)
        if radius_scale != 1.0:
            self.ellipsoid.beta *= radius_scale

    def select(self, arms) -> int:
        if self.center_override is None:
            return select_optimistic_arm(self.ellipsoid, arms)
        pinned = ConfidenceEllipsoid(self.center_override, self.ellipsoid.beta, self.design)
        return select_optimistic_arm(pinned, arms)

    def _set_ellipsoid(self, center, beta) -> None:
        self.ellipsoid = ConfidenceEllipsoid(center, beta * self.radius_scale, self.design)

    def certify(self, theta_star) -> bool:
        return self.ellipsoid.contains(theta_star)

    def _payoffs(self, payoffs, expected: int) -> np.ndarray:
        y = np.atleast_1d(np.asarray(payoffs, dtype=np.float64))
        if y.shape != (expected,):
            raise InvalidInputError(f"{self.name} expects {expected} payoffs, got {y.size}")
        if not np.all(np.isfinite(y)):
            raise InvalidInputError("non-finite payoff")
        return y


class MenuPolicy(_OptimisticPolicy):
    """Median of means over k parallel least-squares estimates.

    Each epoch plays one arm k times; payoff j of every epoch feeds estimate j.
    Storage is the k running sums, independent of the number of epochs.
    """

    name = "menu"

    def __init__(self, d, c, epsilon, delta, lam, S, T, check_horizon=True, radius_const=None, **kw):
        super().__init__(d, lam, S, **kw)
        self.c, self.epsilon, self.delta, self.T = float(c), float(epsilon), float(delta), int(T)
        self.radius_const = radius_const
        self.k, self.N = menu_schedule(self.T, self.delta, check=check_horizon)
        self.pulls = self.k
        self.n_decisions = self.N
        self.n = 0
        self.group_sums = np.zeros((self.k, d))
        self.estimates = np.zeros((self.k, d))
        self.r = np.zeros(self.k)
        self.k_star = 0

    def update(self, x, payoffs) -> "MenuPolicy":
        y = self._payoffs(payoffs, self.k)
        x = np.asarray(x, dtype=np.float64)
        self.design.update(x)
        self.n += 1
        self.group_sums += np.outer(y, x)
        self.estimates = self.group_sums @ self.design.V_inv  # V_inv symmetric
        self.k_star, self.r = median_of_means_select(self.estimates, self.design.V)
        beta = menu_radius(self.n, self.d, self.c, self.epsilon, self.lam, self.S, self.radius_const)
        self._set_ellipsoid(self.estimates[self.k_star].copy(), beta)
        return self


class TofuPolicy(_OptimisticPolicy):
    """Per-dimension truncation of the whole payoff history, every round."""

    name = "tofu"

    def __init__(self, d, b, epsilon, delta, lam, S, T, truncation_convention="proof", **kw):
        super().__init__(d, lam, S, **kw)
        if truncation_convention not in CONVENTIONS:
            raise ConfigError(f"truncation convention must be one of {CONVENTIONS}")
        self.b, self.epsilon, self.delta, self.T = float(b), float(epsilon), float(delta), int(T)
        self.convention = truncation_convention
        self.n_decisions = self.T
        self.t = 0
        self._arms = np.zeros((max(self.T, 1), d))
        self._payoff_hist = np.zeros(max(self.T, 1))
        self.last_threshold = 0.0
        self.last_clipped = 0

    @property
    def history_arms(self) -> np.ndarray:
        return self._arms[:self.t]

    @property
    def history_payoffs(self) -> np.ndarray:
        return self._payoff_hist[:self.t]

    def threshold(self, t: int) -> float:
        return tofu_threshold(t, self.b, self.epsilon, self.d, self.T, self.delta, self.convention)

    def update(self, x, payoffs) -> "TofuPolicy":
        y = self._payoffs(payoffs, 1)
        x = np.asarray(x, dtype=np.float64)
        if self.t >= self._arms.shape[0]:
            self._arms = np.vstack([self._arms, np.zeros_like(self._arms)])
            self._payoff_hist = np.concatenate([self._payoff_hist, np.zeros_like(self._payoff_hist)])
        self._arms[self.t] = x
        self._payoff_hist[self.t] = y[0]
        self.t += 1
        self.design.update(x)
        M = inv_sqrt(self.design)
        U = M @ self.history_arms.T
        self.last_threshold = self.threshold(self.t)
        z, self.last_clipped = kernels.truncated_projection(
            U, self.history_payoffs, self.last_threshold, self.convention == "proof")
        beta = tofu_radius(self.t, self.b, self.epsilon, self.d, self.T, self.delta, self.lam, self.S)
        self._set_ellipsoid(M @ z, beta)
        return self


class MomPolicy(_OptimisticPolicy):
    """Median of means of raw payoffs per epoch, then one ridge fit on the medians."""

    name = "mom"

    def __init__(self, d, c, epsilon, delta, lam, S, T, groups=None, const=1.0, **kw):
        super().__init__(d, lam, S, **kw)
        self.c, self.epsilon, self.delta, self.T = float(c), float(epsilon), float(delta), int(T)
        self.const = const
        self.N, self.k, self.m = mom_schedule(self.T, self.epsilon, self.delta, groups)
        self.pulls = self.k
        self.n_decisions = self.N
        self.group_size = self.k // self.m
        self.n = 0
        self.s = np.zeros(d)
        self.medians: list[float] = []

    def epoch_median(self, payoffs) -> float:
        return group_median(payoffs, self.m)

    def update(self, x, payoffs) -> "MomPolicy":
        y = self._payoffs(payoffs, self.k)
        x = np.asarray(x, dtype=np.float64)
        med = self.epoch_median(y)
        self.medians.append(med)
        self.design.update(x)
        self.n += 1
        self.s += med * x
        beta = mom_radius(self.n, self.c, self.epsilon, self.m, self.k, self.lam, self.S, self.const)
        self._set_ellipsoid(self.design.V_inv @ self.s, beta)
        return self


class CrtPolicy(_OptimisticPolicy):
    """Ridge regression on payoffs truncated once, at observation time."""

    name = "crt"

    def __init__(self, d, b, epsilon, delta, lam, S, T, D, const=4.0, **kw):
        super().__init__(d, lam, S, **kw)
        self.b, self.epsilon, self.delta, self.T, self.D = float(b), float(epsilon), float(delta), int(T), float(D)
        self.const = const
        self.n_decisions = self.T
        self.t = 0
        self.s = np.zeros(d)
        self.n_clipped = 0

    def threshold(self, t: int) -> float:
        return crt_threshold(t, self.b, self.epsilon, self.T, self.delta)

    def update(self, x, payoffs) -> "CrtPolicy":
        y = float(self._payoffs(payoffs, 1)[0])
        x = np.asarray(x, dtype=np.float64)
        self.t += 1
        if abs(y) > self.threshold(self.t):
            y = 0.0
            self.n_clipped += 1
        self.design.update(x)
        self.s += y * x
        beta = crt_radius(self.t, self.b, self.epsilon, self.T, self.delta, self.d, self.D,
                          self.lam, self.S, self.const)
        self._set_ellipsoid(self.design.V_inv @ self.s, beta)
        return self


# -- configuration ----------------------------------------------------------

@dataclass
class AlgoConfig:
    algo: str
    lam: float = 1.0
    delta: float = 0.1
    S: float | str = "auto"
    moment_bound: float | str = "from-instance"
    epsilon: float | None = None
    truncation_convention: str = "proof"
    mom_groups: int | None = None
    mom_const: float = 1.0
    crt_const: float = 4.0
    radius_scale: float = 1.0
    center_override: list[float] | None = None
    extra: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.algo = str(self.algo).lower()
        if self.algo not in ALGOS:
            raise ConfigError(f"unknown algo {self.algo!r}; expected one of {ALGOS}")
        if self.truncation_convention not in CONVENTIONS:
            raise ConfigError(f"truncation convention must be one of {CONVENTIONS}")
        if not self.lam > 0:
            raise ConfigError("lambda must be positive")
        if not 0 < self.delta < 1:
            raise ConfigError("delta must lie in (0, 1)")

    _ALIASES = {"lambda": "lam"}

    @classmethod
    def from_dict(cls, obj: dict[str, Any]) -> "AlgoConfig":
        known = {f for f in cls.__dataclass_fields__ if f != "extra"}
        kwargs, extra = {}, {}
        for key, value in obj.items():
            key = cls._ALIASES.get(key, key.replace("-", "_"))
            (kwargs if key in known else extra)[key] = value
        return cls(**kwargs, extra=extra)

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        out["lambda"] = out.pop("lam")
        return out


def make_policy(cfg: AlgoConfig, instance, T: int, check_horizon: bool = True):
    """Instantiate the configured policy for ``instance`` and horizon ``T``."""
    eps = instance.epsilon if cfg.epsilon is None else float(cfg.epsilon)
    S = instance.S if cfg.S == "auto" else float(cfg.S)
    common = {"radius_scale": cfg.radius_scale, "center_override": cfg.center_override}
    if cfg.algo in ("menu", "mom"):
        # central-moment algorithms; raw bound used when that is all we have
        if cfg.moment_bound == "from-instance":
            c = instance.bound_c if instance.bound_c is not None else instance.bound_b
        else:
            c = float(cfg.moment_bound)
        if cfg.algo == "menu":
            return MenuPolicy(instance.d, c, eps, cfg.delta, cfg.lam, S, T,
                              check_horizon=check_horizon, **common)
        return MomPolicy(instance.d, c, eps, cfg.delta, cfg.lam, S, T,
                         groups=cfg.mom_groups, const=cfg.mom_const, **common)
    if cfg.moment_bound == "from-instance":
        if instance.bound_b is None:
            raise ConfigError(f"{cfg.algo} needs a raw-moment bound; pass moment_bound explicitly")
        b = instance.bound_b
    else:
        b = float(cfg.moment_bound)
    if cfg.algo == "tofu":
        return TofuPolicy(instance.d, b, eps, cfg.delta, cfg.lam, S, T,
                          truncation_convention=cfg.truncation_convention, **common)
    return CrtPolicy(instance.d, b, eps, cfg.delta, cfg.lam, S, T, instance.D,
                     const=cfg.crt_const, **common)
