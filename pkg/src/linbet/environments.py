"""Simulated heavy-tailed linear bandit worlds.

Two families live here: the synthetic datasets S1-S4 (uniform arms and
parameter, Student-t or Pareto payoffs) and the two-point construction used
for the regret lower bound.

Payoff randomness is split into arm-independent *primitives* (one per round)
and a deterministic map from (arm, primitive) to payoff. Running every
policy against the same primitive stream gives common random numbers across
algorithms.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import ConfigError, InvalidInputError

STUDENT_T = "student_t"
PARETO = "pareto"
LOWER_BOUND = "lower_bound_bernoulli"

DATASETS = {
    "S1": {"n_arms": 20, "d": 10, "noise": {"kind": STUDENT_T, "dof": 3.0, "loc": 0.0, "scale": 1.0}, "epsilon": 1.0},
    "S2": {"n_arms": 100, "d": 20, "noise": {"kind": STUDENT_T, "dof": 3.0, "loc": 0.0, "scale": 1.0}, "epsilon": 1.0},
    "S3": {"n_arms": 20, "d": 10, "noise": {"kind": PARETO, "shape": 2.0}, "epsilon": 0.5},
    "S4": {"n_arms": 100, "d": 20, "noise": {"kind": PARETO, "shape": 2.0}, "epsilon": 0.5},
}

LB_GRID_POINTS = 9
LB_MAX_ARMS = 4096


@dataclass(frozen=True)
class NoiseModel:
    kind: str
    dof: float = 3.0
    loc: float = 0.0
    scale: float = 1.0
    shape: float = 2.0
    delta_gap: float = 0.0
    epsilon: float = 1.0

    def to_dict(self) -> dict[str, Any]:
        if self.kind == STUDENT_T:
            return {"kind": self.kind, "dof": self.dof, "loc": self.loc, "scale": self.scale}
        if self.kind == PARETO:
            return {"kind": self.kind, "shape": self.shape}
        return {"kind": self.kind, "delta_gap": self.delta_gap, "epsilon": self.epsilon}

    @classmethod
    def from_dict(cls, obj: dict[str, Any]) -> "NoiseModel":
        kind = obj.get("kind")
        if kind == STUDENT_T:
            return cls(kind, dof=float(obj.get("dof", 3.0)), loc=float(obj.get("loc", 0.0)),
                       scale=float(obj.get("scale", 1.0)))
        if kind == PARETO:
            return cls(kind, shape=float(obj.get("shape", 2.0)))
        if kind == LOWER_BOUND:
            return cls(kind, delta_gap=float(obj["delta_gap"]), epsilon=float(obj["epsilon"]))
        raise ConfigError(f"unknown noise kind {kind!r}")


@dataclass
class BanditInstance:
    arms: np.ndarray
    theta_star: np.ndarray
    noise: NoiseModel
    epsilon: float
    bound_b: float | None = None
    bound_c: float | None = None
    D: float = 1.0
    S: float = 1.0
    L: float = 1.0
    name: str = "custom"
    means: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.arms = np.atleast_2d(np.asarray(self.arms, dtype=np.float64))
        self.theta_star = np.asarray(self.theta_star, dtype=np.float64)
        if self.arms.shape[0] == 0:
            raise InvalidInputError("empty arm set")
        if self.arms.shape[1] != self.theta_star.shape[0]:
            raise InvalidInputError("arm dimension does not match theta_star")
        if not 0.0 < self.epsilon <= 1.0:
            raise InvalidInputError("epsilon must lie in (0, 1]")
        if self.bound_b is None and self.bound_c is None:
            raise InvalidInputError("at least one of bound_b, bound_c is required")
        self.arms.setflags(write=False)
        self.theta_star.setflags(write=False)
        self.means = self.arms @ self.theta_star
        self.means.setflags(write=False)

    @property
    def d(self) -> int:
        return self.arms.shape[1]

    @property
    def n_arms(self) -> int:
        return self.arms.shape[0]

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "arms": self.arms.tolist(),
            "theta_star": self.theta_star.tolist(),
            "noise": self.noise.to_dict(),
            "epsilon": self.epsilon,
            "bound_b": self.bound_b,
            "bound_c": self.bound_c,
            "D": self.D,
            "S": self.S,
            "L": self.L,
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def from_dict(cls, obj: dict[str, Any]) -> "BanditInstance":
        return cls(
            arms=np.array(obj["arms"], dtype=np.float64),
            theta_star=np.array(obj["theta_star"], dtype=np.float64),
            noise=NoiseModel.from_dict(obj["noise"]),
            epsilon=float(obj["epsilon"]),
            bound_b=obj.get("bound_b"),
            bound_c=obj.get("bound_c"),
            D=float(obj["D"]),
            S=float(obj["S"]),
            L=float(obj["L"]),
            name=obj.get("name", "custom"),
        )


@dataclass
class LowerBoundInstance:
    d: int
    epsilon: float
    delta_gap: float
    theta_star: np.ndarray
    arms: np.ndarray

    def analytic_raw_moments(self) -> np.ndarray:
        """Exact E|y|^{1+eps} = theta^T x / Delta for every arm."""
        return (self.arms @ self.theta_star) / self.delta_gap

    def regret_floor(self, T: int) -> float:
        return self.d / 192.0 * T ** (1.0 / (1.0 + self.epsilon))

    def to_bandit(self) -> BanditInstance:
        means = self.arms @ self.theta_star
        return BanditInstance(
            arms=self.arms,
            theta_star=self.theta_star,
            noise=NoiseModel(LOWER_BOUND, delta_gap=self.delta_gap, epsilon=self.epsilon),
            epsilon=self.epsilon,
            bound_b=float(self.d),
            bound_c=float(self.d),
            D=math.sqrt(self.d / 2.0),
            S=float(np.linalg.norm(self.theta_star)),
            L=float(np.max(np.abs(means))),
            name=f"LB-d{self.d}",
        )


def pareto_scale(mean: np.ndarray | float, shape: float) -> np.ndarray:
    """Pareto scale s_m giving the requested mean: mean = shape * s_m / (shape - 1)."""
    return np.asarray(mean) * (shape - 1.0) / shape


def pareto_raw_moment(scale, shape: float, order: float):
    """E[Y^order] for Pareto(shape, scale), finite for order < shape."""
    if order >= shape:
        return np.inf
    return shape * np.asarray(scale) ** order / (shape - order)


def student_t_central_moment(dof: float, scale: float, order: float) -> float:
    """E|scale * T_dof|^order, finite for order < dof."""
    if order >= dof:
        return math.inf
    log_m = (order / 2.0) * math.log(dof) + math.lgamma((order + 1) / 2) + math.lgamma((dof - order) / 2) \
        - 0.5 * math.log(math.pi) - math.lgamma(dof / 2)
    return scale ** order * math.exp(log_m)


def _resolve_spec(spec) -> tuple[str, dict[str, Any]]:
    if isinstance(spec, str):
        key = spec.upper()
        if key not in DATASETS:
            raise ConfigError(f"unknown dataset id {spec!r}; expected one of {sorted(DATASETS)}")
        return key, DATASETS[key]
    if isinstance(spec, dict):
        if "dataset" in spec:
            return _resolve_spec(spec["dataset"])
        try:
            return "custom", {
                "n_arms": int(spec["n_arms"]),
                "d": int(spec["d"]),
                "noise": dict(spec["noise"]),
                "epsilon": float(spec.get("epsilon", 1.0)),
            }
        except KeyError as exc:
            raise ConfigError(f"custom instance spec missing {exc}") from None
    raise ConfigError(f"cannot interpret instance spec {spec!r}")


def generate_instance(spec, seed: int) -> BanditInstance:
    """Draw arms and theta_star uniformly on [0, 1]^d and attach moment bounds."""
    name, cfg = _resolve_spec(spec)
    n_arms, d, eps = cfg["n_arms"], cfg["d"], cfg["epsilon"]
    if n_arms < 1 or d < 1:
        raise ConfigError("n_arms and d must be positive")
    noise = NoiseModel.from_dict(cfg["noise"])
    if noise.kind == LOWER_BOUND:
        raise ConfigError("use lower_bound_instance for the two-point construction")
    rng = np.random.default_rng(seed)
    arms = rng.uniform(0.0, 1.0, size=(n_arms, d))
    theta = rng.uniform(0.0, 1.0, size=d)
    means = arms @ theta
    bound_b = bound_c = None
    if noise.kind == STUDENT_T:
        if noise.dof <= 1.0 + eps:
            raise ConfigError("Student-t needs dof > 1 + epsilon")
        bound_c = student_t_central_moment(noise.dof, noise.scale, 1.0 + eps)
    else:
        if noise.shape <= 1.0 + eps:
            raise ConfigError("Pareto needs shape > 1 + epsilon")
        if np.any(means <= 0):
            raise ConfigError("Pareto payoffs need positive arm means")
        bound_b = float(np.max(pareto_raw_moment(pareto_scale(means, noise.shape), noise.shape, 1.0 + eps)))
    return BanditInstance(
        arms=arms,
        theta_star=theta,
        noise=noise,
        epsilon=eps,
        bound_b=bound_b,
        bound_c=bound_c,
        D=math.sqrt(d),
        S=math.sqrt(d),
        L=float(np.max(np.abs(means))),
        name=name,
    )


def optimal_value(instance: BanditInstance) -> tuple[int, float]:
    means = instance.arms @ instance.theta_star
    if means.size == 0:
        raise InvalidInputError("empty arm set")
    idx = int(np.argmax(means))  # first maximum
    return idx, float(means[idx])


# -- payoff generation -------------------------------------------------------

def draw_primitives(noise: NoiseModel, rng: np.random.Generator, size: int) -> np.ndarray:
    """Arm-independent randomness for ``size`` rounds.

    Student-t: the standardized noise value. Pareto and lower bound: a uniform.
    """
    if noise.kind == STUDENT_T:
        z = rng.standard_normal(size)
        w = rng.chisquare(noise.dof, size)
        return z * np.sqrt(noise.dof / w)
    return rng.random(size)


def payoffs_from_primitives(instance: BanditInstance, arm_index: int, prims: np.ndarray) -> np.ndarray:
    mean = float(instance.means[arm_index])
    noise = instance.noise
    if noise.kind == STUDENT_T:
        return mean + noise.loc + noise.scale * prims
    if noise.kind == PARETO:
        s_m = float(pareto_scale(mean, noise.shape))
        return s_m * (1.0 - prims) ** (-1.0 / noise.shape)
    p = noise.delta_gap ** (1.0 / noise.epsilon) * mean
    if p > 1.0 or p < 0.0:
        raise ConfigError(f"success probability {p!r} outside [0, 1]")
    high = (1.0 / noise.delta_gap) ** (1.0 / noise.epsilon)
    return np.where(prims < p, high, 0.0)


def sample_payoff(instance: BanditInstance, arm_index: int, rng: np.random.Generator) -> float:
    if not 0 <= arm_index < instance.n_arms:
        raise InvalidInputError(f"arm index {arm_index} out of range")
    return float(payoffs_from_primitives(instance, arm_index, draw_primitives(instance.noise, rng, 1))[0])


class PayoffStream:
    """Per-round payoff source for one repetition.

    Primitives are drawn in fixed-size blocks in round order, so the value
    used at round t does not depend on how many rounds a policy consumes at
    once. Rounds must be consumed in increasing order.
    """

    BLOCK = 4096

    def __init__(self, instance: BanditInstance, seed_seq: np.random.SeedSequence | int):
        self.instance = instance
        self._rng = np.random.default_rng(seed_seq)
        self._buf = np.empty(0)
        self._start = 0  # round index of _buf[0]

    def _ensure(self, stop: int) -> None:
        while self._start + self._buf.size < stop:
            block = draw_primitives(self.instance.noise, self._rng, self.BLOCK)
            self._buf = np.concatenate([self._buf, block])

    def primitives(self, start: int, count: int) -> np.ndarray:
        if start < self._start:
            raise InvalidInputError("rounds must be consumed in order")
        self._ensure(start + count)
        lo = start - self._start
        out = self._buf[lo:lo + count].copy()
        # drop consumed prefix
        self._buf = self._buf[lo + count:]
        self._start = start + count
        return out

    def payoffs(self, arm_index: int, start: int, count: int) -> np.ndarray:
        return payoffs_from_primitives(self.instance, arm_index, self.primitives(start, count))


def repetition_seed(root_seed: int, rep: int) -> np.random.SeedSequence:
    """Substream for repetition ``rep``: the root seed and the index hashed together."""
    return np.random.SeedSequence([int(root_seed), int(rep)])


# -- moment checks -----------------------------------------------------------

def verify_moment_bound(instance: BanditInstance, n_samples: int, rng: np.random.Generator) -> dict[str, Any]:
    """Monte Carlo estimate of the worst-arm (1+eps) moment against the declared bound.

    Uses the central moment when ``bound_c`` is declared, the raw one otherwise.
    """
    if n_samples < 10_000:
        raise InvalidInputError("n_samples must be at least 10^4")
    order = 1.0 + instance.epsilon
    central = instance.bound_c is not None and instance.noise.kind != LOWER_BOUND
    declared = instance.bound_c if central else instance.bound_b
    worst, worst_rse = -np.inf, 0.0
    for a in range(instance.n_arms):
        y = payoffs_from_primitives(instance, a, draw_primitives(instance.noise, rng, n_samples))
        v = np.abs(y - instance.means[a]) ** order if central else np.abs(y) ** order
        m = float(v.mean())
        if m > worst:
            worst = m
            worst_rse = float(v.std() / math.sqrt(n_samples) / m) if m > 0 else 0.0
    report = {
        "empirical_moment": worst,
        "declared_bound": float(declared),
        "kind": "central" if central else "raw",
        "pass": bool(worst <= declared * (1.0 + 5.0 * worst_rse)),
    }
    if instance.noise.kind == LOWER_BOUND:
        analytic = instance.means / instance.noise.delta_gap
        report["analytic_moment"] = float(np.max(analytic))
    return report


# -- lower-bound construction -------------------------------------------------

def lower_bound_gap(d: int, epsilon: float, T: int) -> float:
    raw = T ** (-epsilon / (1.0 + epsilon)) / 12.0
    return float(min(raw, 1.0 / d, 0.5 ** (epsilon / (1.0 + epsilon))))


def lower_bound_instance(d: int, epsilon: float, T: int, seed: int) -> LowerBoundInstance:
    """Two-point payoff world on a grid discretization of the pair-simplex product."""
    if d < 2 or d % 2:
        raise InvalidInputError(f"d must be even and >= 2 (got {d}); drop one dimension for odd d")
    if not 0.0 < epsilon <= 1.0:
        raise InvalidInputError("epsilon must lie in (0, 1]")
    if T < (d / 12.0) ** (epsilon / (1.0 + epsilon)):
        raise ConfigError(f"T={T} is below (d/12)^(eps/(1+eps)) required by the lower-bound construction")
    delta = lower_bound_gap(d, epsilon, T)
    rng = np.random.default_rng(seed)
    pairs = d // 2
    first_is_big = rng.integers(0, 2, size=pairs).astype(bool)
    theta = np.empty(d)
    theta[0::2] = np.where(first_is_big, 2 * delta, delta)
    theta[1::2] = np.where(first_is_big, delta, 2 * delta)

    grid = np.linspace(0.0, 1.0, LB_GRID_POINTS)
    n_total = LB_GRID_POINTS ** pairs
    best = np.where(first_is_big, 1.0, 0.0)
    if n_total <= LB_MAX_ARMS:
        firsts = np.array(list(itertools.product(grid, repeat=pairs)))
    else:
        # uniform subsample of grid points; the optimal vertex is always kept
        picks = rng.integers(0, LB_GRID_POINTS, size=(LB_MAX_ARMS - 1, pairs))
        firsts = np.vstack([best[None, :], grid[picks]])
        firsts = np.unique(firsts, axis=0)
    arms = np.empty((firsts.shape[0], d))
    arms[:, 0::2] = firsts
    arms[:, 1::2] = 1.0 - firsts
    return LowerBoundInstance(d=d, epsilon=float(epsilon), delta_gap=delta, theta_star=theta, arms=arms)
