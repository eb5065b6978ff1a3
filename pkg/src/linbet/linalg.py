"""Design-matrix maintenance and the dense primitives the policies share.

``DesignState`` keeps ``V = lambda*I + sum x x^T`` together with an inverse
that is updated by Sherman-Morrison and rebuilt from scratch every
``REFACTOR_EVERY`` updates.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InternalError, InvalidInputError

REFACTOR_EVERY = 256
NEG_QUAD_TOL = 1e-12


def _as_vector(x, d: int | None = None) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise InvalidInputError(f"expected a vector, got shape {v.shape}")
    if d is not None and v.shape[0] != d:
        raise InvalidInputError(f"expected length {d}, got {v.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise InvalidInputError("vector has non-finite entries")
    return v


@dataclass
class DesignState:
    """Regularized Gram matrix with a maintained inverse.

    Attributes
    ----------
    dim : int
        Arm dimension d.
    lam : float
        Ridge regularizer; ``V`` starts at ``lam * I``.
    V, V_inv : ndarray
        The Gram matrix and its inverse.
    log_det_ratio : float
        ``log det(V) - log det(lam * I)``.
    t : int
        Number of rank-one updates applied.
    """

    dim: int
    lam: float = 1.0
    V: np.ndarray = field(init=False, repr=False)
    V_inv: np.ndarray = field(init=False, repr=False)
    log_det_ratio: float = field(init=False, default=0.0)
    t: int = field(init=False, default=0)
    _since_refactor: int = field(init=False, default=0, repr=False)

    def __post_init__(self):
        if int(self.dim) < 1:
            raise InvalidInputError("dim must be a positive integer")
        if not (self.lam > 0 and np.isfinite(self.lam)):
            raise InvalidInputError("lambda must be positive and finite")
        self.dim = int(self.dim)
        self.lam = float(self.lam)
        self.V = self.lam * np.eye(self.dim)
        self.V_inv = np.eye(self.dim) / self.lam

    def update(self, x) -> "DesignState":
        x = _as_vector(x, self.dim)
        Vx = self.V_inv @ x
        denom = 1.0 + float(x @ Vx)
        self.V += np.outer(x, x)
        self.t += 1
        self._since_refactor += 1
        if self._since_refactor >= REFACTOR_EVERY or not np.isfinite(denom) or denom < 1.0:
            self.refactor()
        else:
            self.V_inv -= np.outer(Vx, Vx) / denom
            # keep exact symmetry; roundoff otherwise accumulates skew
            self.V_inv = 0.5 * (self.V_inv + self.V_inv.T)
            self.log_det_ratio += np.log(denom)
        return self

    def refactor(self) -> None:
        """Rebuild ``V_inv`` and the log-determinant from ``V`` via Cholesky."""
        self.V = 0.5 * (self.V + self.V.T)
        L = np.linalg.cholesky(self.V)
        L_inv = np.linalg.solve(L, np.eye(self.dim))
        self.V_inv = L_inv.T @ L_inv
        self.log_det_ratio = 2.0 * float(np.sum(np.log(np.diag(L)))) - self.dim * np.log(self.lam)
        self._since_refactor = 0

    def copy(self) -> "DesignState":
        new = DesignState(self.dim, self.lam)
        new.V = self.V.copy()
        new.V_inv = self.V_inv.copy()
        new.log_det_ratio = self.log_det_ratio
        new.t = self.t
        new._since_refactor = self._since_refactor
        return new


def update_design(state: DesignState, x) -> DesignState:
    return state.update(x)


def weighted_norm(A, x) -> float:
    """sqrt(x^T A x), with tiny negative roundoff clamped to zero."""
    x = _as_vector(x)
    q = float(x @ (np.asarray(A, dtype=np.float64) @ x))
    if q < 0.0:
        if q > -NEG_QUAD_TOL:
            return 0.0
        raise InternalError(f"negative quadratic form {q!r}; matrix is not PSD")
    return float(np.sqrt(q))


def weighted_norms(A, X) -> np.ndarray:
    """Row-wise ``weighted_norm`` for a stack of vectors."""
    X = np.asarray(X, dtype=np.float64)
    q = np.einsum("ij,jk,ik->i", X, np.asarray(A, dtype=np.float64), X)
    if np.any(q < -NEG_QUAD_TOL):
        raise InternalError("negative quadratic form; matrix is not PSD")
    return np.sqrt(np.maximum(q, 0.0))


def ridge_solve(state: DesignState, s) -> np.ndarray:
    return state.V_inv @ _as_vector(s, state.dim)


def inv_sqrt(state: DesignState) -> np.ndarray:
    """Symmetric M with M @ M = V^{-1}, from an eigendecomposition of V."""
    w, Q = np.linalg.eigh(0.5 * (state.V + state.V.T))
    if w[0] < 0.5 * state.lam:
        raise InternalError(f"smallest eigenvalue {w[0]!r} below lambda/2")
    M = (Q / np.sqrt(w)) @ Q.T
    return 0.5 * (M + M.T)


def compute_weight_rows(state: DesignState, history_arms, M=None) -> np.ndarray:
    """Rows u_1..u_d of V^{-1/2} X^T as a (d, t) array.

    ``M`` may be passed when the caller already holds ``inv_sqrt(state)``.
    """
    X = np.asarray(history_arms, dtype=np.float64).reshape(-1, state.dim)
    if X.shape[0] != state.t:
        raise InvalidInputError(f"history has {X.shape[0]} arms but the design has {state.t} updates")
    if M is None:
        M = inv_sqrt(state)
    return M @ X.T


def lp_norm(u, p: float) -> float:
    return float(np.sum(np.abs(u) ** p) ** (1.0 / p))


def weight_row_bound(t: int, epsilon: float) -> float:
    """Upper bound t^{(1-eps)/(2(1+eps))} on the (1+eps)-norm of a weight row."""
    return float(t) ** ((1.0 - epsilon) / (2.0 * (1.0 + epsilon)))
