"""Finite populations of potential outcomes and their moment quantities.

All moments use divisor N and are computed on column-centered data, so
callers may pass uncentered populations.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import (
    ConditioningWarning,
    InvalidArgumentError,
    SingularDesignError,
    SingularMatrixError,
)

PIVOT_RTOL = 1e-12
CONDITION_WARN = 1e8


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Population:
    """Potential outcomes ``y`` (N x J) and covariates ``x`` (N x p)."""

    y: np.ndarray
    x: np.ndarray
    meta: dict | None = None

    def __init__(self, y, x=None, meta: dict | None = None) -> None:
        y = np.asarray(y, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        if y.ndim != 2:
            raise InvalidArgumentError("y must be an N x J matrix")
        if x is None:
            x = np.empty((y.shape[0], 0))
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2 or x.shape[0] != y.shape[0]:
            raise InvalidArgumentError(
                f"x must have {y.shape[0]} rows to match y, got shape {x.shape}"
            )
        n, j = y.shape
        if j < 1:
            raise InvalidArgumentError("y needs at least one arm column")
        if n < 2 * j:
            raise InvalidArgumentError(f"need N >= 2J units, got N={n}, J={j}")
        if not (np.isfinite(y).all() and np.isfinite(x).all()):
            raise InvalidArgumentError("population contains NaN or infinite values")
        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "x", _frozen(x))
        object.__setattr__(self, "meta", meta)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def j(self) -> int:
        return self.y.shape[1]

    @property
    def p(self) -> int:
        return self.x.shape[1]


@dataclass(frozen=True, eq=False)
class MomentSummary:
    """Finite-N second moments; ``lam`` and ``zeta`` are p x J (column j per arm)."""

    sigma: np.ndarray
    omega: np.ndarray
    lam: np.ndarray
    zeta: np.ndarray
    sigma_tilde: np.ndarray
    ybar: np.ndarray
    xbar: np.ndarray
    n: int

    @property
    def j(self) -> int:
        return self.sigma.shape[0]

    @property
    def p(self) -> int:
        return self.omega.shape[0]


def center(pop: Population) -> Population:
    return Population(pop.y - pop.y.mean(axis=0), pop.x - pop.x.mean(axis=0), pop.meta)


def pivoted_cholesky(a, rtol: float = PIVOT_RTOL) -> tuple[np.ndarray, np.ndarray]:
    """Diagonally pivoted Cholesky: ``a[piv][:, piv] == L @ L.T``.

    Raises SingularMatrixError when the largest remaining pivot falls below
    ``rtol * max(diag(a))``; ``err.dependent`` lists the (0-based) indices
    that are numerically spanned by the ones already eliminated.
    """
    w = np.array(a, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise InvalidArgumentError(f"matrix must be square, got shape {w.shape}")
    n = w.shape[0]
    scale = max(float(np.abs(w).max(initial=0.0)), 1.0)
    if not np.allclose(w, w.T, rtol=0.0, atol=1e-12 * scale):
        raise InvalidArgumentError("matrix is not symmetric")
    piv = np.arange(n)
    tol = rtol * float(np.max(np.diag(w), initial=0.0))
    for k in range(n):
        q = k + int(np.argmax(np.diag(w)[k:]))
        if q != k:
            w[[k, q], :] = w[[q, k], :]
            w[:, [k, q]] = w[:, [q, k]]
            piv[[k, q]] = piv[[q, k]]
        d = w[k, k]
        if d <= tol or d <= 0.0:
            raise SingularMatrixError(
                f"pivot {d:.3e} at step {k} is below tolerance {tol:.3e}",
                dependent=tuple(int(i) for i in piv[k:]),
            )
        w[k, k] = np.sqrt(d)
        w[k + 1 :, k] /= w[k, k]
        w[k + 1 :, k + 1 :] -= np.outer(w[k + 1 :, k], w[k + 1 :, k])
    return np.tril(w), piv


def solve_spd(a, b, rtol: float = PIVOT_RTOL) -> np.ndarray:
    """Solve ``a @ v = b`` for symmetric positive definite ``a``.

    ``b`` may be a vector or a matrix of right-hand sides.
    """
    b = np.asarray(b, dtype=float)
    lower, piv = pivoted_cholesky(a, rtol)
    if b.shape[0] != lower.shape[0]:
        raise InvalidArgumentError(f"rhs has {b.shape[0]} rows, matrix is {lower.shape[0]}")
    z = solve_triangular(lower, b[piv], lower=True)
    w = solve_triangular(lower.T, z, lower=False)
    v = np.empty_like(w)
    v[piv] = w
    return v


def _covariate_names(idx) -> str:
    return ", ".join(f"x_{i + 1}" for i in sorted(idx))


def solve_gram(omega: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve against the covariate Gram matrix, translating singularity into design errors."""
    try:
        out = solve_spd(omega, rhs)
    except SingularMatrixError as err:
        dependent = set(err.dependent)
        basis = set(range(omega.shape[0])) - dependent
        raise SingularDesignError(
            f"covariate Gram matrix is singular: {_covariate_names(dependent)} "
            f"lie in the span of [{_covariate_names(basis)}] (or are constant)",
            dependent=err.dependent,
        ) from None
    cond = np.linalg.cond(omega)
    if cond > CONDITION_WARN:
        warnings.warn(
            f"covariate Gram matrix condition number {cond:.3e} exceeds {CONDITION_WARN:.0e}",
            ConditioningWarning,
            stacklevel=3,
        )
    return out


def moments(pop: Population) -> MomentSummary:
    n = pop.n
    ybar = pop.y.mean(axis=0)
    xbar = pop.x.mean(axis=0)
    yc = pop.y - ybar
    xc = pop.x - xbar
    sigma = yc.T @ yc / n
    if np.any(np.diag(sigma) <= 0.0):
        bad = [j + 1 for j in np.flatnonzero(np.diag(sigma) <= 0.0)]
        raise InvalidArgumentError(f"potential outcomes for arm(s) {bad} have zero variance")
    omega = xc.T @ xc / n
    lam = xc.T @ yc / n
    if pop.p:
        zeta = solve_gram(omega, lam)
        sigma_tilde = sigma - lam.T @ zeta
        sigma_tilde = (sigma_tilde + sigma_tilde.T) / 2
    else:
        zeta = np.empty((0, pop.j))
        sigma_tilde = sigma.copy()
    return MomentSummary(
        sigma=_frozen(sigma),
        omega=_frozen(omega),
        lam=_frozen(lam),
        zeta=_frozen(zeta),
        sigma_tilde=_frozen(sigma_tilde),
        ybar=_frozen(ybar),
        xbar=_frozen(xbar),
        n=n,
    )


def residuals(pop: Population, ms: MomentSummary) -> np.ndarray:
    """N x J matrix of Y_i(z_j) - X_i' zeta_j on centered data."""
    if ms.zeta.shape != (pop.p, pop.j):
        raise InvalidArgumentError(
            f"moment summary is for p={ms.p}, J={ms.j}; population has p={pop.p}, J={pop.j}"
        )
    yc = pop.y - pop.y.mean(axis=0)
    xc = pop.x - pop.x.mean(axis=0)
    return yc - xc @ ms.zeta
