"""Unadjusted and covariate-adjusted estimators of factorial effects.

Every estimator here is a function of the observed outcome vector only;
``observed_outcomes`` is the single place a full potential-outcome table
is read, and it reads one cell per unit.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .design import ModelMatrix
from .errors import EmptyCovariatesError, InvalidArgumentError
from .population import Population, solve_gram
from .randomization import Assignment


class Method(str, enum.Enum):
    UNADJUSTED = "unadjusted"
    COVARIATE_ADJUSTED = "covariate_adjusted"


@dataclass(frozen=True, eq=False)
class ObservedSummary:
    ybar_obs: np.ndarray  # (J,)
    xbar_obs: np.ndarray  # (p, J): column j is the arm-j covariate mean
    counts: tuple[int, ...]


@dataclass(frozen=True, eq=False)
class EffectEstimates:
    tau: np.ndarray  # index l - 1 holds effect l
    method: Method
    ybar_used: np.ndarray
    beta_hat: np.ndarray | None = None


def observed_outcomes(pop: Population, a: Assignment) -> np.ndarray:
    if a.n != pop.n or a.j != pop.j:
        raise InvalidArgumentError(
            f"assignment is for N={a.n}, J={a.j}; population has N={pop.n}, J={pop.j}"
        )
    return pop.y[np.arange(pop.n), a.arm]


def _indicator(a: Assignment) -> np.ndarray:
    return (a.arm[:, None] == np.arange(a.j)).astype(float)


def summarize_observed(y_obs: np.ndarray, x: np.ndarray, a: Assignment) -> ObservedSummary:
    y_obs = np.asarray(y_obs, dtype=float)
    x = np.asarray(x, dtype=float).reshape(a.n, -1)
    if y_obs.shape != (a.n,):
        raise InvalidArgumentError(f"expected {a.n} observed outcomes, got shape {y_obs.shape}")
    counts = np.asarray(a.counts, dtype=float)
    w = _indicator(a)
    return ObservedSummary(
        ybar_obs=(w.T @ y_obs) / counts,
        xbar_obs=(x.T @ w) / counts,
        counts=a.counts,
    )


def observed_summary(pop: Population, a: Assignment) -> ObservedSummary:
    return summarize_observed(observed_outcomes(pop, a), pop.x, a)


def slopes(
    y_obs: np.ndarray,
    x: np.ndarray,
    a: Assignment,
    s: ObservedSummary,
    gram_inverse: np.ndarray | None = None,
) -> np.ndarray:
    """Per-arm plug-in slopes as a p x J matrix.

    The Gram matrix is the full-sample one (divisor N); the cross-moment for
    arm j averages only over units in arm j (divisor n_j), with covariates
    centered at the full-sample mean.
    """
    x = np.asarray(x, dtype=float).reshape(a.n, -1)
    if x.shape[1] == 0:
        raise EmptyCovariatesError("slopes need at least one covariate")
    xc = x - x.mean(axis=0)
    dev = np.asarray(y_obs, dtype=float) - s.ybar_obs[a.arm]
    cross = ((xc * dev[:, None]).T @ _indicator(a)) / np.asarray(a.counts, dtype=float)
    if gram_inverse is not None:
        return gram_inverse @ cross
    return solve_gram(xc.T @ xc / a.n, cross)


def beta_hat(pop: Population, a: Assignment, s: ObservedSummary) -> np.ndarray:
    return slopes(observed_outcomes(pop, a), pop.x, a, s)


def adjust_means(xbar: np.ndarray, s: ObservedSummary, b: np.ndarray) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    if b.shape != s.xbar_obs.shape:
        raise InvalidArgumentError(f"slopes have shape {b.shape}, expected {s.xbar_obs.shape}")
    shift = np.asarray(xbar, dtype=float)[:, None] - s.xbar_obs
    return s.ybar_obs + np.einsum("kj,kj->j", shift, b)


def adjusted_means(pop: Population, a: Assignment, s: ObservedSummary, b: np.ndarray) -> np.ndarray:
    return adjust_means(pop.x.mean(axis=0), s, b)


def _contrast(m: ModelMatrix, means: np.ndarray) -> np.ndarray:
    means = np.asarray(means, dtype=float)
    if means.shape != (m.j,):
        raise InvalidArgumentError(f"expected {m.j} arm means, got shape {means.shape}")
    return m.contrasts() @ means


def tau_rb(m: ModelMatrix, s: ObservedSummary) -> EffectEstimates:
    return EffectEstimates(
        tau=_contrast(m, s.ybar_obs), method=Method.UNADJUSTED, ybar_used=s.ybar_obs
    )


def tau_ca(
    m: ModelMatrix, ca_means: np.ndarray, beta: np.ndarray | None = None
) -> EffectEstimates:
    ca_means = np.asarray(ca_means, dtype=float)
    return EffectEstimates(
        tau=_contrast(m, ca_means),
        method=Method.COVARIATE_ADJUSTED,
        ybar_used=ca_means,
        beta_hat=beta,
    )


def true_tau(m: ModelMatrix, pop: Population) -> np.ndarray:
    return _contrast(m, pop.y.mean(axis=0))


def estimate_from_observed(
    m: ModelMatrix, y_obs: np.ndarray, x: np.ndarray, a: Assignment
) -> tuple[EffectEstimates, EffectEstimates | None]:
    """Both estimators from observed data; the adjusted one is None when p = 0."""
    x = np.asarray(x, dtype=float).reshape(a.n, -1)
    s = summarize_observed(y_obs, x, a)
    rb = tau_rb(m, s)
    if x.shape[1] == 0:
        return rb, None
    b = slopes(y_obs, x, a, s)
    return rb, tau_ca(m, adjust_means(x.mean(axis=0), s, b), beta=b)
