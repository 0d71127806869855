"""Closed-form variances of the two estimators and the gain from adjustment.

Limit expressions are evaluated with finite-N moments plugged in
("plug-in asymptotics"). Quantities on the sigma^2 scale are variances of
sqrt(N) * tau_hat; divide by N for the variance of tau_hat itself.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .design import ModelMatrix
from .errors import EmptyCovariatesError, InvalidArgumentError
from .population import MomentSummary, Population
from .randomization import check_counts

DEFAULT_EQUAL_TOL = 1e-8


def check_proportions(p, j: int) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.shape != (j,):
        raise InvalidArgumentError(f"expected {j} proportions, got shape {p.shape}")
    if not np.all(np.isfinite(p)) or np.any(p <= 0.0):
        raise InvalidArgumentError("proportions must be positive")
    if abs(p.sum() - 1.0) > 1e-9:
        raise InvalidArgumentError(f"proportions sum to {p.sum():.12g}, not 1")
    return p


def exact_obs_moments(pop: Population, counts) -> tuple[np.ndarray, np.ndarray]:
    """Exact mean and covariance of the observed arm means over complete randomization."""
    n = pop.n
    if n < 2:
        raise InvalidArgumentError("need N >= 2")
    counts = check_counts(n, counts)
    if len(counts) != pop.j:
        raise InvalidArgumentError(f"{len(counts)} counts for {pop.j} arms")
    p_hat = np.asarray(counts, dtype=float) / n
    yc = pop.y - pop.y.mean(axis=0)
    cross = yc.T @ yc / (n * (n - 1))
    cov = -cross
    np.fill_diagonal(cov, (1 - p_hat) / p_hat * np.diag(cross))
    return pop.y.mean(axis=0), cov


@dataclass(frozen=True, eq=False)
class AsymptoticCovariance:
    matrix_obs: np.ndarray
    matrix_ca: np.ndarray


def _limit_cov(second: np.ndarray, p: np.ndarray) -> np.ndarray:
    out = -np.array(second, dtype=float)
    np.fill_diagonal(out, (1 - p) / p * np.diag(second))
    return out


def asym_cov(ms: MomentSummary, p) -> AsymptoticCovariance:
    p = check_proportions(p, ms.j)
    return AsymptoticCovariance(
        matrix_obs=_limit_cov(ms.sigma, p), matrix_ca=_limit_cov(ms.sigma_tilde, p)
    )


def _effect_variance(second: np.ndarray, p: np.ndarray, h: np.ndarray, k: int) -> float:
    diag = np.diag(second)
    off = float(h @ second @ h - diag.sum())  # sum over j != j' of h_j h_j' s_jj'
    return (float(np.sum((1 - p) / p * diag)) - off) / 4 ** (k - 1)


def xi_vectors(zeta: np.ndarray, p: np.ndarray, h: np.ndarray) -> np.ndarray:
    """J x J x p array whose (j, j') slice is xi_{jj'} for one effect column h."""
    scaled = (h[None, :] * zeta).T  # row j: h_j zeta_j
    ratio = np.sqrt(p[None, :] / p[:, None])  # ratio[j, j'] = sqrt(p_j' / p_j)
    return ratio[:, :, None] * scaled[:, None, :] - ratio.T[:, :, None] * scaled[None, :, :]


def _corollary_gain(ms: MomentSummary, p: np.ndarray, h: np.ndarray, k: int) -> tuple[float, np.ndarray]:
    if ms.p == 0:
        return 0.0, np.zeros((ms.j, ms.j, 0))
    xi = xi_vectors(ms.zeta, p, h)
    total = float(np.einsum("abk,kl,abl->", xi, ms.omega, xi))
    return total / 2 ** (2 * k - 1), xi


def _equal_precision(ms: MomentSummary, p: np.ndarray, h: np.ndarray, tol: float) -> bool:
    if ms.p == 0:
        return True
    scaled = h[None, :] * ms.zeta  # column j: h_j zeta_j
    # entry [:, j, j'] = p_j' h_j zeta_j - p_j h_j' zeta_j'
    diff = scaled[:, :, None] * p[None, None, :] - p[None, :, None] * scaled[:, None, :]
    return bool(np.max(np.abs(diff), initial=0.0) <= tol)


@dataclass(frozen=True, eq=False)
class VarianceReport:
    labels: tuple[str, ...]
    var_rb: np.ndarray
    var_ca: np.ndarray
    gain: np.ndarray
    gain_corollary: np.ndarray
    equal_precision: np.ndarray
    p: np.ndarray
    n: int | None = None
    tolerance: float = DEFAULT_EQUAL_TOL
    notes: tuple[str, ...] = field(default=())

    def records(self) -> list[dict]:
        out = []
        for i, label in enumerate(self.labels):
            rec = {
                "effect": i + 1,
                "label": label,
                "var_rb": float(self.var_rb[i]),
                "var_ca": float(self.var_ca[i]),
                "gain": float(self.gain[i]),
                "gain_corollary": float(self.gain_corollary[i]),
                "equal_precision": bool(self.equal_precision[i]),
            }
            if self.n:
                rec["var_rb_over_n"] = float(self.var_rb[i]) / self.n
                rec["var_ca_over_n"] = float(self.var_ca[i]) / self.n
                rec["gain_over_n"] = float(self.gain[i]) / self.n
            out.append(rec)
        return out

    def to_dict(self) -> dict:
        return {
            "scale": "sigma^2: asymptotic variance of sqrt(N)*(tau_hat - tau); *_over_n: variance of tau_hat",
            "method": "plug-in asymptotics (finite-N moments in the limit formulas)",
            "n": self.n,
            "proportions": [float(v) for v in self.p],
            "equal_precision_tolerance": self.tolerance,
            "effects": self.records(),
            "notes": list(self.notes),
        }


def asym_var_effects(
    ms: MomentSummary, p, m: ModelMatrix, tol: float = DEFAULT_EQUAL_TOL, n: int | None = None
) -> VarianceReport:
    if m.j != ms.j:
        raise InvalidArgumentError(f"design has J={m.j} arms, moments have J={ms.j}")
    p = check_proportions(p, ms.j)
    effects = range(1, m.j)
    var_rb, var_ca, gain_cor, equal = [], [], [], []
    for l in effects:
        h = m.column(l).astype(float)
        var_rb.append(_effect_variance(ms.sigma, p, h, m.k))
        var_ca.append(_effect_variance(ms.sigma_tilde, p, h, m.k))
        gain_cor.append(_corollary_gain(ms, p, h, m.k)[0])
        equal.append(_equal_precision(ms, p, h, tol))
    var_rb, var_ca = np.array(var_rb), np.array(var_ca)
    notes = () if ms.p else ("no covariates: adjusted estimator equals the unadjusted one",)
    return VarianceReport(
        labels=m.effect_labels,
        var_rb=var_rb,
        var_ca=var_ca,
        gain=var_rb - var_ca,
        gain_corollary=np.array(gain_cor),
        equal_precision=np.array(equal, dtype=bool),
        p=p,
        n=n if n is not None else ms.n,
        tolerance=tol,
        notes=notes,
    )


@dataclass(frozen=True, eq=False)
class PrecisionGain:
    asymptotic: np.ndarray  # sigma^2 scale, one entry per effect
    variance: np.ndarray  # asymptotic / N
    xi: np.ndarray  # (J - 1) x J x J x p


def precision_gain(ms: MomentSummary, p, m: ModelMatrix, n: int) -> PrecisionGain:
    if ms.p == 0:
        raise EmptyCovariatesError("precision gain needs at least one covariate")
    if m.j != ms.j:
        raise InvalidArgumentError(f"design has J={m.j} arms, moments have J={ms.j}")
    if n < 1:
        raise InvalidArgumentError(f"N must be positive, got {n}")
    p = check_proportions(p, ms.j)
    gains, xis = [], []
    for l in range(1, m.j):
        g, xi = _corollary_gain(ms, p, m.column(l).astype(float), m.k)
        gains.append(g)
        xis.append(xi)
    gains = np.array(gains)
    return PrecisionGain(asymptotic=gains, variance=gains / n, xi=np.array(xis))


def equal_precision(
    ms: MomentSummary, p, m: ModelMatrix, l: int, tol: float = DEFAULT_EQUAL_TOL
) -> bool:
    """Whether effect column ``l`` gains nothing from adjustment (up to ``tol``)."""
    p = check_proportions(p, ms.j)
    return _equal_precision(ms, p, m.column(l).astype(float), tol)
