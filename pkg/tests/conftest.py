import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from factorial_ca.population import MomentSummary, Population

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_population(rng: np.random.Generator, n: int, j: int, p: int) -> Population:
    x = rng.standard_normal((n, p))
    coef = rng.standard_normal((p, j))
    y = x @ coef + rng.standard_normal((n, j)) + rng.standard_normal(j)
    return Population(y, x + rng.standard_normal(p))


def random_moment_summary(rng: np.random.Generator, j: int, p: int) -> MomentSummary:
    """Feasible moments: blocks of a random joint covariance of (Y, X)."""
    a = rng.standard_normal((j + p, j + p + 2))
    joint = a @ a.T / (j + p)
    sigma, lam, omega = joint[:j, :j], joint[j:, :j], joint[j:, j:]
    zeta = np.linalg.solve(omega, lam)
    return MomentSummary(
        sigma=sigma,
        omega=omega,
        lam=lam,
        zeta=zeta,
        sigma_tilde=sigma - lam.T @ zeta,
        ybar=np.zeros(j),
        xbar=np.zeros(p),
        n=100,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def small_pop(rng):
    """N = 8 units, K = 2 (J = 4 arms), one covariate, integer-valued."""
    y = rng.integers(-5, 6, size=(8, 4)).astype(float)
    x = rng.integers(-3, 4, size=(8, 1)).astype(float)
    x[0, 0], x[1, 0] = -3.0, 3.0  # guarantee non-constant covariate
    y[0], y[1] = [1, -2, 3, 0], [-1, 2, -3, 4]
    return Population(y, x)
