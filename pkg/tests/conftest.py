import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from scipy.integrate import solve_ivp

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

# criterion id -> (passed, detail); filled by test_acceptance
ACCEPTANCE_RESULTS: dict = {}


@pytest.fixture
def acceptance_log():
    return ACCEPTANCE_RESULTS


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")


def halfplane_reverse_flow(z: complex, T: float, xi: float = 0.0, rtol: float = 1e-12) -> complex:
    """Reverse half-plane flow ``dh/dt = -2/(h - xi)`` integrated in real coordinates."""

    def rhs(_t, y):
        w = complex(y[0], y[1]) - xi
        v = -2.0 / w
        return [v.real, v.imag]

    sol = solve_ivp(rhs, (0.0, T), [z.real, z.imag], method="DOP853", rtol=rtol, atol=1e-14)
    return complex(sol.y[0, -1], sol.y[1, -1])


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)
