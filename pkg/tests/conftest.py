import numpy as np
import pytest

from dastft.signal_model import Signal

# Acceptance outcomes, printed in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def noise_signal(rng):
    return Signal(rng.standard_normal(64), 1.0)


def central_difference(fun, x: np.ndarray, h: float) -> np.ndarray:
    """Elementwise central differences of a scalar function of an array."""
    grad = np.zeros_like(x, dtype=float)
    for idx in np.ndindex(x.shape):
        xp = x.copy()
        xp[idx] += h
        xm = x.copy()
        xm[idx] -= h
        grad[idx] = (fun(xp) - fun(xm)) / (2 * h)
    return grad


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
