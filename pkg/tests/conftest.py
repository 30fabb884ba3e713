import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def roll_convolve(state, kernel):
    """Brute-force toroidal convolution: one shifted copy per nonzero kernel cell."""
    out = np.zeros(state.shape, dtype=np.float64)
    for dy, dx in zip(*np.nonzero(kernel)):
        out += kernel[dy, dx] * np.roll(state.astype(np.float64), (dy, dx), axis=(0, 1))
    return out


def disc(L, cy, cx, radius, value=1.0):
    y, x = np.mgrid[:L, :L]
    a = np.zeros((L, L), dtype=np.float32)
    a[(y - cy) ** 2 + (x - cx) ** 2 <= radius ** 2] = value
    return a


ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
