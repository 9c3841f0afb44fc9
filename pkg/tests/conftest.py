import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from jointspec.residuals import MarkSeries

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


def random_marks(rng, n, d=2, ties=False):
    """Marks with arbitrary (non-model) values, for algebraic identities."""
    lag = rng.normal(size=n)
    if ties:
        lag = np.round(lag, 1)
    return MarkSeries(
        lag=lag,
        w1=rng.normal(size=n),
        w2=rng.normal(size=n),
        dw1=rng.normal(size=(n, d)),
        dw2=rng.normal(size=(n, d)),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
