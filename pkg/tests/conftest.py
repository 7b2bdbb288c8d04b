import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(1234))


def random_labels(rng, b, n_classes, min_per_class=1):
    """Labels over ``n_classes`` classes where every class appears at least ``min_per_class`` times."""
    base = np.repeat(np.arange(n_classes), min_per_class)
    rest = rng.integers(0, n_classes, size=b - base.size)
    return rng.permutation(np.concatenate([base, rest]))


def unit_rows(rng, b, d):
    x = rng.normal(size=(b, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


# one line per acceptance criterion, repeated at the end of the run
ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
