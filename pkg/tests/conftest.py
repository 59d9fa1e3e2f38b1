import numpy as np
import pytest

from lilaw_lab import kernels


def random_prob_rows(rng, n, c_max=10):
    """n Dirichlet softmax rows sharing one random width in [2, c_max]."""
    c = int(rng.integers(2, c_max + 1))
    probs = rng.dirichlet(np.ones(c), size=n)
    labels = rng.integers(0, c, size=n)
    return probs, labels


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def backends():
    names = ["python"]
    try:
        kernels.get_backend("cython")
        names.append("cython")
    except ImportError:
        pass
    return names


@pytest.fixture(params=backends())
def backend(request, monkeypatch):
    """Run a test against each available kernel backend."""
    mod = kernels.get_backend(request.param)
    monkeypatch.setattr(kernels, "lilaw_terms", mod.lilaw_terms)
    monkeypatch.setattr(kernels, "softmax_confidence", mod.softmax_confidence)
    return request.param


def pytest_runtest_logreport(report):
    if report.when == "call":
        for key, value in report.user_properties:
            if key == "acceptance":
                _ACCEPTANCE_LINES.append(value)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


_ACCEPTANCE_LINES: list[str] = []
