import numpy as np
import pytest

from fedacs.data import PartitionConfig, make_synthetic_clusters, partition


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_shards():
    """Six clients of a 4-class blob problem, Dirichlet split."""
    data = make_synthetic_clusters(4, 6, 60, 4.0, 1.0, seed=3)
    return partition(data, PartitionConfig("dirichlet", 6, dirichlet_alpha=1.0, seed=3))



ACCEPTANCE_LINES = []


@pytest.fixture
def verdict():
    """Record one pass/fail line per acceptance criterion; printed at session end."""
    def _emit(number, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return _emit


def _criterion_key(line):
    tag = line.split()[2].rstrip(":")
    digits = "".join(ch for ch in tag if ch.isdigit())
    return int(digits), tag


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=_criterion_key):
            terminalreporter.write_line(line)
