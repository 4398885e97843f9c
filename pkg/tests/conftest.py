import numpy as np
import pytest

from chagnn.data import Dataset, SyntheticSpec, generate_synthetic
from chagnn.graph import build_graph


def random_dataset(n=10, dim=4, classes=3, p_edge=0.3, seed=0) -> Dataset:
    rng = np.random.default_rng(seed)
    iu = np.triu_indices(n, 1)
    keep = rng.random(len(iu[0])) < p_edge
    edges = np.stack([iu[0][keep], iu[1][keep]], axis=1)
    labels = rng.integers(0, classes, n)
    train = np.zeros(n, bool)
    train[: n // 2] = True
    val = np.zeros(n, bool)
    val[n // 2: n // 2 + 2] = True
    test = ~(train | val)
    return Dataset(build_graph(edges, n), rng.normal(size=(n, dim)), labels, classes, train, val, test)


@pytest.fixture
def tiny():
    return random_dataset()


@pytest.fixture(scope="session")
def small_synth():
    return generate_synthetic(SyntheticSpec(nodes_per_class=60, degree=6), seed=1)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
