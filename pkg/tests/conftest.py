import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from lipreg.instance import PathInstance, TreeInstance

settings.register_profile(
    "lipreg", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("lipreg")


def random_params(rng):
    """gamma in {0, U(0,5), inf}, delta in {0, -U(0,1)}."""
    gamma = [0.0, float(rng.uniform(0, 5)), math.inf][int(rng.integers(3))]
    delta = 0.0 if rng.random() < 0.5 else -float(rng.uniform(0, 1))
    return gamma, delta


def random_path(rng, n_max=200, n_min=1):
    n = int(rng.integers(n_min, n_max + 1))
    gamma, delta = random_params(rng)
    lam = None if rng.random() < 0.5 else rng.uniform(0.1, 10, n)
    return PathInstance(rng.uniform(-10, 10, n), lam, gamma, delta)


def random_parent(rng, n, max_children=None):
    """Random recursive tree; optionally no vertex gets more than max_children."""
    parent = np.full(n, -1)
    kids = np.zeros(n, dtype=int)
    for v in range(1, n):
        while True:
            p = int(rng.integers(v))
            if max_children is None or kids[p] < max_children:
                break
        parent[v] = p
        kids[p] += 1
    return parent


def random_tree(rng, n_max=200, max_degree=6, n_min=1):
    n = int(rng.integers(n_min, n_max + 1))
    gamma, delta = random_params(rng)
    lam = None if rng.random() < 0.5 else rng.uniform(0.1, 10, n)
    # degree counts the parent edge too
    parent = random_parent(rng, n, max_degree - 1)
    return TreeInstance(rng.uniform(-10, 10, n), parent, lam, gamma, delta)


def random_binary_tree(rng, n):
    """Uniformly grown binary tree: each new vertex takes a random free slot."""
    parent = np.full(n, -1)
    slots = [0, 0]
    for v in range(1, n):
        j = int(rng.integers(len(slots)))
        parent[v] = slots[j]
        slots[j] = slots[-1]
        slots.pop()
        slots += [v, v]
    return parent


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
