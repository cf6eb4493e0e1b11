from pathlib import Path

import numpy as np
import pytest

from strongenv.instances import load_config
from strongenv.report import random_instance
from strongenv.tree import FiltrationTree, TimeGrid, build_tree

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture
def f1():
    """Deterministic chain X = (1, 3, 2), all weights 1, unit steps."""
    return FiltrationTree.chain(3), TimeGrid.uniform(3), np.array([1.0, 3.0, 2.0, 0.0])


@pytest.fixture
def f2():
    """Same chain with a spike at a zero-weight time."""
    return FiltrationTree.chain(3), TimeGrid.uniform(3, [1, 0, 1]), np.array([0.0, 5.0, 0.0, 0.0])


@pytest.fixture
def binary():
    """One step, two equally likely leaves: X_0 = 0, X_1 in {2, 0}."""
    tree = build_tree([-1, 0, 0], [1.0, 0.5, 0.5])
    return tree, TimeGrid.uniform(2), np.array([0.0, 2.0, 0.0, 0.0, 0.0])


@pytest.fixture
def configs():
    return CONFIGS


def instances(n, start=0):
    for seed in range(start, start + n):
        yield seed, random_instance(seed)


def load(name):
    return load_config(CONFIGS / name).resolve()
