"""Shared fixtures for the GIGG regression test suite."""

import numpy as np
import pandas as pd
import pytest

from src.model import GroupedDesign, Hyperparameters


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="Run long Monte Carlo checks marked slow.")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long Monte Carlo check (needs --runslow)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def small_design():
    """n=40, p=6 in groups (3, 3), intercept plus one adjustment column."""
    gen = np.random.default_rng(7)
    n = 40
    X = gen.standard_normal((n, 6))
    C = np.column_stack([np.ones(n), gen.standard_normal(n)])
    beta = np.array([2.0, 0.0, 0.0, 0.0, 0.0, 0.0])
    y = C @ np.array([0.5, 1.0]) + X @ beta + gen.standard_normal(n)
    return GroupedDesign(y=y, C=C, X=X, group_sizes=np.array([3, 3]))


@pytest.fixture
def wide_design():
    """n=20, p=50: the regime where the Woodbury β update applies."""
    gen = np.random.default_rng(11)
    n, p = 20, 50
    X = gen.standard_normal((n, p))
    y = X[:, 0] * 1.5 + gen.standard_normal(n)
    return GroupedDesign(y=y, C=np.empty((n, 0)), X=X, group_sizes=np.array([10] * 5))


@pytest.fixture
def half_hyper():
    return Hyperparameters.uniform(2, 0.5, 0.5)


@pytest.fixture
def data_csv(tmp_path):
    """Tiny dataset on disk with a matching group map."""
    gen = np.random.default_rng(3)
    n = 30
    df = pd.DataFrame({
        "y": gen.standard_normal(n),
        "age": gen.uniform(20, 70, n),
        "m1": gen.standard_normal(n),
        "m2": gen.standard_normal(n),
        "m3": gen.standard_normal(n),
        "m4": gen.standard_normal(n),
    })
    df["y"] += 0.8 * df["m1"]
    data_path = tmp_path / "data.csv"
    df.to_csv(data_path, index=False)
    group_path = tmp_path / "groups.csv"
    pd.DataFrame({
        "column_name": ["m1", "m2", "m3", "m4"],
        "group_label": ["metals", "metals", "pahs", "pahs"],
    }).to_csv(group_path, index=False)
    return data_path, group_path
