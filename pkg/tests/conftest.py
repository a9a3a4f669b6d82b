"""Shared fixtures: a small synthetic herd, a model trained on it, and the
hand-built toy model used by the grid oracles."""

from __future__ import annotations

import datetime as dt

import numpy as np
import pytest

from herdcfx import cfx, dataset, gbm, oracles
from herdcfx.features import default_catalog

SMALL_SEED = 7
SMALL_SPLIT = dt.date(2022, 9, 1)

# one human-readable line per acceptance criterion, echoed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def catalog():
    return default_catalog()


@pytest.fixture(scope="session")
def small_herd():
    config = dataset.SynthConfig(n_cows=80, n_days=420, n_farms=2)
    return dataset.generate_herd(config, SMALL_SEED)


@pytest.fixture(scope="session")
def small_table(small_herd, catalog):
    cows, milk = small_herd
    return dataset.build_instance_table(cows, milk, catalog)


@pytest.fixture(scope="session")
def small_split(small_table):
    split_ord = SMALL_SPLIT.toordinal()
    train = small_table.day_ordinals < split_ord
    return train, ~train


@pytest.fixture(scope="session")
def small_model(small_table, small_split, catalog):
    train_mask, _ = small_split
    y = small_table.labels(7)
    n_pos = int(y[train_mask].sum())
    n_neg = int(train_mask.sum()) - n_pos
    config = gbm.TrainConfig(n_trees=40, max_depth=4,
                             positive_class_weight=n_neg / n_pos)
    return gbm.fit_arrays(small_table.X[train_mask],
                          y[train_mask].astype(float), config,
                          catalog_version=catalog.version)


@pytest.fixture(scope="session")
def small_weights(small_table, small_split, catalog):
    train_mask, _ = small_split
    return cfx.mad_weights(small_table.X[train_mask], catalog)


@pytest.fixture(scope="session")
def toy_catalog():
    return oracles.toy_catalog()


@pytest.fixture(scope="session")
def toy_model():
    return oracles.toy_model()


@pytest.fixture(scope="session")
def toy_weights(toy_catalog):
    return cfx.mad_weights(oracles.toy_instances(200, 11), toy_catalog)


def subtable(table, mask):
    idx = np.flatnonzero(mask)
    return dataset.InstanceTable(
        np.ascontiguousarray(table.X[idx]),
        [table.cow_ids[i] for i in idx],
        table.day_ordinals[idx], table.days_to_onset[idx], table.n_clamped)
