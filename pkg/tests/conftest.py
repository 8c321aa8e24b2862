"""Shared fixtures: one small simulated fleet reused across test modules."""

import pytest

from atmfusion import txstat
from atmfusion.features import build_dataset, split_train_test
from atmfusion.journal import extract_truth, journal_from_world
from atmfusion.simnet import SimConfig, simulate

# 4 machines x 3 days: a dozen outages, every gap detector fittable,
# both classes present on each side of the chronological split
MICRO = SimConfig(n_atms=4, horizon_days=3, seed=11)


@pytest.fixture(scope="session")
def micro_config():
    return MICRO


@pytest.fixture(scope="session")
def micro_world():
    return simulate(MICRO)


@pytest.fixture(scope="session")
def micro_truth(micro_world):
    events = journal_from_world(micro_world)
    horizon = (float(MICRO.start_epoch_s), float(MICRO.end_epoch_s))
    return extract_truth(events, horizon, atm_ids=micro_world.atm_ids)


@pytest.fixture(scope="session")
def micro_txs(micro_world):
    return {
        a: micro_world.transactions[i].ts
        for i, a in enumerate(micro_world.atm_ids)
    }


@pytest.fixture(scope="session")
def micro_gap_states(micro_txs, micro_truth):
    t_split = MICRO.start_epoch_s + 0.7 * MICRO.horizon_s
    window = (float(MICRO.start_epoch_s), float(t_split))
    return txstat.fit_per_atm(micro_txs, micro_truth, window=window)


@pytest.fixture(scope="session")
def micro_dataset(micro_world, micro_txs, micro_gap_states, micro_truth):
    snaps = {
        a: micro_world.snapshots[i] for i, a in enumerate(micro_world.atm_ids)
    }
    return build_dataset(
        snaps, micro_txs, micro_gap_states, micro_truth, MICRO.calendar()
    )


@pytest.fixture(scope="session")
def micro_split(micro_dataset):
    return split_train_test(micro_dataset, 0.7)
