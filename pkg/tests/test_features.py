"""Feature encoding, dataset CSV round-trips, and the chronological split."""

import datetime as dt

import numpy as np
import pytest

from atmfusion.features import (
    CSV_HEADER,
    DAY_OF_MONTH,
    DAY_TYPE,
    FEATURE_NAMES,
    MONTHLY_Q,
    STATUS_FILE,
    TIME_OF_DAY,
    TX_STATUS,
    CalendarIndex,
    Dataset,
    build_dataset,
    correlation_matrix,
    encode_day_of_month,
    encode_monthly_quantile,
    encode_time_of_day,
    monthly_volumes,
    split_train_test,
)
from atmfusion.simnet import build_calendar


def small_dataset(n=10, seed=0, with_synthetic=False):
    rng = np.random.default_rng(seed)
    n_syn = 3 if with_synthetic else 0
    total = n + n_syn
    atm_id = np.array(
        [f"atm-{i % 3}" for i in range(n)] + [None] * n_syn, dtype=object
    )
    ts = np.concatenate([np.arange(n) * 300.0 + 17.5, np.full(n_syn, np.nan)])
    return Dataset(
        atm_id=atm_id,
        ts=ts,
        X=rng.uniform(size=(total, len(FEATURE_NAMES))),
        y=rng.integers(0, 2, size=total).astype(np.int8),
        synthetic=np.arange(total) >= n,
    )


def test_day_of_month_position():
    assert encode_day_of_month(dt.date(2025, 1, 15)) == pytest.approx(15 / 31)
    assert encode_day_of_month(dt.date(2024, 2, 29)) == pytest.approx(1.0)
    assert encode_day_of_month(dt.date(2025, 4, 1)) == pytest.approx(1 / 30)


def test_time_of_day_fraction():
    assert encode_time_of_day(0.0) == 0.0
    assert encode_time_of_day(43200.0) == 0.5
    assert encode_time_of_day(86400.0 * 3 + 21600.0) == 0.25
    assert 0.0 <= encode_time_of_day(86399.9) < 1.0


def test_monthly_quantile_midrank():
    vols = {"a": 10.0, "b": 20.0, "c": 30.0}
    assert encode_monthly_quantile(vols, "a") == pytest.approx(0.5 / 3)
    assert encode_monthly_quantile(vols, "b") == pytest.approx(1.5 / 3)
    assert encode_monthly_quantile(vols, "c") == pytest.approx(2.5 / 3)
    tied = {"a": 10.0, "b": 10.0, "c": 30.0}
    assert encode_monthly_quantile(tied, "a") == pytest.approx(1 / 3)
    assert encode_monthly_quantile(tied, "b") == pytest.approx(1 / 3)
    with pytest.raises(KeyError):
        encode_monthly_quantile(vols, "zzz")


def test_monthly_volumes_counts_and_zero_fill():
    jan = dt.datetime(2025, 1, 10, tzinfo=dt.timezone.utc).timestamp()
    feb = dt.datetime(2025, 2, 10, tzinfo=dt.timezone.utc).timestamp()
    txs = {
        "a": np.array([jan, jan + 60, feb]),
        "b": np.array([jan + 120]),
    }
    vols = monthly_volumes(txs)
    assert vols[(2025, 1)] == {"a": 2, "b": 1}
    assert vols[(2025, 2)] == {"a": 1, "b": 0}


def test_day_type_frequency_from_calendar():
    cal = CalendarIndex(build_calendar(dt.date(2025, 1, 1), 31))
    # January 2025 has four Sundays -> holiday frequency 4/31 on a Sunday
    assert cal.type_frequency(dt.date(2025, 1, 5)) == pytest.approx(4 / 31)
    assert cal.type_of(dt.date(2025, 1, 6)) == "first_day_of_week"
    with pytest.raises(ValueError):
        cal.type_of(dt.date(2030, 1, 1))


def test_build_dataset_columns(micro_config, micro_world, micro_txs,
                               micro_gap_states, micro_truth, micro_dataset):
    ds = micro_dataset
    assert len(ds) == micro_config.n_atms * micro_config.snapshots_per_atm()
    assert np.all((ds.X >= 0.0) & (ds.X <= 1.0))
    assert set(np.unique(ds.X[:, STATUS_FILE])) <= {0.0, 1.0}
    assert set(np.unique(ds.X[:, TX_STATUS])) <= {0.0, 1.0}
    # labels recompute straight from the timelines
    for atm_id in micro_world.atm_ids:
        rows = np.flatnonzero(ds.atm_id == atm_id)
        want = micro_truth[atm_id].label_many(ds.ts[rows]).astype(np.int8)
        assert np.array_equal(ds.y[rows], want)
        # one quantile value per machine within a calendar month
        assert len(np.unique(ds.X[rows, MONTHLY_Q])) == 1
    # reported status copied from the snapshot channel
    for i, atm_id in enumerate(micro_world.atm_ids):
        rows = np.flatnonzero(ds.atm_id == atm_id)
        assert np.array_equal(
            ds.X[rows, STATUS_FILE] == 1.0, micro_world.snapshots[i].reported_up
        )


def test_build_dataset_tx_vote_recompute(micro_world, micro_txs,
                                         micro_gap_states, micro_dataset):
    ds = micro_dataset
    for atm_id in micro_world.atm_ids:
        state = micro_gap_states[atm_id]
        rows = np.flatnonzero(ds.atm_id == atm_id)
        ts = ds.ts[rows]
        tx = np.asarray(micro_txs[atm_id], dtype=np.float64)
        pos = np.searchsorted(tx, ts, side="right") - 1
        last = np.where(pos >= 0, tx[pos.clip(min=0)], ts.min())
        want = ((ts - last) <= state.threshold_s).astype(np.float64)
        assert np.array_equal(ds.X[rows, TX_STATUS], want)


def test_unfittable_atm_rows_are_dropped(micro_config, micro_world, micro_txs,
                                         micro_truth, micro_gap_states):
    import dataclasses

    states = dict(micro_gap_states)
    first = micro_world.atm_ids[0]
    states[first] = dataclasses.replace(states[first], fittable=False)
    snaps = {a: micro_world.snapshots[i] for i, a in enumerate(micro_world.atm_ids)}
    ds = build_dataset(snaps, micro_txs, states, micro_truth, micro_config.calendar())
    assert first not in set(ds.atm_id)
    assert len(ds) == (micro_config.n_atms - 1) * micro_config.snapshots_per_atm()


def test_csv_round_trip_plain(tmp_path):
    ds = small_dataset()
    path = tmp_path / "data.csv"
    ds.to_csv(path)
    back = Dataset.from_csv(path)
    assert np.array_equal(back.X, ds.X)
    assert np.array_equal(back.y, ds.y)
    assert np.array_equal(back.ts, ds.ts)
    assert list(back.atm_id) == list(ds.atm_id)
    assert not back.synthetic.any()


def test_csv_round_trip_with_synthetic_rows(tmp_path):
    ds = small_dataset(with_synthetic=True)
    path = tmp_path / "balanced.csv"
    ds.to_csv(path, synthetic_column=True)
    back = Dataset.from_csv(path)
    assert np.array_equal(back.X, ds.X)
    assert np.array_equal(back.synthetic, ds.synthetic)
    assert all(a is None for a in back.atm_id[back.synthetic])
    assert np.isnan(back.ts[back.synthetic]).all()
    # synthetic rows are also recognizable without the explicit flag column
    path2 = tmp_path / "balanced2.csv"
    ds.to_csv(path2)
    assert np.array_equal(Dataset.from_csv(path2).synthetic, ds.synthetic)


def test_csv_rejects_malformed(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("nope\n")
    with pytest.raises(ValueError):
        Dataset.from_csv(path)
    path.write_text(CSV_HEADER + "\n" + "a,1,0.5,0.5\n")
    with pytest.raises(ValueError):
        Dataset.from_csv(path)
    path.write_text("")
    with pytest.raises(ValueError):
        Dataset.from_csv(path)


def test_correlation_matches_numpy(micro_dataset):
    res = correlation_matrix(micro_dataset)
    cols = np.column_stack([micro_dataset.X, micro_dataset.y.astype(float)])
    names = list(FEATURE_NAMES) + ["label"]
    keep = [i for i, nm in enumerate(names) if nm in res.labels]
    want = np.corrcoef(cols[:, keep], rowvar=False)
    assert np.allclose(res.matrix, want, atol=1e-12)
    assert np.allclose(res.matrix, res.matrix.T, atol=1e-12)
    assert np.allclose(np.diag(res.matrix), 1.0, atol=1e-12)
    assert [names[i] for i in keep] == res.labels


def test_correlation_excludes_constant_columns():
    ds = small_dataset(n=20)
    ds.X[:, DAY_TYPE] = 0.25
    res = correlation_matrix(ds)
    assert "day_type" in res.excluded
    assert "day_type" not in res.labels


def test_split_is_chronological_per_atm(micro_dataset):
    train, test = split_train_test(micro_dataset, 0.7)
    assert len(train) + len(test) == len(micro_dataset)
    for atm_id in set(micro_dataset.atm_id):
        tr = train.ts[train.atm_id == atm_id]
        te = test.ts[test.atm_id == atm_id]
        assert len(tr) and len(te)
        assert tr.max() < te.min()
        n_rows = int((micro_dataset.atm_id == atm_id).sum())
        assert len(tr) == int(n_rows * 0.7)


def test_split_validation():
    ds = small_dataset(with_synthetic=True)
    with pytest.raises(ValueError):
        split_train_test(ds, 0.7)
    with pytest.raises(ValueError):
        split_train_test(small_dataset(), 1.0)
    single = small_dataset(n=3)  # one row per machine: no two-sided split
    with pytest.raises(ValueError):
        split_train_test(single, 0.5)
