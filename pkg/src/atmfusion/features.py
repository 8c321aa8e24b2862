"""Feature extraction: six [0, 1] features per status snapshot.

Feature order is fixed: reported status, day-of-month position, day-type
frequency, time of day, monthly transaction-volume quantile, and the
transaction-gap vote. Labels are 1 for in-service, 0 for out-of-service.
"""

from __future__ import annotations

import dataclasses
import datetime as dt
from collections import Counter
from pathlib import Path

import numpy as np

from .journal import StatusTimeline
from .simnet import CalendarDay, SnapshotBlock, _days_in_month
from .txstat import GapDetectorState

FEATURE_NAMES = ("status_file", "day_of_month", "day_type", "time_of_day", "monthly_q", "tx_status")

STATUS_FILE, DAY_OF_MONTH, DAY_TYPE, TIME_OF_DAY, MONTHLY_Q, TX_STATUS = range(6)

CSV_HEADER = "atm_id,ts," + ",".join(FEATURE_NAMES) + ",label"


@dataclasses.dataclass(frozen=True)
class LabeledInstance:
    atm_id: str | None
    ts: float | None
    x: np.ndarray
    y: int
    synthetic: bool = False


@dataclasses.dataclass
class Dataset:
    """Columnar instance store; one row per snapshot (or synthetic point)."""

    atm_id: np.ndarray  # object dtype; None for synthetic rows
    ts: np.ndarray      # float64; nan for synthetic rows
    X: np.ndarray       # (n, 6) float64
    y: np.ndarray       # int8; 1 = up
    synthetic: np.ndarray  # bool

    def __len__(self) -> int:
        return len(self.y)

    def row(self, i: int) -> LabeledInstance:
        synthetic = bool(self.synthetic[i])
        return LabeledInstance(
            atm_id=None if synthetic else str(self.atm_id[i]),
            ts=None if synthetic else float(self.ts[i]),
            x=self.X[i].copy(),
            y=int(self.y[i]),
            synthetic=synthetic,
        )

    def subset(self, index) -> "Dataset":
        index = np.asarray(index)
        return Dataset(
            atm_id=self.atm_id[index],
            ts=self.ts[index],
            X=self.X[index],
            y=self.y[index],
            synthetic=self.synthetic[index],
        )

    @staticmethod
    def concat(parts: list["Dataset"]) -> "Dataset":
        return Dataset(
            atm_id=np.concatenate([p.atm_id for p in parts]),
            ts=np.concatenate([p.ts for p in parts]),
            X=np.vstack([p.X for p in parts]),
            y=np.concatenate([p.y for p in parts]),
            synthetic=np.concatenate([p.synthetic for p in parts]),
        )

    def to_csv(self, path: str | Path, synthetic_column: bool = False) -> None:
        """Write rows; with ``synthetic_column`` a trailing 0/1 flag is added."""
        with open(path, "w") as fh:
            fh.write(CSV_HEADER + (",synthetic" if synthetic_column else "") + "\n")
            for i in range(len(self)):
                if self.synthetic[i]:
                    head = ","
                else:
                    ts = self.ts[i]
                    ts_txt = repr(int(ts)) if float(ts).is_integer() else repr(float(ts))
                    head = f"{self.atm_id[i]},{ts_txt}"
                feats = ",".join(repr(float(v)) for v in self.X[i])
                tail = f",{int(self.synthetic[i])}" if synthetic_column else ""
                fh.write(f"{head},{feats},{int(self.y[i])}{tail}\n")

    @staticmethod
    def from_csv(path: str | Path) -> "Dataset":
        lines = Path(path).read_text().splitlines()
        if not lines:
            raise ValueError(f"empty dataset file {path}")
        if lines[0] == CSV_HEADER:
            flagged = False
        elif lines[0] == CSV_HEADER + ",synthetic":
            flagged = True
        else:
            raise ValueError(f"unexpected dataset header in {path}")
        n = len(lines) - 1
        width = len(FEATURE_NAMES) + 3 + (1 if flagged else 0)
        atm_id = np.empty(n, dtype=object)
        ts = np.full(n, np.nan)
        X = np.empty((n, len(FEATURE_NAMES)))
        y = np.empty(n, dtype=np.int8)
        synthetic = np.zeros(n, dtype=bool)
        for i, line in enumerate(lines[1:]):
            parts = line.split(",")
            if len(parts) != width:
                raise ValueError(f"malformed dataset row {i + 2} in {path}")
            if flagged:
                synthetic[i] = parts[-1] == "1"
                parts = parts[:-1]
            if parts[0] == "":
                synthetic[i] = True
                atm_id[i] = None
            else:
                atm_id[i] = parts[0]
                ts[i] = float(parts[1])
            X[i] = [float(v) for v in parts[2:-1]]
            y[i] = int(parts[-1])
        return Dataset(atm_id=atm_id, ts=ts, X=X, y=y, synthetic=synthetic)


class CalendarIndex:
    """Month-level lookups over a day-type calendar."""

    def __init__(self, calendar: list[CalendarDay]):
        self.day_type = {c.date: c.day_type for c in calendar}
        self.month_counts: dict[tuple[int, int], Counter] = {}
        for c in calendar:
            key = (c.date.year, c.date.month)
            self.month_counts.setdefault(key, Counter())[c.day_type] += 1
        for (year, month), counts in self.month_counts.items():
            if sum(counts.values()) != _days_in_month(year, month):
                raise ValueError(f"calendar does not cover {year}-{month:02d} fully")

    def type_of(self, day: dt.date) -> str:
        try:
            return self.day_type[day]
        except KeyError:
            raise ValueError(f"calendar has no entry for {day}") from None

    def type_frequency(self, day: dt.date) -> float:
        counts = self.month_counts[(day.year, day.month)]
        return counts[self.type_of(day)] / _days_in_month(day.year, day.month)


def encode_day_of_month(day: dt.date) -> float:
    return day.day / _days_in_month(day.year, day.month)


def encode_day_type(day: dt.date, calendar_index: CalendarIndex) -> float:
    return calendar_index.type_frequency(day)


def encode_time_of_day(ts: float) -> float:
    return (float(ts) % 86400.0) / 86400.0


def encode_monthly_quantile(volumes: dict[str, float], atm_id: str) -> float:
    """Mid-rank percentile of one ATM's monthly volume within the fleet."""
    if atm_id not in volumes:
        raise KeyError(f"no volume recorded for {atm_id}")
    values = np.array(list(volumes.values()), dtype=np.float64)
    v = volumes[atm_id]
    smaller = float((values < v).sum())
    ties = float((values == v).sum())
    return (smaller + 0.5 * ties) / len(values)


def monthly_volumes(
    transactions: dict[str, np.ndarray]
) -> dict[tuple[int, int], dict[str, int]]:
    """Per-month transaction counts per ATM; absent months count zero."""
    out: dict[tuple[int, int], dict[str, int]] = {}
    for atm_id, ts in transactions.items():
        ts = np.asarray(ts, dtype=np.float64)
        days = np.unique(np.floor(ts / 86400.0).astype(np.int64))
        months: dict[tuple[int, int], tuple[float, float]] = {}
        for d in days:
            date = dt.date(1970, 1, 1) + dt.timedelta(days=int(d))
            key = (date.year, date.month)
            first = dt.datetime(date.year, date.month, 1, tzinfo=dt.timezone.utc).timestamp()
            if date.month == 12:
                nxt = dt.datetime(date.year + 1, 1, 1, tzinfo=dt.timezone.utc).timestamp()
            else:
                nxt = dt.datetime(date.year, date.month + 1, 1, tzinfo=dt.timezone.utc).timestamp()
            months[key] = (first, nxt)
        for key, (lo, hi) in months.items():
            count = int(((ts >= lo) & (ts < hi)).sum())
            out.setdefault(key, {})[atm_id] = count
    for key in out:
        for atm_id in transactions:
            out[key].setdefault(atm_id, 0)
    return out


def build_dataset(
    snapshots: dict[str, SnapshotBlock],
    transactions: dict[str, np.ndarray],
    gap_states: dict[str, GapDetectorState],
    truth: dict[str, StatusTimeline],
    calendar: list[CalendarDay],
) -> Dataset:
    """One labeled instance per snapshot of every fittable ATM.

    ATMs whose gap detector could not be fitted are skipped entirely; the
    transaction-gap vote would be meaningless for them.
    """
    cal = CalendarIndex(calendar)
    volumes = monthly_volumes(transactions)
    parts = []
    for atm_id in snapshots:
        state = gap_states[atm_id]
        if not state.fittable:
            continue
        block = snapshots[atm_id]
        ts = block.ts.astype(np.float64)
        n = len(ts)
        x = np.empty((n, len(FEATURE_NAMES)))
        x[:, STATUS_FILE] = block.reported_up.astype(np.float64)

        day_idx = np.floor(ts / 86400.0).astype(np.int64)
        uniq, inverse = np.unique(day_idx, return_inverse=True)
        dom = np.empty(len(uniq))
        dtype_freq = np.empty(len(uniq))
        q = np.empty(len(uniq))
        for j, d in enumerate(uniq):
            date = dt.date(1970, 1, 1) + dt.timedelta(days=int(d))
            dom[j] = encode_day_of_month(date)
            dtype_freq[j] = encode_day_type(date, cal)
            month_vols = volumes.get((date.year, date.month))
            if month_vols is None:
                month_vols = {a: 0 for a in snapshots}
            q[j] = encode_monthly_quantile(month_vols, atm_id)
        x[:, DAY_OF_MONTH] = dom[inverse]
        x[:, DAY_TYPE] = dtype_freq[inverse]
        x[:, TIME_OF_DAY] = (ts % 86400.0) / 86400.0
        x[:, MONTHLY_Q] = q[inverse]

        tx_ts = np.asarray(transactions[atm_id], dtype=np.float64)
        start = truth[atm_id].horizon[0]
        last = np.full(n, start)
        if len(tx_ts):
            pos = np.searchsorted(tx_ts, ts, side="right") - 1
            has = pos >= 0
            last[has] = tx_ts[pos[has]]
        x[:, TX_STATUS] = ((ts - last) <= state.threshold_s).astype(np.float64)

        labels = truth[atm_id].label_many(ts).astype(np.int8)
        parts.append(Dataset(
            atm_id=np.array([atm_id] * n, dtype=object),
            ts=ts,
            X=x,
            y=labels,
            synthetic=np.zeros(n, dtype=bool),
        ))
    if not parts:
        raise ValueError("no fittable ATMs; dataset would be empty")
    return Dataset.concat(parts)


@dataclasses.dataclass(frozen=True)
class CorrelationResult:
    labels: list[str]
    matrix: np.ndarray
    excluded: list[str]


def correlation_matrix(dataset: Dataset) -> CorrelationResult:
    """Pearson correlations across features and the label column."""
    columns = np.column_stack([dataset.X, dataset.y.astype(np.float64)])
    names = list(FEATURE_NAMES) + ["label"]
    keep = [i for i in range(columns.shape[1]) if columns[:, i].std() > 0]
    excluded = [names[i] for i in range(columns.shape[1]) if i not in keep]
    if len(keep) < 2:
        raise ValueError("correlation needs at least two non-constant columns")
    matrix = np.corrcoef(columns[:, keep], rowvar=False)
    return CorrelationResult(
        labels=[names[i] for i in keep], matrix=matrix, excluded=excluded,
    )


def split_train_test(dataset: Dataset, ratio: float = 0.7) -> tuple[Dataset, Dataset]:
    """Per-ATM chronological split: the earliest share of rows trains.

    Leakage-free by construction: every training timestamp of an ATM
    precedes all of its test timestamps.
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError("split ratio must lie strictly between 0 and 1")
    if dataset.synthetic.any():
        raise ValueError("chronological split expects real instances only")
    train_idx, test_idx = [], []
    for atm_id in sorted({str(a) for a in dataset.atm_id}):
        rows = np.flatnonzero(dataset.atm_id == atm_id)
        rows = rows[np.argsort(dataset.ts[rows], kind="stable")]
        n_train = int(len(rows) * ratio)
        if n_train == 0 or n_train == len(rows):
            raise ValueError(f"split leaves an empty side for {atm_id}")
        train_idx.append(rows[:n_train])
        test_idx.append(rows[n_train:])
    return (
        dataset.subset(np.concatenate(train_idx)),
        dataset.subset(np.concatenate(test_idx)),
    )
