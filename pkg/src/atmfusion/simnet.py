"""Synthetic ATM fleet: failure process, transaction stream, noisy status channel.

Each ATM alternates between in-service and out-of-service states. Outage
starts follow a Poisson process per ATM, outage durations are exponential,
and customer transactions arrive with exponential inter-arrival times while
the machine is up. A status file channel reports the machine state at a
fixed cadence, with calibrated false alarms and missed alarms layered on
top of the true state.

All randomness is drawn from per-ATM substreams derived from the config
seed, so results do not depend on generation order or parallelism.
"""

from __future__ import annotations

import dataclasses
import datetime as dt
import json
import math
from pathlib import Path

import numpy as np

OUTAGE_CAUSES = ("card_reader_error", "keypad_error", "network_error")

DAY_TYPES = ("first_day_of_week", "last_working_day", "holiday", "part_time", "regular")

# Share of in-service snapshots expected to sit past the inactivity threshold
# of a healthy exponential stream at 99% confidence. Used to keep the marginal
# false-alarm rate at its configured value when alarms correlate with quiet gaps.
_QUIET_SHARE = 0.01

_GAP_LOG = math.log(100.0)


@dataclasses.dataclass(frozen=True)
class StatusNoiseModel:
    """Flip probabilities of the reported status channel.

    ``quiet_false_alarm`` optionally concentrates false alarms on snapshots
    where the machine has been transaction-quiet for longer than its healthy
    inactivity threshold; the marginal false-alarm rate stays at
    ``p_false_alarm``. ``None`` keeps false alarms independent of activity.
    """

    p_false_alarm: float = 0.0356
    p_missed_alarm: float = 0.3835
    quiet_false_alarm: float | None = 0.90

    def active_false_alarm(self) -> float:
        if self.quiet_false_alarm is None:
            return self.p_false_alarm
        rate = (self.p_false_alarm - _QUIET_SHARE * self.quiet_false_alarm) / (1.0 - _QUIET_SHARE)
        return max(rate, 0.0)


@dataclasses.dataclass(frozen=True)
class CalendarDay:
    date: dt.date
    day_type: str


@dataclasses.dataclass(frozen=True)
class SimConfig:
    """Fleet-level generation settings.

    Per-ATM transaction speeds are log-uniform over the configured
    inter-arrival range. Failure risk is concentrated on both volume
    extremes: machines ranked above ``volume_risk_quantile`` or below
    ``1 - volume_risk_quantile`` carry ``volume_risk_ratio`` times the
    failure rate of mid-volume machines (heavy wear at busy sites, poor
    upkeep at idle ones). Rates are normalised so the fleet average stays
    at ``base_failure_rate_per_day``.
    """

    n_atms: int = 50
    horizon_days: int = 30
    snapshot_interval_s: int = 300
    seed: int = 7
    start_date: dt.date = dt.date(2025, 1, 1)
    interarrival_lo_s: float = 60.0
    interarrival_hi_s: float = 300.0
    mean_outage_s: float = 900.0
    base_failure_rate_per_day: float = 0.816
    volume_risk_ratio: float = 60.0
    volume_risk_quantile: float = 0.85
    noise: StatusNoiseModel = dataclasses.field(default_factory=StatusNoiseModel)
    holidays: tuple[dt.date, ...] = ()

    @property
    def horizon_s(self) -> float:
        return self.horizon_days * 86400.0

    @property
    def start_epoch_s(self) -> int:
        epoch = dt.datetime(
            self.start_date.year, self.start_date.month, self.start_date.day,
            tzinfo=dt.timezone.utc,
        )
        return int(epoch.timestamp())

    @property
    def end_epoch_s(self) -> float:
        return self.start_epoch_s + self.horizon_s

    def snapshots_per_atm(self) -> int:
        return int(self.horizon_days * 86400 // self.snapshot_interval_s)

    def calendar(self) -> list[CalendarDay]:
        return build_calendar(self.start_date, self.horizon_days, self.holidays)


def build_calendar(
    start_date: dt.date, horizon_days: int, holidays: tuple[dt.date, ...] = ()
) -> list[CalendarDay]:
    """Assign a day type to every date of the months touched by the horizon.

    Whole enclosing months are covered so that within-month day-type counts
    are well defined even when the horizon starts or ends mid-month.
    """
    if horizon_days < 1:
        raise ValueError("horizon must cover at least one day")
    last = start_date + dt.timedelta(days=horizon_days - 1)
    first_of_month = start_date.replace(day=1)
    days_in_last = _days_in_month(last.year, last.month)
    end_of_month = last.replace(day=days_in_last)
    holiday_set = set(holidays)
    out = []
    day = first_of_month
    while day <= end_of_month:
        out.append(CalendarDay(day, _day_type(day, holiday_set)))
        day += dt.timedelta(days=1)
    return out


def _days_in_month(year: int, month: int) -> int:
    if month == 12:
        nxt = dt.date(year + 1, 1, 1)
    else:
        nxt = dt.date(year, month + 1, 1)
    return (nxt - dt.timedelta(days=1)).day


def _day_type(day: dt.date, holidays: set[dt.date]) -> str:
    if day in holidays:
        return "holiday"
    wd = day.weekday()  # Monday == 0
    if wd == 6:
        return "holiday"
    if wd == 5:
        return "part_time"
    if wd == 0:
        return "first_day_of_week"
    if wd == 4:
        return "last_working_day"
    return "regular"


@dataclasses.dataclass(frozen=True)
class AtmProfile:
    atm_id: str
    mean_interarrival_s: float
    monthly_volume_class: float
    failure_rate_per_day: float
    mean_outage_s: float


@dataclasses.dataclass(frozen=True)
class Outage:
    atm_id: str
    start_s: float
    end_s: float
    cause: str


@dataclasses.dataclass(frozen=True)
class Transaction:
    atm_id: str
    ts: float
    amount_class: int


@dataclasses.dataclass(frozen=True)
class StatusSnapshot:
    atm_id: str
    ts: int
    card_reader_ok: bool
    keypad_ok: bool
    network_ok: bool
    reported_up: bool
    true_up: bool


@dataclasses.dataclass
class TransactionBlock:
    """All transactions of one ATM, ascending in time."""

    ts: np.ndarray
    amount_class: np.ndarray

    def __len__(self) -> int:
        return len(self.ts)


@dataclasses.dataclass
class SnapshotBlock:
    """All status-file snapshots of one ATM, ascending in time."""

    ts: np.ndarray
    card_reader_ok: np.ndarray
    keypad_ok: np.ndarray
    network_ok: np.ndarray
    reported_up: np.ndarray
    true_up: np.ndarray

    def __len__(self) -> int:
        return len(self.ts)


@dataclasses.dataclass
class World:
    config: SimConfig
    profiles: list[AtmProfile]
    outages: list[list[Outage]]
    transactions: list[TransactionBlock]
    snapshots: list[SnapshotBlock]

    @property
    def atm_ids(self) -> list[str]:
        return [p.atm_id for p in self.profiles]

    def up_intervals(self, atm_index: int) -> list[tuple[float, float]]:
        cfg = self.config
        return _complement_intervals(
            [(o.start_s, o.end_s) for o in self.outages[atm_index]],
            cfg.start_epoch_s, cfg.end_epoch_s,
        )


def _rng(seed: int, *tags: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed,) + tags))


def _complement_intervals(
    blocks: list[tuple[float, float]], start: float, end: float
) -> list[tuple[float, float]]:
    """Gaps of ``[start, end)`` not covered by the sorted, disjoint blocks."""
    out = []
    cursor = start
    for s, e in blocks:
        if s > cursor:
            out.append((cursor, s))
        cursor = max(cursor, e)
    if cursor < end:
        out.append((cursor, end))
    return out


def make_profiles(config: SimConfig) -> list[AtmProfile]:
    """Draw per-ATM transaction speeds and volume-scaled failure rates."""
    rng = _rng(config.seed, 1)
    lo, hi = config.interarrival_lo_s, config.interarrival_hi_s
    if not 0 < lo <= hi:
        raise ValueError("inter-arrival bounds must satisfy 0 < lo <= hi")
    mu = np.exp(rng.uniform(math.log(lo), math.log(hi), size=config.n_atms))
    # volume rank: busier machines (smaller inter-arrival) rank higher
    order = np.argsort(np.argsort(-mu, kind="stable"), kind="stable")
    q = (order + 0.5) / config.n_atms
    vq = config.volume_risk_quantile
    at_risk = (q > vq) | (q < 1.0 - vq)
    mult = np.where(at_risk, config.volume_risk_ratio, 1.0)
    mult = mult / mult.mean()  # keep the fleet-average failure rate on target
    profiles = []
    for i in range(config.n_atms):
        profiles.append(AtmProfile(
            atm_id=f"atm{i:03d}",
            mean_interarrival_s=float(mu[i]),
            monthly_volume_class=float(q[i]),
            failure_rate_per_day=float(config.base_failure_rate_per_day * mult[i]),
            mean_outage_s=config.mean_outage_s,
        ))
    return profiles


def generate_outages(
    profile: AtmProfile, config: SimConfig, rng: np.random.Generator
) -> list[Outage]:
    """Poisson outage starts with exponential durations, merged and clipped.

    Overlapping outages merge into one interval that keeps the earliest
    cause; intervals are clipped to the horizon.
    """
    start, end = config.start_epoch_s, config.end_epoch_s
    n = rng.poisson(profile.failure_rate_per_day * config.horizon_days)
    if n == 0:
        return []
    starts = np.sort(rng.uniform(start, end, size=n))
    durations = rng.exponential(profile.mean_outage_s, size=n)
    merged: list[list] = []
    for s, d in zip(starts, durations):
        e = min(s + d, end)
        if merged and s < merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], e)
        else:
            merged.append([s, e, OUTAGE_CAUSES[int(rng.integers(len(OUTAGE_CAUSES)))]])
    return [Outage(profile.atm_id, s, e, c) for s, e, c in merged if e > s]


def _arrival_offsets(rng: np.random.Generator, mean: float, span: float) -> np.ndarray:
    """Cumulative exponential arrivals in [0, span)."""
    if span <= 0:
        return np.empty(0)
    chunks = []
    total = 0.0
    while True:
        need = max(8, int((span - total) / mean * 1.2) + 8)
        draw = np.cumsum(rng.exponential(mean, size=need)) + total
        chunks.append(draw)
        total = draw[-1]
        if total >= span:
            break
    offsets = np.concatenate(chunks)
    return offsets[offsets < span]


def generate_transactions(
    profile: AtmProfile,
    up_intervals: list[tuple[float, float]],
    config: SimConfig,
    rng: np.random.Generator,
) -> TransactionBlock:
    """Exponential inter-arrival transactions confined to in-service time."""
    parts = []
    for a, b in up_intervals:
        offs = _arrival_offsets(rng, profile.mean_interarrival_s, b - a)
        if len(offs):
            parts.append(a + offs)
    ts = np.concatenate(parts) if parts else np.empty(0)
    amount = rng.integers(0, 4, size=len(ts)).astype(np.int8)
    return TransactionBlock(ts=ts, amount_class=amount)


def generate_status_snapshots(
    profile: AtmProfile,
    outages: list[Outage],
    transactions: TransactionBlock,
    config: SimConfig,
    rng: np.random.Generator,
) -> SnapshotBlock:
    """Report machine state at a fixed cadence through the noisy channel.

    A reported-down snapshot always carries exactly one failed component
    flag (the outage cause when truly down, a random component on a false
    alarm), so ``reported_up == all component flags``.
    """
    noise = config.noise
    n = config.snapshots_per_atm()
    ts = config.start_epoch_s + np.arange(n, dtype=np.int64) * config.snapshot_interval_s

    if outages:
        starts = np.array([o.start_s for o in outages])
        ends = np.array([o.end_s for o in outages])
        idx = np.searchsorted(starts, ts, side="right") - 1
        inside = (idx >= 0) & (ts < ends[idx.clip(min=0)])
    else:
        idx = np.zeros(n, dtype=np.int64)
        inside = np.zeros(n, dtype=bool)
    true_up = ~inside

    # false-alarm probability per snapshot, optionally tied to quiet gaps
    p_fa = np.full(n, noise.p_false_alarm)
    if noise.quiet_false_alarm is not None:
        last_tx = np.full(n, float(config.start_epoch_s))
        if len(transactions.ts):
            pos = np.searchsorted(transactions.ts, ts, side="right") - 1
            has = pos >= 0
            last_tx[has] = transactions.ts[pos[has]]
        quiet = (ts - last_tx) > profile.mean_interarrival_s * _GAP_LOG
        p_fa = np.where(quiet, noise.quiet_false_alarm, noise.active_false_alarm())

    u = rng.random(n)
    reported_up = np.where(true_up, u >= p_fa, u < noise.p_missed_alarm)

    cause_idx = rng.integers(0, len(OUTAGE_CAUSES), size=n)
    if len(outages):
        true_cause = np.array([OUTAGE_CAUSES.index(o.cause) for o in outages])
        cause_idx = np.where(inside, true_cause[idx.clip(min=0)], cause_idx)

    flags = np.ones((n, 3), dtype=bool)
    down_rows = ~reported_up
    flags[down_rows, cause_idx[down_rows]] = False
    return SnapshotBlock(
        ts=ts,
        card_reader_ok=flags[:, 0],
        keypad_ok=flags[:, 1],
        network_ok=flags[:, 2],
        reported_up=reported_up,
        true_up=true_up,
    )


def simulate(config: SimConfig) -> World:
    """Generate the whole fleet from per-ATM substreams of the config seed."""
    profiles = make_profiles(config)
    outages, transactions, snapshots = [], [], []
    for i, profile in enumerate(profiles):
        rng = _rng(config.seed, 2, i)
        atm_outages = generate_outages(profile, config, rng)
        ups = _complement_intervals(
            [(o.start_s, o.end_s) for o in atm_outages],
            config.start_epoch_s, config.end_epoch_s,
        )
        txs = generate_transactions(profile, ups, config, rng)
        snaps = generate_status_snapshots(profile, atm_outages, txs, config, rng)
        outages.append(atm_outages)
        transactions.append(txs)
        snapshots.append(snaps)
    return World(config, profiles, outages, transactions, snapshots)


def config_to_dict(config: SimConfig) -> dict:
    d = dataclasses.asdict(config)
    d["start_date"] = config.start_date.isoformat()
    d["holidays"] = [h.isoformat() for h in config.holidays]
    return d


def config_from_dict(d: dict) -> SimConfig:
    d = dict(d)
    if "noise" in d and isinstance(d["noise"], dict):
        d["noise"] = StatusNoiseModel(**d["noise"])
    if isinstance(d.get("start_date"), str):
        d["start_date"] = dt.date.fromisoformat(d["start_date"])
    d["holidays"] = tuple(dt.date.fromisoformat(h) for h in d.get("holidays", ()))
    return SimConfig(**d)


def write_world(world: World, out_dir: str | Path) -> None:
    """Write one JSONL file per stream plus the config and profiles."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "transactions.jsonl", "w") as fh:
        for pid, block in zip(world.atm_ids, world.transactions):
            for i in range(len(block)):
                fh.write(json.dumps({
                    "atm_id": pid, "ts": float(block.ts[i]),
                    "amount_class": int(block.amount_class[i]),
                }) + "\n")
    with open(out / "status.jsonl", "w") as fh:
        for pid, block in zip(world.atm_ids, world.snapshots):
            for i in range(len(block)):
                fh.write(json.dumps({
                    "atm_id": pid, "ts": int(block.ts[i]),
                    "card_reader_ok": bool(block.card_reader_ok[i]),
                    "keypad_ok": bool(block.keypad_ok[i]),
                    "network_ok": bool(block.network_ok[i]),
                    "reported_up": bool(block.reported_up[i]),
                    "true_up": bool(block.true_up[i]),
                }) + "\n")
    with open(out / "outages.jsonl", "w") as fh:
        for atm_outages in world.outages:
            for o in atm_outages:
                fh.write(json.dumps({
                    "atm_id": o.atm_id, "start_s": o.start_s,
                    "end_s": o.end_s, "cause": o.cause,
                }) + "\n")
    with open(out / "world.json", "w") as fh:
        json.dump({
            "config": config_to_dict(world.config),
            "profiles": [dataclasses.asdict(p) for p in world.profiles],
        }, fh, indent=2)


def read_world(in_dir: str | Path) -> World:
    src = Path(in_dir)
    try:
        meta = json.loads((src / "world.json").read_text())
    except OSError as exc:
        raise ValueError(f"not a world directory: {src}: {exc}") from exc
    config = config_from_dict(meta["config"])
    profiles = [AtmProfile(**p) for p in meta["profiles"]]
    index = {p.atm_id: i for i, p in enumerate(profiles)}

    outages: list[list[Outage]] = [[] for _ in profiles]
    for line in (src / "outages.jsonl").read_text().splitlines():
        d = json.loads(line)
        outages[index[d["atm_id"]]].append(Outage(**d))

    tx_ts: list[list[float]] = [[] for _ in profiles]
    tx_amount: list[list[int]] = [[] for _ in profiles]
    for line in (src / "transactions.jsonl").read_text().splitlines():
        d = json.loads(line)
        i = index[d["atm_id"]]
        tx_ts[i].append(d["ts"])
        tx_amount[i].append(d["amount_class"])
    transactions = [
        TransactionBlock(np.array(t, dtype=np.float64), np.array(a, dtype=np.int8))
        for t, a in zip(tx_ts, tx_amount)
    ]

    cols: list[dict[str, list]] = [
        {k: [] for k in ("ts", "card_reader_ok", "keypad_ok", "network_ok", "reported_up", "true_up")}
        for _ in profiles
    ]
    for line in (src / "status.jsonl").read_text().splitlines():
        d = json.loads(line)
        c = cols[index[d["atm_id"]]]
        for k in c:
            c[k].append(d[k])
    snapshots = [
        SnapshotBlock(
            ts=np.array(c["ts"], dtype=np.int64),
            card_reader_ok=np.array(c["card_reader_ok"], dtype=bool),
            keypad_ok=np.array(c["keypad_ok"], dtype=bool),
            network_ok=np.array(c["network_ok"], dtype=bool),
            reported_up=np.array(c["reported_up"], dtype=bool),
            true_up=np.array(c["true_up"], dtype=bool),
        )
        for c in cols
    ]
    return World(config, profiles, outages, transactions, snapshots)
