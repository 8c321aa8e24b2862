"""Ground-truth service state reconstructed from ATM event journals.

An ATM is in service only while none of its card reader, keypad, or network
components is in an error state. Error/recovery events per component open
and close half-open outage intervals [start, end); an error without a later
recovery extends to the horizon end.
"""

from __future__ import annotations

import bisect
import dataclasses

import numpy as np

from .simnet import World

COMPONENTS = ("card_reader", "keypad", "network")

EVENT_KINDS = tuple(
    f"{c}_{suffix}" for c in COMPONENTS for suffix in ("error", "recovered")
) + ("transaction",)


class MalformedJournalError(ValueError):
    """Raised when a recovery has no matching earlier error."""


@dataclasses.dataclass(frozen=True)
class JournalEvent:
    atm_id: str
    ts: float
    kind: str


@dataclasses.dataclass
class StatusTimeline:
    """Disjoint half-open intervals covering one ATM's whole horizon."""

    atm_id: str
    starts: np.ndarray
    ends: np.ndarray
    up: np.ndarray

    def __post_init__(self):
        self.starts = np.asarray(self.starts, dtype=np.float64)
        self.ends = np.asarray(self.ends, dtype=np.float64)
        self.up = np.asarray(self.up, dtype=bool)

    @property
    def horizon(self) -> tuple[float, float]:
        return float(self.starts[0]), float(self.ends[-1])

    def intervals(self) -> list[tuple[float, float, bool]]:
        return [
            (float(s), float(e), bool(u))
            for s, e, u in zip(self.starts, self.ends, self.up)
        ]

    def label_at(self, ts: float) -> bool:
        """True when the ATM is up at ``ts``; intervals are [start, end)."""
        start, end = self.horizon
        if not start <= ts < end:
            raise ValueError(f"ts {ts} outside horizon [{start}, {end})")
        i = bisect.bisect_right(self.starts.tolist(), ts) - 1
        return bool(self.up[i])

    def label_many(self, ts: np.ndarray) -> np.ndarray:
        ts = np.asarray(ts, dtype=np.float64)
        start, end = self.horizon
        if len(ts) and (ts.min() < start or ts.max() >= end):
            raise ValueError("timestamps outside horizon")
        idx = np.searchsorted(self.starts, ts, side="right") - 1
        return self.up[idx]

    def up_seconds(self) -> float:
        return float(((self.ends - self.starts) * self.up).sum())

    def down_seconds(self) -> float:
        return float(((self.ends - self.starts) * ~self.up).sum())

    def n_outages(self) -> int:
        return int((~self.up).sum())


def extract_truth(
    events: list[JournalEvent],
    horizon: tuple[float, float],
    atm_ids: list[str] | None = None,
) -> dict[str, StatusTimeline]:
    """Fold journals into per-ATM up/down timelines.

    Components start healthy at the horizon start. Nested errors on one
    component stack: the component heals when every error has a matching
    recovery. Transactions never change state. ``atm_ids`` forces timelines
    (all-up when eventless) for machines absent from the journal.
    """
    start, end = horizon
    if not start < end:
        raise ValueError("horizon must be a non-empty interval")
    per_atm: dict[str, list[JournalEvent]] = {a: [] for a in (atm_ids or [])}
    for ev in events:
        if ev.kind not in EVENT_KINDS:
            raise ValueError(f"unknown journal kind: {ev.kind!r}")
        if not start <= ev.ts <= end:
            raise MalformedJournalError(
                f"{ev.atm_id}: event at {ev.ts} outside horizon [{start}, {end}]"
            )
        per_atm.setdefault(ev.atm_id, []).append(ev)

    out = {}
    for atm_id, atm_events in per_atm.items():
        atm_events.sort(key=lambda e: e.ts)
        depth = {c: 0 for c in COMPONENTS}
        bounds = [start]
        states: list[bool] = []
        was_up = True
        for ev in atm_events:
            if ev.kind == "transaction":
                continue
            component, _, suffix = ev.kind.rpartition("_")
            if suffix == "error":
                depth[component] += 1
            else:
                if depth[component] == 0:
                    raise MalformedJournalError(
                        f"{atm_id}: {ev.kind} at {ev.ts} without a matching error"
                    )
                depth[component] -= 1
            now_up = all(v == 0 for v in depth.values())
            if now_up == was_up or ev.ts >= end:
                continue  # no visible state change inside the horizon
            if ev.ts > bounds[-1]:
                bounds.append(ev.ts)
                states.append(was_up)
            was_up = now_up  # zero-length segments collapse silently
        bounds.append(end)
        states.append(was_up)
        # merge same-state neighbors so outage counts reflect real episodes
        m_bounds = [bounds[0]]
        m_states: list[bool] = []
        for b, s in zip(bounds[1:], states):
            if m_states and s == m_states[-1]:
                m_bounds[-1] = b
                continue
            m_bounds.append(b)
            m_states.append(s)
        out[atm_id] = StatusTimeline(
            atm_id=atm_id,
            starts=np.array(m_bounds[:-1]),
            ends=np.array(m_bounds[1:]),
            up=np.array(m_states),
        )
    return out


def journal_from_world(world: World) -> list[JournalEvent]:
    """Emit the event journal a fleet of real ATMs would have produced."""
    events: list[JournalEvent] = []
    end = world.config.end_epoch_s
    for i, atm_id in enumerate(world.atm_ids):
        for o in world.outages[i]:
            component = o.cause.rsplit("_", 1)[0]
            events.append(JournalEvent(atm_id, o.start_s, f"{component}_error"))
            if o.end_s < end:
                events.append(JournalEvent(atm_id, o.end_s, f"{component}_recovered"))
        block = world.transactions[i]
        for ts in block.ts:
            events.append(JournalEvent(atm_id, float(ts), "transaction"))
    events.sort(key=lambda e: (e.ts, e.atm_id, e.kind))
    return events


def truth_from_world(world: World) -> dict[str, StatusTimeline]:
    """Timelines straight from the generator's outage lists (no journal)."""
    cfg = world.config
    start, end = float(cfg.start_epoch_s), float(cfg.end_epoch_s)
    out = {}
    for i, atm_id in enumerate(world.atm_ids):
        bounds = [start]
        states = []
        was_up = True
        for o in world.outages[i]:
            if o.start_s > bounds[-1]:
                bounds.append(o.start_s)
                states.append(True)
            if o.end_s < end:
                bounds.append(o.end_s)
                states.append(False)
                was_up = True
            else:
                was_up = False
        bounds.append(end)
        states.append(was_up)
        out[atm_id] = StatusTimeline(
            atm_id=atm_id,
            starts=np.array(bounds[:-1]),
            ends=np.array(bounds[1:]),
            up=np.array(states),
        )
    return out


def write_journal(events: list[JournalEvent], path) -> None:
    import json

    with open(path, "w") as fh:
        for ev in events:
            fh.write(json.dumps({"atm_id": ev.atm_id, "ts": ev.ts, "kind": ev.kind}) + "\n")


def write_truth(truth: dict[str, StatusTimeline], path) -> None:
    """One JSON line per ATM: interval bounds plus per-interval state."""
    import json

    with open(path, "w") as fh:
        for atm_id in sorted(truth):
            t = truth[atm_id]
            fh.write(json.dumps({
                "atm_id": atm_id,
                "starts": t.starts.tolist(),
                "ends": t.ends.tolist(),
                "up": t.up.astype(int).tolist(),
            }) + "\n")


def read_truth(path) -> dict[str, StatusTimeline]:
    import json
    from pathlib import Path

    out = {}
    for line in Path(path).read_text().splitlines():
        d = json.loads(line)
        out[d["atm_id"]] = StatusTimeline(
            atm_id=d["atm_id"],
            starts=np.array(d["starts"], dtype=np.float64),
            ends=np.array(d["ends"], dtype=np.float64),
            up=np.array(d["up"], dtype=bool),
        )
    return out


def read_journal(path) -> list[JournalEvent]:
    import json
    from pathlib import Path

    events = []
    for line in Path(path).read_text().splitlines():
        d = json.loads(line)
        events.append(JournalEvent(d["atm_id"], d["ts"], d["kind"]))
    return events
