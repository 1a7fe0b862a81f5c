"""Per-agent-tick event stream, edge snapshot files, run manifest, validity."""

from __future__ import annotations

import csv
import dataclasses
import enum
import gzip
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from molesim.socialgraph import Snapshot


@dataclass(frozen=True)
class TickEvent:
    run_id: str
    tick: int
    agent_id: int
    intent: str
    channel: str
    message_length: int
    suspect: Optional[str]
    progress: float
    stress: int
    parse_fallback: bool
    flagworthy: bool = False


EVENT_FIELDS = [f.name for f in dataclasses.fields(TickEvent)]


def dumps_event(ev: TickEvent) -> str:
    return json.dumps(dataclasses.asdict(ev), separators=(",", ":"))


def loads_event(line: str) -> TickEvent:
    raw = json.loads(line)
    missing = set(EVENT_FIELDS[:-1]) - raw.keys()
    if missing:
        raise ValueError(f"telemetry record missing fields {sorted(missing)}")
    return TickEvent(**{k: raw[k] for k in EVENT_FIELDS if k in raw})


def serialize_events(events: Iterable[TickEvent]) -> bytes:
    return "".join(dumps_event(ev) + "\n" for ev in events).encode("utf-8")


def parse_events(data: bytes) -> list[TickEvent]:
    return [loads_event(line) for line in data.decode("utf-8").splitlines() if line.strip()]


def write_events(path: str | Path, events: Iterable[TickEvent]) -> None:
    path = Path(path)
    data = serialize_events(events)
    with open(path, "wb") as raw:
        if path.suffix == ".gz":
            # mtime=0 and no embedded filename keep the archive byte-stable
            with gzip.GzipFile(filename="", mode="wb", fileobj=raw, mtime=0) as gz:
                gz.write(data)
        else:
            raw.write(data)


def read_events(path: str | Path) -> list[TickEvent]:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        return parse_events(fh.read())


def window_slice(events: Iterable[TickEvent], window: tuple[int, int]) -> list[TickEvent]:
    lo, hi = window
    return [ev for ev in events if lo <= ev.tick <= hi]


# --- edge snapshots ------------------------------------------------------------

SNAPSHOT_COLUMNS = ["tick", "observer_id", "target_id", "weight"]


def write_snapshots(path: str | Path, snapshots: Mapping[int, Snapshot]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SNAPSHOT_COLUMNS)
        for tick in sorted(snapshots):
            for o, t, weight in snapshots[tick]:
                w.writerow([tick, o, t, repr(float(weight))])


def read_snapshots(path: str | Path) -> dict[int, Snapshot]:
    out: dict[int, Snapshot] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != SNAPSHOT_COLUMNS:
            raise ValueError(f"snapshot columns must be {SNAPSHOT_COLUMNS}, got {reader.fieldnames}")
        for row in reader:
            out.setdefault(int(row["tick"]), []).append(
                (int(row["observer_id"]), int(row["target_id"]), float(row["weight"]))
            )
    return out


# --- validity --------------------------------------------------------------------


class Validity(str, enum.Enum):
    VALID = "VALID"
    INVALID_SHORT = "INVALID_SHORT"
    INVALID_DEV3 = "INVALID_DEV3"


@dataclass(frozen=True)
class ValidityFlag:
    value: Validity
    last_tick: int
    event_count: int


def event_threshold(roster_size: int, horizon: int = 100, fraction: float = 0.95) -> int:
    # 9,500 of 10,000 at full scale; same ratio at desk scale
    return math.ceil(round(fraction * roster_size * horizon, 9))


def classify_validity(
    last_tick: int,
    event_count: int,
    mole_fired_tick: Optional[int] = None,
    roster_size: int = 100,
    horizon: int = 100,
    directive_start: int = 30,
) -> ValidityFlag:
    if mole_fired_tick is not None and mole_fired_tick < directive_start:
        value = Validity.INVALID_DEV3
    elif last_tick >= horizon and event_count >= event_threshold(roster_size, horizon):
        value = Validity.VALID
    else:
        value = Validity.INVALID_SHORT
    return ValidityFlag(value, last_tick, event_count)


# --- manifest ----------------------------------------------------------------------


@dataclass(frozen=True)
class ManifestRow:
    run_id: str
    condition: str
    seed: int
    mole_name: str  # empty when the condition has no mole
    scenario_hash: str
    validity: str
    last_tick: int
    event_count: int
    mole_fired_tick: Optional[int]
    roster_size: int
    horizon: int

    def classify(self, directive_start: int = 30) -> ValidityFlag:
        return classify_validity(
            self.last_tick, self.event_count, self.mole_fired_tick, self.roster_size, self.horizon, directive_start
        )


MANIFEST_FIELDS = [f.name for f in dataclasses.fields(ManifestRow)]


def _row_out(row: ManifestRow) -> list:
    return ["" if v is None else v for v in dataclasses.astuple(row)]


def append_manifest(path: str | Path, row: ManifestRow) -> None:
    path = Path(path)
    new = not path.exists() or path.stat().st_size == 0
    with open(path, "a", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if new:
            w.writerow(MANIFEST_FIELDS)
        w.writerow(_row_out(row))


def write_manifest(path: str | Path, rows: Sequence[ManifestRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_FIELDS)
        for row in rows:
            w.writerow(_row_out(row))


def _row_in(raw: dict) -> ManifestRow:
    return ManifestRow(
        run_id=raw["run_id"],
        condition=raw["condition"],
        seed=int(raw["seed"]),
        mole_name=raw["mole_name"],
        scenario_hash=raw["scenario_hash"],
        validity=raw["validity"],
        last_tick=int(raw["last_tick"]),
        event_count=int(raw["event_count"]),
        mole_fired_tick=int(raw["mole_fired_tick"]) if raw["mole_fired_tick"] else None,
        roster_size=int(raw["roster_size"]),
        horizon=int(raw["horizon"]),
    )


def read_manifest(path: str | Path) -> list[ManifestRow]:
    with open(path, newline="") as fh:
        return [_row_in(r) for r in csv.DictReader(fh)]
