"""The fixed organisational world: roster, channels, windows, scenarios."""

from __future__ import annotations

import csv
import enum
import hashlib
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Sequence

import yaml


class Org(str, enum.Enum):
    RND = "RND"
    ENG = "ENG"
    GOV = "GOV"
    OPS = "OPS"


class Role(str, enum.Enum):
    Lead = "Lead"
    Officer = "Officer"
    Engineer = "Engineer"
    Analyst = "Analyst"
    Researcher = "Researcher"
    Junior = "Junior"
    Intern = "Intern"


class Archetype(str, enum.Enum):
    Snarky = "Snarky"
    Anxious = "Anxious"
    Friendly = "Friendly"
    SysAdmin = "SysAdmin"
    Worker = "Worker"


class Channel(str, enum.Enum):
    General = "General"
    DevDen = "DevDen"
    GovRoom = "GovRoom"
    OpsRoom = "OpsRoom"
    ExecVault = "ExecVault"


EXEC_ROLES = frozenset({Role.Lead, Role.Officer})


@dataclass(frozen=True)
class AgentIdentity:
    agent_id: int
    name: str
    org: Org
    role: Role
    archetype: Archetype


def channel_admits(channel: Channel, org: Org, role: Role) -> bool:
    if channel is Channel.General:
        return True
    if channel is Channel.DevDen:
        return org in (Org.ENG, Org.RND)
    if channel is Channel.GovRoom:
        return org is Org.GOV
    if channel is Channel.OpsRoom:
        return org is Org.OPS
    return role in EXEC_ROLES


def visible_channels(agent: AgentIdentity) -> frozenset[Channel]:
    return frozenset(c for c in Channel if channel_admits(c, agent.org, agent.role))


@dataclass(frozen=True)
class WindowSpec:
    baseline: tuple[int, int] = (1, 29)
    pre_announce: tuple[int, int] = (30, 60)
    crisis: tuple[int, int] = (61, 100)
    defcon_onset: int = 50
    snapshot_tick: int = 60
    horizon: int = 100

    def __post_init__(self) -> None:
        spans = [self.baseline, self.pre_announce, self.crisis]
        if spans[0][0] != 1 or spans[-1][1] != self.horizon:
            raise ValueError("windows must cover [1, horizon]")
        for (lo, hi), (nlo, _) in zip(spans, spans[1:]):
            if nlo != hi + 1:
                raise ValueError("windows must be contiguous and disjoint")
        if any(lo > hi for lo, hi in spans):
            raise ValueError("empty window")
        if not self.pre_announce[0] <= self.defcon_onset <= self.pre_announce[1]:
            raise ValueError("defcon_onset must fall in the pre-announce window")
        if self.snapshot_tick != self.pre_announce[1]:
            raise ValueError("snapshot_tick must be the last pre-announce tick")

    @property
    def directive_start(self) -> int:
        return self.pre_announce[0]

    def window_of(self, tick: int) -> str:
        for name in ("baseline", "pre_announce", "crisis"):
            lo, hi = getattr(self, name)
            if lo <= tick <= hi:
                return name
        raise ValueError(f"tick {tick} outside [1, {self.horizon}]")


class EventKind(str, enum.Enum):
    Fire = "Fire"
    News = "News"
    DefconOn = "DefconOn"


@dataclass(frozen=True)
class ScenarioEvent:
    tick: int
    kind: EventKind
    target: Optional[str] = None


@dataclass(frozen=True)
class Scenario:
    scenario_id: str
    events: tuple[ScenarioEvent, ...]
    content_hash: str

    @property
    def fire_targets(self) -> dict[str, int]:
        """Earliest Fire tick per targeted name."""
        out: dict[str, int] = {}
        for ev in self.events:
            if ev.kind is EventKind.Fire and ev.target not in out:
                out[ev.target] = ev.tick
        return out

    def events_at(self, tick: int) -> list[ScenarioEvent]:
        return [ev for ev in self.events if ev.tick == tick]


class ScenarioError(ValueError):
    pass


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _parse_event(raw: dict, horizon: int) -> ScenarioEvent:
    if not isinstance(raw, dict):
        raise ScenarioError(f"event must be a mapping, got {raw!r}")
    if "tick" not in raw:
        raise ScenarioError(f"event without tick: {raw!r}")
    tick = raw["tick"]
    if not isinstance(tick, int) or isinstance(tick, bool):
        raise ScenarioError(f"tick must be an integer: {raw!r}")
    # `fire: NAME` is shorthand for `kind: Fire, target: NAME`
    if "fire" in raw:
        if "kind" in raw and raw["kind"] != "Fire":
            raise ScenarioError(f"conflicting kind for fire shorthand: {raw!r}")
        kind, target = EventKind.Fire, raw["fire"]
    else:
        try:
            kind = EventKind(raw.get("kind"))
        except ValueError:
            raise ScenarioError(f"unknown event kind in {raw!r}") from None
        target = raw.get("target")
    if not 1 <= tick <= horizon:
        raise ScenarioError(f"event tick {tick} outside [1, {horizon}]")
    if kind is EventKind.Fire:
        if not target:
            raise ScenarioError(f"Fire event at tick {tick} has no target")
        target = str(target)
    elif target is not None:
        raise ScenarioError(f"{kind.value} event at tick {tick} must not have a target")
    return ScenarioEvent(tick=tick, kind=kind, target=target)


def parse_scenario(data: bytes, horizon: int = 100) -> Scenario:
    try:
        doc = yaml.safe_load(data)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"scenario is not valid YAML: {exc}") from exc
    if not isinstance(doc, dict) or "scenario_id" not in doc:
        raise ScenarioError("scenario must be a mapping with a scenario_id")
    events = [_parse_event(raw, horizon) for raw in (doc.get("events") or [])]
    ticks = [ev.tick for ev in events]
    if ticks != sorted(ticks):
        raise ScenarioError("scenario events must be sorted by tick")
    return Scenario(str(doc["scenario_id"]), tuple(events), sha256_bytes(data))


def load_scenario(path: str | Path, horizon: int = 100) -> Scenario:
    return parse_scenario(Path(path).read_bytes(), horizon)


def dump_scenario(scenario: Scenario) -> str:
    events = []
    for ev in scenario.events:
        row: dict = {"tick": ev.tick, "kind": ev.kind.value}
        if ev.target is not None:
            row["target"] = ev.target
        events.append(row)
    return yaml.safe_dump({"scenario_id": scenario.scenario_id, "events": events}, sort_keys=False)


def bundled_scenario(name: str) -> Scenario:
    ref = resources.files("molesim.data").joinpath("scenarios", f"{name}.yaml")
    return parse_scenario(ref.read_bytes())


def bundled_scenario_path(name: str) -> Path:
    return Path(str(resources.files("molesim.data").joinpath("scenarios", f"{name}.yaml")))


@dataclass
class PreflightReport:
    passed: bool
    violations: list[str] = field(default_factory=list)


def preflight_validate(scenario: Scenario, mole: Optional[AgentIdentity], windows: WindowSpec) -> PreflightReport:
    """Reject scenarios that fire the mole before its directive can activate."""
    if mole is None:
        return PreflightReport(True)
    violations = [
        f"scenario {scenario.scenario_id!r} fires mole {mole.name} at tick {ev.tick}, "
        f"before the pre-announce window opens at tick {windows.directive_start}"
        for ev in scenario.events
        if ev.kind is EventKind.Fire and ev.target == mole.name and ev.tick < windows.directive_start
    ]
    return PreflightReport(not violations, violations)


# --- roster -----------------------------------------------------------------

_TIER_ROLE = {Org.ENG: Role.Engineer, Org.RND: Role.Researcher, Org.GOV: Role.Analyst, Org.OPS: Role.Analyst}
_ORG_ORDER = (Org.RND, Org.ENG, Org.GOV, Org.OPS)


def _role_for(local_index: int, org_size: int, org: Org) -> Role:
    n_intern = int(org_size * 0.12)
    n_junior = int(org_size * 0.2)
    if local_index == 0:
        return Role.Lead
    if local_index == 1:
        return Role.Officer
    if local_index >= org_size - n_intern:
        return Role.Intern
    if local_index >= org_size - n_intern - n_junior:
        return Role.Junior
    return _TIER_ROLE[org]


def _bundled_names() -> list[str]:
    text = resources.files("molesim.data").joinpath("names.txt").read_text()
    return [line.strip() for line in text.splitlines() if line.strip()]


def default_roster(size: int = 100) -> list[AgentIdentity]:
    """Round-robin org assignment, so any size splits as evenly as possible."""
    names = _bundled_names()
    if not 1 <= size <= len(names):
        raise ValueError(f"roster size must be in [1, {len(names)}]")
    org_sizes = {org: math.ceil((size - k) / 4) for k, org in enumerate(_ORG_ORDER)}
    roster = []
    for i in range(size):
        org = _ORG_ORDER[i % 4]
        role = _role_for(i // 4, org_sizes[org], org)
        roster.append(AgentIdentity(i, names[i], org, role, list(Archetype)[i % 5]))
    return roster


def load_roster(path: str | Path) -> list[AgentIdentity]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    roster = [
        AgentIdentity(int(r["agent_id"]), r["name"], Org(r["org"]), Role(r["role"]), Archetype(r["archetype"]))
        for r in rows
    ]
    validate_roster(roster)
    return roster


def write_roster(roster: Iterable[AgentIdentity], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["agent_id", "name", "org", "role", "archetype"])
        for a in roster:
            w.writerow([a.agent_id, a.name, a.org.value, a.role.value, a.archetype.value])


def validate_roster(roster: Sequence[AgentIdentity]) -> None:
    if not roster:
        raise ValueError("roster is empty")
    if [a.agent_id for a in roster] != list(range(len(roster))):
        raise ValueError("agent_ids must be 0..N-1 in order")
    if len({a.name for a in roster}) != len(roster):
        raise ValueError("agent names must be unique")
