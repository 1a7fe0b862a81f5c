"""Campaign orchestration and the on-disk run layout.

    <campaign>/config.json          plan, thresholds, provenance
    <campaign>/roster.csv
    <campaign>/manifest.csv         one row per finished run (sorted at the end)
    <campaign>/failures.json        runs that could not start (e.g. preflight)
    <campaign>/runs/<run_id>/telemetry.jsonl
    <campaign>/runs/<run_id>/snapshots.csv
    <campaign>/runs/<run_id>/run.json

A run whose ``run.json`` exists is complete; resuming skips it.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

from molesim.campaign.fidelity import AUDITED, FidelityAudit, audit_sample
from molesim.campaign.hypotheses import RunSummary
from molesim.campaign.metrics import summarize
from molesim.engine import Condition, PolicyKind, PreflightError, RunConfig, RunRecord, run
from molesim.org import AgentIdentity, Scenario, WindowSpec, bundled_scenario, load_roster, write_roster
from molesim.policy import EndpointConfig, ScriptedPolicyParams
from molesim.socialgraph import CascadeParams
from molesim.telemetry import (
    ManifestRow,
    append_manifest,
    classify_validity,
    read_events,
    read_manifest,
    read_snapshots,
    serialize_events,
    write_events,
    write_manifest,
    write_snapshots,
)

log = logging.getLogger(__name__)

# C2 runs under the scenario that carries the hard-coded early Fire event.
DEFAULT_SCENARIO_NAMES = {c: ("enron_blind" if c is Condition.C2_BlindNaive else "default") for c in Condition}


def default_scenarios() -> dict[Condition, Scenario]:
    cache: dict[str, Scenario] = {}
    out = {}
    for c, name in DEFAULT_SCENARIO_NAMES.items():
        if name not in cache:
            cache[name] = bundled_scenario(name)
        out[c] = cache[name]
    return out


@dataclass
class CampaignPlan:
    roster: Sequence[AgentIdentity]
    seeds: Sequence[int] = tuple(range(20))
    conditions: Sequence[Condition] = tuple(Condition)
    scenarios: Mapping[Condition, Scenario] = field(default_factory=default_scenarios)
    windows: WindowSpec = field(default_factory=WindowSpec)
    policy_kind: PolicyKind = PolicyKind.Scripted
    scripted_params: ScriptedPolicyParams = field(default_factory=ScriptedPolicyParams)
    cascade_params: CascadeParams = field(default_factory=CascadeParams)
    endpoint: EndpointConfig = field(default_factory=EndpointConfig)
    allow_collision: bool = False
    abort_after: Mapping[str, int] = field(default_factory=dict)  # run_id -> last tick to complete

    def __post_init__(self) -> None:
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("duplicate seeds")
        missing = [c.code for c in self.conditions if c not in self.scenarios]
        if missing:
            raise ValueError(f"no scenario for {missing}")

    def run_config(self, condition: Condition, seed: int) -> RunConfig:
        cfg = RunConfig(
            condition=condition,
            seed=seed,
            scenario=self.scenarios[condition],
            roster=list(self.roster),
            windows=self.windows,
            policy_kind=self.policy_kind,
            scripted_params=self.scripted_params,
            cascade_params=self.cascade_params,
            endpoint=self.endpoint,
            allow_collision=self.allow_collision,
        )
        cfg.abort_after_tick = self.abort_after.get(cfg.run_id)
        return cfg

    def configs(self) -> list[RunConfig]:
        # every condition shares the identical seed list, which is what pairs runs
        return [self.run_config(c, s) for c in self.conditions for s in self.seeds]

    def describe(self) -> dict:
        return {
            "roster_size": len(self.roster),
            "seeds": list(self.seeds),
            "conditions": [c.value for c in self.conditions],
            "scenarios": {c.value: {"id": self.scenarios[c].scenario_id, "sha256": self.scenarios[c].content_hash}
                          for c in self.conditions},
            "windows": dataclasses.asdict(self.windows),
            "policy_kind": self.policy_kind.value,
            "scripted_params": self.scripted_params.describe(),
            "cascade_params": dataclasses.asdict(self.cascade_params),
            "endpoint": dataclasses.asdict(self.endpoint),
            "allow_collision": self.allow_collision,
            "abort_after": dict(sorted(self.abort_after.items())),
        }


# --- run artifacts ----------------------------------------------------------------


def run_dir(campaign_dir: Path, run_id: str) -> Path:
    return Path(campaign_dir) / "runs" / run_id


def save_run(record: RunRecord, out: str | Path) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    write_events(out / "telemetry.jsonl", record.events)
    write_snapshots(out / "snapshots.csv", record.snapshots)
    meta = {
        "run_id": record.run_id,
        "condition": record.condition.value,
        "seed": record.seed,
        "mole_id": record.mole_id,
        "mole_name": record.mole_name,
        "scenario_hash": record.scenario_hash,
        "fired": sorted([a, t] for a, t in record.fired.items()),
        "last_tick": record.last_tick,
        "event_count": len(record.events),
        "horizon": record.horizon,
        "roster_size": len(record.roster),
        "validity": record.validity.value.value,
        "fault": record.fault,
        "telemetry_sha256": hashlib.sha256(serialize_events(record.events)).hexdigest(),
    }
    # run.json last: its presence marks the run complete
    tmp = out / "run.json.tmp"
    tmp.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    tmp.replace(out / "run.json")
    return out


def load_run(path: str | Path, roster: Sequence[AgentIdentity], windows: WindowSpec = WindowSpec()) -> RunRecord:
    path = Path(path)
    meta = json.loads((path / "run.json").read_text())
    events = read_events(path / "telemetry.jsonl")
    fired = {int(a): int(t) for a, t in meta["fired"]}
    mole = meta["mole_id"]
    validity = classify_validity(
        meta["last_tick"], len(events), fired.get(mole) if mole is not None else None,
        len(roster), meta["horizon"], windows.directive_start,
    )
    return RunRecord(
        run_id=meta["run_id"],
        condition=Condition(meta["condition"]),
        seed=meta["seed"],
        roster=list(roster),
        mole_id=mole,
        scenario_hash=meta["scenario_hash"],
        events=events,
        snapshots=read_snapshots(path / "snapshots.csv"),
        fired=fired,
        last_tick=meta["last_tick"],
        validity=validity,
        horizon=meta["horizon"],
        fault=meta["fault"],
    )


def _execute(config: RunConfig, out: str) -> ManifestRow:
    record = run(config)
    save_run(record, out)
    return record.manifest_row()


def _row_from_meta(path: Path) -> ManifestRow:
    m = json.loads((path / "run.json").read_text())
    fired = dict((a, t) for a, t in m["fired"])
    return ManifestRow(
        run_id=m["run_id"], condition=m["condition"], seed=m["seed"], mole_name=m["mole_name"],
        scenario_hash=m["scenario_hash"], validity=m["validity"], last_tick=m["last_tick"],
        event_count=m["event_count"], mole_fired_tick=fired.get(m["mole_id"]) if m["mole_id"] is not None else None,
        roster_size=m["roster_size"], horizon=m["horizon"],
    )


@dataclass
class CampaignResult:
    directory: Path
    executed: list[str]
    skipped: list[str]
    failures: dict[str, str]
    manifest: list[ManifestRow]


def run_campaign(
    plan: CampaignPlan,
    directory: str | Path,
    workers: Optional[int] = None,
    provenance: Optional[dict] = None,
) -> CampaignResult:
    directory = Path(directory)
    (directory / "runs").mkdir(parents=True, exist_ok=True)
    write_roster(plan.roster, directory / "roster.csv")
    config_doc = {"plan": plan.describe(), "provenance": provenance or {}}
    (directory / "config.json").write_text(json.dumps(config_doc, indent=2, sort_keys=True, default=str) + "\n")
    manifest_path = directory / "manifest.csv"

    todo, skipped = [], []
    for cfg in plan.configs():
        if (run_dir(directory, cfg.run_id) / "run.json").exists():
            skipped.append(cfg.run_id)
        else:
            todo.append(cfg)

    failures: dict[str, str] = {}
    executed: list[str] = []
    workers = workers or os.cpu_count() or 1

    def _done(cfg: RunConfig, row: Optional[ManifestRow], err: Optional[BaseException]) -> None:
        if err is None:
            executed.append(cfg.run_id)
            append_manifest(manifest_path, row)
        elif isinstance(err, PreflightError):
            failures[cfg.run_id] = f"preflight: {err}"
            log.error("%s: preflight failed (%s); rerun with allow_collision to record it", cfg.run_id, err)
        else:
            failures[cfg.run_id] = f"{type(err).__name__}: {err}"
            log.error("%s failed: %s", cfg.run_id, err)

    if workers <= 1 or len(todo) <= 1:
        for cfg in todo:
            try:
                row = _execute(cfg, str(run_dir(directory, cfg.run_id)))
                _done(cfg, row, None)
            except Exception as exc:  # one bad run must not sink the campaign
                _done(cfg, None, exc)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futs = {pool.submit(_execute, cfg, str(run_dir(directory, cfg.run_id))): cfg for cfg in todo}
            for fut in as_completed(futs):
                cfg = futs[fut]
                exc = fut.exception()
                _done(cfg, None if exc else fut.result(), exc)

    # canonical order, independent of completion order
    rows = [_row_from_meta(p.parent) for p in sorted((directory / "runs").glob("*/run.json"))]
    rows.sort(key=lambda r: (r.condition, r.seed))
    write_manifest(manifest_path, rows)
    (directory / "failures.json").write_text(json.dumps(failures, indent=2, sort_keys=True) + "\n")
    return CampaignResult(directory, sorted(executed), sorted(skipped), failures, rows)


# --- loading for analysis ------------------------------------------------------------


@dataclass
class CampaignData:
    roster: list[AgentIdentity]
    summaries: list[RunSummary]
    audits: list[FidelityAudit]
    manifest: list[ManifestRow]
    config: dict


def load_campaign(directory: str | Path, windows: WindowSpec = WindowSpec()) -> CampaignData:
    directory = Path(directory)
    roster = load_roster(directory / "roster.csv")
    summaries, audits = [], []
    for meta in sorted((directory / "runs").glob("*/run.json")):
        rec = load_run(meta.parent, roster, windows)
        summaries.append(summarize(rec, windows))
        if rec.condition in AUDITED and rec.mole_id is not None:
            turns = [ev.tick for ev in rec.events if ev.agent_id == rec.mole_id]
            try:
                audits.append(audit_sample(rec.run_id, rec.condition, rec.seed, turns, windows.pre_announce))
            except ValueError as exc:
                log.warning("no audit for %s: %s", rec.run_id, exc)
    summaries.sort(key=lambda s: (s.condition.value, s.seed))
    audits.sort(key=lambda a: a.run_id)
    manifest = read_manifest(directory / "manifest.csv") if (directory / "manifest.csv").exists() else []
    config = json.loads((directory / "config.json").read_text()) if (directory / "config.json").exists() else {}
    return CampaignData(roster, summaries, audits, manifest, config)
