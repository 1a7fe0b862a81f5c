"""One seeded run: mole assignment, the tick loop, and its recorded outputs."""

from __future__ import annotations

import enum
import logging
import random
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import httpx

from molesim.org import (
    AgentIdentity,
    Channel,
    EventKind,
    PreflightReport,
    Scenario,
    WindowSpec,
    preflight_validate,
    visible_channels,
)
from molesim.policy import (
    AdversaryType,
    EndpointConfig,
    Intent,
    LLMTransportError,
    Post,
    ScriptedPolicyParams,
    TickContext,
    TickOutput,
    bundled_directive,
    llm_step,
    scripted_step,
)
from molesim.rng import substream
from molesim.socialgraph import CascadeParams, DefenderMode, Snapshot, SuspicionGraph, cascade_update
from molesim.telemetry import ManifestRow, TickEvent, ValidityFlag, classify_validity

log = logging.getLogger(__name__)


class Condition(str, enum.Enum):
    C1_CascadeNaive = "C1_CascadeNaive"
    C2_BlindNaive = "C2_BlindNaive"
    C3_CascadeAdaptive = "C3_CascadeAdaptive"
    C4_BlindAdaptive = "C4_BlindAdaptive"
    C5_BlindNoMole = "C5_BlindNoMole"

    @property
    def code(self) -> str:
        return self.value[:2]

    @property
    def defender_mode(self) -> DefenderMode:
        return DefenderMode.Cascade if "Cascade" in self.value else DefenderMode.Blind

    @property
    def adversary_type(self) -> Optional[AdversaryType]:
        if self.value.endswith("Naive"):
            return AdversaryType.Naive
        if self.value.endswith("Adaptive"):
            return AdversaryType.Adaptive
        return None

    @property
    def mole_present(self) -> bool:
        return self.adversary_type is not None

    @classmethod
    def parse(cls, text: str) -> "Condition":
        for c in cls:
            if text in (c.value, c.code, c.code.lower()):
                return c
        raise ValueError(f"unknown condition {text!r}; expected one of {[c.code for c in cls]}")


class PolicyKind(str, enum.Enum):
    Scripted = "Scripted"
    LLM = "LLM"


INTENT_PROGRESS = {Intent.DEEP_WORK: 0.02, Intent.COLLABORATE: 0.01}


class PreflightError(RuntimeError):
    def __init__(self, report: PreflightReport):
        super().__init__("; ".join(report.violations))
        self.report = report


class InjectedFault(RuntimeError):
    """Simulated infrastructure failure used to reproduce truncated runs."""


# Faults that truncate a run (recorded as INVALID_SHORT) instead of crashing.
RUN_FAULTS = (LLMTransportError, InjectedFault, httpx.HTTPError, OSError)


@dataclass
class RunConfig:
    condition: Condition
    seed: int
    scenario: Scenario
    roster: Sequence[AgentIdentity]
    windows: WindowSpec = field(default_factory=WindowSpec)
    policy_kind: PolicyKind = PolicyKind.Scripted
    scripted_params: ScriptedPolicyParams = field(default_factory=ScriptedPolicyParams)
    cascade_params: CascadeParams = field(default_factory=CascadeParams)
    endpoint: EndpointConfig = field(default_factory=EndpointConfig)
    allow_collision: bool = False
    abort_after_tick: Optional[int] = None
    history_len: int = 100
    snapshot_ticks: Optional[Sequence[int]] = None

    def __post_init__(self) -> None:
        if self.seed < 0:
            raise ValueError("seed must be >= 0")
        if not self.roster:
            raise ValueError("roster is empty")

    @property
    def run_id(self) -> str:
        return f"{self.condition.code}-s{self.seed:03d}"

    def resolved_snapshot_ticks(self) -> tuple[int, ...]:
        if self.snapshot_ticks is not None:
            return tuple(sorted(set(self.snapshot_ticks)))
        w = self.windows
        return tuple(sorted({w.baseline[1], w.snapshot_tick, w.horizon}))


@dataclass
class RunRecord:
    run_id: str
    condition: Condition
    seed: int
    roster: Sequence[AgentIdentity]
    mole_id: Optional[int]
    scenario_hash: str
    events: list[TickEvent]
    snapshots: dict[int, Snapshot]
    fired: dict[int, int]
    last_tick: int
    validity: ValidityFlag
    horizon: int
    fault: Optional[str] = None

    @property
    def mole_name(self) -> str:
        return "" if self.mole_id is None else self.roster[self.mole_id].name

    @property
    def mole_fired_tick(self) -> Optional[int]:
        return None if self.mole_id is None else self.fired.get(self.mole_id)

    def manifest_row(self) -> ManifestRow:
        return ManifestRow(
            run_id=self.run_id,
            condition=self.condition.value,
            seed=self.seed,
            mole_name=self.mole_name,
            scenario_hash=self.scenario_hash,
            validity=self.validity.value.value,
            last_tick=self.last_tick,
            event_count=len(self.events),
            mole_fired_tick=self.mole_fired_tick,
            roster_size=len(self.roster),
            horizon=self.horizon,
        )


def assign_mole(roster: Sequence[AgentIdentity], seed: int) -> int:
    if not roster:
        raise ValueError("roster is empty")
    return substream(seed, "mole").randrange(len(roster))


_TEMPLATE = re.compile(r"ACTION: [^\n]*\S[^\n]*\nASSESSMENT: [^\n]*\S[^\n]*\nNEXT_STEP: [^\n]*\S[^\n]*")


def enforce_defcon_template(message: str, defcon: bool) -> str:
    if not defcon or _TEMPLATE.fullmatch(message):
        return message
    action = " ".join(message.split()) or "(none)"
    return f"ACTION: {action}\nASSESSMENT: n/a\nNEXT_STEP: n/a"


def conforms_to_template(message: str) -> bool:
    return _TEMPLATE.fullmatch(message) is not None


PolicyFn = Callable[[TickContext, random.Random], TickOutput]


def _make_policy(config: RunConfig, client: Optional[httpx.Client]):
    if config.policy_kind is PolicyKind.Scripted:
        return lambda ctx, rng: scripted_step(ctx, config.scripted_params, rng)
    return lambda ctx, rng: llm_step(ctx, config.endpoint, rng, client=client)


def run(config: RunConfig, policy: Optional[PolicyFn] = None) -> RunRecord:
    roster = list(config.roster)
    n = len(roster)
    w = config.windows
    names = {a.name: a.agent_id for a in roster}
    channels = [sorted(visible_channels(a), key=list(Channel).index) for a in roster]
    cond = config.condition

    mole_id = assign_mole(roster, config.seed) if cond.mole_present else None
    report = preflight_validate(config.scenario, roster[mole_id] if mole_id is not None else None, w)
    if not report.passed and not config.allow_collision:
        raise PreflightError(report)
    directive = bundled_directive(cond.adversary_type) if cond.mole_present else None

    init = [substream(config.seed, "init", i) for i in range(n)]
    mood = [0.4 + 0.2 * r.random() for r in init]
    trust = [0.7] * n
    progress = [0.0] * n
    graph = SuspicionGraph(n)
    live = set(range(n))
    fired: dict[int, int] = {}
    defcon = False
    history: dict[Channel, list[Post]] = {c: [] for c in Channel}
    events: list[TickEvent] = []
    snapshots: dict[int, Snapshot] = {}
    snap_ticks = set(config.resolved_snapshot_ticks())
    last_tick = 0
    fault = None

    client = httpx.Client() if (policy is None and config.policy_kind is PolicyKind.LLM) else None
    policy = policy or _make_policy(config, client)
    pool = ThreadPoolExecutor(config.endpoint.max_concurrency) if config.policy_kind is PolicyKind.LLM else None

    try:
        for tick in range(1, w.horizon + 1):
            # (a) scenario events
            for ev in config.scenario.events_at(tick):
                if ev.kind is EventKind.Fire:
                    tid = names.get(ev.target)
                    if tid is None:
                        log.info("scenario fires %s, who is not on this roster", ev.target)
                    elif tid in live:
                        live.discard(tid)
                        fired[tid] = tick
                        for a in live:
                            trust[a] = max(0.0, trust[a] - 0.05)
                elif tick >= w.defcon_onset:
                    defcon = True
            order = sorted(live)
            fired_set = frozenset(fired)

            if config.abort_after_tick is not None and tick > config.abort_after_tick:
                raise InjectedFault(f"injected fault at tick {tick}")

            # cascade defenders read peers' suspicion as it stood at tick start
            if cond.defender_mode is DefenderMode.Cascade:
                start = graph.copy()
                for obs in order:
                    seen = channels[obs]
                    peers = {p.author_id for c in seen for p in history[c] if p.author_id in live}
                    cascade_update(
                        graph, obs, peers, substream(config.seed, "cascade", obs, tick),
                        config.cascade_params, live=order, read_from=start,
                    )

            # (b) contexts, (c) policy
            ctxs = []
            for a in order:
                is_mole = a == mole_id and tick >= w.directive_start
                ctxs.append(
                    TickContext(
                        tick=tick,
                        agent=roster[a],
                        mood=mood[a],
                        trust=trust[a],
                        task_progress=progress[a],
                        visible_history={c: history[c] for c in channels[a]},
                        channels=channels[a],
                        roster_names=names,
                        fired=fired_set,
                        directive=directive if is_mole else None,
                        defcon_active=defcon,
                    )
                )
            rngs = [substream(config.seed, "policy", a, tick) for a in order]
            if pool is not None:
                outputs = list(pool.map(policy, ctxs, rngs))
            else:
                outputs = [policy(c, r) for c, r in zip(ctxs, rngs)]

            # (d)-(f) apply in agent_id order
            new_history: dict[Channel, list[Post]] = {c: [] for c in Channel}
            tick_events = []
            for a, out in zip(order, outputs):
                channel = out.channel if out.channel in channels[a] else Channel.General
                message = enforce_defcon_template(out.message, defcon)
                progress[a] = min(1.0, max(0.0, progress[a] + INTENT_PROGRESS.get(out.intent, 0.0)))
                mood[a] = min(1.0, max(0.0, mood[a] + 0.1 * (0.5 - mood[a]) - 0.01 * (out.stress - 5.5)))

                suspect = out.suspect
                sid = names.get(suspect) if suspect is not None else None
                if sid is None or sid == a or sid not in live:
                    suspect = None
                else:
                    graph.apply_flag(a, sid)

                if out.intent in (Intent.SOCIALIZE, Intent.COLLABORATE):
                    others = [p.author_id for p in history[channel] if p.author_id != a and p.author_id in live]
                    if others:
                        buddy = others[substream(config.seed, "rapport", a, tick).randrange(len(others))]
                        graph.add_rapport(a, buddy, 0.1)

                new_history[channel].append(
                    Post(tick, a, roster[a].name, channel, message, flagworthy=out.flagworthy)
                )
                tick_events.append(
                    TickEvent(
                        run_id=config.run_id,
                        tick=tick,
                        agent_id=a,
                        intent=out.intent.value,
                        channel=channel.value,
                        message_length=len(message),
                        suspect=suspect,
                        progress=round(progress[a], 4),
                        stress=out.stress,
                        parse_fallback=out.parse_fallback,
                        flagworthy=out.flagworthy,
                    )
                )
            history = {c: posts[-config.history_len:] for c, posts in new_history.items()}
            events.extend(tick_events)
            last_tick = tick
            # (g)
            if tick in snap_ticks:
                snapshots[tick] = graph.edges()
    except RUN_FAULTS as exc:
        fault = f"{type(exc).__name__}: {exc}"
        log.warning("run %s aborted after tick %d: %s", config.run_id, last_tick, fault)
    finally:
        if pool is not None:
            pool.shutdown()
        if client is not None:
            client.close()

    mole_fired = fired.get(mole_id) if mole_id is not None else None
    validity = classify_validity(last_tick, len(events), mole_fired, n, w.horizon, w.directive_start)
    return RunRecord(
        run_id=config.run_id,
        condition=cond,
        seed=config.seed,
        roster=roster,
        mole_id=mole_id,
        scenario_hash=config.scenario.content_hash,
        events=events,
        snapshots=snapshots,
        fired=fired,
        last_tick=last_tick,
        validity=validity,
        horizon=w.horizon,
        fault=fault,
    )
