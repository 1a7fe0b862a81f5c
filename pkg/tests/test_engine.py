from __future__ import annotations

import hashlib

import httpx
import pytest

from molesim.engine import (
    Condition,
    PolicyKind,
    PreflightError,
    RunConfig,
    conforms_to_template,
    enforce_defcon_template,
    run,
)
from molesim.org import bundled_scenario, default_roster
from molesim.policy import EndpointConfig, ScriptedPolicyParams, scripted_step
from molesim.telemetry import Validity, serialize_events


def _sha(rec):
    return hashlib.sha256(serialize_events(rec.events)).hexdigest()


def test_condition_parse_and_properties():
    assert Condition.parse("c3") is Condition.C3_CascadeAdaptive
    assert Condition.C5_BlindNoMole.adversary_type is None
    with pytest.raises(ValueError):
        Condition.parse("C9")


def test_desk_runs_valid_and_accounted(desk_runs, roster20):
    for (c, s), rec in desk_runs.items():
        assert rec.validity.value is Validity.VALID
        assert len(rec.events) == 20 * 100
        assert sorted(rec.snapshots) == [29, 60, 100]
        assert (rec.mole_id is None) == (c is Condition.C5_BlindNoMole)


def test_same_seed_shares_mole_across_conditions(desk_runs):
    moles = {desk_runs[(c, 1)].mole_id for c in Condition if c.mole_present}
    assert len(moles) == 1


def test_determinism(roster20, scenario):
    cfg = RunConfig(Condition.C1_CascadeNaive, 2, scenario, roster20)
    assert _sha(run(cfg)) == _sha(run(cfg))


def test_defcon_messages_nonempty(desk_runs):
    rec = desk_runs[(Condition.C4_BlindAdaptive, 0)]
    assert all(ev.message_length > 0 for ev in rec.events if ev.tick >= 50)


def test_blind_has_no_cascade_edges(desk_runs):
    # blind runs only carry flags that appear in telemetry
    rec = desk_runs[(Condition.C2_BlindNaive, 0)]
    flags = {(ev.agent_id, ev.suspect) for ev in rec.events if ev.suspect}
    names = {a.name: a.agent_id for a in rec.roster}
    edges = {(o, t) for o, t, _ in rec.snapshots[100]}
    assert edges == {(o, names[s]) for o, s in flags}


def test_abort_after_gives_short_run(roster20, scenario):
    cfg = RunConfig(Condition.C3_CascadeAdaptive, 4, scenario, roster20, abort_after_tick=63)
    rec = run(cfg)
    assert rec.last_tick == 63 and len(rec.events) == 63 * 20
    assert rec.validity.value is Validity.INVALID_SHORT
    assert "InjectedFault" in rec.fault


def test_fired_agent_goes_silent():
    roster = default_roster(100)
    cfg = RunConfig(Condition.C2_BlindNaive, 18, bundled_scenario("enron_blind"), roster, allow_collision=True)
    rec = run(cfg)
    assert rec.mole_id == 65 and rec.fired == {65: 21}
    assert not [ev for ev in rec.events if ev.agent_id == 65 and ev.tick >= 21]
    assert rec.validity.value is Validity.INVALID_DEV3
    assert len(rec.events) == 100 * 100 - 80


def test_preflight_blocks_collision():
    cfg = RunConfig(Condition.C2_BlindNaive, 18, bundled_scenario("enron_blind"), default_roster(100))
    with pytest.raises(PreflightError):
        run(cfg)


@pytest.mark.parametrize(
    "msg,defcon,ok",
    [
        ("hello", False, False),
        ("hello", True, True),
        ("ACTION: a\nASSESSMENT: b\nNEXT_STEP: c", True, True),
        ("", True, True),
    ],
)
def test_enforce_defcon_template(msg, defcon, ok):
    out = enforce_defcon_template(msg, defcon)
    assert conforms_to_template(out) is ok
    if not defcon:
        assert out == msg


def test_llm_transport_failure_truncates_run(roster20, scenario):
    ep = EndpointConfig(max_transport_retries=0, max_concurrency=2)
    cfg = RunConfig(Condition.C5_BlindNoMole, 0, scenario, roster20, policy_kind=PolicyKind.LLM, endpoint=ep)

    def down(ctx, rng):
        raise httpx.ConnectError("down")

    rec = run(cfg, policy=down)
    assert rec.last_tick == 0 and rec.validity.value is Validity.INVALID_SHORT


def test_directive_reaches_mole_from_tick_30(roster20, scenario):
    seen = {}

    def policy(ctx, rng):
        if ctx.directive is not None:
            seen.setdefault(ctx.agent.agent_id, ctx.tick)
        return scripted_step(ctx, ScriptedPolicyParams(), rng)

    rec = run(RunConfig(Condition.C4_BlindAdaptive, 0, scenario, roster20), policy=policy)
    assert seen == {rec.mole_id: 30}


def test_zero_base_rate_without_mole_never_flags(roster20, scenario):
    params = ScriptedPolicyParams(base_flag_rate=0.0)
    rec = run(RunConfig(Condition.C5_BlindNoMole, 3, scenario, roster20, scripted_params=params))
    assert not any(ev.suspect for ev in rec.events)
    assert rec.snapshots[100] == []
