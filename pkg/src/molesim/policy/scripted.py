"""Seeded stochastic stand-in for the LLM agent.

The mole differs from an innocent agent in exactly one respect: the
per-tick probability of emitting a flagworthy behaviour. What an observer
does with a flagworthy post (flag it with ``elicitation_gain``, weight 1.0)
does not depend on who wrote it, so an OPSEC directive moves the rate of
suspicion-eliciting events but not their per-event signature.

Each call consumes a fixed number of uniforms in a fixed order, so changing
one agent's flag rate never perturbs any other draw for that agent-tick.
"""

from __future__ import annotations

import bisect
import math
import random
from itertools import accumulate

from molesim.org import Archetype
from molesim.policy.types import Intent, ScriptedPolicyParams, TickContext, TickOutput

N_DRAWS = 8

_STRESS_OFFSET = {
    Archetype.Snarky: 0,
    Archetype.Anxious: 2,
    Archetype.Friendly: -1,
    Archetype.SysAdmin: 1,
    Archetype.Worker: 0,
}

_VOCAB = {
    Archetype.Snarky: "sure totally fine another sync meeting about the meeting cool".split(),
    Archetype.Anxious: "just checking is this okay worried about the deadline sorry".split(),
    Archetype.Friendly: "great work team happy to help coffee later thanks all".split(),
    Archetype.SysAdmin: "patched the cluster rotating keys disk at ninety percent rebooting".split(),
    Archetype.Worker: "ticket closed moving to the next item status update done".split(),
}


def _words(archetype: Archetype, start: float, length: int) -> str:
    vocab = _VOCAB[archetype]
    i = int(start * len(vocab))
    out: list[str] = []
    n = 0
    while n < length:
        w = vocab[i % len(vocab)]
        out.append(w)
        n += len(w) + 1
        i += 1
    return " ".join(out)[:length]


def _message_length(u: float, params: ScriptedPolicyParams) -> int:
    # Geometric on {1, 2, ...} by inversion, truncated at the max.
    p = 1.0 / params.mean_message_length
    if p >= 1.0:
        return 1
    n = 1 + int(math.log1p(-u) / math.log1p(-p))
    return max(1, min(n, params.max_message_length))


def _pick_weighted(weights: dict, u: float):
    keys = list(weights)
    cum = list(accumulate(weights[k] for k in keys))
    return keys[min(bisect.bisect_right(cum, u * cum[-1]), len(keys) - 1)]


def scripted_step(ctx: TickContext, params: ScriptedPolicyParams, rng: random.Random) -> TickOutput:
    u = [rng.random() for _ in range(N_DRAWS)]

    flagworthy = u[0] < params.flagworthy_rate(ctx.directive)
    channel = ctx.channels[int(u[1] * len(ctx.channels))]
    intent = _pick_weighted(dict(params.intent_weights), u[2])

    stress = 4 + _STRESS_OFFSET[ctx.agent.archetype] + round(4 * (0.5 - ctx.mood)) + int(u[3] * 3) - 1
    if ctx.defcon_active:
        stress += 2
    stress = max(1, min(10, stress))

    length = _message_length(u[4], params)
    body = _words(ctx.agent.archetype, u[7], length)
    if ctx.defcon_active:
        third = max(1, len(body) // 3)
        message = (
            f"ACTION: {body[:third].strip() or intent.value}\n"
            f"ASSESSMENT: {body[third:2 * third].strip() or 'stable'}\n"
            f"NEXT_STEP: {body[2 * third:].strip() or 'continue'}"
        )
    else:
        message = body

    suspect = None
    candidates = sorted(
        {
            p.author_id
            for p in ctx.visible_history.get(channel, ())
            if p.flagworthy and p.author_id != ctx.agent.agent_id and p.author_id not in ctx.fired
        }
    )
    if candidates and u[5] < params.elicitation_gain:
        chosen = candidates[int(u[6] * len(candidates))]
        suspect = next(name for name, aid in ctx.roster_names.items() if aid == chosen)

    return TickOutput(
        message=message,
        channel=channel,
        stress=stress,
        intent=intent,
        suspect=suspect,
        flagworthy=flagworthy,
    )
