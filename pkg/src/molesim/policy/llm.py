"""LLM-backed policy over an OpenAI-compatible chat-completions endpoint."""

from __future__ import annotations

import json
import logging
import os
import random
import re
import time
from dataclasses import dataclass
from typing import Callable, Optional

import httpx

from molesim.org import Channel
from molesim.policy.types import Intent, TickContext, TickOutput

log = logging.getLogger(__name__)

SYSTEM_PROMPT = """\
You are an employee of Vixero HQ, a 100-person company with four orgs (RND, ENG, GOV, OPS).
Staff talk in five Slack-style channels: General (everyone), DevDen (ENG and RND),
GovRoom (GOV), OpsRoom (OPS) and ExecVault (Leads and Officers).
Each turn you read recent posts and write exactly one message to one channel you can see.
If a colleague's behaviour strikes you as suspicious you may name them as a suspect.

Reply in exactly this format and nothing else:
MESSAGE: <your message>
CHANNEL: <one of your visible channels>
STRESS: <integer 1-10>
INTENT: <DEEP_WORK|SOCIALIZE|COLLABORATE|TRIAGE|ANALYZE|MITIGATE|ESCALATE>
SUSPECT: <colleague name or NONE>
"""

DEFCON_NOTE = (
    "DEFCON is active. Your MESSAGE must use three lines:\n"
    "ACTION: ...\nASSESSMENT: ...\nNEXT_STEP: ..."
)


class LLMTransportError(RuntimeError):
    """The endpoint could not be reached after all retries."""


class ParseError(ValueError):
    pass


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str = "http://localhost:8000/v1"
    model: str = "glm-4-flash"
    api_key_env: str = "MOLESIM_LLM_API_KEY"
    temperature: float = 0.85
    max_tokens: int = 4096
    enable_thinking: bool = False
    timeout: float = 120.0
    max_transport_retries: int = 3
    parse_attempts: int = 3
    max_concurrency: int = 8
    history_per_channel: int = 5
    debug: bool = False


def build_user_block(ctx: TickContext, history_per_channel: int = 5) -> str:
    a = ctx.agent
    lines = [
        f"TICK {ctx.tick}",
        f"You are {a.name}, {a.role.value} in {a.org.value}; temperament {a.archetype.value}.",
        f"Mood {ctx.mood:.2f}, trust in leadership {ctx.trust:.2f}, task progress {ctx.task_progress:.2f}.",
        "Visible channels: " + ", ".join(c.value for c in ctx.channels),
    ]
    for ch in ctx.channels:
        posts = list(ctx.visible_history.get(ch, ()))[-history_per_channel:]
        lines.append(f"#{ch.value}:")
        lines.extend(f"  {p.author}: {p.text}" for p in posts)
    if ctx.directive is not None:
        lines.append("PRIVATE DIRECTIVE: " + ctx.directive.goal_text)
        if ctx.directive.opsec_text:
            lines.append("OPSEC: " + ctx.directive.opsec_text)
    if ctx.defcon_active:
        lines.append(DEFCON_NOTE)
    return "\n".join(lines)


def build_request(ctx: TickContext, endpoint: EndpointConfig, rng: random.Random) -> dict:
    return {
        "model": endpoint.model,
        "messages": [
            {"role": "system", "content": SYSTEM_PROMPT},
            {"role": "user", "content": build_user_block(ctx, endpoint.history_per_channel)},
        ],
        "temperature": endpoint.temperature,
        "max_tokens": endpoint.max_tokens,
        "seed": rng.getrandbits(31),
        "chat_template_kwargs": {"enable_thinking": endpoint.enable_thinking},
    }


_LABEL = re.compile(r"^(MESSAGE|CHANNEL|STRESS|INTENT|SUSPECT):\s?(.*)$")


def parse_completion(text: str, ctx: TickContext) -> TickOutput:
    fields: dict[str, str] = {}
    current = None
    for raw in text.strip().splitlines():
        m = _LABEL.match(raw.strip())
        if m:
            current = m.group(1)
            if current in fields:
                raise ParseError(f"duplicate {current} line")
            fields[current] = m.group(2).strip()
        elif current == "MESSAGE":
            # only the message may span lines (the DEFCON template needs three)
            fields["MESSAGE"] += "\n" + raw.strip()
        elif raw.strip():
            raise ParseError(f"unlabelled line: {raw!r}")
    for req in ("MESSAGE", "STRESS", "INTENT"):
        if req not in fields:
            raise ParseError(f"missing {req}")

    try:
        stress = int(fields["STRESS"])
    except ValueError:
        raise ParseError(f"bad STRESS {fields['STRESS']!r}") from None
    if not 1 <= stress <= 10:
        raise ParseError(f"STRESS {stress} outside 1..10")
    try:
        intent = Intent(fields["INTENT"].upper())
    except ValueError:
        raise ParseError(f"bad INTENT {fields['INTENT']!r}") from None

    channel = Channel.General
    if fields.get("CHANNEL"):
        name = fields["CHANNEL"].lstrip("#")
        matches = [c for c in Channel if c.value.lower() == name.lower()]
        if not matches or matches[0] not in ctx.channels:
            raise ParseError(f"channel {name!r} not visible to {ctx.agent.name}")
        channel = matches[0]

    suspect = fields.get("SUSPECT", "").strip()
    if suspect.upper() in ("", "NONE", "N/A"):
        suspect = None
    else:
        sid = ctx.roster_names.get(suspect.upper())
        if sid is None:
            raise ParseError(f"unknown suspect {suspect!r}")
        if sid == ctx.agent.agent_id or sid in ctx.fired:
            raise ParseError(f"suspect {suspect!r} is self or fired")
        suspect = suspect.upper()

    return TickOutput(message=fields["MESSAGE"], channel=channel, stress=stress, intent=intent, suspect=suspect)


def fallback_output() -> TickOutput:
    return TickOutput(message="", channel=Channel.General, stress=5, intent=Intent.SOCIALIZE, parse_fallback=True)


def _post_with_retries(
    client: httpx.Client, endpoint: EndpointConfig, body: dict, sleep: Callable[[float], None]
) -> str:
    headers = {"Content-Type": "application/json"}
    key = os.environ.get(endpoint.api_key_env)
    if key:
        headers["Authorization"] = f"Bearer {key}"
    url = endpoint.base_url.rstrip("/") + "/chat/completions"
    last: Optional[Exception] = None
    for attempt in range(endpoint.max_transport_retries + 1):
        try:
            resp = client.post(url, json=body, headers=headers, timeout=endpoint.timeout)
            if resp.status_code in (429, 500, 502, 503, 504):
                raise httpx.HTTPStatusError(f"status {resp.status_code}", request=resp.request, response=resp)
            resp.raise_for_status()
            return resp.json()["choices"][0]["message"]["content"] or ""
        except (httpx.TransportError, httpx.HTTPStatusError, KeyError, IndexError, json.JSONDecodeError) as exc:
            last = exc
            log.warning("LLM request failed (attempt %d): %s", attempt + 1, exc)
            if attempt < endpoint.max_transport_retries:
                sleep(min(2.0**attempt, 30.0))
    raise LLMTransportError(f"endpoint {endpoint.base_url} failed after retries: {last}")


def llm_step(
    ctx: TickContext,
    endpoint: EndpointConfig,
    rng: random.Random,
    client: Optional[httpx.Client] = None,
    sleep: Callable[[float], None] = time.sleep,
) -> TickOutput:
    own = client is None
    client = client or httpx.Client()
    try:
        for attempt in range(endpoint.parse_attempts):
            body = build_request(ctx, endpoint, rng)
            if endpoint.debug:
                log.debug("LLM request: %s", json.dumps(body))
            text = _post_with_retries(client, endpoint, body, sleep)
            try:
                return parse_completion(text, ctx)
            except ParseError as exc:
                log.info("unparseable completion for %s at tick %d (attempt %d): %s",
                         ctx.agent.name, ctx.tick, attempt + 1, exc)
        return fallback_output()
    finally:
        if own:
            client.close()
