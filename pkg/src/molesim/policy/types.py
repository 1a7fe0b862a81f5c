from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass, field
from importlib import resources
from typing import Mapping, Optional, Sequence

import yaml

from molesim.org import AgentIdentity, Channel


class Intent(str, enum.Enum):
    DEEP_WORK = "DEEP_WORK"
    SOCIALIZE = "SOCIALIZE"
    COLLABORATE = "COLLABORATE"
    TRIAGE = "TRIAGE"
    ANALYZE = "ANALYZE"
    MITIGATE = "MITIGATE"
    ESCALATE = "ESCALATE"


class AdversaryType(str, enum.Enum):
    Naive = "Naive"
    Adaptive = "Adaptive"


@dataclass(frozen=True)
class MoleDirective:
    adversary_type: AdversaryType
    goal_text: str
    opsec_text: Optional[str] = None

    def __post_init__(self) -> None:
        if (self.opsec_text is not None) != (self.adversary_type is AdversaryType.Adaptive):
            raise ValueError("opsec_text must be present exactly for adaptive moles")


def bundled_directive(adversary_type: AdversaryType) -> MoleDirective:
    texts = yaml.safe_load(resources.files("molesim.data").joinpath("directives.yaml").read_text())
    opsec = texts["opsec"] if adversary_type is AdversaryType.Adaptive else None
    return MoleDirective(adversary_type, texts["goal"], opsec)


@dataclass(frozen=True)
class Post:
    """A message as seen by readers of a channel."""

    tick: int
    author_id: int
    author: str
    channel: Channel
    text: str
    flagworthy: bool = False


@dataclass(frozen=True)
class TickContext:
    tick: int
    agent: AgentIdentity
    mood: float
    trust: float
    task_progress: float
    visible_history: Mapping[Channel, Sequence[Post]]
    channels: Sequence[Channel]  # visible channels, in enum order
    roster_names: Mapping[str, int]
    fired: frozenset[int] = frozenset()
    directive: Optional[MoleDirective] = None
    defcon_active: bool = False


@dataclass(frozen=True)
class TickOutput:
    message: str
    channel: Channel
    stress: int
    intent: Intent
    suspect: Optional[str] = None
    flagworthy: bool = False
    parse_fallback: bool = False

    def __post_init__(self) -> None:
        if not 1 <= self.stress <= 10:
            raise ValueError(f"stress {self.stress} outside 1..10")


DEFAULT_INTENT_WEIGHTS = {
    Intent.DEEP_WORK: 0.30,
    Intent.SOCIALIZE: 0.20,
    Intent.COLLABORATE: 0.20,
    Intent.TRIAGE: 0.10,
    Intent.ANALYZE: 0.10,
    Intent.MITIGATE: 0.05,
    Intent.ESCALATE: 0.05,
}


@dataclass(frozen=True)
class ScriptedPolicyParams:
    base_flag_rate: float = 0.04
    mole_naive_flagworthy_rate: float = 0.08
    mole_adaptive_flagworthy_rate: float = 0.01
    elicitation_gain: float = 0.5
    intent_weights: Mapping[Intent, float] = field(default_factory=lambda: dict(DEFAULT_INTENT_WEIGHTS))
    mean_message_length: float = 120.0
    max_message_length: int = 2000

    def __post_init__(self) -> None:
        for name in ("base_flag_rate", "mole_naive_flagworthy_rate", "mole_adaptive_flagworthy_rate", "elicitation_gain"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} is not a probability")
        if any(w < 0 for w in self.intent_weights.values()) or sum(self.intent_weights.values()) <= 0:
            raise ValueError("intent weights must be non-negative and not all zero")
        if self.mean_message_length < 1 or self.max_message_length < 1:
            raise ValueError("message length parameters must be >= 1")

    def flagworthy_rate(self, directive: Optional[MoleDirective]) -> float:
        if directive is None:
            return self.base_flag_rate
        if directive.adversary_type is AdversaryType.Adaptive:
            return self.mole_adaptive_flagworthy_rate
        return self.mole_naive_flagworthy_rate

    def describe(self) -> dict:
        d = dataclasses.asdict(self)
        d["intent_weights"] = {k.value: v for k, v in self.intent_weights.items()}
        return d
