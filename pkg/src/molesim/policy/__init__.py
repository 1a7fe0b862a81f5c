from molesim.policy.llm import EndpointConfig, LLMTransportError, llm_step, parse_completion
from molesim.policy.scripted import scripted_step
from molesim.policy.types import (
    AdversaryType,
    Intent,
    MoleDirective,
    Post,
    ScriptedPolicyParams,
    TickContext,
    TickOutput,
    bundled_directive,
)

__all__ = [
    "AdversaryType",
    "EndpointConfig",
    "Intent",
    "LLMTransportError",
    "MoleDirective",
    "Post",
    "ScriptedPolicyParams",
    "TickContext",
    "TickOutput",
    "bundled_directive",
    "llm_step",
    "parse_completion",
    "scripted_step",
]
