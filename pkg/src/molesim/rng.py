"""Seed derivation for isolated, reproducible random substreams.

Every random decision in a run draws from a ``random.Random`` seeded by
hashing the run's root seed together with a domain-separation tag and any
indices (agent, tick). Streams never share state, so adding a draw in one
subsystem cannot shift the numbers seen by another, and two conditions that
share a root seed see identical innocent-agent draws.
"""

from __future__ import annotations

import hashlib
import random


def derive_seed(root: int, tag: str, *indices: int) -> int:
    # sha256, never hash(): the builtin is salted per process.
    key = ":".join([str(int(root)), tag, *(str(int(i)) for i in indices)])
    return int.from_bytes(hashlib.sha256(key.encode("utf-8")).digest()[:8], "big")


def substream(root: int, tag: str, *indices: int) -> random.Random:
    return random.Random(derive_seed(root, tag, *indices))
