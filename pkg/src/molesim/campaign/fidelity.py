"""Behavioural fidelity audit: sample mole turns, collect ratings, filter runs."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from molesim import stats
from molesim.engine import Condition
from molesim.rng import substream

AUDIT_TURNS = 5
RATINGS_COLUMNS = ["run_id", "tick", "rating"]
AUDITED = (Condition.C3_CascadeAdaptive, Condition.C4_BlindAdaptive)


class AuditError(ValueError):
    pass


@dataclass(frozen=True)
class FidelityAudit:
    run_id: str
    condition: Condition
    seed: int
    sampled_ticks: tuple[int, ...]
    ratings: Optional[tuple[int, ...]] = None

    @property
    def complete(self) -> bool:
        return self.ratings is not None and len(self.ratings) == len(self.sampled_ticks)

    @property
    def mean(self) -> Optional[float]:
        return float(np.mean(self.ratings)) if self.complete else None

    def passed(self, cutoff: float = 3.5) -> Optional[bool]:
        m = self.mean
        return None if m is None else m >= cutoff


def audit_sample(
    run_id: str,
    condition: Condition,
    seed: int,
    mole_turns: Iterable[int],
    window: tuple[int, int] = (30, 60),
    k: int = AUDIT_TURNS,
) -> FidelityAudit:
    """Draw ``k`` distinct pre-announce mole turns, deterministically per seed."""
    if condition not in AUDITED:
        raise AuditError(f"only adaptive runs are audited, got {condition.code}")
    lo, hi = window
    turns = sorted({t for t in mole_turns if lo <= t <= hi})
    if len(turns) < k:
        raise AuditError(f"{run_id}: mole has {len(turns)} pre-announce turns, need {k}")
    picked = substream(seed, "audit").sample(turns, k)
    return FidelityAudit(run_id, condition, seed, tuple(sorted(picked)))


def write_rating_slots(path: str | Path, audits: Sequence[FidelityAudit]) -> int:
    """Write one blank (or pre-filled) row per sampled turn; returns the slot count."""
    n = 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RATINGS_COLUMNS)
        for a in sorted(audits, key=lambda a: a.run_id):
            for i, t in enumerate(a.sampled_ticks):
                w.writerow([a.run_id, t, a.ratings[i] if a.ratings else ""])
                n += 1
    return n


def read_ratings(path: str | Path) -> dict[tuple[str, int], Optional[int]]:
    out: dict[tuple[str, int], Optional[int]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != RATINGS_COLUMNS:
            raise ValueError(f"ratings columns must be {RATINGS_COLUMNS}, got {reader.fieldnames}")
        for row in reader:
            raw = (row["rating"] or "").strip()
            rating = int(raw) if raw else None
            if rating is not None and not 1 <= rating <= 5:
                raise ValueError(f"rating {rating} for {row['run_id']}@{row['tick']} outside 1..5")
            out[(row["run_id"], int(row["tick"]))] = rating
    return out


def apply_ratings(audits: Iterable[FidelityAudit], ratings: Mapping[tuple[str, int], Optional[int]]) -> list[FidelityAudit]:
    out = []
    for a in audits:
        got = [ratings.get((a.run_id, t)) for t in a.sampled_ticks]
        out.append(replace(a, ratings=None if any(r is None for r in got) else tuple(got)))
    return out


@dataclass(frozen=True)
class FidelitySummary:
    complete: bool
    pass_runs: frozenset[str]
    pass_seeds: Mapping[Condition, frozenset[int]]
    counts: Mapping[Condition, tuple[int, int]]  # (pass, fail)
    spearman: Mapping[Condition, float] = field(default_factory=dict)
    missing: tuple[str, ...] = ()

    def seeds_for(self, condition: Condition) -> Optional[set[int]]:
        if not self.complete:
            return None
        return set(self.pass_seeds.get(condition, frozenset()))


def fidelity_filter(
    audits: Sequence[FidelityAudit],
    detection_ranks: Optional[Mapping[str, int]] = None,
    cutoff: float = 3.5,
) -> FidelitySummary:
    """PASS iff mean rating >= cutoff; incomplete when any slot is unrated."""
    missing = tuple(sorted(a.run_id for a in audits if not a.complete))
    pass_runs = set()
    pass_seeds: dict[Condition, set[int]] = {c: set() for c in AUDITED}
    counts = {}
    spearman = {}
    for cond in AUDITED:
        mine = [a for a in audits if a.condition is cond and a.complete]
        ok = [a for a in mine if a.passed(cutoff)]
        pass_runs.update(a.run_id for a in ok)
        pass_seeds[cond].update(a.seed for a in ok)
        counts[cond] = (len(ok), len(mine) - len(ok))
        if detection_ranks:
            pairs = [(a.mean, detection_ranks[a.run_id]) for a in mine if a.run_id in detection_ranks]
            if len(pairs) >= 2:
                x, y = zip(*pairs)
                spearman[cond] = stats.spearman_rho(x, y)
    return FidelitySummary(
        complete=not missing,
        pass_runs=frozenset(pass_runs),
        pass_seeds={c: frozenset(s) for c, s in pass_seeds.items()},
        counts=counts,
        spearman=spearman,
        missing=missing,
    )
