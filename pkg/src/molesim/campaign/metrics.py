"""Per-run quantities the hypotheses read, plus H4's exposure and Enron inputs."""

from __future__ import annotations

import gzip
import os
from collections import Counter
from itertools import combinations
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from molesim.campaign.hypotheses import RunSummary
from molesim.engine import Condition, RunRecord
from molesim.org import AgentIdentity, WindowSpec, visible_channels
from molesim.rng import substream
from molesim.socialgraph import in_degree_snapshot, ueba_ranking
from molesim.telemetry import TickEvent


def h3_nonmole(seed: int, roster_size: int, fired: Iterable[int] = ()) -> int:
    """Per-seed innocent for the H3 baseline; redraws past fired agents."""
    fired = set(fired)
    if len(fired) >= roster_size:
        raise ValueError("every agent was fired")
    rng = substream(seed, "h3-nonmole")
    while True:
        pick = rng.randrange(roster_size)
        if pick not in fired:
            return pick


def summarize(record: RunRecord, windows: WindowSpec = WindowSpec()) -> RunSummary:
    roster = record.roster
    n = len(roster)
    names = {a.name: a.agent_id for a in roster}
    cond = record.condition
    intact = record.last_tick >= windows.snapshot_tick

    mole_rank = mole_deg = non_id = non_deg = None
    if intact:
        deg = in_degree_snapshot(record.snapshots, windows.snapshot_tick, n)
        if record.mole_id is not None:
            rk = ueba_ranking(record.events, record.snapshots, windows.pre_announce, cond.defender_mode, names, n)
            mole_rank = int(rk.ranks[record.mole_id])
            mole_deg = int(deg[record.mole_id])
        else:
            non_id = h3_nonmole(record.seed, n, record.fired)
            non_deg = int(deg[non_id])

    return RunSummary(
        run_id=record.run_id,
        condition=cond,
        seed=record.seed,
        validity=record.validity.value,
        last_tick=record.last_tick,
        roster_size=n,
        mole_rank=mole_rank,
        mole_in_degree=mole_deg,
        nonmole_id=non_id,
        nonmole_in_degree=non_deg,
        channel_counts=dict(sorted(channel_counts(record.events).items())),
    )


def channel_counts(events: Iterable[TickEvent]) -> Counter:
    return Counter(ev.channel for ev in events)


def pair_exposures(
    runs: Iterable[RunSummary], roster: Sequence[AgentIdentity]
) -> dict[tuple[int, int], int]:
    """exposure{i,j} = messages posted in channels both i and j can see, summed over runs."""
    totals: Counter = Counter()
    for r in runs:
        if r.condition is not Condition.C5_BlindNoMole:
            raise ValueError(f"pair exposures use C5 runs only, got {r.run_id}")
        totals.update(r.channel_counts)
    vis = [visible_channels(a) for a in roster]
    out = {}
    for i, j in combinations(range(len(roster)), 2):
        out[(i, j)] = sum(totals.get(c.value, 0) for c in vis[i] & vis[j])
    return out


# --- Enron reference ------------------------------------------------------------


class EnronDataMissing(FileNotFoundError):
    pass


def _open_text(path: Path):
    if path.suffix == ".gz":
        return gzip.open(path, "rt", encoding="utf-8")
    return open(path, encoding="utf-8")


def ingest_edge_list(path: str | Path) -> np.ndarray:
    """Out-degree (distinct targets) of every node in a SNAP edge list.

    Nodes are the union of sources and targets, so sink-only nodes enter
    with out-degree zero. Duplicate edges count once.
    """
    path = Path(path)
    if not path.exists():
        raise EnronDataMissing(str(path))
    edges: set[tuple[str, str]] = set()
    nodes: set[str] = set()
    with _open_text(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) < 2:
                raise ValueError(f"{path}:{lineno}: expected 'src dst', got {line!r}")
            src, dst = parts[0], parts[1]
            nodes.add(src)
            nodes.add(dst)
            edges.add((src, dst))
    out = Counter(src for src, _ in edges)
    return np.array([out.get(v, 0) for v in sorted(nodes)], dtype=float)


ENRON_ENV = "MOLESIM_ENRON_PATH"
ENRON_DEFAULT_NAMES = ("email-Enron.txt", "email-Enron.txt.gz")


def find_enron(explicit: Optional[str | Path] = None, search: Sequence[Path] = (Path("data"),)) -> Optional[Path]:
    if explicit:
        return Path(explicit)
    env = os.environ.get(ENRON_ENV)
    if env:
        return Path(env)
    for d in search:
        for name in ENRON_DEFAULT_NAMES:
            if (d / name).exists():
                return d / name
    return None
