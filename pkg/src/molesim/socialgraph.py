"""Suspicion/rapport graph, defender update rules, and UEBA ranking."""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

FLAG_WEIGHT = 1.0


class DefenderMode(str, enum.Enum):
    Cascade = "Cascade"
    Blind = "Blind"


@dataclass(frozen=True)
class CascadeParams:
    k: int = 2
    p_cascade: float = 0.3

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not 0.0 <= self.p_cascade <= 1.0:
            raise ValueError("p_cascade must be a probability")


class SelfFlagError(ValueError):
    pass


class SuspicionGraph:
    """Directed suspicion weights plus undirected rapport over ``n`` agents.

    Independent and cascade-adopted suspicion are stored separately so the
    blind view of a cascade run can still be recovered.
    """

    def __init__(self, n: int):
        self.n = n
        self.independent = np.zeros((n, n))
        self.cascade = np.zeros((n, n))
        self.rapport: dict[tuple[int, int], float] = {}

    @property
    def suspicion(self) -> np.ndarray:
        return self.independent + self.cascade

    def copy(self) -> "SuspicionGraph":
        g = SuspicionGraph(self.n)
        g.independent = self.independent.copy()
        g.cascade = self.cascade.copy()
        g.rapport = dict(self.rapport)
        return g

    def _check(self, a: int, b: int) -> None:
        if not (0 <= a < self.n and 0 <= b < self.n):
            raise IndexError(f"agent ids ({a}, {b}) outside roster of {self.n}")

    def apply_flag(self, observer: int, target: int, weight_delta: float = FLAG_WEIGHT, cascade: bool = False) -> None:
        self._check(observer, target)
        if observer == target:
            raise SelfFlagError(f"agent {observer} cannot flag itself")
        if weight_delta < 0:
            raise ValueError("flag weights are non-negative")
        (self.cascade if cascade else self.independent)[observer, target] += weight_delta

    def add_rapport(self, a: int, b: int, delta: float) -> None:
        self._check(a, b)
        if a == b:
            return
        key = (min(a, b), max(a, b))
        self.rapport[key] = self.rapport.get(key, 0.0) + delta

    def weight(self, observer: int, target: int) -> float:
        return float(self.independent[observer, target] + self.cascade[observer, target])

    def edges(self) -> list[tuple[int, int, float]]:
        s = self.suspicion
        obs, tgt = np.nonzero(s > 0)
        return [(int(o), int(t), float(s[o, t])) for o, t in zip(obs, tgt)]

    def in_degree(self) -> np.ndarray:
        return (self.suspicion > 0).sum(axis=0)


def cascade_update(
    graph: SuspicionGraph,
    observer: int,
    visible_peers: Iterable[int],
    rng: random.Random,
    params: CascadeParams,
    live: Optional[Sequence[int]] = None,
    read_from: Optional[SuspicionGraph] = None,
) -> list[int]:
    """Socially adopt suspicion the observer's peers already hold.

    Support is counted on ``read_from`` (the start-of-tick graph when
    observers update simultaneously) and adoptions are written to ``graph``.
    Targets the observer already suspects are not re-adopted. Returns the
    adopted target ids.
    """
    src = read_from if read_from is not None else graph
    peers = sorted({p for p in visible_peers if p != observer})
    if not peers:
        return []
    support = (src.suspicion[peers] > 0).sum(axis=0)
    support[observer] = 0
    mine = src.suspicion[observer] > 0
    allowed = np.ones(graph.n, dtype=bool) if live is None else np.isin(np.arange(graph.n), list(live))
    adopted = []
    for t in np.nonzero((support >= params.k) & ~mine & allowed)[0]:
        if rng.random() < params.p_cascade:
            graph.apply_flag(observer, int(t), FLAG_WEIGHT, cascade=True)
            adopted.append(int(t))
    return adopted


# --- snapshots and rankings --------------------------------------------------

Snapshot = list[tuple[int, int, float]]  # (observer, target, weight), weight > 0


class MissingSnapshotError(KeyError):
    pass


def _snapshot(snapshots: Mapping[int, Snapshot], tick: int) -> Snapshot:
    if tick == 0:
        return []
    if tick not in snapshots:
        raise MissingSnapshotError(f"no edge snapshot at tick {tick}")
    return snapshots[tick]


def in_degree_snapshot(snapshots: Mapping[int, Snapshot], tick: int, n: int) -> np.ndarray:
    deg = np.zeros(n, dtype=int)
    seen = set()
    for o, t, w in _snapshot(snapshots, tick):
        if w > 0 and (o, t) not in seen:
            seen.add((o, t))
            deg[t] += 1
    return deg


def in_weight_snapshot(snapshots: Mapping[int, Snapshot], tick: int, n: int) -> np.ndarray:
    out = np.zeros(n)
    for _, t, w in _snapshot(snapshots, tick):
        out[t] += w
    return out


@dataclass(frozen=True)
class UebaRanking:
    window: tuple[int, int]
    scores: np.ndarray
    ranks: np.ndarray  # 1 = most suspicious


def rank_scores(scores: Sequence[float]) -> np.ndarray:
    scores = np.asarray(scores, dtype=float)
    # descending score, ascending agent_id on ties
    order = np.lexsort((np.arange(len(scores)), -scores))
    ranks = np.empty(len(scores), dtype=int)
    ranks[order] = np.arange(1, len(scores) + 1)
    return ranks


class EmptyWindowError(ValueError):
    pass


def ueba_ranking(
    events: Iterable,
    snapshots: Mapping[int, Snapshot],
    window: tuple[int, int],
    defender_mode: DefenderMode,
    names: Mapping[str, int],
    n: int,
) -> UebaRanking:
    """Score = total incoming suspicion weight accrued inside ``window``.

    Blind defenders count only the independent flags carried on the
    telemetry ``suspect`` field. Cascade defenders read the edge snapshots
    bracketing the window, which include socially adopted flags.
    """
    lo, hi = window
    if lo > hi:
        raise EmptyWindowError(f"empty window {window}")
    if defender_mode is DefenderMode.Blind:
        scores = np.zeros(n)
        for ev in events:
            if lo <= ev.tick <= hi and ev.suspect is not None:
                scores[names[ev.suspect]] += FLAG_WEIGHT
    else:
        scores = in_weight_snapshot(snapshots, hi, n) - in_weight_snapshot(snapshots, lo - 1, n)
    return UebaRanking(window, scores, rank_scores(scores))
