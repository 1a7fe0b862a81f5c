"""Pre-registered hypothesis evaluators.

Each hypothesis is split into a statistics step (``*_stats``) and a purely
mechanical decision step (``decide_*``) so that reported statistics can be
fed straight into the decision rules.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from molesim import stats
from molesim.engine import Condition
from molesim.telemetry import Validity


class Verdict(str, enum.Enum):
    SUPPORTED = "SUPPORTED"
    NOT_SUPPORTED = "NOT_SUPPORTED"
    FAIL = "FAIL"
    PENDING = "PENDING"


class Hypothesis(str, enum.Enum):
    H1 = "H1"
    H2a = "H2a"
    H2b = "H2b"
    H3 = "H3"
    H4 = "H4"
    H5 = "H5"


class Population(str, enum.Enum):
    Primary = "Primary"
    Sensitivity = "Sensitivity"
    NA = "NA"


# Pre-registration labels vs the labels the original analysis code used.
LABEL_TRANSLATION = (
    {"prereg": "H2a", "pairing": "C4 - C2", "defender": "blind", "analysis_code": "H2b"},
    {"prereg": "H2b", "pairing": "C3 - C1", "defender": "cascade", "analysis_code": "H2a"},
)

H2_PAIRINGS = {
    Hypothesis.H2a: (Condition.C4_BlindAdaptive, Condition.C2_BlindNaive),
    Hypothesis.H2b: (Condition.C3_CascadeAdaptive, Condition.C1_CascadeNaive),
}


@dataclass(frozen=True)
class Thresholds:
    alpha: float = 0.05
    equivalence_bound: float = 5.0  # ranks, on a 100-agent roster
    negligible_delta: float = stats.DELTA_NEGLIGIBLE
    h3_delta: float = stats.DELTA_SMALL
    epsilon: float = 0.10
    fidelity_cutoff: float = 3.5
    reference_roster: int = 100
    bootstrap_B: int = 1000
    bootstrap_seed: int = 42

    def scaled_bound(self, roster_size: int) -> float:
        # rank bounds scale with the number of ranks available
        return self.equivalence_bound * roster_size / self.reference_roster


@dataclass(frozen=True)
class Criterion:
    name: str
    threshold: float
    observed: Optional[float]
    passed: bool


@dataclass(frozen=True)
class HypothesisVerdict:
    hypothesis: Hypothesis
    population: Population
    criteria: tuple[Criterion, ...]
    verdict: Verdict
    direction_inverted: bool = False
    estimates: Mapping[str, object] = field(default_factory=dict)
    note: str = ""

    @property
    def failing(self) -> list[str]:
        return [c.name for c in self.criteria if not c.passed]


def _pending(h: Hypothesis, pop: Population, note: str) -> HypothesisVerdict:
    return HypothesisVerdict(h, pop, (), Verdict.PENDING, note=note)


def _from_criteria(h, pop, criteria, estimates, fail_label=Verdict.NOT_SUPPORTED, **kw) -> HypothesisVerdict:
    ok = all(c.passed for c in criteria)
    return HypothesisVerdict(h, pop, tuple(criteria), Verdict.SUPPORTED if ok else fail_label, estimates=estimates, **kw)


def _ci(est: Optional[stats.EffectEstimate]) -> Optional[list[float]]:
    return None if est is None else [est.ci_low, est.ci_high]


# --- per-run inputs -----------------------------------------------------------


@dataclass(frozen=True)
class RunSummary:
    """What the evaluators need from one run, independent of storage."""

    run_id: str
    condition: Condition
    seed: int
    validity: Validity
    last_tick: int
    roster_size: int
    mole_rank: Optional[int] = None  # pre-announce UEBA rank of the mole
    mole_in_degree: Optional[int] = None  # at the snapshot tick
    nonmole_id: Optional[int] = None
    nonmole_in_degree: Optional[int] = None
    channel_counts: Mapping[str, int] = field(default_factory=dict)


def analysable(run: RunSummary, snapshot_tick: int = 60) -> bool:
    """DEV3 runs never count; truncated runs count if the pre-announce window survived."""
    return run.validity is not Validity.INVALID_DEV3 and run.last_tick >= snapshot_tick


# --- H1 -------------------------------------------------------------------------


@dataclass(frozen=True)
class H1Stats:
    n: int
    median: float
    ci_low: Optional[float]
    ci_high: Optional[float]
    delta: float
    p_value: float


def h1_stats(ranks: Sequence[float], roster_size: int, th: Thresholds = Thresholds()) -> H1Stats:
    ranks = np.asarray(ranks, dtype=float)
    reference = np.arange(1, roster_size + 1)
    est = bca_or_none(ranks, np.median, th)
    return H1Stats(
        n=len(ranks),
        median=float(np.median(ranks)),
        ci_low=est.ci_low if est else None,
        ci_high=est.ci_high if est else None,
        delta=stats.cliffs_delta(ranks, reference),
        p_value=stats.mann_whitney_u(ranks, reference).p_value,
    )


def decide_h1(s: H1Stats, th: Thresholds = Thresholds()) -> HypothesisVerdict:
    if s.n < 2:
        return _pending(Hypothesis.H1, Population.NA, f"needs >= 2 eligible C2 runs, have {s.n}")
    criteria = [
        Criterion("p > alpha", th.alpha, s.p_value, s.p_value > th.alpha),
        Criterion("|delta| < negligible", th.negligible_delta, abs(s.delta), abs(s.delta) < th.negligible_delta),
    ]
    est = {"n": s.n, "median_rank": s.median, "ci": [s.ci_low, s.ci_high], "delta": s.delta, "p_value": s.p_value}
    return _from_criteria(Hypothesis.H1, Population.NA, criteria, est)


def evaluate_h1(c2_runs: Iterable[RunSummary], th: Thresholds = Thresholds()) -> HypothesisVerdict:
    runs = [r for r in c2_runs if analysable(r) and r.mole_rank is not None]
    if len(runs) < 2:
        return decide_h1(H1Stats(len(runs), math.nan, None, None, math.nan, math.nan), th)
    roster = runs[0].roster_size
    return decide_h1(h1_stats([r.mole_rank for r in runs], roster, th), th)


# --- H2 --------------------------------------------------------------------------


@dataclass(frozen=True)
class H2Stats:
    n_pairs: int
    mean_diff: float
    ci_low: Optional[float]
    ci_high: Optional[float]
    p_value: float
    delta: float
    bound: float


def h2_stats(diffs: Sequence[float], bound: float, th: Thresholds = Thresholds()) -> H2Stats:
    d = np.asarray(diffs, dtype=float)
    est = bca_or_none(d, np.mean, th)
    return H2Stats(
        n_pairs=len(d),
        mean_diff=float(d.mean()),
        ci_low=est.ci_low if est else None,
        ci_high=est.ci_high if est else None,
        p_value=stats.wilcoxon_signed_rank(d).p_value,
        # dominance of the differences over their own reflection about zero
        delta=stats.cliffs_delta(d, -d),
        bound=bound,
    )


def decide_h2(s: H2Stats, hypothesis: Hypothesis, population: Population, th: Thresholds = Thresholds()) -> HypothesisVerdict:
    if s.n_pairs == 0:
        return _pending(hypothesis, population, "no surviving pairs")
    # rounding guards the inclusive boundary against float noise in the mean
    within = round(abs(s.mean_diff), 9) <= s.bound
    criteria = [
        Criterion("|mean diff| <= bound", s.bound, s.mean_diff, within),
        Criterion("p > alpha", th.alpha, s.p_value, s.p_value > th.alpha),
        Criterion("|delta| < negligible", th.negligible_delta, abs(s.delta), abs(s.delta) < th.negligible_delta),
    ]
    est = {
        "n_pairs": s.n_pairs,
        "mean_diff": s.mean_diff,
        "ci": [s.ci_low, s.ci_high],
        "p_value": s.p_value,
        "delta": s.delta,
        "bound": s.bound,
    }
    return _from_criteria(hypothesis, population, criteria, est)


def paired_rank_diffs(
    treatment: Iterable[RunSummary], control: Iterable[RunSummary], seeds: Optional[set[int]] = None
) -> dict[int, int]:
    t = {r.seed: r for r in treatment if analysable(r) and r.mole_rank is not None}
    c = {r.seed: r for r in control if analysable(r) and r.mole_rank is not None}
    common = sorted(set(t) & set(c))
    if seeds is not None:
        common = [s for s in common if s in seeds]
    return {s: t[s].mole_rank - c[s].mole_rank for s in common}


def evaluate_h2(
    runs: Iterable[RunSummary],
    hypothesis: Hypothesis,
    population: Population,
    pass_seeds: Optional[set[int]] = None,
    th: Thresholds = Thresholds(),
) -> HypothesisVerdict:
    """``pass_seeds`` are the fidelity-PASS seeds of the adaptive condition
    (required for the Primary population; ``None`` there means ratings are
    incomplete)."""
    treat_c, ctrl_c = H2_PAIRINGS[hypothesis]
    runs = list(runs)
    if population is Population.Primary and pass_seeds is None:
        return _pending(hypothesis, population, "fidelity ratings incomplete")
    diffs = paired_rank_diffs(
        [r for r in runs if r.condition is treat_c],
        [r for r in runs if r.condition is ctrl_c],
        pass_seeds if population is Population.Primary else None,
    )
    if not diffs:
        return _pending(hypothesis, population, "no surviving pairs")
    roster = next(r.roster_size for r in runs if r.condition is treat_c)
    v = decide_h2(h2_stats(list(diffs.values()), th.scaled_bound(roster), th), hypothesis, population, th)
    return HypothesisVerdict(
        v.hypothesis, v.population, v.criteria, v.verdict, v.direction_inverted,
        {**v.estimates, "seeds": sorted(diffs)}, v.note,
    )


# --- H3 ---------------------------------------------------------------------------


@dataclass(frozen=True)
class H3Stats:
    n_mole: int
    n_nonmole: int
    u: float
    p_value: float
    delta: float
    ci_low: Optional[float]
    ci_high: Optional[float]
    median_mole: float = math.nan
    median_nonmole: float = math.nan


def h3_stats(mole: Sequence[float], nonmole: Sequence[float], th: Thresholds = Thresholds()) -> H3Stats:
    mole = np.asarray(mole, dtype=float)
    nonmole = np.asarray(nonmole, dtype=float)
    mw = stats.mann_whitney_u(mole, nonmole)
    est = None
    if len(mole) >= 2 and len(nonmole) >= 2:
        est = stats.bca_interval((mole, nonmole), stats.cliffs_delta, th.bootstrap_B, th.bootstrap_seed)
    return H3Stats(
        n_mole=len(mole),
        n_nonmole=len(nonmole),
        u=mw.statistic,
        p_value=mw.p_value,
        delta=stats.cliffs_delta(mole, nonmole),
        ci_low=est.ci_low if est else None,
        ci_high=est.ci_high if est else None,
        median_mole=float(np.median(mole)),
        median_nonmole=float(np.median(nonmole)),
    )


def decide_h3(s: H3Stats, th: Thresholds = Thresholds()) -> HypothesisVerdict:
    if s.n_mole == 0 or s.n_nonmole == 0:
        return _pending(Hypothesis.H3, Population.NA, "empty in-degree pool")
    sig = s.p_value < th.alpha
    criteria = [
        Criterion("p < alpha", th.alpha, s.p_value, sig),
        Criterion("delta >= floor", th.h3_delta, s.delta, s.delta >= th.h3_delta),
    ]
    est = {
        "n_mole": s.n_mole,
        "n_nonmole": s.n_nonmole,
        "U": s.u,
        "p_value": s.p_value,
        "delta": s.delta,
        "ci": [s.ci_low, s.ci_high],
        "median_mole": s.median_mole,
        "median_nonmole": s.median_nonmole,
    }
    inverted = sig and s.delta <= -th.h3_delta
    return _from_criteria(Hypothesis.H3, Population.NA, criteria, est, direction_inverted=inverted)


def evaluate_h3(
    c2_runs: Iterable[RunSummary],
    c4_runs: Iterable[RunSummary],
    c5_runs: Iterable[RunSummary],
    th: Thresholds = Thresholds(),
) -> HypothesisVerdict:
    mole = [r.mole_in_degree for r in [*c2_runs, *c4_runs] if analysable(r) and r.mole_in_degree is not None]
    non = [r.nonmole_in_degree for r in c5_runs if analysable(r) and r.nonmole_in_degree is not None]
    if not mole or not non:
        return _pending(Hypothesis.H3, Population.NA, "empty in-degree pool")
    return decide_h3(h3_stats(mole, non, th), th)


# --- H4 ---------------------------------------------------------------------------


@dataclass(frozen=True)
class H4Stats:
    gini_hbee: float
    gini_enron: float
    saturation: Optional[float] = None  # share of pairs at the maximum exposure
    gini_hbee_positive: Optional[float] = None
    n_pairs: Optional[int] = None
    n_nodes: Optional[int] = None


def h4_stats(exposures: Sequence[float], enron_degrees: Sequence[float]) -> H4Stats:
    e = np.asarray(exposures, dtype=float)
    if e.size == 0 or len(enron_degrees) == 0:
        raise ValueError("H4 needs non-empty exposures and Enron degrees")
    pos = e[e > 0]
    return H4Stats(
        gini_hbee=stats.gini(e),
        gini_enron=stats.gini(enron_degrees),
        saturation=float(np.mean(e == e.max())),
        gini_hbee_positive=stats.gini(pos) if pos.size else None,
        n_pairs=int(e.size),
        n_nodes=len(enron_degrees),
    )


def decide_h4(s: H4Stats, th: Thresholds = Thresholds()) -> HypothesisVerdict:
    gap = abs(s.gini_hbee - s.gini_enron)
    ok = round(gap, 9) <= th.epsilon
    criteria = [Criterion("|delta Gini| <= epsilon", th.epsilon, gap, ok)]
    est = {
        "gini_hbee": s.gini_hbee,
        "gini_enron": s.gini_enron,
        "abs_delta": gap,
        "gini_hbee_positive_pairs": s.gini_hbee_positive,
        "n_pairs": s.n_pairs,
        "n_nodes": s.n_nodes,
    }
    if not ok:
        est["saturation_fraction"] = s.saturation
    return _from_criteria(Hypothesis.H4, Population.NA, criteria, est, fail_label=Verdict.FAIL)


def evaluate_h4(exposures: Optional[Sequence[float]], enron_degrees: Optional[Sequence[float]], th: Thresholds = Thresholds()) -> HypothesisVerdict:
    if exposures is None or len(exposures) == 0:
        return _pending(Hypothesis.H4, Population.NA, "no C5 exposures")
    if enron_degrees is None or len(enron_degrees) == 0:
        return _pending(Hypothesis.H4, Population.NA, "Enron reference not supplied")
    return decide_h4(h4_stats(exposures, enron_degrees), th)


# --- H5 ---------------------------------------------------------------------------


def evaluate_h5(
    primary_h1: HypothesisVerdict,
    replication_runs: Optional[Iterable[RunSummary]] = None,
    th: Thresholds = Thresholds(),
) -> HypothesisVerdict:
    """The H1 verdict replicates under a second backbone."""
    if replication_runs is None:
        return _pending(Hypothesis.H5, Population.NA, "no replication manifest supplied")
    rep = evaluate_h1(replication_runs, th)
    if rep.verdict is Verdict.PENDING or primary_h1.verdict is Verdict.PENDING:
        return _pending(Hypothesis.H5, Population.NA, "replication or primary H1 pending")
    same = rep.verdict is primary_h1.verdict
    crit = Criterion("replication H1 verdict == primary H1 verdict", 1.0, float(same), same)
    return _from_criteria(Hypothesis.H5, Population.NA, [crit], {"replication_h1": rep.verdict.value, **rep.estimates})


# --- helpers ------------------------------------------------------------------------


def bca_or_none(sample, fn, th: Thresholds) -> Optional[stats.EffectEstimate]:
    if len(sample) < 2:
        return None
    return stats.bca_interval(np.asarray(sample, dtype=float), fn, th.bootstrap_B, th.bootstrap_seed)
