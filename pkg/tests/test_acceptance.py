"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

The lines are also collected into an "acceptance criteria" section of the
pytest terminal summary.
"""

from __future__ import annotations

import hashlib
import json
import time
from pathlib import Path

import numpy as np
import pytest

from molesim import stats
from molesim.campaign import (
    FidelityAudit,
    Hypothesis,
    Population,
    RunSummary,
    Thresholds,
    Verdict,
    apply_ratings,
    audit_sample,
    evaluate_h1,
    evaluate_h2,
    evaluate_h3,
    fidelity_filter,
    ingest_edge_list,
    read_ratings,
    summarize,
    verdicts_from_statistics,
    write_rating_slots,
)
from molesim.campaign.metrics import find_enron
from molesim.engine import Condition, RunConfig, run
from molesim.org import bundled_scenario, default_roster
from molesim.telemetry import ManifestRow, Validity, classify_validity, serialize_events

import oracles

FIXTURES = Path(__file__).parent / "fixtures"


# 1 ---------------------------------------------------------------------------


def test_criterion_1_statistics_oracle_suite(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(20240501)
    mismatches = []
    for k in range(500):
        n1, n2 = rng.integers(1, 9, size=2)
        # small integer support forces plenty of ties
        x = rng.integers(0, 6, n1).astype(float)
        y = rng.integers(0, 6, n2).astype(float)
        if abs(stats.cliffs_delta(x, y) - oracles.cliffs_delta(x, y)) > 1e-12:
            mismatches.append(("cliffs", k))
        mw = stats.mann_whitney_u(x, y, exact=True)
        if abs(mw.statistic - oracles.mwu_u(x, y)) > 1e-12 or mw.p_value != oracles.mwu_exact_p(x, y):
            mismatches.append(("mwu", k))
        d = rng.integers(-4, 5, n1).astype(float)
        w = stats.wilcoxon_signed_rank(d, exact=True)
        ow, op = oracles.wilcoxon_exact(d)
        if abs(w.statistic - ow) > 1e-12 or w.p_value != op:
            mismatches.append(("wilcoxon", k))
        v = rng.integers(0, 10, n1 + n2).astype(float)
        if v.sum() > 0 and abs(stats.gini(v) - oracles.gini(v)) > 1e-12:
            mismatches.append(("gini", k))
        if n1 >= 2:
            a, b = rng.integers(0, 5, n1).astype(float), rng.integers(0, 5, n1).astype(float)
            mine, ref = stats.spearman_rho(a, b), oracles.spearman(a, b)
            if not ((np.isnan(mine) and np.isnan(ref)) or abs(mine - ref) <= 1e-12):
                mismatches.append(("spearman", k))
    elapsed = time.perf_counter() - t0
    acceptance(1, "statistics match brute-force oracles on 500 instances",
               not mismatches and elapsed < 60, f"{len(mismatches)} mismatches, {elapsed:.1f}s")


# 2 ---------------------------------------------------------------------------


def test_criterion_2_enron_calibration(acceptance):
    path = find_enron(search=[Path("data"), Path(__file__).parents[1] / "data"])
    if path is None or not path.exists():
        acceptance(2, "Enron out-degree Gini 0.730 +/- 0.01 and bottom-80% share 22.5% +/- 1%", False,
                   "SNAP email-Enron edge list not found; set MOLESIM_ENRON_PATH or place data/email-Enron.txt(.gz)")
    t0 = time.perf_counter()
    deg = ingest_edge_list(path)
    g = stats.gini(deg)
    share = stats.lorenz_share(deg, 0.8)
    elapsed = time.perf_counter() - t0
    ok = len(deg) == 36692 and abs(g - 0.730) <= 0.01 and abs(share - 0.225) <= 0.01 and elapsed < 30
    acceptance(2, "Enron out-degree Gini 0.730 +/- 0.01 and bottom-80% share 22.5% +/- 1%", ok,
               f"nodes={len(deg)} gini={g:.4f} share={share:.4f} {elapsed:.1f}s")


# 3 ---------------------------------------------------------------------------

EXPECTED_TABLE = [
    ("H1", "NA", "SUPPORTED", False),
    ("H2a", "Primary", "SUPPORTED", False),
    ("H2a", "Sensitivity", "SUPPORTED", False),
    ("H2b", "Primary", "NOT_SUPPORTED", False),
    ("H2b", "Sensitivity", "SUPPORTED", False),
    ("H3", "NA", "NOT_SUPPORTED", True),
    ("H4", "NA", "FAIL", False),
    ("H5", "NA", "PENDING", False),
]


def test_criterion_3_verdict_golden_table(acceptance):
    doc = json.loads((FIXTURES / "reported_statistics.json").read_text())
    verdicts = verdicts_from_statistics(doc)
    table = [(v.hypothesis.value, v.population.value, v.verdict.value, v.direction_inverted) for v in verdicts]
    h1, h2a_p, h2a_s, h2b_p, h2b_s, h3, h4, _ = verdicts
    echoed = (
        (h1.estimates["median_rank"], h1.estimates["ci"]) == (51.0, [25.0, 66.0])
        and [v.estimates["mean_diff"] for v in (h2a_p, h2a_s, h2b_p, h2b_s)] == [0.667, -1.16, -6.0, -4.6]
        and (h3.estimates["delta"], h3.estimates["ci"]) == (-0.694, [-0.855, -0.519])
    )
    ok = (
        table == EXPECTED_TABLE
        and h2b_p.failing == ["|mean diff| <= bound"]
        and abs(h4.estimates["abs_delta"] - 0.517) < 1e-9
        and echoed
    )
    acceptance(3, "reported statistics reproduce the verdict table", ok, "; ".join(f"{h}/{p}={v}" for h, p, v, _ in table))


# 4 ---------------------------------------------------------------------------


def test_criterion_4_determinism(acceptance):
    t0 = time.perf_counter()
    cfg = RunConfig(Condition.C3_CascadeAdaptive, 7, bundled_scenario("default"), default_roster(20))
    a = hashlib.sha256(serialize_events(run(cfg).events)).hexdigest()
    b = hashlib.sha256(serialize_events(run(cfg).events)).hexdigest()
    elapsed = time.perf_counter() - t0
    acceptance(4, "same RunConfig twice gives byte-identical telemetry", a == b and elapsed < 10,
               f"sha256 {a[:12]}.. vs {b[:12]}.., {elapsed:.1f}s")


# 5 ---------------------------------------------------------------------------


def test_criterion_5_inversion_property(acceptance):
    t0 = time.perf_counter()
    roster = default_roster(20)
    sc = bundled_scenario("default")
    th = Thresholds()
    summaries = [summarize(run(RunConfig(c, s, sc, roster))) for c in Condition for s in range(10)]
    by = {c: [r for r in summaries if r.condition is c] for c in Condition}
    h3 = evaluate_h3(by[Condition.C2_BlindNaive], by[Condition.C4_BlindAdaptive], by[Condition.C5_BlindNoMole], th)
    h2 = [evaluate_h2(summaries, h, Population.Sensitivity, None, th) for h in (Hypothesis.H2a, Hypothesis.H2b)]
    bound = th.scaled_bound(20)
    elapsed = time.perf_counter() - t0
    delta, p = h3.estimates["delta"], h3.estimates["p_value"]
    means = [v.estimates["mean_diff"] for v in h2]
    ok = delta < 0 and p < 0.05 and all(abs(m) <= bound for m in means) and elapsed < 120
    acceptance(5, "scripted desk campaign shows in-degree inversion with rank equivalence", ok,
               f"H3 delta={delta:+.3f} p={p:.4f}; H2a/H2b mean diff={means[0]:+.2f}/{means[1]:+.2f} "
               f"(bound +/-{bound:g}); {elapsed:.1f}s")


# 6 ---------------------------------------------------------------------------


def _summary(cond, seed, validity=Validity.VALID, last_tick=100, rank=None, roster=100):
    return RunSummary(f"{cond.code}-s{seed:03d}", cond, seed, validity, last_tick, roster, mole_rank=rank)


def test_criterion_6_validity_classification(acceptance):
    flags = [
        classify_validity(100, 9950).value,
        classify_validity(93, 9300).value,
        classify_validity(100, 9950, mole_fired_tick=5).value,
    ]
    row = ManifestRow("C2-s018", "C2_BlindNaive", 18, "ALEKSANDER", "x", "", 100, 9920, 21, 100, 100)
    rng = np.random.default_rng(6)
    c2, c4 = [], []
    for s in range(20):
        if s == 18:
            v, last = Validity.INVALID_DEV3, 100
        elif s == 1:
            v, last = Validity.INVALID_SHORT, 93
        else:
            v, last = Validity.VALID, 100
        c2.append(_summary(Condition.C2_BlindNaive, s, v, last, int(rng.integers(1, 101))))
        c4.append(_summary(Condition.C4_BlindAdaptive, s, rank=int(rng.integers(1, 101))))
    h1 = evaluate_h1(c2)
    h2a = evaluate_h2(c2 + c4, Hypothesis.H2a, Population.Sensitivity)
    ok = (
        flags == [Validity.VALID, Validity.INVALID_SHORT, Validity.INVALID_DEV3]
        and row.classify().value is Validity.INVALID_DEV3
        and h1.estimates["n"] == 19
        and h2a.estimates["n_pairs"] == 19
        and 18 not in h2a.estimates["seeds"]
    )
    acceptance(6, "validity flags and DEV3 exclusion (n = 19)", ok,
               f"flags={[f.value for f in flags]} H1 n={h1.estimates['n']} H2a pairs={h2a.estimates['n_pairs']}")


# 7 ---------------------------------------------------------------------------


def test_criterion_7_bca_coverage(acceptance):
    t0 = time.perf_counter()
    covered = 0
    trials = 1000
    for t in range(trials):
        sample = np.random.default_rng(10_000 + t).normal(0.0, 1.0, 30)
        est = stats.bca_interval(sample, np.mean, B=1000, seed=42)
        covered += est.ci_low <= 0.0 <= est.ci_high
    coverage = covered / trials
    sample = np.random.default_rng(1).normal(size=30)
    same = stats.bca_interval(sample, np.mean) == stats.bca_interval(sample, np.mean)
    elapsed = time.perf_counter() - t0
    acceptance(7, "BCa mean coverage in [0.92, 0.97], deterministic", 0.92 <= coverage <= 0.97 and same and elapsed < 120,
               f"coverage={coverage:.3f} identical={same} {elapsed:.1f}s")


# 8 ---------------------------------------------------------------------------


def test_criterion_8_fidelity_pipeline(acceptance, tmp_path):
    audits = []
    for cond in (Condition.C3_CascadeAdaptive, Condition.C4_BlindAdaptive):
        for s in range(20):
            audits.append(audit_sample(f"{cond.code}-s{s:03d}", cond, s, range(1, 101)))
    slots = write_rating_slots(tmp_path / "ratings.csv", audits)

    # 8 C3 and 9 C4 runs rated to a passing mean, the rest below the cutoff
    passing = {("C3", s) for s in range(8)} | {("C4", s) for s in range(9)}
    ratings = {}
    for a in audits:
        vals = [4, 4, 4, 3, 3] if (a.condition.code, a.seed) in passing else [3, 3, 4, 3, 3]
        for t, r in zip(a.sampled_ticks, vals):
            ratings[(a.run_id, t)] = r
    _write_ratings(tmp_path / "ratings.csv", ratings)
    rated = apply_ratings(audits, read_ratings(tmp_path / "ratings.csv"))
    fid = fidelity_filter(rated)

    rng = np.random.default_rng(8)
    summaries = [
        _summary(c, s, rank=int(rng.integers(1, 101)))
        for c in (Condition.C1_CascadeNaive, Condition.C2_BlindNaive, Condition.C3_CascadeAdaptive, Condition.C4_BlindAdaptive)
        for s in range(20)
    ]
    n = {}
    for h, adaptive in ((Hypothesis.H2a, Condition.C4_BlindAdaptive), (Hypothesis.H2b, Condition.C3_CascadeAdaptive)):
        n[h, "P"] = evaluate_h2(summaries, h, Population.Primary, fid.seeds_for(adaptive)).estimates["n_pairs"]
        n[h, "S"] = evaluate_h2(summaries, h, Population.Sensitivity).estimates["n_pairs"]
    n_pass = len(fid.pass_runs)
    ok = (
        slots == 200
        and fid.complete
        and n_pass == 17
        and len(rated) - n_pass == 23
        and n[Hypothesis.H2a, "P"] == 9
        and n[Hypothesis.H2b, "P"] == 8
        and n[Hypothesis.H2a, "S"] == n[Hypothesis.H2b, "S"] == 20
    )
    acceptance(8, "200 rating slots, 17 PASS / 23 FAIL, Primary H2 shrinks", ok,
               f"slots={slots} pass={n_pass} fail={len(rated) - n_pass} "
               f"H2a n={n[Hypothesis.H2a, 'P']}/{n[Hypothesis.H2a, 'S']} H2b n={n[Hypothesis.H2b, 'P']}/{n[Hypothesis.H2b, 'S']}")


def _write_ratings(path, ratings):
    lines = ["run_id,tick,rating"] + [f"{rid},{t},{r}" for (rid, t), r in sorted(ratings.items())]
    Path(path).write_text("\n".join(lines) + "\n")
