"""Full analysis pass, figure data, and the deterministic verdict report."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import math
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

import molesim
from molesim import stats
from molesim.campaign.fidelity import FidelityAudit, FidelitySummary, apply_ratings, fidelity_filter
from molesim.campaign.hypotheses import (
    LABEL_TRANSLATION,
    Criterion,
    H1Stats,
    H2Stats,
    H3Stats,
    H4Stats,
    Hypothesis,
    HypothesisVerdict,
    Population,
    RunSummary,
    Thresholds,
    Verdict,
    decide_h1,
    decide_h2,
    decide_h3,
    decide_h4,
    evaluate_h1,
    evaluate_h2,
    evaluate_h3,
    evaluate_h4,
    evaluate_h5,
)
from molesim.campaign.metrics import pair_exposures
from molesim.engine import Condition
from molesim.org import AgentIdentity
from molesim.telemetry import Validity

log = logging.getLogger(__name__)

REPORT_ORDER = [
    (Hypothesis.H1, Population.NA),
    (Hypothesis.H2a, Population.Primary),
    (Hypothesis.H2a, Population.Sensitivity),
    (Hypothesis.H2b, Population.Primary),
    (Hypothesis.H2b, Population.Sensitivity),
    (Hypothesis.H3, Population.NA),
    (Hypothesis.H4, Population.NA),
    (Hypothesis.H5, Population.NA),
]


def _clean(x):
    """JSON-safe copy: NaN/inf become null, numpy scalars become Python."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return None if not math.isfinite(x) else x
    if hasattr(x, "value") and isinstance(getattr(x, "value"), str):
        return x.value
    return x


def canonical_json(doc) -> str:
    return json.dumps(_clean(doc), indent=2, sort_keys=True) + "\n"


def config_hash(doc) -> str:
    return hashlib.sha256(json.dumps(_clean(doc), sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def provenance(config: Mapping, thresholds: Thresholds, overrides: Optional[Mapping] = None) -> dict:
    return {
        "code_version": molesim.__version__,
        "config_sha256": config_hash(config),
        "thresholds": dataclasses.asdict(thresholds),
        "overrides": dict(sorted((overrides or {}).items())),
    }


def verdict_doc(v: HypothesisVerdict) -> dict:
    return {
        "hypothesis": v.hypothesis.value,
        "population": v.population.value,
        "verdict": v.verdict.value,
        "direction_inverted": v.direction_inverted,
        "criteria": [
            {"name": c.name, "threshold": c.threshold, "observed": c.observed, "pass": c.passed} for c in v.criteria
        ],
        "estimates": dict(v.estimates),
        "note": v.note,
    }


def verdict_table(verdicts: Sequence[HypothesisVerdict]) -> list[tuple[str, str, str, bool]]:
    return [(v.hypothesis.value, v.population.value, v.verdict.value, v.direction_inverted) for v in verdicts]


# --- injected statistics -------------------------------------------------------------


def verdicts_from_statistics(doc: Mapping, th: Thresholds = Thresholds()) -> list[HypothesisVerdict]:
    """Decide every hypothesis from already-computed statistics.

    ``doc`` keys: ``H1``, ``H2a``/``H2b`` (each with ``Primary`` and
    ``Sensitivity``), ``H3``, ``H4``; any missing entry is PENDING. H5 is
    PENDING unless ``H5`` carries a ``replication_verdict``.
    """
    out: list[HypothesisVerdict] = []
    for h, pop in REPORT_ORDER:
        if h is Hypothesis.H1:
            s = doc.get("H1")
            out.append(decide_h1(H1Stats(**s), th) if s else HypothesisVerdict(h, pop, (), Verdict.PENDING))
        elif h in (Hypothesis.H2a, Hypothesis.H2b):
            s = doc.get(h.value, {}).get(pop.value)
            if s:
                s = {"bound": th.equivalence_bound, **s}
                out.append(decide_h2(H2Stats(**s), h, pop, th))
            else:
                out.append(HypothesisVerdict(h, pop, (), Verdict.PENDING))
        elif h is Hypothesis.H3:
            s = doc.get("H3")
            out.append(decide_h3(H3Stats(**s), th) if s else HypothesisVerdict(h, pop, (), Verdict.PENDING))
        elif h is Hypothesis.H4:
            s = doc.get("H4")
            out.append(decide_h4(H4Stats(**s), th) if s else HypothesisVerdict(h, pop, (), Verdict.PENDING))
        else:
            rep = (doc.get("H5") or {}).get("replication_verdict")
            if rep is None:
                out.append(HypothesisVerdict(h, pop, (), Verdict.PENDING, note="no replication manifest supplied"))
            else:
                same = Verdict(rep) is out[0].verdict
                crit = Criterion("replication H1 verdict == primary H1 verdict", 1.0, float(same), same)
                out.append(HypothesisVerdict(h, pop, (crit,), Verdict.SUPPORTED if same else Verdict.NOT_SUPPORTED))
    return out


# --- full analysis ---------------------------------------------------------------------


@dataclasses.dataclass
class Analysis:
    verdicts: list[HypothesisVerdict]
    fidelity: Optional[FidelitySummary]
    audits: list[FidelityAudit]
    exposures: Optional[np.ndarray]
    enron_degrees: Optional[np.ndarray]
    summaries: list[RunSummary]


def analyze(
    summaries: Sequence[RunSummary],
    roster: Sequence[AgentIdentity],
    audits: Sequence[FidelityAudit] = (),
    ratings: Optional[Mapping[tuple[str, int], Optional[int]]] = None,
    enron_degrees: Optional[Sequence[float]] = None,
    th: Thresholds = Thresholds(),
    replication: Optional[Sequence[RunSummary]] = None,
) -> Analysis:
    by = {c: [s for s in summaries if s.condition is c] for c in Condition}
    rated = apply_ratings(audits, ratings) if ratings is not None else list(audits)
    fid = None
    if ratings is not None:
        ranks = {s.run_id: s.mole_rank for s in summaries if s.mole_rank is not None}
        fid = fidelity_filter(rated, ranks, th.fidelity_cutoff)

    h1 = evaluate_h1(by[Condition.C2_BlindNaive], th)
    verdicts = [h1]
    for h, adaptive in ((Hypothesis.H2a, Condition.C4_BlindAdaptive), (Hypothesis.H2b, Condition.C3_CascadeAdaptive)):
        seeds = fid.seeds_for(adaptive) if fid is not None else None
        verdicts.append(evaluate_h2(summaries, h, Population.Primary, seeds, th))
        verdicts.append(evaluate_h2(summaries, h, Population.Sensitivity, None, th))
    verdicts.append(evaluate_h3(by[Condition.C2_BlindNaive], by[Condition.C4_BlindAdaptive], by[Condition.C5_BlindNoMole], th))

    c5 = [s for s in by[Condition.C5_BlindNoMole] if s.last_tick > 0 and s.validity is not Validity.INVALID_DEV3]
    exposures = np.array(list(pair_exposures(c5, roster).values()), dtype=float) if c5 else None
    enron = None if enron_degrees is None else np.asarray(enron_degrees, dtype=float)
    verdicts.append(evaluate_h4(exposures, enron, th))
    verdicts.append(evaluate_h5(h1, replication, th))
    return Analysis(verdicts, fid, rated, exposures, enron, list(summaries))


def validity_table(summaries: Sequence[RunSummary]) -> dict:
    out: dict = {}
    for s in summaries:
        row = out.setdefault(s.condition.code, {"VALID": 0, "INVALID_SHORT": 0, "INVALID_DEV3": 0})
        row[s.validity.value] += 1
    return dict(sorted(out.items()))


def build_report(analysis: Analysis, prov: Mapping) -> dict:
    fid = analysis.fidelity
    fid_doc = None
    if fid is not None:
        fid_doc = {
            "complete": fid.complete,
            "missing": list(fid.missing),
            "counts": {c.code: {"pass": p, "fail": f} for c, (p, f) in fid.counts.items()},
            "spearman_vs_rank": {c.code: rho for c, rho in fid.spearman.items()},
            "pass_runs": sorted(fid.pass_runs),
            "rating_slots": sum(len(a.sampled_ticks) for a in analysis.audits),
        }
    return {
        "provenance": dict(prov),
        "verdicts": [verdict_doc(v) for v in analysis.verdicts],
        "label_translation": list(LABEL_TRANSLATION),
        "validity": validity_table(analysis.summaries),
        "runs": [
            {
                "run_id": s.run_id,
                "validity": s.validity.value,
                "last_tick": s.last_tick,
                "mole_rank": s.mole_rank,
                "mole_in_degree": s.mole_in_degree,
                "nonmole_id": s.nonmole_id,
                "nonmole_in_degree": s.nonmole_in_degree,
            }
            for s in analysis.summaries
        ],
        "fidelity": fid_doc,
    }


def render_markdown(report: Mapping) -> str:
    lines = ["# Verdict report", ""]
    p = report.get("provenance", {})
    lines += [f"- code version: {p.get('code_version')}", f"- config sha256: {p.get('config_sha256')}", ""]
    lines += ["| hypothesis | population | verdict | inverted | failing criteria |", "|---|---|---|---|---|"]
    for v in report["verdicts"]:
        failing = ", ".join(c["name"] for c in v["criteria"] if not c["pass"]) or "-"
        lines.append(
            f"| {v['hypothesis']} | {v['population']} | {v['verdict']} | {'yes' if v['direction_inverted'] else 'no'} | {failing} |"
        )
    lines += ["", "## Criteria", ""]
    for v in report["verdicts"]:
        lines.append(f"### {v['hypothesis']} ({v['population']}): {v['verdict']}")
        if v.get("note"):
            lines.append(f"_{v['note']}_")
        for c in v["criteria"]:
            obs = "n/a" if c["observed"] is None else f"{c['observed']:.4g}"
            lines.append(f"- {c['name']} (threshold {c['threshold']}): observed {obs} -> {'pass' if c['pass'] else 'fail'}")
        lines.append("")
    lines += ["## H2 label translation", "", "| pre-registration | pairing | defender | analysis code |", "|---|---|---|---|"]
    for row in report.get("label_translation", []):
        lines.append(f"| {row['prereg']} | {row['pairing']} | {row['defender']} | {row['analysis_code']} |")
    if report.get("validity"):
        lines += ["", "## Run validity", "", "| condition | VALID | INVALID_SHORT | INVALID_DEV3 |", "|---|---|---|---|"]
        for code, row in report["validity"].items():
            lines.append(f"| {code} | {row['VALID']} | {row['INVALID_SHORT']} | {row['INVALID_DEV3']} |")
    fid = report.get("fidelity")
    if fid:
        lines += ["", "## Fidelity audit", "", f"- complete: {fid['complete']}", f"- rating slots: {fid['rating_slots']}"]
        for code, c in fid["counts"].items():
            rho = fid["spearman_vs_rank"].get(code)
            lines.append(f"- {code}: {c['pass']} PASS / {c['fail']} FAIL, Spearman vs rank {rho if rho is not None else 'undefined'}")
    return "\n".join(lines) + "\n"


# --- figure data ------------------------------------------------------------------------


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_figure_data(out: str | Path, analysis: Analysis, lorenz_grid: int = 101) -> list[Path]:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    summaries = analysis.summaries

    c2 = sorted(s.mole_rank for s in summaries if s.condition is Condition.C2_BlindNaive and s.mole_rank is not None
                and s.validity is not Validity.INVALID_DEV3)
    n_roster = summaries[0].roster_size if summaries else 0
    path = out / "fig1_rank_ecdf.csv"
    _write_csv(path, ["rank", "ecdf", "uniform_cdf"],
               [(r, (i + 1) / len(c2), r / n_roster) for i, r in enumerate(c2)])
    written.append(path)

    path = out / "fig2_indegree_strip.csv"
    rows = [("mole", s.run_id, s.mole_in_degree) for s in summaries
            if s.condition in (Condition.C2_BlindNaive, Condition.C4_BlindAdaptive) and s.mole_in_degree is not None]
    rows += [("nonmole", s.run_id, s.nonmole_in_degree) for s in summaries if s.nonmole_in_degree is not None]
    _write_csv(path, ["group", "run_id", "in_degree"], rows)
    written.append(path)

    path = out / "fig3_forest.csv"
    rows = []
    for v in analysis.verdicts:
        if v.hypothesis in (Hypothesis.H2a, Hypothesis.H2b) and v.verdict is not Verdict.PENDING:
            e = v.estimates
            rows.append((v.hypothesis.value, v.population.value, e["n_pairs"], e["mean_diff"], e["ci"][0], e["ci"][1], e["bound"]))
    _write_csv(path, ["hypothesis", "population", "n_pairs", "mean_diff", "ci_low", "ci_high", "bound"], rows)
    written.append(path)

    path = out / "fig4_lorenz.csv"
    grid = np.linspace(0, 1, lorenz_grid)
    rows = []
    for name, vals in (("hbee_pairs", analysis.exposures), ("enron_nodes", analysis.enron_degrees)):
        if vals is None or not np.any(np.asarray(vals) > 0):
            continue
        pts = np.array(stats.lorenz_points(vals))
        rows += [(name, float(x), float(np.interp(x, pts[:, 0], pts[:, 1]))) for x in grid]
    _write_csv(path, ["series", "population_share", "value_share"], rows)
    written.append(path)

    path = out / "fig5_fidelity_scatter.csv"
    rows = []
    for a in analysis.audits:
        for i, t in enumerate(a.sampled_ticks):
            rows.append((a.run_id, a.condition.code, t, a.ratings[i] if a.ratings else ""))
    _write_csv(path, ["run_id", "condition", "tick", "rating"], rows)
    written.append(path)
    return written


def render_svgs(figure_dir: str | Path) -> list[Path]:
    """Static SVGs from the figure CSVs; needs matplotlib (optional extra)."""
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        log.warning("matplotlib not installed; skipping SVG rendering")
        return []
    figure_dir = Path(figure_dir)
    plt.rcParams["svg.hashsalt"] = "molesim"
    written = []

    def _read(name):
        with open(figure_dir / name, newline="") as fh:
            return list(csv.DictReader(fh))

    def _save(fig, name):
        p = figure_dir / name
        fig.savefig(p, format="svg", metadata={"Date": None})
        plt.close(fig)
        written.append(p)

    rows = _read("fig1_rank_ecdf.csv")
    fig, ax = plt.subplots(figsize=(4, 3))
    if rows:
        ax.step([float(r["rank"]) for r in rows], [float(r["ecdf"]) for r in rows], where="post", label="mole rank")
        ax.plot([float(r["rank"]) for r in rows], [float(r["uniform_cdf"]) for r in rows], "--", label="uniform")
    ax.set_xlabel("UEBA rank")
    ax.set_ylabel("ECDF")
    ax.legend()
    _save(fig, "fig1_rank_ecdf.svg")

    rows = _read("fig2_indegree_strip.csv")
    fig, ax = plt.subplots(figsize=(4, 3))
    for i, g in enumerate(("mole", "nonmole")):
        ys = [float(r["in_degree"]) for r in rows if r["group"] == g]
        ax.scatter(np.full(len(ys), i) + np.linspace(-0.15, 0.15, len(ys)), ys, s=10)
    ax.set_xticks([0, 1], ["mole", "non-mole"])
    ax.set_ylabel("in-degree at snapshot")
    _save(fig, "fig2_indegree_strip.svg")

    rows = _read("fig3_forest.csv")
    fig, ax = plt.subplots(figsize=(4, 3))
    for i, r in enumerate(rows):
        m, lo, hi = float(r["mean_diff"]), r["ci_low"], r["ci_high"]
        if lo and hi:
            ax.plot([float(lo), float(hi)], [i, i], color="k")
        ax.plot([m], [i], "o", color="k")
    if rows:
        b = float(rows[0]["bound"])
        ax.axvspan(-b, b, alpha=0.2)
    ax.set_yticks(range(len(rows)), [f"{r['hypothesis']} {r['population']}" for r in rows])
    ax.set_xlabel("paired rank difference")
    _save(fig, "fig3_forest.svg")

    rows = _read("fig4_lorenz.csv")
    fig, ax = plt.subplots(figsize=(4, 3))
    for name in sorted({r["series"] for r in rows}):
        pts = [(float(r["population_share"]), float(r["value_share"])) for r in rows if r["series"] == name]
        ax.plot(*zip(*pts), label=name)
    ax.plot([0, 1], [0, 1], ":", color="grey")
    ax.legend()
    _save(fig, "fig4_lorenz.svg")

    rows = [r for r in _read("fig5_fidelity_scatter.csv") if r["rating"]]
    fig, ax = plt.subplots(figsize=(4, 3))
    ax.scatter([int(r["tick"]) for r in rows], [int(r["rating"]) for r in rows], s=10)
    ax.set_xlabel("tick")
    ax.set_ylabel("rating")
    _save(fig, "fig5_fidelity_scatter.svg")
    return written
