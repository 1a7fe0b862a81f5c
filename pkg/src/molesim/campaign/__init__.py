"""Five-condition campaigns, fidelity audit, and the hypothesis verdict engine."""

from molesim.campaign.fidelity import (
    FidelityAudit,
    FidelitySummary,
    apply_ratings,
    audit_sample,
    fidelity_filter,
    read_ratings,
    write_rating_slots,
)
from molesim.campaign.hypotheses import (
    LABEL_TRANSLATION,
    Criterion,
    Hypothesis,
    HypothesisVerdict,
    Population,
    RunSummary,
    Thresholds,
    Verdict,
    evaluate_h1,
    evaluate_h2,
    evaluate_h3,
    evaluate_h4,
    evaluate_h5,
)
from molesim.campaign.metrics import h3_nonmole, ingest_edge_list, pair_exposures, summarize
from molesim.campaign.report import analyze, build_report, render_markdown, verdicts_from_statistics, write_figure_data
from molesim.campaign.runner import CampaignPlan, load_campaign, load_run, run_campaign, save_run

__all__ = [
    "LABEL_TRANSLATION",
    "CampaignPlan",
    "Criterion",
    "FidelityAudit",
    "FidelitySummary",
    "Hypothesis",
    "HypothesisVerdict",
    "Population",
    "RunSummary",
    "Thresholds",
    "Verdict",
    "analyze",
    "apply_ratings",
    "audit_sample",
    "build_report",
    "evaluate_h1",
    "evaluate_h2",
    "evaluate_h3",
    "evaluate_h4",
    "evaluate_h5",
    "fidelity_filter",
    "h3_nonmole",
    "ingest_edge_list",
    "load_campaign",
    "load_run",
    "pair_exposures",
    "read_ratings",
    "render_markdown",
    "run_campaign",
    "save_run",
    "summarize",
    "verdicts_from_statistics",
    "write_figure_data",
    "write_rating_slots",
]
