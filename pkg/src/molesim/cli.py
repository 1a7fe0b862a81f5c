"""Command-line entry point.

Every flag can also come from an environment variable ``MOLESIM_<DEST>``
(e.g. ``MOLESIM_SEED=3``) or from a YAML/JSON ``--config`` file keyed by
the same dest names. Precedence: command line > environment > config file
> built-in default.

Exit codes: 0 success, 1 usage, 2 verification failure, 3 runtime fault.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import yaml

import molesim
from molesim.campaign import (
    LABEL_TRANSLATION,
    CampaignPlan,
    Thresholds,
    analyze,
    build_report,
    fidelity_filter,
    load_campaign,
    read_ratings,
    render_markdown,
    run_campaign,
    save_run,
    verdicts_from_statistics,
    write_figure_data,
    write_rating_slots,
)
from molesim.campaign.fidelity import apply_ratings
from molesim.campaign.metrics import EnronDataMissing, find_enron, ingest_edge_list
from molesim.campaign.report import canonical_json, provenance, render_svgs, verdict_doc
from molesim.campaign.runner import default_scenarios, run_dir
from molesim.engine import Condition, PolicyKind, PreflightError, RunConfig, run
from molesim.org import default_roster, load_roster, load_scenario, write_roster
from molesim.policy import EndpointConfig, ScriptedPolicyParams
from molesim.socialgraph import CascadeParams
from molesim.telemetry import append_manifest

log = logging.getLogger("molesim")

ENV_PREFIX = "MOLESIM_"
EXIT_OK, EXIT_USAGE, EXIT_VERIFY, EXIT_FAULT = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse exits 2 by default; usage errors are 1 here
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --- option groups ---------------------------------------------------------------


def _seed_list(text: str) -> list[int]:
    out: list[int] = []
    for part in str(text).split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = part.split("-")
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    return out


def _bool(text) -> bool:
    return str(text).strip().lower() in ("1", "true", "yes", "on")


def _add_world(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("world")
    g.add_argument("--roster", help="roster CSV (default: bundled fixture)")
    g.add_argument("--roster-size", type=int, default=100, help="size of the generated default roster")
    g.add_argument("--policy", choices=["scripted", "llm"], default="scripted")
    g.add_argument("--base-flag-rate", type=float, default=0.04)
    g.add_argument("--naive-rate", type=float, default=0.08)
    g.add_argument("--adaptive-rate", type=float, default=0.01)
    g.add_argument("--elicitation-gain", type=float, default=0.5)
    g.add_argument("--cascade-k", type=int, default=2)
    g.add_argument("--p-cascade", type=float, default=0.3)
    g.add_argument("--allow-collision", action="store_true", help="run even if the scenario fires the mole early")
    e = p.add_argument_group("LLM endpoint")
    e.add_argument("--llm-base-url", default=EndpointConfig.base_url)
    e.add_argument("--llm-model", default=EndpointConfig.model)
    e.add_argument("--llm-api-key-env", default=EndpointConfig.api_key_env)
    e.add_argument("--llm-concurrency", type=int, default=EndpointConfig.max_concurrency)
    e.add_argument("--llm-debug", action="store_true", help="log full request bodies")


def _add_thresholds(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("pre-registered thresholds")
    d = Thresholds()
    g.add_argument("--alpha", type=float, default=d.alpha)
    g.add_argument("--equivalence-bound", type=float, default=d.equivalence_bound, help="ranks at a 100-agent roster")
    g.add_argument("--epsilon", type=float, default=d.epsilon)
    g.add_argument("--fidelity-cutoff", type=float, default=d.fidelity_cutoff)
    g.add_argument("--bootstrap-b", type=int, default=d.bootstrap_B)
    g.add_argument("--bootstrap-seed", type=int, default=d.bootstrap_seed)


def _thresholds(a) -> tuple[Thresholds, dict]:
    th = Thresholds(
        alpha=a.alpha,
        equivalence_bound=a.equivalence_bound,
        epsilon=a.epsilon,
        fidelity_cutoff=a.fidelity_cutoff,
        bootstrap_B=a.bootstrap_b,
        bootstrap_seed=a.bootstrap_seed,
    )
    base = dataclasses.asdict(Thresholds())
    overrides = {k: v for k, v in dataclasses.asdict(th).items() if base[k] != v}
    return th, overrides


def _roster(a):
    if a.roster:
        return load_roster(a.roster)
    return default_roster(a.roster_size)


def _params(a) -> tuple[ScriptedPolicyParams, CascadeParams, EndpointConfig]:
    sp = ScriptedPolicyParams(
        base_flag_rate=a.base_flag_rate,
        mole_naive_flagworthy_rate=a.naive_rate,
        mole_adaptive_flagworthy_rate=a.adaptive_rate,
        elicitation_gain=a.elicitation_gain,
    )
    cp = CascadeParams(k=a.cascade_k, p_cascade=a.p_cascade)
    ep = EndpointConfig(
        base_url=a.llm_base_url,
        model=a.llm_model,
        api_key_env=a.llm_api_key_env,
        max_concurrency=a.llm_concurrency,
        debug=a.llm_debug,
    )
    return sp, cp, ep


def _policy_kind(a) -> PolicyKind:
    return PolicyKind.LLM if a.policy == "llm" else PolicyKind.Scripted


def _condition(text: str) -> Condition:
    try:
        return Condition.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _world_config(a) -> dict:
    keys = ["roster", "roster_size", "policy", "base_flag_rate", "naive_rate", "adaptive_rate", "elicitation_gain",
            "cascade_k", "p_cascade", "allow_collision", "llm_base_url", "llm_model", "llm_concurrency"]
    return {k: getattr(a, k) for k in keys if hasattr(a, k)}


# --- subcommands ------------------------------------------------------------------


def cmd_run(a) -> int:
    roster = _roster(a)
    sp, cp, ep = _params(a)
    scenario = load_scenario(a.scenario) if a.scenario else default_scenarios()[a.condition]
    cfg = RunConfig(
        condition=a.condition, seed=a.seed, scenario=scenario, roster=roster, policy_kind=_policy_kind(a),
        scripted_params=sp, cascade_params=cp, endpoint=ep, allow_collision=a.allow_collision,
        abort_after_tick=a.abort_after,
    )
    try:
        record = run(cfg)
    except PreflightError as exc:
        print(f"preflight FAILED for {cfg.run_id} (DEV3-style collision): {exc}", file=sys.stderr)
        print("rerun with --allow-collision to record the run as INVALID_DEV3", file=sys.stderr)
        return EXIT_FAULT
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    if not (out / "roster.csv").exists():
        write_roster(roster, out / "roster.csv")
    rd = save_run(record, run_dir(out, record.run_id))
    append_manifest(out / "manifest.csv", record.manifest_row())
    conf = {**_world_config(a), "condition": a.condition.value, "seed": a.seed, "scenario_sha256": scenario.content_hash}
    (rd / "provenance.json").write_text(canonical_json(provenance(conf, Thresholds())))
    print(f"{record.run_id}: {record.validity.value.value} last_tick={record.last_tick} events={len(record.events)} "
          f"mole={record.mole_name or '-'} -> {rd}")
    return EXIT_OK


def cmd_campaign(a) -> int:
    roster = _roster(a)
    sp, cp, ep = _params(a)
    aborts = {}
    for item in a.abort or []:
        rid, _, tick = item.partition(":")
        if not tick:
            raise UsageError(f"--abort expects RUN_ID:TICK, got {item!r}")
        aborts[rid] = int(tick)
    plan = CampaignPlan(
        roster=roster, seeds=_seed_list(a.seeds), conditions=[_condition(c) for c in a.conditions.split(",")],
        policy_kind=_policy_kind(a), scripted_params=sp, cascade_params=cp, endpoint=ep,
        allow_collision=a.allow_collision, abort_after=aborts,
    )
    conf = {**_world_config(a), "plan": plan.describe()}
    res = run_campaign(plan, a.out, workers=a.workers, provenance=provenance(conf, Thresholds()))
    print(f"executed {len(res.executed)}, skipped {len(res.skipped)} (already complete), failed {len(res.failures)}")
    for rid, why in sorted(res.failures.items()):
        print(f"  {rid}: {why}")
    return EXIT_OK


def _enron(a) -> Optional[list]:
    path = find_enron(a.enron)
    if path is None:
        log.warning("no Enron edge list (pass --enron or set MOLESIM_ENRON_PATH); H4 stays PENDING")
        return None
    return ingest_edge_list(path)


def cmd_analyze(a) -> int:
    th, overrides = _thresholds(a)
    data = load_campaign(a.campaign)
    ratings = read_ratings(a.ratings) if a.ratings else None
    replication = load_campaign(a.replication).summaries if a.replication else None
    analysis = analyze(data.summaries, data.roster, data.audits, ratings, _enron(a), th, replication)
    conf = {"campaign_config": data.config, "ratings": _sha(a.ratings), "enron": a.enron}
    report = build_report(analysis, provenance(conf, th, overrides))
    out = Path(a.out or Path(a.campaign) / "analysis")
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(canonical_json(report))
    (out / "report.md").write_text(render_markdown(report))
    figs = write_figure_data(out / "figures", analysis)
    if a.svg:
        figs += render_svgs(out / "figures")
    for v in report["verdicts"]:
        flag = " (direction inverted)" if v["direction_inverted"] else ""
        print(f"{v['hypothesis']:<4} {v['population']:<12} {v['verdict']}{flag}")
    print(f"report: {out / 'report.json'}")
    return EXIT_OK


def _sha(path) -> Optional[str]:
    if not path:
        return None
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def cmd_audit_sample(a) -> int:
    data = load_campaign(a.campaign)
    n = write_rating_slots(a.out, data.audits)
    prov = provenance({"campaign_config": data.config}, Thresholds())
    Path(str(a.out) + ".provenance.json").write_text(canonical_json(prov))
    print(f"{n} rating slots across {len(data.audits)} adaptive runs -> {a.out}")
    return EXIT_OK


def cmd_audit_ingest(a) -> int:
    th, overrides = _thresholds(a)
    data = load_campaign(a.campaign)
    rated = apply_ratings(data.audits, read_ratings(a.ratings))
    ranks = {s.run_id: s.mole_rank for s in data.summaries if s.mole_rank is not None}
    fid = fidelity_filter(rated, ranks, th.fidelity_cutoff)
    doc = {
        "provenance": provenance({"campaign_config": data.config, "ratings": _sha(a.ratings)}, th, overrides),
        "status": "complete" if fid.complete else "incomplete",
        "missing": list(fid.missing),
        "counts": {c.code: {"pass": p, "fail": f} for c, (p, f) in fid.counts.items()},
        "spearman_vs_rank": {c.code: r for c, r in fid.spearman.items()},
        "pass_runs": sorted(fid.pass_runs),
    }
    text = canonical_json(doc)
    if a.out:
        Path(a.out).write_text(text)
    print(text, end="")
    return EXIT_OK


def cmd_report(a) -> int:
    if a.stats:
        th, overrides = _thresholds(a)
        doc = _load_tree(a.stats)
        verdicts = verdicts_from_statistics(doc, th)
        report = {
            "provenance": provenance({"statistics": doc}, th, overrides),
            "verdicts": [verdict_doc(v) for v in verdicts],
            "label_translation": list(LABEL_TRANSLATION),
        }
        text = render_markdown(json.loads(canonical_json(report)))
    elif a.report:
        text = render_markdown(json.loads(Path(a.report).read_text()))
    else:
        raise UsageError("report needs a report.json path or --stats FILE")
    if a.out:
        Path(a.out).write_text(text)
    print(text, end="")
    return EXIT_OK


def cmd_verify(a) -> int:
    lock = Path(a.lock)
    if a.write:
        base = lock.parent.resolve()
        lines = []
        for p in sorted(Path(x).resolve() for x in a.write):
            lines.append(f"{hashlib.sha256(p.read_bytes()).hexdigest()}  {os.path.relpath(p, base)}")
        lock.write_text("\n".join(lines) + "\n")
        print(f"wrote {len(lines)} hashes to {lock}")
        return EXIT_OK
    if not lock.exists():
        print(f"lock file not found: {lock}", file=sys.stderr)
        return EXIT_VERIFY
    bad = 0
    for raw in lock.read_text().splitlines():
        if not raw.strip() or raw.startswith("#"):
            continue
        digest, _, rel = raw.partition("  ")
        target = lock.parent / rel
        if not target.exists():
            print(f"MISSING   {rel}")
            bad += 1
        elif hashlib.sha256(target.read_bytes()).hexdigest() != digest.strip():
            print(f"MISMATCH  {rel}")
            bad += 1
        else:
            print(f"OK        {rel}")
    print(f"provenance: code_version={molesim.__version__} lock_sha256={_sha(lock)}")
    return EXIT_VERIFY if bad else EXIT_OK


def _load_tree(path) -> dict:
    text = Path(path).read_text()
    doc = yaml.safe_load(text) if str(path).endswith((".yaml", ".yml")) else json.loads(text)
    if not isinstance(doc, dict):
        raise UsageError(f"{path}: expected a mapping at the top level")
    return doc


# --- parser -------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="molesim", description="Insider-threat multi-agent simulator and verdict engine.")
    p.add_argument("--config", help="YAML/JSON file of option defaults")
    p.add_argument("-v", "--verbose", action="count", default=0)
    p.add_argument("--version", action="version", version=f"molesim {molesim.__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="execute one seeded run")
    r.add_argument("--condition", type=_condition, required=True, help="C1..C5")
    r.add_argument("--seed", type=int, required=True)
    r.add_argument("--scenario", help="scenario YAML (default: the condition's bundled scenario)")
    r.add_argument("--out", default="runs-out")
    r.add_argument("--abort-after", type=int, help="inject a fault after this tick (reproduces truncated runs)")
    _add_world(r)
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("campaign", help="run conditions x seeds with bounded parallelism; resumable")
    c.add_argument("--out", required=True)
    c.add_argument("--seeds", default="0-19", help="e.g. 0-19 or 0,1,5")
    c.add_argument("--conditions", default="C1,C2,C3,C4,C5")
    c.add_argument("--workers", type=int, default=None, help="default: all available CPUs")
    c.add_argument("--abort", action="append", metavar="RUN_ID:TICK", help="inject a fault after TICK in RUN_ID")
    _add_world(c)
    c.set_defaults(func=cmd_campaign)

    an = sub.add_parser("analyze", help="verdict report and figure data for a campaign")
    an.add_argument("campaign")
    an.add_argument("--ratings", help="fidelity ratings CSV (run_id,tick,rating)")
    an.add_argument("--enron", help="SNAP Enron edge list (.txt or .txt.gz)")
    an.add_argument("--replication", help="campaign directory of a second-backbone C2 replication")
    an.add_argument("--out")
    an.add_argument("--svg", action="store_true", help="also render SVGs (needs matplotlib)")
    _add_thresholds(an)
    an.set_defaults(func=cmd_analyze)

    au = sub.add_parser("audit", help="fidelity audit")
    ausub = au.add_subparsers(dest="audit_command", required=True, parser_class=_Parser)
    s = ausub.add_parser("sample", help="write blank rating slots for the adaptive runs")
    s.add_argument("campaign")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_audit_sample)
    i = ausub.add_parser("ingest", help="apply a ratings CSV and summarise PASS/FAIL")
    i.add_argument("campaign")
    i.add_argument("--ratings", required=True)
    i.add_argument("--out")
    _add_thresholds(i)
    i.set_defaults(func=cmd_audit_ingest)

    rp = sub.add_parser("report", help="render a report, or decide verdicts from supplied statistics")
    rp.add_argument("report", nargs="?", help="report.json written by analyze")
    rp.add_argument("--stats", help="YAML/JSON statistics to decide directly")
    rp.add_argument("--out")
    _add_thresholds(rp)
    rp.set_defaults(func=cmd_report)

    v = sub.add_parser("verify", help="check artifact hashes against a lock file")
    v.add_argument("--lock", required=True)
    v.add_argument("--write", nargs="+", metavar="PATH", help="(re)create the lock file from these paths")
    v.set_defaults(func=cmd_verify)
    return p


def _subparsers(p: argparse.ArgumentParser):
    for act in p._actions:
        if isinstance(act, argparse._SubParsersAction):
            for sp in act.choices.values():
                yield sp
                yield from _subparsers(sp)


def _apply_fallbacks(parser: argparse.ArgumentParser, file_conf: dict) -> None:
    """Overlay config-file values, then environment values, onto defaults."""
    for sp in [parser, *_subparsers(parser)]:
        for act in sp._actions:
            if act.dest in ("help", "version", "command", "audit_command", "func") or not act.option_strings:
                continue
            val = file_conf.get(act.dest)
            env = os.environ.get(ENV_PREFIX + act.dest.upper())
            if env is not None:
                val = env
            if val is None:
                continue
            if isinstance(act, argparse._StoreTrueAction):
                val = _bool(val)
            elif isinstance(val, str) and act.type is not None:
                val = act.type(val)
            act.default = val
            act.required = False


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    config_path = known.config or os.environ.get(ENV_PREFIX + "CONFIG")
    try:
        file_conf = _load_tree(config_path) if config_path else {}
        _apply_fallbacks(parser, {k.replace("-", "_"): v for k, v in file_conf.items()})
    except (OSError, ValueError, UsageError, argparse.ArgumentTypeError) as exc:
        print(f"molesim: bad configuration: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        a = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(a.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return a.func(a)
    except UsageError as exc:
        print(f"molesim: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (EnronDataMissing, FileNotFoundError) as exc:
        print(f"molesim: missing input: {exc}", file=sys.stderr)
        return EXIT_FAULT
    except Exception as exc:  # top-level boundary: report and map to the fault exit code
        log.debug("fault", exc_info=True)
        print(f"molesim: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAULT


if __name__ == "__main__":
    sys.exit(main())
