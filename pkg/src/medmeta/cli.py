"""Command-line front end.

Subcommands wire the corpus, perturbation engine, metric registry, and
meta-evaluation statistics into reproducible runs: every command writes
its outputs plus a run manifest into --out-dir, seeds are explicit, and
all files are written atomically (temp file + rename) so a re-run with
identical inputs reproduces the data files byte for byte.

Score values live in [0, 1] everywhere inside the package; the x100
presentation scaling happens only at CSV emission here.

Exit codes: 0 success, 1 internal error, 2 invalid input or
configuration, 3 external adapter failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import tempfile
from dataclasses import dataclass, field
from datetime import datetime, timezone

from .adapters import (
    ORACLE_METRIC,
    AdapterError,
    AdapterSession,
    MetricDescriptor,
    NativeMetric,
    RegistryError,
    load_metrics_config,
    open_session,
    resolve_metric,
    score_batch,
)
from .corpus import (
    AnnotationCategory,
    Aspect,
    CorpusError,
    ErrorType,
    PairDataset,
    Significance,
    default_reports_path,
    dump_pairs,
    dump_severity_fixtures,
    load_annotations,
    load_pairs,
    load_reports,
    load_severity_fixtures,
)
from .labeler import load_gazetteer
from .metaeval import (
    MetaEvalError,
    MetaEvalReport,
    agreement_matrix,
    build_report,
    monotonicity_profile,
)
from .metrics import MetricScore
from .perturb import PerturbError, QuotaUnfillable, compose_severity_fixtures, generate_cell, generate_dataset

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_INPUT = 2
EXIT_ADAPTER = 3

_GAP_EPSILON = 1e-9


# ---------------------------------------------------------------------------
# run manifest


@dataclass
class RunManifest:
    """Provenance record for one command invocation.

    The run id hashes the command, flags, input digests, and seed, so
    two runs with identical inputs share an id and their data files
    (everything except this manifest's timestamp) match byte for byte.
    """

    run_id: str
    timestamp: str
    command: str
    flags: dict
    inputs: dict
    seed: int | None
    metric_ids: list[str] = field(default_factory=list)
    outputs: list[str] = field(default_factory=list)


def _sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _build_manifest(command: str, flags: dict, inputs: dict, seed: int | None, metric_ids, outputs) -> RunManifest:
    digest = hashlib.sha256(
        json.dumps(
            {"command": command, "flags": flags, "inputs": inputs, "seed": seed},
            sort_keys=True,
        ).encode("utf-8")
    ).hexdigest()
    return RunManifest(
        run_id=digest[:12],
        timestamp=datetime.now(timezone.utc).isoformat(timespec="seconds"),
        command=command,
        flags=flags,
        inputs=inputs,
        seed=seed,
        metric_ids=list(metric_ids),
        outputs=list(outputs),
    )


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(path) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _emit(out_dir: str, name: str, text: str) -> str:
    _atomic_write(os.path.join(out_dir, name), text)
    return name


def _write_manifest(out_dir: str, manifest: RunManifest) -> None:
    record = {
        "run_id": manifest.run_id,
        "timestamp": manifest.timestamp,
        "command": manifest.command,
        "flags": manifest.flags,
        "inputs": manifest.inputs,
        "seed": manifest.seed,
        "metric_ids": manifest.metric_ids,
        "outputs": manifest.outputs,
    }
    _emit(out_dir, "manifest.json", json.dumps(record, indent=2, sort_keys=True) + "\n")


def _input_digests(paths: dict) -> dict:
    digests = {}
    for label, path in paths.items():
        if path is not None:
            digests[label] = {"path": str(path), "sha256": _sha256_file(path)}
    gazetteer_path = os.environ.get("MEDMETA_GAZETTEER")
    if gazetteer_path:
        digests["gazetteer"] = {"path": gazetteer_path, "sha256": _sha256_file(gazetteer_path)}
    return digests


# ---------------------------------------------------------------------------
# metric plumbing


def _metric_handles(metric_ids, *, config_path, dataset: PairDataset | None):
    """Resolve every metric id to a scoring handle, opening adapter
    sessions for external ones.  Caller must pass the result to
    _close_handles when done."""
    config = load_metrics_config(config_path) if config_path else None
    significance_by_pair = (
        {pair.pair_id: pair.significance for pair in dataset} if dataset is not None else None
    )
    gazetteer = load_gazetteer()
    handles: dict[str, NativeMetric | AdapterSession] = {}
    try:
        for metric_id in metric_ids:
            resolved = resolve_metric(
                metric_id,
                gazetteer=gazetteer,
                significance_by_pair=significance_by_pair,
                config=config,
            )
            if isinstance(resolved, MetricDescriptor):
                handles[metric_id] = open_session(resolved)
            else:
                handles[metric_id] = resolved
    except BaseException:
        _close_handles(handles)
        raise
    return handles


def _close_handles(handles) -> None:
    for handle in handles.values():
        if isinstance(handle, AdapterSession):
            handle.close()


def _parse_metric_ids(raw: str) -> list[str]:
    metric_ids = [m.strip() for m in raw.split(",") if m.strip()]
    if not metric_ids:
        raise RegistryError("no metric ids given")
    return metric_ids


# ---------------------------------------------------------------------------
# formatting


def _fmt_scaled(value: float) -> str:
    return f"{value * 100.0:.2f}"


def _cell_key(cell) -> str:
    return f"{cell.aspect.value}/{cell.error_type.value}"


def _table_csv(reports: list[MetaEvalReport], side: str) -> str:
    """One row per metric; columns are the populated aspect/error-type
    cells for one significance side plus the overall mean and CI."""
    first = reports[0]
    cells = first.discriminative_cells if side == "discriminative" else first.robustness_cells
    columns = [_cell_key(c) for c in cells]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["metric_id", *columns, "overall", "ci_low", "ci_high"])
    for report in reports:
        row_cells = report.discriminative_cells if side == "discriminative" else report.robustness_cells
        if [_cell_key(c) for c in row_cells] != columns:
            raise MetaEvalError("metric reports disagree on populated cells")
        overall = report.overall_discriminative if side == "discriminative" else report.overall_robustness
        writer.writerow(
            [report.metric_id]
            + [_fmt_scaled(c.mean) for c in row_cells]
            + [_fmt_scaled(overall.mean), _fmt_scaled(overall.ci_low), _fmt_scaled(overall.ci_high)]
        )
    return buf.getvalue()


def _summary_md(reports: list[MetaEvalReport], profiles) -> str:
    lines = ["# Meta-evaluation summary", ""]
    lines.append("| metric | discriminative | robustness | gap |")
    lines.append("|---|---|---|---|")
    flagged = []
    for report in reports:
        disc = report.overall_discriminative.mean
        robu = report.overall_robustness.mean
        gap = robu - disc
        lines.append(
            f"| {report.metric_id} | {_fmt_scaled(disc)} | {_fmt_scaled(robu)} | {_fmt_scaled(gap)} |"
        )
        if abs(gap) <= _GAP_EPSILON:
            flagged.append(report.metric_id)
    lines.append("")
    lines.append(
        "Discriminative = mean score over significant pairs (lower is better); "
        "robustness = mean score over insignificant pairs (higher is better); "
        "gap = robustness - discriminative. All values x100."
    )
    for metric_id in flagged:
        lines.append("")
        lines.append(
            f"**WARNING: zero discrimination-robustness gap for {metric_id}** - "
            "the metric scores harmful and harmless rewrites identically."
        )
    if profiles:
        lines.append("")
        lines.append("## Monotonicity across severity groups")
        lines.append("")
        lines.append("| metric | " + " | ".join(f"G{g}" for g in range(5)) + " | violations |")
        lines.append("|---|" + "---|" * 6)
        for profile in profiles:
            means = [
                _fmt_scaled(profile.group_means[g]) if g in profile.group_means else ""
                for g in range(5)
            ]
            if profile.violations:
                note = "; ".join(f"G{a}->G{b} (+{_fmt_scaled(delta)})" for a, b, delta in profile.violations)
            else:
                note = "none"
            lines.append(f"| {profile.metric_id} | " + " | ".join(means) + f" | {note} |")
    lines.append("")
    return "\n".join(lines)


def _monotonicity_json(profiles) -> str:
    record = {
        "metrics": [
            {
                "metric_id": p.metric_id,
                "group_means": {str(g): p.group_means[g] for g in sorted(p.group_means)},
                "violations": [
                    {"from_group": a, "to_group": b, "increase": delta} for a, b, delta in p.violations
                ],
            }
            for p in profiles
        ]
    }
    return json.dumps(record, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# subcommands


def cmd_perturb(args) -> int:
    input_path = args.input if args.input else default_reports_path()
    reports = load_reports(input_path)
    wrote = []

    if args.full_dataset:
        dataset = generate_dataset(reports, args.seed)
    elif args.aspect or args.error_type or args.significance:
        if not (args.aspect and args.error_type and args.significance):
            print("single-cell mode needs --aspect, --error-type, and --significance", file=sys.stderr)
            return EXIT_INPUT
        dataset = generate_cell(
            reports,
            args.seed,
            Aspect(args.aspect),
            ErrorType(args.error_type),
            Significance(args.significance),
        )
    else:
        dataset = None
    if dataset is None and args.severity is None:
        print("nothing to do: pass --full-dataset, a cell selector, or --severity", file=sys.stderr)
        return EXIT_INPUT

    if dataset is not None:
        wrote.append(_emit(args.out_dir, "pairs.jsonl", dump_pairs(dataset)))

    if args.severity is not None:
        if args.severity:
            wanted = [x.strip() for x in args.severity.split(",") if x.strip()]
            by_id = {r.id: r for r in reports}
            missing = [x for x in wanted if x not in by_id]
            if missing:
                print(f"unknown report ids for --severity: {', '.join(missing)}", file=sys.stderr)
                return EXIT_INPUT
            base = [by_id[x] for x in wanted]
        else:
            base = reports[:4]
        fixtures = compose_severity_fixtures(base, args.seed)
        wrote.append(_emit(args.out_dir, "severity_fixtures.jsonl", dump_severity_fixtures(fixtures)))

    manifest = _build_manifest(
        "perturb",
        {
            "full_dataset": args.full_dataset,
            "aspect": args.aspect,
            "error_type": args.error_type,
            "significance": args.significance,
            "severity": args.severity,
        },
        _input_digests({"reports": input_path}),
        args.seed,
        [],
        wrote,
    )
    _write_manifest(args.out_dir, manifest)
    return EXIT_OK


def cmd_score(args) -> int:
    dataset = load_pairs(args.pairs)
    metric_ids = _parse_metric_ids(args.metrics)
    triples = [(pair.pair_id, pair.gt.text, pair.me.text) for pair in dataset]
    handles = _metric_handles(metric_ids, config_path=args.metrics_config, dataset=dataset)
    try:
        scores: list[MetricScore] = []
        for metric_id in metric_ids:
            scores.extend(score_batch(handles[metric_id], triples))
    finally:
        _close_handles(handles)

    scores.sort(key=lambda s: (s.pair_id, s.metric_id))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["pair_id", "metric_id", "value"])
    for score in scores:
        writer.writerow([score.pair_id, score.metric_id, repr(score.value)])
    wrote = [_emit(args.out_dir, "scores.csv", buf.getvalue())]

    manifest = _build_manifest(
        "score",
        {"metrics": metric_ids},
        _input_digests({"pairs": args.pairs, "metrics_config": args.metrics_config}),
        None,
        metric_ids,
        wrote,
    )
    _write_manifest(args.out_dir, manifest)
    return EXIT_OK


def cmd_metaeval(args) -> int:
    dataset = load_pairs(args.pairs)
    metric_ids = _parse_metric_ids(args.metrics)
    triples = [(pair.pair_id, pair.gt.text, pair.me.text) for pair in dataset]
    fixtures = load_severity_fixtures(args.severity_fixtures) if args.severity_fixtures else None

    reports: list[MetaEvalReport] = []
    profiles = []
    handles = _metric_handles(metric_ids, config_path=args.metrics_config, dataset=dataset)
    try:
        for metric_id in metric_ids:
            scores = score_batch(handles[metric_id], triples)
            reports.append(
                build_report(
                    metric_id,
                    scores,
                    dataset,
                    resamples=args.bootstrap,
                    level=args.ci_level,
                    seed=args.seed,
                )
            )
        if fixtures:
            for metric_id in metric_ids:
                # The oracle diagnostic is defined only over the loaded
                # pair dataset, not over fixture variants.
                if metric_id == ORACLE_METRIC:
                    continue
                fixture_triples = [
                    (f"{fx.report_id}.g{g}", fx.gt.text, fx.variants[g].text)
                    for fx in fixtures
                    for g in range(5)
                ]
                fixture_scores = score_batch(handles[metric_id], fixture_triples)
                by_pair = {s.pair_id: s.value for s in fixture_scores}
                scores_by_fixture = {
                    fx.report_id: {g: by_pair[f"{fx.report_id}.g{g}"] for g in range(5)}
                    for fx in fixtures
                }
                profiles.append(monotonicity_profile(metric_id, scores_by_fixture))
    finally:
        _close_handles(handles)

    wrote = [
        _emit(args.out_dir, "discrimination.csv", _table_csv(reports, "discriminative")),
        _emit(args.out_dir, "robustness.csv", _table_csv(reports, "robustness")),
    ]
    if profiles:
        wrote.append(_emit(args.out_dir, "monotonicity.json", _monotonicity_json(profiles)))
    wrote.append(_emit(args.out_dir, "summary.md", _summary_md(reports, profiles)))

    manifest = _build_manifest(
        "metaeval",
        {
            "metrics": metric_ids,
            "bootstrap": args.bootstrap,
            "ci_level": args.ci_level,
        },
        _input_digests(
            {
                "pairs": args.pairs,
                "metrics_config": args.metrics_config,
                "severity_fixtures": args.severity_fixtures,
            }
        ),
        args.seed,
        metric_ids,
        wrote,
    )
    _write_manifest(args.out_dir, manifest)
    return EXIT_OK


def cmd_agreement(args) -> int:
    records = load_annotations(args.annotations)
    matrices = agreement_matrix(records)

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    columns = [
        f"{category.value}_{significance.value}"
        for category in AnnotationCategory
        for significance in Significance
    ]
    writer.writerow(["retrieval_metric", *columns])
    for matrix in matrices:
        row = [matrix.retrieval_metric]
        for category in AnnotationCategory:
            for significance in Significance:
                value = matrix.values.get((category, significance))
                row.append("" if value is None else f"{value:.4f}")
        writer.writerow(row)
    wrote = [_emit(args.out_dir, "agreement.csv", buf.getvalue())]

    manifest = _build_manifest(
        "agreement",
        {},
        _input_digests({"annotations": args.annotations}),
        None,
        [],
        wrote,
    )
    _write_manifest(args.out_dir, manifest)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="medmeta",
        description="Meta-evaluation harness for radiology report text metrics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("perturb", help="generate perturbed report pairs and severity fixtures")
    p.add_argument("--input", help="source reports JSONL (defaults to the bundled demo corpus)")
    p.add_argument("--seed", type=int, required=True, help="generation seed (no wall-clock default)")
    p.add_argument("--full-dataset", action="store_true", help="fill the full composition quota")
    p.add_argument("--aspect", choices=[a.value for a in Aspect], help="single-cell mode: aspect")
    p.add_argument(
        "--error-type", choices=[e.value for e in ErrorType], help="single-cell mode: error type"
    )
    p.add_argument(
        "--significance",
        choices=[s.value for s in Significance],
        help="single-cell mode: significance",
    )
    p.add_argument(
        "--severity",
        nargs="?",
        const="",
        default=None,
        metavar="IDS",
        help="also compose severity fixtures; optional comma-separated report ids (default: first four)",
    )
    p.add_argument("--out-dir", default=".", help="output directory")
    p.set_defaults(fn=cmd_perturb)

    p = sub.add_parser("score", help="score every pair with every metric")
    p.add_argument("--pairs", required=True, help="pair dataset JSONL")
    p.add_argument("--metrics", required=True, help="comma-separated metric ids")
    p.add_argument("--metrics-config", help="external metric descriptors JSON")
    p.add_argument("--out-dir", default=".", help="output directory")
    p.set_defaults(fn=cmd_score)

    p = sub.add_parser("metaeval", help="score pairs and emit the meta-evaluation tables")
    p.add_argument("--pairs", required=True, help="pair dataset JSONL")
    p.add_argument("--metrics", required=True, help="comma-separated metric ids")
    p.add_argument("--metrics-config", help="external metric descriptors JSON")
    p.add_argument("--severity-fixtures", help="severity fixtures JSONL for the monotonicity profile")
    p.add_argument("--bootstrap", type=int, default=10000, help="bootstrap resamples")
    p.add_argument("--ci-level", type=float, default=0.95, help="confidence level")
    p.add_argument("--seed", type=int, default=0, help="bootstrap seed")
    p.add_argument("--out-dir", default=".", help="output directory")
    p.set_defaults(fn=cmd_metaeval)

    p = sub.add_parser("agreement", help="inter-annotator agreement table from an annotations CSV")
    p.add_argument("--annotations", required=True, help="annotation counts CSV")
    p.add_argument("--out-dir", default=".", help="output directory")
    p.set_defaults(fn=cmd_agreement)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except QuotaUnfillable as exc:
        print(f"error: {exc}", file=sys.stderr)
        for aspect, error_type, significance in exc.cells:
            print(
                f"  unfillable cell: {aspect.value}/{error_type.value}/{significance.value}",
                file=sys.stderr,
            )
        return EXIT_INPUT
    except (CorpusError, PerturbError, RegistryError, MetaEvalError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except AdapterError as exc:
        print(f"adapter error: {exc}", file=sys.stderr)
        return EXIT_ADAPTER
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # pragma: no cover - last-resort diagnostics
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    raise SystemExit(main())
