"""Command-line entry point.

Exit status: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

from . import __version__
from ._io import dump_json, load_document
from .anomaly import AnomalyAssessment, assess_timeline, load_model_file, prob_abnormal
from .domain import EntityRef, MitigatorRef, load_station_config
from .errors import ConfigError, ForensicsError
from .incident import IncidentState
from .pipeline import (
    DEFAULT_GAP_THRESHOLD,
    EventTimeline,
    FilterSpec,
    RecordKind,
    correlate,
    expand_inputs,
    ingest,
    preprocess,
    sequence,
)
from .report import build_report, load_attributions, render_report
from .scenario import BUILTIN_SCENARIOS, evaluate_detection, generate, load_manifest, load_scenario, write_logs

logger = logging.getLogger("evcs_forensics")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2
ANALYSIS_SCHEMA_VERSION = 1
DEFAULT_MITIGATORS = {MitigatorRef("C", 1): True}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{message}\n{self.format_usage().strip()}")


def builtin_model_path():
    return resources.files("evcs_forensics") / "data" / "scenario1.model.json"


def builtin_attributions_path():
    return resources.files("evcs_forensics") / "data" / "scenario1.attributions.yaml"


def _emit(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text, encoding="utf-8")


def _check_out(out: Path | None, inputs: Sequence[Path]) -> None:
    if out is None:
        return
    target = out.resolve()
    for p in inputs:
        if Path(p).resolve() == target:
            raise UsageError(f"--out {out} would overwrite input {p}")


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------


def cmd_generate(args) -> int:
    scenario = load_scenario(args.scenario)
    if args.seed is not None or args.jitter_ms is not None:
        scenario = replace(
            scenario,
            seed=scenario.seed if args.seed is None else args.seed,
            jitter_ms=scenario.jitter_ms if args.jitter_ms is None else args.jitter_ms,
        )
    records, manifest = generate(scenario)
    written = write_logs(args.out, records, manifest)
    print(f"generated {len(records)} records ({len(manifest.falsified)} falsified) into {len(written) - 1} log files")
    return EXIT_OK


def analyze_paths(
    paths: Sequence[Path],
    model_path,
    *,
    gap_threshold: float = DEFAULT_GAP_THRESHOLD,
    filters: FilterSpec | None = None,
    renormalize: bool = False,
) -> dict:
    """ingest -> preprocess -> correlate -> sequence -> assess, as one document."""
    model_file = load_model_file(model_path, renormalize=renormalize)
    if model_file.mapping is None:
        raise ConfigError(f"{model_path}: model has no observation mapping")
    mapping = model_file.mapping
    refs = mapping.entity_refs()
    unnamed = [name for name in mapping.sources if name not in refs]
    next_index = max((r.index for r in refs.values() if r.subsystem.value == "S"), default=0)
    for name in unnamed:
        next_index += 1
        refs[name] = EntityRef("S", next_index)

    records, report = ingest(paths)
    for entry in report.malformed:
        logger.warning("malformed line %s", entry)
    if not records:
        raise ForensicsError("no records ingested")
    cleaned = preprocess(records, filters)
    groups = []
    for group in correlate(cleaned, gap_threshold):
        timeline = sequence(group)
        assessment = assess_timeline(model_file.model, timeline, mapping)
        attacked = {f.source for f in assessment.flagged}
        groups.append(
            {
                "timeline": timeline.to_dict(),
                "assessment": assessment.to_dict(),
                "entities": [
                    {"source": name, "ref": str(ref), "attacked": int(name in attacked)}
                    for name, ref in refs.items()
                ],
            }
        )
    return {
        "schema_version": ANALYSIS_SCHEMA_VERSION,
        "ingest": {
            "files": sorted(report.files),
            "lines": report.lines,
            "records": len(records),
            "retained": len(cleaned),
            "malformed": sorted(str(m) for m in report.malformed),
            "warnings": sorted(report.warnings),
        },
        "model": {"k": model_file.model.k, "p_abnormal": prob_abnormal(model_file.model).p_abnormal},
        "groups": groups,
    }


def cmd_analyze(args) -> int:
    out = Path(args.out) if args.out else None
    paths = expand_inputs(args.inputs)
    _check_out(out, paths)
    filters = FilterSpec.from_cli(args.from_, args.to, args.source, args.kind)
    if args.gap_threshold <= 0:
        raise UsageError("--gap-threshold must be positive")
    model = args.model or builtin_model_path()
    doc = analyze_paths(paths, model, gap_threshold=args.gap_threshold, filters=filters, renormalize=args.renormalize)
    _emit(dump_json(doc), out)
    return EXIT_OK


def _load_analysis(path) -> Mapping:
    doc = load_document(path)
    if not isinstance(doc, Mapping) or doc.get("schema_version") != ANALYSIS_SCHEMA_VERSION:
        raise ConfigError(f"{path}: not an analysis document")
    return doc


def select_group(doc: Mapping, group_id: str | None = None) -> Mapping:
    groups = doc.get("groups") or []
    if not groups:
        raise ForensicsError("analysis contains no timelines")
    if group_id is not None:
        for g in groups:
            if g["timeline"]["correlation_id"] == group_id:
                return g
        raise ForensicsError(f"no timeline with correlation id {group_id}")
    for g in groups:
        if g["assessment"]["flagged"]:
            return g
    return groups[0]


def report_from_analysis(doc: Mapping, attributions, vocab=None, *, group_id=None, draft=False):
    group = select_group(doc, group_id)
    timeline = EventTimeline.from_dict(group["timeline"])
    assessment = AnomalyAssessment.from_dict(group["assessment"])
    attacked = {EntityRef.parse(e["ref"]): bool(e["attacked"]) for e in group["entities"]}
    incident = IncidentState.from_flags(attacked, attributions.mitigators or DEFAULT_MITIGATORS)
    return build_report(timeline, assessment, incident, attributions, vocab, draft=draft)


def cmd_report(args) -> int:
    out = Path(args.out) if args.out else None
    _check_out(out, [Path(args.analysis), Path(args.attributions)] + ([Path(args.vocab)] if args.vocab else []))
    doc = _load_analysis(args.analysis)
    config = load_station_config(args.vocab)
    attributions = load_attributions(
        builtin_attributions_path() if args.attributions == "scenario1" else args.attributions
    )
    report = report_from_analysis(doc, attributions, config.vocabulary, group_id=args.group, draft=args.draft)
    _emit(render_report(report, args.format), out)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    out = Path(args.out) if args.out else None
    _check_out(out, [Path(args.manifest), Path(args.analysis)])
    manifest = load_manifest(args.manifest)
    doc = _load_analysis(args.analysis)
    assessments = [AnomalyAssessment.from_dict(g["assessment"]) for g in doc["groups"]]
    summary = evaluate_detection(manifest, assessments)
    _emit(dump_json(summary.to_dict()), out)
    return EXIT_OK


def cmd_validate_model(args) -> int:
    model_file = load_model_file(args.model, renormalize=args.renormalize, strict=False)
    if model_file.violations:
        for v in model_file.violations:
            print(f"violation: {v}")
        return EXIT_DATA
    p = prob_abnormal(model_file.model).p_abnormal
    print(f"model valid: k={model_file.model.k}, {len(model_file.model.transmitted)} transmitted symbols, P(E)={p:.6g}")
    return EXIT_OK


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="evcs-forensics", description="EV charging-station cyber-incident forensics.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("generate", help="write synthetic station logs and a ground-truth manifest")
    p.add_argument("--scenario", required=True, help=f"built-in ({', '.join(BUILTIN_SCENARIOS)}) or scenario file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--jitter-ms", type=int, help="bounded timing jitter in milliseconds (0 = off)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("analyze", help="ingest, clean, correlate, sequence and assess logs")
    p.add_argument("inputs", nargs="+", help="log files or directories of *.log files")
    p.add_argument("--model", help="transmission model file (default: built-in scenario-1 model)")
    p.add_argument("--renormalize", action="store_true", help="renormalise the model instead of rejecting it")
    p.add_argument("--gap-threshold", type=float, default=DEFAULT_GAP_THRESHOLD, metavar="SECONDS")
    p.add_argument("--from", dest="from_", metavar="TIMESTAMP", help="'mm-dd-yy hh:mm:ss:msec'")
    p.add_argument("--to", metavar="TIMESTAMP", help="'mm-dd-yy hh:mm:ss:msec'")
    p.add_argument("--source", nargs="+", metavar="LABEL", help="keep only these sources")
    p.add_argument("--kind", nargs="+", choices=[k.value for k in RecordKind], help="keep only these kinds")
    p.add_argument("--out", help="analysis document path (default: stdout)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("report", help="build the 5Ws & 1H report from an analysis")
    p.add_argument("--analysis", required=True)
    p.add_argument("--attributions", required=True, help="investigator attribution file, or 'scenario1'")
    p.add_argument("--vocab", help="vocabulary/layer file merged over the defaults")
    p.add_argument("--group", help="correlation id (default: first timeline with flagged records)")
    p.add_argument("--format", choices=["text", "json"], default="text")
    p.add_argument("--draft", action="store_true", help="allow undetermined attributes")
    p.add_argument("--out", help="report path (default: stdout)")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("evaluate", help="score flagged records against a ground-truth manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--analysis", required=True)
    p.add_argument("--out", help="summary path (default: stdout)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("validate-model", help="check normalisation of a transmission model file")
    p.add_argument("model")
    p.add_argument("--renormalize", action="store_true")
    p.set_defaults(func=cmd_validate_model)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(
            level=logging.INFO if args.verbose else logging.WARNING,
            format="%(levelname)s %(name)s: %(message)s",
        )
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ForensicsError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
