"""5Ws & 1H incident reports.

Who/What/Where/Why/How come from the investigator (an attribution file);
the toolkit fills in When, the evidence list and the incident verdict from
the analysed timeline.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from ._io import dump_json, load_document
from .anomaly import AnomalyAssessment
from .domain import (
    LABELLED_ATTRIBUTES,
    Attribute,
    AttributeVocabulary,
    IncidentTimestamp,
    Membership,
    MitigatorRef,
    parse_timestamp,
    validate_label,
)
from .errors import ConfigError, EmptyTimeline, MalformedTimestamp, MismatchedOrigin, MissingAttribution
from .incident import IncidentState, incident_score, is_incident
from .pipeline import EventTimeline

SCHEMA_VERSION = 1
UNDETERMINED = "undetermined"

# (question, attribute, definition) in render order
ROWS = (
    ("Who", Attribute.ATTACKER, "Attacker (α)"),
    ("", Attribute.VICTIM, "Victim (ν)"),
    ("What", Attribute.TARGET, "Attack target (τ)"),
    ("When", Attribute.DATE, "Date (δ)"),
    ("", Attribute.TIME, "Time (ι)"),
    ("Where", Attribute.ATTACK_PATH, "Attack path (ρ)"),
    ("Why", Attribute.HAZARDOUS_BEHAVIOR, "Hazardous behavior (β)"),
    ("How", Attribute.ATTACK_METHOD, "Attack method (ω)"),
)


@dataclass(frozen=True)
class Label:
    text: str
    extended: bool = False

    def __str__(self) -> str:
        return self.text + ("*" if self.extended else "")


@dataclass(frozen=True)
class EvidenceItem:
    record_index: int
    record_key: str
    annotation: str
    posterior: float | None = None


@dataclass(frozen=True)
class AnomalySummary:
    p_abnormal: float
    flagged: int
    assessed: int
    skipped: int


@dataclass(frozen=True)
class Attributions:
    """Investigator findings; any attribute may be missing (empty)."""

    attacker: tuple[str, ...] = ()
    victim: tuple[str, ...] = ()
    target: tuple[str, ...] = ()
    attack_path: tuple[str, ...] = ()
    hazardous_behavior: tuple[str, ...] = ()
    attack_method: tuple[str, ...] = ()
    timestamp: IncidentTimestamp | None = None
    mitigators: Mapping[MitigatorRef, bool] = field(default_factory=dict)

    def missing(self) -> list[str]:
        return [c.value for c in LABELLED_ATTRIBUTES if not getattr(self, c.value)]

    @classmethod
    def from_dict(cls, data: Mapping) -> Attributions:
        """Keys are the six labelled attributes (string or list), plus optional
        ``date``/``time_zone``/``time`` overrides and ``mitigators``
        (``{ref: failed|controlled}``)."""
        known = {c.value for c in LABELLED_ATTRIBUTES} | {"date", "time_zone", "time", "mitigators"}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown attribution key(s): {', '.join(unknown)}")
        values = {}
        for category in LABELLED_ATTRIBUTES:
            raw = data.get(category.value)
            if raw is None:
                values[category.value] = ()
            elif isinstance(raw, str):
                values[category.value] = (raw,)
            elif isinstance(raw, list) and all(isinstance(x, str) for x in raw):
                values[category.value] = tuple(raw)
            else:
                raise ConfigError(f"{category.value}: expected a label or list of labels")
        if len(values["attacker"]) > 1:
            raise ConfigError("attacker takes a single label")
        timestamp = None
        if any(k in data for k in ("date", "time_zone", "time")):
            try:
                timestamp = parse_timestamp(str(data["date"]), str(data["time_zone"]), str(data["time"]))
            except KeyError as exc:
                raise ConfigError(f"timestamp override needs date, time_zone and time (missing {exc})") from None
            except MalformedTimestamp as exc:
                raise ConfigError(f"timestamp override: {exc}") from None
        mitigators = {}
        for ref, outcome in (data.get("mitigators") or {}).items():
            if outcome not in ("failed", "controlled"):
                raise ConfigError(f"mitigator {ref}: outcome must be 'failed' or 'controlled'")
            mitigators[MitigatorRef.parse(str(ref))] = outcome == "failed"
        return cls(**values, timestamp=timestamp, mitigators=mitigators)


def load_attributions(path: str | Path) -> Attributions:
    data = load_document(path) or {}
    if not isinstance(data, Mapping):
        raise ConfigError(f"{path}: attribution document must be a mapping")
    return Attributions.from_dict(data)


@dataclass(frozen=True)
class IncidentReport5W1H:
    attacker: Label | None
    victim: tuple[Label, ...]
    target: tuple[Label, ...]
    timestamp: IncidentTimestamp | None
    attack_path: tuple[Label, ...]
    hazardous_behavior: tuple[Label, ...]
    attack_method: tuple[Label, ...]
    evidence: tuple[EvidenceItem, ...] = ()
    anomaly: AnomalySummary | None = None
    incident: IncidentState | None = None
    incident_score: int | None = None
    is_incident: bool | None = None
    timeline: EventTimeline | None = None

    @property
    def holes(self) -> list[str]:
        return [attribute.value for _, attribute, _ in ROWS if not self.values(attribute)]

    @property
    def finalized(self) -> bool:
        return not self.holes

    def values(self, attribute: Attribute) -> list[str]:
        """Rendered value strings of one attribute, without extension markers."""
        if attribute is Attribute.DATE:
            return [self.timestamp.date_text] if self.timestamp else []
        if attribute is Attribute.TIME:
            return [f"{self.timestamp.time_zone} {self.timestamp.time_text}"] if self.timestamp else []
        value = getattr(self, attribute.value)
        if attribute is Attribute.ATTACKER:
            return [value.text] if value else []
        return [label.text for label in value]


def _labels(category: Attribute, texts: Iterable[str], vocab: AttributeVocabulary) -> tuple[Label, ...]:
    return tuple(Label(t, validate_label(category, t, vocab) is Membership.EXTENDED) for t in texts)


def _annotation(record, posterior: float | None) -> str:
    text = (
        f"{record.source} commanded {record.commanded_state!r} "
        f"but reported {record.reported_state!r}"
    )
    if posterior is not None:
        text += f"; P(sent | received) = {posterior:.6g}"
    return text


def build_report(
    timeline: EventTimeline,
    assessment: AnomalyAssessment,
    incident: IncidentState,
    attributions: Attributions,
    vocab: AttributeVocabulary | None = None,
    *,
    draft: bool = False,
) -> IncidentReport5W1H:
    """Assemble a report; unless ``draft``, every attribute must be attributed."""
    if not timeline.records:
        raise EmptyTimeline("cannot report on an empty timeline")
    missing = attributions.missing()
    if missing and not draft:
        raise MissingAttribution(missing)
    vocab = vocab or AttributeVocabulary.default()

    evidence = []
    for flag in assessment.flagged:
        if not 0 <= flag.record_index < len(timeline.records):
            raise MismatchedOrigin(f"flagged record {flag.record_key} outside timeline")
        record = timeline.records[flag.record_index]
        if record.key != flag.record_key:
            raise MismatchedOrigin(f"flagged record {flag.record_key} does not match timeline entry {record.key}")
        evidence.append(EvidenceItem(flag.record_index, flag.record_key, _annotation(record, flag.posterior), flag.posterior))

    if attributions.timestamp is not None:
        when = attributions.timestamp
    elif evidence:
        when = timeline.records[min(e.record_index for e in evidence)].timestamp
    else:
        when = timeline.records[0].timestamp

    attacker = _labels(Attribute.ATTACKER, attributions.attacker, vocab)
    return IncidentReport5W1H(
        attacker=attacker[0] if attacker else None,
        victim=_labels(Attribute.VICTIM, attributions.victim, vocab),
        target=_labels(Attribute.TARGET, attributions.target, vocab),
        timestamp=when,
        attack_path=_labels(Attribute.ATTACK_PATH, attributions.attack_path, vocab),
        hazardous_behavior=_labels(Attribute.HAZARDOUS_BEHAVIOR, attributions.hazardous_behavior, vocab),
        attack_method=_labels(Attribute.ATTACK_METHOD, attributions.attack_method, vocab),
        evidence=tuple(evidence),
        anomaly=AnomalySummary(
            assessment.p_abnormal, len(assessment.flagged), assessment.assessed, assessment.skipped
        ),
        incident=incident,
        incident_score=incident_score(incident),
        is_incident=is_incident(incident),
        timeline=timeline,
    )


# --------------------------------------------------------------------------
# Rendering
# --------------------------------------------------------------------------


def _cell(report: IncidentReport5W1H, attribute: Attribute) -> str:
    if attribute is Attribute.DATE or attribute is Attribute.TIME:
        values = report.values(attribute)
    elif attribute is Attribute.ATTACKER:
        values = [str(report.attacker)] if report.attacker else []
    else:
        values = [str(label) for label in getattr(report, attribute.value)]
    return ", ".join(values) if values else UNDETERMINED


def render_text(report: IncidentReport5W1H) -> str:
    rows = [(q, d, _cell(report, a)) for q, a, d in ROWS]
    header = ("Attribute", "Definition", "Value")
    widths = [max(len(r[i]) for r in rows + [header]) for i in range(2)]

    def line(cols):
        return f"{cols[0]:<{widths[0]}}  {cols[1]:<{widths[1]}}  {cols[2]}".rstrip()

    out = ["5Ws & 1H incident report", ""]
    if report.timeline is not None:
        start, end = report.timeline.window
        out.append(f"Correlation: {report.timeline.correlation_id} ({start} .. {end})")
    out.append(f"Status: {'final' if report.finalized else 'draft'}")
    out.append("")
    out.append(line(header))
    out.append(line(("-" * widths[0], "-" * widths[1], "-" * 5)))
    out.extend(line(r) for r in rows)
    if any(label.extended for label in _all_labels(report)):
        out.append("* label outside the configured vocabulary")
    out.append("")
    if report.is_incident is None:
        out.append(f"Incident verdict: {UNDETERMINED}")
    else:
        verdict = "incident" if report.is_incident else "no incident"
        out.append(f"Incident verdict: {verdict} (score {report.incident_score})")
    if report.anomaly is not None:
        a = report.anomaly
        out.append(
            f"Anomaly model: P(E) = {a.p_abnormal:.6g}; {a.flagged} flagged of "
            f"{a.assessed} assessed observations, {a.skipped} skipped"
        )
    out.append(f"Evidence ({len(report.evidence)}):")
    for item in report.evidence:
        out.append(f"  [{item.record_index}] {item.record_key}: {item.annotation}")
    return "\n".join(out) + "\n"


def _all_labels(report: IncidentReport5W1H) -> list[Label]:
    labels = [report.attacker] if report.attacker else []
    for c in LABELLED_ATTRIBUTES[1:]:
        labels.extend(getattr(report, c.value))
    return labels


def report_to_dict(report: IncidentReport5W1H) -> dict:
    def labels(ls):
        return [{"label": x.text, "extended": x.extended} for x in ls]

    ts = report.timestamp
    return {
        "schema_version": SCHEMA_VERSION,
        "finalized": report.finalized,
        "attacker": {"label": report.attacker.text, "extended": report.attacker.extended}
        if report.attacker
        else None,
        "victim": labels(report.victim),
        "target": labels(report.target),
        "date": ts.date_text if ts else None,
        "time_zone": ts.time_zone if ts else None,
        "time": ts.time_text if ts else None,
        "attack_path": labels(report.attack_path),
        "hazardous_behavior": labels(report.hazardous_behavior),
        "attack_method": labels(report.attack_method),
        "evidence": [
            {
                "record_index": e.record_index,
                "record_key": e.record_key,
                "annotation": e.annotation,
                "posterior": e.posterior,
            }
            for e in report.evidence
        ],
        "anomaly": None
        if report.anomaly is None
        else {
            "p_abnormal": report.anomaly.p_abnormal,
            "flagged": report.anomaly.flagged,
            "assessed": report.anomaly.assessed,
            "skipped": report.anomaly.skipped,
        },
        "incident": None
        if report.incident is None
        else {
            **report.incident.to_dict(),
            "score": report.incident_score,
            "is_incident": report.is_incident,
        },
        "timeline": report.timeline.to_dict() if report.timeline is not None else None,
    }


def report_from_dict(d: Mapping) -> IncidentReport5W1H:
    if d.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"unsupported report schema_version {d.get('schema_version')!r}")

    def labels(ls):
        return tuple(Label(x["label"], x["extended"]) for x in ls)

    ts = None
    if d.get("date") is not None:
        ts = parse_timestamp(d["date"], d["time_zone"], d["time"])
    inc = d.get("incident")
    an = d.get("anomaly")
    return IncidentReport5W1H(
        attacker=Label(d["attacker"]["label"], d["attacker"]["extended"]) if d.get("attacker") else None,
        victim=labels(d["victim"]),
        target=labels(d["target"]),
        timestamp=ts,
        attack_path=labels(d["attack_path"]),
        hazardous_behavior=labels(d["hazardous_behavior"]),
        attack_method=labels(d["attack_method"]),
        evidence=tuple(
            EvidenceItem(e["record_index"], e["record_key"], e["annotation"], e.get("posterior"))
            for e in d["evidence"]
        ),
        anomaly=AnomalySummary(an["p_abnormal"], an["flagged"], an["assessed"], an["skipped"]) if an else None,
        incident=IncidentState.from_dict(inc) if inc else None,
        incident_score=inc["score"] if inc else None,
        is_incident=inc["is_incident"] if inc else None,
        timeline=EventTimeline.from_dict(d["timeline"]) if d.get("timeline") else None,
    )


def render_report(report: IncidentReport5W1H, format: str = "text") -> str:
    """``text`` mirrors the investigation sheet; ``json`` is the structured document."""
    if format in ("text", "human-text"):
        return render_text(report)
    if format in ("json", "structured"):
        return dump_json(report_to_dict(report))
    raise ValueError(f"unknown report format {format!r}")


def parse_report(text: str) -> IncidentReport5W1H:
    return report_from_dict(json.loads(text))
