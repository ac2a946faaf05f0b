"""Deterministic synthetic station logs with scripted attack injections."""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping

from ._io import dump_json, load_document
from .anomaly import AnomalyAssessment
from .domain import IncidentTimestamp, parse_timestamp
from .errors import ConfigError, InvalidScenario, MalformedTimestamp, MismatchedOrigin
from .pipeline import LOG_SUFFIX, LogRecord, RecordKind

MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True)
class ScriptStep:
    offset: float  # seconds after the scenario base timestamp
    source: str
    kind: RecordKind
    commanded_state: str | None = None
    true_state: str | None = None
    payload: str = ""


@dataclass(frozen=True)
class AttackInjection:
    target: str
    method: str
    effect: Mapping[str, str]
    active_window: tuple[float, float]
    ground_truth_tag: str
    path: str | None = None

    def falsify(self, offset: float, state: str | None) -> str | None:
        """The falsified report for ``state`` at ``offset``, or None if untouched."""
        start, end = self.active_window
        if state is None or not start <= offset <= end:
            return None
        forged = self.effect.get(state)
        return forged if forged is not None and forged != state else None


@dataclass(frozen=True)
class Scenario:
    name: str
    base_timestamp: IncidentTimestamp
    script: tuple[ScriptStep, ...]
    injections: tuple[AttackInjection, ...] = ()
    seed: int = 0
    jitter_ms: int = 0  # 0 disables timing jitter

    def __post_init__(self):
        object.__setattr__(self, "script", tuple(self.script))
        object.__setattr__(self, "injections", tuple(self.injections))
        self.validate()

    def validate(self) -> None:
        def fail(msg):
            raise InvalidScenario(f"scenario {self.name!r}: {msg}")

        if not self.name:
            fail("name is empty")
        if not self.script:
            fail("script is empty")
        if self.jitter_ms < 0:
            fail("jitter_ms must be non-negative")
        for i, step in enumerate(self.script, 1):
            if step.offset < 0:
                fail(f"step {i} has negative offset {step.offset}")
            if not step.source or "|" in step.source:
                fail(f"step {i} has invalid source {step.source!r}")
            if step.kind is RecordKind.COMMAND and step.commanded_state is None:
                fail(f"step {i} is a command without commanded_state")
            if step.kind is RecordKind.STATUS_REPORT and step.true_state is None:
                fail(f"step {i} is a status report without true_state")
        sources = {s.source for s in self.script}
        tags = set()
        for inj in self.injections:
            if inj.target not in sources:
                fail(f"injection {inj.ground_truth_tag!r} targets unknown source {inj.target!r}")
            start, end = inj.active_window
            if start > end:
                fail(f"injection {inj.ground_truth_tag!r} window {inj.active_window} is not ordered")
            if all(k == v for k, v in inj.effect.items()):
                fail(f"injection {inj.ground_truth_tag!r} effect is the identity")
            if inj.ground_truth_tag in tags:
                fail(f"duplicate ground-truth tag {inj.ground_truth_tag!r}")
            tags.add(inj.ground_truth_tag)

    def without_injections(self) -> Scenario:
        return replace(self, name=f"{self.name}-control", injections=())


# --------------------------------------------------------------------------
# Generation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FalsifiedRecord:
    tag: str
    record_key: str
    source: str
    true_state: str
    reported_state: str
    method: str


@dataclass(frozen=True)
class Manifest:
    scenario: str
    seed: int
    records: tuple[str, ...]
    falsified: tuple[FalsifiedRecord, ...] = ()

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "record_count": len(self.records),
            "records": list(self.records),
            "falsified": [
                {
                    "tag": f.tag,
                    "record_key": f.record_key,
                    "source": f.source,
                    "true_state": f.true_state,
                    "reported_state": f.reported_state,
                    "method": f.method,
                }
                for f in self.falsified
            ],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> Manifest:
        try:
            return cls(
                d["scenario"],
                d["seed"],
                tuple(d["records"]),
                tuple(FalsifiedRecord(**f) for f in d["falsified"]),
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed manifest ({exc})") from None


def _step_times_ms(scenario: Scenario) -> list[int]:
    base = [round(step.offset * 1000) for step in scenario.script]
    if not scenario.jitter_ms:
        return base
    rng = random.Random(scenario.seed)
    out: list[int] = []
    for i, t in enumerate(base):
        t += rng.randint(0, scenario.jitter_ms)
        # jitter never moves a step before one scripted at or before it
        if i and base[i] >= base[i - 1]:
            t = max(t, out[-1])
        out.append(t)
    return out


def generate(scenario: Scenario) -> tuple[list[LogRecord], Manifest]:
    """One record per scripted step; status reports inside an active window are falsified."""
    scenario.validate()
    records: list[LogRecord] = []
    falsified: list[FalsifiedRecord] = []
    for seq, (step, t_ms) in enumerate(zip(scenario.script, _step_times_ms(scenario)), 1):
        reported = step.true_state
        hit = None
        for inj in scenario.injections:
            if inj.target != step.source:
                continue
            forged = inj.falsify(step.offset, reported)
            if forged is not None:
                reported, hit = forged, inj
        record = LogRecord(
            step.source,
            scenario.base_timestamp.shifted(t_ms),
            step.kind,
            step.commanded_state,
            reported,
            step.payload,
            seq,
        )
        records.append(record)
        if hit is not None:
            falsified.append(
                FalsifiedRecord(hit.ground_truth_tag, record.key, step.source, step.true_state, reported, hit.method)
            )
    manifest = Manifest(scenario.name, scenario.seed, tuple(r.key for r in records), tuple(falsified))
    return records, manifest


def _file_stem(source: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", "_", source)


def write_logs(out_dir: str | Path, records: Iterable[LogRecord], manifest: Manifest) -> list[Path]:
    """One ``<source>.log`` per device plus the manifest sidecar."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    by_source: dict[str, list[LogRecord]] = {}
    for record in records:
        by_source.setdefault(record.source, []).append(record)
    written = []
    for source in sorted(by_source):
        path = out_dir / f"{_file_stem(source)}{LOG_SUFFIX}"
        lines = [f"# scenario: {manifest.scenario}  source: {source}"]
        lines += [r.to_line() for r in by_source[source]]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        written.append(path)
    manifest_path = out_dir / MANIFEST_NAME
    manifest_path.write_text(dump_json(manifest.to_dict()), encoding="utf-8")
    written.append(manifest_path)
    return written


def load_manifest(path: str | Path) -> Manifest:
    return Manifest.from_dict(load_document(path))


# --------------------------------------------------------------------------
# Detection scoring
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ConfusionSummary:
    true_positives: int
    false_positives: int
    false_negatives: int
    precision: float
    recall: float

    def to_dict(self) -> dict:
        return {
            "true_positives": self.true_positives,
            "false_positives": self.false_positives,
            "false_negatives": self.false_negatives,
            "precision": self.precision,
            "recall": self.recall,
        }


def evaluate_detection(manifest: Manifest, assessments: AnomalyAssessment | Iterable[AnomalyAssessment]) -> ConfusionSummary:
    """Compare flagged records with the ground truth; empty ratios count as 1."""
    if isinstance(assessments, AnomalyAssessment):
        assessments = [assessments]
    emitted = set(manifest.records)
    flagged = set()
    for assessment in assessments:
        for f in assessment.flagged:
            if f.record_key not in emitted:
                raise MismatchedOrigin(f"flagged record {f.record_key} was not generated by {manifest.scenario!r}")
            flagged.add(f.record_key)
    truth = {f.record_key for f in manifest.falsified}
    tp, fp, fn = len(flagged & truth), len(flagged - truth), len(truth - flagged)
    precision = tp / (tp + fp) if tp + fp else 1.0
    recall = tp / (tp + fn) if tp + fn else 1.0
    return ConfusionSummary(tp, fp, fn, precision, recall)


# --------------------------------------------------------------------------
# Scenario files and built-ins
# --------------------------------------------------------------------------


def scenario_to_dict(scenario: Scenario) -> dict:
    def step(s: ScriptStep) -> dict:
        d = {"offset": s.offset, "source": s.source, "kind": s.kind.value}
        if s.commanded_state is not None:
            d["commanded_state"] = s.commanded_state
        if s.true_state is not None:
            d["true_state"] = s.true_state
        if s.payload:
            d["payload"] = s.payload
        return d

    def injection(i: AttackInjection) -> dict:
        d = {
            "target": i.target,
            "method": i.method,
            "effect": dict(i.effect),
            "active_window": list(i.active_window),
            "ground_truth_tag": i.ground_truth_tag,
        }
        if i.path is not None:
            d["path"] = i.path
        return d

    date, tz, time = scenario.base_timestamp.format()
    return {
        "name": scenario.name,
        "seed": scenario.seed,
        "jitter_ms": scenario.jitter_ms,
        "base_timestamp": {"date": date, "time_zone": tz, "time": time},
        "script": [step(s) for s in scenario.script],
        "injections": [injection(i) for i in scenario.injections],
    }


def scenario_from_dict(d: Mapping) -> Scenario:
    try:
        base = d["base_timestamp"]
        return Scenario(
            name=d["name"],
            base_timestamp=parse_timestamp(base["date"], base["time_zone"], base["time"]),
            script=tuple(
                ScriptStep(
                    s["offset"],
                    s["source"],
                    RecordKind(s["kind"]),
                    s.get("commanded_state"),
                    s.get("true_state"),
                    s.get("payload", ""),
                )
                for s in d["script"]
            ),
            injections=tuple(
                AttackInjection(
                    i["target"],
                    i["method"],
                    dict(i["effect"]),
                    tuple(i["active_window"]),
                    i["ground_truth_tag"],
                    i.get("path"),
                )
                for i in d.get("injections", ())
            ),
            seed=d.get("seed", 0),
            jitter_ms=d.get("jitter_ms", 0),
        )
    except (KeyError, TypeError, ValueError, MalformedTimestamp) as exc:
        raise InvalidScenario(f"malformed scenario document ({exc})") from None


def builtin_scenario_1() -> Scenario:
    """BMS/PCC-breaker case study with OTA tampering of both status reports.

    Steps are one second apart. CB is commanded before the BMS. The base
    timestamp is chosen so the first falsified report (CB) lands on
    05-16-22 EST 02:20:40:47.
    """
    S = ScriptStep
    script = (
        S(0, "BMS", RecordKind.STATUS_REPORT, "charging", "charging", "operating mode report; power drawn from utility"),
        S(1, "CB", RecordKind.STATUS_REPORT, "closed", "closed", "PCC breaker status report"),
        S(2, "FEEDER", RecordKind.PROTOCOL_MESSAGE, payload="external fault on distribution feeder line"),
        S(3, "PCC-RELAY", RecordKind.PROTOCOL_MESSAGE, payload="overcurrent protection trips PCC breaker"),
        S(4, "CB", RecordKind.COMMAND, "open", payload="EVCS operator: open PCC breaker"),
        S(5, "BMS", RecordKind.COMMAND, "discharging", payload="EVCS operator: switch BMS to discharging mode"),
        S(6, "CB", RecordKind.STATUS_REPORT, "open", "open", "PCC breaker status report"),
        S(7, "BMS", RecordKind.STATUS_REPORT, "discharging", "discharging", "operating mode report; charging schedule"),
    )
    injections = (
        AttackInjection("CB", "tampering", {"open": "closed"}, (6, 7), "scenario1-cb-status", "OTA update"),
        AttackInjection("BMS", "tampering", {"discharging": "charging"}, (6, 7), "scenario1-bms-mode", "OTA update"),
    )
    base = parse_timestamp("05-16-22", "EST", "02:20:34:47")
    return Scenario("scenario1", base, script, injections)


BUILTIN_SCENARIOS = {
    "scenario1": builtin_scenario_1,
    "scenario1-control": lambda: builtin_scenario_1().without_injections(),
}


def load_scenario(name_or_path: str | Path) -> Scenario:
    """A built-in scenario name or a path to a scenario document."""
    factory = BUILTIN_SCENARIOS.get(str(name_or_path))
    if factory is not None:
        return factory()
    path = Path(name_or_path)
    if not path.exists():
        raise InvalidScenario(
            f"unknown scenario {str(name_or_path)!r}; built-ins: {', '.join(BUILTIN_SCENARIOS)}"
        )
    data = load_document(path)
    if not isinstance(data, Mapping):
        raise InvalidScenario(f"{path}: scenario document must be a mapping")
    return scenario_from_dict(data)
