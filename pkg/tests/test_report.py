import datetime as dt
import string

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evcs_forensics.anomaly import AnomalyAssessment, assess_timeline, load_model_file
from evcs_forensics.domain import AttributeVocabulary, EntityRef, IncidentTimestamp, MitigatorRef
from evcs_forensics.errors import EmptyTimeline, MissingAttribution
from evcs_forensics.incident import IncidentState
from evcs_forensics.pipeline import EventTimeline, correlate, sequence
from evcs_forensics.report import (
    UNDETERMINED,
    Attributions,
    EvidenceItem,
    IncidentReport5W1H,
    Label,
    build_report,
    load_attributions,
    parse_report,
    render_report,
)
from evcs_forensics.scenario import builtin_scenario_1, generate
from conftest import SCENARIOS


def _analysis(scenario):
    records, _ = generate(scenario)
    timeline = sequence(correlate(records)[0])
    mf = load_model_file(SCENARIOS / "scenario1.model.json")
    return timeline, assess_timeline(mf.model, timeline, mf.mapping)


def _incident(assessment):
    attacked = {f.source for f in assessment.flagged}
    return IncidentState.from_flags(
        {EntityRef("S", 1): "BMS" in attacked, EntityRef("G", 1): "CB" in attacked},
        {MitigatorRef("C", 1): True},
    )


@pytest.fixture(scope="module")
def attributions():
    return load_attributions(SCENARIOS / "scenario1.attributions.yaml")


def test_scenario1_report(attributions):
    timeline, assessment = _analysis(builtin_scenario_1())
    report = build_report(timeline, assessment, _incident(assessment), attributions)
    assert report.attacker == Label("hacker", False)
    assert report.victim == (Label("EVCS", True),)
    assert [x.text for x in report.target] == ["BMS", "CBs"]
    assert (report.timestamp.date_text, report.timestamp.time_zone, report.timestamp.time_text) == (
        "05-16-22",
        "EST",
        "02:20:40:47",
    )
    assert [x.text for x in report.attack_path] == ["OTA update"]
    assert [x.text for x in report.hazardous_behavior] == ["false reporting", "flawed status"]
    assert [x.text for x in report.attack_method] == ["tampering"]
    assert report.is_incident and report.finalized
    # evidence closure: each flagged record exactly once, resolvable in the timeline
    assert [e.record_key for e in report.evidence] == [f.record_key for f in assessment.flagged]
    for e in report.evidence:
        assert timeline.records[e.record_index].key == e.record_key


def test_clean_report(attributions):
    timeline, assessment = _analysis(builtin_scenario_1().without_injections())
    report = build_report(timeline, assessment, _incident(assessment), attributions)
    assert report.evidence == ()
    assert report.is_incident is False
    assert report.timestamp == timeline.records[0].timestamp


def test_missing_attack_method(attributions):
    timeline, assessment = _analysis(builtin_scenario_1())
    partial = Attributions(**{**attributions.__dict__, "attack_method": ()})
    with pytest.raises(MissingAttribution) as info:
        build_report(timeline, assessment, _incident(assessment), partial)
    assert info.value.missing == ("attack_method",)


def test_empty_timeline(attributions):
    empty = EventTimeline((), (None, None), "EVT-0")
    with pytest.raises(EmptyTimeline):
        build_report(empty, AnomalyAssessment(0.0, {}), IncidentState.from_vectors([0], [0]), attributions)


def test_timestamp_override(attributions):
    timeline, assessment = _analysis(builtin_scenario_1())
    override = IncidentTimestamp(timeline.records[0].timestamp.date, "UTC", 7, 0, 0, 0)
    report = build_report(
        timeline, assessment, _incident(assessment), Attributions(**{**attributions.__dict__, "timestamp": override})
    )
    assert report.timestamp == override


def test_text_row_order(attributions):
    timeline, assessment = _analysis(builtin_scenario_1())
    text = render_report(build_report(timeline, assessment, _incident(assessment), attributions), "text")
    questions = [line.split()[0] for line in text.splitlines() if line.split() and line.split()[0] in
                 ("Who", "What", "When", "Where", "Why", "How")]
    assert questions == ["Who", "What", "When", "Where", "Why", "How"]
    assert "EST 02:20:40:47" in text and "false reporting*, flawed status*" in text


def test_draft_renders_undetermined(attributions):
    timeline, assessment = _analysis(builtin_scenario_1())
    partial = Attributions(**{**attributions.__dict__, "hazardous_behavior": ()})
    report = build_report(timeline, assessment, _incident(assessment), partial, draft=True)
    assert not report.finalized and report.holes == ["hazardous_behavior"]
    why = next(line for line in render_report(report).splitlines() if line.startswith("Why"))
    assert why.endswith(UNDETERMINED)
    assert parse_report(render_report(report, "json")) == report


def test_render_deterministic(attributions):
    timeline, assessment = _analysis(builtin_scenario_1())
    a = build_report(timeline, assessment, _incident(assessment), attributions)
    b = build_report(*_analysis(builtin_scenario_1()), _incident(assessment), attributions)
    for fmt in ("text", "json"):
        assert render_report(a, fmt) == render_report(b, fmt)


def test_extended_labels_follow_vocabulary(attributions):
    timeline, assessment = _analysis(builtin_scenario_1())
    vocab = AttributeVocabulary.default().merged({"victim": ["EVCS"]})
    report = build_report(timeline, assessment, _incident(assessment), attributions, vocab)
    assert report.victim == (Label("EVCS", False),)


_text = st.text(alphabet=string.ascii_letters + string.digits + " -_'", min_size=1, max_size=12)
_labels = st.lists(st.builds(Label, _text, st.booleans()), max_size=3).map(tuple)


@st.composite
def reports(draw):
    ts = draw(
        st.none()
        | st.builds(
            IncidentTimestamp,
            st.dates(min_value=dt.date(2000, 1, 1), max_value=dt.date(2099, 12, 31)),
            st.sampled_from(["EST", "UTC"]),
            st.integers(0, 23),
            st.integers(0, 59),
            st.integers(0, 59),
            st.integers(0, 999),
        )
    )
    zeta = draw(st.lists(st.integers(0, 1), min_size=1, max_size=4))
    chi = draw(st.lists(st.integers(0, 1), min_size=1, max_size=3))
    incident = draw(st.none() | st.just(IncidentState.from_vectors(zeta, chi)))
    return IncidentReport5W1H(
        attacker=draw(st.none() | st.builds(Label, _text, st.booleans())),
        victim=draw(_labels),
        target=draw(_labels),
        timestamp=ts,
        attack_path=draw(_labels),
        hazardous_behavior=draw(_labels),
        attack_method=draw(_labels),
        evidence=tuple(
            draw(st.lists(st.builds(EvidenceItem, st.integers(0, 50), _text, _text, st.none() | st.floats(0, 1)), max_size=3))
        ),
        incident=incident,
        incident_score=None if incident is None else sum(zeta) * sum(chi),
        is_incident=None if incident is None else sum(zeta) * sum(chi) >= 1,
    )


@settings(max_examples=100, deadline=None)
@given(reports())
def test_structured_roundtrip(report):
    assert parse_report(render_report(report, "json")) == report


def test_structured_roundtrip_with_timeline(attributions):
    timeline, assessment = _analysis(builtin_scenario_1())
    report = build_report(timeline, assessment, _incident(assessment), attributions)
    doc = render_report(report, "json")
    assert parse_report(doc) == report
    assert '"schema_version": 1' in doc
