import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evcs_forensics.anomaly import (
    ObservationMapping,
    RxSymbol,
    SourceMapping,
    TransmissionModel,
    TxSymbol,
    Verdict,
    assess_timeline,
    bayes_posterior,
    classify,
    identity_channel,
    load_model_file,
    marginal,
    prob_abnormal,
    prob_abnormal_given,
    random_model,
    symmetric_channel,
    validate_model,
)
from evcs_forensics.domain import parse_timestamp
from evcs_forensics.errors import EmptyTimeline, IndexOutOfRange, InvalidModel, ZeroMarginal
from evcs_forensics.pipeline import EventTimeline, LogRecord, RecordKind, sequence
from oracles import p_abnormal_joint, posterior_joint


def _plain(model):
    tx = [(s.entity, s.channel) for s in model.transmitted]
    rx = [(s.channel, s.operation) for s in model.received]
    return tx, rx, model.priors.tolist(), model.likelihood.tolist()


# -- validation ------------------------------------------------------------


def test_identity_uniform_is_valid():
    assert validate_model(identity_channel(3)) == []


def test_priors_summing_to_point_nine():
    model = TransmissionModel.build(2, identity_channel(2, entities=1).likelihood, [0.4, 0.5], entities=1)
    report = validate_model(model)
    assert len(report) == 1
    assert report[0].scope == "priors sum"
    assert report[0].residual == pytest.approx(0.1, abs=1e-12)


def test_bad_row_and_range_reported():
    lik = np.array(identity_channel(2, entities=1).likelihood)
    lik[1, 3] = 1.2
    report = validate_model(TransmissionModel.build(2, lik, entities=1))
    scopes = [v.scope for v in report]
    assert any("outside [0,1]" in s for s in scopes)
    assert "likelihood row A[1,2] sum" in scopes


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_random_models_valid(k):
    rng = np.random.default_rng(k)
    for _ in range(20):
        model = random_model(k, rng, zero_fraction=0.3)
        assert validate_model(model) == []
        # oracle: re-sum every row independently
        assert abs(sum(model.priors.tolist()) - 1) <= 1e-9
        for row in model.likelihood.tolist():
            assert abs(sum(row) - 1) <= 1e-9


def test_construction_rejects_bad_shapes():
    with pytest.raises(InvalidModel):
        TransmissionModel.build(2, [[1.0, 0.0]], entities=1)
    with pytest.raises(IndexOutOfRange):
        TransmissionModel(2, (TxSymbol(1, 3),), (RxSymbol(1, 1),), [1.0], [[1.0]])


def test_operations_reject_invalid_model():
    model = TransmissionModel.build(2, identity_channel(2, entities=1).likelihood, [0.4, 0.5], entities=1)
    with pytest.raises(InvalidModel):
        prob_abnormal(model)
    with pytest.raises(InvalidModel):
        prob_abnormal_given(model, TxSymbol(1, 1))
    with pytest.raises(InvalidModel):
        bayes_posterior(model, RxSymbol(1, 1))


# -- classification --------------------------------------------------------


def test_classify():
    assert classify(TxSymbol(1, 1), RxSymbol(1, 1)) is Verdict.NORMAL
    assert classify(TxSymbol(1, 1), RxSymbol(1, 2)) is Verdict.ABNORMAL
    with pytest.raises(IndexOutOfRange):
        classify(TxSymbol(1, 1), RxSymbol(1, 7), k=3)


# -- abnormality -----------------------------------------------------------


def test_identity_channel_has_no_mismatch():
    model = identity_channel(3)
    assert all(prob_abnormal_given(model, s) == 0.0 for s in model.transmitted)
    assert prob_abnormal(model).p_abnormal == 0.0


def test_symmetric_flip():
    model = symmetric_channel(2, 0.1, entities=1)
    assert prob_abnormal_given(model, TxSymbol(1, 1)) == pytest.approx(0.1, abs=1e-15)
    # frozen from oracles.p_abnormal_joint on the same table
    assert prob_abnormal(model).p_abnormal == pytest.approx(0.1, abs=1e-12)
    assert p_abnormal_joint(*_plain(model)) == pytest.approx(0.1, abs=1e-12)


def test_off_diagonal_row_sum():
    lik = np.array(identity_channel(3, entities=1).likelihood)
    # A[1,1] -> B[1,1] .93, B[1,2] .05, B[1,3] .02
    lik[0, :3] = [0.93, 0.05, 0.02]
    model = TransmissionModel.build(3, lik, entities=1)
    assert prob_abnormal_given(model, TxSymbol(1, 1)) == pytest.approx(0.07, abs=1e-15)


def test_degenerate_alphabet():
    assert prob_abnormal(identity_channel(1)).p_abnormal == 0.0


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2**32 - 1), st.floats(0.0, 0.6))
def test_total_probability_and_complement(k, seed, sparsity):
    model = random_model(k, np.random.default_rng(seed), zero_fraction=sparsity)
    assessment = prob_abnormal(model)
    expansion = sum(model.prior(s) * prob_abnormal_given(model, s) for s in model.transmitted)
    assert abs(assessment.p_abnormal - expansion) <= 1e-12
    assert abs(assessment.p_abnormal - p_abnormal_joint(*_plain(model))) <= 1e-12
    match = sum(
        model.prior(a) * model.prob(b, a)
        for a in model.transmitted
        for b in model.received
        if b.operation == a.channel
    )
    assert abs(assessment.p_abnormal + match - 1.0) <= 1e-12


# -- Bayes inversion -------------------------------------------------------


def test_noiseless_inversion():
    model = identity_channel(3, entities=1)
    post = bayes_posterior(model, RxSymbol(1, 1))
    assert post[TxSymbol(1, 1)] == 1.0
    assert sum(post.values()) == 1.0


def test_posterior_worked_example():
    tx = (TxSymbol(1, 1), TxSymbol(1, 2))
    rx = (RxSymbol(1, 1), RxSymbol(1, 2))
    model = TransmissionModel(2, tx, rx, [0.5, 0.5], [[0.88, 0.12], [0.1, 0.9]])
    post = bayes_posterior(model, RxSymbol(1, 2))
    # 0.12*0.5 / (0.12*0.5 + 0.9*0.5), confirmed by oracles.posterior_joint
    assert post[TxSymbol(1, 1)] == pytest.approx(0.11764705882352941, abs=1e-15)
    oracle = posterior_joint([(1, 1), (1, 2)], [(1, 1), (1, 2)], [0.5, 0.5], [[0.88, 0.12], [0.1, 0.9]], (1, 2))
    assert post[TxSymbol(1, 1)] == pytest.approx(oracle[(1, 1)], abs=1e-15)


def test_zero_marginal():
    with pytest.raises(ZeroMarginal):
        bayes_posterior(identity_channel(2, entities=1), RxSymbol(1, 2))


def test_zero_prior_excluded_from_support():
    model = symmetric_channel(2, 0.2, entities=1, priors=[1.0, 0.0])
    post = bayes_posterior(model, RxSymbol(1, 2))
    assert set(post) == {TxSymbol(1, 1)}
    assert set(prob_abnormal(model).per_symbol) == {TxSymbol(1, 1)}


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_bayes_identity(k, seed):
    model = random_model(k, np.random.default_rng(seed))
    for b in model.received:
        post = bayes_posterior(model, b)
        m = marginal(model, b)
        assert abs(sum(post.values()) - 1.0) <= 1e-12
        for a in model.transmitted:
            assert abs(model.prob(b, a) * model.prior(a) - post[a] * m) <= 1e-12
            # read the other way: P(B|A) = P(A|B) P(B) / P(A)
            assert abs(post[a] * m / model.prior(a) - model.prob(b, a)) <= 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2**32 - 1), st.floats(0.01, 100.0))
def test_prior_scaling_invariance(k, seed, scale):
    model = random_model(k, np.random.default_rng(seed))
    scaled = TransmissionModel(k, model.transmitted, model.received, model.priors * scale, model.likelihood)
    renorm = scaled.renormalized()
    for a in model.transmitted:
        assert abs(prob_abnormal_given(renorm, a) - prob_abnormal_given(model, a)) <= 1e-12
    for b in model.received:
        p1, p2 = bayes_posterior(model, b), bayes_posterior(renorm, b)
        assert all(abs(p1[a] - p2[a]) <= 1e-12 for a in p1)


# -- timelines -------------------------------------------------------------


def _rec(source, second, commanded, reported, seq, kind=RecordKind.STATUS_REPORT):
    ts = parse_timestamp("05-16-22", "EST", f"02:20:{second:02d}:00")
    return LogRecord(source, ts, kind, commanded, reported, "", seq)


@pytest.fixture
def mapping():
    return ObservationMapping(
        {
            "BMS": SourceMapping(1, {"charging": 1, "discharging": 2}),
            "CB": SourceMapping(2, {"closed": 1, "open": 2}),
        }
    )


def test_assess_mixed_timeline(mapping):
    model = symmetric_channel(2, 0.02, entities=2)
    timeline = sequence(
        [
            _rec("BMS", 1, "charging", "charging", 1),
            _rec("CB", 2, "open", "closed", 2),
            _rec("CB", 3, "open", "ajar", 3),  # unknown label -> skipped
            _rec("FEEDER", 4, None, None, 4, RecordKind.PROTOCOL_MESSAGE),  # not an observation
            _rec("BMS", 5, "discharging", "charging", 5),
        ]
    )
    a = assess_timeline(model, timeline, mapping)
    assert a.assessed == 3 and a.skipped == 1
    assert [f.record_index for f in a.flagged] == [1, 4]
    assert a.flagged[0].transmitted == TxSymbol(2, 2) and a.flagged[0].received == RxSymbol(2, 1)
    expected = bayes_posterior(model, RxSymbol(2, 1))[TxSymbol(2, 2)]
    assert a.flagged[0].posterior == expected
    assert a.p_abnormal == prob_abnormal(model).p_abnormal


def test_assess_clean_timeline(mapping):
    timeline = sequence([_rec("BMS", 1, "charging", "charging", 1), _rec("CB", 2, "open", "open", 2)])
    assert assess_timeline(symmetric_channel(2, 0.02, entities=2), timeline, mapping).flagged == ()


def test_assess_empty_timeline(mapping):
    empty = EventTimeline((), (None, None), "EVT-x")
    with pytest.raises(EmptyTimeline):
        assess_timeline(identity_channel(2), empty, mapping)


def test_assessment_dict_roundtrip(mapping):
    model = symmetric_channel(2, 0.02, entities=2)
    timeline = sequence([_rec("CB", 2, "open", "closed", 2)])
    a = assess_timeline(model, timeline, mapping)
    assert type(a).from_dict(json.loads(json.dumps(a.to_dict()))) == a


# -- model file ------------------------------------------------------------


def test_model_file(tmp_path):
    path = tmp_path / "m.json"
    path.write_text(json.dumps({"k": 2, "entities": 1, "priors": [0.4, 0.5], "likelihood": identity_channel(2, entities=1).likelihood.tolist()}))
    with pytest.raises(InvalidModel, match="priors sum"):
        load_model_file(path)
    fixed = load_model_file(path, renormalize=True)
    assert validate_model(fixed.model) == []
    assert fixed.model.priors.tolist() == pytest.approx([4 / 9, 5 / 9])
    assert len(load_model_file(path, strict=False).violations) == 1


def test_builtin_model_file():
    from conftest import SCENARIOS

    mf = load_model_file(SCENARIOS / "scenario1.model.json")
    assert mf.mapping is not None and set(mf.mapping.sources) == {"BMS", "CB"}
    assert prob_abnormal(mf.model).p_abnormal == pytest.approx(0.02, abs=1e-12)
