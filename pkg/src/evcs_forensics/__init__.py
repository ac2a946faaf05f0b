"""Post-incident forensic analysis for EV charging-station cyber events."""

__version__ = "0.1.0"

from .anomaly import (
    AnomalyAssessment,
    ObservationMapping,
    RxSymbol,
    TransmissionModel,
    TxSymbol,
    Verdict,
    assess_timeline,
    bayes_posterior,
    classify,
    prob_abnormal,
    prob_abnormal_given,
    validate_model,
)
from .domain import (
    AttributeVocabulary,
    EntityRef,
    IncidentTimestamp,
    LayerHierarchy,
    MitigatorRef,
    parse_timestamp,
    validate_label,
)
from .incident import IncidentState, incident_score, is_incident, set_attack_flag
from .pipeline import EventTimeline, FilterSpec, LogRecord, correlate, ingest, preprocess, sequence
from .report import IncidentReport5W1H, build_report, parse_report, render_report
from .scenario import Scenario, builtin_scenario_1, evaluate_detection, generate

__all__ = [name for name in dir() if not name.startswith("_")]
