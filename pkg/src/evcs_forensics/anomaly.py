"""Stochastic M-ary transmission model for abnormal-behaviour scoring.

Index conventions
-----------------
A transmitted symbol ``A[e,c]`` is sent by entity ``e`` of the transmit
layer and is meant for channel/component state ``c``. A received symbol
``B[c,o]`` is what the receive layer observed: channel ``c`` realised as
operation ``o``. Delivery is *normal* when ``o`` equals the transmitted
``c`` and *abnormal* otherwise.

The model holds a prior over transmitted symbols and a row-stochastic
likelihood matrix ``P(B | A)`` (rows = transmitted, columns = received).
From these it computes

* ``P(E | A)``  - mismatch mass of one row,
* ``P(E)``      - total probability over the prior,
* ``P(A | B)``  - Bayes inversion from likelihood and prior.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from ._io import load_document
from .domain import EntityRef
from .errors import ConfigError, EmptyTimeline, IndexOutOfRange, InvalidModel, ZeroMarginal
from .pipeline import EventTimeline, LogRecord

DEFAULT_TOLERANCE = 1e-9


@dataclass(frozen=True, order=True)
class TxSymbol:
    """Transmitted symbol A[e,c]."""

    entity: int
    channel: int

    def __str__(self) -> str:
        return f"A[{self.entity},{self.channel}]"


@dataclass(frozen=True, order=True)
class RxSymbol:
    """Received symbol B[c,o]."""

    channel: int
    operation: int

    def __str__(self) -> str:
        return f"B[{self.channel},{self.operation}]"


class Verdict(str, Enum):
    NORMAL = "normal"
    ABNORMAL = "abnormal"


def _check_bounds(values: Iterable[int], k: int | None, what: str) -> None:
    for v in values:
        if not isinstance(v, (int, np.integer)) or v < 1 or (k is not None and v > k):
            bound = f"1..{k}" if k is not None else ">= 1"
            raise IndexOutOfRange(f"{what} index {v!r} outside {bound}")


def classify(transmitted: TxSymbol, received: RxSymbol, k: int | None = None) -> Verdict:
    """Normal iff the realised operation equals the intended channel."""
    _check_bounds((transmitted.entity, transmitted.channel), k, str(transmitted))
    _check_bounds((received.channel, received.operation), k, str(received))
    return Verdict.NORMAL if received.operation == transmitted.channel else Verdict.ABNORMAL


def standard_alphabet(k: int, entities: int | None = None) -> tuple[tuple[TxSymbol, ...], tuple[RxSymbol, ...]]:
    """All A[e,c] for e <= entities (default k), c <= k, and all B[c,o] for c, o <= k."""
    entities = k if entities is None else entities
    tx = tuple(TxSymbol(e, c) for e in range(1, entities + 1) for c in range(1, k + 1))
    rx = tuple(RxSymbol(c, o) for c in range(1, k + 1) for o in range(1, k + 1))
    return tx, rx


@dataclass(frozen=True)
class Violation:
    scope: str
    residual: float

    def __str__(self) -> str:
        return f"{self.scope}: residual {self.residual:.3g}"


@dataclass(frozen=True, eq=False)
class TransmissionModel:
    k: int
    transmitted: tuple[TxSymbol, ...]
    received: tuple[RxSymbol, ...]
    priors: np.ndarray
    likelihood: np.ndarray
    tolerance: float = DEFAULT_TOLERANCE

    def __post_init__(self):
        if not isinstance(self.k, int) or self.k < 1:
            raise InvalidModel(f"alphabet bound k must be a positive integer, got {self.k!r}")
        tx, rx = tuple(self.transmitted), tuple(self.received)
        object.__setattr__(self, "transmitted", tx)
        object.__setattr__(self, "received", rx)
        if not tx or not rx:
            raise InvalidModel("empty symbol alphabet")
        for sym in tx:
            _check_bounds((sym.entity,), None, str(sym))
            _check_bounds((sym.channel,), self.k, str(sym))
        for sym in rx:
            _check_bounds((sym.channel, sym.operation), self.k, str(sym))
        if len(set(tx)) != len(tx) or len(set(rx)) != len(rx):
            raise InvalidModel("duplicate symbols in alphabet")
        priors = np.array(self.priors, dtype=float).reshape(-1)
        lik = np.array(self.likelihood, dtype=float)
        if priors.shape != (len(tx),):
            raise InvalidModel(f"priors has {priors.size} entries for {len(tx)} transmitted symbols")
        if lik.shape != (len(tx), len(rx)):
            raise InvalidModel(f"likelihood shape {lik.shape} != ({len(tx)}, {len(rx)})")
        if not (np.all(np.isfinite(priors)) and np.all(np.isfinite(lik))):
            raise InvalidModel("non-finite probability")
        if self.tolerance < 0:
            raise InvalidModel("tolerance must be non-negative")
        priors.flags.writeable = False
        lik.flags.writeable = False
        object.__setattr__(self, "priors", priors)
        object.__setattr__(self, "likelihood", lik)

    @classmethod
    def build(
        cls,
        k: int,
        likelihood,
        priors=None,
        *,
        transmitted: Sequence[TxSymbol] | None = None,
        received: Sequence[RxSymbol] | None = None,
        entities: int | None = None,
        tolerance: float = DEFAULT_TOLERANCE,
    ) -> TransmissionModel:
        """Fill in the standard alphabet and uniform priors where not given."""
        std_tx, std_rx = standard_alphabet(k, entities)
        transmitted = std_tx if transmitted is None else tuple(transmitted)
        received = std_rx if received is None else tuple(received)
        if priors is None:
            priors = np.full(len(transmitted), 1.0 / len(transmitted))
        return cls(k, transmitted, received, priors, likelihood, tolerance)

    @cached_property
    def _tx_pos(self) -> dict[TxSymbol, int]:
        return {s: i for i, s in enumerate(self.transmitted)}

    @cached_property
    def _rx_pos(self) -> dict[RxSymbol, int]:
        return {s: j for j, s in enumerate(self.received)}

    def tx_index(self, symbol: TxSymbol) -> int:
        try:
            return self._tx_pos[symbol]
        except KeyError:
            raise IndexOutOfRange(f"{symbol} not in transmitted alphabet") from None

    def rx_index(self, symbol: RxSymbol) -> int:
        try:
            return self._rx_pos[symbol]
        except KeyError:
            raise IndexOutOfRange(f"{symbol} not in received alphabet") from None

    def prior(self, symbol: TxSymbol) -> float:
        return float(self.priors[self.tx_index(symbol)])

    def prob(self, received: RxSymbol, transmitted: TxSymbol) -> float:
        """P(received | transmitted)."""
        return float(self.likelihood[self.tx_index(transmitted), self.rx_index(received)])

    @cached_property
    def mismatch_mask(self) -> np.ndarray:
        ops = np.array([s.operation for s in self.received])
        chans = np.array([s.channel for s in self.transmitted])
        mask = ops[None, :] != chans[:, None]
        mask.flags.writeable = False
        return mask

    @cached_property
    def violations(self) -> tuple[Violation, ...]:
        return tuple(_violations(self))

    def renormalized(self) -> TransmissionModel:
        """Scale the prior and every likelihood row to sum to one."""
        priors = np.clip(self.priors, 0.0, None)
        lik = np.clip(self.likelihood, 0.0, None)
        if priors.sum() <= 0:
            raise InvalidModel("cannot renormalise an all-zero prior")
        rows = lik.sum(axis=1, keepdims=True)
        if np.any(rows <= 0):
            raise InvalidModel("cannot renormalise an all-zero likelihood row")
        return TransmissionModel(
            self.k, self.transmitted, self.received, priors / priors.sum(), lik / rows, self.tolerance
        )

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "transmitted": [[s.entity, s.channel] for s in self.transmitted],
            "received": [[s.channel, s.operation] for s in self.received],
            "priors": [float(p) for p in self.priors],
            "likelihood": [[float(x) for x in row] for row in self.likelihood],
        }


def _violations(model: TransmissionModel) -> Iterable[Violation]:
    for i, p in enumerate(model.priors):
        if p < 0.0 or p > 1.0:
            yield Violation(f"prior {model.transmitted[i]} outside [0,1]", float(max(-p, p - 1.0)))
    for i, j in zip(*np.nonzero((model.likelihood < 0.0) | (model.likelihood > 1.0))):
        x = model.likelihood[i, j]
        yield Violation(
            f"P({model.received[j]} | {model.transmitted[i]}) outside [0,1]", float(max(-x, x - 1.0))
        )
    residual = abs(1.0 - math.fsum(model.priors))
    if residual > model.tolerance:
        yield Violation("priors sum", residual)
    for i, row in enumerate(model.likelihood):
        residual = abs(1.0 - math.fsum(row))
        if residual > model.tolerance:
            yield Violation(f"likelihood row {model.transmitted[i]} sum", residual)


def validate_model(model: TransmissionModel) -> list[Violation]:
    """Every normalisation or range defect with its residual; empty when valid."""
    return list(model.violations)


def _require_valid(model: TransmissionModel) -> None:
    if model.violations:
        raise InvalidModel("; ".join(str(v) for v in model.violations))


def prob_abnormal_given(model: TransmissionModel, transmitted: TxSymbol) -> float:
    """P(E | A): likelihood mass on received symbols whose operation differs from A's channel."""
    _require_valid(model)
    i = model.tx_index(transmitted)
    return math.fsum(model.likelihood[i][model.mismatch_mask[i]])


def marginal(model: TransmissionModel, received: RxSymbol) -> float:
    """P(B) = sum over A of P(B | A) P(A)."""
    j = model.rx_index(received)
    return math.fsum(model.likelihood[:, j] * model.priors)


def bayes_posterior(model: TransmissionModel, received: RxSymbol) -> dict[TxSymbol, float]:
    """P(A | B) for every transmitted symbol with positive prior."""
    _require_valid(model)
    j = model.rx_index(received)
    total = marginal(model, received)
    if total <= 0.0:
        raise ZeroMarginal(f"{received} has zero probability under the model")
    return {
        sym: float(model.likelihood[i, j] * model.priors[i] / total)
        for i, sym in enumerate(model.transmitted)
        if model.priors[i] > 0.0
    }


# --------------------------------------------------------------------------
# Canonical and random models
# --------------------------------------------------------------------------


def identity_channel(k: int, entities: int | None = None, priors=None) -> TransmissionModel:
    """Every A[e,c] is received as B[c,c] with certainty."""
    tx, rx = standard_alphabet(k, entities)
    lik = np.zeros((len(tx), len(rx)))
    for i, a in enumerate(tx):
        lik[i, rx.index(RxSymbol(a.channel, a.channel))] = 1.0
    return TransmissionModel.build(k, lik, priors, transmitted=tx, received=rx)


def symmetric_channel(k: int, flip: float, entities: int | None = None, priors=None) -> TransmissionModel:
    """A[e,c] -> B[c,c] with 1 - flip, else B[c,o] (o != c) uniformly."""
    if k == 1 and flip:
        raise InvalidModel("a single-symbol alphabet cannot flip")
    tx, rx = standard_alphabet(k, entities)
    lik = np.zeros((len(tx), len(rx)))
    for i, a in enumerate(tx):
        for o in range(1, k + 1):
            p = 1.0 - flip if o == a.channel else flip / (k - 1)
            lik[i, rx.index(RxSymbol(a.channel, o))] = p
    return TransmissionModel.build(k, lik, priors, transmitted=tx, received=rx)


def random_model(
    k: int,
    rng: np.random.Generator,
    entities: int | None = None,
    zero_fraction: float = 0.0,
) -> TransmissionModel:
    """Random dense model over the standard alphabet, renormalised by construction.

    ``zero_fraction`` zeroes that share of likelihood entries (each row keeps
    at least one positive entry) to exercise sparse channels.
    """
    tx, rx = standard_alphabet(k, entities)
    priors = rng.random(len(tx)) + 1e-3
    lik = rng.random((len(tx), len(rx)))
    if zero_fraction:
        drop = rng.random(lik.shape) < zero_fraction
        drop[np.arange(len(tx)), rng.integers(0, len(rx), len(tx))] = False
        lik[drop] = 0.0
    return TransmissionModel(k, tx, rx, priors, lik).renormalized()


# --------------------------------------------------------------------------
# Observation mapping and timeline assessment
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SourceMapping:
    """How one log source maps onto the symbol alphabet."""

    entity: int
    states: Mapping[str, int]
    ref: EntityRef | None = None


@dataclass(frozen=True)
class ObservationMapping:
    sources: Mapping[str, SourceMapping]

    def translate(self, record: LogRecord) -> tuple[TxSymbol, RxSymbol] | None:
        """(commanded, reported) -> (A[e,c], B[c,o]); None when any label is unknown."""
        src = self.sources.get(record.source)
        if src is None:
            return None
        c = src.states.get(record.commanded_state)
        o = src.states.get(record.reported_state)
        if c is None or o is None:
            return None
        return TxSymbol(src.entity, c), RxSymbol(c, o)

    def entity_refs(self) -> dict[str, EntityRef]:
        return {name: m.ref for name, m in self.sources.items() if m.ref is not None}

    def to_dict(self) -> dict:
        return {
            name: {
                "entity": m.entity,
                "states": dict(m.states),
                **({"ref": str(m.ref)} if m.ref is not None else {}),
            }
            for name, m in self.sources.items()
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> ObservationMapping:
        sources = {}
        for name, entry in data.items():
            try:
                states = {str(k): int(v) for k, v in entry["states"].items()}
                ref = EntityRef.parse(entry["ref"]) if entry.get("ref") else None
                sources[str(name)] = SourceMapping(int(entry["entity"]), states, ref)
            except (KeyError, TypeError, AttributeError, ValueError) as exc:
                raise ConfigError(f"mapping for {name!r}: {exc}") from None
        return cls(sources)


@dataclass(frozen=True)
class FlaggedObservation:
    record_index: int
    record_key: str
    source: str
    transmitted: TxSymbol
    received: RxSymbol
    posterior: float | None  # P(transmitted | received); None if received has zero marginal

    def to_dict(self) -> dict:
        return {
            "record_index": self.record_index,
            "record_key": self.record_key,
            "source": self.source,
            "transmitted": [self.transmitted.entity, self.transmitted.channel],
            "received": [self.received.channel, self.received.operation],
            "posterior": self.posterior,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> FlaggedObservation:
        return cls(
            d["record_index"],
            d["record_key"],
            d["source"],
            TxSymbol(*d["transmitted"]),
            RxSymbol(*d["received"]),
            d["posterior"],
        )


@dataclass(frozen=True)
class AnomalyAssessment:
    p_abnormal: float
    per_symbol: Mapping[TxSymbol, float]
    flagged: tuple[FlaggedObservation, ...] = ()
    assessed: int = 0
    skipped: int = 0

    def to_dict(self) -> dict:
        return {
            "p_abnormal": self.p_abnormal,
            "per_symbol": [
                {"symbol": [s.entity, s.channel], "p_abnormal_given": p}
                for s, p in sorted(self.per_symbol.items())
            ],
            "flagged": [f.to_dict() for f in self.flagged],
            "assessed": self.assessed,
            "skipped": self.skipped,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> AnomalyAssessment:
        return cls(
            d["p_abnormal"],
            {TxSymbol(*e["symbol"]): e["p_abnormal_given"] for e in d["per_symbol"]},
            tuple(FlaggedObservation.from_dict(f) for f in d["flagged"]),
            d["assessed"],
            d["skipped"],
        )


def prob_abnormal(model: TransmissionModel) -> AnomalyAssessment:
    """P(E) by total probability over the transmitted prior."""
    _require_valid(model)
    per_symbol = {
        sym: prob_abnormal_given(model, sym)
        for i, sym in enumerate(model.transmitted)
        if model.priors[i] > 0.0
    }
    p = math.fsum(model.prior(sym) * pe for sym, pe in per_symbol.items())
    return AnomalyAssessment(min(max(p, 0.0), 1.0), per_symbol)


def assess_timeline(
    model: TransmissionModel,
    timeline: EventTimeline,
    mapping: ObservationMapping,
) -> AnomalyAssessment:
    """Classify every (commanded, reported) observation in the timeline.

    Records without both states are not observations and are ignored.
    Observations the mapping or the model alphabet cannot express are
    counted in ``skipped``.
    """
    if not timeline.records:
        raise EmptyTimeline("timeline has no records")
    base = prob_abnormal(model)
    flagged = []
    assessed = skipped = 0
    for index, record in enumerate(timeline.records):
        if record.commanded_state is None or record.reported_state is None:
            continue
        symbols = mapping.translate(record)
        if symbols is None or symbols[0] not in model._tx_pos or symbols[1] not in model._rx_pos:
            skipped += 1
            continue
        tx, rx = symbols
        assessed += 1
        if classify(tx, rx, model.k) is Verdict.NORMAL:
            continue
        try:
            posterior = bayes_posterior(model, rx).get(tx, 0.0)
        except ZeroMarginal:
            posterior = None
        flagged.append(FlaggedObservation(index, record.key, record.source, tx, rx, posterior))
    return AnomalyAssessment(base.p_abnormal, base.per_symbol, tuple(flagged), assessed, skipped)


# --------------------------------------------------------------------------
# Model file
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelFile:
    model: TransmissionModel
    mapping: ObservationMapping | None = None
    violations: tuple[Violation, ...] = field(default=())


def model_from_dict(data: Mapping, *, tolerance: float = DEFAULT_TOLERANCE) -> TransmissionModel:
    try:
        k = int(data["k"])
        likelihood = data["likelihood"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"model document needs 'k' and 'likelihood' ({exc})") from None
    tx = [TxSymbol(*map(int, s)) for s in data["transmitted"]] if "transmitted" in data else None
    rx = [RxSymbol(*map(int, s)) for s in data["received"]] if "received" in data else None
    return TransmissionModel.build(
        k,
        likelihood,
        data.get("priors"),
        transmitted=tx,
        received=rx,
        entities=data.get("entities"),
        tolerance=float(data.get("tolerance", tolerance)),
    )


def load_model_file(path: str | Path, *, renormalize: bool = False, strict: bool = True) -> ModelFile:
    """Read a model document (JSON or YAML).

    Keys: ``k``, ``likelihood`` (row-major, rows = transmitted), optional
    ``priors`` (uniform if absent), ``transmitted``/``received`` symbol
    lists (standard alphabet if absent), ``entities``, ``tolerance``, and
    an optional observation ``mapping``. With ``strict`` a model that is
    not normalised within tolerance raises ``InvalidModel`` unless
    ``renormalize`` is set.
    """
    data = load_document(path)
    if not isinstance(data, Mapping):
        raise ConfigError(f"{path}: model document must be a mapping")
    model = model_from_dict(data)
    if renormalize:
        model = model.renormalized()
    violations = model.violations
    if strict and violations:
        raise InvalidModel(f"{path}: " + "; ".join(str(v) for v in violations))
    mapping = ObservationMapping.from_dict(data["mapping"]) if data.get("mapping") else None
    return ModelFile(model, mapping, violations)
