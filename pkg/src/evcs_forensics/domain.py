"""Shared vocabulary: station entities, mitigators, layers, 5Ws & 1H labels, timestamps.

Timestamps use the investigation-sheet text formats ``mm-dd-yy`` and
``hh:mm:ss:msec``. The time zone is kept as an opaque label; no offset
arithmetic is ever performed, so a log corpus is assumed to share one zone.
"""

from __future__ import annotations

import datetime as dt
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping

from ._io import load_document
from .errors import ConfigError, MalformedTimestamp

DEFAULT_CENTURY = 2000

_DATE_RE = re.compile(r"^(\d{2})-(\d{2})-(\d{2})$")
_TIME_RE = re.compile(r"^(\d{2}):(\d{2}):(\d{2}):(\d{2,3})$")
_TIME_NO_MS_RE = re.compile(r"^(\d{2}):(\d{2}):(\d{2})$")
_ZONE_RE = re.compile(r"^[^\s|]+$")

_MS_PER_DAY = 86_400_000


class Subsystem(str, Enum):
    """The five entity kinds of the station environment."""

    G = "G"  # power grid
    V = "V"  # EV
    O = "O"  # cloud server
    P = "P"  # communication protocols
    S = "S"  # station infrastructure


class MitigatorKind(str, Enum):
    C = "C"  # physical and technical controls
    I = "I"  # intrusion detection & prevention


def _parse_ref(text: str, kinds: type[Enum], what: str) -> tuple[Enum, int]:
    m = re.fullmatch(r"([A-Za-z])(\d+)", text.strip())
    if not m:
        raise ConfigError(f"bad {what} reference {text!r}; expected e.g. '{next(iter(kinds)).value}1'")
    try:
        kind = kinds(m.group(1).upper())
    except ValueError:
        raise ConfigError(f"unknown {what} kind in {text!r}") from None
    return kind, int(m.group(2))


@dataclass(frozen=True, order=True)
class EntityRef:
    """i-th component of subsystem k, written ``S1``, ``G2``..."""

    subsystem: Subsystem
    index: int

    def __post_init__(self):
        object.__setattr__(self, "subsystem", Subsystem(self.subsystem))
        if not isinstance(self.index, int) or self.index < 1:
            raise ValueError(f"entity index must be a positive integer, got {self.index!r}")

    @classmethod
    def parse(cls, text: str) -> EntityRef:
        kind, index = _parse_ref(text, Subsystem, "entity")
        return cls(kind, index)

    def __str__(self) -> str:
        return f"{self.subsystem.value}{self.index}"


@dataclass(frozen=True, order=True)
class MitigatorRef:
    kind: MitigatorKind
    index: int

    def __post_init__(self):
        object.__setattr__(self, "kind", MitigatorKind(self.kind))
        if not isinstance(self.index, int) or self.index < 1:
            raise ValueError(f"mitigator index must be a positive integer, got {self.index!r}")

    @classmethod
    def parse(cls, text: str) -> MitigatorRef:
        kind, index = _parse_ref(text, MitigatorKind, "mitigator")
        return cls(kind, index)

    def __str__(self) -> str:
        return f"{self.kind.value}{self.index}"


# --------------------------------------------------------------------------
# Timestamps
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class IncidentTimestamp:
    date: dt.date
    time_zone: str
    hours: int = 0
    minutes: int = 0
    seconds: int = 0
    milliseconds: int = 0

    def __post_init__(self):
        for name, hi in (("hours", 23), ("minutes", 59), ("seconds", 59), ("milliseconds", 999)):
            value = getattr(self, name)
            if not isinstance(value, int) or not 0 <= value <= hi:
                raise MalformedTimestamp(f"{name}={value!r} outside [0, {hi}]")
        if not _ZONE_RE.match(self.time_zone or ""):
            raise MalformedTimestamp(f"time zone label {self.time_zone!r} must be non-empty without spaces or '|'")

    @property
    def date_text(self) -> str:
        return f"{self.date.month:02d}-{self.date.day:02d}-{self.date.year % 100:02d}"

    @property
    def time_text(self) -> str:
        # two-digit milliseconds below 100 ("47"), matching the case-study sheet
        return f"{self.hours:02d}:{self.minutes:02d}:{self.seconds:02d}:{self.milliseconds:02d}"

    def format(self) -> tuple[str, str, str]:
        return self.date_text, self.time_zone, self.time_text

    def __str__(self) -> str:
        return f"{self.date_text} {self.time_zone} {self.time_text}"

    @property
    def epoch_ms(self) -> int:
        """Milliseconds since 0001-01-01 00:00 in the (opaque) local zone."""
        day_ms = ((self.hours * 60 + self.minutes) * 60 + self.seconds) * 1000 + self.milliseconds
        return self.date.toordinal() * _MS_PER_DAY + day_ms

    @classmethod
    def from_epoch_ms(cls, value: int, time_zone: str) -> IncidentTimestamp:
        days, rem = divmod(value, _MS_PER_DAY)
        secs, ms = divmod(rem, 1000)
        return cls(dt.date.fromordinal(days), time_zone, secs // 3600, secs // 60 % 60, secs % 60, ms)

    def shifted(self, ms: int) -> IncidentTimestamp:
        return IncidentTimestamp.from_epoch_ms(self.epoch_ms + ms, self.time_zone)


def parse_date(date_text: str, century: int = DEFAULT_CENTURY) -> dt.date:
    m = _DATE_RE.match(date_text)
    if not m:
        raise MalformedTimestamp(f"date {date_text!r} is not mm-dd-yy")
    month, day, yy = (int(g) for g in m.groups())
    try:
        return dt.date(century + yy, month, day)
    except ValueError as exc:
        raise MalformedTimestamp(f"date {date_text!r}: {exc}") from None


def parse_timestamp(
    date_text: str,
    time_zone: str,
    time_text: str,
    *,
    century: int = DEFAULT_CENTURY,
    allow_missing_ms: bool = False,
) -> IncidentTimestamp:
    """Parse the ``mm-dd-yy`` / ``hh:mm:ss:msec`` pair.

    Two-digit years land in ``century .. century+99``. Milliseconds are
    written with at least two digits; a three-digit field with a leading
    zero is rejected because it could not be reproduced byte-for-byte.
    With ``allow_missing_ms`` an ``hh:mm:ss`` time is accepted as ``.000``.
    """
    date = parse_date(date_text, century)
    m = _TIME_RE.match(time_text)
    if m:
        ms_text = m.group(4)
        if len(ms_text) == 3 and ms_text[0] == "0":
            raise MalformedTimestamp(f"time {time_text!r}: milliseconds {ms_text!r} not canonical")
        fields = [int(g) for g in m.groups()]
    elif allow_missing_ms and (m := _TIME_NO_MS_RE.match(time_text)):
        fields = [int(g) for g in m.groups()] + [0]
    else:
        raise MalformedTimestamp(f"time {time_text!r} is not hh:mm:ss:msec")
    return IncidentTimestamp(date, time_zone, *fields)


def parse_compact_timestamp(text: str, time_zone: str = "-", **kw) -> IncidentTimestamp:
    """Parse ``"mm-dd-yy hh:mm:ss:msec"`` or ``"mm-dd-yy TZ hh:mm:ss:msec"``."""
    parts = text.split()
    if len(parts) == 2:
        return parse_timestamp(parts[0], time_zone, parts[1], **kw)
    if len(parts) == 3:
        return parse_timestamp(parts[0], parts[1], parts[2], **kw)
    raise MalformedTimestamp(f"timestamp {text!r} is not 'mm-dd-yy [TZ] hh:mm:ss:msec'")


# --------------------------------------------------------------------------
# 5Ws & 1H attribute vocabularies
# --------------------------------------------------------------------------


class Attribute(str, Enum):
    """The eight investigation attributes, in report row order."""

    ATTACKER = "attacker"
    VICTIM = "victim"
    TARGET = "target"
    DATE = "date"
    TIME = "time"
    ATTACK_PATH = "attack_path"
    HAZARDOUS_BEHAVIOR = "hazardous_behavior"
    ATTACK_METHOD = "attack_method"


LABELLED_ATTRIBUTES = (
    Attribute.ATTACKER,
    Attribute.VICTIM,
    Attribute.TARGET,
    Attribute.ATTACK_PATH,
    Attribute.HAZARDOUS_BEHAVIOR,
    Attribute.ATTACK_METHOD,
)

DEFAULT_LABELS: dict[Attribute, tuple[str, ...]] = {
    Attribute.ATTACKER: ("hacker", "spy", "terrorist", "vandal", "raider"),
    Attribute.VICTIM: ("EV", "power grid", "cloud system", "communication protocols"),
    Attribute.TARGET: ("OCPP", "BMS", "charging adapter", "cooling system", "smart meter", "HMI"),
    Attribute.ATTACK_PATH: ("OTA", "software kickout", "incorrect coding"),
    Attribute.HAZARDOUS_BEHAVIOR: (
        "faulty SOC",
        "unintended overcharging",
        "incorrect scheduling",
        "system malfunction",
    ),
    Attribute.ATTACK_METHOD: (
        "spoofing",
        "tampering",
        "repudiation",
        "information disclosure",
        "denial of service",
    ),
}


class Membership(str, Enum):
    KNOWN = "known"
    EXTENDED = "extended"


def _label_set(category: Attribute, labels: Iterable[str]) -> frozenset[str]:
    seen: dict[str, str] = {}
    for label in labels:
        if not isinstance(label, str) or not label.strip():
            raise ConfigError(f"{category.value}: labels must be non-empty strings, got {label!r}")
        key = label.casefold()
        if key in seen:
            raise ConfigError(f"{category.value}: duplicate label {label!r}")
        seen[key] = label
    if not seen:
        raise ConfigError(f"{category.value}: label set is empty")
    return frozenset(seen.values())


@dataclass(frozen=True)
class AttributeVocabulary:
    attacker: frozenset[str]
    victim: frozenset[str]
    target: frozenset[str]
    attack_path: frozenset[str]
    hazardous_behavior: frozenset[str]
    attack_method: frozenset[str]

    def __post_init__(self):
        for category in LABELLED_ATTRIBUTES:
            object.__setattr__(self, category.value, _label_set(category, getattr(self, category.value)))

    @classmethod
    def default(cls) -> AttributeVocabulary:
        return cls(**{c.value: DEFAULT_LABELS[c] for c in LABELLED_ATTRIBUTES})

    def labels(self, category: Attribute | str) -> frozenset[str]:
        return getattr(self, Attribute(category).value)

    def merged(self, extension: Mapping[str, Iterable[str]]) -> AttributeVocabulary:
        """Union ``extension`` into this vocabulary; case variants of known labels are ignored."""
        updated = {}
        for category in LABELLED_ATTRIBUTES:
            current = self.labels(category)
            folded = {label.casefold() for label in current}
            extra = []
            for label in extension.get(category.value, ()) or ():
                if label.casefold() not in folded:
                    folded.add(label.casefold())
                    extra.append(label)
            updated[category.value] = current | frozenset(extra)
        return AttributeVocabulary(**updated)


def validate_label(category: Attribute | str, label: str, vocab: AttributeVocabulary) -> Membership:
    """Case-insensitive membership query; date/time are "known" when they parse."""
    category = Attribute(category)
    if category is Attribute.DATE:
        try:
            parse_date(label)
        except MalformedTimestamp:
            return Membership.EXTENDED
        return Membership.KNOWN
    if category is Attribute.TIME:
        parts = label.split()
        try:
            parse_timestamp("01-01-00", parts[0] if len(parts) == 2 else "-", parts[-1])
        except (MalformedTimestamp, IndexError):
            return Membership.EXTENDED
        return Membership.KNOWN
    folded = label.casefold()
    if any(folded == known.casefold() for known in vocab.labels(category)):
        return Membership.KNOWN
    return Membership.EXTENDED


# --------------------------------------------------------------------------
# Layer hierarchy
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Layer:
    name: str
    nodes: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        if len(set(self.nodes)) != len(self.nodes):
            raise ConfigError(f"layer {self.name!r}: node labels must be unique")


@dataclass(frozen=True)
class LayerHierarchy:
    """Ordered layers of the networked station model.

    ``transmit_layer`` and ``receive_layer`` are 1-based positions of the
    layers whose messages form the sent and received symbol alphabets.
    """

    layers: tuple[Layer, ...]
    transmit_layer: int = 3
    receive_layer: int = 4

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if len(self.layers) < 4:
            raise ConfigError(f"layer hierarchy needs at least 4 layers, got {len(self.layers)}")
        n = len(self.layers)
        if not (1 <= self.transmit_layer <= n and 1 <= self.receive_layer <= n):
            raise ConfigError("transmit/receive layer position out of range")
        if self.transmit_layer == self.receive_layer:
            raise ConfigError("transmit and receive layers must differ")

    def __len__(self) -> int:
        return len(self.layers)

    def layer(self, position: int) -> Layer:
        return self.layers[position - 1]

    @classmethod
    def default(cls) -> LayerHierarchy:
        return cls(
            (
                Layer("EVCS system", ("EVCS",)),
                Layer("communication channel", ("OCPP", "IEC 61850", "ISO 15118")),
                Layer("core entities", ("power grid", "EV", "charging station")),
                Layer(
                    "components",
                    ("BMS", "CB", "charging adapter", "cooling system", "smart meter", "HMI"),
                ),
                Layer("operations", ("charging", "discharging", "open", "closed")),
                Layer("operation outcomes", ("normal", "abnormal")),
            )
        )

    @classmethod
    def from_config(cls, data) -> LayerHierarchy:
        """Accept either a list of ``{name, nodes}`` or a mapping with a ``layers`` list."""
        extras = {}
        if isinstance(data, Mapping):
            extras = {k: int(data[k]) for k in ("transmit_layer", "receive_layer") if k in data}
            data = data.get("layers")
        if not isinstance(data, list):
            raise ConfigError("layers must be a list of {name, nodes} entries")
        layers = []
        for i, entry in enumerate(data, 1):
            if not isinstance(entry, Mapping) or "name" not in entry:
                raise ConfigError(f"layer #{i} must have a name")
            layers.append(Layer(str(entry["name"]), tuple(str(n) for n in entry.get("nodes", ()))))
        return cls(tuple(layers), **extras)


@dataclass(frozen=True)
class StationConfig:
    vocabulary: AttributeVocabulary = field(default_factory=AttributeVocabulary.default)
    layers: LayerHierarchy = field(default_factory=LayerHierarchy.default)


def load_station_config(path: str | Path | None) -> StationConfig:
    """Load a vocabulary/layer file; user labels merge over the defaults.

    Recognised top-level keys: ``attacker``, ``victim``, ``target``,
    ``attack_path``, ``hazardous_behavior``, ``attack_method``, ``layers``.
    """
    if path is None:
        return StationConfig()
    data = load_document(path) or {}
    if not isinstance(data, Mapping):
        raise ConfigError(f"{path}: top level must be a mapping")
    known = {c.value for c in LABELLED_ATTRIBUTES} | {"layers"}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {', '.join(unknown)}")
    extension = {}
    for category in LABELLED_ATTRIBUTES:
        labels = data.get(category.value)
        if labels is None:
            continue
        if isinstance(labels, str) or not isinstance(labels, list):
            raise ConfigError(f"{path}: {category.value} must be a list of labels")
        _label_set(category, labels)  # duplicate check within the file
        extension[category.value] = labels
    vocab = AttributeVocabulary.default().merged(extension)
    layers = LayerHierarchy.from_config(data["layers"]) if "layers" in data else LayerHierarchy.default()
    return StationConfig(vocab, layers)
