"""Forensic log pipeline: acquisition, cleaning, correlation, sequencing.

Log line format (one record per line, ``#`` comments and blank lines skipped)::

    SOURCE|DATE|TZ|TIME|KIND|COMMANDED|REPORTED|SEQ|PAYLOAD

DATE is ``mm-dd-yy``, TIME ``hh:mm:ss:msec`` (``hh:mm:ss`` reads as .000),
KIND one of ``command``, ``status-report``, ``protocol-message``,
``operator-note``. COMMANDED, REPORTED and SEQ may be empty. PAYLOAD is
everything after the eighth pipe and may itself contain pipes. Tabs are not
allowed anywhere in a line.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .domain import IncidentTimestamp, parse_compact_timestamp, parse_timestamp
from .errors import EmptyGroup, FileUnreadable, InvalidFilter, MalformedLine, MalformedTimestamp

logger = logging.getLogger(__name__)

DEFAULT_GAP_THRESHOLD = 300.0  # seconds
LOG_SUFFIX = ".log"
_FIELD_COUNT = 9


class RecordKind(str, Enum):
    COMMAND = "command"
    STATUS_REPORT = "status-report"
    PROTOCOL_MESSAGE = "protocol-message"
    OPERATOR_NOTE = "operator-note"


@dataclass(frozen=True)
class Origin:
    path: str
    line: int

    def __str__(self) -> str:
        return f"{self.path}:{self.line}"


@dataclass(frozen=True)
class LogRecord:
    source: str
    timestamp: IncidentTimestamp
    kind: RecordKind
    commanded_state: str | None = None
    reported_state: str | None = None
    payload: str = ""
    sequence_hint: int | None = None
    duplicates: int = 1
    origin: Origin | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", RecordKind(self.kind))
        if not self.source or "|" in self.source or self.source != self.source.strip():
            raise ValueError(f"invalid source label {self.source!r}")
        for name in ("commanded_state", "reported_state"):
            value = getattr(self, name)
            if value is not None and (not value or "|" in value):
                raise ValueError(f"invalid {name} {value!r}")
        if "\n" in self.payload or "\r" in self.payload:
            raise ValueError("payload must be a single line")
        if self.kind is RecordKind.STATUS_REPORT and self.reported_state is None:
            raise ValueError("status-report records need a reported state")
        if self.kind is RecordKind.COMMAND and self.commanded_state is None:
            raise ValueError("command records need a commanded state")
        if self.sequence_hint is not None and self.sequence_hint < 0:
            raise ValueError("sequence hint must be non-negative")
        if self.duplicates < 1:
            raise ValueError("duplicate count must be >= 1")

    @property
    def key(self) -> str:
        """Identity used to cross-reference records between artifacts."""
        seq = "-" if self.sequence_hint is None else str(self.sequence_hint)
        return f"{self.source}@{self.timestamp}#{seq}"

    def sort_key(self) -> tuple:
        hint = self.sequence_hint
        return (self.timestamp.epoch_ms, hint is None, hint or 0, self.source)

    def dedup_key(self) -> tuple:
        return (
            self.source,
            self.timestamp.epoch_ms,
            self.timestamp.time_zone,
            self.kind,
            self.commanded_state,
            self.reported_state,
            self.payload,
        )

    def to_line(self) -> str:
        date, tz, time = self.timestamp.format()
        seq = "" if self.sequence_hint is None else str(self.sequence_hint)
        fields = [
            self.source,
            date,
            tz,
            time,
            self.kind.value,
            self.commanded_state or "",
            self.reported_state or "",
            seq,
            self.payload,
        ]
        return "|".join(fields)

    def to_dict(self) -> dict:
        date, tz, time = self.timestamp.format()
        return {
            "source": self.source,
            "date": date,
            "time_zone": tz,
            "time": time,
            "kind": self.kind.value,
            "commanded_state": self.commanded_state,
            "reported_state": self.reported_state,
            "sequence_hint": self.sequence_hint,
            "payload": self.payload,
            "duplicates": self.duplicates,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> LogRecord:
        return cls(
            d["source"],
            parse_timestamp(d["date"], d["time_zone"], d["time"]),
            RecordKind(d["kind"]),
            d.get("commanded_state"),
            d.get("reported_state"),
            d.get("payload", ""),
            d.get("sequence_hint"),
            d.get("duplicates", 1),
        )


def parse_line(text: str, origin: Origin | None = None) -> LogRecord:
    text = text.rstrip("\r\n")
    if "\t" in text:
        raise MalformedLine("tab character in line")
    fields = text.split("|", _FIELD_COUNT - 1)
    if len(fields) != _FIELD_COUNT:
        raise MalformedLine(f"expected {_FIELD_COUNT} pipe-delimited fields, got {len(fields)}")
    source, date, tz, time, kind, commanded, reported, seq, payload = fields
    try:
        timestamp = parse_timestamp(date, tz, time, allow_missing_ms=True)
    except MalformedTimestamp as exc:
        raise MalformedLine(str(exc)) from None
    try:
        kind = RecordKind(kind)
    except ValueError:
        raise MalformedLine(f"unknown record kind {kind!r}") from None
    if seq and not seq.isdigit():
        raise MalformedLine(f"sequence hint {seq!r} is not a non-negative integer")
    try:
        return LogRecord(
            source,
            timestamp,
            kind,
            commanded or None,
            reported or None,
            payload,
            int(seq) if seq else None,
            origin=origin,
        )
    except ValueError as exc:
        raise MalformedLine(str(exc)) from None


# --------------------------------------------------------------------------
# Acquisition
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MalformedEntry:
    origin: Origin
    reason: str
    text: str

    def __str__(self) -> str:
        return f"{self.origin}: {self.reason}"


@dataclass
class IngestReport:
    files: list[str] = field(default_factory=list)
    lines: int = 0
    malformed: list[MalformedEntry] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


def expand_inputs(paths: Iterable[str | Path]) -> list[Path]:
    """Files stay as given; directories contribute their ``*.log`` files in name order."""
    out: list[Path] = []
    for p in map(Path, paths):
        if p.is_dir():
            out.extend(sorted(q for q in p.iterdir() if q.suffix == LOG_SUFFIX and q.is_file()))
        else:
            out.append(p)
    return out


def ingest(paths: Sequence[str | Path]) -> tuple[list[LogRecord], IngestReport]:
    report = IngestReport()
    records: list[LogRecord] = []
    for path in map(Path, paths):
        try:
            text = path.read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as exc:
            raise FileUnreadable(f"{path}: {getattr(exc, 'strerror', None) or exc}") from exc
        report.files.append(str(path))
        good = 0
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            report.lines += 1
            origin = Origin(str(path), lineno)
            try:
                records.append(parse_line(line, origin))
                good += 1
            except MalformedLine as exc:
                report.malformed.append(MalformedEntry(origin, str(exc), line))
        if good == 0:
            msg = f"{path}: no well-formed records"
            logger.warning(msg)
            report.warnings.append(msg)
    return records, report


# --------------------------------------------------------------------------
# Preprocessing
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FilterSpec:
    start: IncidentTimestamp | None = None
    end: IncidentTimestamp | None = None
    sources: frozenset[str] | None = None
    kinds: frozenset[RecordKind] | None = None

    def __post_init__(self):
        if self.start is not None and self.end is not None and self.start.epoch_ms > self.end.epoch_ms:
            raise InvalidFilter(f"time range start {self.start} is after end {self.end}")
        if self.sources is not None:
            object.__setattr__(self, "sources", frozenset(self.sources))
        if self.kinds is not None:
            object.__setattr__(self, "kinds", frozenset(RecordKind(k) for k in self.kinds))

    @classmethod
    def from_cli(cls, start=None, end=None, sources=None, kinds=None) -> FilterSpec:
        try:
            return cls(
                parse_compact_timestamp(start, allow_missing_ms=True) if start else None,
                parse_compact_timestamp(end, allow_missing_ms=True) if end else None,
                frozenset(sources) if sources else None,
                frozenset(kinds) if kinds else None,
            )
        except (MalformedTimestamp, ValueError) as exc:
            raise InvalidFilter(str(exc)) from None

    def accepts(self, record: LogRecord) -> bool:
        t = record.timestamp.epoch_ms
        if self.start is not None and t < self.start.epoch_ms:
            return False
        if self.end is not None and t > self.end.epoch_ms:
            return False
        if self.sources is not None and record.source not in self.sources:
            return False
        return self.kinds is None or record.kind in self.kinds


def preprocess(records: Iterable[LogRecord], filters: FilterSpec | None = None) -> list[LogRecord]:
    """Filter, then collapse exact duplicates onto their first occurrence."""
    filters = filters or FilterSpec()
    survivors: dict[tuple, LogRecord] = {}
    for record in records:
        if not filters.accepts(record):
            continue
        key = record.dedup_key()
        first = survivors.get(key)
        if first is None:
            survivors[key] = record
        else:
            survivors[key] = replace(first, duplicates=first.duplicates + record.duplicates)
    return list(survivors.values())


# --------------------------------------------------------------------------
# Correlation and sequencing
# --------------------------------------------------------------------------


def correlation_id(first: LogRecord) -> str:
    digest = hashlib.sha256(first.to_line().encode("utf-8")).hexdigest()
    return f"EVT-{digest[:12]}"


@dataclass(frozen=True)
class RecordGroup:
    correlation_id: str
    records: tuple[LogRecord, ...]


@dataclass(frozen=True)
class EventTimeline:
    records: tuple[LogRecord, ...]
    window: tuple[IncidentTimestamp, IncidentTimestamp]
    correlation_id: str

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))

    def to_dict(self) -> dict:
        return {
            "correlation_id": self.correlation_id,
            "window": [str(self.window[0]), str(self.window[1])],
            "records": [r.to_dict() for r in self.records],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> EventTimeline:
        records = tuple(LogRecord.from_dict(r) for r in d["records"])
        window = tuple(parse_compact_timestamp(w) for w in d["window"])
        return cls(records, window, d["correlation_id"])


def correlate(records: Iterable[LogRecord], gap_threshold: float = DEFAULT_GAP_THRESHOLD) -> list[RecordGroup]:
    """Split the time-ordered records wherever consecutive gaps exceed ``gap_threshold`` seconds."""
    if gap_threshold <= 0:
        raise InvalidFilter("gap threshold must be positive")
    ordered = sorted(records, key=LogRecord.sort_key)
    if not ordered:
        return []
    limit_ms = gap_threshold * 1000.0
    groups: list[list[LogRecord]] = [[ordered[0]]]
    for prev, cur in zip(ordered, ordered[1:]):
        if cur.timestamp.epoch_ms - prev.timestamp.epoch_ms > limit_ms:
            groups.append([])
        groups[-1].append(cur)
    return [RecordGroup(correlation_id(g[0]), tuple(g)) for g in groups]


def sequence(group: RecordGroup | EventTimeline | Sequence[LogRecord]) -> EventTimeline:
    """Total order: timestamp, then sequence hint, then source label, then input order."""
    if isinstance(group, (RecordGroup, EventTimeline)):
        records, cid = group.records, group.correlation_id
    else:
        records, cid = tuple(group), None
    if not records:
        raise EmptyGroup("cannot sequence an empty group")
    ordered = tuple(sorted(records, key=LogRecord.sort_key))
    if cid is None:
        cid = correlation_id(ordered[0])
    return EventTimeline(ordered, (ordered[0].timestamp, ordered[-1].timestamp), cid)
