"""Parse ProgSnap2 event tables into categorized, run-collapsed event sequences."""

from __future__ import annotations

import csv
import enum
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime
from functools import lru_cache
from itertools import groupby
from typing import IO, Iterable, Sequence

logger = logging.getLogger(__name__)


class IngestError(ValueError):
    """Base class for malformed-input errors."""


class FormatError(IngestError):
    pass


class RowError(IngestError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class IntegrityError(IngestError):
    pass


class Base(enum.Enum):
    EDIT = "EDIT"
    EDIT_INS = "EDIT-INS"
    EDIT_DEL = "EDIT-DEL"
    EDIT_PST = "EDIT-PST"
    RUN = "RUN"
    FILE = "FILE"
    CHAN = "CHAN"
    VAR = "VAR"


# Longest names first so "EDIT-INS-pen" is not read as EDIT with context "INS-pen".
_BASES_BY_NAME = sorted(Base, key=lambda b: len(b.value), reverse=True)


@dataclass(frozen=True)
class EventType:
    base: Base
    context: str | None = None
    _hash: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        # mining hashes event types millions of times
        object.__setattr__(self, "_hash", hash((self.base.value, self.context)))

    def __hash__(self) -> int:
        return self._hash

    def __str__(self) -> str:
        if self.context is None:
            return self.base.value
        return f"{self.base.value}-{self.context}"

    def __lt__(self, other: "EventType") -> bool:
        return self.sort_key() < other.sort_key()

    def sort_key(self) -> tuple[str, str]:
        return (self.base.value, self.context or "")

    @classmethod
    def parse(cls, text: str) -> "EventType":
        for base in _BASES_BY_NAME:
            if text == base.value:
                return _interned(base)
            if text.startswith(base.value + "-") and len(text) > len(base.value) + 1:
                return _interned(base, text[len(base.value) + 1:])
        raise ValueError(f"unknown event type {text!r}")

    def bare(self) -> "EventType":
        return EventType(self.base) if self.context is not None else self


# Shared instances let dictionary lookups succeed on identity alone.
_interned = lru_cache(maxsize=None)(EventType)


class Scheme(str, enum.Enum):
    GENERAL = "general"
    CONTEXTUAL = "contextual"


@dataclass(frozen=True)
class SchemeConfig:
    """Column names of the event table. Defaults follow ProgSnap2."""

    subject_col: str = "SubjectID"
    assignment_col: str = "AssignmentID"
    order_col: str = "Order"
    event_col: str = "EventType"
    timestamp_col: str = "ServerTimestamp"
    edit_type_col: str = "EditType"
    category_col: str = "X-BlockCategory"
    node_metric_col: str = "X-MeaningfulNodes"
    delimiter: str = ","

    @classmethod
    def from_mapping(cls, mapping: dict[str, str]) -> "SchemeConfig":
        known = cls.__dataclass_fields__
        unknown = set(mapping) - set(known)
        if unknown:
            raise FormatError(f"unknown column mapping keys: {sorted(unknown)}")
        return cls(**mapping)


@dataclass(frozen=True)
class RawEvent:
    subject_id: str
    assignment_id: str
    order: int
    event_kind: str
    timestamp: float | None = None
    edit_subtype: str | None = None
    category_name: str | None = None
    node_metric: int | None = None


@dataclass(frozen=True)
class RawStats:
    """Pre-collapse counts kept for the expert-rule baseline."""

    deletions: int
    moves: int
    runs: int
    minutes: float | None
    nodes: int | None


@dataclass(frozen=True)
class EventSequence:
    subject_id: str
    assignment_id: str
    events: tuple[EventType, ...]
    # (first, last) timestamp of the raw events merged into each collapsed event
    timestamps: tuple[tuple[float | None, float | None], ...] = ()
    raw: RawStats | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.timestamps and len(self.timestamps) != len(self.events):
            raise ValueError("timestamps must parallel events")
        for a, b in zip(self.events, self.events[1:]):
            if a == b:
                raise ValueError("adjacent events must differ; collapse runs first")

    def __len__(self) -> int:
        return len(self.events)

    def to_json(self) -> dict:
        out = {
            "subject_id": self.subject_id,
            "assignment_id": self.assignment_id,
            "events": [str(e) for e in self.events],
            "timestamps": [list(t) for t in self.timestamps],
        }
        if self.raw is not None:
            out["raw"] = {
                "deletions": self.raw.deletions,
                "moves": self.raw.moves,
                "runs": self.raw.runs,
                "minutes": self.raw.minutes,
                "nodes": self.raw.nodes,
            }
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "EventSequence":
        raw = obj.get("raw")
        return cls(
            subject_id=obj["subject_id"],
            assignment_id=obj["assignment_id"],
            events=tuple(EventType.parse(e) for e in obj["events"]),
            timestamps=tuple((t[0], t[1]) for t in obj.get("timestamps", [])),
            raw=RawStats(**raw) if raw is not None else None,
        )


def _parse_timestamp(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        pass
    dt = datetime.fromisoformat(text.replace("Z", "+00:00"))
    return dt.timestamp() * 1000.0


def parse_progsnap2(stream: IO[str], config: SchemeConfig = SchemeConfig()) -> list[RawEvent]:
    """Read a ProgSnap2 main event table.

    Rows are returned sorted by (subject, assignment, order). Event kinds the
    categorizer does not know are kept as-is.
    """
    reader = csv.reader(stream, delimiter=config.delimiter)
    header = next(reader, [])
    required = {
        config.subject_col: "Subject",
        config.assignment_col: "Assignment",
        config.order_col: "Order",
        config.event_col: "EventType",
    }
    for col, label in required.items():
        if col not in header:
            raise FormatError(f"{label} column absent (expected {col!r})")
    pos = {name: i for i, name in enumerate(header)}
    i_subject, i_assignment = pos[config.subject_col], pos[config.assignment_col]
    i_order, i_event = pos[config.order_col], pos[config.event_col]
    i_time = pos.get(config.timestamp_col)
    i_edit = pos.get(config.edit_type_col)
    i_category = pos.get(config.category_col)
    i_nodes = pos.get(config.node_metric_col)

    def optional(row: list[str], i: int | None) -> str | None:
        if i is None or i >= len(row):
            return None
        value = row[i].strip()
        return value or None

    events = []
    seen: dict[tuple[str, str, int], int] = {}
    for row in reader:
        line = reader.line_num
        if not row:
            continue
        if len(row) < len(header):
            raise RowError(line, f"expected {len(header)} fields, found {len(row)}")
        try:
            order = int(row[i_order])
        except ValueError:
            raise RowError(line, f"non-integer order {row[i_order]!r}") from None
        if order < 0:
            raise RowError(line, f"negative order {order}")
        subject = row[i_subject]
        assignment = row[i_assignment]
        key = (subject, assignment, order)
        if key in seen:
            raise IntegrityError(
                f"duplicate order {order} for subject {subject!r}, assignment "
                f"{assignment!r} (lines {seen[key]} and {line})"
            )
        seen[key] = line

        ts_text = optional(row, i_time)
        try:
            timestamp = _parse_timestamp(ts_text) if ts_text is not None else None
        except ValueError:
            raise RowError(line, f"unreadable timestamp {ts_text!r}") from None
        nodes_text = optional(row, i_nodes)
        try:
            nodes = int(nodes_text) if nodes_text is not None else None
        except ValueError:
            raise RowError(line, f"non-integer node metric {nodes_text!r}") from None

        kind = row[i_event].strip()
        events.append(RawEvent(
            subject_id=subject,
            assignment_id=assignment,
            order=order,
            event_kind=kind,
            timestamp=timestamp,
            # subtypes only qualify edits
            edit_subtype=optional(row, i_edit) if kind == "File.Edit" else None,
            category_name=optional(row, i_category),
            node_metric=nodes,
        ))
    events.sort(key=lambda e: (e.subject_id, e.assignment_id, e.order))
    return events


_EDIT_SUBTYPES = {"Insert": Base.EDIT_INS, "Delete": Base.EDIT_DEL, "Paste": Base.EDIT_PST}


def map_kind(event: RawEvent) -> Base | None:
    """Base event type of a raw event, or None when the kind is not used."""
    kind = event.event_kind
    if kind == "File.Edit":
        return _EDIT_SUBTYPES.get(event.edit_subtype or "", Base.EDIT)
    if kind == "Run.Program":
        return Base.RUN
    if kind.startswith("File."):
        return Base.FILE
    if kind == "X-ChangeBlockCategory":
        return Base.CHAN
    if kind == "X-AddVariable":
        return Base.VAR
    return None


def collapse_runs(events: Sequence[EventType]) -> list[EventType]:
    return [key for key, _ in groupby(events)]


def _collapse_with_times(events, times):
    out_events, out_times = [], []
    for ev, t in zip(events, times):
        if out_events and out_events[-1] == ev:
            first, _ = out_times[-1]
            out_times[-1] = (first if first is not None else t, t)
        else:
            out_events.append(ev)
            out_times.append((t, t))
    return out_events, out_times


def _raw_stats(group: list[RawEvent], bases: list[Base | None]) -> RawStats:
    counts = Counter(b for b in bases if b is not None)
    stamps = [e.timestamp for e in group if e.timestamp is not None]
    minutes = None
    if stamps and len(stamps) == len(group):
        minutes = (max(stamps) - min(stamps)) / 60000.0
    nodes = None
    for e in reversed(group):
        if e.node_metric is not None:
            nodes = e.node_metric
            break
    return RawStats(
        deletions=counts[Base.EDIT_DEL],
        moves=counts[Base.EDIT],
        runs=counts[Base.RUN],
        minutes=minutes,
        nodes=nodes,
    )


def categorize(events: Iterable[RawEvent], scheme: Scheme | str = Scheme.GENERAL) -> list[EventSequence]:
    """Map raw events to event types, one collapsed sequence per (subject, assignment).

    Under the contextual scheme every event after a block-category change is
    suffixed with the newly opened category; CHAN events themselves stay bare.
    """
    scheme = Scheme(scheme)
    sequences = []
    for (subject, assignment), grp in groupby(events, key=lambda e: (e.subject_id, e.assignment_id)):
        group = list(grp)
        bases = [map_kind(e) for e in group]
        typed, times = [], []
        context = None
        for raw, base in zip(group, bases):
            if base is None:
                continue
            if base is Base.CHAN:
                typed.append(_interned(Base.CHAN))
                context = raw.category_name
            elif scheme is Scheme.CONTEXTUAL:
                typed.append(_interned(base, context))
            else:
                typed.append(_interned(base))
            times.append(raw.timestamp)
        collapsed, spans = _collapse_with_times(typed, times)
        sequences.append(EventSequence(
            subject_id=subject,
            assignment_id=assignment,
            events=tuple(collapsed),
            timestamps=tuple(spans),
            raw=_raw_stats(group, bases),
        ))
    return sequences


def dropped_kinds(events: Iterable[RawEvent]) -> Counter:
    """Counts of event kinds that categorize() discards."""
    return Counter(e.event_kind for e in events if map_kind(e) is None)


def write_sequences(sequences: Iterable[EventSequence], stream: IO[str]) -> None:
    for seq in sequences:
        stream.write(json.dumps(seq.to_json(), sort_keys=True))
        stream.write("\n")


def read_sequences(stream: IO[str]) -> list[EventSequence]:
    out = []
    for lineno, line in enumerate(stream, 1):
        if not line.strip():
            continue
        try:
            out.append(EventSequence.from_json(json.loads(line)))
        except (KeyError, ValueError, TypeError) as exc:
            raise RowError(lineno, f"bad sequence record: {exc}") from None
    return out
