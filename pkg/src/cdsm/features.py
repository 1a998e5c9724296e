"""Per-student feature tables built from classified patterns, their binning, and stacking."""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from typing import IO, Iterable, Sequence

import numpy as np

from .seqmine import Pattern, count_occurrences
from .stats import Classification, PatternClass


class FeatureTableError(ValueError):
    pass


@dataclass(frozen=True)
class Column:
    assignment_id: str
    name: str
    label: PatternClass | None = None
    pattern: Pattern | None = None

    @property
    def header(self) -> str:
        label = self.label.value if self.label is not None else "raw"
        return f"{self.assignment_id}:{self.name}:{label}"

    @classmethod
    def from_header(cls, text: str) -> "Column":
        try:
            assignment, rest = text.split(":", 1)
            name, label = rest.rsplit(":", 1)
        except ValueError:
            raise FeatureTableError(f"bad column header {text!r}") from None
        return cls(assignment, name, None if label == "raw" else PatternClass(label))


@dataclass(frozen=True)
class FeatureTable:
    subjects: tuple[str, ...]
    columns: tuple[Column, ...]
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.size == 0:
            values = values.reshape(len(self.subjects), len(self.columns))
        if values.shape != (len(self.subjects), len(self.columns)):
            raise FeatureTableError(
                f"values shape {values.shape} does not match "
                f"{len(self.subjects)} subjects x {len(self.columns)} columns")
        object.__setattr__(self, "values", values)

    def rows(self, subjects: Sequence[str]) -> "FeatureTable":
        """Sub-table for ``subjects``; unknown subjects get all-zero rows."""
        index = {s: i for i, s in enumerate(self.subjects)}
        out = np.zeros((len(subjects), len(self.columns)), dtype=self.values.dtype)
        for r, s in enumerate(subjects):
            if s in index:
                out[r] = self.values[index[s]]
        return FeatureTable(tuple(subjects), self.columns, out)

    def column_index(self) -> dict[tuple[str, str], int]:
        return {(c.assignment_id, c.name): i for i, c in enumerate(self.columns)}


def pattern_name(pattern: Pattern) -> str:
    return " ".join(str(e) for e in pattern)


def build_feature_table(classified: Iterable[tuple], sequences: Sequence, max_gap: int,
                        assignment_id: str | None = None,
                        subjects: Sequence[str] | None = None) -> FeatureTable:
    """Raw instance-support counts of each non-discarded pattern per student.

    ``classified`` yields (stats-or-pattern, label-or-Classification) pairs.
    Rows follow ``subjects`` when given (absent students count 0), otherwise
    the sequences' subject ids in order.
    """
    kept = []
    for item, label in classified:
        if isinstance(label, Classification):
            label = label.label
        label = PatternClass(label)
        if label is PatternClass.DISCARDED:
            continue
        kept.append((tuple(getattr(item, "pattern", item)), label))
    if assignment_id is None:
        ids = {s.assignment_id for s in sequences}
        if len(ids) > 1:
            raise FeatureTableError("sequences span several assignments; pass assignment_id")
        assignment_id = ids.pop() if ids else ""
    if subjects is None:
        subjects = [s.subject_id for s in sequences]
    subjects = tuple(subjects)
    row_of = {s: i for i, s in enumerate(subjects)}
    present = [s for s in sequences if s.subject_id in row_of]
    counts = count_occurrences([p for p, _ in kept], present, max_gap)
    values = np.zeros((len(subjects), len(kept)), dtype=np.int64)
    for j, seq in enumerate(present):
        values[row_of[seq.subject_id]] = counts[:, j]
    columns = tuple(Column(assignment_id, pattern_name(p), label, p) for p, label in kept)
    return FeatureTable(subjects, columns, values)


@dataclass(frozen=True)
class Discretizer:
    """Equal-frequency cut points per column, fit on one table and applied to others.

    FH/FL columns use the median, DH/DL columns the 1/3 and 2/3 quantiles
    (inclusive linear interpolation). Columns without a pattern label pass
    through unchanged.
    """

    columns: tuple[Column, ...]
    cuts: tuple[tuple[float, ...] | None, ...]

    @classmethod
    def fit(cls, table: FeatureTable) -> "Discretizer":
        cuts = []
        for j, col in enumerate(table.columns):
            if col.label is None or col.label is PatternClass.DISCARDED:
                cuts.append(None)
                continue
            values = table.values[:, j].astype(float)
            if len(values) == 0:
                cuts.append(None)
                continue
            qs = (0.5,) if col.label.n_bins == 2 else (1 / 3, 2 / 3)
            cuts.append(tuple(float(q) for q in np.quantile(values, qs, method="linear")))
        return cls(table.columns, tuple(cuts))

    def transform(self, table: FeatureTable) -> FeatureTable:
        if table.columns != self.columns:
            raise FeatureTableError("table columns differ from the fitted columns")
        if not any(c is not None for c in self.cuts):
            return table
        out = np.array(table.values, dtype=float if table.values.dtype.kind == "f" else np.int64)
        for j, cut in enumerate(self.cuts):
            if cut is None:
                continue
            # code = number of cut points at or below the value
            out[:, j] = np.searchsorted(np.asarray(cut), table.values[:, j], side="right")
        return replace(table, values=out)


def discretize(table: FeatureTable) -> FeatureTable:
    return Discretizer.fit(table).transform(table)


def stack(tables: Sequence[FeatureTable]) -> FeatureTable:
    """Concatenate columns; rows are the union of subjects in first-seen order, missing cells 0."""
    subjects: list[str] = []
    seen = set()
    for t in tables:
        for s in t.subjects:
            if s not in seen:
                seen.add(s)
                subjects.append(s)
    columns: list[Column] = []
    keys = set()
    for t in tables:
        for c in t.columns:
            key = (c.assignment_id, c.name)
            if key in keys:
                raise FeatureTableError(f"duplicate column {c.header!r}")
            keys.add(key)
            columns.append(c)
    is_float = any(t.values.dtype.kind == "f" for t in tables)
    blocks = [t.rows(subjects).values for t in tables]
    if blocks:
        values = np.hstack([b.astype(float if is_float else np.int64) for b in blocks])
    else:
        values = np.zeros((0, 0), dtype=np.int64)
    return FeatureTable(tuple(subjects), tuple(columns), values)


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return str(int(value)) if value.is_integer() else repr(value)
    return str(int(value))


def write_csv(table: FeatureTable, stream: IO[str]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["subject_id"] + [c.header for c in table.columns])
    for subject, row in zip(table.subjects, table.values):
        writer.writerow([subject] + [_fmt(v) for v in row])


def read_csv(stream: IO[str]) -> FeatureTable:
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise FeatureTableError("empty feature file") from None
    if not header or header[0] != "subject_id":
        raise FeatureTableError("feature file must start with a subject_id column")
    columns = tuple(Column.from_header(h) for h in header[1:])
    subjects, rows = [], []
    for line in reader:
        if not line:
            continue
        if len(line) != len(header):
            raise FeatureTableError(f"row for {line[0]!r} has {len(line)} fields, expected {len(header)}")
        subjects.append(line[0])
        rows.append([float(v) for v in line[1:]])
    values = np.asarray(rows, dtype=float).reshape(len(subjects), len(columns))
    if np.all(values == np.round(values)):
        values = values.astype(np.int64)
    return FeatureTable(tuple(subjects), columns, values)
