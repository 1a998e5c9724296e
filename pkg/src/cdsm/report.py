"""Interpretation tables for classified patterns and occurrence lookup for replay."""

from __future__ import annotations

import math
from itertools import combinations
from dataclasses import dataclass
from typing import Iterable, Sequence

from .seqmine import Pattern, find_embeddings
from .stats import PatternClass, is_boundary, odds_ratio


@dataclass(frozen=True)
class PatternReportRow:
    pattern: Pattern
    assignment_id: str
    label: PatternClass
    perc_high: float
    perc_low: float
    diff: float
    odds_ratio: float
    boundary: bool
    chi2_p: float | None
    ttest_p: float | None
    subpattern_of: tuple[str, ...] = ()

    @property
    def name(self) -> str:
        return " ".join(str(e) for e in self.pattern)

    def odds_ratio_text(self) -> str:
        return format_odds_ratio(self.odds_ratio)

    def to_json(self) -> dict:
        return {
            "pattern": [str(e) for e in self.pattern],
            "assignment_id": self.assignment_id,
            "label": self.label.value,
            "perc_high": self.perc_high,
            "perc_low": self.perc_low,
            "diff": self.diff,
            "odds_ratio": self.odds_ratio if math.isfinite(self.odds_ratio) else self.odds_ratio_text(),
            "boundary": self.boundary,
            "chi2_p": self.chi2_p,
            "ttest_p": self.ttest_p,
            "subpattern_of": list(self.subpattern_of),
        }


def format_odds_ratio(value: float) -> str:
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf"
    if value == 0:
        return "0"
    return f"{value:.2f}"


def _containing(patterns: Sequence[Pattern]) -> dict[Pattern, list[Pattern]]:
    """Map each strict subsequence to the patterns that contain it."""
    out: dict[Pattern, list[Pattern]] = {}
    for q in patterns:
        subs = {tuple(q[i] for i in idx)
                for k in range(1, len(q))
                for idx in combinations(range(len(q)), k)}
        for sub in subs:
            out.setdefault(sub, []).append(q)
    return out


def _or_distance(value: float) -> float:
    return 0.0 if math.isnan(value) else abs(value - 1.0)


def build_report(minings: Iterable) -> list[PatternReportRow]:
    """One row per FH/FL/DH/DL pattern, most differential first.

    Accepts mined assignments (objects with ``assignment_id``, ``n_high``,
    ``n_low`` and ``patterns`` of classified stats). Rows are ordered by Diff
    descending, then by how far the odds ratio is from 1, then by pattern.
    """
    rows = []
    for mining in minings:
        kept = [p for p in mining.patterns if p.label is not PatternClass.DISCARDED]
        supers = _containing([p.stats.pattern for p in kept])
        for p in kept:
            s = p.stats
            perc_high = s.seq_support_high / mining.n_high
            perc_low = s.seq_support_low / mining.n_low
            cls = p.classification
            rows.append(PatternReportRow(
                pattern=s.pattern,
                assignment_id=mining.assignment_id,
                label=p.label,
                perc_high=perc_high,
                perc_low=perc_low,
                diff=abs(perc_high - perc_low),
                odds_ratio=odds_ratio(perc_high, perc_low),
                boundary=is_boundary(perc_high, perc_low),
                chi2_p=cls.chi2.p_value if cls.chi2 is not None else None,
                ttest_p=cls.ttest.p_value if cls.ttest is not None else None,
                subpattern_of=tuple(sorted(
                    " ".join(str(e) for e in q) for q in supers.get(s.pattern, ()))),
            ))
    rows.sort(key=lambda r: (-r.diff, -_or_distance(r.odds_ratio),
                             tuple(str(e) for e in r.pattern), r.assignment_id))
    return rows


def top_fraction(rows: Sequence[PatternReportRow], fraction: float = 0.15) -> list[PatternReportRow]:
    """The leading ceil(fraction * n) rows on each side, high-associated first."""
    if not 0 < fraction <= 1:
        raise ValueError("fraction must be in (0, 1]")
    out = []
    for side in (lambda r: r.label.is_high, lambda r: r.label.is_low):
        group = [r for r in rows if side(r)]
        # tolerance keeps 0.15 * 20 (3.0000000000000004) at 3
        take = math.ceil(fraction * len(group) - 1e-9)
        out.extend(group[:take])
    return out


@dataclass(frozen=True)
class Occurrence:
    indices: tuple[int, ...]
    span: tuple[int, int]
    time_span: tuple[float | None, float | None]


def locate_occurrences(pattern: Pattern, subject: str, sequences: Sequence, max_gap: int,
                       assignment_id: str | None = None) -> list[Occurrence]:
    """Counted occurrences of ``pattern`` in one subject's sequence, with timestamp ranges."""
    matches = [s for s in sequences if s.subject_id == subject
               and (assignment_id is None or s.assignment_id == assignment_id)]
    if not matches:
        raise LookupError(f"no sequence for subject {subject!r}")
    if len(matches) > 1:
        raise LookupError(f"subject {subject!r} has several sequences; pass assignment_id")
    seq = matches[0]
    out = []
    for idx in find_embeddings(pattern, seq.events, max_gap):
        first, last = idx[0], idx[-1]
        if seq.timestamps:
            times = (seq.timestamps[first][0], seq.timestamps[last][1])
        else:
            times = (None, None)
        out.append(Occurrence(idx, (first, last), times))
    return out


def _pct(x: float) -> str:
    return f"{round(100 * x)}%"


def _p(x: float | None) -> str:
    return "-" if x is None else f"{x:.2g}"


def render_text(rows: Sequence[PatternReportRow]) -> str:
    """Aligned plain-text table: index, exercise, class, pattern, percentages, diff, OR, p-values."""
    header = ["Index", "Ex.", "Class", "Pattern", "PercHigh", "PercLow", "Diff.", "OR", "p(chi2)", "p(t)"]
    body = []
    counters = {"H": 0, "L": 0}
    for r in rows:
        side = "H" if r.label.is_high else "L"
        counters[side] += 1
        body.append([f"{side}{counters[side]}", r.assignment_id, r.label.value, r.name,
                     _pct(r.perc_high), _pct(r.perc_low), _pct(r.diff), r.odds_ratio_text(),
                     _p(r.chi2_p), _p(r.ttest_p)])
    widths = [max(len(str(row[i])) for row in [header] + body) for i in range(len(header))]
    lines = ["  ".join(str(c).ljust(w) for c, w in zip(row, widths)).rstrip() for row in [header] + body]
    return "\n".join(lines) + "\n"
