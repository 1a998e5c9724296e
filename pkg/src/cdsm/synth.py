"""Synthetic ProgSnap2 datasets with planted differential patterns and a ground-truth manifest."""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .ingest import Base, EventType
from .stats import PatternClass


class SynthConfigError(ValueError):
    pass


DEFAULT_BACKGROUND = {
    Base.EDIT_INS: 0.30,
    Base.EDIT: 0.20,
    Base.CHAN: 0.15,
    Base.RUN: 0.15,
    Base.EDIT_DEL: 0.10,
    Base.EDIT_PST: 0.04,
    Base.FILE: 0.03,
    Base.VAR: 0.03,
}

CATEGORIES = ("motion", "looks", "sound", "pen", "control", "sensing", "operators", "variables")

_FILE_KINDS = ("File.Save", "File.Close", "File.Create")
_EDIT_TYPES = {Base.EDIT_INS: "Insert", Base.EDIT_DEL: "Delete", Base.EDIT_PST: "Paste", Base.EDIT: ""}


@dataclass(frozen=True)
class Plant:
    """A pattern inserted contiguously into generated sequences.

    For FH/FL plants ``high`` and ``low`` are the per-group probabilities
    that a sequence contains one copy. For DH/DL plants a sequence contains
    the pattern with probability ``containment`` in both groups, and then
    holds ``1 + Poisson(rate - 1)`` copies, ``rate`` being ``high`` or ``low``.
    """

    pattern: tuple[Base, ...]
    target: PatternClass
    high: float
    low: float
    containment: float = 1.0
    assignments: tuple[str, ...] | None = None  # None: every assignment

    def __post_init__(self):
        object.__setattr__(self, "pattern", tuple(Base(b) if not isinstance(b, Base) else b
                                                  for b in self.pattern))
        object.__setattr__(self, "target", PatternClass(self.target))
        if not self.pattern:
            raise SynthConfigError("planted pattern is empty")
        if any(a == b for a, b in zip(self.pattern, self.pattern[1:])):
            raise SynthConfigError(f"planted pattern {self.name} repeats an event back to back")
        if self.target is PatternClass.DISCARDED:
            raise SynthConfigError("plants target FH, FL, DH or DL")
        if self.target in (PatternClass.FH, PatternClass.FL):
            if not (0 <= self.high <= 1 and 0 <= self.low <= 1):
                raise SynthConfigError("containment probabilities must lie in [0, 1]")
        elif self.high < 0 or self.low < 0 or not 0 <= self.containment <= 1:
            raise SynthConfigError("rates must be >= 0 and containment in [0, 1]")

    @property
    def name(self) -> str:
        return " ".join(b.value for b in self.pattern)

    def to_json(self) -> dict:
        return {
            "pattern": [b.value for b in self.pattern],
            "target": self.target.value,
            "high": self.high,
            "low": self.low,
            "containment": self.containment,
            "assignments": list(self.assignments) if self.assignments is not None else None,
        }


@dataclass(frozen=True)
class SynthConfig:
    n_high: int = 53
    n_low: int = 53
    assignments: tuple[str, ...] = ("A1", "A2", "A3", "A4", "A5")
    length_mean: float = 500.0
    length_spread: float = 50.0
    background: dict = field(default_factory=lambda: dict(DEFAULT_BACKGROUND))
    plants: tuple[Plant, ...] = ()
    seed: int = 0

    def validate(self) -> None:
        if self.n_high < 1 or self.n_low < 1:
            raise SynthConfigError("both groups need at least one subject")
        if not self.assignments:
            raise SynthConfigError("at least one assignment is required")
        if self.length_mean < 1 or self.length_spread < 0:
            raise SynthConfigError("length_mean must be >= 1 and length_spread >= 0")
        probs = np.array(list(self.background.values()), dtype=float)
        if np.any(probs < 0) or probs.sum() <= 0:
            raise SynthConfigError("background probabilities must be non-negative with positive sum")
        for plant in self.plants:
            if len(plant.pattern) > self.length_mean:
                raise SynthConfigError(
                    f"planted pattern {plant.name} is longer than the base sequence length")


@dataclass(frozen=True)
class SynthDataset:
    events_csv: str
    labels_csv: str
    manifest: dict

    def write(self, directory: str) -> dict[str, str]:
        os.makedirs(directory, exist_ok=True)
        paths = {
            "events": os.path.join(directory, "events.csv"),
            "labels": os.path.join(directory, "labels.csv"),
            "manifest": os.path.join(directory, "manifest.json"),
        }
        with open(paths["events"], "w", newline="") as fh:
            fh.write(self.events_csv)
        with open(paths["labels"], "w", newline="") as fh:
            fh.write(self.labels_csv)
        with open(paths["manifest"], "w") as fh:
            json.dump(self.manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return paths


EVENT_COLUMNS = ["SubjectID", "AssignmentID", "Order", "EventType", "ServerTimestamp",
                 "EditType", "X-BlockCategory", "X-MeaningfulNodes"]


def _copies(plant: Plant, high: bool, rng: np.random.Generator) -> int:
    if plant.target in (PatternClass.FH, PatternClass.FL):
        p = plant.high if high else plant.low
        return int(rng.random() < p)
    if rng.random() >= plant.containment:
        return 0
    rate = plant.high if high else plant.low
    return 1 + int(rng.poisson(max(rate - 1.0, 0.0)))


def generate(config: SynthConfig) -> SynthDataset:
    """Draw background events per sequence, insert plant copies at uniform positions, emit files."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    bases = list(config.background)
    probs = np.array([config.background[b] for b in bases], dtype=float)
    probs /= probs.sum()

    n = config.n_high + config.n_low
    width = len(str(n))
    subjects = [f"S{i:0{width}d}" for i in range(n)]
    is_high = np.zeros(n, dtype=bool)
    is_high[rng.permutation(n)[:config.n_high]] = True

    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(EVENT_COLUMNS)
    occurrences = []
    clock = 1_600_000_000_000
    for si, subject in enumerate(subjects):
        for aid in config.assignments:
            length = max(1, int(round(rng.normal(config.length_mean, config.length_spread))))
            background = [bases[k] for k in rng.choice(len(bases), size=length, p=probs)]
            blocks = []
            for pi, plant in enumerate(config.plants):
                if plant.assignments is not None and aid not in plant.assignments:
                    continue
                blocks.extend([pi] * _copies(plant, bool(is_high[si]), rng))
            blocks = [blocks[i] for i in rng.permutation(len(blocks))]
            slots = np.sort(rng.integers(0, length + 1, size=len(blocks)))
            typed: list[Base] = []
            starts = []  # (plant index, raw start)
            b = 0
            for pos in range(length + 1):
                while b < len(blocks) and slots[b] == pos:
                    starts.append((blocks[b], len(typed)))
                    typed.extend(config.plants[blocks[b]].pattern)
                    b += 1
                if pos < length:
                    typed.append(background[pos])
            # raw index -> index after run collapsing
            collapsed_at = np.cumsum([0] + [int(x != y) for x, y in zip(typed, typed[1:])])
            for pi, raw_start in starts:
                occurrences.append({
                    "subject": subject, "assignment": aid, "plant": pi,
                    "start": int(collapsed_at[raw_start]),
                })
            clock += int(rng.integers(3_600_000, 86_400_000))
            t = clock
            nodes = 0
            category = ""
            gaps = rng.exponential(4000.0, size=len(typed)).astype(np.int64) + 200
            for order, base in enumerate(typed):
                t += int(gaps[order])
                edit_type = ""
                if base is Base.CHAN:
                    category = CATEGORIES[int(rng.integers(len(CATEGORIES)))]
                    kind = "X-ChangeBlockCategory"
                elif base is Base.RUN:
                    kind = "Run.Program"
                elif base is Base.FILE:
                    kind = _FILE_KINDS[int(rng.integers(len(_FILE_KINDS)))]
                elif base is Base.VAR:
                    kind = "X-AddVariable"
                else:
                    kind = "File.Edit"
                    edit_type = _EDIT_TYPES[base]
                    if base is Base.EDIT_INS and rng.random() < 0.05:
                        nodes += 1
                    elif base is Base.EDIT_DEL and nodes and rng.random() < 0.05:
                        nodes -= 1
                writer.writerow([subject, aid, order, kind, t, edit_type,
                                 category if base is Base.CHAN else "", nodes])

    grades = io.StringIO()
    gw = csv.writer(grades, lineterminator="\n")
    gw.writerow(["SubjectID", *config.assignments])
    for si, subject in enumerate(subjects):
        lo, hi = (0.85, 1.0) if is_high[si] else (0.35, 0.8)
        gw.writerow([subject] + [f"{rng.uniform(lo, hi):.4f}" for _ in config.assignments])

    manifest = {
        "seed": config.seed,
        "assignments": list(config.assignments),
        "plants": [p.to_json() for p in config.plants],
        "groups": {s: ("HIGH" if is_high[i] else "LOW") for i, s in enumerate(subjects)},
        "occurrences": occurrences,
    }
    return SynthDataset(out.getvalue(), grades.getvalue(), manifest)


def plant_patterns(config: SynthConfig) -> list[tuple[EventType, ...]]:
    """Planted patterns as general-scheme event-type tuples."""
    return [tuple(EventType(b) for b in p.pattern) for p in config.plants]


# One plant per class, built from the rarer default event types so that the
# background rarely produces them by chance.
DEMO_PLANTS = (
    Plant((Base.VAR, Base.RUN, Base.FILE, Base.VAR), PatternClass.FH, 0.9, 0.1),
    Plant((Base.EDIT_PST, Base.CHAN, Base.EDIT_PST, Base.FILE), PatternClass.FL, 0.1, 0.9),
    Plant((Base.FILE, Base.EDIT_DEL, Base.VAR, Base.EDIT_DEL), PatternClass.DH, 5.0, 2.0),
    Plant((Base.VAR, Base.EDIT_INS, Base.EDIT_PST, Base.RUN), PatternClass.DL, 2.0, 5.0),
)


def _alternating(patterns, strength: float) -> tuple[Plant, ...]:
    out = []
    weak = round(1.0 - strength, 12)  # keep 0.2 from printing as 0.19999999999999996
    for i, pattern in enumerate(patterns):
        if i % 2 == 0:
            out.append(Plant(pattern, PatternClass.FH, strength, weak))
        else:
            out.append(Plant(pattern, PatternClass.FL, weak, strength))
    return tuple(out)


# Ten independent containment plants (five FH, five FL) at 0.8 vs 0.2. Each
# one alone caps accuracy near 0.8, and its median cut collapses whenever
# half the training fold lacks it, so prediction needs several.
_V, _F, _P, _R, _H = Base.VAR, Base.FILE, Base.EDIT_PST, Base.RUN, Base.CHAN
STRONG_PLANTS = _alternating([
    (_V, _R, _F, _V), (_F, _V, _P, _R), (_P, _V, _H, _F), (_V, _F, _V, _P), (_F, _P, _F, _V),
    (_P, _H, _P, _F), (_V, _F, _R, _P), (_F, _H, _V, _P), (_P, _F, _P, _V), (_V, _P, _V, _F),
], 0.8)
