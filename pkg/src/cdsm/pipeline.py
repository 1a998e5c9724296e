"""End-to-end CDSM: per-assignment mining, feature stacking, boosting and trial evaluation."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import IO, Mapping, Sequence

import numpy as np

from .features import Discretizer, FeatureTable, build_feature_table, stack
from .ingest import EventSequence, EventType
from .model import (EvaluationResult, Label, StumpModel, baseline_majority, cross_validate,
                    expert_features, median_split, predict, train_adaboost)
from .seqmine import FrequentPatternStats, MiningParams, collect_stats, mine_groups
from .stats import Classification, PatternClass, TestResult, classify_all

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CdsmConfig:
    params: MiningParams = field(default_factory=MiningParams)
    alpha: float = 0.05
    correction: str = "none"
    use_foc: bool = False
    yates: bool = False
    normalize: bool = False
    rounds: int = 50
    seed: int = 0
    threads: int = 1

    def to_json(self) -> dict:
        return {
            "min_support": self.params.min_percentile_support,
            "max_gap": self.params.max_gap,
            "max_length": self.params.max_length,
            "alpha": self.alpha,
            "correction": self.correction,
            "use_foc": self.use_foc,
            "yates": self.yates,
            "normalize": self.normalize,
            "rounds": self.rounds,
            "seed": self.seed,
        }


# -- grades -------------------------------------------------------------------

@dataclass(frozen=True)
class Gradebook:
    assignments: tuple[str, ...]
    grades: dict[str, dict[str, float]]

    def final(self) -> dict[str, float]:
        out = {}
        for subject, row in self.grades.items():
            if row:
                out[subject] = float(np.mean([row[a] for a in self.assignments if a in row]))
        return out

    def labels(self) -> dict[str, Label]:
        return median_split(self.final())


def read_grades(stream: IO[str], subject_col: str = "SubjectID") -> Gradebook:
    """Label file: a subject column plus one grade column per assignment, in course order."""
    reader = csv.DictReader(stream)
    header = reader.fieldnames or []
    if subject_col not in header:
        raise ValueError(f"label file lacks a {subject_col} column")
    assignments = tuple(h for h in header if h != subject_col)
    if not assignments:
        raise ValueError("label file has no grade columns")
    grades: dict[str, dict[str, float]] = {}
    for row in reader:
        subject = row[subject_col]
        entry = {}
        for a in assignments:
            text = (row.get(a) or "").strip()
            if text:
                try:
                    entry[a] = float(text)
                except ValueError:
                    raise ValueError(f"line {reader.line_num}: grade {text!r} is not a number") from None
        grades[subject] = entry
    return Gradebook(assignments, grades)


# -- mining -------------------------------------------------------------------

@dataclass(frozen=True)
class MinedPattern:
    assignment_id: str
    stats: FrequentPatternStats
    classification: Classification

    @property
    def pattern(self):
        return self.stats.pattern

    @property
    def label(self) -> PatternClass:
        return self.classification.label


@dataclass(frozen=True)
class AssignmentMining:
    assignment_id: str
    n_high: int
    n_low: int
    patterns: tuple[MinedPattern, ...]

    def kept(self) -> list[MinedPattern]:
        return [p for p in self.patterns if p.label is not PatternClass.DISCARDED]


def split_groups(sequences: Sequence[EventSequence], labels: Mapping[str, Label]):
    hp = [s for s in sequences if labels.get(s.subject_id) is Label.HIGH]
    lp = [s for s in sequences if labels.get(s.subject_id) is Label.LOW]
    return hp, lp


def _assignment_stats(sequences: Sequence[EventSequence], labels: Mapping[str, Label],
                      config: CdsmConfig, assignment_id: str):
    seqs = [s for s in sequences if s.assignment_id == assignment_id]
    hp, lp = split_groups(seqs, labels)
    if not hp or not lp:
        logger.warning("assignment %s lacks one performance group; nothing mined", assignment_id)
        return len(hp), len(lp), []
    patterns = mine_groups(hp, lp, config.params)
    return len(hp), len(lp), collect_stats(patterns, hp, lp, config.params.max_gap, normalize=config.normalize)


def _classified(assignment_id: str, n_high: int, n_low: int, stats, config: CdsmConfig,
                n_tests: int | None) -> AssignmentMining:
    if not stats:
        return AssignmentMining(assignment_id, n_high, n_low, ())
    classes = classify_all(stats, n_high, n_low, config.alpha, correction=config.correction,
                           use_foc=config.use_foc, yates=config.yates, n_tests=n_tests)
    mined = tuple(MinedPattern(assignment_id, s, c) for s, c in zip(stats, classes))
    return AssignmentMining(assignment_id, n_high, n_low, mined)


def mine_assignment(sequences: Sequence[EventSequence], labels: Mapping[str, Label],
                    config: CdsmConfig, assignment_id: str) -> AssignmentMining:
    """Mine, count and classify the patterns of one assignment on its own."""
    return _classified(assignment_id, *_assignment_stats(sequences, labels, config, assignment_id),
                       config, None)


def mine_all(sequences: Sequence[EventSequence], labels: Mapping[str, Label], config: CdsmConfig,
             assignments: Sequence[str]) -> list[AssignmentMining]:
    """Mine every assignment; a Bonferroni family spans all of them and both test layers."""
    found = [(a, *_assignment_stats(sequences, labels, config, a)) for a in assignments]
    family = 2 * sum(len(stats) for *_, stats in found)
    return [_classified(a, nh, nl, stats, config, family) for a, nh, nl, stats in found]


# -- serialization ------------------------------------------------------------

def _test_json(result: TestResult | None):
    return result.to_json() if result is not None else None


def _test_from_json(obj) -> TestResult | None:
    if obj is None:
        return None
    return TestResult(obj["statistic"], obj["df"], obj["p"])


def mining_to_json(minings: Sequence[AssignmentMining], config: CdsmConfig) -> dict:
    out = {"config": config.to_json(), "assignments": []}
    for m in minings:
        subjects_high = m.patterns[0].stats.subjects_high if m.patterns else ()
        subjects_low = m.patterns[0].stats.subjects_low if m.patterns else ()
        rows = []
        for p in m.patterns:
            s = p.stats
            rows.append({
                "pattern": [str(e) for e in s.pattern],
                "label": p.label.value,
                "seq_support_high": s.seq_support_high,
                "seq_support_low": s.seq_support_low,
                "foc_high": s.foc_high,
                "foc_low": s.foc_low,
                "instance_supports_high": list(s.instance_supports_high),
                "instance_supports_low": list(s.instance_supports_low),
                "chi2": _test_json(p.classification.chi2),
                "ttest": _test_json(p.classification.ttest),
            })
        out["assignments"].append({
            "assignment_id": m.assignment_id,
            "n_high": m.n_high,
            "n_low": m.n_low,
            "subjects_high": list(subjects_high),
            "subjects_low": list(subjects_low),
            "patterns": rows,
        })
    return out


def mining_from_json(obj: dict) -> list[AssignmentMining]:
    out = []
    for a in obj["assignments"]:
        subjects_high = tuple(a["subjects_high"])
        subjects_low = tuple(a["subjects_low"])
        mined = []
        for row in a["patterns"]:
            stats = FrequentPatternStats(
                pattern=tuple(EventType.parse(e) for e in row["pattern"]),
                seq_support_high=row["seq_support_high"],
                seq_support_low=row["seq_support_low"],
                foc_high=row["foc_high"],
                foc_low=row["foc_low"],
                instance_supports_high=tuple(row["instance_supports_high"]),
                instance_supports_low=tuple(row["instance_supports_low"]),
                subjects_high=subjects_high,
                subjects_low=subjects_low,
            )
            cls = Classification(PatternClass(row["label"]), _test_from_json(row["chi2"]),
                                 _test_from_json(row["ttest"]))
            mined.append(MinedPattern(a["assignment_id"], stats, cls))
        out.append(AssignmentMining(a["assignment_id"], a["n_high"], a["n_low"], tuple(mined)))
    return out


# -- features and prediction ----------------------------------------------------

def raw_tables(minings: Sequence[AssignmentMining], sequences: Sequence[EventSequence],
               subjects: Sequence[str], max_gap: int) -> list[FeatureTable]:
    tables = []
    for m in minings:
        seqs = [s for s in sequences if s.assignment_id == m.assignment_id]
        kept = [(p.stats, p.label) for p in m.kept()]
        tables.append(build_feature_table(kept, seqs, max_gap, m.assignment_id, subjects))
    return tables


def feature_table(minings: Sequence[AssignmentMining], sequences: Sequence[EventSequence],
                  subjects: Sequence[str], max_gap: int) -> FeatureTable:
    """Discretized, stacked table; each assignment's cut points come from ``subjects`` themselves."""
    tables = raw_tables(minings, sequences, subjects, max_gap)
    return stack([Discretizer.fit(t).transform(t) for t in tables])


class CdsmClassifier:
    """Mining, binning and boosting fit on one subject set, applied to another."""

    def __init__(self, sequences: Sequence[EventSequence], assignments: Sequence[str], config: CdsmConfig):
        self.sequences = list(sequences)
        self.assignments = list(assignments)
        self.config = config

    def fit(self, subjects: Sequence[str], labels: Mapping[str, Label]) -> "CdsmClassifier":
        train = set(subjects)
        train_labels = {s: labels[s] for s in subjects}
        seqs = [s for s in self.sequences if s.subject_id in train]
        self.minings_ = mine_all(seqs, train_labels, self.config, self.assignments)
        tables = raw_tables(self.minings_, seqs, list(subjects), self.config.params.max_gap)
        self.discretizers_ = [Discretizer.fit(t) for t in tables]
        X = stack([d.transform(t) for d, t in zip(self.discretizers_, tables)])
        self.model_ = train_adaboost(X, [labels[s] for s in subjects], self.config.rounds, self.config.seed)
        return self

    def transform(self, subjects: Sequence[str]) -> FeatureTable:
        tables = raw_tables(self.minings_, self.sequences, list(subjects), self.config.params.max_gap)
        return stack([d.transform(t) for d, t in zip(self.discretizers_, tables)])

    def predict(self, subjects: Sequence[str]) -> list[Label]:
        return predict(self.model_, self.transform(subjects))


@dataclass(frozen=True)
class TrialResult:
    trial: int
    assignments: tuple[str, ...]
    cdsm: EvaluationResult
    majority: EvaluationResult
    expert: EvaluationResult

    def to_json(self) -> dict:
        return {
            "trial": self.trial,
            "assignments": list(self.assignments),
            "cdsm": self.cdsm.to_json(),
            "majority": self.majority.to_json(),
            "expert": self.expert.to_json(),
        }


def run_trial(trial: int, sequences: Sequence[EventSequence], gradebook: Gradebook,
              config: CdsmConfig) -> TrialResult:
    """Evaluate CDSM and both baselines on assignments A1..A_trial."""
    if not 1 <= trial <= len(gradebook.assignments):
        raise ValueError(f"trial must be in 1..{len(gradebook.assignments)}")
    assignments = gradebook.assignments[:trial]
    labels = gradebook.labels()
    sequences = [s for s in sequences if s.assignment_id in assignments and s.subject_id in labels]

    def cdsm(train, test):
        return CdsmClassifier(sequences, assignments, config).fit(train, labels).predict(test)

    def majority(train, test):
        return baseline_majority([labels[s] for s in train], len(test))

    def expert(train, test):
        table = expert_features(sequences, gradebook.grades, assignments, sorted(labels))
        model = train_adaboost(table.rows(train), [labels[s] for s in train], config.rounds, config.seed)
        return predict(model, table.rows(test))

    results = [cross_validate(labels, fn, config.seed, threads=config.threads)
               for fn in (cdsm, majority, expert)]
    return TrialResult(trial, tuple(assignments), *results)


def train_full(X: FeatureTable, labels: Mapping[str, Label], config: CdsmConfig) -> StumpModel:
    subjects = [s for s in X.subjects if s in labels]
    return train_adaboost(X.rows(subjects), [labels[s] for s in subjects], config.rounds, config.seed)
