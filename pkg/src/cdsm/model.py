"""Labels, boosted decision stumps, baselines and the modified hold-out cross-validation."""

from __future__ import annotations

import enum
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .features import Column, FeatureTable

logger = logging.getLogger(__name__)

# alpha for a stump with zero weighted error, i.e. 0.5 * ln((1 - 1e-10) / 1e-10)
ALPHA_CAP = 0.5 * math.log((1 - 1e-10) / 1e-10)
_TIE_TOL = 1e-12


class Label(str, enum.Enum):
    HIGH = "HIGH"
    LOW = "LOW"

    @property
    def sign(self) -> int:
        # LOW is the positive class
        return 1 if self is Label.LOW else -1


def median_split(grades: Mapping[str, float]) -> dict[str, Label]:
    """HIGH above the median grade, LOW below.

    Subjects exactly at the median are walked in id order and each goes to
    the currently smaller group (HIGH when level), which keeps the group
    sizes within one of each other.
    """
    if len(grades) < 2:
        raise ValueError("median_split needs at least 2 graded subjects")
    values = np.array(list(grades.values()), dtype=float)
    if np.all(values == values[0]):
        logger.warning("all %d grades are identical; split is arbitrary", len(values))
    threshold = float(np.median(values))
    labels: dict[str, Label] = {}
    ties = []
    for subject in sorted(grades):
        g = grades[subject]
        if g > threshold:
            labels[subject] = Label.HIGH
        elif g < threshold:
            labels[subject] = Label.LOW
        else:
            ties.append(subject)
    n_high = sum(1 for v in labels.values() if v is Label.HIGH)
    n_low = len(labels) - n_high
    for subject in ties:
        if n_high <= n_low:
            labels[subject] = Label.HIGH
            n_high += 1
        else:
            labels[subject] = Label.LOW
            n_low += 1
    return {s: labels[s] for s in grades}


# -- boosting ---------------------------------------------------------------

@dataclass(frozen=True)
class Stump:
    feature: int
    threshold: float
    polarity: int  # predicts `polarity` when x > threshold, else -polarity
    alpha: float

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.where(X[:, self.feature] > self.threshold, self.polarity, -self.polarity)


@dataclass(frozen=True)
class StumpModel:
    rounds: tuple[Stump, ...]
    feature_names: tuple[str, ...] = ()
    seed: int = 0

    def margin(self, X: np.ndarray) -> np.ndarray:
        out = np.zeros(X.shape[0])
        for stump in self.rounds:
            out += stump.alpha * stump.predict(X)
        return out

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "feature_names": list(self.feature_names),
            "rounds": [
                {"feature": s.feature, "threshold": s.threshold, "polarity": s.polarity, "alpha": s.alpha}
                for s in self.rounds
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "StumpModel":
        return cls(
            rounds=tuple(Stump(int(r["feature"]), float(r["threshold"]), int(r["polarity"]), float(r["alpha"]))
                         for r in obj["rounds"]),
            feature_names=tuple(obj.get("feature_names", ())),
            seed=int(obj.get("seed", 0)),
        )


def _as_matrix(X) -> np.ndarray:
    values = X.values if isinstance(X, FeatureTable) else X
    values = np.asarray(values, dtype=float)
    if values.ndim != 2:
        raise ValueError("feature matrix must be 2-D")
    return values


def _signs(y: Sequence) -> np.ndarray:
    return np.array([Label(v).sign for v in y], dtype=float)


def best_stump(X: np.ndarray, y: np.ndarray, w: np.ndarray) -> tuple[int, float, int, float]:
    """Weighted-error minimizing (feature, threshold, polarity, error).

    Thresholds lie below the smallest value or halfway between consecutive
    distinct values. Ties go to the lowest feature, then the lowest
    threshold, then polarity +1.
    """
    n, d = X.shape
    order = np.argsort(X, axis=0, kind="stable")
    xs = np.take_along_axis(X, order, axis=0)
    pos = np.where(y > 0, w, 0.0)[order]
    neg = np.where(y < 0, w, 0.0)[order]
    cum_pos = np.cumsum(pos, axis=0)
    cum_neg = np.cumsum(neg, axis=0)
    total_pos, total_neg = pos.sum(axis=0), neg.sum(axis=0)
    # candidate 0: everything to the right; candidate i: split after sorted row i-1
    err = np.full((d, n, 2), np.inf)
    err[:, 0, 0] = total_neg
    err[:, 0, 1] = total_pos
    thresholds = np.empty((d, n))
    thresholds[:, 0] = xs[0] - 1.0
    if n > 1:
        valid = (xs[1:] > xs[:-1]).T
        plus = (cum_pos[:-1] + (total_neg - cum_neg[:-1])).T
        minus = (cum_neg[:-1] + (total_pos - cum_pos[:-1])).T
        err[:, 1:, 0] = np.where(valid, plus, np.inf)
        err[:, 1:, 1] = np.where(valid, minus, np.inf)
        thresholds[:, 1:] = ((xs[1:] + xs[:-1]) / 2.0).T
    flat = err.ravel()
    best = flat.min()
    idx = int(np.flatnonzero(flat <= best + _TIE_TOL)[0])
    feature, cand, pol = np.unravel_index(idx, err.shape)
    return int(feature), float(thresholds[feature, cand]), 1 if pol == 0 else -1, float(best)


def train_adaboost(X, y: Sequence, rounds: int = 50, seed: int = 0,
                   feature_names: Sequence[str] | None = None) -> StumpModel:
    """Discrete AdaBoost over decision stumps (LOW = +1).

    Stops early on a perfect stump (kept with a capped weight) or when no
    stump beats chance. The procedure is deterministic; ``seed`` is recorded
    for provenance only.
    """
    if rounds < 1:
        raise ValueError("rounds must be positive")
    if isinstance(X, FeatureTable) and feature_names is None:
        feature_names = [c.header for c in X.columns]
    X = _as_matrix(X)
    ys = _signs(y)
    if len(ys) != X.shape[0]:
        raise ValueError("X and y differ in length")
    if len(ys) < 2 or len(set(ys.tolist())) < 2:
        raise ValueError("train_adaboost needs at least 2 subjects from both classes")
    names = tuple(feature_names or ())
    if X.shape[1] == 0:
        return StumpModel((), names, seed)
    w = np.full(len(ys), 1.0 / len(ys))
    stumps = []
    for _ in range(rounds):
        feature, threshold, polarity, _ = best_stump(X, ys, w)
        h = np.where(X[:, feature] > threshold, polarity, -polarity)
        eps = float(w[h != ys].sum())
        if eps >= 0.5 - _TIE_TOL:
            break
        if eps <= 0:
            stumps.append(Stump(feature, threshold, polarity, ALPHA_CAP))
            break
        alpha = 0.5 * math.log((1 - eps) / eps)
        stumps.append(Stump(feature, threshold, polarity, alpha))
        w = w * np.exp(-alpha * ys * h)
        w /= w.sum()
    return StumpModel(tuple(stumps), names, seed)


def predict(model: StumpModel, X) -> list[Label]:
    """Sign of the boosted margin; a zero margin predicts LOW."""
    if isinstance(X, FeatureTable) and model.feature_names:
        index = {c.header: i for i, c in enumerate(X.columns)}
        used = {model.feature_names[s.feature] for s in model.rounds}
        missing = sorted(used - set(index))
        if missing:
            raise KeyError(f"feature table lacks model columns: {missing}")
        # rebuild the training layout; columns no stump reads may stay zero
        values = _as_matrix(X)
        matrix = np.zeros((values.shape[0], len(model.feature_names)))
        for i, name in enumerate(model.feature_names):
            if name in index:
                matrix[:, i] = values[:, index[name]]
    else:
        matrix = _as_matrix(X)
        needed = max((s.feature for s in model.rounds), default=-1)
        if needed >= matrix.shape[1]:
            raise KeyError(f"feature matrix has {matrix.shape[1]} columns, model uses column {needed}")
    margin = model.margin(matrix)
    return [Label.LOW if m >= 0 else Label.HIGH for m in margin]


def exponential_loss(model: StumpModel, X, y: Sequence) -> float:
    return float(np.exp(-_signs(y) * model.margin(_as_matrix(X))).sum())


# -- baselines and metrics --------------------------------------------------

def baseline_majority(y_train: Sequence, n_test: int) -> list[Label]:
    """Majority training label for every test subject; ties go to LOW."""
    if not y_train:
        raise ValueError("y_train is empty")
    n_low = sum(1 for v in y_train if Label(v) is Label.LOW)
    label = Label.LOW if 2 * n_low >= len(y_train) else Label.HIGH
    return [label] * n_test


def metrics(predicted: Sequence, actual: Sequence) -> tuple[float, float, float]:
    """(accuracy, precision, recall) with LOW as the positive class."""
    if len(predicted) != len(actual):
        raise ValueError("predicted and actual differ in length")
    if not actual:
        raise ValueError("no predictions to score")
    p = [Label(v) is Label.LOW for v in predicted]
    a = [Label(v) is Label.LOW for v in actual]
    tp = sum(1 for x, z in zip(p, a) if x and z)
    tn = sum(1 for x, z in zip(p, a) if not x and not z)
    fp = sum(1 for x, z in zip(p, a) if x and not z)
    fn = sum(1 for x, z in zip(p, a) if not x and z)
    accuracy = (tp + tn) / len(a)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return accuracy, precision, recall


def expert_features(sequences: Sequence, grades: Mapping[str, Mapping[str, float]],
                    assignments: Sequence[str], subjects: Sequence[str] | None = None) -> FeatureTable:
    """Expert-rule features over the trial's assignments.

    Process counts (deletions, moves, runs, minutes, meaningful nodes) are
    summed over ``assignments``; every assignment but the last also adds its
    grade as a column.
    """
    wanted = set(assignments)
    seqs = [s for s in sequences if s.assignment_id in wanted]
    if subjects is None:
        subjects = sorted({s.subject_id for s in seqs} | set(grades))
    row = {s: i for i, s in enumerate(subjects)}
    names = ["deletions", "moves", "runs", "minutes", "nodes"]
    totals = np.zeros((len(subjects), len(names)))
    have_time = bool(seqs)
    have_nodes = False
    for s in seqs:
        raw = s.raw
        if raw is None:
            have_time = False
            continue
        if s.subject_id not in row:
            continue
        r = row[s.subject_id]
        totals[r, 0] += raw.deletions
        totals[r, 1] += raw.moves
        totals[r, 2] += raw.runs
        if raw.minutes is None:
            have_time = False
        else:
            totals[r, 3] += raw.minutes
        if raw.nodes is not None:
            have_nodes = True
            totals[r, 4] += raw.nodes
    keep = [0, 1, 2]
    if have_time:
        keep.append(3)
    else:
        logger.warning("timestamps missing; expert Time feature omitted")
    if have_nodes:
        keep.append(4)
    columns = [Column("expert", names[k]) for k in keep]
    blocks = [totals[:, keep]]
    for aid in list(assignments)[:-1]:
        columns.append(Column(aid, "grade"))
        blocks.append(np.array([[grades.get(s, {}).get(aid, 0.0)] for s in subjects], dtype=float))
    return FeatureTable(tuple(subjects), tuple(columns), np.hstack(blocks))


# -- cross-validation -------------------------------------------------------

def make_folds(subjects: Sequence[str], seed: int, n_folds: int = 10) -> list[list[str]]:
    """Shuffle subjects by ``seed`` into ``n_folds`` near-equal folds."""
    if len(subjects) < n_folds:
        raise ValueError(f"cross-validation needs at least {n_folds} subjects, got {len(subjects)}")
    ordered = sorted(subjects)
    perm = np.random.default_rng(seed).permutation(len(ordered))
    return [sorted(ordered[i] for i in part) for part in np.array_split(perm, n_folds)]


def rotation(folds: Sequence[Sequence[str]], r: int) -> tuple[list[str], list[str], list[str]]:
    """(train, test, discarded) for rotation ``r``: test fold r, the next fold discarded."""
    k = len(folds)
    test = list(folds[r])
    discarded = list(folds[(r + 1) % k])
    train = sorted(s for i, f in enumerate(folds) if i not in (r, (r + 1) % k) for s in f)
    return train, test, discarded


@dataclass(frozen=True)
class FoldResult:
    rotation: int
    test: tuple[str, ...]
    discarded: tuple[str, ...]
    n_train: int
    predictions: tuple[Label, ...]
    accuracy: float
    precision: float
    recall: float

    def to_json(self) -> dict:
        return {
            "rotation": self.rotation,
            "test": list(self.test),
            "discarded": list(self.discarded),
            "n_train": self.n_train,
            "predictions": [p.value for p in self.predictions],
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
        }


@dataclass(frozen=True)
class EvaluationResult:
    folds: tuple[FoldResult, ...]
    seed: int
    accuracy: float = field(init=False)
    precision: float = field(init=False)
    recall: float = field(init=False)

    def __post_init__(self):
        for name in ("accuracy", "precision", "recall"):
            value = float(np.mean([getattr(f, name) for f in self.folds])) if self.folds else 0.0
            object.__setattr__(self, name, value)

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "aggregate": {"accuracy": self.accuracy, "precision": self.precision, "recall": self.recall},
            "folds": [f.to_json() for f in self.folds],
        }


FitPredict = Callable[[list[str], list[str]], Sequence[Label]]


def cross_validate(labels: Mapping[str, Label], fit_predict: FitPredict, seed: int,
                   n_folds: int = 10, threads: int = 1) -> EvaluationResult:
    """Modified hold-out CV: per rotation train on n_folds-2 folds, test on one, discard one.

    ``fit_predict(train, test)`` must fit its whole pipeline on ``train``
    only and return predictions for ``test``.
    """
    folds = make_folds(list(labels), seed, n_folds)

    def run(r: int) -> FoldResult:
        train, test, discarded = rotation(folds, r)
        predicted = [Label(p) for p in fit_predict(train, test)]
        actual = [labels[s] for s in test]
        acc, prec, rec = metrics(predicted, actual)
        return FoldResult(r, tuple(test), tuple(discarded), len(train), tuple(predicted), acc, prec, rec)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, range(n_folds)))
    else:
        results = [run(r) for r in range(n_folds)]
    results.sort(key=lambda f: f.rotation)
    return EvaluationResult(tuple(results), seed)
