"""End-to-end acceptance checks, one test per criterion.

Each test records a one-line summary; the terminal summary lists a PASS or
FAIL line per criterion (see conftest.py). Run with ``-s`` to also see the
lines as they are produced.
"""

import io
import math
import os
import time
from fractions import Fraction

import numpy as np
import pytest
from scipy import stats as sps

from cdsm.cli import run
from cdsm.features import Column, FeatureTable, discretize
from cdsm.ingest import categorize, parse_progsnap2
from cdsm.model import (
    Label, StumpModel, baseline_majority, cross_validate, exponential_loss, make_folds, rotation,
    train_adaboost,
)
from cdsm.pipeline import CdsmConfig, mine_all, read_grades, run_trial
from cdsm.seqmine import MiningParams, enumerate_frequent
from cdsm.stats import (
    PatternClass, chi2_sf, chi_square_2x2, odds_ratio, student_t_two_sided, welch_t_test,
)
from cdsm.synth import DEMO_PLANTS, STRONG_PLANTS, SynthConfig, generate, plant_patterns

from oracles import brute_frequent, exhaustive_stump, random_instance


def report(record_property, number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(line)
    record_property("detail", detail)
    return ok


# -- 1. mining oracle equivalence ----------------------------------------------

@pytest.mark.criterion(1)
def test_criterion_1_mining_matches_brute_force(record_property):
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    mismatches = 0
    for _ in range(200):
        seqs = random_instance(rng, max_alphabet=4, max_seqs=6, max_len=8)
        length = int(rng.integers(1, 5))
        support = float(rng.choice([0.2, 1 / 3, 0.5, 2 / 3, 1.0]))
        for gap in (0, 1, 2):
            got = enumerate_frequent(seqs, MiningParams(support, gap, length))
            mismatches += got != brute_frequent(seqs, support, gap, length)
    elapsed = time.perf_counter() - start
    ok = mismatches == 0 and elapsed < 10
    report(record_property, 1, ok, f"200 instances x 3 gaps, {mismatches} mismatches, {elapsed:.2f}s (< 10s)")
    assert ok


# -- 2. statistics fidelity ----------------------------------------------------

@pytest.mark.criterion(2)
def test_criterion_2_statistics_match_reference(record_property):
    chi_grid = np.geomspace(1e-3, 80, 100)
    chi_err = max(abs(chi2_sf(x, 1.0) - sps.chi2.sf(x, 1)) for x in chi_grid)
    t_values = np.linspace(0.05, 9, 10)
    dfs = (1.5, 2.0, 3.0, 4.7, 7.0, 10.0, 20.0, 45.3, 100.0, 250.0)
    t_err = max(abs(student_t_two_sided(t, df) - 2 * sps.t.sf(t, df)) for t in t_values for df in dfs)

    # the same agreement through the public tests on random data
    rng = np.random.default_rng(7)
    table_err = welch_err = 0.0
    for _ in range(100):
        a, b, c, d = (int(x) for x in rng.integers(1, 80, size=4))
        ref = sps.chi2_contingency([[a, b], [c, d]], correction=False)[1]
        table_err = max(table_err, abs(chi_square_2x2(a, b, c, d).p_value - ref))
        xs = rng.poisson(rng.uniform(0.5, 5), size=int(rng.integers(2, 60))).tolist()
        ys = rng.normal(2, rng.uniform(0.1, 3), size=int(rng.integers(2, 60))).tolist()
        if np.var(xs) == 0:
            xs[0] += 1
        ref = sps.ttest_ind(xs, ys, equal_var=False).pvalue
        welch_err = max(welch_err, abs(welch_t_test(xs, ys).p_value - ref))

    hg1, lg2 = odds_ratio(0.52, 0.31), odds_ratio(0.22, 0.42)
    ok = (max(chi_err, t_err, table_err, welch_err) < 1e-9
          and abs(hg1 - 2.41) <= 0.01 and abs(lg2 - 0.39) <= 0.01)
    report(record_property, 2, ok,
           f"max |dp| chi2 {chi_err:.1e}, t {t_err:.1e}, tables {table_err:.1e}, welch {welch_err:.1e}; "
           f"OR HG1 {hg1:.3f}, LG2 {lg2:.3f}")
    assert ok


# -- 3. planted-pattern recovery -----------------------------------------------

# Family-wise alpha 0.05 over every test in the dataset (all assignments, both layers).
RECOVERY = CdsmConfig(alpha=0.05, correction="bonferroni")


def mine_synthetic(config):
    ds = generate(config)
    seqs = categorize(parse_progsnap2(io.StringIO(ds.events_csv)))
    book = read_grades(io.StringIO(ds.labels_csv))
    return mine_all(seqs, book.labels(), RECOVERY, book.assignments)


@pytest.mark.criterion(3)
def test_criterion_3_planted_patterns_recovered(record_property):
    seeds = range(20)
    freq_ok = diff_ok = 0
    worst = 0.0
    for seed in seeds:
        start = time.perf_counter()
        config = SynthConfig(plants=DEMO_PLANTS, seed=seed)
        minings = mine_synthetic(config)
        worst = max(worst, time.perf_counter() - start)
        labels = {(m.assignment_id, p.pattern): p.label for m in minings for p in m.patterns}
        hits = {"freq": True, "diff": True}
        for plant, pattern in zip(config.plants, plant_patterns(config)):
            kind = "freq" if plant.target in (PatternClass.FH, PatternClass.FL) else "diff"
            for aid in config.assignments:
                if labels.get((aid, pattern)) is not plant.target:
                    hits[kind] = False
        freq_ok += hits["freq"]
        diff_ok += hits["diff"]

    null_hits = 0
    for seed in range(100, 120):
        start = time.perf_counter()
        minings = mine_synthetic(SynthConfig(plants=(), seed=seed))
        worst = max(worst, time.perf_counter() - start)
        null_hits += any(m.kept() for m in minings)

    n = len(seeds)
    ok = freq_ok >= 0.95 * n and diff_ok >= 0.90 * n and null_hits <= 0.10 * 20 and worst < 60
    report(record_property, 3, ok,
           f"FH/FL {freq_ok}/{n} seeds, DH/DL {diff_ok}/{n} seeds, null discoveries {null_hits}/20, "
           f"slowest seed {worst:.1f}s (< 60s)")
    assert ok


# -- 4. end-to-end prediction ----------------------------------------------------

@pytest.mark.criterion(4)
def test_criterion_4_strong_plants_predict_well(record_property):
    ds = generate(SynthConfig(plants=STRONG_PLANTS, seed=0))
    seqs = categorize(parse_progsnap2(io.StringIO(ds.events_csv)))
    book = read_grades(io.StringIO(ds.labels_csv))
    result = run_trial(1, seqs, book, CdsmConfig(correction="bonferroni", seed=0))
    acc, base = result.cdsm.accuracy, result.majority.accuracy
    ok = acc >= 0.85 and acc > base
    report(record_property, 4, ok, f"M1 CV accuracy {acc:.3f} (>= 0.85), Majority {base:.3f}, "
                                   f"Expert {result.expert.accuracy:.3f}")
    assert ok


# -- 5. AdaBoost properties ----------------------------------------------------

@pytest.mark.criterion(5)
def test_criterion_5_boosting_properties(record_property):
    rng = np.random.default_rng(5)
    monotone = exact = 0
    rounds_run = []
    for _ in range(20):
        n, d = int(rng.integers(30, 90)), int(rng.integers(2, 7))
        X = rng.integers(0, 3, size=(n, d)).astype(float)
        signal = X[:, 0] + rng.normal(0, 1.2, size=n)
        y = [Label.LOW if v > 1 else Label.HIGH for v in signal]
        y[0], y[1] = Label.LOW, Label.HIGH
        model = train_adaboost(X, y, rounds=50)
        rounds_run.append(len(model.rounds))
        losses = [exponential_loss(StumpModel(model.rounds[:t]), X, y) for t in range(len(model.rounds) + 1)]
        monotone += all(b <= a * (1 + 1e-12) for a, b in zip(losses, losses[1:]))

        one = train_adaboost(X, y, rounds=1).rounds
        ys = np.array([lab.sign for lab in y], dtype=float)
        err, j, cut, pol = exhaustive_stump(X, ys, np.full(n, 1 / n))
        exact += (len(one) == 1 and (one[0].feature, one[0].threshold, one[0].polarity) == (j, cut, pol))
    ok = monotone == 20 and exact == 20
    report(record_property, 5, ok, f"loss non-increasing on {monotone}/20 datasets "
                                   f"(rounds run {min(rounds_run)}-{max(rounds_run)}), "
                                   f"one-round model equals exhaustive stump on {exact}/20")
    assert ok


# -- 6. CV structure -----------------------------------------------------------

@pytest.mark.criterion(6)
def test_criterion_6_cv_structure(record_property):
    problems = []
    for n in (20, 53, 106):
        subjects = [f"s{i:03d}" for i in range(n)]
        folds = make_folds(subjects, seed=11)
        if sorted(s for f in folds for s in f) != subjects or len(folds) != 10:
            problems.append(f"N={n}: folds do not partition")
        tested = []
        for r in range(10):
            train, test, discard = rotation(folds, r)
            others = [set(folds[i]) for i in range(10) if i not in (r, (r + 1) % 10)]
            if set(train) != set().union(*others) or len(others) != 8:
                problems.append(f"N={n} r={r}: train is not 8 folds")
            if set(test) != set(folds[r]) or set(discard) != set(folds[(r + 1) % 10]):
                problems.append(f"N={n} r={r}: test/discard folds wrong")
            if set(train) & set(test) or set(train) & set(discard) or set(test) & set(discard):
                problems.append(f"N={n} r={r}: overlap")
            tested.extend(test)
        if sorted(tested) != subjects:
            problems.append(f"N={n}: not every subject tested exactly once")

        labels = {s: (Label.LOW if i % 2 else Label.HIGH) for i, s in enumerate(subjects)}
        seen = []

        def fit_predict(train, test):
            seen.append((frozenset(train), frozenset(test)))
            return baseline_majority([labels[s] for s in train], len(test))

        cross_validate(labels, fit_predict, seed=11)
        for r, (train, test) in enumerate(seen):
            if train & set(folds[(r + 1) % 10]) or train & test:
                problems.append(f"N={n} r={r}: held-out subjects reached training")
    ok = not problems
    report(record_property, 6, ok, "N in {20, 53, 106}: partition, 8/1/1 rotations, disjoint"
           + ("" if ok else f"; {problems[:3]}"))
    assert ok


# -- 7. determinism ------------------------------------------------------------

def _snapshot(directory):
    out = {}
    for name in sorted(os.listdir(directory)):
        with open(os.path.join(directory, name), "rb") as fh:
            out[name] = fh.read()
    return out


@pytest.mark.criterion(7)
def test_criterion_7_pipeline_is_deterministic(record_property, tmp_path):
    data = tmp_path / "data"
    assert run(["synth", "--out", str(data), "--seed", "3", "--n-high", "12", "--n-low", "12",
                "--assignments", "A1,A2", "--length-mean", "80"]) == 0
    outputs = []
    for name in ("first", "second"):
        code = run(["pipeline", "--events", str(data / "events.csv"), "--labels", str(data / "labels.csv"),
                    "--out", str(tmp_path / name), "--seed", "5", "--rounds", "20"])
        assert code == 0
        outputs.append(_snapshot(tmp_path / name))
    same = outputs[0] == outputs[1]
    ok = same and len(outputs[0]) >= 10
    report(record_property, 7, ok, f"{len(outputs[0])} output files byte-identical across two runs: {same}")
    assert ok


# -- 8. discretization -----------------------------------------------------------

def exact_quantile(values, q):
    """Inclusive linear-interpolation quantile in rational arithmetic."""
    xs = sorted(Fraction(v) for v in values)
    h = (len(xs) - 1) * Fraction(q)
    lo = math.floor(h)
    if lo + 1 >= len(xs):
        return xs[lo]
    return xs[lo] + (h - lo) * (xs[lo + 1] - xs[lo])


@pytest.mark.criterion(8)
def test_criterion_8_discretization_rules(record_property):
    rng = np.random.default_rng(8)
    failures = 0
    for i in range(1000):
        n = int(rng.integers(1, 80))
        if i % 2:
            values = rng.integers(0, int(rng.integers(1, 12)), size=n)
        else:
            values = np.round(rng.exponential(3, size=n), 2)
        label = PatternClass.FH if i % 4 < 2 else PatternClass.DL
        table = FeatureTable(tuple(f"s{k}" for k in range(n)), (Column("A1", "p", label),), values[:, None])
        out = discretize(table).values[:, 0]
        order = np.argsort(values, kind="stable")
        monotone = bool(np.all(np.diff(out[order]) >= 0))
        if label is PatternClass.FH:
            median = exact_quantile(values.tolist(), Fraction(1, 2))
            rule = all(c == (0 if Fraction(v) < median else 1) for v, c in zip(values.tolist(), out))
        else:
            data = [Fraction(v) for v in values.tolist()]
            cuts = [exact_quantile(data, Fraction(1, 3)), exact_quantile(data, Fraction(2, 3))]
            expected = [0 if v < cuts[0] else 1 if v < cuts[1] else 2 for v in data]
            rule = set(out.tolist()) <= {0, 1, 2} and out.tolist() == expected
        failures += not (monotone and rule)
    ok = failures == 0
    report(record_property, 8, ok, f"1000 random columns, {failures} violations "
                                   "(2-bin '< median -> 0', 3-bin codes in {0,1,2}, monotone)")
    assert ok
