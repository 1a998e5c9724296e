import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cdsm.ingest import EventSequence, EventType
from cdsm.seqmine import (
    MiningParams, collect_stats, count_instance_support, count_occurrences, enumerate_frequent,
    find_embeddings, matches, mine_groups,
)

from oracles import brute_count, brute_frequent, brute_matches, random_instance

A, B, C = "A", "B", "C"


def test_matches_examples():
    assert matches([A, B], [A, C, B], 1)
    assert not matches([A, B], [A, C, B], 0)
    assert matches([A], [B, A, B], 0)


def test_count_examples():
    assert count_instance_support([A, B], [A, B, A, B], 0) == 2
    assert count_instance_support([A, A], [A, A, A], 0) == 1
    assert count_instance_support([A, B], [A, C, B, A, B], 1) == 2


def test_embeddings_are_disjoint_and_gap_valid():
    seq = list("ABCABBACB")
    found = find_embeddings([A, B], seq, 1)
    assert found == [(0, 1), (3, 4), (6, 8)]
    for a, b in zip(found, found[1:]):
        assert a[-1] < b[0]


def test_tightest_embedding_reported():
    # A A B: the counted occurrence ends at 2 and starts as late as possible
    assert find_embeddings([A, B], [A, A, B], 1) == [(1, 2)]


def test_enumerate_examples():
    seqs = [[A, B, C], [A, B], [A, C]]
    got = enumerate_frequent(seqs, MiningParams(2 / 3, 1, 2))
    assert got == {(A,), (B,), (C,), (A, B), (A, C)}
    assert enumerate_frequent([[A, B], [A, B]], MiningParams(1.0, 0, 2)) == {(A,), (B,), (A, B)}
    assert enumerate_frequent(seqs, MiningParams(1.01, 1, 3)) == set()


def test_enumerate_rejects_empty_input():
    with pytest.raises(ValueError):
        enumerate_frequent([], MiningParams())


def test_params_validation():
    with pytest.raises(ValueError):
        MiningParams(0.0)
    with pytest.raises(ValueError):
        MiningParams(max_gap=-1)
    with pytest.raises(ValueError):
        MiningParams(1.5).validate()


def test_mine_groups_is_union():
    got = mine_groups([[A, B]], [[C]], MiningParams(1.0, 0, 2))
    assert got == [(A,), (B,), (C,), (A, B)]


def seq(subject, letters):
    return EventSequence(subject, "A1", tuple(EventType.parse(x) for x in letters))


def test_collect_stats_direct_count():
    a = EventType.parse("RUN")
    stats = collect_stats([(a,)], [seq("h1", ["RUN"]), seq("h2", ["RUN", "FILE"])],
                          [seq("l1", ["FILE"])], 1)
    s = stats[0]
    assert (s.seq_support_high, s.seq_support_low, s.foc_high, s.foc_low) == (2, 0, 2, 0)
    assert s.subjects_high == ("h1", "h2")


def test_collect_stats_absent_pattern():
    a = EventType.parse("VAR")
    s = collect_stats([(a,)], [seq("h1", ["RUN"])], [seq("l1", ["FILE"])], 1)[0]
    assert (s.seq_support_high, s.seq_support_low, s.foc_high, s.foc_low) == (0, 0, 0, 0)
    assert s.instance_supports_high == (0,) and s.instance_supports_low == (0,)


def test_collect_stats_totals_match_per_sequence_counts():
    rng = np.random.default_rng(3)
    names = ["RUN", "FILE", "VAR"]
    def rand(subject):
        out = [names[int(rng.integers(3))]]
        while len(out) < 20:
            nxt = names[int(rng.integers(3))]
            if nxt != out[-1]:
                out.append(nxt)
        return seq(subject, out)
    hp = [rand(f"h{i}") for i in range(5)]
    lp = [rand(f"l{i}") for i in range(4)]
    pattern = (EventType.parse("RUN"), EventType.parse("VAR"))
    s = collect_stats([pattern], hp, lp, 1)[0]
    assert s.foc_high == sum(count_instance_support(pattern, x, 1) for x in hp)
    assert s.foc_low == sum(count_instance_support(pattern, x, 1) for x in lp)


def test_collect_stats_normalized():
    a = EventType.parse("RUN")
    s = collect_stats([(a,)], [seq("h1", ["RUN", "FILE", "RUN", "VAR"])], [seq("l1", ["FILE"])], 0,
                      normalize=True)[0]
    assert s.instance_supports_high == (0.5,)


def test_random_instances_match_brute_force():
    rng = np.random.default_rng(11)
    for _ in range(150):
        seqs = random_instance(rng)
        gap = int(rng.integers(0, 3))
        length = int(rng.integers(1, 5))
        support = float(rng.choice([0.2, 0.34, 0.5, 0.67, 1.0]))
        expected = brute_frequent(seqs, support, gap, length)
        assert enumerate_frequent(seqs, MiningParams(support, gap, length)) == expected
        pats = sorted(expected | {("A", "A"), ("B", "A", "B")})
        counts = count_occurrences(pats, seqs, gap)
        for i, p in enumerate(pats):
            for j, s in enumerate(seqs):
                assert counts[i, j] == brute_count(p, s, gap) == count_instance_support(p, s, gap)


# -- properties ---------------------------------------------------------------

letters = st.lists(st.sampled_from("ABC"), max_size=10)


@given(st.lists(st.sampled_from("ABC"), min_size=1, max_size=3), letters, st.integers(0, 2))
def test_count_positive_iff_match(pattern, s, gap):
    assert (count_instance_support(pattern, s, gap) >= 1) == matches(pattern, s, gap)
    assert matches(pattern, s, gap) == brute_matches(pattern, s, gap)


@given(st.lists(st.sampled_from("ABC"), min_size=1, max_size=3), st.sampled_from("ABC"),
       st.lists(letters, min_size=1, max_size=5), st.integers(0, 2))
def test_anti_monotone_support(pattern, extra, seqs, gap):
    longer = pattern + [extra]
    assert sum(matches(longer, s, gap) for s in seqs) <= sum(matches(pattern, s, gap) for s in seqs)


@settings(max_examples=50)
@given(st.lists(letters, min_size=1, max_size=5), st.randoms(use_true_random=False), st.integers(0, 2))
def test_input_order_irrelevant(seqs, rnd, gap):
    params = MiningParams(0.4, gap, 3)
    shuffled = list(seqs)
    rnd.shuffle(shuffled)
    assert enumerate_frequent(seqs, params) == enumerate_frequent(shuffled, params)


def test_stats_keyed_by_subject_regardless_of_order():
    hp = [seq("h2", ["RUN", "VAR"]), seq("h1", ["RUN"])]
    lp = [seq("l1", ["VAR"])]
    pats = [(EventType.parse("RUN"),), (EventType.parse("VAR"),)]
    assert collect_stats(pats, hp, lp, 1) == collect_stats(pats, hp[::-1], lp, 1)
