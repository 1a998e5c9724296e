"""Gap-constrained frequent sequential pattern mining and occurrence counting.

Two routes compute the same quantities:

* scalar helpers (``matches``, ``count_instance_support``, ``find_embeddings``)
  scan one sequence for one pattern;
* a vectorized level-wise engine grows all patterns at once over a
  concatenation of many sequences, tracking for every pattern the end
  positions of its embeddings together with the latest start of an
  embedding ending there. That is enough to decide support and to replay
  the earliest-ending non-overlapping occurrence selection.

An occurrence is an embedding ``i_1 < ... < i_k`` with at most ``max_gap``
skipped events between consecutive matched indices. Occurrences counted per
sequence are chosen greedily: the earliest-ending embedding that starts at
or after the resume point, resuming right after it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Hashable, Iterable, Sequence

import numpy as np

Pattern = tuple  # tuple of event types (any hashable symbols)


@dataclass(frozen=True)
class MiningParams:
    min_percentile_support: float = 0.4
    max_gap: int = 1
    max_length: int = 6

    def __post_init__(self):
        if not self.min_percentile_support > 0:
            raise ValueError("min_percentile_support must be > 0")
        if self.max_gap < 0:
            raise ValueError("max_gap must be >= 0")
        if self.max_length < 1:
            raise ValueError("max_length must be >= 1")

    def validate(self) -> None:
        """Strict range check for user-supplied parameters."""
        if not 0 < self.min_percentile_support <= 1:
            raise ValueError(
                f"min_percentile_support must be in (0, 1], got {self.min_percentile_support}")


@dataclass(frozen=True)
class FrequentPatternStats:
    pattern: Pattern
    seq_support_high: int
    seq_support_low: int
    foc_high: float
    foc_low: float
    instance_supports_high: tuple
    instance_supports_low: tuple
    subjects_high: tuple[str, ...] = ()
    subjects_low: tuple[str, ...] = ()

    @property
    def n_high(self) -> int:
        return len(self.instance_supports_high)

    @property
    def n_low(self) -> int:
        return len(self.instance_supports_low)


def _events(seq) -> Sequence:
    return seq.events if hasattr(seq, "events") else seq


def _subject(seq, index: int) -> str:
    return getattr(seq, "subject_id", str(index))


def pattern_key(pattern: Pattern) -> tuple:
    return (len(pattern), tuple(str(e) for e in pattern))


# -- scalar route ---------------------------------------------------------

def _scan(pattern: Pattern, seq: Sequence, max_gap: int, first_only: bool) -> list[tuple[int, ...]]:
    k = len(pattern)
    if k == 0:
        raise ValueError("pattern must be non-empty")
    # last[j]: end index of the most recent embedding of pattern[:j+1] since
    # the resume point; link[j][t] is its predecessor at level j-1.
    last: list[int | None] = [None] * k
    link: list[dict[int, int]] = [dict() for _ in range(k)]
    found = []
    for t, sym in enumerate(seq):
        for j in range(k - 1, -1, -1):
            if pattern[j] != sym:
                continue
            if j == 0:
                last[0] = t
            else:
                prev = last[j - 1]
                if prev is not None and t - prev - 1 <= max_gap:
                    last[j] = t
                    link[j][t] = prev
        if last[k - 1] == t:
            idx = [t]
            for j in range(k - 1, 0, -1):
                idx.append(link[j][idx[-1]])
            found.append(tuple(reversed(idx)))
            if first_only:
                break
            last = [None] * k
            link = [dict() for _ in range(k)]
    return found


def matches(pattern: Pattern, seq, max_gap: int) -> bool:
    return bool(_scan(tuple(pattern), _events(seq), max_gap, first_only=True))


def find_embeddings(pattern: Pattern, seq, max_gap: int) -> list[tuple[int, ...]]:
    """Matched indices of each counted occurrence, left to right.

    Each occurrence ends as early as possible; among embeddings with that end
    the tightest one (latest matched indices) is reported.
    """
    return _scan(tuple(pattern), _events(seq), max_gap, first_only=False)


def count_instance_support(pattern: Pattern, seq, max_gap: int) -> int:
    return len(find_embeddings(pattern, seq, max_gap))


# -- vectorized route -----------------------------------------------------

@dataclass
class _Level:
    patterns: list[tuple[int, ...]]  # encoded
    support: np.ndarray  # number of sequences containing each pattern
    pid: np.ndarray  # per embedding end: pattern index
    end: np.ndarray  # global end position, sorted within pid
    start: np.ndarray  # latest start of an embedding ending at `end`


class _Database:
    """Sequences concatenated with separator runs so gaps never cross them."""

    def __init__(self, sequences: Sequence[Sequence[Hashable]], max_gap: int):
        self.max_gap = max_gap
        symbols = {sym for seq in sequences for sym in seq}
        self.alphabet = sorted(symbols, key=str)
        self.code = {sym: i for i, sym in enumerate(self.alphabet)}
        n_sep = max_gap + 1
        codes, owner = [], []
        for i, seq in enumerate(sequences):
            codes.extend(self.code[s] for s in seq)
            codes.extend([-1] * n_sep)
            owner.extend([i] * (len(seq) + n_sep))
        self.ev = np.asarray(codes, dtype=np.int64)
        self.owner = np.asarray(owner, dtype=np.int64)
        self.n_seq = len(sequences)
        self.n_sym = max(len(self.alphabet), 1)

    def encode(self, pattern: Pattern) -> tuple[int, ...] | None:
        try:
            return tuple(self.code[s] for s in pattern)
        except KeyError:
            return None

    def decode(self, codes: tuple[int, ...]) -> Pattern:
        return tuple(self.alphabet[c] for c in codes)

    def _support(self, pid: np.ndarray, end: np.ndarray, n_pat: int) -> np.ndarray:
        if n_pat == 0:
            return np.zeros(0, dtype=np.int64)
        pairs = np.unique(pid * self.n_seq + self.owner[end])
        return np.bincount(pairs // self.n_seq, minlength=n_pat)

    def grow(self, max_length: int,
             keep: Callable[[list[tuple[int, ...]], np.ndarray], np.ndarray]) -> list[_Level]:
        """Level-wise prefix growth; ``keep`` selects which patterns to extend."""
        pos = np.flatnonzero(self.ev >= 0)
        sym = self.ev[pos]
        order = np.lexsort((pos, sym))
        pid, end = sym[order], pos[order]
        start = end.copy()
        patterns = [(c,) for c in range(len(self.alphabet))]
        levels = []
        offsets = np.arange(1, self.max_gap + 2)
        for length in range(1, max_length + 1):
            support = self._support(pid, end, len(patterns))
            mask = np.asarray(keep(patterns, support), dtype=bool)
            remap = np.full(len(patterns), -1, dtype=np.int64)
            remap[mask] = np.arange(int(mask.sum()))
            patterns = [p for p, m in zip(patterns, mask) if m]
            sel = remap[pid] >= 0 if len(pid) else np.zeros(0, dtype=bool)
            pid, end, start = remap[pid[sel]], end[sel], start[sel]
            levels.append(_Level(patterns, support[mask], pid, end, start))
            if length == max_length or not patterns:
                break
            # every child end lies within max_gap + 1 positions of a parent end
            cand = (end[:, None] + offsets).ravel()
            cpid = np.repeat(pid, len(offsets))
            cstart = np.repeat(start, len(offsets))
            csym = self.ev[cand]
            ok = csym >= 0
            cand, cpid, cstart, csym = cand[ok], cpid[ok], cstart[ok], csym[ok]
            child = cpid * self.n_sym + csym
            combined = child * len(self.ev) + cand
            order = np.argsort(combined, kind="stable")
            combined, cstart, child, cand = combined[order], cstart[order], child[order], cand[order]
            # one entry per (child, end), keeping the latest start
            first = np.ones(len(combined), dtype=bool)
            first[1:] = combined[1:] != combined[:-1]
            heads = np.flatnonzero(first)
            cstart = np.maximum.reduceat(cstart, heads) if len(heads) else cstart[:0]
            child, cand = child[heads], cand[heads]
            uniq, pid = np.unique(child, return_inverse=True)
            pid = pid.reshape(-1)
            patterns = [patterns[c // self.n_sym] + (int(c % self.n_sym),) for c in uniq]
            end, start = cand, cstart
        return levels

    def instance_counts(self, level: _Level) -> np.ndarray:
        """Greedy non-overlapping occurrence counts, shape (patterns, sequences)."""
        counts = np.zeros(len(level.patterns) * self.n_seq, dtype=np.int64)
        if len(level.pid) == 0:
            return counts.reshape(len(level.patterns), self.n_seq)
        key = level.pid * self.n_seq + self.owner[level.end]
        if len(level.patterns[0]) == 1:
            # every single-event embedding is its own occurrence
            counts += np.bincount(key, minlength=len(counts))
            return counts.reshape(len(level.patterns), self.n_seq)
        ends, starts = level.end, level.start
        # an embedding that starts after the previous one (same pattern and
        # sequence) ends is always counted; only overlapping runs need the scan
        free = np.ones(len(key), dtype=bool)
        free[1:] = (key[1:] != key[:-1]) | (starts[1:] > ends[:-1])
        taken = free.copy()
        busy = np.flatnonzero(~free)
        if len(busy):
            heads = np.unique(np.maximum.accumulate(np.where(free, np.arange(len(key)), 0))[busy])
            seg_end = np.searchsorted(np.flatnonzero(free), heads, side="right")
            bounds = np.append(np.flatnonzero(free), len(key))
            ends_l, starts_l = ends.tolist(), starts.tolist()
            for h, stop in zip(heads.tolist(), bounds[seg_end].tolist()):
                resume = ends_l[h] + 1
                for i in range(h + 1, stop):
                    if starts_l[i] >= resume:
                        taken[i] = True
                        resume = ends_l[i] + 1
        counts += np.bincount(key[taken], minlength=len(counts))
        return counts.reshape(len(level.patterns), self.n_seq)


def _prefix_closure(db: _Database, patterns: Iterable[Pattern]) -> tuple[set, set]:
    targets, closure = set(), set()
    for p in patterns:
        enc = db.encode(p)
        if enc is None:
            continue
        targets.add(enc)
        for i in range(1, len(enc) + 1):
            closure.add(enc[:i])
    return targets, closure


def count_occurrences(patterns: Sequence[Pattern], sequences: Sequence, max_gap: int) -> np.ndarray:
    """Instance-support matrix of shape (len(patterns), len(sequences))."""
    patterns = [tuple(p) for p in patterns]
    out = np.zeros((len(patterns), len(sequences)), dtype=np.int64)
    if not patterns or not sequences:
        return out
    db = _Database([_events(s) for s in sequences], max_gap)
    targets, closure = _prefix_closure(db, patterns)
    if not targets:
        return out
    max_len = max(len(p) for p in targets)
    levels = db.grow(max_len, lambda pats, sup: [p in closure for p in pats])
    row = {}
    for level in levels:
        wanted = [i for i, p in enumerate(level.patterns) if p in targets]
        if not wanted:
            continue
        counts = db.instance_counts(level)
        for i in wanted:
            row[level.patterns[i]] = counts[i]
    for i, p in enumerate(patterns):
        enc = db.encode(p)
        if enc in row:
            out[i] = row[enc]
    return out


def enumerate_frequent(sequences: Sequence, params: MiningParams) -> set[Pattern]:
    """All patterns up to ``max_length`` whose sequence support fraction meets the threshold."""
    if not sequences:
        raise ValueError("enumerate_frequent needs at least one sequence")
    n = len(sequences)
    threshold = params.min_percentile_support
    db = _Database([_events(s) for s in sequences], params.max_gap)
    levels = db.grow(params.max_length, lambda pats, sup: sup / n >= threshold)
    return {db.decode(p) for level in levels for p in level.patterns}


def mine_groups(hp_seqs: Sequence, lp_seqs: Sequence, params: MiningParams) -> list[Pattern]:
    """Union of the frequent patterns mined separately within each group."""
    found: set = set()
    for group in (hp_seqs, lp_seqs):
        if group:
            found |= enumerate_frequent(group, params)
    return sorted(found, key=pattern_key)


def _by_subject(seqs: Sequence) -> list:
    if all(hasattr(s, "subject_id") for s in seqs):
        return sorted(seqs, key=lambda s: s.subject_id)
    return list(seqs)


def collect_stats(patterns: Iterable[Pattern], hp_seqs: Sequence, lp_seqs: Sequence,
                  max_gap: int, normalize: bool = False) -> list[FrequentPatternStats]:
    """Per-group sequence support, FoC and instance-support vectors for each pattern.

    With ``normalize`` the instance supports are divided by sequence length.
    Output is ordered by pattern length, then lexicographically.
    """
    patterns = sorted({tuple(p) for p in patterns}, key=pattern_key)
    hp, lp = _by_subject(hp_seqs), _by_subject(lp_seqs)
    counts = count_occurrences(patterns, hp + lp, max_gap)
    subjects_high = tuple(_subject(s, i) for i, s in enumerate(hp))
    subjects_low = tuple(_subject(s, i) for i, s in enumerate(lp))
    lengths = np.array([max(len(_events(s)), 1) for s in hp + lp], dtype=float)
    out = []
    for i, p in enumerate(patterns):
        high, low = counts[i, :len(hp)], counts[i, len(hp):]
        if normalize:
            vec_high = tuple((high / lengths[:len(hp)]).tolist())
            vec_low = tuple((low / lengths[len(hp):]).tolist())
        else:
            vec_high, vec_low = tuple(high.tolist()), tuple(low.tolist())
        out.append(FrequentPatternStats(
            pattern=p,
            seq_support_high=int((high > 0).sum()),
            seq_support_low=int((low > 0).sum()),
            foc_high=sum(vec_high),
            foc_low=sum(vec_low),
            instance_supports_high=vec_high,
            instance_supports_low=vec_low,
            subjects_high=subjects_high,
            subjects_low=subjects_low,
        ))
    return out
