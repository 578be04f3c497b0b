"""BLEU similarity and average-linkage clustering for the diversity penalty."""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

MAX_ORDER = 4
# Average-linkage comparisons treat values this close as equal, so results do
# not hinge on float summation order.
TIE_TOL = 1e-12

_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.casefold())


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def sentence_bleu(candidate: Sequence[str], reference: Sequence[str]) -> float:
    """Order-4 sentence BLEU with add-one smoothing at every order.

    The maximum order shrinks to the shorter sequence's length so short
    questions still compare on their full n-gram range.
    """
    c, r = len(candidate), len(reference)
    if c == 0 or r == 0:
        return 0.0
    order = min(MAX_ORDER, c, r)
    log_p = 0.0
    for n in range(1, order + 1):
        cand = _ngrams(candidate, n)
        ref = _ngrams(reference, n)
        matches = sum(min(cnt, ref[g]) for g, cnt in cand.items())
        total = c - n + 1
        log_p += math.log((matches + 1) / (total + 1))
    bp = 1.0 if c >= r else math.exp(1 - r / c)
    return bp * math.exp(log_p / order)


def symmetric_similarity(a: Sequence[str], b: Sequence[str]) -> float:
    return (sentence_bleu(a, b) + sentence_bleu(b, a)) / 2


def similarity_matrix(texts: Sequence[str]) -> np.ndarray:
    """Symmetric pairwise similarity with a unit diagonal."""
    toks = [tokenize(t) for t in texts]
    n = len(toks)
    sim = np.eye(n)
    for i in range(n):
        for j in range(i + 1, n):
            sim[i, j] = sim[j, i] = symmetric_similarity(toks[i], toks[j])
    return sim


@dataclass(frozen=True)
class Clustering:
    assignment: tuple[int, ...]

    @property
    def cluster_sizes(self) -> dict[int, int]:
        return dict(sorted(Counter(self.assignment).items()))

    def size_of(self, index: int) -> int:
        return self.assignment.count(self.assignment[index])

    def __len__(self) -> int:
        return len(self.assignment)


def _relabel(labels: Sequence[int]) -> tuple[int, ...]:
    seen: dict[int, int] = {}
    return tuple(seen.setdefault(x, len(seen)) for x in labels)


def average_linkage_cluster(sim, tau: float) -> Clustering:
    """Greedy agglomerative clustering on a similarity matrix.

    Repeatedly merges the pair of clusters with the highest mean pairwise
    similarity until that mean drops below ``tau``. A cluster is named by its
    smallest member index; ties go to the lexicographically smallest pair of
    names. Output ids are contiguous, in order of first appearance.
    """
    sim = np.asarray(sim, dtype=float)
    n = sim.shape[0]
    if n == 0:
        return Clustering(())
    members: dict[int, list[int]] = {i: [i] for i in range(n)}
    # total[a][b] is the sum of sim over members(a) x members(b)
    total = {a: {b: float(sim[a, b]) for b in range(n) if b != a} for a in range(n)}
    while len(members) > 1:
        best = None
        best_pair = None
        names = sorted(members)
        for ai, a in enumerate(names):
            na = len(members[a])
            for b in names[ai + 1 :]:
                avg = total[a][b] / (na * len(members[b]))
                if best is None or avg > best + TIE_TOL:
                    best, best_pair = avg, (a, b)
        if best < tau - TIE_TOL:
            break
        a, b = best_pair
        members[a].extend(members.pop(b))
        members[a].sort()
        del total[b]
        for c in members:
            if c == a:
                continue
            merged = total[c].pop(b) + total[c][a]
            total[c][a] = merged
            total[a][c] = merged
        total[a].pop(b, None)
    labels = [0] * n
    for name, ms in members.items():
        for m in ms:
            labels[m] = name
    return Clustering(_relabel(labels))


def diversity_penalty(clustering: Clustering, index: int, group_size: int, lambda_d: float) -> float:
    return lambda_d * clustering.size_of(index) / group_size
