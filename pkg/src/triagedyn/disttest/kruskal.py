"""Kruskal-Wallis H test with tie correction."""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2

EXACT_LIMIT = 10_000


@dataclass(frozen=True)
class KruskalResult:
    H: float
    p: float
    df: int
    method: str  # "exact", "chi2" or "degenerate"


def average_ranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="mergesort")
    sorted_v = values[order]
    ranks = np.empty(values.size)
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_v[j + 1] == sorted_v[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _h_from_rank_sums(rank_sums: np.ndarray, sizes: np.ndarray, n: int, correction: float) -> np.ndarray:
    h = 12.0 / (n * (n + 1)) * np.sum(rank_sums**2 / sizes, axis=-1) - 3.0 * (n + 1)
    return h / correction


def _assignments(n: int, sizes: list[int]) -> int:
    count, left = 1, n
    for s in sizes[:-1]:
        count *= math.comb(left, s)
        left -= s
    return count


def _exact_rank_sums(ranks: np.ndarray, sizes: list[int]):
    """Yield rank-sum vectors for every way to split ``ranks`` into ``sizes``."""

    def rec(pool: tuple[int, ...], k: int):
        if k == len(sizes) - 1:
            yield (float(ranks[list(pool)].sum()),)
            return
        for combo in itertools.combinations(pool, sizes[k]):
            rest = tuple(i for i in pool if i not in combo)
            head = float(ranks[list(combo)].sum())
            for tail in rec(rest, k + 1):
                yield (head,) + tail

    yield from rec(tuple(range(ranks.size)), 0)


@functools.lru_cache(maxsize=512)
def _exact_h(ranks: tuple[float, ...], sizes: tuple[int, ...], correction: float) -> np.ndarray:
    """H over every split; depends only on the rank multiset and group sizes."""
    perm = np.array(list(_exact_rank_sums(np.asarray(ranks), list(sizes))))
    return _h_from_rank_sums(perm, np.asarray(sizes, dtype=float), len(ranks), correction)


def kruskal_wallis(groups, exact_limit: int = EXACT_LIMIT) -> KruskalResult:
    """H statistic with tie correction.

    The p-value is exact (full enumeration of group assignments) when there
    are at most ``exact_limit`` assignments, and from the chi-square
    approximation with k-1 degrees of freedom otherwise.
    """
    arrays = [np.asarray(g, dtype=float).ravel() for g in groups]
    if len(arrays) < 2 or any(a.size == 0 for a in arrays):
        raise ValueError("need at least two non-empty groups")
    values = np.concatenate(arrays)
    n = values.size
    df = len(arrays) - 1
    _, tie_counts = np.unique(values, return_counts=True)
    correction = 1.0 - float(np.sum(tie_counts**3 - tie_counts)) / (n**3 - n) if n > 1 else 0.0
    if correction <= 0.0:
        return KruskalResult(0.0, 1.0, df, "degenerate")
    ranks = average_ranks(values)
    sizes = np.array([a.size for a in arrays], dtype=float)
    bounds = np.cumsum([0] + [a.size for a in arrays])
    sums = np.array([ranks[bounds[i] : bounds[i + 1]].sum() for i in range(len(arrays))])
    h = float(_h_from_rank_sums(sums, sizes, n, correction))
    h = max(h, 0.0)
    size_list = [a.size for a in arrays]
    if _assignments(n, size_list) <= exact_limit:
        h_all = _exact_h(tuple(np.sort(ranks)), tuple(size_list), correction)
        p = float(np.mean(h_all >= h - 1e-9 * max(1.0, h)))
        return KruskalResult(h, p, df, "exact")
    return KruskalResult(h, float(chi2.sf(h, df)), df, "chi2")
