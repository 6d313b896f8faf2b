"""Empirical complementary CDFs of processing times."""

from __future__ import annotations

import csv
from bisect import bisect_right
from collections import defaultdict
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, TextIO

import numpy as np

from ..ingest import EventKind, ProcessingTime


class Population(str, Enum):
    DEVELOPER = "DEVELOPER"
    BUG = "BUG"


@dataclass(frozen=True)
class Ccdf:
    """Right-continuous step function P(T > tau) over sorted unique samples."""

    points: tuple[tuple[float, float], ...]
    population: Population = Population.BUG
    kind: EventKind | None = None

    def __call__(self, tau: float) -> float:
        taus = [p[0] for p in self.points]
        i = bisect_right(taus, tau)
        return 1.0 if i == 0 else self.points[i - 1][1]

    @property
    def taus(self) -> np.ndarray:
        return np.array([p[0] for p in self.points])

    @property
    def probs(self) -> np.ndarray:
        return np.array([p[1] for p in self.points])


def ccdf(samples: Iterable[float], population: Population = Population.BUG, kind: EventKind | None = None) -> Ccdf:
    x = np.sort(np.asarray(list(samples), dtype=float))
    if x.size == 0:
        raise ValueError("ccdf of an empty sample")
    if np.any(x <= 0):
        raise ValueError("processing times must be positive")
    values, counts = np.unique(x, return_counts=True)
    exceed = x.size - np.cumsum(counts)
    probs = exceed / x.size
    return Ccdf(tuple(zip(values.tolist(), probs.tolist())), population, kind)


def bug_ccdf(times: Iterable[ProcessingTime], kind: EventKind) -> Ccdf:
    """CCDF over every processing time of ``kind``."""
    taus = [t.tau for t in times if t.kind is kind]
    if not taus:
        raise ValueError(f"no {kind.value} processing times")
    return ccdf(taus, Population.BUG, kind)


def developer_ccdf(times: Iterable[ProcessingTime], kind: EventKind, pooled: bool = False) -> Ccdf:
    """CCDF over per-developer mean processing times.

    ``pooled=True`` skips the averaging and uses every event instead.
    """
    per_dev: dict[str, list[float]] = defaultdict(list)
    for t in times:
        if t.kind is kind:
            per_dev[t.developer].append(t.tau)
    if not per_dev:
        raise ValueError(f"no developer has {kind.value} processing times")
    if pooled:
        values = [tau for dev in sorted(per_dev) for tau in per_dev[dev]]
    else:
        values = [float(np.mean(per_dev[dev])) for dev in sorted(per_dev)]
    return ccdf(values, Population.DEVELOPER, kind)


def write_ccdf(curve: Ccdf, fh: TextIO) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["tau_hours", "prob"])
    for tau, prob in curve.points:
        w.writerow([repr(tau), repr(prob)])
