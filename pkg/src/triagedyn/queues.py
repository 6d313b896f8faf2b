"""Receiving queues and first fixing/tossing positions (AFFP, AFTP)."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, TextIO

from .ingest import BugEvent, EventKind
from .metrics import Windowing, windowed_receipts


class Outcome(str, Enum):
    FIXED = "FIXED"
    TOSSED = "TOSSED"
    PENDING = "PENDING"


_OUTCOME = {EventKind.FIX: Outcome.FIXED, EventKind.TOSS: Outcome.TOSSED, None: Outcome.PENDING}


@dataclass(frozen=True, slots=True)
class QueueEntry:
    bug_id: str
    receive_time: int
    outcome: Outcome = Outcome.PENDING
    outcome_time: int | None = None


@dataclass(frozen=True)
class ReceivingQueue:
    developer: str
    window_index: int
    entries: tuple[QueueEntry, ...]

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True, slots=True)
class QueueMetrics:
    N: int
    S_f: int | None = None
    S_t: int | None = None
    developer: str = ""
    window_index: int = 0


def make_queue(developer: str, window_index: int, entries: Iterable[QueueEntry]) -> ReceivingQueue:
    # same-second receipts are ordered by bug id so positions stay well defined
    ordered = sorted(entries, key=lambda e: (e.receive_time, e.bug_id))
    return ReceivingQueue(developer, window_index, tuple(ordered))


def build_queues(events: list[BugEvent], windowing: Windowing | None = None) -> list[ReceivingQueue]:
    """One queue per developer-window, entries ordered by receipt time."""
    out = []
    for (dev, w), receipts in sorted(windowed_receipts(events, windowing).items()):
        entries = [QueueEntry(rc.bug_id, rc.received_at, _OUTCOME[rc.outcome], rc.outcome_at) for rc in receipts]
        out.append(make_queue(dev, w, entries))
    return out


def _first_position(queue: ReceivingQueue, outcome: Outcome) -> int | None:
    best = None
    for pos, entry in enumerate(queue.entries, start=1):
        if entry.outcome is not outcome:
            continue
        key = (entry.outcome_time, pos)
        if best is None or key < best[0]:
            best = (key, pos)
    return None if best is None else best[1]


def first_positions(queue: ReceivingQueue) -> QueueMetrics:
    """Queue positions of the chronologically first fix and first toss."""
    return QueueMetrics(
        len(queue),
        _first_position(queue, Outcome.FIXED),
        _first_position(queue, Outcome.TOSSED),
        queue.developer,
        queue.window_index,
    )


def affp_aftp(metrics: list[QueueMetrics]) -> tuple[float | None, float | None]:
    """Mean first fixing position Q_f and mean first tossing position Q_t."""
    if not metrics:
        raise ValueError("affp_aftp needs at least one sample")
    s_f = [m.S_f for m in metrics if m.S_f is not None]
    s_t = [m.S_t for m in metrics if m.S_t is not None]
    q_f = math.fsum(s_f) / len(s_f) if s_f else None
    q_t = math.fsum(s_t) / len(s_t) if s_t else None
    return q_f, q_t


def group_by_state(metrics: Iterable[QueueMetrics], threshold: float) -> dict[str, list[QueueMetrics]]:
    """Split samples at floor(threshold): N at or below is normal, above is overload."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    cut = math.floor(threshold)
    groups: dict[str, list[QueueMetrics]] = {"normal": [], "overload": []}
    for m in metrics:
        groups["normal" if m.N <= cut else "overload"].append(m)
    return groups


def _fmt(v) -> str:
    return "" if v is None else str(v)


def write_state_positions(groups: dict[str, list[QueueMetrics]], fh: TextIO) -> None:
    """Box-plot table: one row per sample with its state."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["state", "developer", "window_index", "N", "S_f", "S_t"])
    for state in ("normal", "overload"):
        for m in groups.get(state, []):
            w.writerow([state, m.developer, m.window_index, m.N, _fmt(m.S_f), _fmt(m.S_t)])


def write_position_scatter(metrics: Iterable[QueueMetrics], fh: TextIO) -> None:
    """Scatter table: Q_f and Q_t per workload N."""
    by_n: dict[int, list[QueueMetrics]] = {}
    for m in metrics:
        by_n.setdefault(m.N, []).append(m)
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["N", "M", "Q_f", "Q_t"])
    for n in sorted(by_n):
        q_f, q_t = affp_aftp(by_n[n])
        w.writerow([n, len(by_n[n]), _fmt(q_f), _fmt(q_t)])
