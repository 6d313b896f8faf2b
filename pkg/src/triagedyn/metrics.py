"""Developer-window workload samples and mean fixing/tossing rate curves."""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, TextIO

from .ingest import BugEvent, EventKind, Receipt, pair_receipts

DEFAULT_WINDOW_DAYS = 91.0


@dataclass(frozen=True)
class Windowing:
    """Fixed-length, non-overlapping windows starting at ``origin``.

    ``origin=None`` means "earliest event"; receipts at or after ``until``
    (GMT seconds) are ignored.
    """

    window_days: float = DEFAULT_WINDOW_DAYS
    origin: int | None = None
    until: int | None = None

    def __post_init__(self):
        if self.window_days <= 0:
            raise ValueError("window_days must be positive")

    @property
    def seconds(self) -> float:
        return self.window_days * 86400.0

    def resolve(self, events: Iterable[BugEvent]) -> Windowing:
        if self.origin is not None:
            return self
        first = min((ev.at for ev in events), default=0)
        return Windowing(self.window_days, first, self.until)

    def index(self, t: int) -> int | None:
        if self.until is not None and t >= self.until:
            return None
        if t < self.origin:
            return None
        return int(math.floor((t - self.origin) / self.seconds))


@dataclass(frozen=True, slots=True)
class DeveloperWindow:
    developer: str
    window_index: int
    N: int
    K_f: int
    K_t: int


@dataclass(frozen=True, slots=True)
class RatePoint:
    N: int
    M: int
    P_f: float
    P_t: float


def windowed_receipts(
    events: list[BugEvent], windowing: Windowing | None = None
) -> dict[tuple[str, int], list[Receipt]]:
    """Group paired receipts by (developer, window of the RECEIVE)."""
    win = (windowing or Windowing()).resolve(events)
    groups: dict[tuple[str, int], list[Receipt]] = defaultdict(list)
    for rc in pair_receipts(events):
        w = win.index(rc.received_at)
        if w is not None:
            groups[(rc.developer, w)].append(rc)
    return groups


def window_events(events: list[BugEvent], windowing: Windowing | None = None) -> list[DeveloperWindow]:
    """One sample per developer-window with at least one receipt.

    Outcomes count toward the window of the receipt, whenever they happen.
    """
    groups = windowed_receipts(events, windowing)
    out = []
    for (dev, w), rcs in sorted(groups.items()):
        k_f = sum(rc.outcome is EventKind.FIX for rc in rcs)
        k_t = sum(rc.outcome is EventKind.TOSS for rc in rcs)
        out.append(DeveloperWindow(dev, w, len(rcs), k_f, k_t))
    return out


def rate_curve(samples: Iterable[DeveloperWindow]) -> list[RatePoint]:
    """Mean fixing rate K_f/N and tossing rate K_t/N per workload N."""
    fixes: dict[int, list[float]] = defaultdict(list)
    tosses: dict[int, list[float]] = defaultdict(list)
    for s in samples:
        fixes[s.N].append(s.K_f / s.N)
        tosses[s.N].append(s.K_t / s.N)
    if not fixes:
        raise ValueError("rate_curve needs at least one sample")
    # fsum keeps the means independent of input order
    return [
        RatePoint(n, len(fixes[n]), math.fsum(fixes[n]) / len(fixes[n]), math.fsum(tosses[n]) / len(tosses[n]))
        for n in sorted(fixes)
    ]


def write_rates(points: Iterable[RatePoint], fh: TextIO) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["N", "M", "P_f", "P_t"])
    for p in points:
        w.writerow([p.N, p.M, repr(p.P_f), repr(p.P_t)])


def read_rates(fh: TextIO) -> list[RatePoint]:
    return [
        RatePoint(int(row["N"]), int(row["M"]), float(row["P_f"]), float(row["P_t"]))
        for row in csv.DictReader(fh)
    ]
