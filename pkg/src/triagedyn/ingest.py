"""Parse bug-tracker change histories into receive/fix/toss event streams.

Input is a flat CSV (or JSON lines) with one field change per row::

    bug_id,who,when,what,removed,added
    146309,karla.callaghan,2006-06-14 14:37:38 EDT,Assignee,karla.callaghan,suwanda
    146309,,,Priority,P3,P1

Rows with blank ``who``/``when`` continue the change set of the row above.
Timestamps carry an EST/EDT/GMT tag and are normalized to GMT epoch seconds.
"""

from __future__ import annotations

import calendar
import csv
import io
import json
import math
import re
import time
from collections import Counter, defaultdict
from dataclasses import dataclass
from datetime import datetime
from enum import Enum
from typing import Iterable, Iterator, TextIO

REQUIRED_COLUMNS = ("bug_id", "who", "when", "what", "removed", "added")

ZONE_OFFSETS = {"GMT": 0, "EDT": 4 * 3600, "EST": 5 * 3600}

# Values that mean "nobody holds the bug" in an Assignee change.
UNASSIGNED = frozenset({"", "---", "nobody", "none"})

_STAMP = re.compile(r"^(\d{4})-(\d{2})-(\d{2}) (\d{2}):(\d{2}):(\d{2})$")


class ParseError(ValueError):
    """Malformed history input; ``line`` is the 1-based physical line."""

    def __init__(self, line: int, message: str) -> None:
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.message = message


class EventKind(str, Enum):
    RECEIVE = "RECEIVE"
    FIX = "FIX"
    TOSS = "TOSS"


@dataclass(frozen=True, slots=True)
class ChangeRecord:
    bug_id: str
    who: str
    local_time: datetime
    zone: str
    what: str
    removed: str
    added: str
    at: int
    line: int = 0


@dataclass(frozen=True, slots=True)
class BugEvent:
    bug_id: str
    developer: str
    kind: EventKind
    at: int
    toss_target: str | None = None


@dataclass(frozen=True, slots=True)
class ProcessingTime:
    bug_id: str
    developer: str
    kind: EventKind
    tau: float
    received_at: int


@dataclass(frozen=True, slots=True)
class Receipt:
    """One RECEIVE paired with the same developer's next FIX/TOSS of that bug."""

    bug_id: str
    developer: str
    received_at: int
    outcome: EventKind | None = None
    outcome_at: int | None = None


# -- time -------------------------------------------------------------------


def parse_stamp(text: str) -> tuple[datetime, str]:
    """Split ``"2006-06-14 14:37:38 EDT"`` into a naive datetime and zone tag."""
    stamp, _, zone = text.strip().rpartition(" ")
    m = _STAMP.match(stamp)
    if m is None:
        raise ValueError(f"malformed timestamp {text!r}")
    if zone not in ZONE_OFFSETS:
        raise ValueError(f"unknown time zone tag {zone!r}")
    return datetime(*map(int, m.groups())), zone


def normalize_time(local: datetime | str, zone: str | None = None) -> int:
    """Convert an Eastern-US or GMT wall-clock time to GMT epoch seconds."""
    if isinstance(local, str):
        local, zone = parse_stamp(local)
    if zone not in ZONE_OFFSETS:
        raise ValueError(f"unknown time zone tag {zone!r}")
    return calendar.timegm(local.timetuple()) + ZONE_OFFSETS[zone]


def iso_gmt(seconds: int) -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(seconds))


def parse_iso_gmt(text: str) -> int:
    return calendar.timegm(time.strptime(text, "%Y-%m-%dT%H:%M:%SZ"))


def format_stamp(seconds: int) -> str:
    """Render GMT epoch seconds in the history-file timestamp format."""
    return time.strftime("%Y-%m-%d %H:%M:%S GMT", time.gmtime(seconds))


# -- parsing ----------------------------------------------------------------


def _lines(stream: str | TextIO | Iterable[str]) -> Iterator[str]:
    if isinstance(stream, str):
        return iter(io.StringIO(stream))
    return iter(stream)


def parse_history(stream: str | TextIO | Iterable[str]) -> list[ChangeRecord]:
    """Parse a CSV (or JSON-lines) change history, in input order.

    Blank ``who``/``when`` (and ``bug_id``) cells inherit from the previous
    row. Raises :class:`ParseError` naming the offending line.
    """
    lines = _lines(stream)
    first = next(lines, None)
    if first is None:
        raise ParseError(1, "no records (empty input)")
    if first.lstrip().startswith("{"):
        return _parse_jsonl(first, lines)
    return _parse_csv(first, lines)


def _parse_csv(header_line: str, lines: Iterator[str]) -> list[ChangeRecord]:
    header = next(csv.reader([header_line]))
    header = [h.strip().lower() for h in header]
    missing = [c for c in REQUIRED_COLUMNS if c not in header]
    if missing:
        raise ParseError(1, f"missing required column(s): {', '.join(missing)}")
    reader = csv.DictReader(lines, fieldnames=header)
    rows = ((reader.line_num + 1, row) for row in reader)
    return _build_records(rows)


def _parse_jsonl(first: str, lines: Iterator[str]) -> list[ChangeRecord]:
    def rows():
        for lineno, text in enumerate([first, *lines], start=1):
            if not text.strip():
                continue
            try:
                obj = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ParseError(lineno, f"invalid JSON: {exc.msg}") from None
            missing = [c for c in REQUIRED_COLUMNS if c not in obj]
            if missing:
                raise ParseError(lineno, f"missing required field(s): {', '.join(missing)}")
            yield lineno, {k: "" if obj[k] is None else str(obj[k]) for k in REQUIRED_COLUMNS}

    return _build_records(rows())


def _build_records(rows: Iterable[tuple[int, dict]]) -> list[ChangeRecord]:
    records: list[ChangeRecord] = []
    prev_bug = prev_who = prev_when = None
    for lineno, row in rows:
        if None in row:
            raise ParseError(lineno, "too many fields")
        cells = {k: (row.get(k) or "").strip() for k in REQUIRED_COLUMNS}
        if not any(cells.values()):
            continue
        bug, who, when = cells["bug_id"], cells["who"], cells["when"]
        if not who and not when:
            if prev_who is None:
                raise ParseError(lineno, "continuation row without a preceding change")
            who, when = prev_who, prev_when
            bug = bug or prev_bug
        if not bug:
            raise ParseError(lineno, "missing bug_id")
        if not who:
            raise ParseError(lineno, "missing who")
        if not cells["what"]:
            raise ParseError(lineno, "missing what")
        try:
            local, zone = parse_stamp(when)
        except ValueError as exc:
            raise ParseError(lineno, str(exc)) from None
        at = normalize_time(local, zone)
        records.append(
            ChangeRecord(bug, who, local, zone, cells["what"], cells["removed"], cells["added"], at, lineno)
        )
        prev_bug, prev_who, prev_when = bug, who, when
    return records


def read_history(path) -> list[ChangeRecord]:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_history(fh)


HISTORY_COLUMNS = ("who", "when", "what", "removed", "added", "bug_id")


def make_record(bug_id: str, who: str, at: int, what: str, removed: str, added: str) -> ChangeRecord:
    local = datetime(*time.gmtime(at)[:6])
    return ChangeRecord(bug_id, who, local, "GMT", what, removed, added, at)


def write_history(records: Iterable[ChangeRecord], fh: TextIO) -> None:
    """Write records in the CSV history schema, GMT stamps.

    Consecutive rows of one change set (same bug, who and instant) are
    written as continuation rows with blank who/when/bug_id.
    """
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(HISTORY_COLUMNS)
    prev = None
    for rec in records:
        key = (rec.bug_id, rec.who, rec.at)
        if key == prev:
            w.writerow(["", "", rec.what, rec.removed, rec.added, ""])
        else:
            w.writerow([rec.who, format_stamp(rec.at), rec.what, rec.removed, rec.added, rec.bug_id])
        prev = key


# -- event extraction ---------------------------------------------------------


def _is_fix_status(rec: ChangeRecord) -> bool:
    return rec.what.lower() == "status" and rec.added.upper() == "RESOLVED"


def _is_fix_resolution(rec: ChangeRecord) -> bool:
    return rec.what.lower() == "resolution" and rec.added.upper() == "FIXED"


def extract_events(records: Iterable[ChangeRecord], diagnostics: Counter | None = None) -> list[BugEvent]:
    """Turn change records into RECEIVE/FIX/TOSS events.

    An Assignee change A->B is a TOSS by A plus a RECEIVE by B. A change set
    holding Status->RESOLVED and Resolution->FIXED is a FIX by ``who``. The
    original assignee receives the bug at its first record. Only the first
    RECEIVE...FIX trace of a bug is kept. Fixes and tosses by developers who
    never received the bug are dropped and tallied in ``diagnostics``.
    """
    diag = diagnostics if diagnostics is not None else Counter()
    by_bug: dict[str, list[ChangeRecord]] = defaultdict(list)
    for rec in records:
        by_bug[rec.bug_id].append(rec)
    events: list[BugEvent] = []
    for bug_id in sorted(by_bug, key=_bug_sort_key):
        events.extend(_bug_events(bug_id, by_bug[bug_id], diag))
    return events


def _bug_sort_key(bug_id: str):
    return (0, int(bug_id), "") if bug_id.isdigit() else (1, 0, bug_id)


def _bug_events(bug_id: str, recs: list[ChangeRecord], diag: Counter) -> list[BugEvent]:
    recs = sorted(recs, key=lambda r: r.at)
    t0 = recs[0].at
    out: list[BugEvent] = []
    holder: str | None = None
    received: set[str] = set()
    ever: set[str] = set()

    def receive(dev: str, at: int) -> None:
        nonlocal holder
        if dev in ever:
            diag["repeat_receipt"] += 1
        ever.add(dev)
        received.add(dev)
        holder = dev
        out.append(BugEvent(bug_id, dev, EventKind.RECEIVE, at))

    # group into change sets: same who and same instant
    sets: list[list[ChangeRecord]] = []
    for rec in recs:
        if sets and sets[-1][0].who == rec.who and sets[-1][0].at == rec.at:
            sets[-1].append(rec)
        else:
            sets.append([rec])

    for idx, changes in enumerate(sets):
        at = changes[0].at
        for rec in changes:
            if rec.what.lower() != "assignee":
                continue
            old, new = rec.removed, rec.added
            if old == new:
                continue
            old_empty = old.strip().lower() in UNASSIGNED
            new_empty = new.strip().lower() in UNASSIGNED
            if holder is None and not old_empty:
                receive(old, t0)
            if not old_empty:
                if old in received:
                    received.discard(old)
                    target = None if new_empty else new
                    if target is None:
                        diag["unassigned"] += 1
                    out.append(BugEvent(bug_id, old, EventKind.TOSS, at, target))
                else:
                    diag["dropped_toss"] += 1
            if new_empty:
                holder = None
            else:
                receive(new, at)

        status = any(_is_fix_status(r) for r in changes)
        resolution = any(_is_fix_resolution(r) for r in changes)
        if not resolution:
            continue
        if not status:
            diag["lone_resolution_fixed"] += 1
        fixer = changes[0].who
        if holder is None and not received:
            receive(fixer, t0)
        if fixer in received:
            out.append(BugEvent(bug_id, fixer, EventKind.FIX, at))
            later = sum(
                1
                for cs in sets[idx + 1 :]
                for r in cs
                if r.what.lower() == "assignee" or _is_fix_resolution(r)
            )
            if later:
                diag["after_fix_ignored"] += later
            return out
        diag["dropped_fix"] += 1
    return out


# -- processing times -----------------------------------------------------------


def pair_receipts(events: Iterable[BugEvent]) -> list[Receipt]:
    """Pair each RECEIVE with that developer's next FIX/TOSS of the same bug."""
    by_bug: dict[str, list[BugEvent]] = defaultdict(list)
    for ev in events:
        by_bug[ev.bug_id].append(ev)
    out: list[Receipt] = []
    for bug_id in sorted(by_bug, key=_bug_sort_key):
        open_: dict[str, int] = {}
        for ev in sorted(by_bug[bug_id], key=lambda e: e.at):
            if ev.kind is EventKind.RECEIVE:
                if ev.developer in open_:
                    out.append(Receipt(bug_id, ev.developer, open_[ev.developer]))
                open_[ev.developer] = ev.at
            elif ev.developer in open_:
                out.append(Receipt(bug_id, ev.developer, open_.pop(ev.developer), ev.kind, ev.at))
        for dev, at in open_.items():
            out.append(Receipt(bug_id, dev, at))
    return out


def processing_times(events: Iterable[BugEvent], diagnostics: Counter | None = None) -> list[ProcessingTime]:
    """Hours from each developer's RECEIVE of a bug to their FIX/TOSS of it.

    Zero-length intervals (e.g. the original assignee tossing at the first
    record) are skipped and tallied as ``zero_duration``.
    """
    diag = diagnostics if diagnostics is not None else Counter()
    out = []
    for rc in pair_receipts(events):
        if rc.outcome is None:
            continue
        seconds = rc.outcome_at - rc.received_at
        if seconds <= 0:
            diag["zero_duration"] += 1
            continue
        out.append(ProcessingTime(rc.bug_id, rc.developer, rc.outcome, seconds / 3600.0, rc.received_at))
    return out


# -- corpus filtering -----------------------------------------------------------


@dataclass(frozen=True)
class FilterSummary:
    fixers_in: int
    developers_retained: int
    bugs_in: int
    bugs_retained: int
    events_in: int
    events_retained: int

    @property
    def retained_fraction(self) -> float:
        return self.events_retained / self.events_in if self.events_in else 0.0

    def as_dict(self) -> dict:
        return {
            "fixers_in": self.fixers_in,
            "developers_retained": self.developers_retained,
            "bugs_in": self.bugs_in,
            "bugs_retained": self.bugs_retained,
            "events_in": self.events_in,
            "events_retained": self.events_retained,
            "retained_fraction": self.retained_fraction,
        }


def fix_counts(events: Iterable[BugEvent]) -> Counter:
    fixed: dict[str, set[str]] = defaultdict(set)
    for ev in events:
        if ev.kind is EventKind.FIX:
            fixed[ev.developer].add(ev.bug_id)
    return Counter({dev: len(bugs) for dev, bugs in fixed.items()})


def top_fixers(counts: Counter, min_fixed: int, top_fraction: float) -> set[str]:
    """Fixers ranked in the top ``top_fraction`` with at least ``min_fixed`` fixes.

    Ties at the rank cutoff are all kept.
    """
    if not 0 < top_fraction <= 1:
        raise ValueError("top_fraction must be in (0, 1]")
    if min_fixed < 0:
        raise ValueError("min_fixed must be >= 0")
    if not counts:
        return set()
    ranked = sorted(counts.values(), reverse=True)
    k = max(1, math.ceil(top_fraction * len(ranked) - 1e-9))
    cutoff = max(ranked[k - 1], min_fixed)
    return {dev for dev, n in counts.items() if n >= cutoff}


def filter_corpus(
    events: list[BugEvent],
    min_fixed: int = 50,
    top_fraction: float = 0.2,
    require_full_lifecycle: bool = True,
) -> tuple[list[BugEvent], FilterSummary]:
    """Keep the skilled-fixer cohort and (optionally) only fully fixed bugs.

    With ``require_full_lifecycle`` a bug survives only if its fix was made by
    a retained developer, so re-filtering never strips further fixes.
    """
    counts = fix_counts(events)
    keep_devs = top_fixers(counts, min_fixed, top_fraction)
    bugs_in = {ev.bug_id for ev in events}
    if require_full_lifecycle:
        keep_bugs = {ev.bug_id for ev in events if ev.kind is EventKind.FIX and ev.developer in keep_devs}
    else:
        keep_bugs = bugs_in
    kept = [ev for ev in events if ev.developer in keep_devs and ev.bug_id in keep_bugs]
    summary = FilterSummary(
        fixers_in=len(counts),
        developers_retained=len({ev.developer for ev in kept}),
        bugs_in=len(bugs_in),
        bugs_retained=len({ev.bug_id for ev in kept}),
        events_in=len(events),
        events_retained=len(kept),
    )
    return kept, summary


# -- event file I/O ---------------------------------------------------------------

EVENT_COLUMNS = ("bug_id", "developer", "kind", "at", "toss_target")


def write_events(events: Iterable[BugEvent], fh: TextIO) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(EVENT_COLUMNS)
    for ev in events:
        w.writerow([ev.bug_id, ev.developer, ev.kind.value, iso_gmt(ev.at), ev.toss_target or ""])


def read_events(fh: TextIO) -> list[BugEvent]:
    reader = csv.DictReader(fh)
    missing = [c for c in EVENT_COLUMNS if c not in (reader.fieldnames or [])]
    if missing:
        raise ParseError(1, f"missing event column(s): {', '.join(missing)}")
    out = []
    for row in reader:
        try:
            kind = EventKind(row["kind"])
            at = parse_iso_gmt(row["at"])
        except ValueError as exc:
            raise ParseError(reader.line_num, str(exc)) from None
        out.append(BugEvent(row["bug_id"], row["developer"], kind, at, row["toss_target"] or None))
    return out
