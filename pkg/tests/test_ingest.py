from __future__ import annotations

import io
from collections import Counter
from datetime import datetime, timedelta, timezone

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from triagedyn.ingest import (
    BugEvent,
    EventKind,
    ParseError,
    extract_events,
    filter_corpus,
    format_stamp,
    iso_gmt,
    make_record,
    normalize_time,
    pair_receipts,
    parse_history,
    parse_iso_gmt,
    processing_times,
    read_events,
    write_events,
    write_history,
)

HEADER = "who,when,what,removed,added,bug_id\n"
EDT = timezone(timedelta(hours=-4))
EST = timezone(timedelta(hours=-5))


def _hours(a: datetime, b: datetime) -> float:
    return (b - a).total_seconds() / 3600.0


# -- parsing -----------------------------------------------------------------


def test_sample_row_parses(history_text):
    recs = parse_history(history_text)
    first = recs[0]
    assert (first.who, first.what, first.removed, first.added) == (
        "karla.callaghan", "Assignee", "karla.callaghan", "suwanda")
    assert first.zone == "EDT"


def test_continuation_rows_inherit_who_and_when(history_text):
    recs = parse_history(history_text)
    assert recs[1].what == "Priority"
    assert recs[1].who == "karla.callaghan"
    assert recs[1].at == recs[0].at
    assert recs[1].bug_id == "146309"


def test_rows_keep_input_order(history_text):
    recs = parse_history(history_text)
    assert len(recs) == 21
    assert [r.line for r in recs] == sorted(r.line for r in recs)


def test_header_only_is_empty():
    assert parse_history(HEADER) == []


def test_malformed_timestamp_names_line():
    text = HEADER + "a,2006-06-14 14:37:38 EDT,Assignee,a,b,1\n" + "a,2006-13-45 99:00:00 EDT,Assignee,b,c,1\n"
    with pytest.raises(ParseError) as exc:
        parse_history(text)
    assert exc.value.line == 3


def test_missing_column_is_error():
    with pytest.raises(ParseError) as exc:
        parse_history("who,when,what,removed,added\n")
    assert exc.value.line == 1


def test_unknown_zone_in_row_is_error():
    with pytest.raises(ParseError):
        parse_history(HEADER + "a,2006-06-14 14:37:38 PST,Assignee,a,b,1\n")


def test_jsonl_equivalent(history_text):
    csv_recs = parse_history(history_text)
    lines = [
        '{"who": "karla.callaghan", "when": "2006-06-14 14:37:38 EDT", "what": "Assignee", '
        '"removed": "karla.callaghan", "added": "suwanda", "bug_id": "146309"}',
        '{"who": "", "when": "", "what": "Priority", "removed": "P3", "added": "P1", "bug_id": ""}',
    ]
    recs = parse_history("\n".join(lines))
    assert [(r.who, r.at, r.what) for r in recs] == [(r.who, r.at, r.what) for r in csv_recs[:2]]


# -- time ----------------------------------------------------------------------


def test_normalize_edt():
    assert normalize_time("2006-06-14 14:37:38 EDT") == normalize_time("2006-06-14 18:37:38 GMT")
    assert iso_gmt(normalize_time("2006-06-14 14:37:38 EDT")) == "2006-06-14T18:37:38Z"


def test_normalize_est():
    assert iso_gmt(normalize_time("2006-10-30 10:28:32 EST")) == "2006-10-30T15:28:32Z"


def test_normalize_epoch():
    assert normalize_time("1970-01-01 00:00:00 GMT") == 0


def test_unknown_zone_rejected():
    with pytest.raises(ValueError):
        normalize_time(datetime(2006, 1, 1), "CET")


def test_matches_datetime_oracle():
    oracle = datetime(2006, 10, 30, 10, 28, 32, tzinfo=EST).timestamp()
    assert normalize_time("2006-10-30 10:28:32 EST") == int(oracle)


def test_iso_round_trip():
    t = normalize_time("2007-04-30 16:04:53 EDT")
    assert parse_iso_gmt(iso_gmt(t)) == t
    assert normalize_time(format_stamp(t)) == t


_ZONE_TZ = {"GMT": timezone.utc, "EDT": EDT, "EST": EST}


@given(
    st.lists(
        st.tuples(
            st.datetimes(min_value=datetime(1990, 1, 1), max_value=datetime(2030, 1, 1)).map(lambda d: d.replace(microsecond=0)),
            st.sampled_from(["GMT", "EDT", "EST"]),
        ),
        min_size=2,
        max_size=20,
    )
)
def test_normalize_is_order_preserving(stamps):
    instants = [local.replace(tzinfo=_ZONE_TZ[z]).timestamp() for local, z in stamps]
    normalized = [normalize_time(local, z) for local, z in stamps]
    for (i1, n1) in zip(instants, normalized):
        assert n1 == int(i1)
    order_true = sorted(range(len(stamps)), key=lambda i: (instants[i], i))
    order_norm = sorted(range(len(stamps)), key=lambda i: (normalized[i], i))
    assert order_true == order_norm


# -- event extraction ---------------------------------------------------------------


def test_sample_toss_chain(history_text):
    events = extract_events(parse_history(history_text))
    tosses = [(e.developer, e.toss_target) for e in events if e.kind is EventKind.TOSS]
    assert tosses == [("karla.callaghan", "suwanda"), ("suwanda", "samwai"), ("samwai", "nmehrega")]
    fixes = [e for e in events if e.kind is EventKind.FIX]
    assert len(fixes) == 1
    assert fixes[0].developer == "nmehrega"
    assert iso_gmt(fixes[0].at) == "2007-04-30T20:04:53Z"


def test_original_assignee_receives_at_first_record(history_text):
    events = extract_events(parse_history(history_text))
    first = events[0]
    assert (first.developer, first.kind) == ("karla.callaghan", EventKind.RECEIVE)
    assert iso_gmt(first.at) == "2006-06-14T18:37:38Z"


def test_minimal_fix():
    text = HEADER + "dev,2010-01-01 00:00:00 GMT,Status,NEW,RESOLVED,7\n,,Resolution,---,FIXED,\n"
    events = extract_events(parse_history(text))
    assert [e.kind for e in events if e.kind is not EventKind.RECEIVE] == [EventKind.FIX]


def test_lone_resolution_fixed_is_noted():
    text = HEADER + "dev,2010-01-01 00:00:00 GMT,Resolution,---,FIXED,7\n"
    diag = Counter()
    events = extract_events(parse_history(text), diag)
    assert [e.kind for e in events].count(EventKind.FIX) == 1
    assert diag["lone_resolution_fixed"] == 1


def test_noop_assignee_change():
    text = HEADER + "a,2010-01-01 00:00:00 GMT,Assignee,a,a,7\n"
    assert extract_events(parse_history(text)) == []


def test_fix_without_receipt_is_dropped():
    text = (
        HEADER
        + "triage,2010-01-01 00:00:00 GMT,Assignee,nobody,a,7\n"
        + "b,2010-01-02 00:00:00 GMT,Status,NEW,RESOLVED,7\n,,Resolution,---,FIXED,\n"
    )
    diag = Counter()
    events = extract_events(parse_history(text), diag)
    assert [e.kind for e in events] == [EventKind.RECEIVE]
    assert diag["dropped_fix"] == 1


def test_only_first_trace_counts():
    text = (
        HEADER
        + "triage,2010-01-01 00:00:00 GMT,Assignee,nobody,a,7\n"
        + "a,2010-01-02 00:00:00 GMT,Status,NEW,RESOLVED,7\n,,Resolution,---,FIXED,\n"
        + "a,2010-01-05 00:00:00 GMT,Assignee,a,b,7\n"
        + "b,2010-01-06 00:00:00 GMT,Status,REOPENED,RESOLVED,7\n,,Resolution,---,FIXED,\n"
    )
    diag = Counter()
    events = extract_events(parse_history(text), diag)
    assert [e.kind for e in events] == [EventKind.RECEIVE, EventKind.FIX]
    assert diag["after_fix_ignored"] == 2


# -- processing times -----------------------------------------------------------------


def test_suwanda_toss_time(history_text):
    times = processing_times(extract_events(parse_history(history_text)))
    t = next(p for p in times if p.developer == "suwanda")
    expected = _hours(datetime(2006, 6, 14, 14, 37, 38, tzinfo=EDT), datetime(2006, 6, 29, 9, 46, 32, tzinfo=EDT))
    assert t.kind is EventKind.TOSS
    assert t.tau == pytest.approx(expected, abs=1e-9)
    assert t.tau == pytest.approx(355.148, abs=1e-3)


def test_samwai_toss_time(history_text):
    times = processing_times(extract_events(parse_history(history_text)))
    t = next(p for p in times if p.developer == "samwai")
    expected = _hours(datetime(2006, 6, 29, 9, 46, 32, tzinfo=EDT), datetime(2007, 4, 2, 18, 38, 48, tzinfo=EDT))
    assert t.tau == pytest.approx(expected, abs=1e-9)
    assert t.tau == pytest.approx(6651, rel=1e-3)


def test_nmehrega_fix_time(history_text):
    times = processing_times(extract_events(parse_history(history_text)))
    t = next(p for p in times if p.developer == "nmehrega")
    expected = _hours(datetime(2007, 4, 2, 18, 38, 48, tzinfo=EDT), datetime(2007, 4, 30, 16, 4, 53, tzinfo=EDT))
    assert t.kind is EventKind.FIX
    assert t.tau == pytest.approx(expected, abs=1e-9)


def test_one_hour_fix():
    events = [BugEvent("1", "a", EventKind.RECEIVE, 0), BugEvent("1", "a", EventKind.FIX, 3600)]
    assert processing_times(events)[0].tau == 1.0


def test_zero_length_interval_skipped(history_text):
    diag = Counter()
    times = processing_times(extract_events(parse_history(history_text)), diag)
    assert all(t.tau > 0 for t in times)
    assert diag["zero_duration"] == 1
    assert "karla.callaghan" not in {t.developer for t in times}


# -- random histories ---------------------------------------------------------------


@st.composite
def histories(draw):
    """Random bugs: assignment chains with optional fix, as history rows."""
    devs = [f"d{i}" for i in range(draw(st.integers(2, 6)))]
    rows = []
    for bug in range(draw(st.integers(1, 6))):
        t = draw(st.integers(0, 10**6))
        holder = draw(st.sampled_from(devs))
        rows.append(make_record(str(bug), "triage", t, "Assignee", "nobody", holder))
        for _ in range(draw(st.integers(0, 4))):
            t += draw(st.integers(0, 10**5))
            target = draw(st.sampled_from(devs))
            rows.append(make_record(str(bug), holder, t, "Assignee", holder, target))
            holder = target
        if draw(st.booleans()):
            t += draw(st.integers(0, 10**5))
            who = holder if draw(st.integers(0, 4)) else draw(st.sampled_from(devs))
            rows.append(make_record(str(bug), who, t, "Status", "NEW", "RESOLVED"))
            rows.append(make_record(str(bug), who, t, "Resolution", "", "FIXED"))
    return rows


@settings(max_examples=150, deadline=None)
@given(histories())
def test_events_satisfy_invariants(records):
    buf = io.StringIO()
    write_history(records, buf)
    diag = Counter()
    events = extract_events(parse_history(buf.getvalue()), diag)
    by_bug: dict[str, list[BugEvent]] = {}
    for e in events:
        by_bug.setdefault(e.bug_id, []).append(e)
    for evs in by_bug.values():
        holder = None
        received: set[str] = set()
        for e in evs:
            if e.kind is EventKind.RECEIVE:
                received.add(e.developer)
                holder = e.developer
            else:
                # outcomes come from the single current holder who received it
                assert e.developer in received
                assert e.developer == holder
                if e.kind is EventKind.TOSS:
                    assert e.toss_target is not None and e.toss_target != e.developer
                    received.discard(e.developer)
                    holder = None
    times = processing_times(events)
    assert all(t.tau > 0 for t in times)
    matched_fixes = sum(1 for r in pair_receipts(events) if r.outcome is EventKind.FIX and r.outcome_at > r.received_at)
    assert sum(t.kind is EventKind.FIX for t in times) == matched_fixes


# -- corpus filter ---------------------------------------------------------------------


def _fix_corpus(counts: dict[str, int]) -> list[BugEvent]:
    events, bug = [], 0
    for dev, n in counts.items():
        for _ in range(n):
            bug += 1
            events += [BugEvent(str(bug), dev, EventKind.RECEIVE, bug), BugEvent(str(bug), dev, EventKind.FIX, bug + 10)]
    return events


def test_min_fixed_boundary():
    events = _fix_corpus({"low": 49, "ok": 50})
    kept, summary = filter_corpus(events, min_fixed=50, top_fraction=1.0)
    assert {e.developer for e in kept} == {"ok"}
    assert summary.developers_retained == 1


def test_identity_when_unfiltered():
    events = _fix_corpus({"a": 1, "b": 3, "c": 2})
    kept, summary = filter_corpus(events, min_fixed=0, top_fraction=1.0)
    assert kept == events
    assert summary.retained_fraction == 1.0


def test_top_two_of_ten():
    events = _fix_corpus({f"d{i}": i for i in range(1, 11)})
    kept, _ = filter_corpus(events, min_fixed=0, top_fraction=0.2)
    assert {e.developer for e in kept} == {"d9", "d10"}


def test_full_lifecycle_drops_unfixed_bug():
    events = _fix_corpus({"a": 2}) + [BugEvent("99", "a", EventKind.RECEIVE, 5)]
    kept, _ = filter_corpus(events, min_fixed=0, top_fraction=1.0, require_full_lifecycle=True)
    assert "99" not in {e.bug_id for e in kept}
    kept, _ = filter_corpus(events, min_fixed=0, top_fraction=1.0, require_full_lifecycle=False)
    assert "99" in {e.bug_id for e in kept}


@settings(max_examples=100, deadline=None)
@given(st.dictionaries(st.sampled_from([f"d{i}" for i in range(12)]), st.integers(1, 8), min_size=1), st.integers(0, 5))
def test_filter_idempotent_without_rank_cut(counts, min_fixed):
    events = _fix_corpus(counts)
    once, _ = filter_corpus(events, min_fixed=min_fixed, top_fraction=1.0)
    twice, _ = filter_corpus(once, min_fixed=min_fixed, top_fraction=1.0)
    assert once == twice


def test_rank_cut_is_not_idempotent():
    # re-ranking the survivors shrinks the cohort again
    events = _fix_corpus({f"d{i}": i for i in range(1, 11)})
    once, _ = filter_corpus(events, min_fixed=0, top_fraction=0.2)
    twice, _ = filter_corpus(once, min_fixed=0, top_fraction=0.2)
    assert {e.developer for e in twice} == {"d10"}


def test_event_file_round_trip(history_text):
    events = extract_events(parse_history(history_text))
    buf = io.StringIO()
    write_events(events, buf)
    buf.seek(0)
    assert read_events(buf) == events
