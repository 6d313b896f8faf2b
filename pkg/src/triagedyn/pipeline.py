"""End-to-end analysis steps shared by the CLI and the acceptance suite."""

from __future__ import annotations

from collections import Counter
from dataclasses import asdict, dataclass

import numpy as np

from .curvefit import FitModel, Form, ThresholdCriteria, ThresholdNotFound, fit_two_term_power, select_threshold
from .disttest import bug_ccdf, developer_ccdf, kruskal_wallis, select_best
from .ingest import BugEvent, EventKind, ProcessingTime
from .metrics import RatePoint, Windowing, rate_curve, window_events, windowed_receipts
from .queues import affp_aftp, build_queues, first_positions, group_by_state

STATES = ("normal", "overload")
SHORT_TAU_HOURS = (1.0, 10.0)


@dataclass(frozen=True)
class FitSettings:
    fix_form: Form = Form.DIFF
    toss_form: Form = Form.POWDECAY
    criteria: ThresholdCriteria = ThresholdCriteria()


def rate_points(events: list[BugEvent], windowing: Windowing) -> list[RatePoint]:
    return rate_curve(window_events(events, windowing))


@dataclass
class ThresholdAnalysis:
    fix_model: FitModel
    toss_model: FitModel
    report: dict
    threshold: float | None

    def models_dict(self) -> dict:
        return {"fixing": self.fix_model.to_dict(), "tossing": self.toss_model.to_dict()}


def detect_threshold(points: list[RatePoint], settings: FitSettings = FitSettings()) -> ThresholdAnalysis:
    """Fit both rate curves and select the threshold.

    A missing threshold is reported as ``threshold=None`` with the full
    conditions table rather than raised.
    """
    f_model = fit_two_term_power([(p.N, p.P_f) for p in points], settings.fix_form)
    t_model = fit_two_term_power([(p.N, p.P_t) for p in points], settings.toss_form)
    try:
        report = select_threshold(f_model, t_model, settings.criteria)
    except ThresholdNotFound as exc:
        report = exc.report
    out = report.to_dict()
    out["criteria"] = asdict(settings.criteria)
    return ThresholdAnalysis(f_model, t_model, out, report.chosen)


def _kw(groups, significance: float) -> dict:
    if any(len(g) == 0 for g in groups):
        return {"H": None, "p": None, "significant": None, "method": "insufficient data"}
    res = kruskal_wallis(groups)
    return {"H": res.H, "p": res.p, "significant": res.p < significance, "method": res.method}


def spatial_analysis(events, windowing: Windowing, threshold: float, significance: float = 0.01):
    """First fixing/tossing positions per developer-window, split by state."""
    metrics = [first_positions(q) for q in build_queues(events, windowing)]
    groups = group_by_state(metrics, threshold)
    out = {"threshold": threshold, "samples": len(metrics), "states": {}}
    for state in STATES:
        q_f, q_t = affp_aftp(groups[state]) if groups[state] else (None, None)
        out["states"][state] = {"samples": len(groups[state]), "Q_f_position": q_f, "Q_t_position": q_t}
    for tag in ("S_f", "S_t"):
        samples = [[getattr(m, tag) for m in groups[s] if getattr(m, tag) is not None] for s in STATES]
        out[f"kruskal_{tag}"] = _kw(samples, significance)
    return out, metrics, groups


def times_by_state(events, windowing: Windowing, threshold: float) -> dict[str, list[ProcessingTime]]:
    """Processing times keyed by the state of the developer-window of receipt."""
    cut = np.floor(threshold)
    out: dict[str, list[ProcessingTime]] = {s: [] for s in STATES}
    for (dev, _w), receipts in sorted(windowed_receipts(events, windowing).items()):
        state = "normal" if len(receipts) <= cut else "overload"
        for rc in receipts:
            if rc.outcome is None or rc.outcome_at <= rc.received_at:
                continue
            tau = (rc.outcome_at - rc.received_at) / 3600.0
            out[state].append(ProcessingTime(rc.bug_id, dev, rc.outcome, tau, rc.received_at))
    return out


def temporal_analysis(events, windowing: Windowing, threshold: float, significance: float = 0.01):
    """Processing-time CCDFs per state and kind, with state-difference tests."""
    by_state = times_by_state(events, windowing, threshold)
    summary: dict = {"threshold": threshold, "kinds": {}}
    curves = {}
    for kind in (EventKind.FIX, EventKind.TOSS):
        taus = {s: [t.tau for t in by_state[s] if t.kind is kind] for s in STATES}
        entry = {
            "count": {s: len(taus[s]) for s in STATES},
            "median_hours": {s: (float(np.median(taus[s])) if taus[s] else None) for s in STATES},
            "kruskal_bug": _kw([taus[s] for s in STATES], significance),
            "short_mass": {
                f"tau_le_{h:g}_hours": {s: (float(np.mean(np.asarray(taus[s]) <= h)) if taus[s] else None) for s in STATES}
                for h in SHORT_TAU_HOURS
            },
        }
        dev_means = {}
        for s in STATES:
            per_dev: dict[str, list[float]] = {}
            for t in by_state[s]:
                if t.kind is kind:
                    per_dev.setdefault(t.developer, []).append(t.tau)
            dev_means[s] = [float(np.mean(v)) for _, v in sorted(per_dev.items())]
            if taus[s]:
                curves[(kind.value.lower(), "bug", s)] = bug_ccdf(by_state[s], kind)
                curves[(kind.value.lower(), "developer", s)] = developer_ccdf(by_state[s], kind)
        entry["kruskal_developer"] = _kw([dev_means[s] for s in STATES], significance)
        summary["kinds"][kind.value.lower()] = entry
    return summary, curves, by_state


def distribution_analysis(taus, xmin=None, significance: float = 0.01, jobs: int = 1) -> dict:
    sel = select_best(taus, xmin=xmin, significance=significance, jobs=jobs)
    return sel.to_dict()


def event_summary(events) -> dict:
    kinds = Counter(ev.kind.value for ev in events)
    return {
        "events": len(events),
        "bugs": len({ev.bug_id for ev in events}),
        "developers": len({ev.developer for ev in events}),
        "by_kind": dict(sorted(kinds.items())),
    }


def all_processing_times(by_state: dict[str, list[ProcessingTime]], kind: EventKind) -> list[float]:
    return [t.tau for s in STATES for t in by_state[s] if t.kind is kind]

