"""Queueing simulator of developer fix/toss behavior around a workload threshold.

Each agent gets a Poisson number of receipt slots per window at uniform
times. Fresh bugs fill the slots unless a toss from another agent fills
one first. An agent-window whose planned workload exceeds the threshold is
OVERLOAD: its fix probability declines linearly with the excess, its first
fix goes to the newest bug with probability ``newest_first_p``, and its
tosses take less time. Tosses always start with the oldest tossed bug.

Every outcome is emitted as change records in the history schema, so the
output can be fed straight back through :mod:`triagedyn.ingest`.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from typing import TextIO

import numpy as np

from .ingest import BugEvent, ChangeRecord, EventKind, iso_gmt, make_record, write_history


class AgentState(str, Enum):
    NORMAL = "NORMAL"
    OVERLOAD = "OVERLOAD"


FIX_POLICIES = ("FIFO", "NEWEST_FIRST_PROB")
TOSS_POLICIES = ("OLDEST_FIRST",)
DEFAULT_ORIGIN = 1262563200  # 2010-01-04 00:00:00 GMT
TRIAGE = "triage"
_NO_SLOT = np.iinfo(np.int64).min  # never later than a toss time


@dataclass(frozen=True)
class ServiceLaw:
    """Stretched-exponential (Weibull) law with survival exp(-(tau/scale)^beta), hours."""

    beta: float
    scale: float

    def __post_init__(self):
        if not (self.beta > 0 and self.scale > 0):
            raise ValueError("service law needs beta > 0 and scale > 0")


@dataclass(frozen=True)
class SimConfig:
    agent_count: int = 500
    horizon_days: float = 728.0
    window_days: float = 91.0
    arrival_rate: float = 24.0
    rate_spread: float = 0.5  # per-agent rate uniform in arrival_rate * (1 +/- spread)
    threshold: float = 21.07
    fix_policy_normal: str = "FIFO"
    fix_policy_overload: str = "NEWEST_FIRST_PROB"
    newest_first_p: float = 0.7
    toss_policy: str = "OLDEST_FIRST"
    base_fix_fraction: float = 0.65
    overload_slope: float = 0.01
    fix_law: ServiceLaw = ServiceLaw(0.3299, 300.0)
    toss_law_normal: ServiceLaw = ServiceLaw(0.2709, 300.0)
    toss_law_overload: ServiceLaw = ServiceLaw(0.2709, 40.0)
    seed: int = 0
    origin: int = DEFAULT_ORIGIN

    def __post_init__(self):
        if self.agent_count < 2:
            raise ValueError("agent_count must be at least 2")
        if not (self.horizon_days > 0 and self.window_days > 0 and self.arrival_rate > 0):
            raise ValueError("horizon_days, window_days and arrival_rate must be positive")
        if not 0 <= self.rate_spread <= 1:
            raise ValueError("rate_spread must lie in [0, 1]")
        if not self.threshold > 0:
            raise ValueError("threshold must be positive")
        for name in ("newest_first_p", "base_fix_fraction"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.overload_slope < 0:
            raise ValueError("overload_slope must be non-negative")
        if self.fix_policy_normal != "FIFO":
            raise ValueError("normal-state fix policy must be FIFO")
        if self.fix_policy_overload not in FIX_POLICIES:
            raise ValueError(f"fix_policy_overload must be one of {FIX_POLICIES}")
        if self.toss_policy not in TOSS_POLICIES:
            raise ValueError(f"toss_policy must be one of {TOSS_POLICIES}")

    @property
    def window_seconds(self) -> int:
        return int(round(self.window_days * 86400))

    @property
    def n_windows(self) -> int:
        return max(1, math.ceil(self.horizon_days / self.window_days - 1e-9))

    @property
    def horizon_end(self) -> int:
        return self.origin + int(round(self.horizon_days * 86400))

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name} = {v.beta!r}, {v.scale!r}" if isinstance(v, ServiceLaw) else f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


def parse_config(text: str, base: SimConfig | None = None) -> SimConfig:
    """Read ``key = value`` lines (``#`` starts a comment) over ``base`` defaults.

    Service laws are written as ``beta, scale``.
    """
    base = base or SimConfig()
    types = {f.name: f for f in fields(SimConfig)}
    updates = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or key not in types:
            raise ValueError(f"config line {lineno}: unknown or malformed entry {raw.strip()!r}")
        current = getattr(base, key)
        try:
            if isinstance(current, ServiceLaw):
                beta, scale = (float(p) for p in value.split(","))
                updates[key] = ServiceLaw(beta, scale)
            elif isinstance(current, bool):
                updates[key] = value.lower() in ("1", "true", "yes")
            elif isinstance(current, int):
                updates[key] = int(value)
            elif isinstance(current, float):
                updates[key] = float(value)
            else:
                updates[key] = value
        except ValueError as exc:
            raise ValueError(f"config line {lineno}: bad value for {key}: {exc}") from None
    return replace(base, **updates)


# -- behavioral primitives -------------------------------------------------------


def sample_service_time(law: ServiceLaw | tuple[float, float], u):
    """Inverse survival function: tau = scale * (-ln u)^(1/beta), hours."""
    beta, scale = (law.beta, law.scale) if isinstance(law, ServiceLaw) else law
    u_arr = np.asarray(u, dtype=float)
    if np.any((u_arr <= 0) | (u_arr >= 1)):
        raise ValueError("u must lie in (0, 1)")
    tau = scale * (-np.log(u_arr)) ** (1.0 / beta)
    return float(tau) if tau.ndim == 0 else tau


def choose_fix_index(state: AgentState | str, pending, rng: np.random.Generator, newest_first_p: float = 0.7) -> int:
    """Queue position (1-based) of the bug fixed first.

    NORMAL is FIFO; OVERLOAD picks the newest with probability
    ``newest_first_p`` and the oldest otherwise.
    """
    pending = sorted(pending)
    if not pending:
        raise ValueError("no pending entries")
    if AgentState(state) is AgentState.NORMAL:
        return pending[0]
    return pending[-1] if rng.random() < newest_first_p else pending[0]


def choose_toss_index(pending) -> int:
    """Queue position (1-based) of the bug tossed first: the oldest."""
    if not pending:
        raise ValueError("no pending entries")
    return min(pending)


# -- simulation ------------------------------------------------------------------------


@dataclass
class _Plan:
    window: int
    state: AgentState
    slot_times: np.ndarray
    kinds: list[EventKind]
    tau_seconds: list[int]
    log: dict = field(default_factory=dict)
    next_slot: int = 0


@dataclass
class SimResult:
    records: list[ChangeRecord]
    events: list[BugEvent]
    annotations: dict = field(default_factory=dict)


def _draw_u(rng: np.random.Generator, n: int) -> np.ndarray:
    u = rng.random(n)
    u[u == 0.0] = np.finfo(float).tiny
    return u


def _to_seconds(tau_hours: np.ndarray) -> list[int]:
    return [max(1, math.ceil(t * 3600.0)) for t in np.atleast_1d(tau_hours)]


def _assign_taus(positions: np.ndarray, first: int, taus: np.ndarray) -> dict[int, float]:
    """Give the first-handled position the shortest time and the rest longest-to-oldest."""
    taus = np.sort(taus)
    out = {first: taus[0]}
    rest = [p for p in positions.tolist() if p != first]
    for p, t in zip(rest, taus[1:][::-1]):
        out[p] = t
    return out


class _Simulator:
    WINDOW, SLOT, OUTCOME = 0, 1, 2

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed)
        self.agents = [f"dev{i:04d}" for i in range(cfg.agent_count)]
        self.rates = cfg.arrival_rate * (1.0 + cfg.rate_spread * (2.0 * self.rng.random(cfg.agent_count) - 1.0))
        self.plans: list[_Plan | None] = [None] * cfg.agent_count
        self.next_slot_time = np.full(cfg.agent_count, _NO_SLOT, dtype=np.int64)
        self.last_receipt = np.full(cfg.agent_count, np.iinfo(np.int64).min, dtype=np.int64)
        self.heap: list = []
        self.seq = 0
        self.records: list[ChangeRecord] = []
        self.events: list[BugEvent] = []
        self.holders: dict[str, set[int]] = {}
        self.next_bug = 1
        self.window_log: list[dict] = []
        self.extra_receipts = 0
        self.post_horizon_receipts = 0

    def push(self, t, kind, payload):
        heapq.heappush(self.heap, (t, kind, self.seq, payload))
        self.seq += 1

    # planning

    def plan_window(self, w: int, start: int):
        cfg, rng = self.cfg, self.rng
        end = min(start + cfg.window_seconds, cfg.horizon_end)
        q0 = 1.0 - cfg.base_fix_fraction
        for a in range(cfg.agent_count):
            n = int(rng.poisson(self.rates[a]))
            n = min(n, end - start)
            times = np.sort(start + rng.choice(end - start, size=n, replace=False)) if n else np.empty(0, np.int64)
            state = AgentState.NORMAL if n <= cfg.threshold else AgentState.OVERLOAD
            toss = rng.random(n) < q0
            if state is AgentState.OVERLOAD and toss.any() and q0 < 1:
                p_fix = min(max(cfg.base_fix_fraction - cfg.overload_slope * (n - cfg.threshold), 0.0), 1.0)
                q_extra = min(max((1.0 - p_fix - q0) / (1.0 - q0), 0.0), 1.0)
                extra = rng.random(n) < q_extra
                # keep the first toss position state-independent
                extra[: int(np.argmax(toss)) + 1] = False
                toss |= extra
            positions = np.arange(1, n + 1)
            fix_pos, toss_pos = positions[~toss], positions[toss]
            kinds = [EventKind.TOSS if t else EventKind.FIX for t in toss]
            taus: dict[int, float] = {}
            if fix_pos.size:
                p = cfg.newest_first_p if cfg.fix_policy_overload == "NEWEST_FIRST_PROB" else 0.0
                first = choose_fix_index(state, fix_pos.tolist(), rng, p)
                taus.update(_assign_taus(fix_pos, first, sample_service_time(cfg.fix_law, _draw_u(rng, fix_pos.size))))
            if toss_pos.size:
                law = cfg.toss_law_overload if state is AgentState.OVERLOAD else cfg.toss_law_normal
                first = choose_toss_index(toss_pos.tolist())
                taus.update(_assign_taus(toss_pos, first, sample_service_time(law, _draw_u(rng, toss_pos.size))))
            log = {"agent": self.agents[a], "window_index": w, "planned_N": n, "state": state.value, "receipts": 0}
            self.window_log.append(log)
            plan = _Plan(w, state, times.astype(np.int64), kinds, [_to_seconds(taus[p])[0] for p in positions.tolist()], log)
            self.plans[a] = plan
            self.next_slot_time[a] = plan.slot_times[0] if n else _NO_SLOT
            for k, t in enumerate(plan.slot_times.tolist()):
                self.push(t, self.SLOT, (a, w, k))

    # receipts and outcomes

    def receive(self, a: int, bug: str, t: int):
        plan = self.plans[a]
        k = plan.next_slot
        plan.next_slot += 1
        plan.log["receipts"] += 1
        self.next_slot_time[a] = plan.slot_times[k + 1] if k + 1 < plan.slot_times.size else _NO_SLOT
        self.last_receipt[a] = t
        self.holders.setdefault(bug, set()).add(a)
        self.events.append(BugEvent(bug, self.agents[a], EventKind.RECEIVE, t))
        self.push(t + plan.tau_seconds[k], self.OUTCOME, (a, bug, plan.kinds[k]))

    def receive_unplanned(self, a: int, bug: str, t: int, in_horizon: bool):
        """Receipt outside any slot; always ends in a fix."""
        if in_horizon:
            self.extra_receipts += 1
            if self.plans[a] is not None:
                self.plans[a].log["receipts"] += 1
        else:
            self.post_horizon_receipts += 1
        self.last_receipt[a] = max(self.last_receipt[a], t)
        self.holders.setdefault(bug, set()).add(a)
        self.events.append(BugEvent(bug, self.agents[a], EventKind.RECEIVE, t))
        tau = _to_seconds(sample_service_time(self.cfg.fix_law, _draw_u(self.rng, 1)))[0]
        self.push(t + tau, self.OUTCOME, (a, bug, EventKind.FIX))

    def pick_target(self, src: int, bug: str, t: int, in_horizon: bool) -> tuple[int, bool]:
        """Uniform choice among eligible agents; (agent, has_slot)."""
        n = self.cfg.agent_count
        held = self.holders.get(bug, set())
        if in_horizon:
            for _ in range(64):
                a = int(self.rng.integers(n))
                if a != src and a not in held and self.next_slot_time[a] > t and self.last_receipt[a] < t:
                    return a, True
            ok = (self.next_slot_time > t) & (self.last_receipt < t)
            ok[src] = False
            ok[list(held)] = False
            cand = np.flatnonzero(ok)
            if cand.size:
                return int(cand[self.rng.integers(cand.size)]), True
        others = [a for a in range(n) if a != src and a not in held] or [a for a in range(n) if a != src]
        return others[int(self.rng.integers(len(others)))], False

    def outcome(self, t: int, a: int, bug: str, kind: EventKind):
        who = self.agents[a]
        if kind is EventKind.FIX:
            self.records.append(make_record(bug, who, t, "Status", "ASSIGNED", "RESOLVED"))
            self.records.append(make_record(bug, who, t, "Resolution", "", "FIXED"))
            self.events.append(BugEvent(bug, who, EventKind.FIX, t))
            return
        in_horizon = t < self.cfg.horizon_end
        target, slotted = self.pick_target(a, bug, t, in_horizon)
        self.records.append(make_record(bug, who, t, "Assignee", who, self.agents[target]))
        self.events.append(BugEvent(bug, who, EventKind.TOSS, t, self.agents[target]))
        if slotted:
            self.receive(target, bug, t)
        else:
            self.receive_unplanned(target, bug, t, in_horizon)

    def run(self) -> SimResult:
        cfg = self.cfg
        for w in range(cfg.n_windows):
            start = cfg.origin + w * cfg.window_seconds
            if start < cfg.horizon_end:
                self.push(start, self.WINDOW, (w, start))
        while self.heap:
            t, kind, _, payload = heapq.heappop(self.heap)
            if kind == self.WINDOW:
                self.plan_window(*payload)
            elif kind == self.SLOT:
                a, w, k = payload
                plan = self.plans[a]
                if plan.window != w or plan.next_slot != k:
                    continue  # already filled by a toss
                bug = str(self.next_bug)
                self.next_bug += 1
                self.records.append(make_record(bug, TRIAGE, t, "Assignee", "nobody", self.agents[a]))
                self.receive(a, bug, t)
            else:
                self.outcome(t, *payload)
        return SimResult(self.records, self.events, self.annotations())

    def annotations(self) -> dict:
        cfg = self.cfg
        return {
            "origin": cfg.origin,
            "origin_gmt": iso_gmt(cfg.origin),
            "window_days": cfg.window_days,
            "n_windows": cfg.n_windows,
            "horizon_end": cfg.horizon_end,
            "horizon_end_gmt": iso_gmt(cfg.horizon_end),
            "threshold": cfg.threshold,
            "seed": cfg.seed,
            "bugs": self.next_bug - 1,
            "extra_receipts": self.extra_receipts,
            "post_horizon_receipts": self.post_horizon_receipts,
            "windows": self.window_log,
        }


def simulate(config: SimConfig | None = None) -> SimResult:
    """Run one seeded simulation; identical configs give identical output."""
    return _Simulator(config or SimConfig()).run()


def write_simulation(result: SimResult, history_fh: TextIO, sidecar_fh: TextIO) -> None:
    write_history(result.records, history_fh)
    json.dump(result.annotations, sidecar_fh, indent=1, sort_keys=True)
    sidecar_fh.write("\n")
