"""Two-term power curves, their derivatives, and the overload threshold.

Rate curves are modelled as ``y(N) = a*N**b + c*N**d``. Fits use a damped
Gauss-Newton (Levenberg-Marquardt) iteration run from a grid of exponent
starts in parallel; the threshold is the inflection point past which both
second derivatives stay near a constant and keep their sign.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np
from scipy.optimize import brentq


class Form(str, Enum):
    SUM = "sum"  # a*N^b + c*N^d, free signs
    DIFF = "diff"  # a*N^b - |c|*N^d
    POWDECAY = "powdecay"  # a*N^b + c*N^-|d|


EXPONENT_GRID = (-1.0, -0.5, -0.1, 0.1, 0.5, 1.0)


class FitError(RuntimeError):
    def __init__(self, message: str, best: FitModel | None = None) -> None:
        super().__init__(message)
        self.best = best


class ThresholdNotFound(RuntimeError):
    def __init__(self, report: ThresholdReport) -> None:
        lines = [f"  N={row['candidate']:.4f}: {', '.join(row['violations'])}" for row in report.conditions]
        detail = "\n".join(lines) if lines else "  no inflection point in range"
        super().__init__("no candidate satisfies the steady-state conditions:\n" + detail)
        self.report = report


@dataclass(frozen=True)
class FitModel:
    a: float
    b: float
    c: float
    d: float
    form: Form = Form.SUM
    residual_sse: float = 0.0
    confidence: float = 0.99

    def __call__(self, n):
        n = np.asarray(n, dtype=float)
        return self.a * n**self.b + self.c * n**self.d

    def first_derivative(self, n):
        n = np.asarray(n, dtype=float)
        return self.a * self.b * n ** (self.b - 1) + self.c * self.d * n ** (self.d - 1)

    def second_derivative(self, n):
        n = np.asarray(n, dtype=float)
        return self.a * self.b * (self.b - 1) * n ** (self.b - 2) + self.c * self.d * (self.d - 1) * n ** (self.d - 2)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["form"] = self.form.value
        out["sse"] = out.pop("residual_sse")
        return out

    @classmethod
    def from_dict(cls, data: dict) -> FitModel:
        return cls(
            data["a"], data["b"], data["c"], data["d"],
            Form(data.get("form", "sum")), data.get("sse", 0.0), data.get("confidence", 0.99),
        )


def second_derivative(model: FitModel, n: float) -> float:
    if n < 1:
        raise ValueError("N must be >= 1")
    return float(model.second_derivative(n))


# -- fitting ---------------------------------------------------------------


def _project(logn, y, expo):
    """Optimal (a, c) and residuals for each exponent pair row of ``expo``."""
    with np.errstate(over="ignore", invalid="ignore"):
        x1 = np.exp(np.outer(expo[:, 0], logn))
        x2 = np.exp(np.outer(expo[:, 1], logn))
        g11 = np.einsum("ij,ij->i", x1, x1)
        g12 = np.einsum("ij,ij->i", x1, x2)
        g22 = np.einsum("ij,ij->i", x2, x2)
        h1, h2 = x1 @ y, x2 @ y
        ridge = 1e-13 * (g11 + g22)
        g11r, g22r = g11 + ridge, g22 + ridge
        det = g11r * g22r - g12 * g12
        a = (g22r * h1 - g12 * h2) / det
        c = (g11r * h2 - g12 * h1) / det
        r = a[:, None] * x1 + c[:, None] * x2 - y
    return a, c, r, (x1, x2, g11r, g12, g22r, det)


def _levenberg_marquardt(logn, y, expo0, max_iter=300, ftol=1e-12, xtol=1e-10):
    """Batched LM on the exponents with the coefficients projected out.

    Each row of ``expo0`` is a (b, d) start. The Jacobian is Kaufman's
    approximation to the variable-projection residual. Returns
    (params S x 4, sse, converged).
    """
    e = np.array(expo0, dtype=float)
    s = e.shape[0]
    lam = np.full(s, 1e-3)
    done = np.zeros(s, dtype=bool)
    converged = np.zeros(s, dtype=bool)
    eye = np.eye(2)
    a, c, r, basis = _project(logn, y, e)
    sse = np.einsum("ij,ij->i", r, r)
    for _ in range(max_iter):
        active = ~done
        if not active.any():
            break
        x1, x2, g11, g12, g22, det = basis
        v1 = a[:, None] * x1 * logn
        v2 = c[:, None] * x2 * logn
        cols = []
        for v in (v1, v2):
            # remove the component inside span(x1, x2)
            p1, p2 = np.einsum("ij,ij->i", x1, v), np.einsum("ij,ij->i", x2, v)
            k1 = (g22 * p1 - g12 * p2) / det
            k2 = (g11 * p2 - g12 * p1) / det
            cols.append(v - k1[:, None] * x1 - k2[:, None] * x2)
        jac = np.stack(cols, axis=2)
        g = np.einsum("smk,sm->sk", jac, r)
        h = np.einsum("smk,sml->skl", jac, jac)
        damp = lam[:, None, None] * (h * eye + 1e-12 * eye)
        with np.errstate(all="ignore"):
            step = -np.linalg.solve(h + damp + 1e-300 * eye, g[..., None])[..., 0]
        step[done] = 0.0
        step = np.nan_to_num(step, nan=0.0, posinf=0.0, neginf=0.0)
        trial = np.clip(e + step, -10.0, 10.0)
        at, ct, rt, bt = _project(logn, y, trial)
        sse_t = np.einsum("ij,ij->i", rt, rt)
        better = active & np.isfinite(sse_t) & (sse_t < sse)
        small_gain = better & (sse - sse_t <= ftol * (1e-12 + sse))
        small_step = active & (np.abs(step).max(axis=1) <= xtol * (1.0 + np.abs(e).max(axis=1)))
        e[better], a[better], c[better], r[better], sse[better] = (
            trial[better], at[better], ct[better], rt[better], sse_t[better],
        )
        basis = tuple(np.where(better[:, None] if x.ndim == 2 else better, xt, x) for x, xt in zip(basis, bt))
        lam = np.where(better, np.maximum(lam / 5.0, 1e-15), np.minimum(lam * 4.0, 1e20))
        # no damping makes progress: a numerical minimum
        stalled = active & (lam >= 1e20)
        newly = small_gain | small_step | stalled
        converged |= newly
        done |= newly
    params = np.column_stack([a, e[:, 0], c, e[:, 1]])
    return params, sse, converged


def _start_points() -> np.ndarray:
    # (a, c) for each pair are the linear least-squares values, set in _project
    return np.array(list(itertools.combinations(EXPONENT_GRID, 2)))


def _canonical(p, form: Form):
    """Order the two terms to match ``form``; None if the signs are inadmissible."""
    a, b, c, d = p
    if form is Form.SUM:
        return (a, b, c, d) if b <= d else (c, d, a, b)
    if form is Form.DIFF:
        if a > 0 > c:
            return (a, b, c, d)
        if c > 0 > a:
            return (c, d, a, b)
        return None
    if d < 0 <= b:
        return (a, b, c, d)
    if b < 0 <= d:
        return (c, d, a, b)
    return None


def fit_two_term_power(points, form: Form | str = Form.SUM, confidence: float = 0.99) -> FitModel:
    """Least-squares two-term power fit with multi-start LM.

    ``points`` is a sequence of (N, y). Starts cover exponent pairs from
    ``EXPONENT_GRID`` with (a, c) from linear regression at those exponents.
    A constant model is preferred when it fits as well as any curve.
    """
    form = Form(form)
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 8:
        raise ValueError("need at least 8 (N, y) points")
    n, y = arr[:, 0], arr[:, 1]
    if np.any(n < 1):
        raise ValueError("N must be >= 1")
    logn = np.log(n)

    mean = float(y.mean())
    sse_const = float(np.sum((y - mean) ** 2))
    const = FitModel(mean, 0.0, 0.0, 0.0, form, sse_const, confidence)

    params, sse, ok = _levenberg_marquardt(logn, y, _start_points())
    best = None
    order = np.argsort(np.where(np.isfinite(sse), sse, np.inf))
    for i in order:
        if not (ok[i] and np.isfinite(sse[i])):
            continue
        canon = _canonical(params[i], form)
        if canon is None:
            continue
        best = FitModel(*map(float, canon), form, float(sse[i]), confidence)
        break

    scale = float(np.sum(y**2)) + 1e-300
    if best is None or sse_const <= best.residual_sse + 1e-14 * scale:
        if best is None and sse_const > 1e-14 * scale:
            i = int(order[0])
            partial = FitModel(*map(float, params[i]), form, float(sse[i]), confidence)
            raise FitError(f"no admissible converged start for form {form.value}", partial)
        return const
    return best


# -- inflections and threshold ------------------------------------------------


def find_inflections(model: FitModel, lo: float = 1.0, hi: float = 200.0, samples: int = 4000) -> list[float]:
    """Sign-change roots of y'' in [lo, hi], ascending."""
    if lo < 1:
        raise ValueError("lower bound must be >= 1")
    grid = np.geomspace(lo, hi, samples)
    vals = model.second_derivative(grid)
    roots = []
    for i in np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]:
        roots.append(brentq(model.second_derivative, grid[i], grid[i + 1], xtol=1e-13, rtol=4 * np.finfo(float).eps))
    return roots


@dataclass(frozen=True)
class ThresholdCriteria:
    """Steady-state conditions for the overload threshold.

    ``eps`` is the probe offset for the sign reference ``N* + eps``; ``tol``
    bounds ``|y'' - c|`` beyond the candidate.
    """

    c1: float = 0.0
    c2: float = 0.0
    eps: float = 0.5e-5
    tol: float = 1e-4
    grid_max: float = 500.0
    step: float = 0.01

    def __post_init__(self):
        if self.eps <= 0 or self.tol <= 0 or self.step <= 0:
            raise ValueError("eps, tol and step must be positive")


@dataclass
class ThresholdReport:
    candidates: list[dict] = field(default_factory=list)
    chosen: float | None = None
    conditions: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"candidates": self.candidates, "chosen": self.chosen, "conditions_table": self.conditions}


def _check_candidate(f_model, t_model, n_star, crit: ThresholdCriteria) -> dict:
    grid = n_star + crit.step * np.arange(1, int(math.floor((crit.grid_max - n_star) / crit.step)) + 1)
    row = {"candidate": n_star, "violations": []}
    for tag, model, const in (("f", f_model, crit.c1), ("t", t_model, crit.c2)):
        vals = model.second_derivative(grid)
        ref = np.sign(model.second_derivative(n_star + crit.eps))
        dev = float(np.max(np.abs(vals - const))) if grid.size else 0.0
        sign_ok = bool(np.all(np.sign(vals) == ref)) if grid.size else True
        row[f"max_dev_{tag}"] = dev
        row[f"sign_constant_{tag}"] = sign_ok
        if dev > crit.tol:
            row["violations"].append(f"|P_{tag}''-c| reaches {dev:.3g} > {crit.tol:g}")
        if not sign_ok:
            row["violations"].append(f"sign of P_{tag}'' changes beyond candidate")
    row["qualifies"] = not row["violations"]
    return row


def select_threshold(
    f_model: FitModel, t_model: FitModel, crit: ThresholdCriteria | None = None, lo: float = 1.0
) -> ThresholdReport:
    """Pick the smallest inflection point meeting the steady-state conditions.

    Raises :class:`ThresholdNotFound` (carrying the report) when none does.
    """
    crit = crit or ThresholdCriteria()
    report = ThresholdReport()
    for tag, model in (("fixing", f_model), ("tossing", t_model)):
        for root in find_inflections(model, lo, crit.grid_max):
            report.candidates.append({"curve": tag, "N": root})
    report.candidates.sort(key=lambda c: c["N"])
    for cand in report.candidates:
        report.conditions.append(_check_candidate(f_model, t_model, cand["N"], crit))
    chosen = [row["candidate"] for row in report.conditions if row["qualifies"]]
    if not chosen:
        raise ThresholdNotFound(report)
    report.chosen = min(chosen)
    return report
