"""Maximum-likelihood fits of five candidate processing-time laws.

All families are fitted on the truncated support ``x >= xmin`` and their
log-likelihoods include the truncation normalization, so values from
different families on the same sample are directly comparable.

Densities (``x >= xmin``):

* pl:     (alpha-1)/xmin * (x/xmin)^-alpha
* expn:   lam * exp(-lam (x - xmin))
* stexp:  beta/s * (x/s)^(beta-1) * exp((xmin/s)^beta - (x/s)^beta)
* lgn:    lognormal(mu, sigma) density divided by P(X >= xmin)
* pl-cut: lam^(1-alpha) / Gamma(1-alpha, lam xmin) * x^-alpha * exp(-lam x)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import optimize, special

MIN_TAIL = 50
BETA_MIN = 0.01


class Family(str, Enum):
    PL = "pl"
    EXPN = "expn"
    STEXP = "stexp"
    LGN = "lgn"
    PLCUT = "pl-cut"


FAMILY_ORDER = (Family.PL, Family.EXPN, Family.STEXP, Family.LGN, Family.PLCUT)
N_PARAMS = {Family.PL: 1, Family.EXPN: 1, Family.STEXP: 2, Family.LGN: 2, Family.PLCUT: 2}


class FitFailure(RuntimeError):
    def __init__(self, message: str, trace: list | None = None) -> None:
        super().__init__(message)
        self.trace = trace or []


@dataclass(frozen=True)
class DistributionFit:
    family: Family
    params: dict
    loglik: float
    n: int
    xmin: float
    trace: list = field(default_factory=list, compare=False, repr=False)

    def pointwise(self, x) -> np.ndarray:
        return log_density(self.family, self.params, self.xmin, np.asarray(x, dtype=float))

    def to_dict(self) -> dict:
        return {"family": self.family.value, "params": dict(self.params), "loglik": self.loglik, "n": self.n, "xmin": self.xmin}


# -- special functions --------------------------------------------------------


def _upper_gamma_cf(s: float, x: float) -> float:
    """log Gamma(s, x) by Legendre's continued fraction (modified Lentz), x > 0."""
    tiny = 1e-300
    b = x + 1.0 - s
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 10_000):
        an = -i * (i - s)
        b += 2.0
        d = an * d + b
        d = tiny if abs(d) < tiny else d
        c = b + an / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-15:
            break
    return -x + s * math.log(x) + math.log(h)


def log_upper_gamma(s: float, x: float) -> float:
    """log of the upper incomplete gamma Gamma(s, x) for any real s and x > 0."""
    if x <= 0:
        if s <= 0:
            return math.inf
        return special.gammaln(s)
    if x >= 1.0 + max(s, 0.0):
        return _upper_gamma_cf(s, x)
    if s > 0:
        q = special.gammaincc(s, x)
        return math.log(q) + special.gammaln(s)
    # recur downward from a positive shape: Gamma(s,x) = (Gamma(s+1,x) - x^s e^-x)/s
    m = int(math.floor(-s)) + 1
    base = s + m
    g = special.gammaincc(base, x) * special.gamma(base)
    for k in range(m - 1, -1, -1):
        sk = s + k
        g = special.exp1(x) if sk == 0 else (g - x**sk * math.exp(-x)) / sk
    return math.log(g)


# -- densities ------------------------------------------------------------------


def log_density(family: Family, params: dict, xmin: float, x: np.ndarray) -> np.ndarray:
    family = Family(family)
    if family is Family.PL:
        a = params["alpha"]
        return np.log(a - 1.0) - np.log(xmin) - a * np.log(x / xmin)
    if family is Family.EXPN:
        lam = params["lam"]
        return np.log(lam) - lam * (x - xmin)
    if family is Family.STEXP:
        beta, s = params["beta"], params["scale"]
        return np.log(beta / s) + (beta - 1.0) * np.log(x / s) + (xmin / s) ** beta - (x / s) ** beta
    if family is Family.LGN:
        mu, sigma = params["mu"], params["sigma"]
        z = (np.log(x) - mu) / sigma
        log_tail = special.log_ndtr(-(math.log(xmin) - mu) / sigma) if xmin > 0 else 0.0
        return -0.5 * z**2 - np.log(x * sigma * math.sqrt(2 * math.pi)) - log_tail
    a, lam = params["alpha"], params["lam"]
    return (1.0 - a) * math.log(lam) - log_upper_gamma(1.0 - a, lam * xmin) - a * np.log(x) - lam * x


# -- fitting ------------------------------------------------------------------------


def _tail(samples, xmin: float | None) -> tuple[np.ndarray, float]:
    x = np.asarray(samples, dtype=float).ravel()
    if np.any(~np.isfinite(x)) or np.any(x <= 0):
        raise ValueError("samples must be finite and positive")
    if xmin is None:
        xmin = float(x.min())
    tail = x[x >= xmin]
    if tail.size < MIN_TAIL:
        raise ValueError(f"need at least {MIN_TAIL} samples at or above xmin, got {tail.size}")
    return tail, float(xmin)


def _fit_pl(x, xmin):
    if xmin <= 0:
        raise ValueError("power-law fit needs xmin > 0")
    s = float(np.sum(np.log(x / xmin)))
    if s <= 0:
        raise FitFailure("all samples equal xmin; power-law exponent undefined")
    return {"alpha": 1.0 + x.size / s}, []


def _fit_expn(x, xmin):
    m = float(np.mean(x - xmin))
    if m <= 0:
        raise FitFailure("all samples equal xmin; exponential rate undefined")
    return {"lam": 1.0 / m}, []


def _stexp_profile(x, xmin):
    """Negative profile log-likelihood in log(beta), scale profiled out."""
    logx = np.log(x)
    g = float(np.exp(np.mean(logx)))
    u = logx - math.log(g)
    u0 = math.log(xmin / g) if xmin > 0 else -math.inf
    n = x.size
    sum_logx = float(logx.sum())

    def theta(beta):
        return float(np.mean(np.exp(beta * u))) - (math.exp(beta * u0) if xmin > 0 else 0.0)

    def nll(log_beta):
        beta = math.exp(log_beta)
        th = theta(beta)
        if not th > 0:
            return math.inf
        return -(n * math.log(beta) - n * math.log(th) - n * beta * math.log(g) + (beta - 1.0) * sum_logx - n)

    return nll, theta, g


def _fit_stexp(x, xmin):
    nll, theta, g = _stexp_profile(x, xmin)
    # below beta ~ 0.01 the truncated law is a power law and the scale underflows
    grid = np.linspace(math.log(BETA_MIN), math.log(20.0), 60)
    vals = np.array([nll(v) for v in grid])
    i = int(np.nanargmin(vals))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    res = optimize.minimize_scalar(nll, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12, "maxiter": 500})
    trace = [f"bounded search in log beta: {res.message}"]
    if not res.success:
        raise FitFailure("stretched-exponential shape search failed", trace)
    beta = math.exp(res.x)
    if res.x - grid[0] < 1e-6:
        trace.append("shape at lower bound; data look power-law")
    scale = g * theta(beta) ** (1.0 / beta)
    return {"beta": beta, "scale": scale}, trace


def _fit_lgn(x, xmin):
    logx = np.log(x)
    n, s1, s2 = x.size, float(logx.sum()), float(np.sum(logx**2))
    lxmin = math.log(xmin) if xmin > 0 else None

    def nll(v):
        mu, log_sigma = v
        sigma = math.exp(log_sigma)
        q = (s2 - 2 * mu * s1 + n * mu * mu) / (sigma * sigma)
        val, g_mu, g_ls = 0.5 * q + n * log_sigma + s1, (n * mu - s1) / (sigma * sigma), n - q
        if lxmin is not None:
            # truncation term n * log(Phi(z)) with z = (mu - log xmin) / sigma
            z = (mu - lxmin) / sigma
            log_cdf = float(special.log_ndtr(z))
            if z < -1e6:
                ratio = -z  # Mills-ratio limit of phi/Phi
            else:
                ratio = math.exp(-0.5 * z * z - 0.5 * math.log(2 * math.pi) - log_cdf)
            val += n * log_cdf
            g_mu += n * ratio / sigma
            g_ls -= n * ratio * z
        if not (math.isfinite(val) and math.isfinite(g_mu) and math.isfinite(g_ls)):
            return math.inf, np.zeros(2)
        return val, np.array([g_mu, g_ls])

    mean, sd = s1 / n, math.sqrt(max(s2 / n - (s1 / n) ** 2, 1e-12))
    best, trace = None, []
    for start in ((mean, math.log(sd)), (mean - sd, math.log(sd) + 0.5), (mean - 3 * sd, math.log(sd) + 1.0)):
        res = optimize.minimize(nll, start, jac=True, method="BFGS", options={"gtol": 1e-8 * n, "maxiter": 2000})
        trace.append(f"start {start}: {res.message}")
        if np.isfinite(res.fun) and (best is None or res.fun < best.fun):
            best = res
    if best is None:
        raise FitFailure("log-normal likelihood search failed", trace)
    return {"mu": float(best.x[0]), "sigma": float(math.exp(best.x[1]))}, trace


def _fit_plcut(x, xmin):
    if xmin <= 0:
        raise ValueError("power-law with cutoff needs xmin > 0")
    logx = np.log(x)
    n, sl, sx = x.size, float(logx.sum()), float(x.sum())

    def nll(v):
        a, log_lam = v
        lam = math.exp(log_lam)
        try:
            lg = log_upper_gamma(1.0 - a, lam * xmin)
        except (ValueError, OverflowError, ZeroDivisionError):
            return math.inf
        val = -((1.0 - a) * log_lam * n - n * lg - a * sl - lam * sx)
        return val if math.isfinite(val) else math.inf

    alpha_pl = 1.0 + n / max(float(np.sum(np.log(x / xmin))), 1e-300)
    mean = float(np.mean(x))
    starts = [(min(alpha_pl, 5.0), math.log(0.1 / mean)), (1.0, math.log(1.0 / mean)), (0.0, math.log(1.0 / (mean - xmin + 1e-12)))]
    # coarse simplex from each start, then one tight polish from the best
    best, trace = None, []
    for start in starts:
        res = optimize.minimize(nll, start, method="Nelder-Mead", options={"xatol": 1e-6, "fatol": 1e-8, "maxiter": 4000})
        trace.append(f"start {start}: {res.message}")
        if np.isfinite(res.fun) and (best is None or res.fun < best.fun):
            best = res
    if best is not None:
        simplex = [best.x, best.x + [1e-3, 0.0], best.x + [0.0, 1e-3]]
        res = optimize.minimize(
            nll, best.x, method="Nelder-Mead",
            options={"xatol": 1e-11, "fatol": 1e-12, "maxiter": 4000, "initial_simplex": simplex},
        )
        trace.append(f"polish: {res.message}")
        if np.isfinite(res.fun) and res.fun <= best.fun:
            best = res
    if best is None:
        raise FitFailure("power-law-with-cutoff likelihood search failed", trace)
    return {"alpha": float(best.x[0]), "lam": float(math.exp(best.x[1]))}, trace


_FITTERS = {
    Family.PL: _fit_pl,
    Family.EXPN: _fit_expn,
    Family.STEXP: _fit_stexp,
    Family.LGN: _fit_lgn,
    Family.PLCUT: _fit_plcut,
}


def fit_family(samples, family: Family | str, xmin: float | None = None) -> DistributionFit:
    """Maximum-likelihood fit of ``family`` to the samples at or above ``xmin``.

    ``xmin=None`` uses the smallest sample.
    """
    family = Family(family)
    x, xmin = _tail(samples, xmin)
    params, trace = _FITTERS[family](x, xmin)
    loglik = float(np.sum(log_density(family, params, xmin, x)))
    if not math.isfinite(loglik):
        raise FitFailure(f"{family.value} fit produced a non-finite log-likelihood", trace)
    return DistributionFit(family, params, loglik, int(x.size), xmin, trace)


# -- sampling ---------------------------------------------------------------------------


def sample_family(family: Family | str, params: dict, n: int, rng: np.random.Generator, xmin: float = 0.0) -> np.ndarray:
    """Draw ``n`` values from ``family`` truncated to ``x >= xmin``."""
    family = Family(family)
    u = rng.random(n)
    if family is Family.PL:
        return xmin * (1.0 - u) ** (-1.0 / (params["alpha"] - 1.0))
    if family is Family.EXPN:
        return xmin - np.log1p(-u) / params["lam"]
    if family is Family.STEXP:
        beta, s = params["beta"], params["scale"]
        return s * ((xmin / s) ** beta - np.log1p(-u)) ** (1.0 / beta)
    if family is Family.LGN:
        mu, sigma = params["mu"], params["sigma"]
        lo = special.ndtr((math.log(xmin) - mu) / sigma) if xmin > 0 else 0.0
        return np.exp(mu + sigma * special.ndtri(lo + u * (1.0 - lo)))
    a, lam = params["alpha"], params["lam"]
    out = np.empty(0)
    while out.size < n:
        m = 2 * (n - out.size) + 16
        if a >= 0:
            # shifted exponential proposal, accept with (x/xmin)^-alpha
            cand = xmin - np.log1p(-rng.random(m)) / lam
            keep = rng.random(m) <= (cand / xmin) ** (-a)
        else:
            cand = rng.gamma(1.0 - a, 1.0 / lam, m)
            keep = cand >= xmin
        out = np.concatenate([out, cand[keep]])
    return out[:n]


# -- lower cutoff ---------------------------------------------------------------------------


@dataclass(frozen=True)
class XminResult:
    xmin: float
    ks: float
    alpha: float
    n_tail: int
    warning: str | None = None


def xmin_select(samples, min_candidates_tail: int = 2) -> XminResult:
    """Lower cutoff minimizing the KS distance between a power-law fit and the tail.

    Every distinct sample value is a candidate.
    """
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    if x.size < 100:
        raise ValueError("xmin_select needs at least 100 samples")
    if np.any(x <= 0):
        raise ValueError("samples must be positive")
    n = x.size
    logx = np.log(x)
    suffix = np.cumsum(logx[::-1])[::-1]
    cand = np.unique(x[: n - min_candidates_tail], return_index=True)[1]
    best = None
    for i in cand:
        m = n - i
        denom = suffix[i] - m * logx[i]
        if denom <= 0:
            continue
        alpha = 1.0 + m / denom
        model = 1.0 - (x[i:] / x[i]) ** (1.0 - alpha)
        upper = np.arange(1, m + 1) / m
        d = float(max(np.max(upper - model), np.max(model - (upper - 1.0 / m))))
        if best is None or d < best[0]:
            best = (d, float(x[i]), alpha, m)
    if best is None:
        raise ValueError("no valid xmin candidate")
    d, xmin, alpha, m = best
    warning = f"only {m} samples at or above xmin" if m < MIN_TAIL else None
    return XminResult(xmin, d, alpha, m, warning)
