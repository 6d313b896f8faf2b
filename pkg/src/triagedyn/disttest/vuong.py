"""Vuong closeness tests and best-family selection."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr
from scipy.stats import chi2

from .families import FAMILY_ORDER, N_PARAMS, DistributionFit, Family, XminResult, fit_family, xmin_select

# (simpler, richer) pairs where the richer family contains the simpler one
NESTED = {
    frozenset({Family.PL, Family.PLCUT}),
    frozenset({Family.EXPN, Family.STEXP}),
    frozenset({Family.EXPN, Family.PLCUT}),
}


@dataclass(frozen=True)
class VuongResult:
    llr: float
    p: float
    indeterminate: bool = False
    nested: bool = False


def vuong_compare(fit_a: DistributionFit, fit_b: DistributionFit, samples) -> VuongResult:
    """Normalized log-likelihood ratio of ``fit_a`` (row) against ``fit_b`` (column).

    Negative values favor ``fit_a``. The p-value is two-sided normal, or the
    chi-square(1) likelihood-ratio p when one family nests the other.
    """
    if fit_a.xmin != fit_b.xmin:
        raise ValueError("fits must share the same xmin")
    x = np.asarray(samples, dtype=float).ravel()
    x = x[x >= fit_a.xmin]
    diff = fit_b.pointwise(x) - fit_a.pointwise(x)
    n = diff.size
    sd = float(np.std(diff, ddof=1)) if n > 1 else 0.0
    nested = frozenset({fit_a.family, fit_b.family}) in NESTED
    total = math.fsum(diff)
    if not sd > 1e-12 * (1.0 + float(np.max(np.abs(diff)))):
        return VuongResult(0.0, 1.0, True, nested)
    llr = total / (sd * math.sqrt(n))
    if nested:
        p = float(chi2.sf(2.0 * abs(total), 1))
    else:
        p = float(2.0 * ndtr(-abs(llr)))
    return VuongResult(llr, p, False, nested)


@dataclass
class VuongMatrix:
    families: tuple[str, ...]
    llr: np.ndarray
    pvals: np.ndarray
    indeterminate: np.ndarray = field(default=None)

    def to_dict(self) -> dict:
        return {
            "families": list(self.families),
            "llr": [[_cell(v, i == j) for j, v in enumerate(row)] for i, row in enumerate(self.llr)],
            "pvals": [[_cell(v, i == j) for j, v in enumerate(row)] for i, row in enumerate(self.pvals)],
        }


def _cell(v, diagonal):
    return None if diagonal else float(v)


def comparison_matrix(fits: dict[Family, DistributionFit], samples, families=FAMILY_ORDER) -> VuongMatrix:
    k = len(families)
    llr = np.zeros((k, k))
    pvals = np.ones((k, k))
    flags = np.zeros((k, k), dtype=bool)
    for i in range(k):
        for j in range(i + 1, k):
            res = vuong_compare(fits[families[i]], fits[families[j]], samples)
            llr[i, j], llr[j, i] = res.llr, -res.llr
            pvals[i, j] = pvals[j, i] = res.p
            flags[i, j] = flags[j, i] = res.indeterminate
    return VuongMatrix(tuple(Family(f).value for f in families), llr, pvals, flags)


def winner_from_matrix(llr, pvals=None, significance: float = 0.01, families=FAMILY_ORDER) -> str:
    """Family preferred by the comparison matrix.

    A row wins a cell when its llr there is negative and significant
    (``pvals=None`` treats every cell as significant). A row winning every
    cell is chosen; otherwise the row with most wins, ties broken by fewer
    parameters and then by family order.
    """
    llr = np.asarray(llr, dtype=float)
    k = llr.shape[0]
    sig = np.ones((k, k), dtype=bool) if pvals is None else np.asarray(pvals, dtype=float) < significance
    off = ~np.eye(k, dtype=bool)
    wins = ((llr < 0) & sig & off).sum(axis=1)
    for i in range(k):
        if wins[i] == k - 1:
            return Family(families[i]).value
    ranked = sorted(range(k), key=lambda i: (-wins[i], N_PARAMS[Family(families[i])], i))
    return Family(families[ranked[0]]).value


@dataclass
class Selection:
    matrix: VuongMatrix
    winner: str
    fits: dict[str, DistributionFit]
    xmin: float
    xmin_scan: XminResult | None = None

    def to_dict(self) -> dict:
        out = {
            "winner": self.winner,
            "xmin_hours": self.xmin,
            "fits": {k: v.to_dict() for k, v in self.fits.items()},
            "vuong": self.matrix.to_dict(),
        }
        if self.xmin_scan is not None:
            out["xmin_scan"] = {
                "xmin": self.xmin_scan.xmin,
                "ks": self.xmin_scan.ks,
                "n_tail": self.xmin_scan.n_tail,
                "warning": self.xmin_scan.warning,
            }
        return out


def select_best(samples, xmin: float | str | None = None, significance: float = 0.01, jobs: int = 1) -> Selection:
    """Fit all five families on a shared support and pick the preferred one.

    ``xmin=None`` uses the smallest sample; ``xmin="ks"`` runs the
    power-law KS scan; a number is used as given.
    """
    x = np.asarray(samples, dtype=float).ravel()
    scan = None
    if xmin == "ks":
        scan = xmin_select(x)
        xmin = scan.xmin
    elif xmin is None:
        xmin = float(x.min())
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = {f: pool.submit(fit_family, x, f, xmin) for f in FAMILY_ORDER}
            fits = {f: fut.result() for f, fut in futures.items()}
    else:
        fits = {f: fit_family(x, f, xmin) for f in FAMILY_ORDER}
    matrix = comparison_matrix(fits, x)
    winner = winner_from_matrix(matrix.llr, matrix.pvals, significance)
    return Selection(matrix, winner, {f.value: fit for f, fit in fits.items()}, float(xmin), scan)
