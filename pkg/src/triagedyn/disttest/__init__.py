"""Processing-time statistics: CCDFs, Kruskal-Wallis tests, family fits and Vuong selection."""

from .ccdf import Ccdf, Population, bug_ccdf, ccdf, developer_ccdf, write_ccdf
from .families import (
    FAMILY_ORDER,
    DistributionFit,
    Family,
    FitFailure,
    XminResult,
    fit_family,
    log_density,
    sample_family,
    xmin_select,
)
from .kruskal import KruskalResult, kruskal_wallis
from .vuong import Selection, VuongMatrix, VuongResult, comparison_matrix, select_best, vuong_compare, winner_from_matrix

__all__ = [
    "Ccdf", "Population", "bug_ccdf", "ccdf", "developer_ccdf", "write_ccdf",
    "FAMILY_ORDER", "DistributionFit", "Family", "FitFailure", "XminResult",
    "fit_family", "log_density", "sample_family", "xmin_select",
    "KruskalResult", "kruskal_wallis",
    "Selection", "VuongMatrix", "VuongResult", "comparison_matrix", "select_best", "vuong_compare", "winner_from_matrix",
]
