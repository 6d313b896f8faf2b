"""Reference rate-curve models and model-comparison tables.

The rate curves are two-term power laws for the Eclipse and Mozilla
bug-tracker communities. The comparison tables hold normalized
log-likelihood ratios, row family versus column family, with family order
``FAMILY_ORDER``; a negative entry favors the row family.
"""

from __future__ import annotations

import math

from .curvefit import FitModel, Form

LN10 = math.log(10.0)

ECLIPSE_FIXING = FitModel(1.009, 301 / (1250 * LN10), -0.3041, 791 / (1250 * LN10), Form.DIFF)
ECLIPSE_TOSSING = FitModel(0.02019, 141 / (100 * LN10), 0.2886, -421 / (1250 * LN10), Form.POWDECAY)

# Mozilla coefficients consistent with the first and second derivative
# forms; the level form carries a second coefficient 10x larger.
MOZILLA_FIXING = FitModel(0.7241, 0.04059, -0.02739, 0.4699, Form.DIFF)
MOZILLA_TOSSING = FitModel(0.0113, 0.569, 0.02901, -0.6938, Form.POWDECAY)

# The level form taken literally. Its inflections do not give the Mozilla
# threshold; kept for comparison.
MOZILLA_FIXING_LEVEL = FitModel(0.7241, 0.04059, -0.2739, 0.4699, Form.DIFF)
MOZILLA_TOSSING_LEVEL = FitModel(0.0113, 0.569, 0.2901, -0.6938, Form.POWDECAY)

ECLIPSE_FIXING_INFLECTION = 13.58
ECLIPSE_THRESHOLD = 21.07
MOZILLA_THRESHOLD = 27.26

STEXP_BETA = {
    ("eclipse", "fix"): 0.3299,
    ("eclipse", "toss"): 0.2709,
    ("mozilla", "fix"): 0.4500,
    ("mozilla", "toss"): 0.4293,
}

FAMILY_ORDER = ("pl", "expn", "stexp", "lgn", "pl-cut")

_NA = 0.0

LLR_TABLES = {
    ("eclipse", "fix"): (
        (_NA, -73.2, 16.7, 12.7, 11.6),
        (73.2, _NA, 73.3, 73.3, 73.3),
        (-16.7, -73.3, _NA, -97.2, -73.3),
        (-12.7, -73.3, 97.2, _NA, 24.4),
        (-11.6, -73.3, 73.3, -24.4, _NA),
    ),
    ("eclipse", "toss"): (
        (_NA, -31.8, 7.24, -5.5, 4.9),
        (31.8, _NA, 31.8, 31.8, 31.8),
        (-7.24, -31.8, _NA, -41.7, -1.97),
        (5.5, -31.8, 41.7, _NA, 10.3),
        (-4.9, -31.8, 1.97, -10.3, _NA),
    ),
    ("mozilla", "fix"): (
        (_NA, -36.7, 2.9, 17.9, -5.9),
        (36.7, _NA, 36.7, 36.7, 36.7),
        (-2.9, -36.7, _NA, -13.7, -21.3),
        (-17.9, -36.7, 13.7, _NA, -30.2),
        (5.9, -36.7, 21.3, 30.2, _NA),
    ),
    ("mozilla", "toss"): (
        (_NA, -14.0, 33.2, 5.9, 10.5),
        (14.0, _NA, 14.0, 14.0, 14.0),
        (-33.2, -14.0, _NA, -37.1, -7.0),
        (-5.9, -14.0, 37.1, _NA, 6.1),
        (-10.5, -14.0, 7.0, -6.1, _NA),
    ),
}
