from __future__ import annotations

import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from triagedyn.curvefit import (
    FitError,
    FitModel,
    Form,
    ThresholdCriteria,
    ThresholdNotFound,
    find_inflections,
    fit_two_term_power,
    second_derivative,
    select_threshold,
)
from triagedyn.reference import (
    ECLIPSE_FIXING,
    ECLIPSE_TOSSING,
    MOZILLA_FIXING,
    MOZILLA_FIXING_LEVEL,
    MOZILLA_TOSSING,
    MOZILLA_TOSSING_LEVEL,
)

GRID = np.linspace(1, 100, 200)


def _mp_derivs(m: FitModel, n: float):
    f = lambda x: m.a * x ** m.b + m.c * x ** m.d  # noqa: E731
    return float(mpmath.diff(f, mpmath.mpf(n), 1)), float(mpmath.diff(f, mpmath.mpf(n), 2))


# -- derivatives -----------------------------------------------------------------


@pytest.mark.parametrize("model", [ECLIPSE_FIXING, ECLIPSE_TOSSING, MOZILLA_FIXING, MOZILLA_TOSSING])
@pytest.mark.parametrize("n", [1.0, 2.5, 13.58, 21.07, 77.0, 200.0])
def test_derivatives_match_high_precision(model, n):
    mpmath.mp.dps = 40
    d1, d2 = _mp_derivs(model, n)
    assert float(model.first_derivative(n)) == pytest.approx(d1, rel=1e-12, abs=1e-15)
    assert float(model.second_derivative(n)) == pytest.approx(d2, rel=1e-10, abs=1e-15)


coef = st.floats(-5, 5, allow_nan=False).filter(lambda v: abs(v) > 1e-3)
expo = st.floats(-2, 2, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(coef, expo, coef, expo)
def test_first_derivative_matches_central_differences(a, b, c, d):
    m = FitModel(a, b, c, d)
    n = np.linspace(1.5, 200, 300)
    h = 1e-5 * n
    fd = (m(n + h) - m(n - h)) / (2 * h)
    scale = np.abs(m.a * m.b * n ** (m.b - 1)) + np.abs(m.c * m.d * n ** (m.d - 1)) + 1e-12
    assert np.all(np.abs(m.first_derivative(n) - fd) <= 1e-6 * scale + 1e-10 * np.abs(m(n)) / h)


def test_linear_second_derivative_is_zero():
    m = FitModel(1.0, 1.0, 0.0, 0.0)
    assert second_derivative(m, 5.0) == 0.0
    assert second_derivative(m, 1234.5) == 0.0


def test_second_derivative_rejects_small_n():
    with pytest.raises(ValueError):
        second_derivative(ECLIPSE_FIXING, 0.5)


def test_second_derivative_vanishes_at_fixing_inflection():
    assert abs(second_derivative(ECLIPSE_FIXING, 13.58)) < 1e-6


def test_second_derivative_vanishes_at_tossing_inflection():
    assert abs(second_derivative(ECLIPSE_TOSSING, 21.07)) < 1e-6


def test_values_finite_for_all_n():
    n = np.geomspace(1, 1e6, 500)
    for m in (ECLIPSE_FIXING, ECLIPSE_TOSSING, MOZILLA_FIXING, MOZILLA_TOSSING):
        for f in (m, m.first_derivative, m.second_derivative):
            assert np.all(np.isfinite(f(n)))


# -- inflections ------------------------------------------------------------------


def test_fixing_inflection():
    roots = find_inflections(ECLIPSE_FIXING, 1, 200)
    assert len(roots) == 1 and roots[0] == pytest.approx(13.58, abs=0.05)


def test_tossing_inflection():
    roots = find_inflections(ECLIPSE_TOSSING, 1, 200)
    assert len(roots) == 1 and roots[0] == pytest.approx(21.07, abs=0.05)


def test_inflection_closed_form():
    # y'' = 0  <=>  N^(d-b) = -a b (b-1) / (c d (d-1))
    m = ECLIPSE_FIXING
    exact = (-m.a * m.b * (m.b - 1) / (m.c * m.d * (m.d - 1))) ** (1 / (m.d - m.b))
    assert find_inflections(m)[0] == pytest.approx(exact, abs=1e-8)


def test_no_inflection_gives_empty_list():
    assert find_inflections(FitModel(1.0, 1.0, 0.0, 0.0)) == []
    assert find_inflections(FitModel(1.0, 0.5, 0.0, 0.0)) == []


def test_lower_bound_validated():
    with pytest.raises(ValueError):
        find_inflections(ECLIPSE_FIXING, 0.5, 10)


@settings(max_examples=200, deadline=None)
@given(coef, expo, coef, expo)
def test_every_root_is_a_sign_change(a, b, c, d):
    m = FitModel(a, b, c, d)
    for r in find_inflections(m, 1, 200):
        lo, hi = float(m.second_derivative(r - 1e-3)), float(m.second_derivative(r + 1e-3))
        assert lo * hi < 0


# -- threshold ---------------------------------------------------------------------


def test_eclipse_threshold():
    report = select_threshold(ECLIPSE_FIXING, ECLIPSE_TOSSING)
    assert report.chosen == pytest.approx(21.07, abs=0.05)
    first = report.conditions[0]
    assert first["candidate"] == pytest.approx(13.58, abs=0.05) and not first["qualifies"]


def test_mozilla_threshold():
    report = select_threshold(MOZILLA_FIXING, MOZILLA_TOSSING)
    assert report.chosen == pytest.approx(27.26, abs=0.1)


def test_mozilla_level_models_have_no_fixing_inflection():
    assert find_inflections(MOZILLA_FIXING_LEVEL, 1, 500) == []
    roots = find_inflections(MOZILLA_TOSSING_LEVEL, 1, 500)
    assert roots == [pytest.approx(45.19, abs=0.01)]


def test_linear_models_have_no_threshold():
    lin = FitModel(1.0, 1.0, 0.0, 0.0)
    with pytest.raises(ThresholdNotFound) as exc:
        select_threshold(lin, lin)
    assert exc.value.report.candidates == []


def test_not_found_lists_violations():
    with pytest.raises(ThresholdNotFound) as exc:
        select_threshold(ECLIPSE_FIXING, ECLIPSE_TOSSING, ThresholdCriteria(tol=1e-7))
    rows = exc.value.report.conditions
    assert rows and all(r["violations"] for r in rows)
    assert "violations" in str(exc.value) or "13.5" in str(exc.value)


def test_criteria_validation():
    with pytest.raises(ValueError):
        ThresholdCriteria(eps=0.0)


@pytest.mark.parametrize("f_model,t_model", [(ECLIPSE_FIXING, ECLIPSE_TOSSING), (MOZILLA_FIXING, MOZILLA_TOSSING)])
def test_chosen_threshold_satisfies_steady_state(f_model, t_model):
    crit = ThresholdCriteria()
    n_star = select_threshold(f_model, t_model, crit).chosen
    grid = np.arange(n_star + crit.step, crit.grid_max, crit.step)
    for m, const in ((f_model, crit.c1), (t_model, crit.c2)):
        vals = m.second_derivative(grid)
        assert np.all(np.abs(vals - const) <= crit.tol)
        assert len(set(np.sign(vals))) == 1
        assert np.sign(vals[0]) == np.sign(m.second_derivative(n_star + crit.eps))


def test_threshold_report_serializes():
    d = select_threshold(ECLIPSE_FIXING, ECLIPSE_TOSSING).to_dict()
    assert set(d) == {"candidates", "chosen", "conditions_table"}


# -- fitting ------------------------------------------------------------------------


@pytest.mark.parametrize("truth", [ECLIPSE_FIXING, ECLIPSE_TOSSING, MOZILLA_FIXING, MOZILLA_TOSSING])
def test_noiseless_recovery(truth):
    y = truth(GRID)
    fit = fit_two_term_power(list(zip(GRID, y)), truth.form)
    assert np.max(np.abs(fit(GRID) - y)) < 1e-4
    assert fit.form is truth.form


def test_recovered_fixing_inflection():
    fit = fit_two_term_power(list(zip(GRID, ECLIPSE_FIXING(GRID))), Form.DIFF)
    assert find_inflections(fit)[0] == pytest.approx(13.58, abs=0.05)


def test_constant_data():
    fit = fit_two_term_power([(n, 0.5) for n in range(1, 21)], Form.SUM)
    assert (fit.a, fit.b, fit.c) == (pytest.approx(0.5), 0.0, 0.0)
    assert np.allclose(fit(np.arange(1, 50)), 0.5)


def test_form_sign_constraints():
    diff = fit_two_term_power(list(zip(GRID, ECLIPSE_FIXING(GRID))), Form.DIFF)
    assert diff.a > 0 and diff.c < 0 and diff.b < diff.d
    decay = fit_two_term_power(list(zip(GRID, ECLIPSE_TOSSING(GRID))), Form.POWDECAY)
    assert decay.d < 0 <= decay.b


def test_too_few_points():
    with pytest.raises(ValueError):
        fit_two_term_power([(n, 1.0) for n in range(1, 8)])


def test_n_below_one_rejected():
    with pytest.raises(ValueError):
        fit_two_term_power([(0.5 + n, 1.0) for n in range(10)])


def test_inadmissible_data_raises_with_partial():
    # a negative curve has no DIFF fit with one positive and one negative term
    pts = [(n, -float(n) ** 1.5) for n in range(1, 30)]
    with pytest.raises(FitError) as exc:
        fit_two_term_power(pts, Form.DIFF)
    assert exc.value.best is not None


def test_model_json_round_trip():
    d = ECLIPSE_FIXING.to_dict()
    assert set(d) == {"a", "b", "c", "d", "form", "sse", "confidence"}
    assert FitModel.from_dict(d) == ECLIPSE_FIXING


def test_fit_time_is_small():
    import time
    t0 = time.perf_counter()
    fit_two_term_power(list(zip(GRID, ECLIPSE_TOSSING(GRID))), Form.POWDECAY)
    assert time.perf_counter() - t0 < 1.0


def test_exponent_conversion():
    assert ECLIPSE_FIXING.b == pytest.approx(301 / 1250 / math.log(10))
