import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conga import analytics as an

# frozen oracles (independent midpoint rule / closed forms evaluated by hand)
RIEMANN_VAR_50_100 = 1.1242092143629832     # 10^6-point midpoint rule of Phibar^2 on [0, 100]
CLOSED_INTENSITY_1E4 = 45.015815807855        # sqrt(5000) / (pi * 0.5 * sqrt(1.0))


def test_variance_against_riemann_fixture():
    assert an.variance_u(50, 100, 0.5) == pytest.approx(RIEMANN_VAR_50_100, rel=1e-8)


def test_closed_intensity_fixture():
    assert an.first_intensity(0.5, 1e4, 0.5, "closed") == pytest.approx(CLOSED_INTENSITY_1E4, rel=1e-9)


def test_closed_intensity_formula():
    t, x, a = 3000.0, 0.3, 0.4
    s = math.sqrt(a * (1 - a))
    assert an.first_intensity(x, t, a, "closed") == pytest.approx(math.sqrt(a * t) / (math.pi * s * math.sqrt(2 * x)))


def test_expected_count_closed_form():
    t, a = 2000.0, 0.5
    want = math.sqrt(2 * a * t) / (math.pi * 0.5) * (math.sqrt(0.5) - math.sqrt(0.2))
    assert an.expected_critical_points((0.2, 0.5), t, a, "closed") == pytest.approx(want, rel=1e-12)


def test_exact_intensity_close_to_closed_interior():
    t = 2000.0
    for x in (0.25, 0.3, 0.4):
        e = an.first_intensity(x, t, 0.5, "exact")
        c = an.first_intensity(x, t, 0.5, "closed")
        assert abs(e / c - 1) <= 5 * math.sqrt(math.log(t) / t)


def test_variance_regimes():
    t = 1e4
    assert an.variance_u(0.3 * t, t, 0.5) > 0.5 * 0.3 * t
    assert an.variance_u(0.7 * t, t, 0.5) < 1e-8


def test_cutoff_monotone_by_lambda():
    lo = [an.variance_u(an.cutoff_location(t, 0.25, 0.5), t, 0.5) for t in (1e3, 1e4, 1e5)]
    hi = [an.variance_u(an.cutoff_location(t, 0.75, 0.5), t, 0.5) for t in (1e3, 1e4, 1e5)]
    assert lo[0] < lo[1] < lo[2]
    assert hi[0] > hi[1] > hi[2]


def test_cov_first_closed_matches_quadrature():
    t = 2000.0
    for x, y in ((0.2, 0.2), (0.3, 0.31), (0.25, 0.27)):
        q = an.cov_first(x, y, t, 0.5)
        c = an.cov_first(x, y, t, 0.5, closed_form=True)
        assert q == pytest.approx(c, rel=5 * math.sqrt(math.log(t) / t))


@given(st.floats(0.1, 0.5), st.floats(0.1, 0.5))
def test_cov_first_symmetric(x, y):
    assert an.cov_first(x, y, 2000.0, 0.5) == an.cov_first(y, x, 2000.0, 0.5)


@given(st.floats(0.15, 0.45), st.floats(1e-6, 0.05))
def test_det_sigma_nonnegative(x, d):
    assert an.det_sigma(x, x + d, 2000.0, 0.5) >= 0.0


def test_det_sigma_zero_on_diagonal():
    assert an.det_sigma(0.3, 0.3, 2000.0, 0.5) == 0.0


def test_mixed_covariance_split():
    full = an.cov_mixed(0.3, 2000.0, 0.5, "full")
    parts = an.cov_mixed(0.3, 2000.0, 0.5, "leading") + an.cov_mixed(0.3, 2000.0, 0.5, "correction")
    assert full == pytest.approx(parts, rel=1e-9)


def test_derivative_covariance_matches_var_second():
    assert an.derivative_covariance(2, 0.3, 2, 0.3, 2000.0, 0.5) == pytest.approx(an.var_second(0.3, 2000.0, 0.5), rel=1e-9)


def test_bivariate_abs_moment_limits():
    assert an.bivariate_abs_moment(1.0, 1.0, 0.0) == pytest.approx(2 / math.pi)
    assert an.bivariate_abs_moment(1.0, 1.0, 1.0) == pytest.approx(1.0)


def test_bivariate_abs_moment_monte_carlo():
    rng = np.random.default_rng(0)
    c = np.array([[2.0, 0.6], [0.6, 1.0]])
    z = rng.multivariate_normal([0, 0], c, 400000)
    mc = np.mean(np.abs(z[:, 0] * z[:, 1]))
    assert an.bivariate_abs_moment(2.0, 1.0, 0.6) == pytest.approx(mc, rel=0.01)


def test_second_factorial_moment_bounded():
    t = 2000.0
    h = t ** -0.5
    val, bound = an.second_factorial_moment((0.3, 0.3 + h), t, 0.5)
    assert 0 <= val <= bound


def test_expected_length_closed_constant():
    t, a, d = 1e4, 0.5, 0.1
    s = math.sqrt(a * (1 - a))
    want = 2 * math.pi**0.25 / (3 * s**0.5 * a**0.25) * (a**0.75 - d**0.75) * t**0.25
    assert an.expected_length(d, a, t, "closed") == pytest.approx(want, rel=1e-12)
    assert an.expected_length(d, a, t, "quadrature") == pytest.approx(want, rel=0.02)


def test_small_x_flagged():
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        an.first_intensity(0.01, 2000.0, 0.5, "exact")
    assert any(issubclass(r.category, an.CertifiedRegimeWarning) for r in w)


def test_scan_csv(tmp_path):
    rows = [{"x": x, "exact": an.first_intensity(x, 2000.0, 0.5, "exact"),
             "closed_form": an.first_intensity(x, 2000.0, 0.5, "closed")} for x in (0.2, 0.3)]
    out = tmp_path / "s.csv"
    an.write_scan_csv(out, rows, "x", {"alpha": 0.5, "t": 2000.0})
    lines = out.read_text().splitlines()
    assert lines[2] == "x,exact,closed_form,ratio"
    assert len(lines) == 5
