import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conga import geometry as geo
from conga.errors import DegenerateSingularityError, DomainError, ParameterError
from conga.special import hermite, hermite_coefficients


def figure_eight(n=2001, phase=0.0):
    s = np.linspace(0, 2 * math.pi, n)
    return geo.SampledCurve(s, np.column_stack([np.sin(s + phase), np.sin(s + phase) * np.cos(s + phase)]))


def circle(n=2001, r=1.0):
    s = np.linspace(0, 2 * math.pi, n)
    return geo.SampledCurve(s, r * np.column_stack([np.cos(s), np.sin(s)]))


def test_single_crossing_polyline():
    c = geo.SampledCurve(np.arange(4.0), np.array([[0, 0], [2, 2], [2, 0], [0, 2]], dtype=float))
    xs = geo.find_self_intersections(c)
    assert len(xs) == 1
    assert np.allclose(xs[0].point, [1, 1])


def test_simple_arc_has_no_crossings():
    s = np.linspace(0, 1, 200)
    assert geo.find_self_intersections(geo.SampledCurve(s, np.column_stack([s, s**2]))) == []


def test_figure_eight_two_lobes():
    c = figure_eight()
    assert len(geo.find_self_intersections(c)) == 1
    loops = geo.extract_loops(c)
    assert len(loops) == 2
    assert loops[0].size == pytest.approx(loops[1].size, rel=1e-3)


def test_circle_loop_size_is_radius():
    loops = geo.extract_loops(circle(r=2.0))
    assert len(loops) == 1
    assert loops[0].size == pytest.approx(2.0, rel=2e-3)


def test_ellipse_inscribed_radius_is_minor_axis():
    s = np.linspace(0, 2 * math.pi, 4001)
    c = geo.SampledCurve(s, np.column_stack([2 * np.cos(s), np.sin(s)]))
    assert geo.extract_loops(c)[0].size == pytest.approx(1.0, rel=2e-3)


@given(st.floats(0.0, 2 * math.pi))
def test_loops_invariant_under_phase(phase):
    loops = geo.extract_loops(figure_eight(1501, phase), with_size=False)
    assert len(loops) == 2


@given(st.floats(-math.pi, math.pi), st.floats(-3, 3), st.floats(-3, 3))
def test_rigid_motion_preserves_loop_size(theta, dx, dy):
    c = figure_eight(801)
    R = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    moved = geo.SampledCurve(c.params, c.points @ R.T + [dx, dy])
    a = sorted(L.size for L in geo.extract_loops(c))
    b = sorted(L.size for L in geo.extract_loops(moved))
    assert np.allclose(a, b, rtol=5e-3)


def test_loop_record_validation():
    with pytest.raises(ParameterError):
        geo.LoopRecord(1.0, 0.5, 0.1, (0.0, 0.0))


def test_critical_points_by_sign_change():
    roots = geo.find_critical_points([3, 1, -2, -1, 4], np.arange(5.0))
    assert len(roots) == 2
    assert 1 < roots[0] < 2 and 3 < roots[1] < 4


def test_critical_points_with_function_refinement():
    g = np.linspace(0, 3, 31)
    roots = geo.find_critical_points(np.cos(g), g, func=np.cos)
    assert roots == pytest.approx([math.pi / 2], abs=1e-9)


def test_coordinate_counts_bound_loops():
    c = figure_eight()
    assert len(geo.extract_loops(c, with_size=False)) <= min(geo.coordinate_critical_counts(c))


@pytest.mark.parametrize("n", range(9))
def test_heat_polynomial_at_minus_one_is_hermite(n):
    assert geo.zeta_coefficients(n, -1) == hermite_coefficients(n)


def test_heat_polynomial_values():
    assert geo.zeta_polynomial(4, 1.5, -1) == pytest.approx(hermite(4, 1.5))
    assert geo.zeta_coefficients(2, 3) == [3, 0, 1]


def test_heat_polynomial_derivative_identity():
    p, t, h = 0.7, 0.4, 1e-5
    fd = (geo.zeta_polynomial(5, p + h, t) - geo.zeta_polynomial(5, p - h, t)) / (2 * h)
    assert fd == pytest.approx(5 * geo.zeta_polynomial(4, p, t), rel=1e-7)


def test_natural_frame_taylor_convention():
    f = geo.CallableField(lambda p, tau: np.stack(np.broadcast_arrays(p**2, p**3), axis=-1))
    c = geo.natural_frame(f, 0.0, 0.0)
    assert (c.a2, c.b3) == pytest.approx((1.0, 1.0), abs=1e-5)
    assert c.rotation_theta == pytest.approx(0.0, abs=1e-9)


def test_natural_frame_recovers_rotation():
    f = geo.SyntheticCuspField(p0=0.3, tau0=1.0, theta=math.radians(30))
    c = geo.natural_frame(f, 0.3, 1.0)
    assert c.rotation_theta == pytest.approx(math.radians(30), abs=1e-12)
    assert (c.a2, c.a3, c.b3) == pytest.approx((1.0, 0.3, 1.0), abs=1e-12)


def test_degenerate_singularity_rejected():
    f = geo.CallableField(lambda p, tau: np.stack(np.broadcast_arrays(p**2, 2 * p**2), axis=-1))
    with pytest.raises(DegenerateSingularityError):
        geo.natural_frame(f, 0.0, 0.0)


def test_detect_singularity_synthetic():
    f = geo.SyntheticCuspField(p0=0.3, tau0=1.0)
    found = geo.detect_singularity(f, np.linspace(-0.7, 1.3, 41), np.linspace(0.5, 1.5, 41), tol=0.5)
    assert len(found) == 1
    assert found[0] == pytest.approx((0.3, 1.0), abs=1e-6)


def test_zero_tolerance_reports_nothing():
    f = geo.SyntheticCuspField()
    assert geo.detect_singularity(f, np.linspace(-1, 1, 11), [1.0], tol=0.0) == []


def test_limit_loop_endpoints():
    g = geo.limit_loop(1.0, 1.0, np.array([-math.sqrt(3), 0.0, math.sqrt(3)]))
    assert np.allclose(g.points[0], g.points[2])


def test_rescale_window_checked():
    f = geo.SyntheticCuspField()
    c = geo.natural_frame(f, 0.0, 1.0)
    with pytest.raises(DomainError):
        geo.rescale_dying_loop(f, c, 0.1, M=3.0)
    with pytest.raises(DomainError):
        geo.rescale_dying_loop(f, c, -0.1)


def test_curve_distance_zero_for_identical():
    g = geo.limit_loop(1.0, 1.0, np.linspace(-2, 2, 101))
    assert geo.curve_distance(g, g) == 0.0


def test_curve_distance_reparametrization_helps():
    u = np.linspace(0, 1, 201)
    f = geo.SampledCurve(u, np.column_stack([u**2, u**2]))
    g = geo.SampledCurve(u, np.column_stack([u, u]))
    ident = float(np.max(np.abs(u**2 - u)) * math.sqrt(2))
    # any pairing pays at least sup |sqrt(v) - v| = 1/4 in the parameter term
    assert 0.25 - 1e-9 <= geo.curve_distance(f, g) < ident


def test_track_synthetic_loop_dies_at_cusp():
    f = geo.SyntheticCuspField(p0=0.3, tau0=1.0)
    tg = 1.0 - np.logspace(math.log10(0.5), -6, 60)
    tr = geo.track_loop(f, np.append(tg, 1.001), (-1.5, 2.1))
    assert tr.outcome == "died"
    assert tr.death == pytest.approx((0.3, 1.0), abs=1e-3)


def test_track_needs_initial_loop():
    f = geo.SyntheticCuspField(p0=0.3, tau0=1.0)
    with pytest.raises(ParameterError):
        geo.track_loop(f, [1.5, 1.6], (-1.0, 1.0))


def test_event_log_round_trip(tmp_path):
    log = geo.EventLog()
    log.add("cusp", tau=1.0, p=0.3, a2=1.0, b3=1.0, theta=0.1)
    log.add("death", tau=1.0, p=0.3, size=0.0)
    out = tmp_path / "events.jsonl"
    log.write(out)
    assert geo.EventLog.read(out).records == log.records
