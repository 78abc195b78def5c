import numpy as np
import pytest
from hypothesis import given, strategies as st

from conga.discrete import (
    CongaParams,
    build_weight_table,
    increment_via_weights,
    interpolate_frame,
    iter_conga,
    position_via_weights,
    positions_via_weights,
    run_conga,
    write_frame_csv,
)
from conga.errors import DomainError, ParameterError
from conga.stochastic import BrownianPath, SeedSpec, build_path_increments, make_stream


def unit_path(n, dims=1, seed=0):
    return build_path_increments(make_stream(SeedSpec(seed)), float(n), 1.0, dims)


def test_zero_path_stays_at_origin():
    path = BrownianPath(20.0, 1.0, np.zeros((21, 2)))
    assert np.all(run_conga(CongaParams(0.4, 20, 2), path).positions == 0)


def test_leader_is_the_walk():
    path = unit_path(30)
    frame = run_conga(CongaParams(0.3, 30, 1), path)
    assert frame.positions[0, 0] == pytest.approx(path.values[30, 0])


def test_small_case_by_hand():
    # Z = (1, 2): X_1(2) = 3, X_2(2) = alpha * 1
    path = BrownianPath(2.0, 1.0, np.array([[0.0], [1.0], [3.0]]))
    f = run_conga(CongaParams(0.25, 2, 1), path)
    assert np.allclose(f.positions[:, 0], [3.0, 0.25])


def test_in_place_matches_stepwise():
    path = unit_path(60, 2, 5)
    p = CongaParams(0.6, 60, 2)
    assert np.allclose(run_conga(p, path).positions, list(iter_conga(p, path))[-1].positions, atol=1e-13)


@given(st.sampled_from([0.1, 0.5, 0.9]), st.integers(1, 80), st.integers(0, 5))
def test_moving_average_form(alpha, n, seed):
    path = unit_path(n, 1, seed)
    a = run_conga(CongaParams(alpha, n, 1), path).positions[:, 0]
    b = positions_via_weights(n, path, alpha).positions[:, 0]
    assert np.allclose(a, b, atol=1e-10 * max(1.0, np.abs(a).max()))


def test_single_position_and_increment():
    path = unit_path(50, 1, 2)
    X = run_conga(CongaParams(0.5, 50, 1), path).positions[:, 0]
    assert position_via_weights(7, 50, path, 0.5) == pytest.approx(X[6], abs=1e-12)
    assert increment_via_weights(7, 50, path, 0.5) == pytest.approx(X[7] - X[6], abs=1e-12)


def test_weight_table_checks():
    with pytest.raises(DomainError):
        build_weight_table(0, 5, 0.5)
    with pytest.raises(DomainError):
        build_weight_table(6, 5, 0.5)
    with pytest.raises(ParameterError):
        build_weight_table(1, 5, 1.0)


def test_params_validation():
    with pytest.raises(ParameterError):
        CongaParams(0.0, 5, 1)
    with pytest.raises(ParameterError):
        CongaParams(0.5, 0, 1)


def test_non_unit_grid_rejected():
    path = build_path_increments(make_stream(SeedSpec(0)), 10.0, 0.5, 1)
    with pytest.raises(ParameterError):
        run_conga(CongaParams(0.5, 10, 1), path)


def test_interpolation_knots():
    path = unit_path(40, 1, 3)
    frame = run_conga(CongaParams(0.5, 40, 1), path)
    I = interpolate_frame(frame)
    assert I(3.0) == pytest.approx(frame.positions[3, 0])
    assert I(3.5) == pytest.approx(0.5 * (frame.positions[3, 0] + frame.positions[4, 0]))
    assert I.derivative(3.2) == pytest.approx(frame.positions[4, 0] - frame.positions[3, 0])
    with pytest.raises(DomainError):
        I(41.0)


def test_frame_csv(tmp_path):
    frame = run_conga(CongaParams(0.5, 12, 2), unit_path(12, 2))
    out = tmp_path / "f.csv"
    write_frame_csv(frame, out)
    lines = out.read_text().splitlines()
    assert lines[0] == "k,x,y"
    assert len(lines) == 13
