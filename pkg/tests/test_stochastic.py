import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conga.errors import ParameterError
from conga.stochastic import (
    BrownianPath,
    SeedSpec,
    build_path_increments,
    build_path_levy,
    levy_levels,
    make_stream,
    path_from_function,
)


def test_same_seed_same_stream():
    a = make_stream(SeedSpec(11, 3)).standard_normal(8)
    b = make_stream(SeedSpec(11, 3)).standard_normal(8)
    assert np.array_equal(a, b)


def test_streams_differ_by_index():
    a = make_stream(SeedSpec(11, 3)).standard_normal(8)
    b = make_stream(SeedSpec(11, 4)).standard_normal(8)
    assert not np.array_equal(a, b)


def test_seed_range_checked():
    with pytest.raises(ParameterError):
        SeedSpec(-1)
    with pytest.raises(ParameterError):
        SeedSpec(2**64)
    with pytest.raises(ParameterError):
        SeedSpec(1, -2)


def test_child_keeps_root():
    assert SeedSpec(5, 1).child(9) == SeedSpec(5, 9)


def test_path_shape_and_origin():
    p = build_path_increments(make_stream(SeedSpec(1)), 10.0, 0.5, 2)
    assert p.values.shape == (21, 2)
    assert np.all(p.values[0] == 0)
    assert p.dims == 2


def test_increment_variance_matches_step():
    p = build_path_increments(make_stream(SeedSpec(2)), 4000.0, 0.25, 1)
    inc = np.diff(p.values[:, 0])
    # 16000 increments: sample variance within 5 standard errors of 0.25
    assert abs(inc.var() - 0.25) < 5 * 0.25 * math.sqrt(2 / inc.size)


def test_evaluate_interpolates_linearly():
    p = BrownianPath(2.0, 1.0, np.array([[0.0], [1.0], [3.0]]))
    assert p.evaluate(0.5) == pytest.approx(0.5)
    assert p.evaluate(1.5) == pytest.approx(2.0)
    with pytest.raises(ParameterError):
        p.evaluate(2.5)


def test_rescaled_is_brownian_scaling():
    p = build_path_increments(make_stream(SeedSpec(3)), 100.0, 1.0, 1)
    q = p.rescaled(100.0)
    assert q.horizon == pytest.approx(1.0)
    assert q.evaluate(0.37) == pytest.approx(p.evaluate(37.0) / 10.0)


def test_path_from_function():
    p = path_from_function(lambda s: np.sin(s), 1.0, 0.125)
    assert p.evaluate(0.5) == pytest.approx(math.sin(0.5))


def test_levy_levels_reproduce_path():
    lv = levy_levels(make_stream(SeedSpec(4)), 8)
    path = build_path_levy(make_stream(SeedSpec(4)), 8)
    assert np.allclose(lv.to_path().values, path.values)
    assert path.values.shape[0] == 2**8 + 1
    assert path.values[0, 0] == 0


def test_levy_endpoint_variance():
    ends = [build_path_levy(make_stream(SeedSpec(9, r)), 4).values[-1, 0] for r in range(4000)]
    assert abs(np.var(ends) - 1.0) < 5 * math.sqrt(2 / 4000)


@given(st.floats(0.01, 10.0), st.integers(1, 2))
def test_sup_norm_dominates_values(step, dims):
    p = build_path_increments(make_stream(SeedSpec(7)), 20.0, step, dims)
    assert p.sup_norm() >= np.max(np.abs(p.values)) - 1e-12
