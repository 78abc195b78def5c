import math

import numpy as np
import pytest

from conga import analytics as an
from conga.errors import DomainError, ParameterError
from conga.field import (
    KernelSpec,
    apply_kernel_to_function,
    eval_scaled,
    eval_scaled_derivative,
    eval_u,
    eval_u_derivative,
    freezing_horizon,
    freezing_limit,
    kernel_mass,
    path_field,
    scaled_jet,
    tail_rescaled,
)
from conga.stochastic import BrownianPath, SeedSpec, build_path_increments, make_stream, path_from_function

SPEC = KernelSpec(0.5, 1000.0)
PROBE = np.array([0.1, 0.2, 0.3, 0.45])


@pytest.fixture(scope="module")
def path01():
    return build_path_increments(make_stream(SeedSpec(7)), 1.0, 1e-3, 1)


def test_zero_path_gives_zero():
    zero = BrownianPath(1.0, 1e-3, np.zeros((1001, 2)))
    assert np.all(eval_scaled(zero, PROBE, SPEC) == 0)
    assert np.all(eval_scaled_derivative(zero, PROBE, 2, SPEC) == 0)


def test_constant_function_gives_kernel_mass():
    got = apply_kernel_to_function(lambda s: np.ones_like(s), PROBE, SPEC)
    assert np.allclose(got, kernel_mass(PROBE, SPEC, 1.0), rtol=1e-8)


def test_engines_agree(path01):
    a = scaled_jet(path01, PROBE, (0, 1, 2, 3), SPEC, engine="compiled", tails=False).values
    b = scaled_jet(path01, PROBE, (0, 1, 2, 3), SPEC, engine="numpy", tails=False).values
    assert np.allclose(a, b, rtol=1e-10, atol=1e-10 * np.abs(b).max())


@pytest.mark.parametrize("m", [0, 1, 2, 3])
def test_refined_quadrature_agrees(path01, m):
    a = scaled_jet(path01, PROBE, (m,), SPEC, tails=False).values[0][:, 0]
    b = scaled_jet(path01, PROBE, (m,), SPEC, refine=10, tails=False).values[0][:, 0]
    assert np.max(np.abs(a - b) / np.abs(b)) < 1e-6


def test_gradient_central_difference_second_order(path01):
    d = scaled_jet(path01, PROBE, (1,), SPEC, refine=10, tails=False).values[0][:, 0]
    f = lambda x: scaled_jet(path01, x, (0,), SPEC, refine=10, tails=False).values[0][:, 0]
    errs = [np.max(np.abs((f(PROBE + h) - f(PROBE - h)) / (2 * h) - d)) for h in (1e-3, 5e-4)]
    assert 3.0 < errs[0] / errs[1] < 5.0


def test_unscaled_matches_scaling_identity():
    t = 400.0
    path = build_path_increments(make_stream(SeedSpec(3)), t, 1.0, 1)
    x = np.array([40.0, 100.0, 150.0])
    u = eval_u(path, x, t, SPEC)
    us = eval_scaled(path.rescaled(t), x / t, SPEC.with_t(t))
    assert np.allclose(u, math.sqrt(t) * us, rtol=1e-12)
    du = eval_u_derivative(path, x, t, 1, SPEC)
    dus = eval_scaled_derivative(path.rescaled(t), x / t, 1, SPEC.with_t(t))
    assert np.allclose(du, dus / math.sqrt(t), rtol=1e-12)


def test_variance_matches_analytic_by_monte_carlo():
    t, x = 500.0, 0.25
    spec = SPEC.with_t(t)
    vals = np.array([eval_scaled(build_path_increments(make_stream(SeedSpec(5, r)), 1.0, 1 / t, 1), x, spec)
                     for r in range(600)])
    target = an.variance_u(x * t, t, 0.5) / t
    se = np.std(vals**2, ddof=1) / math.sqrt(vals.size)
    assert abs(np.mean(vals**2) - target) < 4 * se


def test_domain_errors(path01):
    with pytest.raises(DomainError):
        eval_scaled(path01, 0.0, SPEC)
    with pytest.raises(DomainError):
        eval_scaled(path01, 1.2, SPEC)
    with pytest.raises(DomainError):
        eval_scaled_derivative(path01, 0.3, 0, SPEC)
    with pytest.raises(ParameterError):
        KernelSpec(1.2, 10.0)


def test_tail_bound_small(path01):
    _, tail = eval_scaled(path01, 0.3, SPEC, return_tail=True)
    assert 0 <= tail < 1e-6


def test_heat_flow_of_linear_path_is_exact():
    path = path_from_function(lambda s: 2.0 * s, 20.0, 0.5)
    assert path_field(path, 10.0, 1.0) == pytest.approx(20.0, rel=1e-9)
    assert path_field(path, 10.0, 1.0, order=1) == pytest.approx(2.0, rel=1e-9)
    assert path_field(path, 10.0, 1.0, order=2) == pytest.approx(0.0, abs=1e-8)


def test_freezing_zero_path():
    spec = KernelSpec(0.5, 1.0)
    S = freezing_horizon(0.3, spec)
    n = int(math.ceil(S / 0.05))
    zero = BrownianPath(n * 0.05, 0.05, np.zeros((n + 1, 1)))
    assert freezing_limit(zero, 0.3, spec) == 0.0
    assert tail_rescaled(zero, 0.3, 100.0, spec) == 0.0


def test_freezing_needs_long_path():
    short = build_path_increments(make_stream(SeedSpec(1)), 10.0, 0.05, 1)
    with pytest.raises(ParameterError):
        freezing_limit(short, 0.3, KernelSpec(0.5, 1.0))


def test_freezing_eta_range():
    with pytest.raises(DomainError):
        freezing_horizon(1.5, KernelSpec(0.5, 1.0))


def test_freezing_converges_on_a_path():
    spec = KernelSpec(0.5, 1.0)
    S = freezing_horizon(0.3, spec)
    path = build_path_increments(make_stream(SeedSpec(2)), math.ceil(S / 0.05) * 0.05, 0.05, 1)
    v = freezing_limit(path, 0.3, spec)
    gaps = [abs(tail_rescaled(path, 0.3, t, spec) - v) for t in (1e2, 1e4)]
    assert gaps[1] < gaps[0]
