"""Smooth Gaussian-kernel fields driven by a sampled Brownian path.

Conventions: ``x`` is the distance from the tip.  The unscaled field is

    u(x, t) = int_0^t W(t - z) k(x, z) dz,
    k(x, z) = (x + alpha z) / (2 sigma z^{3/2}) * phi((x - alpha z) / (sigma sqrt z)),

and the scaled field on ``[0, 1]`` replaces ``sigma`` by ``sigma_t = sigma/sqrt(t)``
and integrates against ``W(1 - s)`` for ``s`` in ``[0, 1]``.  Spatial
derivatives of every order use the by-parts Hermite kernels

    d^m u_t(x) = int_0^1 W(1 - s) d/ds [ d^m/dx^m Phibar(w) ] ds,
    w = (x - alpha s) / (sigma_t sqrt s).

All integrals are evaluated with :mod:`conga.quadrature` on a window of
half-width ``max(L_t^x(M), 8 sd)`` around ``s = x/alpha`` where ``sd`` is the
kernel's spread; the kernel mass dropped outside the window is reported as a
tail bound.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DomainError, ParameterError
from ._fastkernel import scaled_field_loop
from .quadrature import GAUSS_ORDER, gauss_legendre, grouped_sum, panel_rule
from .special import hermite_all, norm_pdf, norm_sf
from .stochastic import BrownianPath

__all__ = [
    "KernelSpec",
    "FieldSample",
    "HermiteEvaluator",
    "FieldResult",
    "scaled_jet",
    "eval_scaled",
    "eval_scaled_derivative",
    "eval_u",
    "eval_u_derivative",
    "eval_u_bar",
    "path_field",
    "apply_kernel_to_function",
    "kernel_mass",
    "window_partition",
    "eval_windowed",
    "windowed_segment",
    "derivative_bound",
    "tail_rescaled",
    "freezing_limit",
    "freezing_horizon",
    "write_curve_csv",
]

MIN_SD_WINDOW = 8.0
GAUSS_SD_WINDOW = 9.0
WEIGHT_CUTOFF = 1e-12
CHUNK_NODES = 2_000_000


@dataclass(frozen=True)
class KernelSpec:
    alpha: float
    t: float
    quadrature_points: int = 128
    window_M: float = 6.0

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise ParameterError(f"alpha must lie in (0,1), got {self.alpha}")
        if self.t <= 0:
            raise ParameterError("t must be positive")
        if self.quadrature_points < 64:
            raise ParameterError("quadrature_points must be at least 64")
        if self.window_M <= 2:
            raise ParameterError("window_M must exceed 2")

    @property
    def sigma(self) -> float:
        return math.sqrt(self.alpha * (1.0 - self.alpha))

    @property
    def sigma_t(self) -> float:
        return self.sigma / math.sqrt(self.t)

    @property
    def rho(self) -> float:
        return self.sigma / self.alpha**1.5

    def window_L(self, x):
        """``L_t^x(M) = alpha^{-1} sqrt(-M (x/t) log(x/t))`` (0 where ``x >= t``)."""
        r = np.asarray(x, dtype=float) / self.t
        with np.errstate(divide="ignore", invalid="ignore"):
            val = np.where(r < 1, np.sqrt(np.maximum(-self.window_M * r * np.log(r), 0.0)), 0.0)
        return val / self.alpha

    def with_t(self, t: float) -> "KernelSpec":
        return replace(self, t=t)

    def refined(self, factor: int = 10) -> "KernelSpec":
        return replace(self, quadrature_points=self.quadrature_points * factor)


@dataclass(frozen=True)
class FieldSample:
    x: float
    value: object
    derivative_order: int = 0


@dataclass(frozen=True)
class HermiteEvaluator:
    """Evaluates ``He_0..He_max_order`` together."""

    max_order: int

    def __call__(self, x):
        return hermite_all(self.max_order, x)


@dataclass(frozen=True)
class FieldResult:
    """Values shaped ``(len(orders), nx, dims)`` plus per-point tail bounds."""

    orders: tuple
    values: np.ndarray
    tail_bound: np.ndarray


def _shape_out(vals: np.ndarray, scalar: bool):
    """``(nx, dims)`` -> float / (dims,) / (nx,) / (nx, dims)."""
    if vals.shape[-1] == 1:
        vals = vals[..., 0]
    if scalar:
        vals = vals[0]
        return float(vals) if np.ndim(vals) == 0 else vals
    return vals


def _kernels(x, s, orders, alpha, sig):
    """Rows ``d/ds d^m/dx^m Phibar(w(x,s))`` for each ``m`` in ``orders``."""
    rs = np.sqrt(s)
    ss = sig * rs
    w = (x - alpha * s) / ss
    phi = norm_pdf(w)
    mass = (x + alpha * s) / (2.0 * sig * s * rs) * phi
    mmax = max(orders)
    he = hermite_all(mmax, w) if mmax > 0 else None
    rows = []
    for m in orders:
        if m == 0:
            rows.append(mass)
            continue
        sign = -1.0 if m % 2 else 1.0
        rows.append(ss ** (-m) * (-sign * (m / (2.0 * s)) * he[m - 1] * phi + sign * mass * he[m]))
    return np.stack(rows)


def _check_path01(path01: BrownianPath):
    if path01.horizon < 1.0 - 1e-12:
        raise ParameterError("the scaled field needs a path on [0, 1]")


def _scaled_windows(x, spec: KernelSpec):
    a = spec.alpha
    c = x / a
    sd = spec.sigma_t * np.sqrt(c) / a
    L = np.maximum(spec.window_L(x), MIN_SD_WINDOW * sd)
    lo = np.maximum(c - L, 0.0)
    hi = np.minimum(c + L, 1.0)
    return lo, hi


def _mass_between(x, a, b, spec):
    """Exact kernel mass ``Phibar(w(b)) - Phibar(w(a))`` of the order-0 kernel on ``[a, b]``."""
    def sf(s):
        with np.errstate(divide="ignore"):
            w = np.where(s > 0, (x - spec.alpha * s) / (spec.sigma_t * np.sqrt(np.maximum(s, 1e-300))), np.inf)
        return norm_sf(w)
    return np.maximum(sf(b) - sf(a), 0.0)


def _abs_kernel_integral(x, a, b, m, spec, n=65):
    """Trapezoid estimate of ``int_a^b |kernel_m|`` (used only for tail reporting)."""
    out = np.zeros_like(x)
    ok = b > a
    if not np.any(ok):
        return out
    u = np.linspace(0.0, 1.0, n)
    s = a[ok, None] + (b[ok] - a[ok])[:, None] * u[None, :]
    s = np.maximum(s, 1e-300)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore", under="ignore"):
        k = np.abs(_kernels(x[ok, None], s, (m,), spec.alpha, spec.sigma_t)[0])
    k = np.nan_to_num(k, nan=0.0, posinf=0.0)
    out[ok] = np.trapezoid(k, s, axis=1)
    return out


def _integrate_windows(x, lo, hi, kink_origin, kink_step, values_at, kernel_at, norders, dims, n_panels, refine):
    """Batched quadrature of ``values_at(s) * kernel_at(x, s)`` over per-point windows."""
    nx = x.size
    out = np.zeros((norders, nx, dims))
    valid = np.nonzero(hi > lo)[0]
    if valid.size == 0:
        return out
    # chunk the evaluation points so the node arrays stay bounded in memory
    width = hi[valid] - lo[valid]
    if kink_step is not None:
        est = (np.ceil(width / kink_step) + 2) * refine * 3 + n_panels * refine * 3
    else:
        est = np.full(valid.size, n_panels * refine * 3.0)
    bounds = [0]
    acc = 0.0
    for i, e in enumerate(est):
        acc += e
        if acc > CHUNK_NODES:
            bounds.append(i + 1)
            acc = 0.0
    if bounds[-1] != valid.size:
        bounds.append(valid.size)
    for a, b in zip(bounds[:-1], bounds[1:]):
        idx = valid[a:b]
        nodes, weights, groups = panel_rule(lo[idx], hi[idx], n_panels, kink_origin, kink_step, refine)
        vals = values_at(nodes)  # (N, dims)
        ker = kernel_at(x[idx][groups], nodes)  # (norders, N)
        for o in range(norders):
            out[o, idx] = grouped_sum(groups, (weights * ker[o])[:, None] * vals, idx.size)
    return out


def scaled_jet(path01: BrownianPath, x, orders, spec: KernelSpec, refine: int = 1, values_fn=None,
               engine: str = "compiled", tails: bool = True) -> FieldResult:
    """Scaled field derivatives ``d^m u_t(x)`` for all ``m`` in ``orders`` at once.

    ``values_fn(s)``, if given, replaces the path values ``W(1 - s)``.
    ``engine="numpy"`` selects the batched array implementation of the same
    rule (used to cross-check the compiled loop).
    """
    orders = tuple(int(m) for m in orders)
    if any(m < 0 for m in orders):
        raise DomainError("derivative order must be non-negative")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(x <= 0) or np.any(x > 1):
        raise DomainError("scaled field is defined for x in (0, 1]")
    lo, hi = _scaled_windows(x, spec)
    if values_fn is None:
        _check_path01(path01)
        dims = path01.dims
        h = path01.grid_step
        kink_origin = 1.0 - math.floor(1.0 / h + 1e-9) * h
        values_at = lambda s: path01.evaluate(1.0 - s)
        norm = path01.sup_norm()
    else:
        probe = np.atleast_1d(np.asarray(values_fn(np.array([0.5])), dtype=float))
        dims = probe.shape[-1] if probe.ndim > 1 else 1
        h = None
        kink_origin = 0.0

        def values_at(s):
            v = np.asarray(values_fn(s), dtype=float)
            return v.reshape(s.size, dims)
        norm = float(np.max(np.abs(values_fn(np.linspace(0, 1, 257)))))
    if values_fn is None and engine == "compiled":
        gx, gw = gauss_legendre(GAUSS_ORDER)
        vals = scaled_field_loop(
            x, lo, hi, path01.values, h, kink_origin, np.asarray(orders, dtype=np.int64),
            spec.alpha, spec.sigma_t, spec.quadrature_points, int(refine), gx, gw,
        )
    else:
        kernel_at = lambda xx, s: _kernels(xx, s, orders, spec.alpha, spec.sigma_t)
        vals = _integrate_windows(x, lo, hi, kink_origin, h, values_at, kernel_at, len(orders), dims, spec.quadrature_points, refine)
    tail = np.zeros((len(orders), x.size))
    for i, m in enumerate(orders if tails else ()):
        if m == 0:
            mass = _mass_between(x, np.zeros_like(lo), lo, spec) + _mass_between(x, hi, np.ones_like(hi), spec)
        else:
            mass = _abs_kernel_integral(x, np.zeros_like(lo), lo, m, spec) + _abs_kernel_integral(x, hi, np.ones_like(hi), m, spec)
        tail[i] = norm * mass
    return FieldResult(orders, vals, tail)


def eval_scaled(path01: BrownianPath, x, spec: KernelSpec, refine: int = 1, return_tail: bool = False):
    """Scaled field ``u_t(x)``."""
    scalar = np.ndim(x) == 0
    res = scaled_jet(path01, x, (0,), spec, refine)
    out = _shape_out(res.values[0], scalar)
    if return_tail:
        return out, (float(res.tail_bound[0, 0]) if scalar else res.tail_bound[0])
    return out


def eval_scaled_derivative(path01: BrownianPath, x, m: int, spec: KernelSpec, refine: int = 1, return_tail: bool = False):
    """``d^m u_t(x)`` for ``m >= 1`` via the Hermite by-parts kernel."""
    if m < 1:
        raise DomainError("derivative order must be at least 1")
    scalar = np.ndim(x) == 0
    res = scaled_jet(path01, x, (m,), spec, refine)
    out = _shape_out(res.values[0], scalar)
    if return_tail:
        return out, (float(res.tail_bound[0, 0]) if scalar else res.tail_bound[0])
    return out


def _check_unscaled(path: BrownianPath, x, t):
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise DomainError("x must be positive")
    if t <= 0:
        raise ParameterError("t must be positive")
    if t > path.horizon * (1 + 1e-12):
        raise ParameterError(f"t={t} exceeds the path horizon {path.horizon}")


def eval_u_derivative(path: BrownianPath, x, t: float, m: int, spec: KernelSpec, refine: int = 1):
    """``d^m/dx^m u(x, t)``, computed as ``t^{1/2 - m} (d^m u_t)(x/t)`` on the rescaled path."""
    _check_unscaled(path, x, t)
    scalar = np.ndim(x) == 0
    xs = np.atleast_1d(np.asarray(x, dtype=float)) / t
    sp = spec.with_t(t)
    out = np.zeros((xs.size, path.dims))
    inside = xs <= 1.0
    if np.any(inside):
        res = scaled_jet(path.rescaled(t), xs[inside], (m,), sp, refine)
        out[inside] = res.values[0] * t ** (0.5 - m)
    # beyond x = t the window [x/alpha - L, ...] lies past the start of the path
    if np.any(~inside):
        far = xs[~inside]
        res = _far_scaled(path.rescaled(t), far, m, sp, refine)
        out[~inside] = res * t ** (0.5 - m)
    return _shape_out(out, scalar)


def _far_scaled(path01, x, m, spec, refine):
    """Scaled field for ``x > 1`` (allowed for the unscaled field); same kernel, clipped window."""
    lo, hi = _scaled_windows_far(x, spec)
    h = path01.grid_step
    kink_origin = 1.0 - math.floor(1.0 / h + 1e-9) * h
    vals = _integrate_windows(
        x, lo, hi, kink_origin, h, lambda s: path01.evaluate(1.0 - s),
        lambda xx, s: _kernels(xx, s, (m,), spec.alpha, spec.sigma_t), 1, path01.dims, spec.quadrature_points, refine,
    )
    return vals[0]


def _scaled_windows_far(x, spec):
    a = spec.alpha
    c = x / a
    sd = spec.sigma_t * np.sqrt(c) / a
    L = MIN_SD_WINDOW * sd
    return np.maximum(c - L, 0.0), np.minimum(c + L, 1.0)


def eval_u(path: BrownianPath, x, t: float, spec: KernelSpec, refine: int = 1):
    """Unscaled field ``u(x, t)``; equals ``sqrt(t) u_t(x/t)`` on the rescaled path."""
    return eval_u_derivative(path, x, t, 0, spec, refine)


def path_field(path: BrownianPath, p, tau, order: int = 0, n_panels: int = 128, refine: int = 1, return_tail: bool = False):
    """Heat flow of the path: ``d^n/dp^n E W(p - Z_tau)``, ``Z_tau ~ N(0, tau)``.

    Uses ``d^n f = int W(y) tau^{-(n+1)/2} He_n((y-p)/sqrt tau) phi((y-p)/sqrt tau) dy``;
    ``W`` is 0 at negative times.
    """
    p = np.atleast_1d(np.asarray(p, dtype=float))
    tau = np.broadcast_to(np.asarray(tau, dtype=float), p.shape).astype(float)
    scalar = p.size == 1 and np.ndim(tau) <= 1
    if np.any(tau <= 0):
        raise DomainError("tau must be positive")
    rt = np.sqrt(tau)
    lo = np.maximum(p - GAUSS_SD_WINDOW * rt, 0.0)
    hi = np.minimum(p + GAUSS_SD_WINDOW * rt, path.horizon)
    h = path.grid_step
    taus_full = tau
    # the kernel needs tau per node as well as p, so the "x" passed through is the group index
    gid = np.arange(p.size, dtype=float)

    def kern(g, y):
        g = g.astype(np.int64)
        pp = p[g]
        tt = taus_full[g]
        z = (y - pp) / np.sqrt(tt)
        he = hermite_all(order, z)[order]
        return (tt ** (-(order + 1) / 2.0) * he * norm_pdf(z))[None, :]

    vals = _integrate_windows(gid, lo, hi, 0.0, h, path.evaluate, kern, 1, path.dims, n_panels, refine)[0]
    out = _shape_out(vals, scalar)
    if return_tail:
        beyond = norm_sf((path.horizon - p) / rt)
        cut = norm_sf(np.full_like(p, GAUSS_SD_WINDOW))
        tail = path.sup_norm() * (beyond + cut) * np.sqrt(float(math.factorial(order))) * tau ** (-order / 2.0)
        return out, (float(tail[0]) if scalar else tail)
    return out


def eval_u_bar(path: BrownianPath, x, t: float, spec: KernelSpec, refine: int = 1, return_tail: bool = False):
    """Alternative field ``E W(t - x/alpha - Z)``, ``Z ~ N(0, rho^2 x)``."""
    _check_unscaled(path, x, t)
    x_arr = np.asarray(x, dtype=float)
    p = t - x_arr / spec.alpha
    tau = spec.rho**2 * x_arr
    return path_field(path, p, tau, 0, spec.quadrature_points, refine, return_tail)


def apply_kernel_to_function(f, x, spec: KernelSpec, refine: int = 1):
    """Smoothing operator ``P_t f(x) = int_0^1 k_t(x, s) f(1 - s) ds``."""
    scalar = np.ndim(x) == 0

    def values_fn(s):
        arg = 1.0 - np.asarray(s, dtype=float)
        try:
            v = np.asarray(f(arg), dtype=float)
            if v.shape[:1] != arg.shape[:1]:
                v = np.broadcast_to(v, arg.shape + v.shape[arg.ndim:]).copy()
        except (TypeError, ValueError):
            v = np.array([f(float(a)) for a in arg], dtype=float)
        return v

    res = scaled_jet(None, x, (0,), spec, refine, values_fn=values_fn)
    return _shape_out(res.values[0], scalar)


def kernel_mass(x, spec: KernelSpec, s_max: float = math.inf) -> np.ndarray:
    """Exact mass ``int_0^{s_max} k_t(x, s) ds = Phibar((x - alpha s_max)/(sigma_t sqrt s_max))``."""
    x = np.asarray(x, dtype=float)
    if math.isinf(s_max):
        return np.ones_like(x)
    return norm_sf((x - spec.alpha * s_max) / (spec.sigma_t * math.sqrt(s_max)))


# --- windowed field -------------------------------------------------------

def window_partition(delta: float, spec: KernelSpec) -> np.ndarray:
    """Points ``y_k`` splitting ``[delta - r, alpha + r]`` into cells of length ``r = sqrt(M log t / t)``.

    One extra point below and two above the range are included so every
    covered ``x`` has its three-cell window.
    """
    r = math.sqrt(spec.window_M * math.log(spec.t) / spec.t)
    start = delta - 2 * r
    n = int(math.ceil((spec.alpha + r - start) / r)) + 3
    return start + r * np.arange(n)


def _window_index(x, delta, spec):
    ys = window_partition(delta, spec)
    r = ys[1] - ys[0]
    lo_cov, hi_cov = delta - r, spec.alpha + r
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(x < lo_cov - 1e-12) or np.any(x > hi_cov + 1e-12):
        raise DomainError(f"windowed field covers [{lo_cov}, {hi_cov}] only")
    k = np.floor((x - ys[0]) / r).astype(np.int64) - 1
    k = np.clip(k, 0, ys.size - 4)
    return ys, k


def windowed_segment(x: float, delta: float, spec: KernelSpec) -> tuple[float, float]:
    """Integration range ``[y_k/alpha, y_{k+3}/alpha]`` (in ``s``) used for ``x``."""
    ys, k = _window_index(x, delta, spec)
    return float(ys[k[0]] / spec.alpha), float(ys[k[0] + 3] / spec.alpha)


def eval_windowed(path01: BrownianPath, x, spec: KernelSpec, delta: float = 0.1, refine: int = 1):
    """Windowed field: kernel integral over the three cells around ``x`` with the
    path re-based at the window's near end, ``W(1 - s) - W(1 - y_k/alpha)``."""
    _check_path01(path01)
    scalar = np.ndim(x) == 0
    ys, k = _window_index(x, delta, spec)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    lo = np.maximum(ys[k] / spec.alpha, 0.0)
    hi = np.minimum(ys[k + 3] / spec.alpha, 1.0)
    base = path01.evaluate(1.0 - np.clip(lo, 0, 1))  # (nx, dims)
    h = path01.grid_step
    kink_origin = 1.0 - math.floor(1.0 / h + 1e-9) * h
    # integrate W(1-s) and the kernel mass separately, then re-base
    vals = _integrate_windows(
        x, lo, hi, kink_origin, h, lambda s: path01.evaluate(1.0 - s),
        lambda xx, s: _kernels(xx, s, (0,), spec.alpha, spec.sigma_t), 1, path01.dims, spec.quadrature_points, refine,
    )[0]
    mass = _mass_between(x, lo, hi, spec)
    out = vals - mass[:, None] * base
    return _shape_out(out, scalar)


# --- derivative growth bound ----------------------------------------------

def derivative_bound(x: float, n: int, spec: KernelSpec, sup_norm: float, eps: float | None = None) -> float:
    """Upper bound for ``|d^{n+1} u_t(x)|`` valid for ``0 < eps < x/alpha``.

    ``(2 pi)^{1/4} ||W|| [ (sqrt2/(x - alpha eps))^{n+1} + (sqrt2/(x - alpha eps))^n / x ] (n+1)!
      + ||W|| [ (sigma_t sqrt eps)^{-(n+1)} + (n+1)/x (sigma_t sqrt eps)^{-n} ] sqrt((n+1)!)``
    """
    a = spec.alpha
    if eps is None:
        eps = x / (2 * a)
    if not (0 < eps < x / a):
        raise DomainError("eps must lie in (0, x/alpha)")
    q = math.sqrt(2.0) / (x - a * eps)
    r = 1.0 / (spec.sigma_t * math.sqrt(eps))
    f = math.factorial(n + 1)
    first = (2 * math.pi) ** 0.25 * sup_norm * (q ** (n + 1) + q**n / x) * f
    second = sup_norm * (r ** (n + 1) + (n + 1) / x * r**n) * math.sqrt(f)
    return first + second


# --- tail freezing ----------------------------------------------------------

def _freezing_constants(eta: float, t: float | None, spec: KernelSpec):
    a = spec.alpha
    if not (0.0 < eta < (1.0 - a) / a):
        raise DomainError(f"eta must lie in (0, {(1 - a) / a}), got {eta}")
    v = spec.rho**2 * a * (1.0 + eta)
    c = eta / v
    quad = 0.0 if t is None else 1.0 / (2.0 * v * t)
    return c, quad


def freezing_horizon(eta: float, spec: KernelSpec, t: float | None = None) -> float:
    """Smallest ``S`` with weight ``exp(-quad S^2 - c S) < 1e-12``."""
    c, quad = _freezing_constants(eta, t, spec)
    L = -math.log(WEIGHT_CUTOFF)
    if quad == 0.0:
        return L / c
    return (-c + math.sqrt(c * c + 4 * quad * L)) / (2 * quad)


def _weighted_path_integral(path: BrownianPath, c: float, quad: float, S: float, refine: int, n_panels: int):
    if path.horizon < S * (1 - 1e-12):
        raise ParameterError(f"path horizon {path.horizon} too short: the freezing functional needs horizon >= {S:.6g}")
    kern = lambda g, s: np.exp(-quad * s * s - c * s)[None, :]
    vals = _integrate_windows(np.zeros(1), np.zeros(1), np.array([S]), 0.0, path.grid_step, path.evaluate, kern, 1, path.dims, n_panels, refine)[0]
    return _shape_out(vals, True)


def tail_rescaled(path: BrownianPath, eta: float, t: float, spec: KernelSpec, refine: int = 1):
    """``v_t(eta) = int_0^inf W(s) exp(-s^2/(2 rho^2 t alpha (1+eta)) - s eta/(rho^2 alpha (1+eta))) ds``."""
    c, quad = _freezing_constants(eta, t, spec)
    S = freezing_horizon(eta, spec, t)
    return _weighted_path_integral(path, c, quad, S, refine, spec.quadrature_points)


def freezing_limit(path: BrownianPath, eta: float, spec: KernelSpec, refine: int = 1):
    """Limit functional ``v(eta) = int_0^inf exp(-s eta/(rho^2 alpha (1+eta))) W(s) ds``."""
    c, _ = _freezing_constants(eta, None, spec)
    S = freezing_horizon(eta, spec)
    return _weighted_path_integral(path, c, 0.0, S, refine, spec.quadrature_points)


# --- curve dumps ------------------------------------------------------------

def write_curve_csv(path_out, xs, values, spec: KernelSpec, seed=None) -> None:
    """Columns ``x, u1[, u2]`` after ``#`` lines recording the parameters."""
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    with open(path_out, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# alpha={spec.alpha!r}\n# t={spec.t!r}\n# seed={seed!r}\n# quadrature_points={spec.quadrature_points}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x"] + [f"u{i + 1}" for i in range(values.shape[1])])
        for x, row in zip(xs, values):
            w.writerow([format(float(x), ".17g")] + [format(float(v), ".17g") for v in row])
