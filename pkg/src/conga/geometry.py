"""Geometry of sampled curves: critical points, self-intersections, loops,
inscribed discs, cusp singularities and the evolution of dying loops.

Space-time fields ``f(p, tau)`` are planar curves in ``p`` indexed by a time
``tau``.  Near a cusp at ``(p0, tau0)`` a heat-flow field expands in the
heat polynomials ``zeta_n(p - p0, tau - tau0)``; coefficients in the rotated
natural frame are Taylor coefficients ``d^n f / n!``.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import optimize

from .errors import DegenerateSingularityError, DomainError, ParameterError

__all__ = [
    "SampledCurve",
    "Crossing",
    "LoopRecord",
    "CuspRecord",
    "LoopTrack",
    "SpaceTimeField",
    "CallableField",
    "SyntheticCuspField",
    "PathHeatField",
    "find_critical_points",
    "count_sign_changes",
    "coordinate_critical_counts",
    "find_self_intersections",
    "extract_loops",
    "loop_polygon",
    "loop_size",
    "zeta_coefficients",
    "zeta_polynomial",
    "detect_singularity",
    "natural_frame",
    "rescale_dying_loop",
    "limit_loop",
    "curve_distance",
    "restrict_curve",
    "track_loop",
    "loop_extents",
    "EventLog",
]

INTERSECTION_RTOL = 1e-9


# --- curves -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SampledCurve:
    """Polyline ``points[i]`` at parameter ``params[i]`` (piecewise linear in between)."""

    params: np.ndarray
    points: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.params, dtype=float)
        x = np.asarray(self.points, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if p.ndim != 1 or p.size < 2 or x.shape[0] != p.size:
            raise ParameterError("need >= 2 parameters matching the number of points")
        if np.any(np.diff(p) <= 0):
            raise ParameterError("params must be strictly increasing")
        object.__setattr__(self, "params", p)
        object.__setattr__(self, "points", x)

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.params[0]), float(self.params[-1])

    def diameter(self) -> float:
        ext = self.points.max(axis=0) - self.points.min(axis=0)
        return float(np.hypot(*ext)) if ext.size == 2 else float(np.linalg.norm(ext))

    def at(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        cols = [np.interp(s, self.params, self.points[:, d]) for d in range(self.points.shape[1])]
        return np.stack(cols, axis=-1)

    def is_closed(self) -> bool:
        tol = INTERSECTION_RTOL * max(self.diameter(), 1e-300)
        return bool(np.linalg.norm(self.points[0] - self.points[-1]) <= tol)


def restrict_curve(curve: SampledCurve, a: float, b: float) -> SampledCurve:
    """Sub-curve on ``[a, b]`` with interpolated endpoints."""
    lo, hi = curve.domain
    if not (lo <= a < b <= hi):
        raise DomainError("restriction interval outside the curve's domain")
    inner = (curve.params > a) & (curve.params < b)
    params = np.concatenate([[a], curve.params[inner], [b]])
    pts = np.concatenate([curve.at(a)[None], curve.points[inner], curve.at(b)[None]])
    return SampledCurve(params, pts)


# --- critical points --------------------------------------------------------------

def count_sign_changes(samples) -> int:
    """Sign changes ignoring exact zeros (a touch of zero is not a crossing)."""
    v = np.asarray(samples, dtype=float)
    v = v[v != 0]
    return int(np.count_nonzero(np.signbit(v[1:]) != np.signbit(v[:-1])))


def find_critical_points(samples, grid=None, func: Callable | None = None, tol: float = 1e-10) -> np.ndarray:
    """Roots of a sampled derivative, one per sign change.

    Exact zeros are skipped when deciding where the sign changes, so a
    tangency is never counted twice.  With ``func`` each bracket is refined by
    bisection to ``tol``; otherwise the secant root of the bracket is returned.
    """
    v = np.asarray(samples, dtype=float)
    if v.size < 2:
        raise ParameterError("need at least two samples")
    g = np.arange(v.size, dtype=float) if grid is None else np.asarray(grid, dtype=float)
    if g.shape != v.shape:
        raise ParameterError("grid and samples differ in length")
    nz = np.nonzero(v != 0)[0]
    if nz.size < 2:
        return np.zeros(0)
    vv = v[nz]
    change = np.nonzero(np.signbit(vv[1:]) != np.signbit(vv[:-1]))[0]
    il, ir = nz[change], nz[change + 1]
    roots = np.empty(il.size)
    for k, (i, j) in enumerate(zip(il, ir)):
        a, b = g[i], g[j]
        fa = v[i]
        if j > i + 1:
            roots[k] = g[i + 1] if j == i + 2 else 0.5 * (g[i + 1] + g[j - 1])
            continue
        if func is None:
            roots[k] = a - fa * (b - a) / (v[j] - fa)
            continue
        while b - a > tol:
            m = 0.5 * (a + b)
            fm = float(func(m))
            if fm == 0:
                a = b = m
                break
            if (fm < 0) == (fa < 0):
                a, fa = m, fm
            else:
                b = m
        roots[k] = 0.5 * (a + b)
    return roots


def coordinate_critical_counts(curve: SampledCurve) -> list[int]:
    """Sign changes of the discrete velocity of each coordinate."""
    return [count_sign_changes(np.diff(curve.points[:, d])) for d in range(curve.points.shape[1])]


# --- self-intersections ---------------------------------------------------------

@dataclass(frozen=True)
class Crossing:
    s1: float
    s2: float
    point: tuple


def _cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def find_self_intersections(curve: SampledCurve, max_pairs: int = 4_000_000) -> list[Crossing]:
    """Transversal crossings between non-adjacent segments.

    Segments are sorted by their left x-coordinate and each is tested only
    against segments whose left end falls inside its own x-range (sweep and
    prune); candidates then pass a y-overlap filter and a 2x2 linear solve.
    A crossing at a vertex is assigned to one segment by half-open ranges.
    """
    P = curve.points
    if P.shape[1] != 2:
        raise ParameterError("self-intersections need planar points")
    A, B = P[:-1], P[1:]
    nseg = A.shape[0]
    if nseg < 3:
        return []
    closed = curve.is_closed()
    # boxes padded so vertex-on-vertex crossings survive rounding in the pruning step
    pad = INTERSECTION_RTOL * max(curve.diameter(), 1e-300)
    xmin = np.minimum(A[:, 0], B[:, 0]) - pad
    xmax = np.maximum(A[:, 0], B[:, 0]) + pad
    ymin = np.minimum(A[:, 1], B[:, 1]) - pad
    ymax = np.maximum(A[:, 1], B[:, 1]) + pad
    order = np.argsort(xmin, kind="stable")
    xs = xmin[order]
    right = np.searchsorted(xs, xmax[order], side="right")
    counts = np.maximum(right - np.arange(nseg) - 1, 0)
    found = []
    start = 0
    while start < nseg:
        # chunk so the ragged candidate list stays bounded
        csum = np.cumsum(counts[start:])
        stop = start + max(1, int(np.searchsorted(csum, max_pairs, side="right")))
        stop = min(stop, nseg)
        cnt = counts[start:stop]
        if cnt.sum() > 0:
            r = np.repeat(np.arange(start, stop), cnt)
            off = np.arange(r.size) - np.repeat(np.cumsum(cnt) - cnt, cnt)
            i = order[r]
            j = order[r + 1 + off]
            i, j = np.minimum(i, j), np.maximum(i, j)
            keep = (ymin[i] <= ymax[j]) & (ymin[j] <= ymax[i]) & (j - i >= 2)
            if closed:
                keep &= ~((i == 0) & (j == nseg - 1))
            i, j = i[keep], j[keep]
            d1 = B[i] - A[i]
            d2 = B[j] - A[j]
            den = _cross(d1, d2)
            ok = den != 0
            i, j, d1, d2, den = i[ok], j[ok], d1[ok], d2[ok], den[ok]
            q = A[j] - A[i]
            s = _cross(q, d2) / den
            u = _cross(q, d1) / den
            eps = 1e-12
            hit = (s >= -eps) & (s < 1 - eps) & (u >= -eps) & (u < 1 - eps)
            for ii, jj, ss, uu in zip(i[hit], j[hit], np.clip(s[hit], 0, 1), np.clip(u[hit], 0, 1)):
                p1 = curve.params[ii] + ss * (curve.params[ii + 1] - curve.params[ii])
                p2 = curve.params[jj] + uu * (curve.params[jj + 1] - curve.params[jj])
                pt = A[ii] + ss * (B[ii] - A[ii])
                found.append(Crossing(float(p1), float(p2), (float(pt[0]), float(pt[1]))))
        start = stop
    found.sort(key=lambda c: (c.s1, c.s2))
    return found


# --- loops --------------------------------------------------------------------

@dataclass(frozen=True)
class LoopRecord:
    """``curve(a) = curve(b)`` and no other coincidence inside ``[a, b]``.

    On a closed curve ``b`` may exceed the parameter end; the arc then wraps.
    """

    a: float
    b: float
    size: float
    crossing_point: tuple

    def __post_init__(self):
        if not self.a < self.b:
            raise ParameterError("loop needs a < b")
        if self.size < 0:
            raise ParameterError("loop size is non-negative")


def _arcs(curve: SampledCurve, crossings: Sequence[Crossing]):
    """Candidate arcs ``(a, b, point, pair_index)``; closed curves give two arcs per pair."""
    lo, hi = curve.domain
    period = hi - lo
    pairs = [(c.s1, c.s2, c.point) for c in crossings]
    if curve.diameter() == 0.0:
        return [], [], None
    if curve.is_closed():
        arcs = []
        for k, (s1, s2, pt) in enumerate(pairs):
            arcs.append((s1, s2, pt, k))
            arcs.append((s2, s1 + period, pt, k))
        if not pairs:
            arcs.append((lo, hi, tuple(map(float, curve.points[0])), -1))
        return arcs, pairs, period
    return [(s1, s2, pt, k) for k, (s1, s2, pt) in enumerate(pairs)], pairs, None


def _nested(a, b, c, d, period):
    shifts = (0.0,) if period is None else (-period, 0.0, period)
    cs = [c + sc for sc in shifts if a <= c + sc <= b]
    ds = [d + sd for sd in shifts if a <= d + sd <= b]
    return any(x != y for x in cs for y in ds)


def extract_loops(curve: SampledCurve, crossings: Sequence[Crossing] | None = None, with_size: bool = True) -> list[LoopRecord]:
    """Minimal coincidence intervals: arcs containing no other coincidence pair."""
    if crossings is None:
        crossings = find_self_intersections(curve)
    arcs, pairs, period = _arcs(curve, crossings)
    loops = []
    for a, b, pt, k in arcs:
        if any(m != k and _nested(a, b, c, d, period) for m, (c, d, _) in enumerate(pairs)):
            continue
        size = loop_size((a, b, pt), curve) if with_size else 0.0
        loops.append(LoopRecord(float(a), float(b), float(size), pt))
    loops.sort(key=lambda l: l.a)
    return loops


def loop_polygon(loop, curve: SampledCurve) -> np.ndarray:
    """Vertices of the closed polygon traced on ``[a, b]`` (wrapping on closed curves)."""
    a, b, pt = (loop.a, loop.b, loop.crossing_point) if isinstance(loop, LoopRecord) else loop
    lo, hi = curve.domain
    prm, P = curve.params, curve.points
    if b <= hi:
        mid = P[(prm > a) & (prm < b)]
    else:
        period = hi - lo
        first = P[(prm > a) & (prm < hi)]
        second = P[(prm >= lo) & (prm < b - period)]
        if second.shape[0] and first.shape[0] and np.allclose(second[0], P[-1]):
            second = second[1:]
        mid = np.concatenate([first, second])
    return np.concatenate([np.asarray(pt, dtype=float)[None], mid])


def _polygon_area(poly):
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _signed_distance(pts, poly):
    """Distance to the polygon boundary, positive inside (even-odd rule)."""
    A = poly
    B = np.roll(poly, -1, axis=0)
    pts = np.atleast_2d(pts)
    px = pts[:, 0][:, None]
    py = pts[:, 1][:, None]
    ax, ay, bx, by = A[:, 0][None], A[:, 1][None], B[:, 0][None], B[:, 1][None]
    dx, dy = bx - ax, by - ay
    L2 = dx * dx + dy * dy
    with np.errstate(invalid="ignore", divide="ignore"):
        tt = np.clip(np.where(L2 > 0, ((px - ax) * dx + (py - ay) * dy) / L2, 0.0), 0.0, 1.0)
    ex = ax + tt * dx - px
    ey = ay + tt * dy - py
    dist = np.sqrt(np.min(ex * ex + ey * ey, axis=1))
    cond = (ay > py) != (by > py)
    with np.errstate(invalid="ignore", divide="ignore"):
        xint = ax + (py - ay) * dx / np.where(dy == 0, 1.0, dy)
    inside = np.count_nonzero(cond & (px < xint), axis=1) % 2 == 1
    return np.where(inside, dist, -dist)


def loop_size(loop, curve: SampledCurve, rel_precision: float = 1e-3) -> float:
    """Radius of the largest disc inside the loop's bounded component.

    Best-first subdivision of square cells over the bounding box: a cell of
    half-size ``h`` centred at distance ``d`` can hold at most ``d + h sqrt 2``,
    so cells that cannot beat the incumbent are discarded.
    """
    poly = loop_polygon(loop, curve)
    if poly.shape[0] < 3:
        return 0.0
    lo = poly.min(axis=0)
    hi = poly.max(axis=0)
    w, h = hi - lo
    diam = float(math.hypot(w, h))
    if diam == 0 or abs(_polygon_area(poly)) <= 1e-12 * diam * diam:
        return 0.0
    precision = rel_precision * diam
    cell = min(w, h)
    if cell <= 0:
        return 0.0
    half = cell / 2
    xs = np.arange(lo[0], hi[0], cell) + half
    ys = np.arange(lo[1], hi[1], cell) + half
    cx, cy = np.meshgrid(xs, ys)
    centers = np.column_stack([cx.ravel(), cy.ravel()])
    dists = _signed_distance(centers, poly)
    heap = [(-(d + half * math.sqrt(2)), float(c[0]), float(c[1]), half, float(d)) for c, d in zip(centers, dists)]
    heapq.heapify(heap)
    best = max(0.0, float(dists.max()))
    # area centroid as an extra seed
    area = _polygon_area(poly)
    x, y = poly[:, 0], poly[:, 1]
    cr = x * np.roll(y, -1) - np.roll(x, -1) * y
    cen = np.array([np.sum((x + np.roll(x, -1)) * cr), np.sum((y + np.roll(y, -1)) * cr)]) / (6 * area)
    best = max(best, float(_signed_distance(cen, poly)[0]))
    while heap:
        neg_pot, x0, y0, hs, d0 = heapq.heappop(heap)
        if -neg_pot - best <= precision:
            break
        q = hs / 2
        kids = np.array([[x0 - q, y0 - q], [x0 + q, y0 - q], [x0 - q, y0 + q], [x0 + q, y0 + q]])
        kd = _signed_distance(kids, poly)
        for c, d in zip(kids, kd):
            best = max(best, float(d))
            pot = d + q * math.sqrt(2)
            if pot - best > precision:
                heapq.heappush(heap, (-pot, float(c[0]), float(c[1]), q, float(d)))
    return max(best, 0.0)


# --- heat polynomials ------------------------------------------------------------

def zeta_coefficients(n: int, t) -> list:
    """Coefficients in increasing powers of ``p`` of ``zeta_n(p, t) = E(p - Z_t)^n``.

    ``E Z_t^{2j} = (2j-1)!! t^j`` is continued polynomially to any real ``t``;
    with integer ``t`` the coefficients are exact integers.
    """
    if n < 0:
        raise DomainError("order must be non-negative")
    coef = [0] * (n + 1)
    dfact = 1
    for j in range(n // 2 + 1):
        if j > 0:
            dfact *= 2 * j - 1
        coef[n - 2 * j] = math.comb(n, 2 * j) * dfact * t**j
    return coef


def zeta_polynomial(n: int, p, t, p0: float = 0.0):
    """``zeta_n(p - p0, t)``; valid for negative ``t``."""
    x = np.asarray(p, dtype=float) - p0
    res = np.zeros_like(x)
    for k, c in reversed(list(enumerate(zeta_coefficients(n, float(t))))):
        res = res * x + c
    return float(res) if np.ndim(res) == 0 else res


# --- space-time fields ------------------------------------------------------------

class SpaceTimeField:
    """A planar curve ``p -> f(p, tau)`` for each time ``tau``."""

    def value(self, p, tau) -> np.ndarray:
        raise NotImplementedError

    def dp(self, n: int, p, tau, h: float = 1e-3) -> np.ndarray:
        """``d^n f / dp^n`` by central differences (override when exact)."""
        if n == 0:
            return self.value(p, tau)
        p = np.asarray(p, dtype=float)
        stencils = {
            1: ([-1, 1], [-0.5, 0.5]),
            2: ([-1, 0, 1], [1.0, -2.0, 1.0]),
            3: ([-2, -1, 1, 2], [-0.5, 1.0, -1.0, 0.5]),
        }
        if n not in stencils:
            raise ParameterError("finite differences implemented up to order 3")
        offs, wts = stencils[n]
        acc = 0.0
        for o, w in zip(offs, wts):
            acc = acc + w * self.value(p + o * h, tau)
        return acc / h**n

    def curve(self, p_grid, tau) -> SampledCurve:
        return SampledCurve(np.asarray(p_grid, dtype=float), self.value(np.asarray(p_grid, dtype=float), tau))


class CallableField(SpaceTimeField):
    def __init__(self, func: Callable):
        self.func = func

    def value(self, p, tau):
        return np.asarray(self.func(np.asarray(p, dtype=float), tau), dtype=float)


def _rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


class SyntheticCuspField(SpaceTimeField):
    """``origin + R(-theta) (sum a_i zeta_i, sum b_i zeta_i)`` in ``(p - p0, tau - tau0)``.

    ``a`` holds ``a_2, a_3, ...`` and ``b`` holds ``b_3, b_4, ...``.  A loop
    with endpoints ``p0 +- sqrt(3 (tau0 - tau))`` (at leading order) shrinks and
    dies at ``(p0, tau0)``.
    """

    def __init__(self, p0=0.0, tau0=1.0, a=(1.0, 0.3, 0.2), b=(1.0, 0.25), theta=0.0, origin=(0.0, 0.0)):
        self.p0, self.tau0 = float(p0), float(tau0)
        self.a = tuple(map(float, a))
        self.b = tuple(map(float, b))
        self.theta = float(theta)
        self.origin = np.asarray(origin, dtype=float)
        if self.a[0] == 0 or self.b[0] == 0:
            raise ParameterError("a_2 and b_3 must be non-zero")

    def _series(self, n: int, p, tau):
        x = np.asarray(p, dtype=float) - self.p0
        dt = np.asarray(tau, dtype=float) - self.tau0

        def term(order):
            # d^n zeta_order / dp^n = order!/(order-n)! zeta_{order-n}
            if order < n:
                return np.zeros_like(x + dt)
            fac = math.factorial(order) // math.factorial(order - n)
            return fac * _zeta_vec(order - n, x, dt)

        f1 = sum(c * term(i) for i, c in enumerate(self.a, start=2))
        f2 = sum(c * term(i) for i, c in enumerate(self.b, start=3))
        return np.stack(np.broadcast_arrays(f1, f2), axis=-1)

    def value(self, p, tau):
        v = self._series(0, p, tau) @ _rotation(-self.theta).T
        return v + self.origin

    def dp(self, n: int, p, tau, h: float = 0.0):
        v = self._series(n, p, tau) @ _rotation(-self.theta).T
        return v + (self.origin if n == 0 else 0.0)


def _zeta_vec(n, x, t):
    res = np.zeros(np.broadcast(x, t).shape)
    for j in range(n // 2 + 1):
        res = res + math.comb(n, 2 * j) * _double_factorial(2 * j - 1) * np.power(x, n - 2 * j) * np.power(t, j)
    return res


def _double_factorial(k: int) -> int:
    out = 1
    while k > 1:
        out *= k
        k -= 2
    return out


class PathHeatField(SpaceTimeField):
    """``f(p, tau) = E W(p - Z_tau)`` for a sampled planar path ``W``."""

    def __init__(self, path, n_panels: int = 128, refine: int = 1):
        from .field import path_field

        self.path = path
        self._pf = path_field
        self.n_panels = n_panels
        self.refine = refine

    def value(self, p, tau):
        return self.dp(0, p, tau)

    def dp(self, n: int, p, tau, h: float = 0.0):
        p = np.asarray(p, dtype=float)
        out = self._pf(self.path, p.ravel(), np.broadcast_to(np.asarray(tau, dtype=float), p.shape).ravel(), order=n,
                       n_panels=self.n_panels, refine=self.refine)
        out = np.asarray(out, dtype=float).reshape(p.shape + (self.path.dims,))
        return out


# --- singularities -----------------------------------------------------------

def _newton_speed_zero(field: SpaceTimeField, p, tau, iters=30, htau=1e-6):
    for _ in range(iters):
        F = np.asarray(field.dp(1, p, tau), dtype=float).reshape(2)
        Jp = np.asarray(field.dp(2, p, tau), dtype=float).reshape(2)
        Jt = (np.asarray(field.dp(1, p, tau + htau), dtype=float).reshape(2)
              - np.asarray(field.dp(1, p, tau - htau), dtype=float).reshape(2)) / (2 * htau)
        J = np.column_stack([Jp, Jt])
        try:
            step = np.linalg.solve(J, F)
        except np.linalg.LinAlgError:
            return None
        p, tau = p - step[0], tau - step[1]
        if abs(step[0]) + abs(step[1]) < 1e-14 * (1 + abs(p) + abs(tau)):
            break
    return float(p), float(tau)


def detect_singularity(field: SpaceTimeField, p_grid, tau_grid, tol: float) -> list[tuple[float, float]]:
    """Zero-speed points of ``f`` in a ``(p, tau)`` window.

    Local minima of ``|d_p f|`` below ``tol`` are located on the grid, moved by
    a quadratic fit along each axis, then polished by Newton's method on
    ``d_p f = 0`` (kept only if it stays inside the cell's neighbourhood).
    """
    pg = np.asarray(p_grid, dtype=float)
    tg = np.asarray(tau_grid, dtype=float)
    P, T = np.meshgrid(pg, tg, indexing="ij")
    speed = np.linalg.norm(np.asarray(field.dp(1, P, T)), axis=-1)
    out = []
    if tol <= 0:
        return out
    n1, n2 = speed.shape
    for i in range(n1):
        for j in range(n2):
            v = speed[i, j]
            if v >= tol:
                continue
            nb = speed[max(i - 1, 0):i + 2, max(j - 1, 0):j + 2]
            if v > nb.min():
                continue
            p0 = pg[i] + _quad_shift(speed, i, j, 0, pg)
            t0 = tg[j] + _quad_shift(speed, i, j, 1, tg)
            pol = _newton_speed_zero(field, p0, t0)
            dp_ = pg[min(i + 1, n1 - 1)] - pg[max(i - 1, 0)]
            dt_ = tg[min(j + 1, n2 - 1)] - tg[max(j - 1, 0)]
            if pol is not None and abs(pol[0] - p0) <= dp_ and abs(pol[1] - t0) <= dt_:
                p0, t0 = pol
            if not any(abs(p0 - q[0]) < 1e-9 and abs(t0 - q[1]) < 1e-9 for q in out):
                out.append((float(p0), float(t0)))
    return out


def _quad_shift(arr, i, j, axis, grid):
    idx = [i, j]
    k = idx[axis]
    if k == 0 or k == arr.shape[axis] - 1:
        return 0.0
    lo = list(idx); lo[axis] = k - 1
    hi = list(idx); hi[axis] = k + 1
    fm, f0, fp = arr[tuple(lo)], arr[i, j], arr[tuple(hi)]
    den = fm - 2 * f0 + fp
    if den <= 0:
        return 0.0
    step = (grid[k + 1] - grid[k - 1]) / 2
    return float(np.clip(0.5 * (fm - fp) / den, -0.5, 0.5) * step)


@dataclass(frozen=True)
class CuspRecord:
    p0: float
    tau0: float
    rotation_theta: float
    a2: float
    a3: float
    b3: float
    base_point: tuple = (0.0, 0.0)

    def rotation(self) -> np.ndarray:
        return _rotation(self.rotation_theta)


def natural_frame(field: SpaceTimeField, p0: float, tau0: float, tol: float = 1e-6, speed_tol: float | None = None) -> CuspRecord:
    """Rotation that makes the second derivative horizontal, and the cusp coefficients.

    ``a2 = (R d^2 f)_1 / 2``, ``a3 = (R d^3 f)_1 / 6``, ``b3 = (R d^3 f)_2 / 6``.
    Raises :class:`DegenerateSingularityError` when the second and third
    derivatives are linearly dependent or the speed is not near zero.
    """
    d1 = np.asarray(field.dp(1, p0, tau0), dtype=float).reshape(2)
    d2 = np.asarray(field.dp(2, p0, tau0), dtype=float).reshape(2)
    d3 = np.asarray(field.dp(3, p0, tau0), dtype=float).reshape(2)
    scale = max(np.linalg.norm(d2), np.linalg.norm(d3), 1e-300)
    if speed_tol is not None and np.linalg.norm(d1) > speed_tol:
        raise DomainError("speed is not zero at the proposed cusp")
    theta = -math.atan2(d2[1], d2[0])
    R = _rotation(theta)
    r2, r3 = R @ d2, R @ d3
    a2, a3, b3 = r2[0] / 2, r3[0] / 6, r3[1] / 6
    if abs(r2[0]) <= tol * scale or abs(r3[1]) <= tol * scale:
        raise DegenerateSingularityError("second and third derivatives are linearly dependent; not a cusp")
    base = tuple(map(float, np.asarray(field.value(p0, tau0), dtype=float).reshape(2)))
    return CuspRecord(float(p0), float(tau0), float(theta), float(a2), float(a3), float(b3), base)


def _natural_coords(field, cusp: CuspRecord, p, tau):
    v = np.asarray(field.value(p, tau), dtype=float) - np.asarray(cusp.base_point)
    return v @ cusp.rotation().T


def rescale_dying_loop(field: SpaceTimeField, cusp: CuspRecord, s: float, P_grid=None, M: float = 2.0, n: int = 801) -> SampledCurve:
    """``(s^{-1} f^1(p0 + sqrt(s) P, tau0 - s), s^{-3/2} f^2(...))`` in natural coordinates."""
    if s <= 0:
        raise DomainError("s must be positive")
    if P_grid is None:
        if not (math.sqrt(3) < M < 2 * math.sqrt(3) - 1):
            raise DomainError("M must lie in (sqrt 3, 2 sqrt 3 - 1)")
        P_grid = np.linspace(-M, M, n)
    P = np.asarray(P_grid, dtype=float)
    y = _natural_coords(field, cusp, cusp.p0 + math.sqrt(s) * P, cusp.tau0 - s)
    return SampledCurve(P, np.column_stack([y[:, 0] / s, y[:, 1] / s**1.5]))


def limit_loop(a2: float, b3: float, P_grid) -> SampledCurve:
    """``g(P) = (a2 (P^2 - 1), b3 (P^3 - 3P))``; its loop is ``[-sqrt 3, sqrt 3]``."""
    P = np.asarray(P_grid, dtype=float)
    return SampledCurve(P, np.column_stack([a2 * (P * P - 1), b3 * (P**3 - 3 * P)]))


# --- curve metric ---------------------------------------------------------------

def _pl_compose(curve: SampledCurve, lam_u, lam_v, u):
    """``curve(lambda(u))`` for a piecewise-linear ``lambda`` with knots ``(lam_u, lam_v)``."""
    return curve.at(np.interp(u, lam_u, lam_v))


def _breakpoints(curve_f, curve_g, uf, vf, ug, vg):
    # u where either composition or either lambda changes slope
    pre_f = np.interp(curve_f.params, vf, uf)
    pre_g = np.interp(curve_g.params, vg, ug)
    return np.unique(np.concatenate([uf, ug, pre_f, pre_g, [0.0, 1.0]]))


def _pairing_cost(f: SampledCurve, g: SampledCurve, uf, vf, ug, vg) -> float:
    u = _breakpoints(f, g, uf, vf, ug, vg)
    lf = np.interp(u, uf, vf)
    lg = np.interp(u, ug, vg)
    diff = f.at(lf) - g.at(lg)
    return float(np.max(np.abs(lf - lg)) + np.max(np.linalg.norm(diff, axis=-1)))


def curve_distance(f: SampledCurve, g: SampledCurve, K: int = 16, maxiter: int | None = None) -> float:
    """Upper bound on ``inf ||l1 - l2|| + ||f o l1 - g o l2||`` over reparametrizations.

    ``l2`` is the affine map onto ``g``'s domain and ``l1`` ranges over
    increasing piecewise-linear maps with ``K`` equal-width pieces onto
    ``f``'s domain (softmax-parametrized increments).  For any such pair both
    compositions are piecewise linear in ``u``, so the cost is evaluated
    exactly on their breakpoints; the identity pairing is always included.
    """
    af, bf = f.domain
    ag, bg = g.domain
    ug = np.array([0.0, 1.0])
    vg = np.array([ag, bg])
    uk = np.linspace(0.0, 1.0, K + 1)

    def knots(z):
        e = np.exp(z - z.max())
        inc = e / e.sum()
        return af + (bf - af) * np.concatenate([[0.0], np.cumsum(inc)])

    def cost(z):
        vf = knots(z)
        vf[-1] = bf
        return _pairing_cost(f, g, uk, vf, ug, vg)

    base = _pairing_cost(f, g, np.array([0.0, 1.0]), np.array([af, bf]), ug, vg)
    if base == 0.0 or K < 1:
        return base
    res = optimize.minimize(cost, np.zeros(K), method="Powell",
                            options={"maxiter": maxiter or 40 * K, "xtol": 1e-6, "ftol": 1e-9})
    return float(min(base, float(res.fun)))


# --- loop tracking ---------------------------------------------------------------

@dataclass
class LoopTrack:
    tau_grid: np.ndarray
    loops: list
    outcome: str
    death: tuple | None = None
    taus_found: list = field(default_factory=list)


def _best_loop(loops: list[LoopRecord], prev: tuple[float, float]):
    if not loops:
        return None
    return min(loops, key=lambda L: abs(L.a - prev[0]) + abs(L.b - prev[1]))


def _find_loops_in(field_: SpaceTimeField, tau, lo, hi, n):
    c = field_.curve(np.linspace(lo, hi, n), tau)
    return extract_loops(c, find_self_intersections(c), with_size=False)


def track_loop(field_: SpaceTimeField, tau_grid, initial: tuple[float, float], n: int = 600,
               merge_tol: float = 0.02, window: float = 1.5) -> LoopTrack:
    """Follow a loop along ``tau_grid`` inside a window that moves with it.

    Outcome ``died`` when the loop is lost after its width shrank monotonically
    and either the linear extrapolation of ``(b - a)^2`` from the last three
    widths reaches zero inside the gap where it was lost, or the last width is
    below ``merge_tol`` times the initial one.  The death time is that
    extrapolated zero.  ``vanished``
    when it is lost otherwise, ``persisted`` when found at every time.
    """
    tg = np.asarray(tau_grid, dtype=float)
    a0, b0 = map(float, initial)
    if not a0 < b0:
        raise ParameterError("initial interval must have a < b")
    first = _find_loops_in(field_, tg[0], a0, b0, n)
    if not first:
        raise ParameterError("initial interval contains no loop")
    prev = (first[0].a, first[0].b)
    cur = _best_loop(first, prev)
    prev = (cur.a, cur.b)
    w0 = prev[1] - prev[0]
    loops = [cur]
    taus = [float(tg[0])]
    for tau in tg[1:]:
        mid = 0.5 * (prev[0] + prev[1])
        half = window * (prev[1] - prev[0])
        cand = _find_loops_in(field_, tau, mid - half, mid + half, n)
        L = _best_loop(cand, prev)
        if L is None:
            widths = np.array([x.b - x.a for x in loops])
            shrinking = widths.size >= 3 and bool(np.all(np.diff(widths[-3:]) < 0))
            if shrinking:
                tt = np.asarray(taus[-3:])
                slope, icpt = np.polyfit(tt, widths[-3:] ** 2, 1)
                tstar = -icpt / slope if slope < 0 else math.inf
                gap = float(tau) - taus[-1]
                merged = taus[-1] - gap <= tstar <= float(tau) + gap
                if merged or widths[-1] <= merge_tol * w0:
                    pstar = 0.5 * (loops[-1].a + loops[-1].b)
                    return LoopTrack(tg, loops, "died", (float(pstar), float(min(tstar, float(tau) + gap))), taus)
            return LoopTrack(tg, loops, "vanished", None, taus)
        loops.append(L)
        taus.append(float(tau))
        prev = (L.a, L.b)
    return LoopTrack(tg, loops, "persisted", None, taus)


def loop_extents(curve: SampledCurve, loop: LoopRecord, rotation: np.ndarray | None = None) -> tuple[float, float]:
    """Extent of the loop polygon along each (optionally rotated) axis."""
    poly = loop_polygon(loop, curve)
    if rotation is not None:
        poly = poly @ rotation.T
    ext = poly.max(axis=0) - poly.min(axis=0)
    return float(ext[0]), float(ext[1])


# --- event log ------------------------------------------------------------------

class EventLog:
    """JSON-lines records ``{type, tau, p, size, a2, b3, theta}``."""

    FIELDS = ("type", "tau", "p", "size", "a2", "b3", "theta")

    def __init__(self):
        self.records: list[dict] = []

    def add(self, type: str, tau=None, p=None, size=None, a2=None, b3=None, theta=None) -> None:
        self.records.append({"type": type, "tau": tau, "p": p, "size": size, "a2": a2, "b3": b3, "theta": theta})

    def dumps(self) -> str:
        return "".join(json.dumps(r) + "\n" for r in self.records)

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.dumps())

    @classmethod
    def read(cls, path) -> "EventLog":
        log = cls()
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    log.records.append(json.loads(line))
        return log
