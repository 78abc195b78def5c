"""The discrete chain of followers.

The leader performs a Gaussian random walk driven by the path increments
``Z_i = W(i) - W(i-1)``; each later particle moves a fraction ``alpha`` of the
way towards its predecessor's previous position.  Positions can be produced by
iterating that rule (:func:`run_conga`) or directly as binomial-tail moving
averages of the increments (:func:`position_via_weights`).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
from scipy.special import gammaln

from .errors import DomainError, ParameterError
from .stochastic import BrownianPath

__all__ = [
    "CongaParams",
    "CongaFrame",
    "WeightTable",
    "step_frame",
    "run_conga",
    "iter_conga",
    "active_window",
    "build_weight_table",
    "binomial_tail_matrix",
    "position_via_weights",
    "positions_via_weights",
    "increment_via_weights",
    "interpolate_frame",
    "InterpolatedFrame",
    "write_frame_csv",
    "leader_increments",
]


@dataclass(frozen=True)
class CongaParams:
    alpha: float
    n: int
    dims: int = 1

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise ParameterError(f"alpha must lie in (0,1), got {self.alpha}")
        if int(self.n) < 1:
            raise ParameterError("n must be a positive integer")
        if self.dims not in (1, 2):
            raise ParameterError("dims must be 1 or 2")

    @property
    def sigma(self) -> float:
        return math.sqrt(self.alpha * (1.0 - self.alpha))


@dataclass(frozen=True, eq=False)
class CongaFrame:
    """Positions ``X_1(n), ..., X_n(n)`` (row ``k-1`` holds particle ``k``)."""

    time: int
    positions: np.ndarray = field(repr=False)

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim == 1:
            pos = pos[:, None]
        if pos.shape[0] != self.time:
            raise ParameterError(f"frame at time {self.time} must hold {self.time} particles")
        object.__setattr__(self, "positions", pos)

    @property
    def dims(self) -> int:
        return self.positions.shape[1]

    def position(self, k: int) -> np.ndarray:
        """``X_k(n)``; zero for ``k > n``."""
        if k < 1:
            raise DomainError("particle index starts at 1")
        if k > self.time:
            return np.zeros(self.dims)
        return self.positions[k - 1]

    @property
    def leader(self) -> np.ndarray:
        return self.positions[0]


def step_frame(frame: CongaFrame, leader_increment, params: CongaParams, window: int | None = None) -> CongaFrame:
    """Advance ``frame`` from time ``n-1`` to ``n``.

    If ``window`` is given, particles with index above it are left at 0.
    """
    z = np.atleast_1d(np.asarray(leader_increment, dtype=float))
    if z.shape != (frame.dims,) or frame.dims != params.dims:
        raise ParameterError("increment dimension does not match the frame")
    a = params.alpha
    old = frame.positions
    n = frame.time + 1
    new = np.zeros((n, frame.dims))
    new[0] = (old[0] if frame.time > 0 else 0.0) + z
    if n > 1:
        new[1:n - 1] = (1.0 - a) * old[1:] + a * old[:-1]
        new[n - 1] = a * old[n - 2]
    if window is not None and window < n:
        new[window:] = 0.0
    return CongaFrame(n, new)


def leader_increments(path: BrownianPath, n: int) -> np.ndarray:
    """``Z_1..Z_n`` from a unit-grid path, shape ``(n, dims)``."""
    if abs(path.grid_step - 1.0) > 1e-12:
        raise ParameterError("the discrete chain needs a unit-grid path")
    if path.npoints < n + 1:
        raise ParameterError(f"path horizon {path.horizon} shorter than n={n}")
    return np.diff(path.values[: n + 1], axis=0)


def active_window(n: int, alpha: float, c: float) -> int:
    """Index cutoff ``alpha n + c sqrt(n log n)`` beyond which positions are negligible."""
    return min(n, int(math.ceil(alpha * n + c * math.sqrt(n * math.log(max(n, 2))))))


def iter_conga(params: CongaParams, path: BrownianPath, window_c: float | None = None) -> Iterator[CongaFrame]:
    """Yield frames at times ``1..n`` one at a time (constant memory per frame)."""
    if path.dims != params.dims:
        raise ParameterError("path and params disagree on dims")
    incr = leader_increments(path, params.n)
    frame = CongaFrame(0, np.zeros((0, params.dims)))
    for i in range(params.n):
        win = None if window_c is None else active_window(i + 1, params.alpha, window_c)
        frame = step_frame(frame, incr[i], params, win)
        yield frame


def run_conga(params: CongaParams, path: BrownianPath, keep_all: bool = False, window_c: float | None = None):
    """Final frame at time ``params.n``, or the list of all frames when ``keep_all``."""
    if keep_all:
        return list(iter_conga(params, path, window_c))
    if path.dims != params.dims:
        raise ParameterError("path and params disagree on dims")
    # same recursion as step_frame, rewritten in place to avoid per-step allocation
    incr = leader_increments(path, params.n)
    a = params.alpha
    n = params.n
    pos = np.zeros((n, params.dims))
    for i in range(n):
        m = i + 1
        if m > 1:
            pos[1:m] = (1.0 - a) * pos[1:m] + a * pos[0 : m - 1]
        pos[0] += incr[i]
        if window_c is not None:
            w = active_window(m, a, window_c)
            pos[w:m] = 0.0
    return CongaFrame(n, pos)


@dataclass(frozen=True, eq=False)
class WeightTable:
    """Binomial weights for particle ``k`` at time ``n``.

    ``tail_weights[i] = P(B_l >= k-1)`` and ``point_weights[i] = P(B_l = k-1)``
    for ``l = k-1+i``, ``B_l ~ Bin(l, alpha)``.
    """

    k: int
    n: int
    alpha: float
    tail_weights: np.ndarray = field(repr=False)
    point_weights: np.ndarray = field(repr=False)

    @property
    def lags(self) -> np.ndarray:
        return np.arange(self.k - 1, self.n)


def _log_binom_pmf(ls: np.ndarray, j: np.ndarray, alpha: float) -> np.ndarray:
    """``log P(Bin(l, alpha) = j)`` via log-gamma; ``-inf`` where ``j > l``."""
    ls = np.asarray(ls, dtype=float)
    j = np.asarray(j, dtype=float)
    valid = (j >= 0) & (j <= ls)
    jj = np.where(valid, j, 0.0)
    ll = np.where(valid, ls, 0.0)
    out = (
        gammaln(ll + 1) - gammaln(jj + 1) - gammaln(ll - jj + 1)
        + jj * math.log(alpha) + (ll - jj) * math.log1p(-alpha)
    )
    return np.where(valid, out, -np.inf)


def binomial_tail_matrix(n: int, alpha: float) -> np.ndarray:
    """``T[l, m] = P(B_l >= m)`` for ``0 <= l, m <= n`` (upper-right entries 0)."""
    ls = np.arange(n + 1)[:, None]
    js = np.arange(n + 1)[None, :]
    pmf = np.exp(_log_binom_pmf(ls, js, alpha))
    # summing from the top keeps small tails accurate
    tail = np.cumsum(pmf[:, ::-1], axis=1)[:, ::-1]
    return np.minimum(tail, 1.0)


def build_weight_table(k: int, n: int, alpha: float) -> WeightTable:
    if not (0.0 < alpha < 1.0):
        raise ParameterError("alpha must lie in (0,1)")
    if k < 1:
        raise DomainError("k must be at least 1")
    if k > n:
        raise DomainError(f"k={k} exceeds n={n}")
    ls = np.arange(k - 1, n)
    js = np.arange(0, n + 1)
    pmf = np.exp(_log_binom_pmf(ls[:, None], js[None, :], alpha))
    tail = np.minimum(pmf[:, k - 1 :].sum(axis=1), 1.0)
    point = pmf[:, k - 1]
    if k == 1:
        tail = np.ones_like(tail)
    return WeightTable(k, n, alpha, tail, point)


def _reversed_increments(path: BrownianPath, n: int) -> np.ndarray:
    """Row ``l`` holds ``Z_{n-l}`` for ``l = 0..n-1``."""
    return leader_increments(path, n)[::-1]


def position_via_weights(k: int, n: int, path: BrownianPath, alpha: float):
    """``X_k(n) = sum_{l=k-1}^{n-1} P(B_l >= k-1) Z_{n-l}``."""
    table = build_weight_table(k, n, alpha)
    z = _reversed_increments(path, n)[k - 1 :]
    out = table.tail_weights @ z
    return out[0] if path.dims == 1 else out


def positions_via_weights(n: int, path: BrownianPath, alpha: float) -> CongaFrame:
    """All of ``X_1(n), ..., X_n(n)`` at once from the moving-average form."""
    T = binomial_tail_matrix(n - 1, alpha)  # T[l, k-1]
    z = _reversed_increments(path, n)
    return CongaFrame(n, T.T @ z)


def increment_via_weights(k: int, n: int, path: BrownianPath, alpha: float):
    """``X_{k+1}(n) - X_k(n) = -sum_{l>=k-1} P(B_l = k-1) Z_{n-l}``."""
    table = build_weight_table(k, n, alpha)
    z = _reversed_increments(path, n)[k - 1 :]
    out = -(table.point_weights @ z)
    return out[0] if path.dims == 1 else out


@dataclass(frozen=True, eq=False)
class InterpolatedFrame:
    """Piecewise-linear curve ``X(x, n)`` on ``[0, n]``.

    Knot ``j`` (``x = j``) carries ``X_{j+1}(n)``, so integer arguments line
    up with the smooth field ``u(k, n)``; the last knot ``x = n`` is the
    newly joined particle at the origin.  The derivative at an integer knot is
    the forward difference ``X(j+1) - X(j)``.
    """

    knots: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.knots.shape[0] - 1

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < 0) or np.any(x > self.n):
            raise DomainError("interpolated frame is defined on [0, n]")
        out = np.stack([np.interp(x, np.arange(self.n + 1), self.knots[:, d]) for d in range(self.knots.shape[1])], -1)
        if self.knots.shape[1] == 1:
            out = out[..., 0]
        return out[()] if np.ndim(out) == 0 else out

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        j = np.clip(np.floor(x).astype(int), 0, self.n - 1)
        out = self.knots[j + 1] - self.knots[j]
        if self.knots.shape[1] == 1:
            out = out[..., 0]
        return out[()] if np.ndim(out) == 0 else out


def interpolate_frame(frame: CongaFrame) -> InterpolatedFrame:
    if frame.time < 1:
        raise ParameterError("cannot interpolate an empty frame")
    knots = np.vstack([frame.positions, np.zeros((1, frame.dims))])
    return InterpolatedFrame(knots)


def write_frame_csv(frame: CongaFrame, path) -> None:
    """Write columns ``k, x[, y]`` with a header row (UTF-8, LF endings)."""
    names = ["k", "x", "y"][: frame.dims + 1]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for k in range(1, frame.time + 1):
            w.writerow([k] + [format(v, ".17g") for v in frame.positions[k - 1]])
