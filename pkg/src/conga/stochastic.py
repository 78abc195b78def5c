"""Random streams and sampled Brownian paths.

Every stochastic quantity in the package is driven by a :class:`BrownianPath`,
a piecewise-linear interpolation of Brownian values on a uniform grid.  Paths
are built either from i.i.d. Gaussian increments or by the dyadic midpoint
(Levy) construction, from a stream derived deterministically from a
:class:`SeedSpec`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ParameterError

__all__ = [
    "SeedSpec",
    "make_stream",
    "BrownianPath",
    "build_path_increments",
    "build_path_levy",
    "levy_levels",
    "DyadicLevels",
    "reversed_value",
]

_UINT64_MAX = 2**64 - 1


@dataclass(frozen=True)
class SeedSpec:
    """Root seed plus a replica label; together they name one random stream."""

    root: int
    stream_index: int = 0

    def __post_init__(self):
        if not (0 <= int(self.root) <= _UINT64_MAX):
            raise ParameterError(f"root seed must be a 64-bit unsigned integer, got {self.root}")
        if int(self.stream_index) < 0:
            raise ParameterError(f"stream_index must be non-negative, got {self.stream_index}")

    def child(self, index: int) -> "SeedSpec":
        return SeedSpec(self.root, index)


def make_stream(seed: SeedSpec) -> np.random.Generator:
    """Return an independent, reproducible generator for ``seed``.

    The stream is a Philox counter-based generator keyed by numpy's
    ``SeedSequence`` hash of ``root`` with ``stream_index`` as spawn key, so
    replicas can be generated in any order and on any worker.
    """
    seq = np.random.SeedSequence(int(seed.root), spawn_key=(int(seed.stream_index),))
    return np.random.Generator(np.random.Philox(seq))


@dataclass(frozen=True, eq=False)
class BrownianPath:
    """Brownian values on the grid ``0, h, 2h, ...`` with linear interpolation.

    ``values`` has shape ``(npoints, dims)``.  Evaluation at times ``<= 0``
    returns 0; times past the last grid point (but within the horizon) hold the
    last value.
    """

    horizon: float
    grid_step: float
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if self.horizon <= 0 or self.grid_step <= 0:
            raise ParameterError("horizon and grid_step must be positive")
        expected = _grid_count(self.horizon, self.grid_step)
        if vals.shape[0] != expected:
            raise ParameterError(f"expected {expected} grid values, got {vals.shape[0]}")
        if np.any(vals[0] != 0.0):
            raise ParameterError("a Brownian path must start at 0")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def dims(self) -> int:
        return self.values.shape[1]

    @property
    def npoints(self) -> int:
        return self.values.shape[0]

    @property
    def grid(self) -> np.ndarray:
        return np.arange(self.npoints) * self.grid_step

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def evaluate(self, t) -> np.ndarray:
        """Interpolated values, shape ``np.shape(t) + (dims,)``."""
        t = np.asarray(t, dtype=float)
        if np.any(t > self.horizon * (1 + 1e-12) + 1e-12):
            raise ParameterError(
                f"path evaluated at time {float(np.max(t))} beyond horizon {self.horizon}"
            )
        pos = np.clip(t / self.grid_step, 0.0, self.npoints - 1)
        i = np.minimum(np.floor(pos).astype(np.int64), self.npoints - 2) if self.npoints > 1 else np.zeros(pos.shape, np.int64)
        if self.npoints == 1:
            return np.zeros(t.shape + (self.dims,))
        frac = (pos - i)[..., None]
        return self.values[i] * (1.0 - frac) + self.values[i + 1] * frac

    def __call__(self, t):
        out = self.evaluate(t)
        if self.dims == 1:
            out = out[..., 0]
        return out[()] if np.ndim(out) == 0 else out

    def component(self, d: int) -> "BrownianPath":
        return BrownianPath(self.horizon, self.grid_step, self.values[:, d])

    def rescaled(self, t: float) -> "BrownianPath":
        """The diffusive rescaling ``z -> t^{-1/2} W(t z)`` as a path on ``[0, horizon/t]``."""
        if t <= 0:
            raise ParameterError("rescaling time must be positive")
        return BrownianPath(self.horizon / t, self.grid_step / t, self.values / math.sqrt(t))

    def __add__(self, other: "BrownianPath") -> "BrownianPath":
        if self.grid_step != other.grid_step or self.values.shape != other.values.shape:
            raise ParameterError("paths must share a grid to be added")
        return BrownianPath(self.horizon, self.grid_step, self.values + other.values)

    def scaled(self, factor: float) -> "BrownianPath":
        return BrownianPath(self.horizon, self.grid_step, self.values * factor)


def _grid_count(horizon: float, grid_step: float) -> int:
    return int(math.floor(horizon / grid_step + 1e-9)) + 1


def path_from_function(func, horizon: float, grid_step: float) -> BrownianPath:
    """Deterministic path with values ``func(grid)``; used as a test double."""
    grid = np.arange(_grid_count(horizon, grid_step)) * grid_step
    vals = np.asarray(func(grid), dtype=float)
    if vals.ndim == 1:
        vals = vals[:, None]
    vals = vals - vals[0]
    return BrownianPath(horizon, grid_step, vals)


def build_path_increments(stream, horizon: float, grid_step: float, dims: int = 1) -> BrownianPath:
    """Cumulative sums of independent ``N(0, grid_step)`` increments."""
    if horizon <= 0 or grid_step <= 0:
        raise ParameterError("horizon and grid_step must be positive")
    if dims not in (1, 2):
        raise ParameterError("dims must be 1 or 2")
    n = _grid_count(horizon, grid_step) - 1
    incr = np.asarray(stream.standard_normal((n, dims)), dtype=float) * math.sqrt(grid_step)
    values = np.zeros((n + 1, dims))
    np.cumsum(incr, axis=0, out=values[1:])
    return BrownianPath(horizon, grid_step, values)


@dataclass(frozen=True, eq=False)
class DyadicLevels:
    """Gaussian coefficients of the dyadic construction up to ``depth``.

    ``coefficients[0]`` holds ``Z_1`` (shape ``(1, dims)``); for ``n >= 1``,
    ``coefficients[n]`` holds the ``2^{n-1}`` values ``Z_d`` attached to the
    odd dyadic points ``d = (2j+1)/2^n``.
    """

    depth: int
    coefficients: tuple

    @property
    def dims(self) -> int:
        return self.coefficients[0].shape[1]

    def level_function(self, n: int, depth: int | None = None) -> np.ndarray:
        """Values of ``F_n`` on the grid of spacing ``2^-depth`` (shape ``(2^depth+1, dims)``)."""
        depth = self.depth if depth is None else depth
        if n > depth:
            raise ParameterError("level exceeds evaluation depth")
        size = 2**depth + 1
        out = np.zeros((size, self.dims))
        xs = np.arange(size) / 2**depth
        if n == 0:
            out[:] = xs[:, None] * self.coefficients[0][0]
            return out
        # hat functions of half-width 2^-n centred at the odd points of level n
        peaks = 2.0 ** (-(n + 1) / 2) * self.coefficients[n]
        centre_idx = (2 * np.arange(2 ** (n - 1)) + 1) * 2 ** (depth - n)
        half = 2 ** (depth - n)
        offs = np.arange(-half, half + 1)
        tent = 1.0 - np.abs(offs) / half
        idx = centre_idx[:, None] + offs[None, :]
        np.add.at(out, idx.ravel(), (tent[None, :, None] * peaks[:, None, :]).reshape(-1, self.dims))
        return out

    def partial_sum(self, N: int | None = None) -> np.ndarray:
        """Values of ``W_N = F_0 + ... + F_N`` on the finest grid."""
        N = self.depth if N is None else N
        return sum(self.level_function(n) for n in range(N + 1))

    def level_slope(self, n: int) -> float:
        """Sup of ``|F_n'|``."""
        if n == 0:
            return float(np.max(np.abs(self.coefficients[0])))
        return float(2.0 ** ((n - 1) / 2) * np.max(np.abs(self.coefficients[n])))

    def n_star(self, c: float) -> int:
        """Smallest ``n0`` with ``max |Z_d| <= c sqrt(n)`` on every level ``n0 < n <= depth``."""
        n0 = self.depth
        for n in range(self.depth, 0, -1):
            if np.max(np.abs(self.coefficients[n])) <= c * math.sqrt(n):
                n0 = n - 1
            else:
                break
        return n0

    def lipschitz_bound(self, c: float, N: int | None = None) -> float:
        """``sum_{n<=N} 2 c sqrt(n) 2^{n/2}`` on levels above ``n_star(c)``.

        Levels at or below ``n_star(c)`` (finitely many almost surely) enter
        with their actual slope, since the Gaussian bound need not hold there.
        """
        N = self.depth if N is None else N
        ns = self.n_star(c)
        total = 0.0
        for n in range(N + 1):
            if n <= ns:
                total += self.level_slope(n)
            else:
                total += 2 * c * math.sqrt(n) * 2 ** (n / 2)
        return total

    def to_path(self, N: int | None = None) -> BrownianPath:
        return BrownianPath(1.0, 2.0 ** -self.depth, self.partial_sum(N))


def levy_levels(stream, depth: int, dims: int = 1) -> DyadicLevels:
    """Draw the dyadic coefficients level by level (coarse levels first)."""
    if depth < 0:
        raise ParameterError("depth must be non-negative")
    coeffs = [np.asarray(stream.standard_normal((1, dims)), dtype=float)]
    for n in range(1, depth + 1):
        coeffs.append(np.asarray(stream.standard_normal((2 ** (n - 1), dims)), dtype=float))
    return DyadicLevels(depth, tuple(coeffs))


def build_path_levy(stream, depth: int, dims: int = 1) -> BrownianPath:
    """Partial sum ``W_depth`` of the dyadic construction, sampled at spacing ``2^-depth``."""
    return levy_levels(stream, depth, dims).to_path()


def reversed_value(path: BrownianPath, t: float, z):
    """Time-reversed increment ``W(t) - W(t - z)`` for ``0 <= z <= t``."""
    z_arr = np.asarray(z, dtype=float)
    if np.any(z_arr < 0) or np.any(z_arr > t):
        raise DomainError(f"reversed view needs 0 <= z <= t (t={t})")
    if t > path.horizon * (1 + 1e-12):
        raise ParameterError(f"t={t} beyond path horizon {path.horizon}")
    return path(t) - path(t - z_arr)
