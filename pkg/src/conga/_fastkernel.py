"""Compiled loop for the scaled field against a sampled path.

Same rule as the batched numpy engine in :mod:`conga.quadrature` (cells cut at
path grid points, each split into ``ceil(cell/target) * refine`` Gauss panels),
fused into one pass so no node arrays are materialized.
"""

from __future__ import annotations

import math

import numba
import numpy as np

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@numba.njit(cache=True, fastmath=False)
def scaled_field_loop(xs, lo, hi, vals, h, kink_origin, orders, alpha, sig, n_panels, refine, gx, gw):
    nx = xs.shape[0]
    dims = vals.shape[1]
    npts = vals.shape[0]
    no = orders.shape[0]
    mmax = 0
    for o in range(no):
        if orders[o] > mmax:
            mmax = orders[o]
    out = np.zeros((no, nx, dims))
    he = np.empty(mmax + 2)
    q = gx.shape[0]
    for ix in range(nx):
        a = lo[ix]
        b = hi[ix]
        if b <= a:
            continue
        x = xs[ix]
        target = (b - a) / n_panels
        cellw = min(h, b - a)
        sub = int(math.ceil(cellw / target - 1e-9))
        if sub < 1:
            sub = 1
        sub *= refine
        j0 = int(math.ceil((a - kink_origin) / h + 1e-9))
        left = a
        j = j0
        done = False
        while not done:
            right = kink_origin + j * h
            if right >= b - 1e-15 * max(1.0, abs(b)):
                right = b
                done = True
            if right > left:
                pw = (right - left) / sub
                for p in range(sub):
                    pa = left + p * pw
                    mid = pa + 0.5 * pw
                    half = 0.5 * pw
                    for g in range(q):
                        s = mid + half * gx[g]
                        wt = half * gw[g]
                        # path value W(1 - s)
                        tau = 1.0 - s
                        if tau <= 0.0:
                            continue
                        pos = tau / h
                        i = int(math.floor(pos))
                        if i >= npts - 1:
                            i = npts - 2
                            frac = 1.0
                        else:
                            frac = pos - i
                        rs = math.sqrt(s)
                        ss = sig * rs
                        w = (x - alpha * s) / ss
                        phi = _INV_SQRT_2PI * math.exp(-0.5 * w * w)
                        if phi == 0.0:
                            continue
                        mass = (x + alpha * s) / (2.0 * sig * s * rs) * phi
                        he[0] = 1.0
                        if mmax >= 1:
                            he[1] = w
                        for n in range(1, mmax):
                            he[n + 1] = w * he[n] - n * he[n - 1]
                        for o in range(no):
                            m = orders[o]
                            if m == 0:
                                k = mass
                            else:
                                sign = -1.0 if m % 2 == 1 else 1.0
                                k = ss ** (-m) * (-sign * (m / (2.0 * s)) * he[m - 1] * phi + sign * mass * he[m])
                            kw = k * wt
                            for d in range(dims):
                                v = vals[i, d] * (1.0 - frac) + vals[i + 1, d] * frac
                                out[o, ix, d] += kw * v
            left = right
            j += 1
    return out
