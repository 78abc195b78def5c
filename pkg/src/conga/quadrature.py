"""Composite Gauss-Legendre rules aligned with the kinks of a sampled path.

A piecewise-linear path has derivative jumps at its grid points, so panels
never straddle a grid point; inside a panel the integrand is smooth and a
low-order Gauss rule is essentially exact.  Many integration windows (one per
evaluation point) are processed as one ragged batch.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

GAUSS_ORDER = 3


@lru_cache(maxsize=8)
def gauss_legendre(order: int):
    nodes, weights = np.polynomial.legendre.leggauss(order)
    return nodes, weights


def ragged_arange(counts: np.ndarray):
    """For counts ``[2, 3]`` return group ids ``[0,0,1,1,1]`` and offsets ``[0,1,0,1,2]``."""
    counts = np.asarray(counts, dtype=np.int64)
    group = np.repeat(np.arange(counts.size), counts)
    starts = np.cumsum(counts) - counts
    offset = np.arange(group.size) - starts[group]
    return group, offset


def panel_rule(lo, hi, n_panels, kink_origin=0.0, kink_step=None, refine=1, order=GAUSS_ORDER):
    """Nodes, weights and group ids for windows ``[lo_g, hi_g]``.

    Each window is cut at the kinks ``kink_origin + j*kink_step`` and every
    resulting cell is split so no panel is wider than ``(hi-lo)/n_panels``;
    ``refine`` multiplies the number of panels per cell.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    G = lo.size
    width = hi - lo
    target = width / n_panels
    if kink_step is None or not math.isfinite(kink_step):
        j0 = np.zeros(G, dtype=np.int64)
        ncell = np.ones(G, dtype=np.int64)
        cellw = width
        kstep = 0.0
    else:
        kstep = float(kink_step)
        j0 = np.ceil((lo - kink_origin) / kstep + 1e-9).astype(np.int64)
        j1 = np.floor((hi - kink_origin) / kstep - 1e-9).astype(np.int64)
        ncell = np.maximum(j1 - j0 + 1, 0) + 1
        cellw = np.minimum(kstep, width)
    egrp, epos = ragged_arange(ncell + 1)
    edges = kink_origin + (j0[egrp] + epos - 1) * kstep
    edges = np.where(epos == 0, lo[egrp], edges)
    edges = np.where(epos == ncell[egrp], hi[egrp], edges)
    left_idx = np.nonzero(epos < ncell[egrp])[0]
    cl = edges[left_idx]
    cr = edges[left_idx + 1]
    cgrp = egrp[left_idx]
    sub = refine * np.maximum(1, np.ceil(cellw / target - 1e-9)).astype(np.int64)
    pc, pr = ragged_arange(sub[cgrp])
    ns = sub[cgrp][pc]
    a = cl[pc] + (cr[pc] - cl[pc]) * pr / ns
    b = cl[pc] + (cr[pc] - cl[pc]) * (pr + 1) / ns
    xi, wi = gauss_legendre(order)
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    nodes = (mid[:, None] + half[:, None] * xi[None, :]).ravel()
    weights = (half[:, None] * wi[None, :]).ravel()
    groups = np.repeat(cgrp[pc], order)
    return nodes, weights, groups


def grouped_sum(groups: np.ndarray, values: np.ndarray, ngroups: int) -> np.ndarray:
    """Sum ``values`` (shape ``(N, ...)``) by group id, returning ``(ngroups, ...)``."""
    flat = values.reshape(values.shape[0], -1)
    out = np.empty((ngroups, flat.shape[1]))
    for j in range(flat.shape[1]):
        out[:, j] = np.bincount(groups, weights=flat[:, j], minlength=ngroups)
    return out.reshape((ngroups,) + values.shape[1:])
