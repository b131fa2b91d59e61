"""Quadrature and extrapolation helpers.

Composite Gauss-Legendre panels (with panel boundaries supplied by the caller
so integrands are smooth per panel), dyadic refinement ladders toward singular
endpoints, Richardson extrapolation at a measured convergence order, and the
log-log power-law fit used for blow-up exponents.
"""

from __future__ import annotations

import numpy as np
from scipy.special import roots_legendre


def gauss_panels(boundaries, n_nodes):
    """Nodes and weights of composite Gauss-Legendre over consecutive panels."""
    boundaries = np.asarray(boundaries, dtype=float)
    x0, w0 = roots_legendre(n_nodes)
    nodes, weights = [], []
    for a, b in zip(boundaries[:-1], boundaries[1:]):
        h = 0.5 * (b - a)
        nodes.append(0.5 * (a + b) + h * x0)
        weights.append(h * w0)
    return np.concatenate(nodes), np.concatenate(weights)


def split_points(lo, hi, interior, min_gap=1e-12):
    """Sorted panel boundaries [lo, …interior…, hi], deduplicated."""
    pts = [lo, hi]
    for p in interior:
        if lo + min_gap < p < hi - min_gap:
            pts.append(float(p))
    pts = sorted(pts)
    out = [pts[0]]
    for p in pts[1:]:
        if p - out[-1] > min_gap:
            out.append(p)
    if out[-1] != hi:
        out[-1] = hi
    return out


def cauchy_tail(seq):
    """Max norm of the last difference of a sequence of arrays."""
    if len(seq) < 2:
        return np.inf
    return float(np.max(np.abs(np.asarray(seq[-1]) - np.asarray(seq[-2]))))


def richardson_limit(seq, ratio=2.0):
    """Extrapolate lim of seq assuming seq_l = L - C * h_l^p with h halving.

    The order p is measured from the last three entries; falls back to the
    final entry when differences are already at rounding level.
    Returns (limit, fitted_order).
    """
    seq = [np.asarray(s) for s in seq]
    if len(seq) < 3:
        return seq[-1], np.nan
    d1 = np.max(np.abs(seq[-2] - seq[-3]))
    d2 = np.max(np.abs(seq[-1] - seq[-2]))
    if d2 <= 1e-15 * (1.0 + np.max(np.abs(seq[-1]))) or d1 <= d2:
        return seq[-1], np.nan
    p = np.log(d1 / d2) / np.log(ratio)
    factor = 1.0 / (ratio ** p - 1.0)
    return seq[-1] + (seq[-1] - seq[-2]) * factor, float(p)


def fit_power_law(x, y):
    """Least-squares slope of log y vs log x.  Returns (slope, intercept, r2)."""
    x = np.log(np.asarray(x, dtype=float))
    y = np.log(np.asarray(y, dtype=float))
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss_res = float(np.sum(resid ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return float(coef[0]), float(coef[1]), r2
