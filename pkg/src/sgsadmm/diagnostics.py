"""Convergence diagnostics: the KKT-distance function and its trend.

D(w) sums the squared distances from zero to the two stationarity inclusions
plus the squared constraint residual.  The distances are exact for the
indicator-type nonsmooth terms used here (distance to a normal cone or to an
exposed face, via projections).
"""

import numpy as np


def kkt_distance(problem, state):
    """D(w) = dist^2(0, dp(x)+grad f(x)+A z) + dist^2(0, dq(y)+grad g(y)+B z)
    + ||Astar x + Bstar y - c||^2."""
    x, y, z = state.x, state.y, state.z
    gx = problem.grad_f(x) + problem.Astar.T @ z
    gy = problem.grad_g(y) + problem.Bstar.T @ z
    slx = problem.x_partition.block_slice(0)
    sly = problem.y_partition.block_slice(0)
    dfx = problem.p_spec.subdiff_dist(x[slx], gx[slx])
    dgy = problem.q_spec.subdiff_dist(y[sly], gy[sly])
    if np.isinf(dfx) or np.isinf(dgy):
        return np.inf
    restx = float(np.sum(np.delete(gx, np.arange(slx.start, slx.stop)) ** 2))
    resty = float(np.sum(np.delete(gy, np.arange(sly.start, sly.stop)) ** 2))
    r = problem.residual(x, y)
    return dfx**2 + restx + dgy**2 + resty + float(r @ r)


def complexity_trend(d_values):
    """Series k * min_{i<=k} D_i and a decrease check against the k/10 mark.

    Returns (series, decreasing) where ``decreasing`` reports whether the
    final value is at most the value one decade of iterations earlier.
    """
    d = np.asarray(d_values, dtype=float)
    if d.size == 0:
        raise ValueError("need at least one recorded value")
    running = np.minimum.accumulate(d)
    k = np.arange(1, d.size + 1)
    series = k * running
    if d.size < 10:
        return series, True
    ref = series[max(d.size // 10 - 1, 0)]
    return series, bool(series[-1] <= ref + 1e-15)
