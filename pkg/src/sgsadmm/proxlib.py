"""Proximal mappings and projections for the simple nonsmooth terms.

Every nonsmooth block in this package carries a scalar (or positive diagonal)
metric, so all proxes here are closed-form: projections for indicator
functions, and a Moreau-identity reduction for the support function of a box.
Each spec also evaluates the function, measures the distance from a vector to
the shifted subdifferential (used by the KKT distance diagnostic), and projects
onto its domain (used for initial points).

Symmetric matrices travel through the solver in svec coordinates: the upper
triangle stacked column by column with off-diagonal entries scaled by sqrt(2),
so Euclidean inner products of vectors equal trace inner products of matrices.
"""

import numpy as np
import scipy.linalg as sla

from .errors import UnsupportedMetricError

_SQRT2 = np.sqrt(2.0)


# -- symmetric-matrix vectorization --------------------------------------------

def svec_dim(n):
    return n * (n + 1) // 2


def svec(X):
    """Isometric vectorization of a symmetric matrix (upper triangle)."""
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    iu = np.triu_indices(n)
    scale = np.where(iu[0] == iu[1], 1.0, _SQRT2)
    return X[iu] * scale


def smat(v, n=None):
    """Inverse of svec."""
    v = np.asarray(v, dtype=float)
    if n is None:
        n = int(round((np.sqrt(8 * v.size + 1) - 1) / 2))
    X = np.zeros((n, n))
    iu = np.triu_indices(n)
    scale = np.where(iu[0] == iu[1], 1.0, 1.0 / _SQRT2)
    X[iu] = v * scale
    X = X + X.T
    X[np.diag_indices(n)] *= 0.5
    return X


# -- projections ---------------------------------------------------------------

def project_psd(X):
    """Project a symmetric matrix onto the positive semidefinite cone."""
    X = np.asarray(X, dtype=float)
    X = 0.5 * (X + X.T)
    lam, U = sla.eigh(X)
    if np.all(lam >= 0):
        return X
    pos = lam > 0
    if not np.any(pos):
        return np.zeros_like(X)
    Up = U[:, pos]
    return (Up * lam[pos]) @ Up.T


def project_box(X, L, U):
    """Entrywise clamp of X into [L, U]."""
    X = np.asarray(X, dtype=float)
    if np.any(np.asarray(L) > np.asarray(U)):
        raise ValueError("box lower bound exceeds upper bound")
    return np.minimum(np.maximum(X, L), U)


def _metric_vector(metric, size):
    m = np.asarray(metric, dtype=float)
    if m.ndim == 0:
        m = np.full(size, float(m))
    if m.shape != (size,) or np.any(m <= 0):
        raise UnsupportedMetricError("metric must be a positive scalar or positive diagonal")
    return m


def prox_metric(spec, metric, y):
    """argmin { spec(v) + 1/2 ||v - y||^2_M } for a scalar/diagonal metric M."""
    return spec.prox(np.asarray(y, dtype=float), metric)


def support_value(L, U, Z):
    """Support function of the box {L <= X <= U} evaluated at Z (entrywise).

    Infinite bounds are allowed; the supremum is +inf when Z pushes against a
    missing bound (beyond a small feasibility tolerance).
    """
    Z = np.asarray(Z, dtype=float)
    L = np.broadcast_to(np.asarray(L, dtype=float), Z.shape)
    U = np.broadcast_to(np.asarray(U, dtype=float), Z.shape)
    tol = 1e-12 * (1.0 + np.abs(Z).max(initial=0.0))
    hi = np.where(Z > 0, U, L)
    unbounded = (Z > tol) & np.isposinf(U) | (Z < -tol) & np.isneginf(L)
    if np.any(unbounded):
        return np.inf
    terms = Z * hi
    return float(np.sum(terms[np.isfinite(terms) & (np.abs(Z) > 0)]))


# -- simple-function specs -----------------------------------------------------

class ZeroFn:
    """The zero function; prox is the identity."""

    def __init__(self, size):
        self.size = size

    def value(self, x):
        return 0.0

    def prox(self, y, metric):
        _metric_vector(metric, self.size)
        return np.array(y, dtype=float)

    def subdiff_dist(self, x, g, tol=None):
        return float(np.linalg.norm(g))

    def project_domain(self, x):
        return np.array(x, dtype=float)


class IndicatorNonneg:
    """Indicator of the nonnegative orthant."""

    def __init__(self, size):
        self.size = size

    def value(self, x):
        tol = 1e-10 * (1.0 + np.linalg.norm(x))
        return 0.0 if np.all(np.asarray(x) >= -tol) else np.inf

    def prox(self, y, metric):
        _metric_vector(metric, self.size)
        return np.maximum(y, 0.0)

    def subdiff_dist(self, x, g, tol=None):
        # normal cone: component (-inf,0] where x_i is at the bound, {0} inside
        x = np.asarray(x, dtype=float)
        g = np.asarray(g, dtype=float)
        if tol is None:
            tol = 1e-8 * (1.0 + np.linalg.norm(x))
        active = x <= tol
        r = np.where(active, np.minimum(g, 0.0), g)
        return float(np.linalg.norm(r))

    def project_domain(self, x):
        return np.maximum(x, 0.0)


class IndicatorBox:
    """Indicator of the box {L <= x <= U} (bounds may be infinite)."""

    def __init__(self, lower, upper):
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        if self.lower.shape != self.upper.shape or np.any(self.lower > self.upper):
            raise ValueError("box bounds mismatched or inverted")
        self.size = self.lower.size

    def value(self, x):
        tol = 1e-10 * (1.0 + np.linalg.norm(x))
        inside = np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol)
        return 0.0 if inside else np.inf

    def prox(self, y, metric):
        _metric_vector(metric, self.size)
        return project_box(y, self.lower, self.upper)

    def subdiff_dist(self, x, g, tol=None):
        x = np.asarray(x, dtype=float)
        g = np.asarray(g, dtype=float)
        if tol is None:
            tol = 1e-8 * (1.0 + np.linalg.norm(x))
        at_lower = x <= self.lower + tol
        at_upper = x >= self.upper - tol
        r = g.copy()
        r[at_lower] = np.minimum(r[at_lower], 0.0)
        r[at_upper & ~at_lower] = np.maximum(r[at_upper & ~at_lower], 0.0)
        return float(np.linalg.norm(r))

    def project_domain(self, x):
        return project_box(x, self.lower, self.upper)


class IndicatorPSDCone:
    """Indicator of the PSD cone, acting on svec coordinates."""

    def __init__(self, n):
        self.n = n
        self.size = svec_dim(n)

    def value(self, x):
        X = smat(x, self.n)
        lam = sla.eigvalsh(X)
        tol = 1e-9 * (1.0 + abs(lam).max(initial=0.0))
        return 0.0 if lam.min(initial=0.0) >= -tol else np.inf

    def prox(self, y, metric):
        m = _metric_vector(metric, self.size)
        if np.ptp(m) > 1e-12 * m[0]:
            raise UnsupportedMetricError("PSD-cone prox needs a scalar metric")
        return svec(project_psd(smat(y, self.n)))

    def subdiff_dist(self, x, g, tol=None):
        # normal cone at X >= 0 in the eigenbasis: zero on the range of X,
        # negative semidefinite on its null space
        X = smat(x, self.n)
        G = smat(g, self.n)
        lam, U = sla.eigh(X)
        if tol is None:
            tol = 1e-8 * (1.0 + abs(lam).max(initial=0.0))
        Gt = U.T @ G @ U
        pos = lam > tol
        R = Gt.copy()
        free = ~pos
        if np.any(free):
            B = Gt[np.ix_(free, free)]
            R[np.ix_(free, free)] = B - project_psd(B)
        return float(np.linalg.norm(R))

    def project_domain(self, x):
        return svec(project_psd(smat(x, self.n)))


class SupportOfBox:
    """theta(x) = sup { <w, -x> : L <= w <= U }, the dual-side box term.

    Under a scalar metric m the prox follows from the Moreau identity:
    argmin { theta(v) + m/2 ||v - y||^2 } = y + (1/m) * clamp(-m y into [L,U]).
    """

    def __init__(self, lower, upper):
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        if self.lower.shape != self.upper.shape or np.any(self.lower > self.upper):
            raise ValueError("box bounds mismatched or inverted")
        self.size = self.lower.size

    def value(self, x):
        return support_value(self.lower, self.upper, -np.asarray(x, dtype=float))

    def prox(self, y, metric):
        m = _metric_vector(metric, self.size)
        if np.ptp(m) > 1e-12 * m[0]:
            raise UnsupportedMetricError("box-support prox needs a scalar metric")
        m = m[0]
        w = project_box(-m * y, self.lower, self.upper)
        return y + w / m

    def subdiff_dist(self, x, g, tol=None):
        # subdifferential is -(exposed face of the box at -x)
        x = np.asarray(x, dtype=float)
        g = np.asarray(g, dtype=float)
        if tol is None:
            tol = 1e-8 * (1.0 + np.linalg.norm(x))
        lo = np.broadcast_to(self.lower, x.shape)
        hi = np.broadcast_to(self.upper, x.shape)
        r = np.empty_like(g)
        for i in range(x.size):
            if -x[i] > tol:
                if np.isinf(hi[i]):
                    return np.inf
                face = (hi[i], hi[i])
            elif -x[i] < -tol:
                if np.isinf(lo[i]):
                    return np.inf
                face = (lo[i], lo[i])
            else:
                face = (lo[i], hi[i])
            # distance from g_i to the exposed-face interval
            a = face[0] if np.isfinite(face[0]) else -np.inf
            b = face[1] if np.isfinite(face[1]) else np.inf
            r[i] = 0.0 if a <= g[i] <= b else min(abs(g[i] - a), abs(g[i] - b))
        return float(np.linalg.norm(r))

    def project_domain(self, x):
        # dom theta: where a bound is missing, -x may not push against it
        out = np.array(x, dtype=float)
        hi = np.broadcast_to(self.upper, out.shape)
        lo = np.broadcast_to(self.lower, out.shape)
        out[np.isinf(hi) & (out < 0)] = 0.0
        out[np.isneginf(lo) & (out > 0)] = 0.0
        return out


class ProductSpec:
    """Concatenation of simple specs acting on consecutive slices."""

    def __init__(self, specs):
        self.specs = list(specs)
        self.size = sum(s.size for s in self.specs)
        self._slices = []
        off = 0
        for s in self.specs:
            self._slices.append(slice(off, off + s.size))
            off += s.size

    def value(self, x):
        return float(sum(s.value(x[sl]) for s, sl in zip(self.specs, self._slices)))

    def prox(self, y, metric):
        m = _metric_vector(metric, self.size)
        out = np.empty(self.size)
        for s, sl in zip(self.specs, self._slices):
            out[sl] = s.prox(np.asarray(y)[sl], m[sl])
        return out

    def subdiff_dist(self, x, g, tol=None):
        parts = [s.subdiff_dist(np.asarray(x)[sl], np.asarray(g)[sl], tol)
                 for s, sl in zip(self.specs, self._slices)]
        if any(np.isinf(p) for p in parts):
            return np.inf
        return float(np.sqrt(sum(p * p for p in parts)))

    def project_domain(self, x):
        out = np.empty(self.size)
        for s, sl in zip(self.specs, self._slices):
            out[sl] = s.project_domain(np.asarray(x)[sl])
        return out
