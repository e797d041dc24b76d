"""Inner solvers for the quadratic subproblems.

Three pieces: a truncated-eigenvalue proximal term T built from the top
eigenpairs of an SPD operator V (with the closed-form inverse of sigma*V + T,
which doubles as a PCG preconditioner), a preconditioned conjugate gradient
loop, and a cached Cholesky solver for normal equations.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import IndefiniteOperatorError


@dataclass
class CgStats:
    iterations: int
    residual: float
    converged: bool
    residual_history: list = None


class TruncatedEigProx:
    """Proximal term T = sigma * sum_{i>l} (lam_{l+1} - lam_i) P_i P_i^*.

    Built from the eigendecomposition of an SPD operator V (dense at this
    scale; the constructor signature leaves room for an iterative eigensolver
    later).  sigma*V + T = sigma * (sum_{i<=l} lam_i P_i P_i^* +
    lam_{l+1} (I - P P^T)), so its inverse is closed-form.
    """

    def __init__(self, l, lambdas, P, sigma, V=None):
        self.l = l
        self.lambdas = np.asarray(lambdas, dtype=float)  # length l+1, descending
        self.P = np.asarray(P, dtype=float)              # n x l orthonormal
        self.sigma = float(sigma)
        self._V = V
        if self.lambdas[-1] <= 0:
            raise IndefiniteOperatorError(
                "eigenvalue %d of the preconditioned operator is %.3e <= 0"
                % (l + 1, self.lambdas[-1])
            )

    @property
    def lam_cut(self):
        return self.lambdas[-1]

    def apply_T(self, x):
        """T x; needs the full operator V."""
        if self._V is None:
            raise ValueError("apply_T needs the operator V retained at build time")
        sig, lam = self.sigma, self.lam_cut
        Px = self.P.T @ x if self.l else np.zeros(0)
        # T = sigma * (lam_cut I - V) on span(P)^perp, 0 on span(P)
        top = self.P @ ((self.lambdas[:-1] - lam) * Px) if self.l else 0.0
        return sig * (lam * x - self._V @ x) + sig * top

    def apply_shifted(self, x):
        """(sigma*V + T) x without needing V explicitly."""
        sig, lam = self.sigma, self.lam_cut
        out = sig * lam * np.asarray(x, dtype=float)
        if self.l:
            Px = self.P.T @ x
            out += self.P @ (sig * (self.lambdas[:-1] - lam) * Px)
        return out

    def apply_inverse(self, x):
        """(sigma*V + T)^{-1} x in closed form."""
        sig, lam = self.sigma, self.lam_cut
        out = np.asarray(x, dtype=float) / (sig * lam)
        if self.l:
            Px = self.P.T @ x
            out += self.P @ ((1.0 / (sig * self.lambdas[:-1]) - 1.0 / (sig * lam)) * Px)
        return out


def build_truncated_prox(V, l, sigma, keep_operator=True):
    """Top-l truncated-eigenvalue proximal term for an SPD matrix V."""
    V = np.asarray(V, dtype=float)
    n = V.shape[0]
    l = min(int(l), n - 1)
    if l < 0 or sigma <= 0:
        raise ValueError("need l >= 0 and sigma > 0")
    lam, U = sla.eigh(V)
    lam = lam[::-1]
    U = U[:, ::-1]
    return TruncatedEigProx(
        l, lam[: l + 1], U[:, :l], sigma, V=V if keep_operator else None
    )


def pcg_solve(op, rhs, precond=None, tol=1e-10, maxit=None, x0=None):
    """Preconditioned CG for op @ x = rhs with op SPD.

    ``op`` and ``precond`` may be dense matrices or callables.  Stops when the
    plain residual norm drops below tol * max(1, ||rhs||).
    """
    rhs = np.asarray(rhs, dtype=float)
    n = rhs.size
    if maxit is None:
        maxit = 10 * n
    A = op if callable(op) else (lambda v, _M=np.asarray(op, float): _M @ v)
    if precond is None:
        M = lambda v: v
    else:
        M = precond if callable(precond) else (lambda v, _M=np.asarray(precond, float): _M @ v)

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = rhs - A(x)
    target = tol * max(1.0, np.linalg.norm(rhs))
    history = [float(np.linalg.norm(r))]
    if history[0] <= target:
        return x, CgStats(0, history[0], True, history)
    z = M(r)
    p = z.copy()
    rz = float(r @ z)
    for it in range(1, maxit + 1):
        Ap = A(p)
        pAp = float(p @ Ap)
        if pAp <= 0:
            raise IndefiniteOperatorError("CG breakdown: <p, Ap> = %.3e <= 0" % pAp)
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        rnorm = float(np.linalg.norm(r))
        history.append(rnorm)
        if rnorm <= target:
            return x, CgStats(it, rnorm, True, history)
        z = M(r)
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, CgStats(maxit, history[-1], False, history)


class NormalEquationSolver:
    """Cached Cholesky solver for systems with a fixed SPD Gram matrix."""

    def __init__(self, gram):
        gram = np.asarray(gram, dtype=float)
        try:
            self._factor = sla.cho_factor(gram, lower=True)
        except sla.LinAlgError:
            deps = _dependent_rows(gram)
            raise ValueError(
                "Gram matrix is not positive definite; dependent rows: %s" % deps
            )
        self.n = gram.shape[0]

    def solve(self, rhs):
        return sla.cho_solve(self._factor, np.asarray(rhs, dtype=float))


def _dependent_rows(gram, rtol=1e-10):
    lam, U = sla.eigh(np.asarray(gram, dtype=float))
    bad = lam <= rtol * max(lam.max(initial=0.0), 1.0)
    rows = set()
    for j in np.nonzero(bad)[0]:
        rows.add(int(np.argmax(np.abs(U[:, j]))))
    return sorted(rows)


def solve_normal_equations(solver, rhs):
    return solver.solve(rhs)
