"""One inexact symmetric Gauss-Seidel cycle over a block quadratic.

The cycle minimizes theta(u_1) + 1/2 <u, H u> - <b, u> + 1/2 ||u - u^-||^2_sGS(H)
by a backward sweep over blocks s..2 followed by a forward sweep over 1..s.
Block solves may be inexact; the measured residuals (delta_tilde, delta) are
true subgradient certificates, and the assembled error vector d makes the
output the exact minimizer of the d-perturbed objective.
"""

from dataclasses import dataclass, field

import numpy as np

from . import blockops
from .blockops import BlockOperator, BlockVector, weighted_norm
from .errors import InnerSolverContractError
from .proxlib import ZeroFn


@dataclass
class QuadraticBlockObjective:
    """h(u) = 1/2 <u, Hu> - <b, u> plus a simple term theta on block 1."""

    H: BlockOperator
    b: np.ndarray
    theta1: object = None

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=float)
        if self.b.shape != (self.H.partition.total,):
            raise ValueError("rhs length does not match operator partition")
        if self.theta1 is None:
            self.theta1 = ZeroFn(self.H.partition.sizes[0])


@dataclass
class SweepResult:
    u_plus: BlockVector
    delta_tilde: BlockVector
    delta: BlockVector
    d: BlockVector
    skipped: set = field(default_factory=set)
    inner_iters: int = 0


def _direct_solver(H):
    def solve(i, rhs, warm):
        return H.diag_solve(i, rhs), 0
    return solve


def _block1_diag(H11, size):
    """Diagonal of H_11 when H_11 is (numerically) diagonal; else None."""
    off = H11 - np.diag(np.diag(H11))
    if np.abs(off).max(initial=0.0) > 1e-12 * (1.0 + np.abs(H11).max(initial=0.0)):
        return None
    return np.diag(H11).copy()


def sgs_cycle(obj, u_minus, inner_tol=0.0, skip_factor=0.0, solvers=None):
    """Run one backward+forward sweep; returns iterate, certificates, and d.

    ``solvers(i, rhs, warm) -> (u_i, iters)`` may replace the exact per-block
    solve to allow inexactness; residuals are measured against H_ii afterwards.
    With skip_factor > 0, a forward block solve is skipped when the candidate
    error delta_i = delta_tilde_i + sum_{j<i} H_ij^T (u+_j - u-_j) already
    satisfies ||delta_i|| <= skip_factor * inner_tol.
    """
    H = obj.H
    part = H.partition
    s = part.nblocks
    u0 = u_minus.data if isinstance(u_minus, BlockVector) else np.asarray(u_minus, float)
    solve = solvers if solvers is not None else _direct_solver(H)

    u_tilde = u0.copy()
    delta_tilde = np.zeros(part.total)
    inner_iters = 0

    def block_rhs(i, left, right):
        rhs = obj.b[part.block_slice(i)].copy()
        for j in range(i):
            rhs -= H.block(i, j) @ left[part.block_slice(j)]
        for j in range(i + 1, s):
            rhs -= H.block(i, j) @ right[part.block_slice(j)]
        return rhs

    # backward sweep i = s..2
    for i in range(s - 1, 0, -1):
        rhs = block_rhs(i, u0, u_tilde)
        sl = part.block_slice(i)
        ui, its = solve(i, rhs, u0[sl])
        inner_iters += its
        u_tilde[sl] = ui
        delta_tilde[sl] = H.block(i, i) @ ui - rhs
        if inner_tol > 0 and np.linalg.norm(delta_tilde[sl]) > inner_tol * (1 + 1e-9):
            raise InnerSolverContractError(
                "backward block %d residual %.3e exceeds tolerance %.3e"
                % (i, np.linalg.norm(delta_tilde[sl]), inner_tol)
            )

    u_plus = u_tilde.copy()
    delta = np.zeros(part.total)
    skipped = set()

    # forward step on block 1: proximal step in the H_11 metric
    sl1 = part.block_slice(0)
    rhs1 = block_rhs(0, u_plus, u_tilde)
    H11 = H.block(0, 0)
    if isinstance(obj.theta1, ZeroFn):
        u1, its = solve(0, rhs1, u0[sl1])
        inner_iters += its
        delta[sl1] = H11 @ u1 - rhs1
    else:
        diag = _block1_diag(H11, sl1.stop - sl1.start)
        if diag is None:
            from .errors import UnsupportedMetricError

            raise UnsupportedMetricError("block-1 metric must be diagonal for a nonsmooth term")
        u1 = obj.theta1.prox(rhs1 / diag, diag)
        # prox is exact: delta_1 = 0
    u_plus[sl1] = u1
    delta_tilde[sl1] = delta[sl1]

    # forward sweep i = 2..s with the skip rule
    for i in range(1, s):
        sl = part.block_slice(i)
        cand = delta_tilde[sl].copy()
        for j in range(i):
            slj = part.block_slice(j)
            cand += H.block(i, j) @ (u_plus[slj] - u0[slj])
        if skip_factor > 0 and np.linalg.norm(cand) <= skip_factor * inner_tol:
            delta[sl] = cand
            skipped.add(i)
            continue
        rhs = block_rhs(i, u_plus, u_tilde)
        ui, its = solve(i, rhs, u_tilde[sl])
        inner_iters += its
        u_plus[sl] = ui
        delta[sl] = H.block(i, i) @ ui - rhs
        if inner_tol > 0 and np.linalg.norm(delta[sl]) > inner_tol * (1 + 1e-9):
            raise InnerSolverContractError(
                "forward block %d residual %.3e exceeds tolerance %.3e"
                % (i, np.linalg.norm(delta[sl]), inner_tol)
            )

    dt = BlockVector(part, delta_tilde)
    dl = BlockVector(part, delta)
    d = assemble_error(dt, dl, H)
    return SweepResult(
        u_plus=BlockVector(part, u_plus),
        delta_tilde=dt,
        delta=dl,
        d=d,
        skipped=skipped,
        inner_iters=inner_iters,
    )


def assemble_error(delta_tilde, delta, H):
    """d = delta + H_u H_d^{-1} (delta - delta_tilde)."""
    part = H.partition
    dt = delta_tilde.data if isinstance(delta_tilde, BlockVector) else np.asarray(delta_tilde)
    dl = delta.data if isinstance(delta, BlockVector) else np.asarray(delta)
    sl1 = part.block_slice(0)
    if np.linalg.norm(dt[sl1] - dl[sl1]) > 1e-12 * (1 + np.linalg.norm(dl)):
        raise ValueError("first-block residuals of the two sweeps must coincide")
    diff = blockops.diag_solve_all(H, dl - dt)
    d = dl + blockops.apply_upper(H, diff)
    return BlockVector(part, d)


def error_bound(delta_tilde, delta, H):
    """Upper bound for ||H_hat^{-1/2} d(delta_tilde, delta)||.

    Equals ||H_d^{-1/2}(delta - delta_tilde)|| + ||H_d^{1/2}(H_d+H_u)^{-1} delta_tilde||.
    """
    dt = delta_tilde.data if isinstance(delta_tilde, BlockVector) else np.asarray(delta_tilde)
    dl = delta.data if isinstance(delta, BlockVector) else np.asarray(delta)
    diff = dl - dt
    t1 = np.sqrt(max(float(diff @ blockops.diag_solve_all(H, diff)), 0.0))
    y = blockops.upper_triangular_solve(H, dt)
    part = H.partition
    q = 0.0
    for i in range(part.nblocks):
        sl = part.block_slice(i)
        q += float(y[sl] @ (H.block(i, i) @ y[sl]))
    return t1 + np.sqrt(max(q, 0.0))
