"""Convex quadratic SDP model, its dual block splitting, and KKT residuals.

The primal problem is

    min 1/2 <X, Q X> + <C, X>
    s.t. A_E X = b_E,  A_I X >= b_I,  X in S^n_+ and in a box N,

solved through its dual, written with a slack v and a diagonal scaling D = a*I:

    min  delta_N^*(-Z) + delta_+(v) + 1/2 <W, QW> + delta_PSD(S)
         - <b_E, y_E> - <b_I, y_I>
    s.t. Z - QW + S + A_E^* y_E + A_I^* y_I = C,   D(v - y_I) = 0.

The x-group is (Z, v | W) and the y-group is (S | y_E | y_I); the recovered
primal matrix X is the multiplier of the first constraint row.  All symmetric
matrices are carried in svec coordinates.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import subsolve
from .admm_core import TwoBlockProblem
from .blockops import BlockPartition
from .errors import IndefiniteOperatorError
from .proxlib import (
    IndicatorNonneg,
    IndicatorPSDCone,
    ProductSpec,
    SupportOfBox,
    ZeroFn,
    project_box,
    project_psd,
    smat,
    support_value,
    svec,
    svec_dim,
)


# -- the quadratic operator Q --------------------------------------------------

class QOperatorSpec:
    """Self-adjoint PSD operator on S^n: vacuous, explicit on svec
    coordinates, symmetrized Kronecker 1/2(AXB + BXA), or Lyapunov
    1/2(AX + XA).  The Kronecker/Lyapunov operands must be PSD for the
    induced operator to be PSD."""

    def __init__(self, kind, n, A=None, B=None, matrix=None):
        self.kind = kind
        self.n = n
        d = svec_dim(n)
        if kind == "vacuous":
            self.matrix = None
        elif kind == "explicit":
            self.matrix = np.asarray(matrix, dtype=float).reshape(d, d)
        elif kind in ("sym-kronecker", "lyapunov"):
            self.A = 0.5 * (np.asarray(A, dtype=float) + np.asarray(A, dtype=float).T)
            if kind == "sym-kronecker":
                self.B = 0.5 * (np.asarray(B, dtype=float) + np.asarray(B, dtype=float).T)
            self.matrix = self._densify()
        else:
            raise ValueError("unknown quadratic-operator kind %r" % kind)

    @property
    def vacuous(self):
        return self.kind == "vacuous"

    def apply_mat(self, X):
        X = np.asarray(X, dtype=float)
        if np.abs(X - X.T).max(initial=0.0) > 1e-12 * (1 + np.abs(X).max(initial=0.0)):
            raise ValueError("quadratic operator expects a symmetric matrix")
        if self.kind == "vacuous":
            return np.zeros_like(X)
        if self.kind == "explicit":
            return smat(self.matrix @ svec(X), self.n)
        if self.kind == "sym-kronecker":
            return 0.5 * (self.A @ X @ self.B + self.B @ X @ self.A)
        return 0.5 * (self.A @ X + X @ self.A)

    def _densify(self):
        d = svec_dim(self.n)
        out = np.empty((d, d))
        for j in range(d):
            e = np.zeros(d)
            e[j] = 1.0
            out[:, j] = svec(self.apply_mat(smat(e, self.n)))
        return 0.5 * (out + out.T)

    def spectral_norm(self):
        return 0.0 if self.vacuous else float(np.linalg.norm(self.matrix, 2))


def apply_Q(spec, X):
    return spec.apply_mat(X)


# -- problem container ---------------------------------------------------------

@dataclass
class QsdpProblem:
    n: int
    Q: QOperatorSpec
    C: np.ndarray
    A_E: np.ndarray  # m_E x svec_dim(n)
    b_E: np.ndarray
    A_I: np.ndarray  # m_I x svec_dim(n)
    b_I: np.ndarray
    box_lower: np.ndarray = None  # entrywise bounds on X; None, None = nonneg
    box_upper: np.ndarray = None

    def __post_init__(self):
        d = svec_dim(self.n)
        self.C = np.asarray(self.C, dtype=float).reshape(self.n, self.n)
        self.A_E = np.asarray(self.A_E, dtype=float).reshape(-1, d)
        self.b_E = np.asarray(self.b_E, dtype=float)
        self.A_I = np.asarray(self.A_I, dtype=float).reshape(-1, d)
        self.b_I = np.asarray(self.b_I, dtype=float)
        if self.A_E.shape[0] != self.b_E.size or self.A_I.shape[0] != self.b_I.size:
            raise ValueError("constraint row counts disagree with right-hand sides")

    @property
    def m_E(self):
        return self.A_E.shape[0]

    @property
    def m_I(self):
        return self.A_I.shape[0]

    def box_bounds_mat(self):
        if self.box_lower is None:
            return np.zeros((self.n, self.n)), np.full((self.n, self.n), np.inf)
        return np.asarray(self.box_lower, float), np.asarray(self.box_upper, float)

    def project_box(self, X):
        L, U = self.box_bounds_mat()
        return project_box(X, L, U)

    def box_support(self, M):
        """delta_N^*(M) for the box N."""
        L, U = self.box_bounds_mat()
        return support_value(L, U, M)


def svec_box_bounds(problem):
    """Entrywise matrix box mapped to svec coordinates (off-diag scaled)."""
    L, U = problem.box_bounds_mat()
    n = problem.n
    iu = np.triu_indices(n)
    scale = np.where(iu[0] == iu[1], 1.0, np.sqrt(2.0))
    return L[iu] * scale, U[iu] * scale


def scaling_matrix(A_I, tol=1e-6, maxit=5000):
    """Scaling constant a with D = a*I, a = sqrt(||A_I||)/2 (a=1 if empty)."""
    A_I = np.asarray(A_I, dtype=float)
    if A_I.size == 0:
        return 1.0
    G = A_I @ A_I.T
    rng = np.random.default_rng(0)
    v = rng.standard_normal(G.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(maxit):
        w = G @ v
        lam_new = float(np.linalg.norm(w))
        if lam_new == 0.0:
            return 1.0
        v = w / lam_new
        if abs(lam_new - lam) <= tol * lam_new:
            lam = lam_new
            break
        lam = lam_new
    opnorm = np.sqrt(lam)
    return float(np.sqrt(opnorm) / 2.0)


# -- dual block assembly -------------------------------------------------------

@dataclass
class DualAssembly:
    problem: QsdpProblem
    two_block: TwoBlockProblem
    alpha: float
    d: int  # svec dimension
    x_slices: dict
    y_slices: dict
    has_W: bool
    has_I: bool

    def state_to_iterate(self, state):
        p, d = self.problem, self.d
        Z = smat(state.x[self.x_slices["Z"]], p.n)
        v = state.x[self.x_slices["v"]] if self.has_I else np.zeros(0)
        W = smat(state.x[self.x_slices["W"]], p.n) if self.has_W else np.zeros((p.n, p.n))
        S = smat(state.y[self.y_slices["S"]], p.n)
        y_E = state.y[self.y_slices["y_E"]]
        y_I = state.y[self.y_slices["y_I"]] if self.has_I else np.zeros(0)
        X = smat(state.z[:d], p.n)
        u = state.z[d:]
        return DualIterate(Z=Z, v=v, W=W, S=S, y_E=y_E, y_I=y_I, X=X, u=u)

    def residual_fn(self, state):
        it = self.state_to_iterate(state)
        rep = kkt_residuals(self.problem, it)
        out = dict(rep.as_dict())
        r = self.two_block.residual(state.x, state.y)
        out["eta"] = rep.eta_qsdp
        out["primal_res"] = float(np.linalg.norm(r)) / (1.0 + np.linalg.norm(self.two_block.c))
        out["dual_res"] = max(rep.eta_P, rep.eta_W, rep.eta_I)
        return out


def build_dual_blocks(problem, sigma, l_precond=5, pcg_tol_floor=1e-12):
    """Assemble the two-group splitting of the dual for the outer solver."""
    n, d = problem.n, svec_dim(problem.n)
    m_E, m_I = problem.m_E, problem.m_I
    has_W = not problem.Q.vacuous
    has_I = m_I > 0
    alpha = scaling_matrix(problem.A_I) if has_I else 1.0
    Qmat = problem.Q.matrix if has_W else None

    # x-group: (Z, v) | W ; y-group: S | y_E | y_I
    x_sizes = [d + (m_I if has_I else 0)] + ([d] if has_W else [])
    y_sizes = [d, m_E] + ([m_I] if has_I else [])
    x_part = BlockPartition(tuple(x_sizes))
    y_part = BlockPartition(tuple(y_sizes))
    nx, ny = x_part.total, y_part.total
    nz = d + (m_I if has_I else 0)

    x_slices = {"Z": slice(0, d)}
    if has_I:
        x_slices["v"] = slice(d, d + m_I)
    if has_W:
        off = x_sizes[0]
        x_slices["W"] = slice(off, off + d)
    y_slices = {"S": slice(0, d), "y_E": slice(d, d + m_E)}
    if has_I:
        y_slices["y_I"] = slice(d + m_E, d + m_E + m_I)

    # constraint maps: row 1 in svec space, row 2 (if any) in R^{m_I}
    Astar = np.zeros((nz, nx))
    Astar[:d, x_slices["Z"]] = np.eye(d)
    if has_I:
        Astar[d:, x_slices["v"]] = alpha * np.eye(m_I)
    if has_W:
        Astar[:d, x_slices["W"]] = -Qmat
    Bstar = np.zeros((nz, ny))
    Bstar[:d, y_slices["S"]] = np.eye(d)
    Bstar[:d, y_slices["y_E"]] = problem.A_E.T
    if has_I:
        Bstar[:d, y_slices["y_I"]] = problem.A_I.T
        Bstar[d:, y_slices["y_I"]] = -alpha * np.eye(m_I)
    c = np.concatenate([svec(problem.C), np.zeros(m_I if has_I else 0)])

    # smooth parts: f = 1/2 <W, QW>, g = -<b_E, y_E> - <b_I, y_I>
    Sigma_hat_f = np.zeros((nx, nx))
    if has_W:
        Sigma_hat_f[x_slices["W"], x_slices["W"]] = Qmat

    def grad_f(x):
        g = np.zeros(nx)
        if has_W:
            g[x_slices["W"]] = Qmat @ x[x_slices["W"]]
        return g

    lin_g = np.zeros(ny)
    lin_g[y_slices["y_E"]] = -problem.b_E
    if has_I:
        lin_g[y_slices["y_I"]] = -problem.b_I

    def grad_g(y):
        return lin_g.copy()

    # nonsmooth first blocks
    Lb, Ub = svec_box_bounds(problem)
    z_spec = SupportOfBox(Lb, Ub)
    if has_I:
        p_spec = ProductSpec([z_spec, IndicatorNonneg(m_I)])
    else:
        p_spec = z_spec
    q_spec = IndicatorPSDCone(n)

    # semi-proximal terms: only the W block needs one (to keep its
    # subproblem exactly solvable when Q + sigma Q^2 is singular)
    S_tilde = [None] * x_part.nblocks
    W_prox = None
    if has_W:
        V_W = (Qmat + sigma * (Qmat @ Qmat)) / sigma
        lam_min = sla.eigvalsh(V_W)[0]
        if lam_min > 1e-10 * max(1.0, abs(sla.eigvalsh(V_W)[-1])):
            W_prox = subsolve.build_truncated_prox(V_W, l_precond, sigma)
            lam_cut = W_prox.lam_cut
            P = W_prox.P
            T_W = sigma * (lam_cut * np.eye(d) - V_W)
            if W_prox.l:
                T_W += (P * (sigma * (W_prox.lambdas[:-1] - lam_cut))) @ P.T
            S_tilde[1] = 0.5 * (T_W + T_W.T)
        else:
            delta = 1e-8 * max(1.0, float(np.linalg.norm(Qmat, 2)))
            S_tilde[1] = delta * np.eye(d)

    # y_I solved by warm-started PCG with the truncated-eigenvalue
    # preconditioner of sigma * (A_I A_I^* + alpha^2 I)
    y_solvers_builder = None
    if has_I:
        V_I = problem.A_I @ problem.A_I.T + alpha**2 * np.eye(m_I)
        precond = subsolve.build_truncated_prox(V_I, min(l_precond, m_I - 1), sigma)
        iI = y_part.nblocks - 1

        def y_solvers_builder(ops, sig, eps_k, _V=V_I, _iI=iI):
            Nt = ops.y.M_tilde
            A_blk = Nt.block(_iI, _iI)

            def solve(i, rhs, warm):
                if i != _iI:
                    return Nt.diag_solve(i, rhs), 0
                tol = max(eps_k / max(1.0, np.linalg.norm(rhs)), pcg_tol_floor)
                x, stats = subsolve.pcg_solve(
                    A_blk, rhs, precond.apply_inverse, tol=tol, x0=warm
                )
                return x, stats.iterations

            return solve

    # W solved by the closed-form inverse of its shifted operator
    x_solvers_builder = None
    if has_W and W_prox is not None:

        def x_solvers_builder(ops, sig, eps_k, _p=W_prox):
            Mt = ops.x.M_tilde

            def solve(i, rhs, warm):
                if i == 1:
                    return _p.apply_inverse(rhs), 0
                return Mt.diag_solve(i, rhs), 0

            return solve

    two_block = TwoBlockProblem(
        x_partition=x_part,
        y_partition=y_part,
        p_spec=p_spec,
        q_spec=q_spec,
        grad_f=grad_f,
        grad_g=grad_g,
        Sigma_hat_f=Sigma_hat_f,
        Sigma_hat_g=np.zeros((ny, ny)),
        Astar=Astar,
        Bstar=Bstar,
        c=c,
        Sigma_f=Sigma_hat_f,
        Sigma_g=np.zeros((ny, ny)),
        S_tilde=S_tilde,
        T_tilde=None,
        x_solvers_builder=x_solvers_builder,
        y_solvers_builder=y_solvers_builder,
        sigma_locked=has_W,
    )
    return DualAssembly(
        problem=problem,
        two_block=two_block,
        alpha=alpha,
        d=d,
        x_slices=x_slices,
        y_slices=y_slices,
        has_W=has_W,
        has_I=has_I,
    )


# -- KKT residuals -------------------------------------------------------------

@dataclass
class DualIterate:
    Z: np.ndarray
    v: np.ndarray
    W: np.ndarray
    S: np.ndarray
    y_E: np.ndarray
    y_I: np.ndarray
    X: np.ndarray
    u: np.ndarray


@dataclass
class ResidualReport:
    eta_D: float
    eta_X: float
    eta_Z: float
    eta_P: float
    eta_W: float
    eta_S: float
    eta_I: float
    eta_qsdp: float
    obj_primal: float
    obj_dual: float
    eta_gap: float

    def as_dict(self):
        return {
            "eta_D": self.eta_D,
            "eta_X": self.eta_X,
            "eta_Z": self.eta_Z,
            "eta_P": self.eta_P,
            "eta_W": self.eta_W,
            "eta_S": self.eta_S,
            "eta_I": self.eta_I,
            "eta_qsdp": self.eta_qsdp,
            "obj_primal": self.obj_primal,
            "obj_dual": self.obj_dual,
            "eta_gap": self.eta_gap,
        }


def kkt_residuals(problem, it):
    """Relative KKT residuals of a candidate primal-dual pair."""
    p = problem
    X, Z, W, S = it.X, it.Z, it.W, it.S
    fro = np.linalg.norm
    xs = svec(X)

    dres = (
        p.A_E.T @ it.y_E
        + (p.A_I.T @ it.y_I if p.m_I else 0.0)
        + svec(S)
        + svec(Z)
        - (svec(p.Q.apply_mat(W)) if not p.Q.vacuous else 0.0)
        - svec(p.C)
    )
    eta_D = fro(dres) / (1.0 + fro(svec(p.C)))
    eta_X = fro(X - p.project_box(X)) / (1.0 + fro(X))
    eta_Z = fro(X - p.project_box(X - Z)) / (1.0 + fro(X) + fro(Z))
    eta_P = fro(p.A_E @ xs - p.b_E) / (1.0 + fro(p.b_E)) if p.m_E else 0.0
    if p.Q.vacuous:
        eta_W = 0.0
    else:
        QX, QW = p.Q.apply_mat(X), p.Q.apply_mat(W)
        eta_W = fro(QX - QW) / (1.0 + p.Q.spectral_norm())
    Xp = project_psd(X)
    eta_S = max(
        fro(X - Xp) / (1.0 + fro(X)),
        abs(float(np.sum(X * S))) / (1.0 + fro(X) + fro(S)),
    )
    if p.m_I:
        rI = p.A_I @ xs - p.b_I
        eta_I = max(
            fro(np.minimum(0.0, it.y_I)) / (1.0 + fro(it.y_I)),
            fro(np.minimum(0.0, rI)) / (1.0 + fro(p.b_I)),
            abs(float(rI @ it.y_I)) / (1.0 + fro(rI) + fro(it.y_I)),
        )
    else:
        eta_I = 0.0

    obj_primal = 0.5 * float(np.sum(X * p.Q.apply_mat(X))) + float(np.sum(p.C * X))
    supp = p.box_support(-Z)
    if np.isinf(supp):
        obj_dual = -np.inf
    else:
        obj_dual = (
            -supp
            - 0.5 * float(np.sum(W * p.Q.apply_mat(W)))
            + float(p.b_E @ it.y_E)
            + (float(p.b_I @ it.y_I) if p.m_I else 0.0)
        )
    if np.isfinite(obj_dual):
        eta_gap = (obj_primal - obj_dual) / (1.0 + abs(obj_primal) + abs(obj_dual))
    else:
        eta_gap = np.inf
    eta_qsdp = max(eta_D, eta_X, eta_Z, eta_P, eta_W, eta_S, eta_I)
    return ResidualReport(
        eta_D, eta_X, eta_Z, eta_P, eta_W, eta_S, eta_I, eta_qsdp,
        obj_primal, obj_dual, eta_gap,
    )


# -- instance generators -------------------------------------------------------

def _pair_matrix(n, entries):
    """Symmetric n x n matrix from {(i, j): coeff} with symmetric fill-in."""
    A = np.zeros((n, n))
    for (i, j), val in entries.items():
        if i == j:
            A[i, i] += val
        else:
            A[i, j] += val / 2.0
            A[j, i] += val / 2.0
    return A


def generate_biq(Qbar, cvec, Qspec=None):
    """Doubly nonnegative SDP relaxation of binary quadratic programming.

    The lifted matrix is X = [[Xbar, x], [x^T, 1]] of order n; equalities fix
    diag(Xbar) = x and the corner X_nn = 1, and all triangle-type valid
    inequalities over pairs i < j are added.
    """
    Qbar = np.asarray(Qbar, dtype=float)
    Qbar = 0.5 * (Qbar + Qbar.T)
    nb = Qbar.shape[0]
    n = nb + 1
    if n < 3:
        raise ValueError("need a lifted order of at least 3")
    cvec = np.asarray(cvec, dtype=float).reshape(nb)
    if Qspec is None:
        Qspec = QOperatorSpec("vacuous", n)

    C = np.zeros((n, n))
    C[:nb, :nb] = 0.5 * Qbar
    C[:nb, n - 1] += 0.5 * cvec
    C[n - 1, :nb] += 0.5 * cvec

    rows_E, b_E = [], []
    for i in range(nb):
        rows_E.append(svec(_pair_matrix(n, {(i, i): 1.0, (i, n - 1): -1.0})))
        b_E.append(0.0)
    rows_E.append(svec(_pair_matrix(n, {(n - 1, n - 1): 1.0})))
    b_E.append(1.0)

    rows_I, b_I = [], []
    for i in range(nb):
        for j in range(i + 1, nb):
            rows_I.append(svec(_pair_matrix(n, {(i, n - 1): 1.0, (i, j): -1.0})))
            b_I.append(0.0)
            rows_I.append(svec(_pair_matrix(n, {(j, n - 1): 1.0, (i, j): -1.0})))
            b_I.append(0.0)
            rows_I.append(
                svec(_pair_matrix(n, {(i, j): 1.0, (i, n - 1): -1.0, (j, n - 1): -1.0}))
            )
            b_I.append(-1.0)

    return QsdpProblem(
        n=n,
        Q=Qspec,
        C=C,
        A_E=np.array(rows_E),
        b_E=np.array(b_E),
        A_I=np.array(rows_I) if rows_I else np.zeros((0, svec_dim(n))),
        b_I=np.array(b_I),
    )


def random_biq(n, seed=0, q_kind="vacuous", q_scale=0.2):
    """Random BIQ instance of lifted order n with an optional quadratic term."""
    rng = np.random.default_rng(seed)
    nb = n - 1
    Qbar = rng.standard_normal((nb, nb))
    Qbar = 0.5 * (Qbar + Qbar.T) * 10.0
    cvec = rng.standard_normal(nb) * 10.0
    if q_kind == "vacuous":
        spec = QOperatorSpec("vacuous", n)
    elif q_kind == "sym-kronecker":
        A = rng.standard_normal((n, n))
        A = q_scale * (A @ A.T) / n + q_scale * np.eye(n)
        B = rng.standard_normal((n, n))
        B = q_scale * (B @ B.T) / n + q_scale * np.eye(n)
        spec = QOperatorSpec("sym-kronecker", n, A=A, B=B)
    elif q_kind == "lyapunov":
        A = rng.standard_normal((n, n))
        A = q_scale * (A @ A.T) / n + q_scale * np.eye(n)
        spec = QOperatorSpec("lyapunov", n, A=A)
    elif q_kind == "explicit":
        d = svec_dim(n)
        G = rng.standard_normal((d, d))
        M = q_scale * (G @ G.T) / d + q_scale * np.eye(d)
        spec = QOperatorSpec("explicit", n, matrix=M)
    else:
        raise ValueError("unknown quadratic-operator kind %r" % q_kind)
    return generate_biq(Qbar, cvec, spec)
