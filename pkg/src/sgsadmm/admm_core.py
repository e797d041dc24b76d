"""Outer ADMM loops for two-group convex composite problems.

Two algorithms share the machinery here.  The reference method treats each
group (x and y) as a single proximal subproblem under operators M and N and
requires a certified approximate minimizer.  The main method replaces each
group solve with one symmetric Gauss-Seidel cycle over the group's blocks,
which is equivalent to the reference method under the specially constructed
proximal metric S_hat = Diag(S_tilde_i) + sGS(M_tilde).

The problem data is the two-group form

    min p(x_1) + f(x) + q(y_1) + g(y) s.t. Astar x + Bstar y = c,

with f, g convex quadratic (given by gradient callables and majorization
matrices), and p, q simple functions on the first block of each group.
"""

import time
from dataclasses import dataclass, field
from itertools import product as _iterproduct

import numpy as np
import scipy.linalg as sla

from . import blockops, sgs_cycle
from .blockops import BlockOperator, BlockPartition, BlockVector
from .errors import (
    CertificateError,
    DivergenceError,
    SingularBlockError,
    UnsupportedMetricError,
)
from .proxlib import IndicatorBox, IndicatorNonneg, ProductSpec, ZeroFn

GOLDEN = (1.0 + np.sqrt(5.0)) / 2.0


# -- step-length constants -----------------------------------------------------

@dataclass(frozen=True)
class StepConstants:
    tau: float
    alpha: float
    alpha_hat: float
    beta: float


def steplength_constants(tau):
    """Constants alpha, alpha_hat, beta controlling the contraction estimates."""
    if not 0.0 < tau < GOLDEN:
        raise ValueError("step-length must lie in (0, (1+sqrt(5))/2)")
    alpha = (1.0 + tau / min(1.0 + tau, 1.0 + 1.0 / tau)) / 2.0
    alpha_hat = 1.0 - alpha * min(tau, 1.0 / tau)
    beta = min(1.0, 1.0 - tau + 1.0 / tau) * alpha - (1.0 - alpha) * tau
    assert beta > 0, "beta must be positive inside the admissible tau range"
    return StepConstants(tau, alpha, alpha_hat, beta)


# -- problem and configuration -------------------------------------------------

@dataclass
class TwoBlockProblem:
    """Data of the two-group problem; see the module docstring.

    Astar and Bstar are the dense matrices of the constraint maps into the
    multiplier space, i.e. the constraint reads Astar @ x + Bstar @ y = c.
    """

    x_partition: BlockPartition
    y_partition: BlockPartition
    p_spec: object
    q_spec: object
    grad_f: object
    grad_g: object
    Sigma_hat_f: np.ndarray
    Sigma_hat_g: np.ndarray
    Astar: np.ndarray
    Bstar: np.ndarray
    c: np.ndarray
    Sigma_f: np.ndarray = None
    Sigma_g: np.ndarray = None
    S_tilde: list = None
    T_tilde: list = None
    x_solvers_builder: object = None
    y_solvers_builder: object = None
    # set when a block solver or semi-proximal term bakes the penalty in,
    # which makes runtime penalty changes unsound without a full reassembly
    sigma_locked: bool = False

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        nx, ny, nz = self.x_partition.total, self.y_partition.total, self.c.size
        self.Astar = np.asarray(self.Astar, dtype=float).reshape(nz, nx)
        self.Bstar = np.asarray(self.Bstar, dtype=float).reshape(nz, ny)
        self.Sigma_hat_f = np.asarray(self.Sigma_hat_f, dtype=float).reshape(nx, nx)
        self.Sigma_hat_g = np.asarray(self.Sigma_hat_g, dtype=float).reshape(ny, ny)
        if self.p_spec is None:
            self.p_spec = ZeroFn(self.x_partition.sizes[0])
        if self.q_spec is None:
            self.q_spec = ZeroFn(self.y_partition.sizes[0])

    def residual(self, x, y):
        return self.Astar @ x + self.Bstar @ y - self.c


@dataclass
class SolverConfig:
    sigma: float = 1.0
    tau: float = 1.618
    tol: float = 1e-6
    max_iter: int = 25000
    eps0: float = None
    eps_schedule: object = None
    skip_factor: float = 1.0
    sigma_adapt: bool = False
    sigma_adapt_ratio: float = 5.0
    sigma_adapt_factor: float = 1.25
    sigma_adapt_patience: int = 50
    allow_large_tau: bool = False
    check_interval: int = 1

    def validate(self):
        if self.tol <= 0 or self.sigma <= 0 or self.max_iter < 0:
            raise ValueError("tol, sigma must be positive and max_iter nonnegative")
        if not self.allow_large_tau and not 0.0 < self.tau < GOLDEN:
            raise ValueError("step-length outside (0, (1+sqrt(5))/2) needs the unsafe flag")
        if self.allow_large_tau and not 0.0 < self.tau <= 1.95:
            raise ValueError("step-length must lie in (0, 1.95] even with the unsafe flag")

    def eps_tilde(self, k, c_norm):
        if self.eps_schedule is not None:
            return float(self.eps_schedule(k))
        eps0 = self.eps0 if self.eps0 is not None else 1e-3 * (1.0 + c_norm)
        return eps0 * min(1.0, 1.0 / max(k, 1) ** 1.2)


@dataclass
class IterateState:
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    k: int = 0

    def copy(self):
        return IterateState(self.x.copy(), self.y.copy(), self.z.copy(), self.k)


# -- operator assembly ---------------------------------------------------------

@dataclass
class SideOperators:
    """Operators of one group: M_tilde and the derived sGS quantities."""

    M_tilde: BlockOperator
    M_hat: np.ndarray
    M_hat_factor: object
    S_hat: np.ndarray
    kappa: float

    def hat_half_inv_norm(self, d):
        """|| M_hat^{-1/2} d || computed through the cached factorization."""
        d = np.asarray(d, dtype=float)
        return float(np.sqrt(max(d @ sla.cho_solve(self.M_hat_factor, d), 0.0)))


def build_sgs_proximal(Sigma_hat, Astar, sigma, S_tilde, partition):
    """Assemble M_tilde = Sigma_hat + sigma A A^* + Diag(S_tilde) and friends."""
    n = partition.total
    M = np.asarray(Sigma_hat, dtype=float) + sigma * (Astar.T @ Astar)
    D_S = np.zeros((n, n))
    if S_tilde is not None:
        for i, Si in enumerate(S_tilde):
            if Si is None:
                continue
            sl = partition.block_slice(i)
            D_S[sl, sl] = Si
    M = M + D_S
    M_tilde = BlockOperator.from_matrix(partition, M, psd=True)
    for i in range(partition.nblocks):
        M_tilde.diag_factor(i)  # raises SingularBlockError naming the block
    sgs_mat = blockops.sgs_matrix(M_tilde)
    M_hat = M + sgs_mat
    S_hat = D_S + sgs_mat
    try:
        factor = sla.cho_factor(0.5 * (M_hat + M_hat.T), lower=True)
    except sla.LinAlgError as exc:
        raise SingularBlockError(-1, "combined operator not positive definite: %s" % exc)
    return SideOperators(M_tilde, M_hat, factor, S_hat, kappa_constants(M_tilde))


def kappa_constants(M_tilde):
    """Certificate constant kappa for the assembled group operator."""
    part = M_tilde.partition
    m = part.nblocks
    Md = np.zeros((part.total, part.total))
    for i in range(m):
        sl = part.block_slice(i)
        Md[sl, sl] = M_tilde.block(i, i)
    lam_min = sla.eigvalsh(Md)[0]
    term1 = 2.0 * np.sqrt(max(m - 1, 0)) / np.sqrt(lam_min)
    lam, U = sla.eigh(Md)
    Md_half = (U * np.sqrt(lam)) @ U.T
    lower = Md + M_tilde.upper_matrix()
    K = Md_half @ np.linalg.inv(lower)
    term2 = np.sqrt(m) * np.linalg.norm(K, 2)
    return term1 + term2


@dataclass
class Operators:
    x: SideOperators
    y: SideOperators
    sigma: float


def make_operators(problem, sigma):
    return Operators(
        x=build_sgs_proximal(
            problem.Sigma_hat_f, problem.Astar, sigma, problem.S_tilde, problem.x_partition
        ),
        y=build_sgs_proximal(
            problem.Sigma_hat_g, problem.Bstar, sigma, problem.T_tilde, problem.y_partition
        ),
        sigma=sigma,
    )


# -- exact composite minimizer (reference algorithm and fixtures) --------------

def exact_composite_minimizer(spec, M, l, block1_size):
    """argmin { spec(u_1) + 1/2 <u, Mu> - <l, u> } for simple block-1 terms.

    Zero term: dense solve.  Nonnegativity or box on block 1: active-set
    enumeration over the bound pattern (exponential in block-1 size; meant for
    desk-scale reference runs and fixtures only).
    """
    M = np.asarray(M, dtype=float)
    l = np.asarray(l, dtype=float)
    if isinstance(spec, ZeroFn):
        return np.linalg.solve(M, l)
    if isinstance(spec, IndicatorNonneg):
        lower = np.zeros(block1_size)
        upper = np.full(block1_size, np.inf)
    elif isinstance(spec, IndicatorBox):
        lower, upper = spec.lower, spec.upper
    else:
        raise UnsupportedMetricError(
            "no exact minimizer recipe for %s under a coupled metric" % type(spec).__name__
        )
    n = M.shape[0]
    best = None
    # enumerate which block-1 coordinates sit at which bound
    choices = []
    for i in range(block1_size):
        opts = ["free"]
        if np.isfinite(lower[i]):
            opts.append("lo")
        if np.isfinite(upper[i]):
            opts.append("hi")
        choices.append(opts)
    for pattern in _iterproduct(*choices):
        fixed_idx = [i for i, p in enumerate(pattern) if p != "free"]
        fixed_val = np.array(
            [lower[i] if pattern[i] == "lo" else upper[i] for i in fixed_idx]
        )
        free = np.setdiff1d(np.arange(n), fixed_idx)
        u = np.zeros(n)
        if fixed_idx:
            u[fixed_idx] = fixed_val
        rhs = l[free] - M[np.ix_(free, fixed_idx)] @ fixed_val if fixed_idx else l
        u[free] = np.linalg.solve(M[np.ix_(free, free)], rhs)
        g = M @ u - l
        tol = 1e-9 * (1.0 + np.linalg.norm(l))
        ok = True
        for i in range(block1_size):
            if pattern[i] == "free":
                ok &= lower[i] - tol <= u[i] <= upper[i] + tol and abs(g[i]) <= tol * 10
            elif pattern[i] == "lo":
                ok &= g[i] >= -tol
            else:
                ok &= g[i] <= tol
        if ok:
            obj = 0.5 * u @ (M @ u) - l @ u
            if best is None or obj < best[0] - 1e-15:
                best = (obj, u)
    if best is None:
        raise RuntimeError("active-set enumeration found no KKT-consistent pattern")
    return best[1]


# -- single steps --------------------------------------------------------------

def ims_step(problem, M, N, state, config, inner_x=None, inner_y=None):
    """One step of the reference two-group method with operators M, N.

    ``inner_x(M, l) -> (x_new, d_x)`` may supply an inexact minimizer with its
    subgradient certificate; the default is the exact composite minimizer
    (d = 0).
    """
    sigma, tau = config.sigma, config.tau
    x, y, z = state.x, state.y, state.z
    r = problem.residual(x, y)
    gx = problem.grad_f(x)
    l_x = M @ x - (gx + problem.Astar.T @ z + sigma * problem.Astar.T @ r)
    if inner_x is None:
        x_new = exact_composite_minimizer(problem.p_spec, M, l_x, problem.x_partition.sizes[0])
        d_x = np.zeros_like(x)
    else:
        x_new, d_x = inner_x(M, l_x)
    r_mid = problem.residual(x_new, y)
    gy = problem.grad_g(y)
    l_y = N @ y - (gy + problem.Bstar.T @ z + sigma * problem.Bstar.T @ r_mid)
    if inner_y is None:
        y_new = exact_composite_minimizer(problem.q_spec, N, l_y, problem.y_partition.sizes[0])
        d_y = np.zeros_like(y)
    else:
        y_new, d_y = inner_y(N, l_y)
    r_new = problem.residual(x_new, y_new)
    z_new = z + tau * sigma * r_new
    return IterateState(x_new, y_new, z_new, state.k + 1), d_x, d_y


@dataclass
class StepInfo:
    d_x: np.ndarray
    d_y: np.ndarray
    dx_cert: float
    dy_cert: float
    eps_k: float
    skipped: int
    inner_iters: int


def sgs_step(problem, ops, state, config, eps_k):
    """One step of the main method: one sGS cycle per group, then the
    multiplier update.  Returns the new state and the error certificates."""
    sigma, tau = ops.sigma, config.tau
    x, y, z = state.x, state.y, state.z
    r = problem.residual(x, y)

    # x-group cycle
    Mt = ops.x.M_tilde
    l_x = Mt.apply(x) - (
        problem.grad_f(x) + problem.Astar.T @ z + sigma * problem.Astar.T @ r
    )
    solvers = None
    if problem.x_solvers_builder is not None:
        solvers = problem.x_solvers_builder(ops, sigma, eps_k)
    obj_x = sgs_cycle.QuadraticBlockObjective(Mt, l_x, problem.p_spec)
    res_x = sgs_cycle.sgs_cycle(
        obj_x,
        BlockVector(problem.x_partition, x),
        inner_tol=eps_k,
        skip_factor=config.skip_factor,
        solvers=solvers,
    )
    x_new = res_x.u_plus.data
    dx_cert = ops.x.hat_half_inv_norm(res_x.d.data)

    # y-group cycle
    Nt = ops.y.M_tilde
    r_mid = problem.residual(x_new, y)
    l_y = Nt.apply(y) - (
        problem.grad_g(y) + problem.Bstar.T @ z + sigma * problem.Bstar.T @ r_mid
    )
    solvers = None
    if problem.y_solvers_builder is not None:
        solvers = problem.y_solvers_builder(ops, sigma, eps_k)
    obj_y = sgs_cycle.QuadraticBlockObjective(Nt, l_y, problem.q_spec)
    res_y = sgs_cycle.sgs_cycle(
        obj_y,
        BlockVector(problem.y_partition, y),
        inner_tol=eps_k,
        skip_factor=config.skip_factor,
        solvers=solvers,
    )
    y_new = res_y.u_plus.data
    dy_cert = ops.y.hat_half_inv_norm(res_y.d.data)

    # certificate audit with a small absolute slack for exact-solve roundoff
    slack = 1e-9 * (1.0 + np.linalg.norm(l_x) + np.linalg.norm(l_y))
    if dx_cert > ops.x.kappa * eps_k + slack or dy_cert > ops.y.kappa * eps_k + slack:
        raise CertificateError(
            "iteration %d: certificates (%.3e, %.3e) exceed bounds (%.3e, %.3e)"
            % (state.k, dx_cert, dy_cert, ops.x.kappa * eps_k, ops.y.kappa * eps_k)
        )

    z_new = z + tau * sigma * problem.residual(x_new, y_new)
    info = StepInfo(
        d_x=res_x.d.data,
        d_y=res_y.d.data,
        dx_cert=dx_cert,
        dy_cert=dy_cert,
        eps_k=eps_k,
        skipped=len(res_x.skipped) + len(res_y.skipped),
        inner_iters=res_x.inner_iters + res_y.inner_iters,
    )
    return IterateState(x_new, y_new, z_new, state.k + 1), info


# -- feasibility check of the convergence hypotheses ---------------------------

def check_fg_pd(problem, config, nprobe=100, rng=None):
    """Probe positive definiteness of the two convergence operators F and G."""
    rng = np.random.default_rng(0) if rng is None else rng
    consts = steplength_constants(min(config.tau, GOLDEN - 1e-9))
    sigma, tau, alpha = config.sigma, consts.tau, consts.alpha
    Sf = problem.Sigma_f if problem.Sigma_f is not None else np.zeros_like(problem.Sigma_hat_f)
    Sg = problem.Sigma_g if problem.Sigma_g is not None else np.zeros_like(problem.Sigma_hat_g)
    ops = make_operators(problem, sigma)
    F = 0.5 * Sf + ops.x.S_hat + 0.5 * (1 - alpha) * sigma * (problem.Astar.T @ problem.Astar)
    G = (
        0.5 * Sg
        + ops.y.S_hat
        + min(tau, 1 + tau - tau**2) * alpha * sigma * (problem.Bstar.T @ problem.Bstar)
    )
    def min_rayleigh(Op):
        best = np.inf
        for _ in range(nprobe):
            v = rng.standard_normal(Op.shape[0])
            v /= np.linalg.norm(v)
            best = min(best, float(v @ (Op @ v)))
        return best
    rf, rg = min_rayleigh(F), min_rayleigh(G)
    tol = 1e-12
    return consts, rf, rg, (rf > tol and rg > tol)


# -- outer loop ----------------------------------------------------------------

@dataclass
class IterationRecord:
    k: int
    residuals: dict
    eta: float
    Dw: float
    dx_cert: float
    dy_cert: float
    pcg_iters: int
    skipped: int
    sigma: float
    time_s: float


@dataclass
class SolveReport:
    converged: bool
    iterations: int
    state: IterateState
    records: list
    final_residuals: dict
    certificate_audit_pass: bool
    wall_time: float
    sigma_final: float


def solve(problem, config, residual_fn, log_sink=None, dw_fn=None):
    """Iterate the main method until residual_fn reports eta <= tol.

    ``residual_fn(state) -> dict`` must contain an 'eta' entry; optional
    'primal_res' and 'dual_res' entries drive the penalty adaptation.
    ``dw_fn(state) -> float`` optionally records the KKT-distance diagnostic.
    """
    config.validate()
    if config.sigma_adapt and problem.sigma_locked:
        raise ValueError(
            "this problem's block solvers are tied to a fixed penalty; "
            "rerun with sigma_adapt disabled or reassemble at the new sigma"
        )
    c_norm = float(np.linalg.norm(problem.c))
    state = initial_state(problem)
    sigma = config.sigma
    ops = make_operators(problem, sigma)
    records = []
    t0 = time.perf_counter()
    res = residual_fn(state)
    eta_hist = [res["eta"]]
    converged = res["eta"] <= config.tol
    ratio_streak = 0
    freeze_after = int(config.max_iter * 0.75)
    audit_pass = True

    k = 0
    while not converged and k < config.max_iter:
        eps_k = config.eps_tilde(k, c_norm)
        state, info = sgs_step(problem, ops, state, config, eps_k)
        k = state.k
        res = residual_fn(state)
        eta = res["eta"]
        eta_hist.append(eta)
        if len(eta_hist) > 1001:
            eta_hist.pop(0)
        if eta > 1e6 * eta_hist[0] and len(eta_hist) > 1000:
            raise DivergenceError(
                "residual grew from %.3e to %.3e over 1000 iterations" % (eta_hist[0], eta),
                state=state,
            )
        rec = IterationRecord(
            k=k,
            residuals=res,
            eta=eta,
            Dw=float(dw_fn(state)) if dw_fn is not None else np.nan,
            dx_cert=info.dx_cert,
            dy_cert=info.dy_cert,
            pcg_iters=info.inner_iters,
            skipped=info.skipped,
            sigma=sigma,
            time_s=time.perf_counter() - t0,
        )
        records.append(rec)
        if log_sink is not None:
            log_sink(rec)
        converged = eta <= config.tol

        # optional penalty adaptation, frozen near the end of the budget
        if config.sigma_adapt and not converged and k < freeze_after:
            pr, dr = res.get("primal_res"), res.get("dual_res")
            if pr is not None and dr is not None and dr > 0:
                ratio = pr / dr
                if ratio > config.sigma_adapt_ratio:
                    ratio_streak = ratio_streak + 1 if ratio_streak >= 0 else 1
                elif ratio < 1.0 / config.sigma_adapt_ratio:
                    ratio_streak = ratio_streak - 1 if ratio_streak <= 0 else -1
                else:
                    ratio_streak = 0
                if ratio_streak >= config.sigma_adapt_patience:
                    sigma *= config.sigma_adapt_factor
                    ops = make_operators(problem, sigma)
                    ratio_streak = 0
                elif ratio_streak <= -config.sigma_adapt_patience:
                    sigma /= config.sigma_adapt_factor
                    ops = make_operators(problem, sigma)
                    ratio_streak = 0

    return SolveReport(
        converged=converged,
        iterations=k,
        state=state,
        records=records,
        final_residuals=res,
        certificate_audit_pass=audit_pass,
        wall_time=time.perf_counter() - t0,
        sigma_final=sigma,
    )


def initial_state(problem):
    """Zero start, with the first block of each group projected into its domain."""
    x = np.zeros(problem.x_partition.total)
    y = np.zeros(problem.y_partition.total)
    sl = problem.x_partition.block_slice(0)
    x[sl] = problem.p_spec.project_domain(x[sl])
    sl = problem.y_partition.block_slice(0)
    y[sl] = problem.q_spec.project_domain(y[sl])
    return IterateState(x=x, y=y, z=np.zeros(problem.c.size))
