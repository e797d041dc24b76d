"""Directly extended multi-block semi-proximal ADMM baseline.

One exact Gauss-Seidel pass over the dual blocks (Z | W | S | y_E | y_I, with
W absent for linear SDP) followed by the multiplier update.  The inequality
multiplier y_I carries the proximal term lam_max*I - sigma*A_I A_I^* so its
nonnegativity-constrained subproblem has a scalar Hessian and a closed-form
clamp; W carries the truncated-eigenvalue term so its linear system has a
closed-form inverse.  No convergence guarantee is claimed for this method; it
exists for iteration-count comparisons.
"""

import time
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from . import subsolve
from .admm_core import IterationRecord, SolveReport
from .proxlib import IndicatorPSDCone, SupportOfBox, smat, svec, svec_dim
from .qsdp import DualIterate, kkt_residuals, svec_box_bounds


@dataclass
class BaselineState:
    zZ: np.ndarray
    w: np.ndarray
    s: np.ndarray
    yE: np.ndarray
    yI: np.ndarray
    xv: np.ndarray  # svec of the primal multiplier X
    k: int = 0


class DirectSpadmm:
    """Directly extended sPADMM on the no-slack dual of a conic QP."""

    def __init__(self, problem, sigma=1.0, tau=1.618, l_precond=5):
        self.problem = problem
        self.sigma = float(sigma)
        self.tau = float(tau)
        p = problem
        self.d = svec_dim(p.n)
        self.csv = svec(p.C)
        Lb, Ub = svec_box_bounds(p)
        self.z_spec = SupportOfBox(Lb, Ub)
        self.s_spec = IndicatorPSDCone(p.n)
        self.has_W = not p.Q.vacuous
        self.has_I = p.m_I > 0
        sigma = self.sigma
        if self.has_W:
            Qm = p.Q.matrix
            V_W = (Qm + sigma * (Qm @ Qm)) / sigma
            lam = sla.eigvalsh(V_W)
            if lam[0] > 1e-10 * max(1.0, lam[-1]):
                self.W_solver = subsolve.build_truncated_prox(V_W, l_precond, sigma)
                self.W_T = None
            else:
                delta = 1e-8 * max(1.0, float(np.linalg.norm(Qm, 2)))
                self.W_T = delta * np.eye(self.d)
                self.W_factor = sla.cho_factor(Qm + sigma * (Qm @ Qm) + self.W_T, lower=True)
                self.W_solver = None
        if p.m_E:
            self.E_solver = subsolve.NormalEquationSolver(p.A_E @ p.A_E.T)
        if self.has_I:
            G = p.A_I @ p.A_I.T
            self.lam_max = sigma * float(sla.eigvalsh(G)[-1])
            if self.lam_max <= 0:
                self.lam_max = sigma

    def initial_state(self):
        d, p = self.d, self.problem
        return BaselineState(
            zZ=self.z_spec.project_domain(np.zeros(d)),
            w=np.zeros(d),
            s=np.zeros(d),
            yE=np.zeros(p.m_E),
            yI=np.zeros(p.m_I),
            xv=np.zeros(d),
        )

    def _k_vec(self, st, skip=None):
        """Constraint residual K, optionally without one block's contribution."""
        p = self.problem
        out = -self.csv.copy()
        if skip != "Z":
            out += st.zZ
        if self.has_W and skip != "W":
            out -= p.Q.matrix @ st.w
        if skip != "S":
            out += st.s
        if p.m_E and skip != "yE":
            out += p.A_E.T @ st.yE
        if self.has_I and skip != "yI":
            out += p.A_I.T @ st.yI
        return out

    def step(self, st):
        p, sigma, tau = self.problem, self.sigma, self.tau
        st = BaselineState(st.zZ.copy(), st.w.copy(), st.s.copy(),
                           st.yE.copy(), st.yI.copy(), st.xv.copy(), st.k)

        R = self._k_vec(st, skip="Z") + st.xv / sigma
        st.zZ = self.z_spec.prox(-R, sigma)

        if self.has_W:
            Qm = p.Q.matrix
            Rw = self._k_vec(st, skip="W") + st.xv / sigma
            if self.W_solver is not None:
                rhs = sigma * (Qm @ Rw)
                # proximal part of the right-hand side: T w^-
                Tw = self.W_solver.apply_shifted(st.w) - sigma * (
                    (Qm @ st.w) + sigma * (Qm @ (Qm @ st.w))
                )
                st.w = self.W_solver.apply_inverse(rhs + Tw)
            else:
                rhs = sigma * (Qm @ Rw) + self.W_T @ st.w
                st.w = sla.cho_solve(self.W_factor, rhs)

        Rs = self._k_vec(st, skip="S") + st.xv / sigma
        st.s = self.s_spec.prox(-Rs, sigma)

        if p.m_E:
            Re = self._k_vec(st, skip="yE") + st.xv / sigma
            st.yE = self.E_solver.solve(p.b_E / sigma - p.A_E @ Re)

        if self.has_I:
            Ri = self._k_vec(st, skip="yI") + st.xv / sigma
            grad = -p.b_I + sigma * (p.A_I @ (p.A_I.T @ st.yI + Ri))
            st.yI = np.maximum(0.0, st.yI - grad / self.lam_max)

        st.xv = st.xv + tau * sigma * self._k_vec(st)
        st.k += 1
        return st

    def iterate_report(self, st):
        p = self.problem
        it = DualIterate(
            Z=smat(st.zZ, p.n),
            v=st.yI.copy(),
            W=smat(st.w, p.n) if self.has_W else np.zeros((p.n, p.n)),
            S=smat(st.s, p.n),
            y_E=st.yE,
            y_I=st.yI,
            X=smat(st.xv, p.n),
            u=np.zeros(p.m_I),
        )
        return kkt_residuals(p, it)

    def solve(self, tol=1e-6, max_iter=25000, log_sink=None):
        st = self.initial_state()
        records = []
        t0 = time.perf_counter()
        rep = self.iterate_report(st)
        converged = rep.eta_qsdp <= tol
        while not converged and st.k < max_iter:
            st = self.step(st)
            rep = self.iterate_report(st)
            rec = IterationRecord(
                k=st.k,
                residuals=rep.as_dict() | {"eta": rep.eta_qsdp},
                eta=rep.eta_qsdp,
                Dw=np.nan,
                dx_cert=0.0,
                dy_cert=0.0,
                pcg_iters=0,
                skipped=0,
                sigma=self.sigma,
                time_s=time.perf_counter() - t0,
            )
            records.append(rec)
            if log_sink is not None:
                log_sink(rec)
            converged = rep.eta_qsdp <= tol
        return SolveReport(
            converged=converged,
            iterations=st.k,
            state=st,
            records=records,
            final_residuals=rep.as_dict() | {"eta": rep.eta_qsdp},
            certificate_audit_pass=True,
            wall_time=time.perf_counter() - t0,
            sigma_final=self.sigma,
        )
