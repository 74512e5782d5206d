"""Dense convex QP solver (operator splitting with active-set polishing).

Problem form::

    minimize    1/2 x'Px + q'x
    subject to  A x  = b
                G x <= h
                lb <= x <= ub

The main loop is the ADMM splitting of the KKT system onto the constraint
set with over-relaxation, Ruiz equilibration and adaptive step size. Once the
iterate is close, the active set is read off the dual iterate and the
equality-constrained KKT system is solved directly (a few primal-dual
active-set corrections are allowed). The polished point is accepted only if
its KKT residuals on the original data are within tolerance.

Dual sign conventions (Lagrangian ``f + nu'(Ax-b) + mu'(Gx-h) + beta'x``):
``eq_duals`` are free, ``ineq_duals >= 0``, and ``bound_duals`` are positive
when the upper bound is active and negative when the lower bound is active.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla

from .errors import DimensionError, NonConvexError

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 50_000

# y-norm above which the dual iterate is declared divergent (infeasible problem)
DIVERGENCE_THRESHOLD = 1e12

_MIN_SCALING = 1e-4
_MAX_SCALING = 1e4
_RHO_MIN = 1e-6
_RHO_MAX = 1e6
_EQ_RHO_FACTOR = 1e3


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    MAX_ITER = "MaxIter"


@dataclass
class QpProblem:
    """Canonical dense QP. Missing blocks default to empty."""

    P: np.ndarray
    q: np.ndarray
    A: np.ndarray | None = None
    b: np.ndarray | None = None
    G: np.ndarray | None = None
    h: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float).reshape(-1)
        n = self.q.size
        self.P = np.asarray(self.P, dtype=float)
        if self.P.size == 0 and n == 0:
            self.P = np.zeros((0, 0))
        self.A = _as_matrix(self.A, n)
        self.b = np.zeros(0) if self.b is None else np.asarray(self.b, dtype=float).reshape(-1)
        self.G = _as_matrix(self.G, n)
        self.h = np.zeros(0) if self.h is None else np.asarray(self.h, dtype=float).reshape(-1)
        self.lb = np.full(n, -np.inf) if self.lb is None else np.asarray(self.lb, dtype=float).reshape(-1)
        self.ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float).reshape(-1)

    @property
    def n(self):
        return self.q.size

    def check(self):
        """Raise DimensionError / NonConvexError if the data are unusable."""
        n = self.n
        if self.P.shape != (n, n):
            raise DimensionError(f"P has shape {self.P.shape}, expected {(n, n)}")
        if self.A.shape[1] != n or self.A.shape[0] != self.b.size:
            raise DimensionError(f"A {self.A.shape} / b {self.b.shape} inconsistent with n={n}")
        if self.G.shape[1] != n or self.G.shape[0] != self.h.size:
            raise DimensionError(f"G {self.G.shape} / h {self.h.shape} inconsistent with n={n}")
        if self.lb.size != n or self.ub.size != n:
            raise DimensionError("bound vectors must have length n")
        if np.any(self.lb > self.ub):
            raise DimensionError("lower bound above upper bound")
        scale = max(1.0, float(np.max(np.abs(self.P)))) if n else 1.0
        if n and np.max(np.abs(self.P - self.P.T)) > 1e-12 * scale:
            raise NonConvexError("cost matrix is not symmetric")
        if n:
            sym = 0.5 * (self.P + self.P.T)
            lam_min = float(np.linalg.eigvalsh(sym)[0])
            if lam_min < -1e-9:
                raise NonConvexError(f"cost matrix not PSD (min eigenvalue {lam_min:.3e})")

    def objective(self, x):
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.P @ x + self.q @ x)

    def scaled(self, alpha):
        """Same constraints, objective multiplied by ``alpha``."""
        return QpProblem(alpha * self.P, alpha * self.q, self.A, self.b, self.G, self.h, self.lb, self.ub)


def _as_matrix(M, n):
    if M is None:
        return np.zeros((0, n))
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M.reshape(1, -1) if M.size else np.zeros((0, n))
    return M


@dataclass
class KktResiduals:
    stationarity: float
    primal_eq: float
    primal_ineq: float
    complementarity: float
    dual_ineq: float = 0.0

    def max(self):
        return max(self.stationarity, self.primal_eq, self.primal_ineq,
                   self.complementarity, self.dual_ineq)

    def as_dict(self):
        return {
            "stationarity": self.stationarity,
            "primal_eq": self.primal_eq,
            "primal_ineq": self.primal_ineq,
            "complementarity": self.complementarity,
            "dual_ineq": self.dual_ineq,
        }


@dataclass
class QpSolution:
    x: np.ndarray
    eq_duals: np.ndarray
    ineq_duals: np.ndarray
    bound_duals: np.ndarray
    objective: float
    status: Status
    kkt: KktResiduals
    iterations: int = 0
    polished: bool = False
    certificate: float | None = None
    info: dict = field(default_factory=dict)

    @property
    def optimal(self):
        return self.status is Status.OPTIMAL


def check_kkt(p: QpProblem, s) -> KktResiduals:
    """KKT residuals (infinity norms) of a primal-dual point.

    ``s`` may be a QpSolution or any object exposing ``x``, ``eq_duals``,
    ``ineq_duals`` and ``bound_duals`` (the last two may be empty/None).
    """
    n = p.n
    x = np.asarray(s.x, dtype=float).reshape(-1)
    nu = _dual_vec(getattr(s, "eq_duals", None), p.A.shape[0])
    mu = _dual_vec(getattr(s, "ineq_duals", None), p.G.shape[0])
    beta = _dual_vec(getattr(s, "bound_duals", None), n)
    if x.size != n:
        raise DimensionError(f"x has length {x.size}, problem has n={n}")

    grad = p.P @ x + p.q + p.A.T @ nu + p.G.T @ mu + beta
    stat = _inf_norm(grad)
    peq = _inf_norm(p.A @ x - p.b)

    slack = p.h - p.G @ x
    viol = [np.maximum(-slack, 0.0), np.maximum(p.lb - x, 0.0), np.maximum(x - p.ub, 0.0)]
    pineq = max((_inf_norm(v) for v in viol), default=0.0)

    mu_pos = np.maximum(mu, 0.0)
    comp = _inf_norm(mu_pos * slack) if mu.size else 0.0
    up = np.maximum(beta, 0.0)
    lo = np.maximum(-beta, 0.0)
    with np.errstate(invalid="ignore"):
        cu = np.where(up > 0, up * (p.ub - x), 0.0)
        cl = np.where(lo > 0, lo * (x - p.lb), 0.0)
    # a multiplier on an infinite bound is a dual infeasibility, not a complementarity gap
    dual_bad = np.concatenate([
        np.maximum(-mu, 0.0),
        np.where(np.isinf(p.ub), up, 0.0),
        np.where(np.isinf(p.lb), lo, 0.0),
    ])
    cu = np.where(np.isfinite(cu), cu, 0.0)
    cl = np.where(np.isfinite(cl), cl, 0.0)
    comp = max(comp, _inf_norm(cu), _inf_norm(cl))
    return KktResiduals(stat, peq, pineq, comp, _inf_norm(dual_bad))


def _dual_vec(v, m):
    if v is None:
        return np.zeros(m)
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.size != m:
        raise DimensionError(f"dual vector has length {v.size}, expected {m}")
    return v


def _inf_norm(v):
    return float(np.max(np.abs(v))) if np.size(v) else 0.0


class QpSolver:
    """Reusable solver workspace.

    The factorization depends only on P and the constraint matrices, so a
    sequence of solves that only changes ``q`` (as in the consensus loop)
    reuses it via :meth:`update_q`.
    """

    def __init__(self, problem: QpProblem, *, rho=0.1, sigma=1e-6, alpha=1.6,
                 scaling_iter=15, adaptive_rho=True, polish=True, check_every=25, stall_iters=400):
        problem.check()
        self.problem = problem
        self.sigma = sigma
        self.alpha = alpha
        self.adaptive_rho = adaptive_rho
        self.polish_enabled = polish
        self.check_every = check_every
        self.stall_iters = stall_iters

        p = problem
        n = p.n
        me, mi = p.A.shape[0], p.G.shape[0]
        box = np.isfinite(p.lb) | np.isfinite(p.ub)
        self._box_idx = np.flatnonzero(box)
        nb = self._box_idx.size
        self._me, self._mi, self._nb = me, mi, nb

        Afull = np.vstack([p.A, p.G, np.eye(n)[self._box_idx]]) if (me + mi + nb) else np.zeros((0, n))
        l = np.concatenate([p.b, np.full(mi, -np.inf), p.lb[self._box_idx]])
        u = np.concatenate([p.b, p.h, p.ub[self._box_idx]])

        D, E, c = _ruiz(p.P, Afull, p.q, scaling_iter)
        self._D, self._E, self._c = D, E, c
        self._P = c * (D[:, None] * p.P * D[None, :])
        self._A = E[:, None] * Afull * D[None, :]
        self._l = E * l
        self._u = E * u
        self._q = c * D * p.q
        self._is_eq = np.zeros(self._A.shape[0], dtype=bool)
        self._is_eq[:me] = True

        self._set_rho(rho)
        self._last = None

    # -- setup helpers -------------------------------------------------
    def _set_rho(self, rho):
        rho = float(np.clip(rho, _RHO_MIN, _RHO_MAX))
        self.rho = rho
        m = self._A.shape[0]
        self._rho_vec = np.full(m, rho)
        self._rho_vec[self._is_eq] = rho * _EQ_RHO_FACTOR
        n = self.problem.n
        K = self._P + self.sigma * np.eye(n) + self._A.T @ (self._rho_vec[:, None] * self._A)
        self._chol = sla.cho_factor(K, lower=True, check_finite=False)

    def update_q(self, q):
        q = np.asarray(q, dtype=float).reshape(-1)
        if q.size != self.problem.n:
            raise DimensionError("q has wrong length")
        self.problem.q = q
        self._q = self._c * self._D * q

    # -- main loop -----------------------------------------------------
    def solve(self, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, warm_start=None) -> QpSolution:
        p = self.problem
        n, m = p.n, self._A.shape[0]
        D, E, c = self._D, self._E, self._c
        A, P = self._A, self._P
        l, u = self._l, self._u

        if m == 0:
            return self._unconstrained()

        if warm_start is not None:
            x, z, y = self._scaled_from(warm_start)
        elif self._last is not None:
            x, z, y = (v.copy() for v in self._last)
        else:
            x, z, y = np.zeros(n), np.clip(np.zeros(m), l, u), np.zeros(m)

        alpha, sigma = self.alpha, self.sigma
        best = None
        next_polish_res = np.inf
        last_polish_iter = -10**9
        stall_ref, stall_iter = np.inf, 0
        y_prev = y.copy()
        k = 0
        status = Status.MAX_ITER
        certificate = None
        fallback = False

        for k in range(max_iter + 1):
            if k % self.check_every == 0:
                Ax = A @ x
                prim = _inf_norm((Ax - z) / E)
                Aty = A.T @ y
                dual = _inf_norm((P @ x + self._q + Aty) / D) / c
                prim_scale = max(_inf_norm(Ax / E), _inf_norm(z / E), 1.0)
                dual_scale = max(_inf_norm(P @ x / D), _inf_norm(Aty / D), _inf_norm(self._q / D)) / c
                dual_scale = max(dual_scale, 1.0)
                rel = max(prim / prim_scale, dual / dual_scale)

                if k > 0:
                    cert = self._infeasibility(y - y_prev)
                    if cert is not None or _inf_norm(y) * (1.0 / c) > DIVERGENCE_THRESHOLD:
                        status = Status.INFEASIBLE
                        certificate = cert if cert is not None else _inf_norm(y) / c
                        break
                y_prev = y.copy()

                cand = self._candidate(x, z, y, k, polished=False)
                if best is None or cand.kkt.max() < best.kkt.max():
                    best = cand
                if cand.kkt.max() <= tol:
                    status = Status.OPTIMAL
                    break

                if self.polish_enabled and rel < 1e-2 and (
                        rel <= next_polish_res or k - last_polish_iter >= 40 * self.check_every):
                    pol = self._polish(x, y, *self._guess_active(z, y), k)
                    last_polish_iter = k
                    if pol is not None:
                        if pol.kkt.max() < best.kkt.max():
                            best = pol
                        if pol.kkt.max() <= tol:
                            status = Status.OPTIMAL
                            break
                    next_polish_res = rel * 0.1

                # operator splitting stalls on degenerate, LP-like data;
                # hand over to the interior-point finisher in that case
                if rel < 0.5 * stall_ref:
                    stall_ref, stall_iter = rel, k
                elif k - stall_iter >= self.stall_iters:
                    fallback = True
                    break

                if self.adaptive_rho and k > 0 and k % (4 * self.check_every) == 0:
                    ratio = np.sqrt((prim / prim_scale + 1e-30) / (dual / dual_scale + 1e-30))
                    if ratio > 5.0 or ratio < 0.2:
                        self._set_rho(self.rho * ratio)

                if k == max_iter:
                    break

            rhs = sigma * x - self._q + A.T @ (self._rho_vec * z - y)
            xt = sla.cho_solve(self._chol, rhs, check_finite=False)
            zt = A @ xt
            x = alpha * xt + (1.0 - alpha) * x
            zh = alpha * zt + (1.0 - alpha) * z
            z_new = np.clip(zh + y / self._rho_vec, l, u)
            y = y + self._rho_vec * (zh - z_new)
            z = z_new

        if status is Status.INFEASIBLE:
            sol = self._candidate(x, z, y, k, polished=False)
            sol.status = Status.INFEASIBLE
            sol.certificate = certificate
            return sol

        if status is not Status.OPTIMAL and (fallback or k == max_iter):
            ipm = self._ipm(k, tol)
            if ipm is not None:
                if ipm.kkt.max() < best.kkt.max():
                    best = ipm
                if best.kkt.max() > tol and self.polish_enabled:
                    xs, ys = ipm.info["scaled"][0], ipm.info["scaled"][2]
                    pol = self._polish(xs, ys, *ipm.info["active"], k)
                    if pol is not None and pol.kkt.max() < best.kkt.max():
                        best = pol
            if best.kkt.max() <= tol:
                status = Status.OPTIMAL

        best.status = status
        best.iterations = k
        self._remember(best)
        return best

    # -- pieces ----------------------------------------------------------
    def _unconstrained(self):
        p = self.problem
        x = np.linalg.lstsq(p.P, -p.q, rcond=None)[0] if p.n else np.zeros(0)
        sol = QpSolution(x, np.zeros(0), np.zeros(0), np.zeros(p.n), p.objective(x),
                         Status.OPTIMAL, KktResiduals(0, 0, 0, 0))
        sol.kkt = check_kkt(p, sol)
        if sol.kkt.stationarity > 1e-8 * max(1.0, _inf_norm(p.q)):
            sol.status = Status.MAX_ITER  # unbounded below; no minimizer exists
        return sol

    def _split_duals(self, y_full):
        me, mi = self._me, self._mi
        beta = np.zeros(self.problem.n)
        beta[self._box_idx] = y_full[me + mi:]
        return y_full[:me], y_full[me:me + mi], beta

    def _candidate(self, x, z, y, k, polished):
        p = self.problem
        xu = self._D * x
        yu = self._E * y / self._c
        nu, mu, beta = self._split_duals(yu)
        sol = QpSolution(xu, nu, mu, beta, p.objective(xu), Status.MAX_ITER,
                         KktResiduals(np.inf, np.inf, np.inf, np.inf), iterations=k, polished=polished)
        sol.kkt = check_kkt(p, sol)
        sol.info["scaled"] = (x.copy(), z.copy(), y.copy())
        return sol

    def _remember(self, sol):
        self._last = sol.info.get("scaled") or self._scaled_from(sol)

    def _scaled_from(self, sol):
        p = self.problem
        x = np.asarray(sol.x, dtype=float) / self._D
        yfull = np.concatenate([
            np.asarray(sol.eq_duals, dtype=float).reshape(-1),
            np.asarray(sol.ineq_duals, dtype=float).reshape(-1),
            np.asarray(sol.bound_duals, dtype=float).reshape(-1)[self._box_idx],
        ])
        if yfull.size != self._A.shape[0] or x.size != p.n:
            raise DimensionError("warm start does not match problem dimensions")
        y = yfull * self._c / self._E
        z = np.clip(self._A @ x, self._l, self._u)
        return x, z, y

    def _infeasibility(self, dy):
        """Primal infeasibility certificate from the dual increment."""
        nrm = _inf_norm(self._E * dy)
        if nrm < 1e-10:
            return None
        eps = 1e-5
        At_dy = _inf_norm((self._A.T @ dy) / self._D)
        if At_dy > eps * nrm:
            return None
        pos, neg = np.maximum(dy, 0.0), np.minimum(dy, 0.0)
        if np.any((pos > 0) & np.isinf(self._u)) or np.any((neg < 0) & np.isinf(self._l)):
            return None
        with np.errstate(invalid="ignore"):
            support = np.sum(np.where(pos > 0, self._u * pos, 0.0)) + np.sum(np.where(neg < 0, self._l * neg, 0.0))
        if support < -eps * nrm:
            return At_dy / nrm
        return None

    # -- interior-point finisher ------------------------------------------
    def _ipm(self, k, tol=DEFAULT_TOL, max_iter=200):
        """Mehrotra predictor-corrector on the scaled problem.

        Inequalities are the general rows plus every finite bound; bounds are
        kept diagonal so the Newton matrix is ``P + G'WG + diag``.
        """
        p = self.problem
        n, me, mi = p.n, self._me, self._mi
        P, q = self._P, self._q
        Ae, be = self._A[:me], self._l[:me]
        Gi, hi = self._A[me:me + mi], self._u[me:me + mi]
        lbx, ubx = p.lb / self._D, p.ub / self._D
        U = np.flatnonzero(np.isfinite(ubx))
        L = np.flatnonzero(np.isfinite(lbx))
        nU = U.size
        m = mi + nU + L.size

        def Cx(v):
            return np.concatenate([Gi @ v, v[U], -v[L]])

        def CT(w):
            r = Gi.T @ w[:mi]
            np.add.at(r, U, w[mi:mi + nU])
            np.subtract.at(r, L, w[mi + nU:])
            return r

        d = np.concatenate([hi, ubx[U], -lbx[L]])
        x = np.zeros(n)
        both = np.isfinite(lbx) & np.isfinite(ubx)
        x[both] = 0.5 * (lbx[both] + ubx[both])
        only_l = np.isfinite(lbx) & ~np.isfinite(ubx)
        x[only_l] = lbx[only_l] + 1.0
        only_u = ~np.isfinite(lbx) & np.isfinite(ubx)
        x[only_u] = ubx[only_u] - 1.0
        y = np.zeros(me)
        s = np.maximum(d - Cx(x), 1.0)
        zz = np.ones(m)
        scale = max(1.0, _inf_norm(q), _inf_norm(be), _inf_norm(d[np.isfinite(d)]) if m else 1.0)
        reg = 1e-11

        def step_len(v, dv):
            neg = dv < 0
            return min(1.0, float(np.min(-v[neg] / dv[neg]))) if np.any(neg) else 1.0

        best_res, since = np.inf, 0
        for _ in range(max_iter):
            rd = P @ x + q + Ae.T @ y + CT(zz)
            rp = Ae @ x - be
            ri = Cx(x) + s - d
            mu = float(s @ zz) / m if m else 0.0
            # run well past tol so the active partition is unambiguous;
            # stop once progress stalls at the floating-point floor
            res = max(_inf_norm(rd), _inf_norm(rp), _inf_norm(ri), mu) / scale
            if res < 0.5 * best_res:
                best_res, since = res, 0
            else:
                since += 1
            if res <= 1e-15 or since >= 5:
                break
            w = zz / s if m else np.zeros(0)
            Hm = P + Gi.T @ (w[:mi, None] * Gi)
            diag = np.zeros(n)
            np.add.at(diag, U, w[mi:mi + nU])
            np.add.at(diag, L, w[mi + nU:])
            Hm[np.diag_indices(n)] += diag + reg
            K = np.block([[Hm, Ae.T], [Ae, -reg * np.eye(me)]])
            try:
                lu = sla.lu_factor(K, check_finite=False)
            except (ValueError, np.linalg.LinAlgError):
                return None

            def newton(rsz):
                rhs = np.concatenate([-rd + CT((rsz - zz * ri) / s), -rp])
                sol = sla.lu_solve(lu, rhs, check_finite=False)
                dx, dy = sol[:n], sol[n:]
                ds = -ri - Cx(dx)
                dz = (-rsz - zz * ds) / s
                return dx, dy, ds, dz

            dx, dy, ds, dz = newton(s * zz)
            a = min(step_len(s, ds), step_len(zz, dz))
            mu_aff = float((s + a * ds) @ (zz + a * dz)) / m if m else 0.0
            sig = (mu_aff / mu) ** 3 if mu > 0 else 0.0
            dx, dy, ds, dz = newton(s * zz + ds * dz - sig * mu)
            a = 0.99 * min(step_len(s, ds), step_len(zz, dz)) if m else 1.0
            a = min(a, 1.0)
            x, y, s, zz = x + a * dx, y + a * dy, s + a * ds, zz + a * dz
            if not np.all(np.isfinite(x)):
                return None

        # map to the splitting's dual layout: box-row duals carry 1/(E_r D_j)
        yfull = np.zeros(self._A.shape[0])
        yfull[:me] = y
        yfull[me:me + mi] = zz[:mi]
        zeta = np.zeros(n)
        np.add.at(zeta, U, zz[mi:mi + nU])
        np.subtract.at(zeta, L, zz[mi + nU:])
        box_rows = np.arange(me + mi, self._A.shape[0])
        j = self._box_idx
        yfull[box_rows] = zeta[j] / (self._E[box_rows] * self._D[j])
        cand = self._candidate(x, np.clip(self._A @ x, self._l, self._u), yfull, k, polished=False)
        act_ineq = {me + int(i) for i in np.flatnonzero(zz[:mi] > s[:mi])}
        at_upper = {}
        for jj, zv, sv in zip(U, zz[mi:mi + nU], s[mi:mi + nU]):
            if zv > sv:
                at_upper[int(jj)] = True
        for jj, zv, sv in zip(L, zz[mi + nU:], s[mi + nU:]):
            if zv > sv:
                at_upper[int(jj)] = False
        cand.info["active"] = (act_ineq, at_upper)
        cand.info["ipm"] = True
        return cand

    # -- polishing ---------------------------------------------------------
    def _guess_active(self, z, y):
        me, mi = self._me, self._mi
        u, l = self._u, self._l
        act_ineq = {int(r) for r in range(me, me + mi) if u[r] - z[r] < y[r]}
        at_upper = {}
        for r, j in zip(range(me + mi, self._A.shape[0]), self._box_idx):
            if u[r] - z[r] < y[r]:
                at_upper[int(j)] = True
            elif z[r] - l[r] < -y[r]:
                at_upper[int(j)] = False
        return act_ineq, at_upper

    def _polish(self, x, y, act_ineq, at_upper, k, rounds=12):
        """Solve the KKT system on a guessed active set, then correct it."""
        p = self.problem
        me = self._me
        act_ineq = set(act_ineq)
        at_upper = dict(at_upper)
        lbs = p.lb / self._D
        ubs = p.ub / self._D
        x0 = x
        seen = set()
        best = None
        for _ in range(rounds):
            key = (frozenset(act_ineq), frozenset(at_upper.items()))
            if key in seen:
                break
            seen.add(key)
            res = self._solve_active(sorted(act_ineq), at_upper, lbs, ubs, x0, y)
            if res is None:
                break
            xs, y_rows, fixed = res
            x0 = xs
            sol = self._assemble(xs, y_rows, sorted(act_ineq), fixed, k)
            if best is None or sol.kkt.max() < best.kkt.max():
                best = sol
            if sol.kkt.max() <= 1e-13:
                break

            changed = False
            # drop multipliers with the wrong sign
            mu = sol.ineq_duals
            for r in list(act_ineq):
                if mu[r - me] < 0:
                    act_ineq.discard(r)
                    changed = True
            beta = sol.bound_duals
            for j, up in list(at_upper.items()):
                if (up and beta[j] < 0) or ((not up) and beta[j] > 0):
                    del at_upper[j]
                    changed = True
            # add violated constraints
            xu = sol.x
            slack = p.h - p.G @ xu
            viol_tol = 1e-12 * max(1.0, _inf_norm(p.h))
            for i in np.flatnonzero(slack < -viol_tol):
                r = me + int(i)
                if r not in act_ineq:
                    act_ineq.add(r)
                    changed = True
            for j in np.flatnonzero(xu > p.ub + 1e-12 * np.maximum(1.0, np.abs(p.ub))):
                at_upper[int(j)] = True
                changed = True
            for j in np.flatnonzero(xu < p.lb - 1e-12 * np.maximum(1.0, np.abs(p.lb))):
                at_upper[int(j)] = False
                changed = True
            if not changed:
                break
        return best

    def _solve_active(self, act_ineq, at_upper, lbs, ubs, x0, y0, refine=5):
        # Corrections start from the current iterate so that directions of
        # a degenerate (LP-like) face stay where the iterate put them.
        n = self.problem.n
        P, q, A = self._P, self._q, self._A
        me = self._me
        fixed_idx = np.array(sorted(at_upper), dtype=int)
        fixed_val = np.array([ubs[j] if at_upper[j] else lbs[j] for j in fixed_idx]) if fixed_idx.size else np.zeros(0)
        free = np.ones(n, dtype=bool)
        free[fixed_idx] = False
        fr = np.flatnonzero(free)

        rows = list(range(me)) + list(act_ineq)
        Ar = A[rows] if rows else np.zeros((0, n))
        rhs_r = np.concatenate([self._l[:me], self._u[list(act_ineq)]]) if rows else np.zeros(0)

        xs = np.zeros(n)
        xs[fixed_idx] = fixed_val
        Pff = P[np.ix_(fr, fr)]
        Arf = Ar[:, fr]
        rhs = np.concatenate([-q[fr] - P[np.ix_(fr, fixed_idx)] @ fixed_val, rhs_r - Ar[:, fixed_idx] @ fixed_val])
        nf, nr = fr.size, len(rows)
        K = np.block([[Pff, Arf.T], [Arf, np.zeros((nr, nr))]])
        if K.size == 0:
            sol = np.zeros(0)
        else:
            sol0 = np.concatenate([x0[fr], y0[rows]])
            scale = max(1.0, _inf_norm(rhs))
            sol = self._kkt_lu(K, rhs, sol0, scale, refine)
            if sol is None:
                sol = self._kkt_pinv(K, rhs, sol0, scale, refine)
            if sol is None:
                return None
        xs[fr] = sol[:nf]
        y_rows = sol[nf:]
        return xs, y_rows, fixed_idx

    @staticmethod
    def _kkt_lu(K, rhs, sol, scale, refine):
        """Plain LU with refinement; None when K is (numerically) singular."""
        import warnings
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            try:
                lu = sla.lu_factor(K, check_finite=False)
            except (ValueError, np.linalg.LinAlgError):
                return None
            piv = np.abs(np.diag(lu[0]))
            if piv.size and piv.min() <= 1e-13 * max(1.0, piv.max()):
                return None
            for _ in range(refine):
                r = rhs - K @ sol
                if _inf_norm(r) <= 1e-15 * scale:
                    break
                sol = sol + sla.lu_solve(lu, r, check_finite=False)
        if not np.all(np.isfinite(sol)) or _inf_norm(rhs - K @ sol) > 1e-11 * scale:
            return None
        return sol

    @staticmethod
    def _kkt_pinv(K, rhs, sol, scale, refine):
        # symmetric pseudo-inverse: directions the active set leaves
        # unpinned (degenerate faces) get no correction at all, and tiny
        # inconsistencies are not amplified
        try:
            lam, V = np.linalg.eigh(K)
        except np.linalg.LinAlgError:
            return None
        cut = 1e-11 * max(1.0, float(np.max(np.abs(lam))))
        inv = np.where(np.abs(lam) > cut, 1.0 / np.where(lam == 0, 1.0, lam), 0.0)
        for _ in range(refine):
            r = rhs - K @ sol
            if _inf_norm(r) <= 1e-15 * scale:
                break
            sol = sol + V @ (inv * (V.T @ r))
        return sol if np.all(np.isfinite(sol)) else None

    def _assemble(self, xs, y_rows, act_ineq, fixed_idx, k):
        p = self.problem
        me = self._me
        D, c = self._D, self._c
        xu = D * xs
        yr = np.zeros(self._A.shape[0])
        rows = list(range(me)) + list(act_ineq)
        yr[rows] = y_rows
        yu = self._E * yr / c
        nu, mu, _ = self._split_duals(yu)
        # bound multipliers from stationarity on the fixed coordinates
        beta = np.zeros(p.n)
        if fixed_idx.size:
            g = p.P @ xu + p.q + p.A.T @ nu + p.G.T @ mu
            beta[fixed_idx] = -g[fixed_idx]
        sol = QpSolution(xu, nu, mu, beta, p.objective(xu), Status.MAX_ITER,
                         KktResiduals(np.inf, np.inf, np.inf, np.inf), iterations=k, polished=True)
        sol.kkt = check_kkt(p, sol)
        yfull = np.concatenate([nu, mu, beta[self._box_idx]]) * c / self._E
        sol.info["scaled"] = (xs.copy(), np.clip(self._A @ xs, self._l, self._u), yfull)
        return sol


def _ruiz(P, A, q, iters):
    n, m = P.shape[0], A.shape[0]
    D = np.ones(n)
    E = np.ones(m)
    Ps, As = P.copy(), A.copy()
    for _ in range(iters):
        col = np.max(np.abs(Ps), axis=0) if n else np.zeros(0)
        if m:
            col = np.maximum(col, np.max(np.abs(As), axis=0))
        row = np.max(np.abs(As), axis=1) if m else np.zeros(0)
        dx = 1.0 / np.sqrt(_clip_norm(col))
        de = 1.0 / np.sqrt(_clip_norm(row))
        Ps = dx[:, None] * Ps * dx[None, :]
        As = de[:, None] * As * dx[None, :]
        D *= dx
        E *= de
    qs = D * q
    pnorm = float(np.mean(np.max(np.abs(Ps), axis=0))) if n else 0.0
    c = 1.0 / _clip_norm(np.array([max(pnorm, _inf_norm(qs))]))[0]
    return D, E, c


def _clip_norm(v):
    v = np.where(v < _MIN_SCALING, 1.0, v)
    return np.minimum(v, _MAX_SCALING)


def solve_qp(p: QpProblem, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, warm_start=None, **settings) -> QpSolution:
    """Solve ``p`` to primal-dual optimality.

    Returns a QpSolution whose status is Optimal only when every KKT residual
    is at most ``tol``. Deterministic for identical inputs.
    """
    solver = QpSolver(p, **settings)
    return solver.solve(tol=tol, max_iter=max_iter, warm_start=warm_start)


# -- debug dump ------------------------------------------------------------

def dump_qp(p: QpProblem, path):
    """Write a row-per-constraint text dump.

    Format (whitespace separated, ``#`` comments)::

        n <n>
        P <i> <j> <value>          # upper triangle, nonzeros only
        q <j> <value>
        eq <j>:<a> <j>:<a> ... = <b>
        le <j>:<g> ... <= <h>
        bound <j> <lb> <ub>        # only finite or partially finite boxes
    """
    lines = ["# fairtrade qp dump v1", f"n {p.n}"]
    for i, j in zip(*np.nonzero(np.triu(p.P))):
        lines.append(f"P {i} {j} {float(p.P[i, j])!r}")
    for j in np.flatnonzero(p.q):
        lines.append(f"q {j} {float(p.q[j])!r}")
    for row, rhs in zip(p.A, p.b):
        terms = " ".join(f"{j}:{float(row[j])!r}" for j in np.flatnonzero(row))
        lines.append(f"eq {terms} = {float(rhs)!r}")
    for row, rhs in zip(p.G, p.h):
        terms = " ".join(f"{j}:{float(row[j])!r}" for j in np.flatnonzero(row))
        lines.append(f"le {terms} <= {float(rhs)!r}")
    for j in range(p.n):
        if np.isfinite(p.lb[j]) or np.isfinite(p.ub[j]):
            lines.append(f"bound {j} {float(p.lb[j])!r} {float(p.ub[j])!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_qp_dump(path) -> QpProblem:
    n = None
    P = q = lb = ub = None
    A, b, G, h = [], [], [], []
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        if tok[0] == "n":
            n = int(tok[1])
            P, q = np.zeros((n, n)), np.zeros(n)
            lb, ub = np.full(n, -np.inf), np.full(n, np.inf)
        elif tok[0] == "P":
            i, j, v = int(tok[1]), int(tok[2]), float(tok[3])
            P[i, j] = P[j, i] = v
        elif tok[0] == "q":
            q[int(tok[1])] = float(tok[2])
        elif tok[0] in ("eq", "le"):
            row = np.zeros(n)
            for t in tok[1:-2]:
                j, v = t.split(":")
                row[int(j)] = float(v)
            (A if tok[0] == "eq" else G).append(row)
            (b if tok[0] == "eq" else h).append(float(tok[-1]))
        elif tok[0] == "bound":
            lb[int(tok[1])] = float(tok[2])
            ub[int(tok[1])] = float(tok[3])
    return QpProblem(P, q, np.array(A).reshape(-1, n), np.array(b), np.array(G).reshape(-1, n), np.array(h), lb, ub)
