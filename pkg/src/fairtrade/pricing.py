"""Fair bilateral prices for a fixed equilibrium dispatch.

With the dispatch ``p*`` fixed, each hub's cost is affine in the prices::

    J_i(c) = J_i(0) + sum_j sum_h c_(i,j)[h] * p_tr_ij[h]

so the normalized reductions ``d = d0 + M v`` are affine in the stacked price
vector ``v`` (one entry per linked pair and hour). ``M[i, (e, h)]`` is
``-p_tr_ij[h] / J_i^nt`` for an endpoint ``i`` of pair ``e``. The fairness
metric is the population variance ``phi = |C d|^2 / N`` with the centering
matrix ``C``, so ``grad phi = (2/N) M' (d - mean(d))`` and the Hessian
``(2/N) M' C M`` is constant.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (CertificateFailed, ConfigError, DegenerateBaseline,
                     DisconnectedComponentHandled, ProjectionInfeasible)
from .profiles import PriceProfile
from .qp import QpProblem, Status, solve_qp

log = logging.getLogger(__name__)

DEGENERATE_BASELINE = 1e-9
DEFAULT_PRICE_BOX = (-0.5, 0.5)
TRADE_EPS = 1e-9   # kW


def cost_reduction(J_nt, J):
    """Normalized cost reduction ``(J_nt - J) / J_nt``."""
    if abs(J_nt) < DEGENERATE_BASELINE:
        raise DegenerateBaseline(f"baseline cost {J_nt!r} is too close to zero to normalize by")
    return (J_nt - J) / J_nt


def fairness_metric(d):
    """Population variance of the reductions (0 means an even split).

    Sums are exactly rounded, so the value does not depend on hub order.
    """
    d = np.asarray(d, dtype=float).reshape(-1)
    if d.size == 0:
        return 0.0
    mean = math.fsum(d) / d.size
    return math.fsum((d - mean) ** 2) / d.size


@dataclass
class PricingModel:
    """Affine price-to-cost map of a fixed dispatch.

    ``J0`` are the costs at zero prices; hubs with a degenerate baseline are
    listed in ``excluded`` and left out of ``d`` and ``phi``.
    """

    hub_ids: tuple
    pairs: tuple
    trades: np.ndarray
    J0: np.ndarray
    J_nt: np.ndarray
    excluded: tuple = ()

    @classmethod
    def from_dispatch(cls, result, J_nt: dict):
        """Build from a DispatchResult and per-hub baseline costs."""
        prof = result.profile
        J0 = np.array([result.costs[h].total - result.costs[h].trade_payments for h in prof.hub_ids])
        Jnt = np.array([float(J_nt[h]) for h in prof.hub_ids])
        excluded = tuple(h for h, v in zip(prof.hub_ids, Jnt) if abs(v) < DEGENERATE_BASELINE)
        for h in excluded:
            warnings.warn(f"hub {h!r} has a degenerate baseline and is left out of the fairness metric",
                          RuntimeWarning, stacklevel=2)
        # solver noise on zero trades would otherwise give a tiny, meaningless L
        trades = np.where(np.abs(prof.trades) > TRADE_EPS, prof.trades, 0.0)
        return cls(prof.hub_ids, prof.pairs, trades, J0, Jnt, excluded)

    @property
    def horizon(self):
        return self.trades.shape[1]

    @property
    def included(self):
        return [k for k, h in enumerate(self.hub_ids) if h not in self.excluded]

    def profile(self, v):
        return PriceProfile(self.hub_ids, self.pairs, np.asarray(v, dtype=float).reshape(self.trades.shape))

    def payment_matrix(self):
        """``B`` with ``J(v) = J0 + B v`` over all hubs."""
        N, (E, H) = len(self.hub_ids), self.trades.shape
        pos = {h: k for k, h in enumerate(self.hub_ids)}
        B = np.zeros((N, E * H))
        for e, (i, j) in enumerate(self.pairs):
            B[pos[i], e * H:(e + 1) * H] = self.trades[e]
            B[pos[j], e * H:(e + 1) * H] = -self.trades[e]
        return B

    def sensitivity(self):
        """``M`` restricted to included hubs: ``d = d0 + M v``."""
        inc = self.included
        return -self.payment_matrix()[inc] / self.J_nt[inc, None]

    def costs(self, v):
        return self.J0 + self.payment_matrix() @ np.asarray(v, dtype=float).reshape(-1)

    def reductions(self, v):
        J = self.costs(v)
        inc = self.included
        return (self.J_nt[inc] - J[inc]) / self.J_nt[inc]

    def phi(self, v):
        return fairness_metric(self.reductions(v))

    def gradient(self, v):
        d = self.reductions(v)
        N = d.size
        return (2.0 / N) * self.sensitivity().T @ (d - d.mean()) if N else np.zeros(np.size(v))


def fairness_gradient(result, J_nt: dict, c: PriceProfile):
    """Gradient of phi with respect to every (pair, hour) price, as a PriceProfile-shaped array.

    For pair ``(i, j)`` and hour ``h``::

        g = -(2/N) * ( p_ij[h] / J_i^nt * (d_i - dbar) + p_ji[h] / J_j^nt * (d_j - dbar) )

    with ``d`` evaluated at ``c`` and the fixed dispatch of ``result``.
    """
    model = result if isinstance(result, PricingModel) else PricingModel.from_dispatch(result, J_nt)
    return model.gradient(c.vector()).reshape(model.trades.shape)


def pair_gradient(p_ij, J_nt_i, J_nt_j, d_i, d_j, d_bar, N):
    """Mediator-local gradient of one pair; only needs the two endpoints' data
    and the broadcast mean. A degenerate endpoint contributes nothing."""
    g = np.zeros_like(np.asarray(p_ij, dtype=float))
    if d_i is not None:
        g = g - p_ij / J_nt_i * (d_i - d_bar)
    if d_j is not None:
        g = g + p_ij / J_nt_j * (d_j - d_bar)
    return (2.0 / N) * g


def estimate_lipschitz(model: PricingModel):
    """Largest eigenvalue of the (constant) Hessian ``(2/N) M' C M``.

    Computed from the small N x N matrix ``C M M' C`` which has the same
    nonzero spectrum.
    """
    M = model.sensitivity()
    N = M.shape[0]
    if N == 0 or not np.any(M):
        return 0.0
    C = np.eye(N) - np.full((N, N), 1.0 / N)
    S = C @ M @ M.T @ C
    return float((2.0 / N) * np.linalg.eigvalsh(0.5 * (S + S.T))[-1])


@dataclass
class MediationConfig:
    step_beta: float | None = None
    lipschitz_L: float | None = None
    c_min: float = DEFAULT_PRICE_BOX[0]
    c_max: float = DEFAULT_PRICE_BOX[1]
    safeguard_enabled: bool = False
    tol: float = 1e-12
    max_iter: int = 5000
    safeguard_margin: float = 1e-10   # absolute CHF slack kept inside each safeguard

    def resolved(self, model: PricingModel):
        """Copy with L and beta filled in; raises ConfigError on bad steps."""
        if self.c_min > self.c_max:
            raise ConfigError("price box is empty (c_min > c_max)")
        L = estimate_lipschitz(model) if self.lipschitz_L is None else float(self.lipschitz_L)
        beta = self.step_beta
        if L > 0:
            if beta is None:
                beta = 1.0 / L
            if not 0 < beta < 2.0 / L:
                raise ConfigError(f"step size {beta:g} is outside (0, 2/L) = (0, {2.0 / L:g})")
        elif beta is not None and beta <= 0:
            raise ConfigError("step size must be positive")
        return MediationConfig(beta, L, self.c_min, self.c_max, self.safeguard_enabled,
                               self.tol, self.max_iter, self.safeguard_margin)


@dataclass
class FairnessReport:
    hub_ids: tuple
    d: dict
    d_mean: float
    phi: float
    J: dict
    J_nt: dict
    trace: list = field(default_factory=list)   # (iter, phi, max_step)
    status: str = "Converged"
    iterations: int = 0
    excluded: tuple = ()

    @property
    def max_deviation(self):
        return max((abs(v - self.d_mean) for v in self.d.values()), default=0.0)


def _report(model, v, trace, status, iterations):
    d = model.reductions(v)
    inc = [model.hub_ids[k] for k in model.included]
    J = model.costs(v)
    return FairnessReport(
        hub_ids=model.hub_ids,
        d=dict(zip(inc, d.tolist())),
        d_mean=float(d.mean()) if d.size else 0.0,
        phi=fairness_metric(d),
        J=dict(zip(model.hub_ids, J.tolist())),
        J_nt=dict(zip(model.hub_ids, model.J_nt.tolist())),
        trace=trace, status=status, iterations=iterations, excluded=model.excluded,
    )


def project_prices(model: PricingModel, w, config: MediationConfig):
    """Euclidean projection onto the box, intersected with the safeguard
    halfspaces ``J_i(p*, c) <= J_i^nt`` when enabled."""
    w = np.asarray(w, dtype=float).reshape(-1)
    v = np.clip(w, config.c_min, config.c_max)
    if not config.safeguard_enabled:
        return v
    B = model.payment_matrix()
    rhs = model.J_nt - model.J0 - config.safeguard_margin
    if np.all(B @ v <= rhs):
        return v
    n = w.size
    prob = QpProblem(np.eye(n), -w, G=B, h=rhs, lb=np.full(n, config.c_min), ub=np.full(n, config.c_max))
    sol = solve_qp(prob, tol=1e-12)
    if sol.status is Status.INFEASIBLE:
        raise ProjectionInfeasible("price set is empty: safeguards cannot all hold inside the price box")
    if sol.status is not Status.OPTIMAL and sol.kkt.primal_ineq > 1e-9:
        raise ProjectionInfeasible(f"price projection did not converge ({sol.status.value})")
    return np.clip(sol.x, config.c_min, config.c_max)


def mediation_step(model: PricingModel, v, g, config: MediationConfig):
    """One projected gradient step ``Pi_C(v - beta g)``."""
    beta = config.step_beta if config.step_beta is not None else 0.0
    return project_prices(model, np.asarray(v) - beta * np.asarray(g), config)


def run_mediation(model: PricingModel, config: MediationConfig | None = None, c0: PriceProfile | None = None):
    """Price mediation rounds.

    Each round the coordinator gathers the hubs' reductions and broadcasts
    their mean; every pair's mediator then steps its own prices from the
    two endpoint reductions and the mean. With safeguards the step is
    followed by the joint projection. Stops when
    ``|delta phi| <= tol * max(1, phi)`` or after ``max_iter`` rounds.

    Returns ``(PriceProfile, FairnessReport)``.
    """
    config = (config or MediationConfig()).resolved(model)
    E, H = model.trades.shape
    v = np.zeros(E * H) if c0 is None else c0.vector()
    v = project_prices(model, v, config)
    inc = set(model.included)
    N = len(inc)
    pos = {h: k for k, h in enumerate(model.hub_ids)}

    phi = model.phi(v)
    trace = [(0, phi, 0.0)]
    if not config.lipschitz_L:
        log.info("all trades are zero; prices have no effect on fairness")
        return model.profile(v), _report(model, v, trace, "NoOp", 0)

    status = "MaxIter"
    k = 0
    for k in range(1, config.max_iter + 1):
        # hubs report d_i, coordinator broadcasts the mean
        J = model.costs(v)
        d = {idx: (model.J_nt[idx] - J[idx]) / model.J_nt[idx] for idx in inc}
        d_bar = float(np.mean(list(d.values())))
        g = np.zeros_like(v)
        for e, (i, j) in enumerate(model.pairs):
            a, b = pos[i], pos[j]
            g[e * H:(e + 1) * H] = pair_gradient(model.trades[e], model.J_nt[a], model.J_nt[b],
                                                 d.get(a), d.get(b), d_bar, N)
        v_new = mediation_step(model, v, g, config)
        phi_new = model.phi(v_new)
        step = float(np.max(np.abs(v_new - v))) if v.size else 0.0
        trace.append((k, phi_new, step))
        dphi = abs(phi - phi_new)
        v, phi = v_new, phi_new
        if dphi <= config.tol * max(1.0, phi):
            status = "Converged"
            break
    return model.profile(v), _report(model, v, trace, status, k)


# -- existence of beneficial prices ------------------------------------------

@dataclass
class BeneficialPriceCertificate:
    V: np.ndarray
    columns: list            # (i, j) or (i, j, hour) per column of V
    kappa: float
    prices: PriceProfile
    gaps: dict               # J_i(p*, c*) - J_i^nt
    components: list
    per_hour: bool = False
    tol: float = 1e-6

    @property
    def passed(self):
        return all(g <= self.tol for g in self.gaps.values())

    def as_dict(self):
        return {
            "V": self.V.tolist(),
            "columns": [list(c) for c in self.columns],
            "kappa": self.kappa,
            "c_star": {f"{i},{j}": self.prices.price(i, j).tolist() for i, j in self.prices.pairs},
            "gaps": self.gaps,
            "components": [list(c) for c in self.components],
            "per_hour": self.per_hour,
            "passed": self.passed,
        }


def _components(hub_ids, edges):
    parent = {h: h for h in hub_ids}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j in edges:
        parent[find(i)] = find(j)
    groups = {}
    for h in hub_ids:
        groups.setdefault(find(h), []).append(h)
    return list(groups.values())


def construct_beneficial_prices(model: PricingModel, per_hour=False, tol=1e-6, trade_eps=1e-9):
    """Prices that leave every hub no worse than without trading.

    The realized trades define a graph whose incidence matrix ``V`` has
    one column per traded pair (horizon-aggregated energy) or per traded
    pair-hour (``per_hour=True``). On each connected component the slack
    ``kappa = sum(J^nt - J(0))`` is split evenly by solving
    ``J(0) + V c = J^nt - kappa/N_comp`` in the minimum-norm sense.
    """
    hub_ids = model.hub_ids
    pos = {h: k for k, h in enumerate(hub_ids)}
    E, H = model.trades.shape
    cols, Vcols, edges = [], [], []
    for e, (i, j) in enumerate(model.pairs):
        if per_hour:
            for h in range(H):
                t = model.trades[e, h]
                if abs(t) > trade_eps:
                    cols.append((i, j, h))
                    Vcols.append((pos[i], pos[j], t))
                    edges.append((i, j))
        else:
            t = float(model.trades[e].sum())
            if abs(t) > trade_eps:
                cols.append((i, j))
                Vcols.append((pos[i], pos[j], t))
                edges.append((i, j))
            elif np.any(np.abs(model.trades[e]) > trade_eps):
                log.warning("pair %s-%s trades in both directions with zero net energy; "
                            "use per-hour prices for it", i, j)
    N = len(hub_ids)
    V = np.zeros((N, len(cols)))
    for k, (a, b, t) in enumerate(Vcols):
        V[a, k] = t
        V[b, k] = -t
    comps = _components(hub_ids, edges)
    traded = [c for c in comps if len(c) > 1]
    if len(traded) > 1:
        warnings.warn(f"realized trade graph has {len(traded)} components; solving each separately",
                      DisconnectedComponentHandled, stacklevel=2)

    W = float(model.J0.sum())
    W_nt = float(model.J_nt.sum())
    kappa = W_nt - W
    cvec = np.zeros(len(cols))
    for comp in comps:
        rows = [pos[h] for h in comp]
        ccols = [k for k, (a, b, _) in enumerate(Vcols) if a in rows]
        if not ccols:
            continue
        k_comp = float(np.sum(model.J_nt[rows] - model.J0[rows]))
        target = model.J_nt[rows] - k_comp / len(rows) - model.J0[rows]
        sol, *_ = np.linalg.lstsq(V[np.ix_(rows, ccols)], target, rcond=None)
        cvec[ccols] = sol

    values = np.zeros((E, H))
    pidx = {p: e for e, p in enumerate(model.pairs)}
    for k, col in enumerate(cols):
        e = pidx[(col[0], col[1])]
        if per_hour:
            values[e, col[2]] = cvec[k]
        else:
            values[e, :] = cvec[k]
    prices = PriceProfile(hub_ids, model.pairs, values)
    J = model.costs(prices.vector())
    gaps = {h: float(J[pos[h]] - model.J_nt[pos[h]]) for h in hub_ids}
    cert = BeneficialPriceCertificate(V, cols, kappa, prices, gaps, comps, per_hour, tol)
    if not cert.passed:
        raise CertificateFailed(f"constructed prices leave a hub worse off: {gaps}")
    return cert
