"""Dispatch game: centralized social-cost solve and the consensus protocol.

Both solvers return a :class:`DispatchResult`. The centralized solve stacks
every hub's blocks, keeps one trade variable per hub and direction, and
couples them with reciprocity rows. The distributed solve runs synchronous
consensus ADMM rounds over a simulated message network; each hub only ever
sees its own data plus the trade estimates its partners broadcast.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np
import scipy.linalg as sla

from .errors import InfeasibleHub, InfeasibleNetwork, MaxIterExceeded
from .hub import assemble_local_blocks, local_cost, non_trading_baseline
from .profiles import DispatchProfile, PriceProfile
from .qp import QpProblem, QpSolver, Status, solve_qp
from .scenario import Scenario

log = logging.getLogger(__name__)


@dataclass
class RoundMessage:
    sender: str
    receiver: str
    iteration: int
    own: list        # sender's estimate of p_tr[sender][receiver]
    mirror: list     # sender's estimate of p_tr[receiver][sender]

    def to_json(self):
        return json.dumps({"sender": self.sender, "receiver": self.receiver, "iteration": self.iteration,
                           "own": self.own, "mirror": self.mirror})


@dataclass
class DispatchResult:
    profile: DispatchProfile
    costs: dict
    W: float
    prices: PriceProfile
    mode: str = "central"
    status: str = "Optimal"
    iterations: int = 0
    trace: list = field(default_factory=list)   # dicts: iter, primal_res, dual_res, W
    messages: list = field(default_factory=list)
    messages_per_iteration: list = field(default_factory=list)

    @property
    def message_count(self):
        return sum(self.messages_per_iteration)

    def J(self, hub_id):
        return self.costs[hub_id].total

    def write_message_log(self, path):
        with Path(path).open("w") as fh:
            for m in self.messages:
                fh.write(m.to_json() + "\n")


def network_baseline(s: Scenario, tol=1e-9) -> dict:
    """Non-trading optimum of every hub, keyed by hub id."""
    return {hub.id: non_trading_baseline(hub, s, tol=tol) for hub in s.hubs}


def _costs_for(s, profile, prices):
    costs = {}
    for hub in s.hubs:
        trades = profile.hub_trades(hub.id)
        costs[hub.id] = local_cost(hub, profile.setpoints[hub.id], trades, prices.hub_prices(hub.id),
                                   s.tariffs, s.trading_tariff_gamma, s.import_regularization_weight)
    return costs


def evaluate_profile(s: Scenario, profile: DispatchProfile, prices: PriceProfile):
    """Per-hub costs and W of a fixed profile under ``prices``."""
    costs = _costs_for(s, profile, prices)
    return costs, sum(c.total for c in costs.values())


def _assemble_all(s, prices):
    try:
        return [assemble_local_blocks(hub, s, prices) for hub in s.hubs]
    except InfeasibleHub as e:
        raise InfeasibleNetwork(str(e)) from e


def solve_centralized(s: Scenario, c: PriceProfile | None = None, tol=1e-9, max_iter=50_000) -> DispatchResult:
    """Minimize the social cost W over all hubs jointly."""
    if c is None:
        c = PriceProfile.zero(s)
    blocks = _assemble_all(s, c)
    H = s.horizon_hours
    offs = np.cumsum([0] + [b.layout.n for b in blocks])
    n = int(offs[-1])
    P = sla.block_diag(*[b.P for b in blocks]) if blocks else np.zeros((0, 0))
    q = np.concatenate([b.q for b in blocks])
    b_ = np.concatenate([b.b for b in blocks])
    A = _stack_rows([b.A for b in blocks], offs, n)
    G = _stack_rows([b.G for b in blocks], offs, n)
    h = np.concatenate([b.h for b in blocks])
    lb = np.concatenate([b.lb for b in blocks])
    ub = np.concatenate([b.ub for b in blocks])

    pos = {b.hub_id: k for k, b in enumerate(blocks)}
    recip = []
    for i, j in s.pairs():
        bi, bj = blocks[pos[i]], blocks[pos[j]]
        si, sj = bi.trade_slice(j), bj.trade_slice(i)
        for hh in range(H):
            r = np.zeros(n)
            r[offs[pos[i]] + si.start + hh] = 1.0
            r[offs[pos[j]] + sj.start + hh] = 1.0
            recip.append(r)
    if recip:
        A = np.vstack([A, np.array(recip)])
        b_ = np.concatenate([b_, np.zeros(len(recip))])

    prob = QpProblem(P, q, A, b_, G, h, lb, ub)
    sol = solve_qp(prob, tol=tol, max_iter=max_iter)
    if sol.status is Status.INFEASIBLE:
        raise InfeasibleNetwork("social cost problem is infeasible")
    if sol.status is not Status.OPTIMAL:
        log.warning("centralized solve stopped with %s (KKT %.2e)", sol.status.value, sol.kkt.max())

    xs = {b.hub_id: sol.x[offs[k]:offs[k + 1]] for k, b in enumerate(blocks)}
    profile = _profile_from_local(s, blocks, xs)
    costs, W = evaluate_profile(s, profile, c)
    return DispatchResult(profile, costs, W, c, mode="central", status=sol.status.value,
                          iterations=sol.iterations)


def _stack_rows(mats, offs, n):
    rows = sum(m.shape[0] for m in mats)
    out = np.zeros((rows, n))
    r = 0
    for k, m in enumerate(mats):
        out[r:r + m.shape[0], offs[k]:offs[k + 1]] = m
        r += m.shape[0]
    return out


def _profile_from_local(s, blocks, xs, trades=None):
    """Build a reciprocal profile; canonical trades default to the average
    of the two endpoint variables."""
    hub_spec = {h.id: h for h in s.hubs}
    setpoints = {}
    local_trades = {}
    for b in blocks:
        sp, tr = b.unpack(xs[b.hub_id], hub_spec[b.hub_id])
        setpoints[b.hub_id] = sp
        local_trades[b.hub_id] = tr
    pairs = s.pairs()
    if trades is None:
        trades = np.array([0.5 * (local_trades[i][j] - local_trades[j][i]) for i, j in pairs]).reshape(len(pairs), s.horizon_hours)
    return DispatchProfile(s.hub_ids, pairs, trades, setpoints)


def social_cost_gap(s: Scenario, c: PriceProfile | None = None, result=None, baseline=None):
    """``(W, W_nt, (W_nt - W) / W_nt)``."""
    if result is None:
        result = solve_centralized(s, c)
    if baseline is None:
        baseline = network_baseline(s)
    W_nt = sum(b.J for b in baseline.values())
    return result.W, W_nt, (W_nt - result.W) / W_nt


# -- consensus protocol --------------------------------------------------------

@dataclass
class AdmmState:
    """Consensus variables of one round.

    ``p`` holds the agreed trade per canonical pair (row) and hour; the
    reversed direction is its negative. ``est[(a, i, j)]`` is hub ``a``'s
    estimate of ``p_tr[i][j]`` and ``lam[(a, i, j)]`` the matching dual.
    """

    p: np.ndarray
    est: dict
    lam: dict
    k: int = 0
    history: list = field(default_factory=list)


def average_estimates(own, mirror):
    """Agreed trade from the two endpoints' estimates of the same direction."""
    return 0.5 * (np.asarray(own, dtype=float) + np.asarray(mirror, dtype=float))


def dual_update(lam, rho, estimate, agreed):
    """Scaled-gradient step on one copy's consensus constraint."""
    return np.asarray(lam, dtype=float) + rho * (np.asarray(estimate, dtype=float) - np.asarray(agreed, dtype=float))


class _LocalAgent:
    """One hub's side of the protocol: private blocks plus a warm solver."""

    def __init__(self, s, hub, prices, rho, tol):
        self.hub = hub
        self.blocks = assemble_local_blocks(hub, s, prices)
        self.partners = self.blocks.partners
        self.rho = rho
        self.tol = tol
        b = self.blocks
        H = s.horizon_hours
        n0 = b.layout.n
        k = len(self.partners)
        n = n0 + k * H
        # mirror estimates p_tr[j][i] sit after the local vector
        self.mirror_off = {j: n0 + t * H for t, j in enumerate(self.partners)}
        P = np.zeros((n, n))
        P[:n0, :n0] = b.P
        idx_own = np.concatenate([np.arange(b.trade_slice(j).start, b.trade_slice(j).stop) for j in self.partners]) if k else np.zeros(0, int)
        idx_mir = np.arange(n0, n)
        P[idx_own, idx_own] += rho
        P[idx_mir, idx_mir] += rho
        A = np.zeros((b.A.shape[0] + k * H, n))
        A[:b.A.shape[0], :n0] = b.A
        r = b.A.shape[0]
        for j in self.partners:
            for hh in range(H):
                A[r, b.trade_slice(j).start + hh] = 1.0
                A[r, self.mirror_off[j] + hh] = 1.0
                r += 1
        G = np.zeros((b.G.shape[0], n))
        G[:, :n0] = b.G
        lb = np.concatenate([b.lb, np.concatenate([-np.full(H, s.kappa(hub.id, j)) for j in self.partners]) if k else np.zeros(0)])
        ub = np.concatenate([b.ub, np.concatenate([np.full(H, s.kappa(hub.id, j)) for j in self.partners]) if k else np.zeros(0)])
        self.q0 = np.concatenate([b.q, np.zeros(k * H)])
        self.n0 = n0
        self.H = H
        self._P0 = P.copy()
        P[idx_own, idx_own] -= rho
        P[idx_mir, idx_mir] -= rho
        self._P_base = P
        self._idx_aug = np.concatenate([idx_own, idx_mir]).astype(int)
        self._qp_rest = (A, np.concatenate([b.b, np.zeros(k * H)]), G, b.h, lb, ub)
        self.solver = QpSolver(QpProblem(self._P0, self.q0.copy(), *self._qp_rest))
        self.x = None
        self._last_sol = None
        self._warm = None

    def set_rho(self, rho):
        self.rho = rho
        P = self._P_base.copy()
        P[self._idx_aug, self._idx_aug] += rho
        self.solver = QpSolver(QpProblem(P, self.q0.copy(), *self._qp_rest))
        self._warm = self._last_sol

    def own_slice(self, j):
        return self.blocks.trade_slice(j)

    def mirror_slice(self, j):
        o = self.mirror_off[j]
        return slice(o, o + self.H)

    def solve(self, p_own, p_mir, lam_own, lam_mir):
        """Minimize the local augmented Lagrangian for fixed consensus values."""
        q = self.q0.copy()
        for j in self.partners:
            q[self.own_slice(j)] += lam_own[j] - self.rho * p_own[j]
            q[self.mirror_slice(j)] += lam_mir[j] - self.rho * p_mir[j]
        self.solver.update_q(q)
        sol = self.solver.solve(tol=self.tol, warm_start=self._warm)
        self._warm = None
        self._last_sol = sol
        if sol.status is Status.INFEASIBLE:
            raise InfeasibleHub(self.hub.id, None, "local augmented Lagrangian problem is infeasible")
        self.x = sol.x
        own = {j: sol.x[self.own_slice(j)].copy() for j in self.partners}
        mir = {j: sol.x[self.mirror_slice(j)].copy() for j in self.partners}
        return own, mir


def run_admm(s: Scenario, c: PriceProfile | None = None, tol=1e-4, max_iter=2000, rho=None,
             local_tol=1e-9, record_messages=True, hub_order=None, adapt_rounds=40) -> DispatchResult:
    """Distributed dispatch by synchronous consensus ADMM.

    Each round: every hub minimizes its augmented Lagrangian over its own
    variables and its estimates of both trade directions with each partner,
    broadcasts those estimates, then both endpoints average them and update
    their duals. Stops when ``max |estimate - agreed| <= tol`` and
    ``rho * max |agreed change| <= tol``.

    After agreement each hub re-solves its own problem with the trades fixed
    to the agreed values, so the reported setpoints balance exactly.
    ``hub_order`` only permutes the order of the (independent) local solves
    inside a round and never changes the result.

    ``rho`` (default: the scenario's) is the starting penalty. During the
    first ``adapt_rounds`` rounds it is rebalanced (halved or doubled when
    one residual exceeds the other tenfold, a common rule known as residual
    balancing) and then frozen; ``adapt_rounds=0`` keeps it fixed. The
    rebalancing is a deterministic function of broadcast quantities, so
    every hub can apply it without extra messages.
    """
    if c is None:
        c = PriceProfile.zero(s)
    rho = s.admm_penalty_rho if rho is None else rho
    if not rho > 0:
        raise ValueError("ADMM penalty rho must be positive")
    H = s.horizon_hours
    pairs = s.pairs()
    try:
        agents = {hub.id: _LocalAgent(s, hub, c, rho, local_tol) for hub in s.hubs}
    except InfeasibleHub as e:
        raise InfeasibleNetwork(str(e)) from e
    rho_bounds = (rho * 1e-6, rho * 1e3)
    order = list(hub_order) if hub_order is not None else s.hub_ids
    if sorted(order) != sorted(s.hub_ids):
        raise ValueError("hub_order must be a permutation of the hub ids")

    state = AdmmState(p=np.zeros((len(pairs), H)), est={}, lam={})
    for i, j in pairs:
        for a in (i, j):
            for key in ((a, i, j), (a, j, i)):
                state.lam[key] = np.zeros(H)
    result_trace = []
    messages = []
    per_iter = []
    status = "MaxIter"
    best = None

    for k in range(1, max_iter + 1):
        agreed = DispatchProfile(s.hub_ids, pairs, state.p)
        # (1) local solves, all from the previous round's data
        outs = {}
        for a in order:
            ag = agents[a]
            p_own = {j: agreed.trade(a, j) for j in ag.partners}
            p_mir = {j: agreed.trade(j, a) for j in ag.partners}
            lam_own = {j: state.lam[(a, a, j)] for j in ag.partners}
            lam_mir = {j: state.lam[(a, j, a)] for j in ag.partners}
            outs[a] = ag.solve(p_own, p_mir, lam_own, lam_mir)
        # (2) broadcast
        sent = 0
        for a in s.hub_ids:
            own, mir = outs[a]
            for j in agents[a].partners:
                if record_messages:
                    messages.append(RoundMessage(a, j, k, own[j].tolist(), mir[j].tolist()))
                sent += 1
        per_iter.append(sent)
        est = {}
        for a in s.hub_ids:
            own, mir = outs[a]
            for j in agents[a].partners:
                est[(a, a, j)] = own[j]
                est[(a, j, a)] = mir[j]
        # (3) averaging on the canonical direction; the mirror is derived
        new_p = np.array([average_estimates(est[(i, i, j)], est[(j, i, j)]) for i, j in pairs]).reshape(len(pairs), H)
        new_prof = DispatchProfile(s.hub_ids, pairs, new_p)
        assert new_prof.reciprocity_error() == 0.0
        # (4) dual update per copy
        new_lam = {}
        primal = 0.0
        for key, e in est.items():
            _, i, j = key
            gap = e - new_prof.trade(i, j)
            new_lam[key] = dual_update(state.lam[key], rho, e, new_prof.trade(i, j))
            primal = max(primal, float(np.max(np.abs(gap))) if gap.size else 0.0)
        dp = new_p - state.p
        dual = rho * (float(np.max(np.abs(dp))) if dp.size else 0.0)
        combined = np.sqrt(rho * 4.0 * float(np.sum(dp ** 2))
                           + sum(float(np.sum((new_lam[key] - state.lam[key]) ** 2)) for key in new_lam) / rho)
        state = AdmmState(new_p, est, new_lam, k, state.history)
        W_k = _round_social_cost(s, agents, c)
        result_trace.append({"iter": k, "primal_res": primal, "dual_res": dual, "combined_res": combined, "W": W_k})
        result_trace[-1]["rho"] = rho
        if best is None or max(primal, dual) < best[0]:
            best = (max(primal, dual), new_p.copy())
        if primal <= tol and dual <= tol:
            status = "Optimal"
            break
        if k <= adapt_rounds:
            factor = 2.0 if primal > 10.0 * dual else 0.5 if dual > 10.0 * primal else 1.0
            new_rho = float(np.clip(rho * factor, rho_bounds[0], rho_bounds[1]))
            if new_rho != rho:
                rho = new_rho
                for ag in agents.values():
                    ag.set_rho(rho)

    log.info("consensus ADMM: %s after %d rounds", status, k)
    final_p = state.p if status == "Optimal" else best[1]
    res = _finalize(s, c, pairs, final_p, local_tol)
    res.mode = "admm"
    res.status = status
    res.iterations = k
    res.trace = result_trace
    res.messages = messages
    res.messages_per_iteration = per_iter
    if status != "Optimal":
        raise MaxIterExceeded(f"consensus ADMM did not converge in {max_iter} rounds", result=res)
    return res


def _round_social_cost(s, agents, c):
    """Sum of local objectives (without augmentation) at the current estimates."""
    total = 0.0
    for a, ag in agents.items():
        x = ag.x[:ag.n0]
        total += float(0.5 * x @ ag.blocks.P @ x + ag.blocks.q @ x)
    return total


def _finalize(s, c, pairs, p, tol):
    """Fix trades at the agreed values and re-solve every hub's own problem."""
    profile = DispatchProfile(s.hub_ids, pairs, p)
    xs = {}
    blocks = []
    for hub in s.hubs:
        b = assemble_local_blocks(hub, s, c)
        lb, ub = b.lb.copy(), b.ub.copy()
        for j in b.partners:
            sl = b.trade_slice(j)
            lb[sl] = ub[sl] = profile.trade(hub.id, j)
        sol = solve_qp(QpProblem(b.P, b.q, b.A, b.b, b.G, b.h, lb, ub), tol=tol)
        if sol.status is Status.INFEASIBLE:
            raise InfeasibleNetwork(f"hub {hub.id!r} cannot realize the agreed trades")
        xs[hub.id] = sol.x
        blocks.append(b)
    full = _profile_from_local(s, blocks, xs, trades=p)
    costs, W = evaluate_profile(s, full, c)
    return DispatchResult(full, costs, W, c)


def replay_consensus(messages, pairs, horizon):
    """Recompute the agreed trades of every round from a message log alone."""
    by_round = {}
    for m in messages:
        by_round.setdefault(m.iteration, {})[(m.sender, m.receiver)] = m
    out = []
    for k in sorted(by_round):
        msgs = by_round[k]
        p = np.zeros((len(pairs), horizon))
        for e, (i, j) in enumerate(pairs):
            # hub i's own estimate of p_ij and hub j's mirror estimate of it
            p[e] = average_estimates(msgs[(i, j)].own, msgs[(j, i)].mirror)
        out.append(p)
    return out


def verify_price_invariance(s: Scenario, prices, tol=1e-3, solver=None):
    """Solve the game under each price profile and compare the argmins.

    Passes iff the trade tensors agree within ``tol`` (kW) pairwise. The
    setpoint deviation is reported too but does not decide the verdict:
    asset costs are linear, so setpoints on a degenerate optimal face are
    not unique even though the trades are.
    """
    prices = list(prices)
    if len(prices) < 2:
        raise ValueError("need at least two price profiles")
    solver = solver or solve_centralized
    results = [solver(s, c) for c in prices]
    trade_dev = 0.0
    setpoint_dev = 0.0
    for a, b in combinations(range(len(results)), 2):
        ra, rb = results[a].profile, results[b].profile
        if ra.trades.size:
            trade_dev = max(trade_dev, float(np.max(np.abs(ra.trades - rb.trades))))
        for hid in s.hub_ids:
            for name, v in ra.setpoints[hid].items():
                setpoint_dev = max(setpoint_dev, float(np.max(np.abs(v - rb.setpoints[hid][name]))))
    return InvarianceReport(trade_dev, setpoint_dev, tol, trade_dev <= tol, results)


@dataclass
class InvarianceReport:
    max_trade_deviation: float
    max_setpoint_deviation: float
    tol: float
    passed: bool
    results: list = field(default_factory=list, repr=False)
