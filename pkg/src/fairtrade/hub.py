"""Energy hub physics and costs as QP blocks.

Decision vector of one hub
--------------------------
The vector is a concatenation of named blocks of length H; inside a block
the hour is the fastest-varying index (``x[offset(name) + h]``). Blocks
appear in this fixed order, skipping assets the hub does not have:

=================  ===========================================  ======
block              meaning                                      unit
=================  ===========================================  ======
grid_import        electricity bought from the utility          kW
grid_feed_in       electricity sold to the utility              kW
chp_w_A .. chp_w_D CHP vertex weights (simplex per hour)        -
hp_q               heat pump heat output (input is hp_q / COP)  kW
gb_q               gas boiler heat output (fuel is gb_q / eta)  kW
es_soc/ch/dc       electrical storage state, charge, discharge  kWh/kW
ts_soc/ch/dc       thermal storage state, charge, discharge     kWh/kW
trade:<partner>    net import from ``partner``, partners in hub kW
                   order
=================  ===========================================  ======

PV output is not a decision variable; it is the clipped irradiance
conversion and enters the electric balance as a constant.

Equalities: electric and thermal balance per hour, CHP simplex per hour,
storage dynamics per hour. Inequalities: terminal state of charge not below
its initial value; everything else is a variable bound.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleHub, WeightError
from .qp import QpProblem, Status, solve_qp
from .scenario import ChpSpec, HubSpec, PvSpec, Scenario, StorageSpec

VERTEX_NAMES = ("A", "B", "C", "D")


def pv_output(spec: PvSpec | None, irradiance) -> np.ndarray:
    """PV power ``min(eta * I * area, p_max)``, never negative."""
    irr = np.asarray(irradiance, dtype=float)
    if spec is None:
        return np.zeros_like(irr)
    raw = spec.eta * irr * spec.area_m2
    return np.clip(raw, 0.0, spec.p_max)


def chp_point(spec: ChpSpec, weights):
    """Electric output, heat output and fuel input for simplex weights."""
    w = np.asarray(weights, dtype=float)
    if w.shape != (4,) or np.any(w < -1e-9) or abs(w.sum() - 1.0) > 1e-9:
        raise WeightError(f"CHP weights {w.tolist()} are not a point of the simplex")
    p = float(w @ np.asarray(spec.p_vertices, dtype=float))
    q = float(w @ np.asarray(spec.q_vertices, dtype=float))
    return p, q, p / spec.eta


@dataclass
class Layout:
    horizon: int
    names: list = field(default_factory=list)
    offsets: dict = field(default_factory=dict)

    def add(self, name):
        self.offsets[name] = len(self.names) * self.horizon
        self.names.append(name)

    @property
    def n(self):
        return len(self.names) * self.horizon

    def sl(self, name):
        o = self.offsets[name]
        return slice(o, o + self.horizon)

    def idx(self, name, h):
        return self.offsets[name] + h

    def __contains__(self, name):
        return name in self.offsets


def hub_layout(hub: HubSpec, horizon, partners=()):
    lay = Layout(horizon)
    lay.add("grid_import")
    lay.add("grid_feed_in")
    if hub.chp is not None:
        for v in VERTEX_NAMES:
            lay.add(f"chp_w_{v}")
    if hub.hp is not None:
        lay.add("hp_q")
    if hub.gb is not None:
        lay.add("gb_q")
    for kind in ("es", "ts"):
        if getattr(hub, kind) is not None:
            for part in ("soc", "ch", "dc"):
                lay.add(f"{kind}_{part}")
    for j in partners:
        lay.add(f"trade:{j}")
    return lay


@dataclass
class LocalBlocks:
    """Cost, equality and inequality blocks of one hub."""

    hub_id: str
    layout: Layout
    partners: list
    P: np.ndarray
    q: np.ndarray
    A: np.ndarray
    b: np.ndarray
    G: np.ndarray
    h: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    pv: np.ndarray
    row_labels: list

    def problem(self):
        return QpProblem(self.P, self.q, self.A, self.b, self.G, self.h, self.lb, self.ub)

    def trade_slice(self, partner):
        return self.layout.sl(f"trade:{partner}")

    def unpack(self, x, hub: HubSpec):
        """Setpoint series (raw blocks plus derived outputs) and trades."""
        lay = self.layout
        x = np.asarray(x, dtype=float)
        sp = {name: x[lay.sl(name)].copy() for name in lay.names if not name.startswith("trade:")}
        sp["pv_p"] = self.pv.copy()
        if hub.chp is not None:
            W = np.vstack([sp[f"chp_w_{v}"] for v in VERTEX_NAMES])
            sp["chp_p"] = np.asarray(hub.chp.p_vertices, dtype=float) @ W
            sp["chp_q"] = np.asarray(hub.chp.q_vertices, dtype=float) @ W
            sp["chp_fuel"] = sp["chp_p"] / hub.chp.eta
        if hub.hp is not None:
            sp["hp_p"] = sp["hp_q"] / hub.hp.cop
        if hub.gb is not None:
            sp["gb_fuel"] = sp["gb_q"] / hub.gb.eta
        trades = {j: x[lay.sl(f"trade:{j}")].copy() for j in self.partners}
        return sp, trades


def _storage_rows(st: StorageSpec, lay, kind, H):
    rows, rhs = [], []
    soc, ch, dc = (lay.offsets[f"{kind}_{p}"] for p in ("soc", "ch", "dc"))
    for hh in range(H):
        r = np.zeros(lay.n)
        r[soc + hh] = 1.0
        r[ch + hh] = -st.cycle_eta
        r[dc + hh] = 1.0 / st.cycle_eta
        if hh == 0:
            rhs.append(st.standby_gamma * st.soc_initial)
        else:
            r[soc + hh - 1] = -st.standby_gamma
            rhs.append(0.0)
        rows.append(r)
    return rows, rhs


def check_hub_feasibility(hub: HubSpec, scenario: Scenario, partners=(), trades_open=True):
    """Per-hour capacity screen; raises InfeasibleHub at the first bad hour.

    Storage is allowed its full charge/discharge range each hour, so this
    is a necessary condition only; the full QP is the final word.
    """
    H = scenario.horizon_hours
    d = scenario.demand[hub.id]
    pv = pv_output(hub.pv, scenario.irradiance.get(hub.id, np.zeros(H)))
    kappa = sum(scenario.kappa(hub.id, j) for j in partners) if trades_open else 0.0

    q_hi = q_lo = 0.0
    p_hi = p_lo = 0.0
    if hub.chp is not None:
        q_hi += max(hub.chp.q_vertices)
        q_lo += min(hub.chp.q_vertices)
        p_hi += max(hub.chp.p_vertices)
        p_lo += min(hub.chp.p_vertices)
    if hub.hp is not None:
        q_hi += hub.hp.q_max
        q_lo += hub.hp.q_min
    if hub.gb is not None:
        q_hi += hub.gb.q_max
        q_lo += hub.gb.q_min
    if hub.ts is not None:
        q_hi += hub.ts.discharge_max - hub.ts.charge_min
        q_lo += hub.ts.discharge_min - hub.ts.charge_max
    # electric supply range, HP consumption counted at its extremes
    hp_e_hi = hub.hp.q_max / hub.hp.cop if hub.hp else 0.0
    hp_e_lo = hub.hp.q_min / hub.hp.cop if hub.hp else 0.0
    es_hi = (hub.es.discharge_max - hub.es.charge_min) if hub.es else 0.0
    es_lo = (hub.es.discharge_min - hub.es.charge_max) if hub.es else 0.0
    for hh in range(H):
        lh = d.thermal[hh]
        if lh > q_hi + 1e-9:
            raise InfeasibleHub(hub.id, hh, f"thermal demand {lh:g} kW exceeds heat capacity {q_hi:g} kW")
        if lh < q_lo - 1e-9:
            raise InfeasibleHub(hub.id, hh, f"minimum heat output {q_lo:g} kW exceeds demand {lh:g} kW")
        le = d.electric[hh]
        supply_hi = p_hi + pv[hh] + hub.import_max + es_hi + kappa - hp_e_lo
        supply_lo = p_lo + pv[hh] - hub.export_max + es_lo - kappa - hp_e_hi
        if le > supply_hi + 1e-9:
            raise InfeasibleHub(hub.id, hh, f"electric demand {le:g} kW exceeds supply {supply_hi:g} kW")
        if le < supply_lo - 1e-9:
            raise InfeasibleHub(hub.id, hh, f"surplus electricity cannot be absorbed ({supply_lo:g} kW)")


def assemble_local_blocks(hub: HubSpec, scenario: Scenario, prices=None, partners=None,
                          check=True) -> LocalBlocks:
    """Build the QP blocks of one hub.

    ``prices`` is anything with ``price(i, j) -> (H,)`` (a PriceProfile);
    ``None`` means zero prices. ``partners`` defaults to the hub's linked
    partners; pass ``[]`` for the no-trading problem.
    """
    H = scenario.horizon_hours
    if partners is None:
        partners = scenario.partners(hub.id)
    partners = list(partners)
    if check:
        check_hub_feasibility(hub, scenario, partners)
    lay = hub_layout(hub, H, partners)
    n = lay.n
    t = scenario.tariffs
    d = scenario.demand[hub.id]
    pv = pv_output(hub.pv, scenario.irradiance.get(hub.id, np.zeros(H)))

    q = np.zeros(n)
    P = np.zeros((n, n))
    lb = np.zeros(n)
    ub = np.full(n, np.inf)

    q[lay.sl("grid_import")] = t.grid_import
    q[lay.sl("grid_feed_in")] = -t.grid_feed_in
    ub[lay.sl("grid_import")] = hub.import_max
    ub[lay.sl("grid_feed_in")] = hub.export_max
    imp = lay.sl("grid_import")
    P[imp, imp] += 2.0 * scenario.import_regularization_weight

    if hub.chp is not None:
        for v, pj in zip(VERTEX_NAMES, hub.chp.p_vertices):
            q[lay.sl(f"chp_w_{v}")] = t.gas * pj / hub.chp.eta
            ub[lay.sl(f"chp_w_{v}")] = 1.0
    if hub.hp is not None:
        lb[lay.sl("hp_q")], ub[lay.sl("hp_q")] = hub.hp.q_min, hub.hp.q_max
    if hub.gb is not None:
        q[lay.sl("gb_q")] = t.gas / hub.gb.eta
        lb[lay.sl("gb_q")], ub[lay.sl("gb_q")] = hub.gb.q_min, hub.gb.q_max
    for kind in ("es", "ts"):
        st = getattr(hub, kind)
        if st is None:
            continue
        for part, lo, hi in (("soc", st.soc_min, st.soc_max), ("ch", st.charge_min, st.charge_max),
                             ("dc", st.discharge_min, st.discharge_max)):
            lb[lay.sl(f"{kind}_{part}")], ub[lay.sl(f"{kind}_{part}")] = lo, hi

    gamma = scenario.trading_tariff_gamma
    for j in partners:
        s = lay.sl(f"trade:{j}")
        kap = scenario.kappa(hub.id, j)
        lb[s], ub[s] = -kap, kap
        if prices is not None:
            q[s] = prices.price(hub.id, j)
        P[s, s] += 2.0 * gamma * np.eye(H)

    rows, rhs, labels = [], [], []
    for hh in range(H):
        r = np.zeros(n)
        r[lay.idx("grid_import", hh)] = 1.0
        r[lay.idx("grid_feed_in", hh)] = -1.0
        if hub.chp is not None:
            for v, pj in zip(VERTEX_NAMES, hub.chp.p_vertices):
                r[lay.idx(f"chp_w_{v}", hh)] = pj
        if hub.hp is not None:
            r[lay.idx("hp_q", hh)] = -1.0 / hub.hp.cop
        if hub.es is not None:
            r[lay.idx("es_ch", hh)] = -1.0
            r[lay.idx("es_dc", hh)] = 1.0
        for j in partners:
            r[lay.idx(f"trade:{j}", hh)] = 1.0
        rows.append(r)
        rhs.append(d.electric[hh] - pv[hh])
        labels.append(("electric", hh))
    for hh in range(H):
        r = np.zeros(n)
        if hub.chp is not None:
            for v, qj in zip(VERTEX_NAMES, hub.chp.q_vertices):
                r[lay.idx(f"chp_w_{v}", hh)] = qj
        if hub.hp is not None:
            r[lay.idx("hp_q", hh)] = 1.0
        if hub.gb is not None:
            r[lay.idx("gb_q", hh)] = 1.0
        if hub.ts is not None:
            r[lay.idx("ts_ch", hh)] = -1.0
            r[lay.idx("ts_dc", hh)] = 1.0
        if not np.any(r):
            if abs(d.thermal[hh]) > 0:
                raise InfeasibleHub(hub.id, hh, "thermal demand but no heat source")
            continue
        rows.append(r)
        rhs.append(d.thermal[hh])
        labels.append(("thermal", hh))
    if hub.chp is not None:
        for hh in range(H):
            r = np.zeros(n)
            for v in VERTEX_NAMES:
                r[lay.idx(f"chp_w_{v}", hh)] = 1.0
            rows.append(r)
            rhs.append(1.0)
            labels.append(("chp_simplex", hh))

    G, h = [], []
    for kind in ("es", "ts"):
        st = getattr(hub, kind)
        if st is None:
            continue
        srows, srhs = _storage_rows(st, lay, kind, H)
        rows += srows
        rhs += srhs
        labels += [(f"{kind}_dynamics", hh) for hh in range(H)]
        g = np.zeros(n)
        g[lay.idx(f"{kind}_soc", H - 1)] = -1.0
        G.append(g)
        h.append(-st.soc_initial)

    A = np.array(rows) if rows else np.zeros((0, n))
    return LocalBlocks(
        hub_id=hub.id, layout=lay, partners=partners, P=P, q=q,
        A=A, b=np.array(rhs, dtype=float),
        G=np.array(G) if G else np.zeros((0, n)), h=np.array(h, dtype=float),
        lb=lb, ub=ub, pv=pv, row_labels=labels,
    )


@dataclass
class CostBreakdown:
    hub_id: str
    assets: dict
    trade_payments: float
    tariff_charges: float
    total: float

    def as_dict(self):
        return {"hub": self.hub_id, **{f"asset_{k}": v for k, v in self.assets.items()},
                "trade_payments": self.trade_payments, "tariff_charges": self.tariff_charges,
                "total": self.total}


def local_cost(hub: HubSpec, setpoints: dict, trades: dict, prices: dict, tariffs, gamma,
               import_reg=0.0) -> CostBreakdown:
    """Cost of one hub for given setpoints, trades and per-partner prices.

    ``trades`` and ``prices`` map partner id to hourly series; a positive
    trade is an import, so an export earns ``-c * p``.
    """
    imp = np.asarray(setpoints["grid_import"], dtype=float)
    assets = {
        "grid_import": float(tariffs.grid_import * imp.sum()),
        "grid_feed_in": float(-tariffs.grid_feed_in * np.sum(setpoints["grid_feed_in"])),
    }
    if hub.chp is not None:
        fuel = setpoints.get("chp_fuel")
        if fuel is None:
            W = np.vstack([setpoints[f"chp_w_{v}"] for v in VERTEX_NAMES])
            fuel = np.asarray(hub.chp.p_vertices, dtype=float) @ W / hub.chp.eta
        assets["gas_chp"] = float(tariffs.gas * np.sum(fuel))
    if hub.gb is not None:
        assets["gas_gb"] = float(tariffs.gas * np.sum(setpoints["gb_q"]) / hub.gb.eta)
    if import_reg:
        assets["import_regularization"] = float(import_reg * imp.sum() ** 2)
    pay = 0.0
    charge = 0.0
    for j, p in trades.items():
        p = np.asarray(p, dtype=float)
        c = np.asarray(prices.get(j, np.zeros_like(p)), dtype=float)
        pay += float(c @ p)
        charge += float(gamma * (p @ p))
    total = sum(assets.values()) + pay + charge
    return CostBreakdown(hub.id, assets, pay, charge, total)


@dataclass
class HubSolution:
    hub_id: str
    setpoints: dict
    trades: dict
    cost: CostBreakdown
    qp_status: Status
    kkt_max: float

    @property
    def J(self):
        return self.cost.total


def non_trading_baseline(hub: HubSpec, scenario: Scenario, qp_solver=solve_qp, tol=1e-9) -> HubSolution:
    """Optimal dispatch of ``hub`` with every trade fixed to zero."""
    blocks = assemble_local_blocks(hub, scenario, partners=[])
    sol = qp_solver(blocks.problem(), tol=tol)
    if sol.status is Status.INFEASIBLE:
        raise InfeasibleHub(hub.id, None, "no feasible dispatch without trading")
    sp, _ = blocks.unpack(sol.x, hub)
    cost = local_cost(hub, sp, {}, {}, scenario.tariffs, scenario.trading_tariff_gamma,
                      scenario.import_regularization_weight)
    return HubSolution(hub.id, sp, {}, cost, sol.status, sol.kkt.max())


def balance_residuals(hub: HubSpec, scenario: Scenario, setpoints: dict, trades: dict):
    """Max electric and thermal balance residuals (kW) of a hub dispatch."""
    H = scenario.horizon_hours
    d = scenario.demand[hub.id]
    e = (setpoints["grid_import"] - setpoints["grid_feed_in"] + setpoints["pv_p"]
         + sum((np.asarray(p) for p in trades.values()), np.zeros(H)))
    th = np.zeros(H)
    if hub.chp is not None:
        e = e + setpoints["chp_p"]
        th = th + setpoints["chp_q"]
    if hub.hp is not None:
        e = e - setpoints["hp_p"]
        th = th + setpoints["hp_q"]
    if hub.gb is not None:
        th = th + setpoints["gb_q"]
    if hub.es is not None:
        e = e + setpoints["es_dc"] - setpoints["es_ch"]
    if hub.ts is not None:
        th = th + setpoints["ts_dc"] - setpoints["ts_ch"]
    return float(np.max(np.abs(e - d.electric))), float(np.max(np.abs(th - d.thermal)))


def storage_trajectory(st: StorageSpec, charge, discharge):
    """State of charge obtained by iterating the storage recursion."""
    soc = np.empty(len(charge))
    prev = st.soc_initial
    for hh, (c, dch) in enumerate(zip(charge, discharge)):
        prev = st.standby_gamma * prev + st.cycle_eta * c - dch / st.cycle_eta
        soc[hh] = prev
    return soc
