from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairtrade.errors import InfeasibleHub, WeightError
from fairtrade.hub import (VERTEX_NAMES, assemble_local_blocks, balance_residuals, chp_point, hub_layout,
                           local_cost, non_trading_baseline, pv_output, storage_trajectory)
from fairtrade.qp import solve_qp
from fairtrade.scenario import DemandSeries, HubSpec, PvSpec, Scenario, TariffTable
from oracles import central_difference, in_polytope, soc_recursion

HUB1_PV = PvSpec(0.15, 8400.0, 0.0, 2500.0)
TARIFFS = TariffTable(0.22, 0.12, 0.115)


def _single_hub(hub, electric, thermal, irradiance=None):
    H = len(electric)
    return Scenario(
        hubs=(hub,), tariffs=TARIFFS, links=(), horizon_hours=H,
        demand={hub.id: DemandSeries(np.asarray(electric, float), np.asarray(thermal, float))},
        irradiance={hub.id: np.zeros(H) if irradiance is None else np.asarray(irradiance, float)},
    )


@pytest.mark.parametrize("irr,expected", [(1.0, 1260.0), (0.0, 0.0), (2.5, 2500.0)])
def test_pv_output_examples(irr, expected):
    assert pv_output(HUB1_PV, [irr])[0] == pytest.approx(expected, abs=1e-9)


def test_pv_output_without_panel_and_never_negative():
    assert np.all(pv_output(None, [1.0, 2.0]) == 0.0)
    assert np.all(pv_output(HUB1_PV, [-0.3]) == 0.0)


def test_chp_point_examples(threehub):
    chp = threehub.s.hub("hub1").chp
    p, q, fuel = chp_point(chp, (1, 0, 0, 0))
    assert (p, q) == (380.0, 0.0)
    assert fuel == pytest.approx(1055.56, abs=5e-3)
    p, q, fuel = chp_point(chp, (0.5, 0.5, 0, 0))
    assert (p, q) == pytest.approx((347.5, 257.5))
    assert fuel == pytest.approx(965.28, abs=5e-3)
    with pytest.raises(WeightError):
        chp_point(chp, (0.3, 0.3, 0.3, 0.3))
    with pytest.raises(WeightError):
        chp_point(chp, (1.1, -0.1, 0, 0))


def test_local_cost_trade_terms():
    hub = HubSpec("x")
    sp = {"grid_import": np.zeros(1), "grid_feed_in": np.zeros(1)}
    c = {"y": np.array([0.18])}
    imp = local_cost(hub, sp, {"y": np.array([10.0])}, c, TARIFFS, 0.001)
    exp = local_cost(hub, sp, {"y": np.array([-10.0])}, c, TARIFFS, 0.001)
    assert imp.total == pytest.approx(1.9, abs=1e-12)
    assert exp.total == pytest.approx(-1.7, abs=1e-12)
    assert exp.trade_payments == pytest.approx(-1.8) and exp.tariff_charges == pytest.approx(0.1)


def test_local_cost_without_trades_is_asset_cost():
    hub = HubSpec("x")
    sp = {"grid_import": np.array([5.0, 0.0]), "grid_feed_in": np.array([0.0, 2.0])}
    cb = local_cost(hub, sp, {}, {}, TARIFFS, 0.001)
    assert cb.trade_payments == 0.0 and cb.tariff_charges == 0.0
    assert cb.total == pytest.approx(5 * 0.22 - 2 * 0.12, abs=1e-12)


def test_breakdown_total_is_sum_of_parts(threehub):
    for res in (threehub.central(0.18),):
        for cb in res.costs.values():
            parts = sum(cb.assets.values()) + cb.trade_payments + cb.tariff_charges
            assert abs(parts - cb.total) <= 1e-9 * max(1.0, abs(cb.total))


@settings(max_examples=30, deadline=None)
@given(t=st.floats(-500, 500), c=st.floats(-0.5, 0.5), gamma=st.floats(0, 0.1), hour=st.integers(0, 3))
def test_property_local_cost_curvature_is_two_gamma(t, c, gamma, hour):
    hub = HubSpec("x")
    sp = {"grid_import": np.zeros(4), "grid_feed_in": np.zeros(4)}
    base = np.full(4, 7.0)
    base[hour] = t

    def f(v):
        p = base.copy()
        p[hour] = v
        return local_cost(hub, sp, {"y": p}, {"y": np.full(4, c)}, TARIFFS, gamma).total

    h = 1e-2
    second = (f(t + h) - 2 * f(t) + f(t - h)) / h**2
    assert second == pytest.approx(2 * gamma, abs=1e-8 * max(1.0, abs(t)) / h)
    # first derivative is the price plus the tariff slope
    assert central_difference(lambda x: f(x[0]), np.array([t]))[0] == pytest.approx(c + 2 * gamma * t, abs=1e-5)


def test_hub3_has_no_gas_terms(threehub):
    s = threehub.s
    blocks = assemble_local_blocks(s.hub("hub3"), s)
    assert not any(n.startswith(("chp_", "gb_")) for n in blocks.layout.names)
    assert not any(kind == "chp_simplex" for kind, _ in blocks.row_labels)
    # the only positive linear cost is grid import
    lay = blocks.layout
    pos = np.flatnonzero(blocks.q > 0)
    assert set(pos) <= set(range(lay.sl("grid_import").start, lay.sl("grid_import").stop))


def test_layout_order_is_stable(threehub):
    s = threehub.s
    lay = hub_layout(s.hub("hub1"), 24, ["hub2", "hub3"])
    assert lay.names == ["grid_import", "grid_feed_in", *[f"chp_w_{v}" for v in VERTEX_NAMES], "hp_q",
                         "gb_q", "es_soc", "es_ch", "es_dc", "ts_soc", "ts_ch", "ts_dc", "trade:hub2", "trade:hub3"]
    assert lay.idx("grid_feed_in", 3) == 24 + 3


def test_empty_hub_is_feasible_at_zero():
    s = _single_hub(HubSpec("empty"), [0.0, 0.0], [0.0, 0.0])
    sol = non_trading_baseline(s.hub("empty"), s)
    assert sol.J == pytest.approx(0.0, abs=1e-9)
    assert np.allclose(sol.setpoints["grid_import"], 0.0, atol=1e-9)


def test_thermal_demand_without_heat_source():
    s = _single_hub(HubSpec("cold"), [0.0], [100.0])
    with pytest.raises(InfeasibleHub) as e:
        assemble_local_blocks(s.hub("cold"), s)
    assert e.value.hour == 0
    # the raw assembly without the screen fails at the same hour
    with pytest.raises(InfeasibleHub) as e:
        assemble_local_blocks(s.hub("cold"), s, check=False)
    assert e.value.hour == 0


def test_self_sufficient_baseline(selfsufficient):
    for hid, b in selfsufficient.baseline.items():
        assert np.allclose(b.setpoints["grid_import"], 0.0, atol=1e-7)
        assert b.J <= 0.0
        assert b.J == pytest.approx(b.cost.assets["grid_feed_in"], abs=1e-6)


def test_hub2_buys_from_grid_without_sun(threehub):
    s, b = threehub.s, threehub.baseline["hub2"]
    night = np.flatnonzero(s.irradiance["hub2"] == 0)
    assert night.size
    assert np.all(b.setpoints["grid_import"][night] > 1.0)
    assert b.cost.assets["grid_import"] == pytest.approx(0.22 * b.setpoints["grid_import"].sum(), rel=1e-12)


def test_baselines_satisfy_physics(threehub):
    s = threehub.s
    for hub in s.hubs:
        b = threehub.baseline[hub.id]
        e, th = balance_residuals(hub, s, b.setpoints, {})
        assert e <= 1e-6 and th <= 1e-6
        assert b.kkt_max <= 1e-6
        for kind in ("es", "ts"):
            spec = getattr(hub, kind)
            if spec is None:
                continue
            sp = b.setpoints
            ref = soc_recursion(spec.standby_gamma, spec.cycle_eta, spec.soc_initial, sp[f"{kind}_ch"],
                                sp[f"{kind}_dc"])
            assert np.max(np.abs(ref - sp[f"{kind}_soc"])) <= 1e-8
            assert np.array_equal(storage_trajectory(spec, sp[f"{kind}_ch"], sp[f"{kind}_dc"]), ref)
            assert sp[f"{kind}_soc"][-1] >= spec.soc_initial - 1e-8
        if hub.chp is not None:
            for hh in range(s.horizon_hours):
                assert in_polytope(hub.chp.p_vertices, hub.chp.q_vertices, b.setpoints["chp_p"][hh],
                                   b.setpoints["chp_q"][hh])


def test_chp_outputs_stay_in_polytope_under_random_costs(threehub):
    s = threehub.s
    hub = s.hub("hub1")
    blocks = assemble_local_blocks(hub, s, partners=[])
    rng = np.random.default_rng(11)
    lay = blocks.layout
    for _ in range(3):
        p = blocks.problem()
        q = p.q.copy()
        for v in VERTEX_NAMES:
            q[lay.sl(f"chp_w_{v}")] += rng.normal(0, 50, 24)
        p.q = q
        sol = solve_qp(p)
        sp, _ = blocks.unpack(sol.x, hub)
        for hh in range(24):
            assert in_polytope(hub.chp.p_vertices, hub.chp.q_vertices, sp["chp_p"][hh], sp["chp_q"][hh])


def test_assembly_is_pure(threehub):
    s = threehub.s
    a = assemble_local_blocks(s.hub("hub1"), s)
    b = assemble_local_blocks(s.hub("hub1"), s)
    for name in ("P", "q", "A", "b", "G", "h", "lb", "ub"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
