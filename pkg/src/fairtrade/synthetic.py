"""Synthetic demand and irradiance series for the bundled 3-hub network.

The shapes are hand-made and not measured data: an industrial hub with
flat daytime electricity use and a large heat load, a medium hub and a
small residential hub with morning and evening peaks. Irradiance is zero
outside 07:00-17:59 and follows a half-sine with a floor inside that
window, identical for the three co-located hubs. A seeded multiplicative
jitter (a few percent) keeps the series from being perfectly smooth.
"""

from __future__ import annotations

import numpy as np

from .scenario import (ChpSpec, DemandSeries, GbSpec, HpSpec, HubSpec, PvSpec, Scenario,
                       StorageSpec, TariffTable, TradeLink)

SUN_HOURS = range(7, 18)
DEFAULT_SEED = 0


def irradiance_profile(H=24, peak=0.9, floor=0.25):
    """kW/m2; ``floor`` keeps shoulder hours productive."""
    out = np.zeros(H)
    first, last = SUN_HOURS.start, SUN_HOURS.stop - 1
    for h in range(H):
        hod = h % 24
        if first <= hod <= last:
            phase = (hod - first + 0.5) / (last - first + 1)
            out[h] = floor + (peak - floor) * np.sin(np.pi * phase)
    return out


def _shape(H, night, day, evening=None):
    """Piecewise level: night (0-6, 18-23), day (7-17), optional evening bump (18-21)."""
    out = np.empty(H)
    for h in range(H):
        hod = h % 24
        if hod in SUN_HOURS:
            out[h] = day
        elif evening is not None and 18 <= hod <= 21:
            out[h] = evening
        else:
            out[h] = night
    return out


def threehub_series(seed=DEFAULT_SEED, H=24, jitter=0.03):
    """Demand and irradiance dicts keyed by hub id."""
    rng = np.random.default_rng(seed)
    irr = irradiance_profile(H)
    shapes = {
        # industrial: CHP must-run covers the night base load with a surplus
        "hub1": (_shape(H, 150.0, 650.0, 200.0), _shape(H, 700.0, 400.0, 650.0)),
        # medium: night deficit, PV covers daytime use
        "hub2": (_shape(H, 150.0, 110.0, 170.0), _shape(H, 140.0, 60.0, 160.0)),
        # residential
        "hub3": (_shape(H, 28.0, 12.0, 34.0), _shape(H, 30.0, 10.0, 40.0)),
    }
    demand, irradiance = {}, {}
    for hid, (le, lh) in shapes.items():
        le = le * (1.0 + jitter * rng.uniform(-1, 1, H))
        lh = lh * (1.0 + jitter * rng.uniform(-1, 1, H))
        demand[hid] = DemandSeries(np.round(le, 3), np.round(lh, 3))
        irradiance[hid] = np.round(irr, 4)
    return demand, irradiance


def threehub_hubs():
    """Hub parameters of the 3-hub case study."""
    hub1 = HubSpec(
        id="hub1",
        chp=ChpSpec(0.36, (380.0, 315.0, 745.0, 800.0), (0.0, 515.0, 1220.0, 0.0)),
        hp=HpSpec(4.5, 0.0, 450.0),
        gb=GbSpec(0.78, 0.0, 350.0),
        pv=PvSpec(0.15, 8400.0, 0.0, 2500.0),
        es=StorageSpec(0.999, 0.99, 50.0, 750.0, 0.0, 200.0, 0.0, 200.0, 50.0),
        ts=StorageSpec(0.992, 0.95, 290.0, 12900.0, 0.0, 3200.0, 0.0, 3200.0, 290.0),
    )
    hub2 = HubSpec(
        id="hub2",
        pv=PvSpec(0.15, 3170.0, 0.0, 350.0),
        hp=HpSpec(4.5, 0.0, 300.0),
        gb=GbSpec(0.78, 0.0, 50.0),
        ts=StorageSpec(0.992, 0.95, 0.36, 1.62, 0.0, 0.3, 0.0, 0.3, 0.36),
    )
    hub3 = HubSpec(
        id="hub3",
        pv=PvSpec(0.15, 380.0, 0.0, 80.0),
        hp=HpSpec(4.5, 0.0, 50.0),
    )
    return (hub1, hub2, hub3)


def threehub_scenario(seed=DEFAULT_SEED, kappa=1000.0, gamma=0.001, rho=1.0, import_reg=1e-7):
    demand, irr = threehub_series(seed)
    links = (TradeLink("hub1", "hub2", kappa), TradeLink("hub1", "hub3", kappa), TradeLink("hub2", "hub3", kappa))
    return Scenario(
        hubs=threehub_hubs(),
        tariffs=TariffTable(0.22, 0.12, 0.115),
        links=links,
        horizon_hours=24,
        demand=demand,
        irradiance=irr,
        trading_tariff_gamma=gamma,
        admm_penalty_rho=rho,
        import_regularization_weight=import_reg,
        name="threehub",
    )


# -- small fixtures ---------------------------------------------------------

def _grid_hub(hid, pv_area=None):
    pv = PvSpec(0.15, pv_area, 0.0, 1e4) if pv_area else None
    return HubSpec(id=hid, pv=pv)


def twohub_toy_scenario():
    """One hour, electricity only. ``producer`` has 30 kW of PV against a
    10 kW load, ``consumer`` a 20 kW load and nothing else.

    With gamma = 0.01 and no import regularization the social optimum has
    the consumer importing t = 2.5 kW from the producer: the marginal
    saving of one traded kW is import minus feed-in price (0.1 CHF), which
    balances the tariff derivative 2 * 2 * gamma * t at t = 2.5.
    W = 0.1 * 17.5 + 2 * 0.01 * 2.5**2 = 1.875 against W_nt = 2.0.
    """
    hubs = (_grid_hub("producer", 200.0), _grid_hub("consumer"))
    return Scenario(
        hubs=hubs,
        tariffs=TariffTable(0.22, 0.12, 0.115),
        links=(TradeLink("producer", "consumer", 1000.0),),
        horizon_hours=1,
        demand={"producer": DemandSeries(np.array([10.0]), np.array([0.0])),
                "consumer": DemandSeries(np.array([20.0]), np.array([0.0]))},
        irradiance={"producer": np.array([1.0]), "consumer": np.array([0.0])},
        trading_tariff_gamma=0.01,
        admm_penalty_rho=0.01,
        import_regularization_weight=0.0,
        name="twohub_toy",
    )


def selfsufficient_scenario():
    """Two linked hubs with a PV surplus every hour: both value electricity
    at the feed-in price, so trading only adds tariff cost."""
    H = 4
    irr = np.array([0.6, 0.8, 1.0, 0.7])
    hubs = (_grid_hub("east", 400.0), _grid_hub("west", 300.0))
    return Scenario(
        hubs=hubs,
        tariffs=TariffTable(0.22, 0.12, 0.115),
        links=(TradeLink("east", "west", 1000.0),),
        horizon_hours=H,
        demand={"east": DemandSeries(np.array([20.0, 25.0, 30.0, 15.0]), np.zeros(H)),
                "west": DemandSeries(np.array([10.0, 12.0, 14.0, 9.0]), np.zeros(H))},
        irradiance={"east": irr, "west": irr.copy()},
        trading_tariff_gamma=0.001,
        admm_penalty_rho=1.0,
        import_regularization_weight=1e-7,
        name="selfsufficient",
    )


def disconnected_scenario():
    """Four hubs in two linked pairs (a-b, c-d) with no link between them."""
    H = 2
    hubs = (_grid_hub("a", 300.0), _grid_hub("b"), _grid_hub("c", 150.0), HubSpec(
        id="d", hp=HpSpec(4.5, 0.0, 80.0)))
    irr = np.array([1.0, 0.5])
    return Scenario(
        hubs=hubs,
        tariffs=TariffTable(0.22, 0.12, 0.115),
        links=(TradeLink("a", "b", 1000.0), TradeLink("c", "d", 1000.0)),
        horizon_hours=H,
        demand={"a": DemandSeries(np.array([12.0, 8.0]), np.zeros(H)),
                "b": DemandSeries(np.array([25.0, 30.0]), np.zeros(H)),
                "c": DemandSeries(np.array([5.0, 6.0]), np.zeros(H)),
                "d": DemandSeries(np.array([8.0, 10.0]), np.array([45.0, 60.0]))},
        irradiance={"a": irr, "b": np.zeros(H), "c": irr.copy(), "d": np.zeros(H)},
        trading_tariff_gamma=0.005,
        admm_penalty_rho=0.01,
        import_regularization_weight=1e-7,
        name="disconnected",
    )


SHIPPED_BUILDERS = {
    "threehub": threehub_scenario,
    "twohub_toy": twohub_toy_scenario,
    "selfsufficient": selfsufficient_scenario,
    "disconnected": disconnected_scenario,
}


def write_shipped(directory):
    """(Re)generate the bundled scenario files in ``directory``."""
    from pathlib import Path

    from .scenario import save_scenario

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    out = []
    for name, build in SHIPPED_BUILDERS.items():
        path = directory / f"{name}.scenario"
        save_scenario(build(), path, series_csv=f"{name}_series.csv" if name == "threehub" else None)
        out.append(path)
    return out
