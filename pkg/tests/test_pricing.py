from __future__ import annotations

import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairtrade.errors import (CertificateFailed, ConfigError, DegenerateBaseline, DisconnectedComponentHandled,
                              ProjectionInfeasible)
from fairtrade.pricing import (MediationConfig, PricingModel, construct_beneficial_prices, cost_reduction,
                               estimate_lipschitz, fairness_gradient, fairness_metric, mediation_step,
                               pair_gradient, project_prices, run_mediation)
from fairtrade.profiles import PriceProfile
from fairtrade.scenario import shipped_scenarios
from oracles import THREE, central_difference, gradient_rel_error, random_state


def _two_hub(J0=(90.0, 95.0), J_nt=(100.0, 100.0), p=10.0):
    return PricingModel(("a", "b"), (("a", "b"),), np.array([[p]]), np.array(J0), np.array(J_nt))


# -- reductions and metric ---------------------------------------------------

def test_cost_reduction_examples():
    assert cost_reduction(100.0, 97.5) == pytest.approx(0.025, abs=1e-15)
    assert cost_reduction(100.0, 100.0) == 0.0
    assert cost_reduction(100.0, 105.0) == pytest.approx(-0.05, abs=1e-15)
    with pytest.raises(DegenerateBaseline):
        cost_reduction(1e-12, 1.0)


def test_fairness_metric_examples():
    assert fairness_metric([0.3, 0.3, 0.3]) == 0.0
    assert fairness_metric([0.02, 0.04]) == pytest.approx(1e-4, abs=1e-18)
    assert fairness_metric([0.01, 0.05, -0.02]) == fairness_metric([-0.02, 0.01, 0.05])
    assert fairness_metric([]) == 0.0


# -- gradient --------------------------------------------------------------

@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_property_gradient_matches_finite_differences(seed):
    model, v = random_state(np.random.default_rng(seed))
    assert gradient_rel_error(model, v) <= 1e-5


def test_gradient_vanishes_when_reductions_are_equal():
    model = _two_hub()
    assert np.all(model.gradient(np.array([0.25])) == 0.0)


def test_gradient_zero_on_untraded_hours():
    rng = np.random.default_rng(0)
    model, v = random_state(rng)
    model.trades[1, 2] = 0.0
    assert model.gradient(v).reshape(3, -1)[1, 2] == 0.0


def test_pair_gradient_equals_joint_gradient():
    model, v = random_state(np.random.default_rng(7))
    d = model.reductions(v)
    full = model.gradient(v).reshape(model.trades.shape)
    for e, (i, j) in enumerate(model.pairs):
        a, b = THREE.index(i), THREE.index(j)
        g = pair_gradient(model.trades[e], model.J_nt[a], model.J_nt[b], d[a], d[b], d.mean(), 3)
        np.testing.assert_allclose(g, full[e], rtol=1e-12, atol=1e-18)


def test_fairness_gradient_on_dispatch(threehub):
    res = threehub.central(0.18)
    g = fairness_gradient(res, threehub.J_nt, PriceProfile.uniform(threehub.s, 0.18))
    assert g.shape == (3, 24)
    assert np.all(g[np.abs(res.profile.trades) <= 1e-9] == 0.0)
    assert np.any(g != 0.0)


# -- Lipschitz constant ------------------------------------------------------

def test_lipschitz_two_hub_by_hand():
    p, J1, J2 = 10.0, 100.0, 80.0
    model = _two_hub(J_nt=(J1, J2), p=p)
    assert estimate_lipschitz(model) == pytest.approx((p / J1 + p / J2) ** 2 / 2, abs=1e-10)
    model.trades *= 2
    assert estimate_lipschitz(model) == pytest.approx(4 * (p / J1 + p / J2) ** 2 / 2, abs=1e-10)


def test_lipschitz_is_top_hessian_eigenvalue():
    model, v = random_state(np.random.default_rng(3))
    n = v.size
    H = np.column_stack([central_difference(lambda x: model.gradient(x)[k], v) for k in range(n)])
    assert estimate_lipschitz(model) == pytest.approx(np.linalg.eigvalsh(0.5 * (H + H.T))[-1], rel=1e-6)


def test_no_trades_means_no_op():
    model = _two_hub(p=0.0)
    assert estimate_lipschitz(model) == 0.0
    prices, rep = run_mediation(model, c0=model.profile([0.2]))
    assert rep.status == "NoOp" and prices.vector()[0] == 0.2


# -- steps and projection ----------------------------------------------------

def test_mediation_step_examples():
    model = _two_hub()
    cfg = MediationConfig(step_beta=0.5, c_max=0.3).resolved(model)
    v = np.array([0.1])
    assert mediation_step(model, v, np.zeros(1), cfg)[0] == 0.1
    assert mediation_step(model, v, np.array([0.1]), cfg)[0] == pytest.approx(0.05, abs=1e-15)
    assert mediation_step(model, v, np.array([-1.0]), cfg)[0] == 0.3


def test_step_outside_range_is_rejected():
    model = _two_hub()
    L = estimate_lipschitz(model)
    with pytest.raises(ConfigError):
        MediationConfig(step_beta=2.0 / L).resolved(model)
    with pytest.raises(ConfigError):
        MediationConfig(step_beta=-1.0).resolved(model)
    with pytest.raises(ConfigError):
        MediationConfig(c_min=0.4, c_max=0.1).resolved(model)
    assert MediationConfig().resolved(model).step_beta == pytest.approx(1.0 / L)


def test_empty_safeguard_set():
    model = _two_hub(J0=(100.0, 100.0), J_nt=(90.0, 90.0))
    cfg = MediationConfig(safeguard_enabled=True, c_min=-5.0, c_max=5.0).resolved(model)
    with pytest.raises(ProjectionInfeasible):
        project_prices(model, np.zeros(1), cfg)


def test_projection_onto_safeguards_by_hand():
    # 90 + 10 c <= 100 and 95 - 10 c <= 100 leave c in [-0.5, 1.0]
    model = _two_hub()
    cfg = MediationConfig(safeguard_enabled=True, safeguard_margin=0.0, c_min=-5.0, c_max=5.0).resolved(model)
    assert project_prices(model, np.array([3.0]), cfg)[0] == pytest.approx(1.0, abs=1e-9)
    assert project_prices(model, np.array([-2.0]), cfg)[0] == pytest.approx(-0.5, abs=1e-9)
    assert project_prices(model, np.array([0.2]), cfg)[0] == 0.2


# -- mediation ------------------------------------------------------------------

def test_fair_start_stops_at_once():
    model = _two_hub()
    prices, rep = run_mediation(model, c0=model.profile([0.25]))
    assert rep.status == "Converged" and rep.iterations == 1
    assert prices.vector()[0] == 0.25 and rep.phi == 0.0


@pytest.fixture(scope="module")
def three_model(threehub):
    return PricingModel.from_dispatch(threehub.central(0.18), threehub.J_nt)


def test_mediation_equalizes_threehub(threehub, three_model):
    prices, rep = run_mediation(three_model, c0=PriceProfile.uniform(threehub.s, 0.18))
    assert rep.status == "Converged" and rep.iterations <= 5000
    assert rep.max_deviation <= 1e-3
    phis = np.array([t[1] for t in rep.trace])
    assert np.all(np.diff(phis) <= 1e-12)
    assert rep.d_mean == pytest.approx(np.mean(list(rep.d.values())), abs=1e-12)
    traded = np.abs(three_model.trades) > 0
    assert np.ptp(prices.values[traded]) > 1e-3
    assert np.all(prices.values >= -0.5) and np.all(prices.values <= 0.5)
    for i, j in prices.pairs:
        assert np.array_equal(prices.price(i, j), prices.price(j, i))


@pytest.mark.parametrize("name", shipped_scenarios())
def test_descent_on_shipped_scenarios(name):
    from conftest import solved

    sv = solved(name)
    model = PricingModel.from_dispatch(sv.central(0.18), sv.J_nt)
    _, rep = run_mediation(model, c0=PriceProfile.uniform(sv.s, 0.18))
    phis = np.array([t[1] for t in rep.trace])
    assert np.all(np.diff(phis) <= 1e-12)


def test_safeguard_holds_at_every_iterate(threehub, three_model):
    # at 0.1 hub1 is worse off than alone, so the start itself is projected
    cfg = MediationConfig(safeguard_enabled=True).resolved(three_model)
    v = project_prices(three_model, PriceProfile.uniform(threehub.s, 0.1).vector(), cfg)
    for _ in range(300):
        assert np.all(three_model.costs(v) <= three_model.J_nt + 1e-9)
        v = mediation_step(three_model, v, three_model.gradient(v), cfg)
    _, rep = run_mediation(three_model, MediationConfig(safeguard_enabled=True),
                           c0=PriceProfile.uniform(threehub.s, 0.1))
    assert all(rep.J[h] <= rep.J_nt[h] + 1e-9 for h in rep.hub_ids)


def test_prices_only_move_money_around(three_model):
    rng = np.random.default_rng(9)
    W = three_model.costs(np.zeros(three_model.trades.size)).sum()
    for _ in range(20):
        v = rng.uniform(-0.5, 0.5, three_model.trades.size)
        assert abs(three_model.costs(v).sum() - W) <= 1e-9 * abs(W)


def test_degenerate_hub_is_excluded(toy):
    J_nt = dict(toy.J_nt, producer=0.0)
    with pytest.warns(RuntimeWarning, match="degenerate"):
        model = PricingModel.from_dispatch(toy.central(0.0), J_nt)
    assert model.excluded == ("producer",)
    assert model.reductions(np.zeros(1)).shape == (1,)
    _, rep = run_mediation(model)
    assert rep.status == "NoOp" and list(rep.d) == ["consumer"]


# -- beneficial prices --------------------------------------------------------

def test_certificate_by_hand():
    cert = construct_beneficial_prices(_two_hub())
    assert cert.kappa == pytest.approx(15.0)
    assert cert.prices.vector()[0] == pytest.approx(0.25, abs=1e-12)
    assert cert.gaps == pytest.approx({"a": -7.5, "b": -7.5})
    assert cert.passed


def test_certificate_without_trades(selfsufficient):
    model = PricingModel.from_dispatch(selfsufficient.central(0.0), selfsufficient.J_nt)
    cert = construct_beneficial_prices(model)
    assert cert.V.shape == (2, 0) and cert.kappa == pytest.approx(0.0, abs=1e-9)
    assert np.all(cert.prices.values == 0.0) and cert.passed


@pytest.mark.parametrize("per_hour", [False, True])
def test_certificate_threehub(threehub, three_model, per_hour):
    cert = construct_beneficial_prices(three_model, per_hour=per_hour)
    assert all(g <= 1e-6 for g in cert.gaps.values())
    assert np.all(np.abs(cert.V.sum(axis=0)) == 0.0)
    W = threehub.central(0.18).W
    assert cert.kappa == pytest.approx(sum(threehub.J_nt.values()) - W, abs=1e-9 * abs(W))
    # connected graph: every hub ends up with the same gain
    gaps = np.array(list(cert.gaps.values()))
    assert np.ptp(gaps) <= 1e-6


def test_certificate_per_component(disconnected):
    model = PricingModel.from_dispatch(disconnected.central(0.0), disconnected.J_nt)
    with pytest.warns(DisconnectedComponentHandled):
        cert = construct_beneficial_prices(model)
    assert sorted(map(sorted, cert.components)) == [["a", "b"], ["c", "d"]]
    assert cert.passed


def test_certificate_failure_is_reported():
    # baselines below the zero-price costs leave nothing to share
    model = _two_hub(J0=(100.0, 100.0), J_nt=(90.0, 90.0))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(CertificateFailed):
            construct_beneficial_prices(model)
