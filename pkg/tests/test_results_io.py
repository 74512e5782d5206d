from __future__ import annotations

import csv

import numpy as np
import pytest

from fairtrade.dispatch import solve_centralized
from fairtrade.errors import IoError
from fairtrade.pricing import PricingModel, construct_beneficial_prices, run_mediation
from fairtrade.profiles import PriceProfile
from fairtrade.results_io import (COST_COLUMNS, TRADE_COLUMNS, read_baseline, read_message_log, read_price_file,
                                  read_results, to_document, write_certificate, write_results)
from fairtrade.scenario import DemandSeries, HubSpec, Scenario, TariffTable


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_trades_table_layout(tmp_path, threehub):
    res = threehub.central(0.18)
    write_results(res, tmp_path, baseline=threehub.J_nt)
    rows = _rows(tmp_path / "trades.csv")
    assert tuple(rows[0]) == TRADE_COLUMNS
    assert len(rows) - 1 == 3 * 2 * 24
    # each physical trade appears once per direction with opposite sign
    by_key = {(r[0], r[1], int(r[2])): float(r[3]) for r in rows[1:]}
    for (i, j, h), v in by_key.items():
        assert by_key[(j, i, h)] == -v
    assert all(float(r[4]) == 0.18 for r in rows[1:])
    costs = _rows(tmp_path / "costs.csv")
    assert tuple(costs[0]) == COST_COLUMNS and len(costs) == 4


def test_no_links_gives_header_only(tmp_path):
    s = Scenario(hubs=(HubSpec("solo"),), tariffs=TariffTable(0.22, 0.12, 0.115), links=(), horizon_hours=2,
                 demand={"solo": DemandSeries(np.ones(2), np.zeros(2))}, irradiance={"solo": np.zeros(2)})
    write_results(solve_centralized(s), tmp_path)
    assert _rows(tmp_path / "trades.csv") == [list(TRADE_COLUMNS)]


def test_json_round_trip_is_byte_identical(tmp_path, toy):
    res = toy.admm(0.0)
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    write_results(res, a, format="json", baseline=toy.J_nt, manifest="manifest.json")
    back = read_results(a)
    write_results(back, b, format="json", baseline=toy.J_nt, manifest="manifest.json")
    assert a.read_bytes() == b.read_bytes()
    assert np.array_equal(back.profile.trades, res.profile.trades)
    assert to_document(back, toy.J_nt) == to_document(res, toy.J_nt)


def test_csv_round_trip_is_exact(tmp_path, threehub):
    res = threehub.central(0.18)
    write_results(res, tmp_path, baseline=threehub.J_nt)
    back = read_results(tmp_path)
    assert np.array_equal(back.profile.trades, res.profile.trades)
    assert np.array_equal(back.prices.values, res.prices.values)
    assert all(back.costs[h].total == res.costs[h].total for h in res.costs)
    assert read_baseline(tmp_path / "costs.csv") == threehub.J_nt


def test_consensus_outputs_round_trip(tmp_path, toy):
    res = toy.admm(0.0)
    files = write_results(res, tmp_path)
    assert {f.name for f in files} == {"trades.csv", "costs.csv", "trace.csv", "messages.jsonl"}
    msgs = read_message_log(tmp_path / "messages.jsonl")
    assert msgs == res.messages
    back = read_results(tmp_path)
    assert back.messages_per_iteration == res.messages_per_iteration
    assert [t["W"] for t in back.trace] == [t["W"] for t in res.trace]


def test_fairness_report_round_trip(tmp_path, threehub):
    model = PricingModel.from_dispatch(threehub.central(0.18), threehub.J_nt)
    _, rep = run_mediation(model, c0=PriceProfile.uniform(threehub.s, 0.18))
    write_results(rep, tmp_path)
    back = read_results(tmp_path)
    assert back.d == rep.d and back.J == rep.J and back.trace == rep.trace
    write_results(rep, tmp_path / "r.json", format="json")
    again = read_results(tmp_path / "r.json")
    assert again == rep


def test_certificate_and_price_files(tmp_path, threehub):
    res = threehub.central(0.18)
    cert = construct_beneficial_prices(PricingModel.from_dispatch(res, threehub.J_nt))
    path = write_certificate(cert, tmp_path / "certificate.json", manifest="manifest.json")
    assert '"manifest": "manifest.json"' in path.read_text()
    write_results(res, tmp_path)
    prices = read_price_file(tmp_path / "trades.csv", threehub.s)
    assert np.array_equal(prices.values, res.prices.values)


def test_io_errors(tmp_path, threehub):
    with pytest.raises(IoError):
        read_results(tmp_path / "missing.json")
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(IoError):
        read_results(tmp_path / "bad.json")
    (tmp_path / "costs.csv").write_text("wrong,header\n")
    with pytest.raises(IoError):
        read_baseline(tmp_path / "costs.csv")
    (tmp_path / "p.csv").write_text("from,to,hour,price_chf_kWh\nhub1,hub9,0,0.1\n")
    with pytest.raises(IoError):
        read_price_file(tmp_path / "p.csv", threehub.s)
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(IoError):
        write_results(threehub.central(0.18), blocker / "sub")
