from __future__ import annotations

import csv
import json
import subprocess
import sys

import pytest

from fairtrade.cli import main
from fairtrade.scenario import shipped_scenario_path


def _run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def _table(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def _W(text):
    line = next(l for l in text.splitlines() if l.startswith("W = "))
    return float(line.split()[2])


def test_validate_exit_codes(tmp_path, capsys):
    code, out, _ = _run(capsys, "validate", "threehub")
    assert code == 0 and "0 error" in out
    text = shipped_scenario_path("threehub").read_text()
    bad = tmp_path / "truncated.scenario"
    bad.write_text(text[: len(text) // 2])
    assert _run(capsys, "validate", bad)[0] == 2
    doc = json.loads(text)
    doc["params"]["trading_tariff_gamma"] = -0.001
    series = shipped_scenario_path("threehub").parent / doc["series"]["csv"]
    (tmp_path / series.name).write_text(series.read_text())
    neg = tmp_path / "neg.scenario"
    neg.write_text(json.dumps(doc))
    code, out, _ = _run(capsys, "validate", neg, "--out", tmp_path / "v")
    assert code == 1 and "negative trading tariff" in out
    assert (tmp_path / "v" / "validation.txt").exists() and (tmp_path / "v" / "manifest.json").exists()


def test_usage_errors(tmp_path, capsys):
    assert _run(capsys, "dispatch", "no-such-scenario", "--out", tmp_path)[0] == 2
    assert _run(capsys, "dispatch", "twohub_toy", "--price", "flat:1", "--out", tmp_path)[0] == 2
    assert _run(capsys, "frobnicate")[0] == 2
    assert _run(capsys, "sweep", "twohub_toy", "--prices", "a,b", "--out", tmp_path)[0] == 2


def test_dispatch_modes_agree(tmp_path, capsys):
    code, out_a, _ = _run(capsys, "dispatch", "threehub", "--price", "uniform:0.18", "--mode", "admm",
                          "--out", tmp_path / "admm", "--no-plots")
    assert code == 0
    red = float(out_a.split("reduction = ")[1].split()[0])
    assert red > 0
    code, out_c, _ = _run(capsys, "dispatch", "threehub", "--price", "uniform:0.18", "--out", tmp_path / "central",
                          "--no-plots")
    assert code == 0
    assert abs(_W(out_a) - _W(out_c)) <= 1e-4 * abs(_W(out_c))
    names = {p.name for p in (tmp_path / "admm").iterdir()}
    assert {"trades.csv", "costs.csv", "trace.csv", "messages.jsonl", "result.json", "manifest.json"} <= names


def test_dispatch_self_sufficient_has_no_trades(tmp_path, capsys):
    assert _run(capsys, "dispatch", "selfsufficient", "--price", "uniform:0", "--out", tmp_path, "--no-plots")[0] == 0
    rows = _table(tmp_path / "trades.csv")[1:]
    assert rows and all(abs(float(r[3])) <= 1e-6 for r in rows)


def test_dispatch_price_file(tmp_path, capsys):
    prices = tmp_path / "prices.csv"
    prices.write_text("from,to,hour,price_chf_kWh\nproducer,consumer,0,0.15\n")
    code, _, _ = _run(capsys, "dispatch", "twohub_toy", "--price", f"file:{prices}", "--out", tmp_path / "o",
                      "--no-plots")
    assert code == 0
    assert {float(r[4]) for r in _table(tmp_path / "o" / "trades.csv")[1:]} == {0.15}


def test_dispatch_max_iter_is_a_domain_failure(tmp_path, capsys):
    code, _, _ = _run(capsys, "dispatch", "threehub", "--mode", "admm", "--max-iter", "2", "--out", tmp_path,
                      "--no-plots")
    assert code == 1 and (tmp_path / "trades.csv").exists()


def test_sweep_table(tmp_path, capsys):
    code, out, _ = _run(capsys, "sweep", "threehub", "--out", tmp_path)
    assert code == 0
    rows = _table(tmp_path / "reductions.csv")
    assert rows[0] == ["hub", "0.1", "0.18", "0.2"]
    d = {r[0]: [float(x) for x in r[1:]] for r in rows[1:]}
    assert min(d[h][0] for h in ("hub1", "hub2", "hub3")) < 0
    assert d["hub3"][2] < 0
    assert max(d["trade_dev_kW"]) <= 1e-3
    assert (tmp_path / "reductions.png").stat().st_size > 0
    code, _, _ = _run(capsys, "sweep", "twohub_toy", "--prices", "0.18", "--out", tmp_path / "one", "--no-plots")
    assert code == 0 and _table(tmp_path / "one" / "reductions.csv")[0] == ["hub", "0.18"]


def test_mediate(tmp_path, capsys):
    code, out, _ = _run(capsys, "mediate", "threehub", "--out", tmp_path)
    assert code == 0
    dev = float(out.split("max |d_i - mean| = ")[1].split()[0])
    assert dev <= 1e-3
    names = {p.name for p in tmp_path.iterdir()}
    assert {"fairness.csv", "fairness_trace.csv", "trades.csv", "prices.png", "fairness_trace.png"} <= names
    prices = {float(r[4]) for r in _table(tmp_path / "trades.csv")[1:]}
    assert len(prices) > 2


def test_mediate_safeguard_and_bad_step(tmp_path, capsys):
    code, _, _ = _run(capsys, "mediate", "threehub", "--price", "uniform:0.1", "--safeguard", "--out", tmp_path,
                      "--no-plots")
    assert code == 0
    for r in _table(tmp_path / "fairness.csv")[1:]:
        assert float(r[2]) <= float(r[3]) + 1e-9
    code, _, err = _run(capsys, "mediate", "threehub", "--beta", "1e9", "--out", tmp_path / "b", "--no-plots")
    assert code == 2 and "2/L" in err


@pytest.mark.parametrize("name", ["threehub", "selfsufficient", "disconnected"])
def test_certificate(tmp_path, capsys, name):
    code, out, _ = _run(capsys, "certificate", name, "--out", tmp_path)
    assert code == 0
    n = out.count(": gap = ")
    assert f"{n}/{n} hubs pass" in out
    doc = json.loads((tmp_path / "certificate.json").read_text())
    assert doc["passed"] and doc["manifest"] == "manifest.json"
    if name == "selfsufficient":
        assert all(v == [0.0] * 4 for v in doc["c_star"].values())
    if name == "disconnected":
        assert "components" in out and len(doc["components"]) == 2


def test_synth(tmp_path, capsys):
    assert _run(capsys, "synth", "--out", tmp_path, "--seed", "3")[0] == 0
    for name in ("threehub.scenario", "threehub_series.csv", "inputs.csv", "inputs.png", "manifest.json"):
        assert (tmp_path / name).exists()
    assert _run(capsys, "validate", tmp_path / "threehub.scenario")[0] == 0
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["seed"] == 3 and man["command"] == "synth"


def test_outputs_are_deterministic(tmp_path, capsys):
    for sub in ("a", "b"):
        assert _run(capsys, "mediate", "twohub_toy", "--mode", "admm", "--out", tmp_path / sub)[0] == 0
    a = json.loads((tmp_path / "a" / "manifest.json").read_text())
    b = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert a["files"] == b["files"] and a["overrides"] == b["overrides"]
    for name in a["files"]:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_no_plots_writes_no_png(tmp_path, capsys):
    assert _run(capsys, "dispatch", "twohub_toy", "--out", tmp_path, "--no-plots")[0] == 0
    assert not list(tmp_path.glob("*.png"))
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert set(man["files"]) == {p.name for p in tmp_path.iterdir()} - {"manifest.json"}


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "fairtrade", "baseline", "twohub_toy", "--out", str(tmp_path)],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "W_nt = 2.0000" in r.stdout

