"""Result files: delimited tables and a lossless JSON document.

CSV layout (one directory per result):

* ``trades.csv``: ``from,to,hour,p_tr_kW,price_chf_kWh``, one row per linked
  ordered pair and hour. ``p_tr_kW`` is ``p_tr[from][to]`` (positive when
  ``from`` imports), so each physical trade appears twice with opposite sign.
* ``costs.csv``: ``hub,J_trading,J_nontrading,d_i``.
* ``trace.csv``: ``iter,primal_res,dual_res,W`` (consensus runs only).
* ``messages.jsonl``: one round message per line (consensus runs only).
* ``fairness.csv``: ``hub,d_i,J_trading,J_nontrading`` and
  ``fairness_trace.csv``: ``iter,phi,max_step`` for mediation reports.

Floats are written with ``repr`` (shortest round-trip form), so reading a
file back reproduces every value exactly.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .dispatch import DispatchResult, RoundMessage
from .errors import IoError
from .hub import CostBreakdown
from .pricing import FairnessReport
from .profiles import DispatchProfile, PriceProfile

TRADE_COLUMNS = ("from", "to", "hour", "p_tr_kW", "price_chf_kWh")
COST_COLUMNS = ("hub", "J_trading", "J_nontrading", "d_i")
TRACE_COLUMNS = ("iter", "primal_res", "dual_res", "W")
FAIRNESS_COLUMNS = ("hub", "d_i", "J_trading", "J_nontrading")
FAIRNESS_TRACE_COLUMNS = ("iter", "phi", "max_step")


def fmt(x):
    """Exact text form of a number."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return repr(float(x))


def _write_csv(path, header, rows):
    try:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([v if isinstance(v, str) else fmt(v) for v in r])
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e


def _read_csv(path, header):
    try:
        with Path(path).open(newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e
    if not rows or tuple(rows[0]) != tuple(header):
        raise IoError(f"{path}: expected header {','.join(header)}")
    return [dict(zip(header, r)) for r in rows[1:]]


def _ordered_pairs(profile):
    pos = {h: k for k, h in enumerate(profile.hub_ids)}
    both = [p for ij in profile.pairs for p in (ij, ij[::-1])]
    return sorted(both, key=lambda p: (pos[p[0]], pos[p[1]]))


def trade_rows(result: DispatchResult):
    prof, prices = result.profile, result.prices
    for i, j in _ordered_pairs(prof):
        p, c = prof.trade(i, j), prices.price(i, j)
        for h in range(prof.horizon):
            yield (i, j, h, p[h], c[h])


def reduction_or_nan(J_nt, J):
    if J_nt is None or not math.isfinite(J_nt) or abs(J_nt) < 1e-9:
        return math.nan
    return (J_nt - J) / J_nt


def write_results(result, path, format="csv", baseline: dict | None = None, manifest: str | None = None):
    """Write a DispatchResult or FairnessReport.

    ``csv`` treats ``path`` as a directory and returns the list of files
    written; ``json`` writes one document to ``path``. ``baseline`` maps hub
    ids to non-trading costs for the dispatch cost table. ``manifest`` is
    the name of the run manifest recorded in JSON documents.
    """
    path = Path(path)
    if format == "json":
        doc = to_document(result, baseline)
        if manifest:
            doc["manifest"] = manifest
        try:
            path.write_text(dumps(doc))
        except OSError as e:
            raise IoError(f"cannot write {path}: {e}") from e
        return [path]
    if format != "csv":
        raise ValueError(f"unknown format {format!r}")
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise IoError(f"cannot create {path}: {e}") from e
    written = []
    if isinstance(result, FairnessReport):
        rows = [(h, result.d.get(h, math.nan), result.J[h], result.J_nt[h]) for h in result.hub_ids]
        _write_csv(path / "fairness.csv", FAIRNESS_COLUMNS, rows)
        _write_csv(path / "fairness_trace.csv", FAIRNESS_TRACE_COLUMNS, result.trace)
        return [path / "fairness.csv", path / "fairness_trace.csv"]
    baseline = baseline or {}
    _write_csv(path / "trades.csv", TRADE_COLUMNS, trade_rows(result))
    written.append(path / "trades.csv")
    rows = []
    for h in result.profile.hub_ids:
        J = result.costs[h].total
        J_nt = baseline.get(h, math.nan)
        rows.append((h, J, J_nt, reduction_or_nan(J_nt, J)))
    _write_csv(path / "costs.csv", COST_COLUMNS, rows)
    written.append(path / "costs.csv")
    if result.trace:
        _write_csv(path / "trace.csv", TRACE_COLUMNS, ([t[c] for c in TRACE_COLUMNS] for t in result.trace))
        written.append(path / "trace.csv")
    if result.messages:
        result.write_message_log(path / "messages.jsonl")
        written.append(path / "messages.jsonl")
    return written


# -- JSON -------------------------------------------------------------------

def dumps(doc):
    return json.dumps(doc, indent=1) + "\n"


def _arr(a):
    return np.asarray(a, dtype=float).tolist()


def to_document(result, baseline=None):
    if isinstance(result, FairnessReport):
        return {
            "kind": "fairness",
            "hub_ids": list(result.hub_ids),
            "d": result.d, "d_mean": result.d_mean, "phi": result.phi,
            "J": result.J, "J_nt": result.J_nt,
            "trace": [list(t) for t in result.trace],
            "status": result.status, "iterations": result.iterations,
            "excluded": list(result.excluded),
        }
    prof = result.profile
    return {
        "kind": "dispatch",
        "mode": result.mode, "status": result.status, "iterations": result.iterations,
        "hub_ids": list(prof.hub_ids),
        "pairs": [list(p) for p in prof.pairs],
        "trades": _arr(prof.trades),
        "prices": _arr(result.prices.values),
        "setpoints": {h: {k: _arr(v) for k, v in sp.items()} for h, sp in prof.setpoints.items()},
        "costs": {h: {"assets": c.assets, "trade_payments": c.trade_payments,
                      "tariff_charges": c.tariff_charges, "total": c.total}
                  for h, c in result.costs.items()},
        "W": result.W,
        "baseline": dict(baseline) if baseline else None,
        "trace": result.trace,
        "messages_per_iteration": list(result.messages_per_iteration),
    }


def from_document(doc):
    kind = doc.get("kind")
    if kind == "fairness":
        return FairnessReport(
            hub_ids=tuple(doc["hub_ids"]), d=doc["d"], d_mean=doc["d_mean"], phi=doc["phi"],
            J=doc["J"], J_nt=doc["J_nt"], trace=[tuple(t) for t in doc["trace"]],
            status=doc["status"], iterations=doc["iterations"], excluded=tuple(doc["excluded"]),
        )
    if kind != "dispatch":
        raise IoError(f"unknown result kind {kind!r}")
    hub_ids, pairs = doc["hub_ids"], [tuple(p) for p in doc["pairs"]]
    H = len(doc["trades"][0]) if doc["trades"] else 0
    trades = np.array(doc["trades"], dtype=float).reshape(len(pairs), H)
    prices = np.array(doc["prices"], dtype=float).reshape(len(pairs), H)
    setpoints = {h: {k: np.array(v, dtype=float) for k, v in sp.items()} for h, sp in doc["setpoints"].items()}
    costs = {h: CostBreakdown(h, dict(c["assets"]), c["trade_payments"], c["tariff_charges"], c["total"])
             for h, c in doc["costs"].items()}
    return DispatchResult(
        DispatchProfile(hub_ids, pairs, trades, setpoints), costs, doc["W"],
        PriceProfile(hub_ids, pairs, prices), mode=doc["mode"], status=doc["status"],
        iterations=doc["iterations"], trace=list(doc["trace"]),
        messages_per_iteration=list(doc["messages_per_iteration"]),
    )


def read_results(path, format=None):
    """Read back what :func:`write_results` wrote.

    JSON gives the full object. A CSV directory gives a DispatchResult
    (trades, prices, cost totals, trace and messages; no setpoints) or a
    FairnessReport, depending on which tables it holds.
    """
    path = Path(path)
    if format is None:
        format = "csv" if path.is_dir() else "json"
    if format == "json":
        try:
            return from_document(json.loads(path.read_text()))
        except OSError as e:
            raise IoError(f"cannot read {path}: {e}") from e
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise IoError(f"{path}: malformed result document ({e})") from e
    if (path / "fairness.csv").exists():
        return _read_fairness_dir(path)
    return _read_dispatch_dir(path)


def _read_fairness_dir(path):
    rows = _read_csv(path / "fairness.csv", FAIRNESS_COLUMNS)
    trace = [(int(r["iter"]), float(r["phi"]), float(r["max_step"]))
             for r in _read_csv(path / "fairness_trace.csv", FAIRNESS_TRACE_COLUMNS)]
    d = {r["hub"]: float(r["d_i"]) for r in rows if not math.isnan(float(r["d_i"]))}
    dv = np.array(list(d.values()))
    return FairnessReport(
        hub_ids=tuple(r["hub"] for r in rows), d=d,
        d_mean=float(dv.mean()) if dv.size else 0.0,
        phi=float(np.mean((dv - dv.mean()) ** 2)) if dv.size else 0.0,
        J={r["hub"]: float(r["J_trading"]) for r in rows},
        J_nt={r["hub"]: float(r["J_nontrading"]) for r in rows},
        trace=trace, status="", iterations=trace[-1][0] if trace else 0,
        excluded=tuple(r["hub"] for r in rows if r["hub"] not in d),
    )


def _read_dispatch_dir(path):
    cost_rows = _read_csv(path / "costs.csv", COST_COLUMNS)
    hub_ids = [r["hub"] for r in cost_rows]
    pos = {h: k for k, h in enumerate(hub_ids)}
    series = {}
    for r in _read_csv(path / "trades.csv", TRADE_COLUMNS):
        series.setdefault((r["from"], r["to"]), []).append((int(r["hour"]), float(r["p_tr_kW"]),
                                                           float(r["price_chf_kWh"])))
    pairs = sorted({(a, b) if pos[a] < pos[b] else (b, a) for a, b in series}, key=lambda p: (pos[p[0]], pos[p[1]]))
    H = max((len(v) for v in series.values()), default=0)
    trades = np.zeros((len(pairs), H))
    prices = np.zeros((len(pairs), H))
    for e, p in enumerate(pairs):
        for h, t, c in series[p]:
            trades[e, h], prices[e, h] = t, c
    costs = {r["hub"]: CostBreakdown(r["hub"], {}, math.nan, math.nan, float(r["J_trading"])) for r in cost_rows}
    trace = []
    if (path / "trace.csv").exists():
        trace = [{"iter": int(r["iter"]), **{c: float(r[c]) for c in TRACE_COLUMNS[1:]}}
                 for r in _read_csv(path / "trace.csv", TRACE_COLUMNS)]
    messages = []
    if (path / "messages.jsonl").exists():
        messages = read_message_log(path / "messages.jsonl")
    per_iter = []
    for m in messages:
        if len(per_iter) < m.iteration:
            per_iter.extend([0] * (m.iteration - len(per_iter)))
        per_iter[m.iteration - 1] += 1
    return DispatchResult(
        DispatchProfile(hub_ids, pairs, trades), costs, float(sum(c.total for c in costs.values())),
        PriceProfile(hub_ids, pairs, prices), mode="admm" if trace else "central",
        iterations=len(trace), trace=trace, messages=messages, messages_per_iteration=per_iter,
    )


def read_baseline(path):
    """``{hub: J_nontrading}`` from a costs table."""
    return {r["hub"]: float(r["J_nontrading"]) for r in _read_csv(Path(path), COST_COLUMNS)}


def read_message_log(path):
    out = []
    try:
        with Path(path).open() as fh:
            for line in fh:
                if line.strip():
                    out.append(RoundMessage(**json.loads(line)))
    except (OSError, json.JSONDecodeError, TypeError) as e:
        raise IoError(f"cannot read message log {path}: {e}") from e
    return out


def write_certificate(cert, path, manifest: str | None = None):
    doc = cert.as_dict()
    if manifest:
        doc["manifest"] = manifest
    try:
        Path(path).write_text(dumps(doc))
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e
    return Path(path)


def read_price_file(path, scenario):
    """Price profile from a trades-style CSV (``from,to,hour,...,price_chf_kWh``)
    or a two-column ``from,to,hour,price_chf_kWh`` table. Missing entries are 0."""
    pos = {h: k for k, h in enumerate(scenario.hub_ids)}
    pairs = scenario.pairs()
    idx = {p: e for e, p in enumerate(pairs)}
    values = np.zeros((len(pairs), scenario.horizon_hours))
    try:
        with Path(path).open(newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as e:
        raise IoError(f"cannot read price file {path}: {e}") from e
    for r in rows:
        try:
            a, b, h, v = r["from"], r["to"], int(r["hour"]), float(r["price_chf_kWh"])
        except (KeyError, ValueError, TypeError) as e:
            raise IoError(f"{path}: malformed price row {r}") from e
        if a not in pos or b not in pos:
            raise IoError(f"{path}: unknown hub in price row {r}")
        key = (a, b) if pos[a] < pos[b] else (b, a)
        if key not in idx or not 0 <= h < scenario.horizon_hours:
            raise IoError(f"{path}: price row {r} does not match a linked pair and hour")
        values[idx[key], h] = v
    return PriceProfile(scenario.hub_ids, pairs, values)
