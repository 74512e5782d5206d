"""Optional PNG figures written next to the CSV outputs.

matplotlib is imported lazily with the Agg backend, so the rest of the
package never needs it. Every function returns the path it wrote.
"""

from __future__ import annotations

import importlib.util
from pathlib import Path

import numpy as np


def available():
    return importlib.util.find_spec("matplotlib") is not None


def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def _save(fig, path):
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    _pyplot().close(fig)
    return path


def plot_inputs(scenario, path):
    """Demand and irradiance series per hub."""
    plt = _pyplot()
    hours = np.arange(scenario.horizon_hours)
    fig, axes = plt.subplots(3, 1, figsize=(7, 7), sharex=True)
    for hid in scenario.hub_ids:
        axes[0].plot(hours, scenario.demand[hid].electric, label=hid)
        axes[1].plot(hours, scenario.demand[hid].thermal, label=hid)
        axes[2].plot(hours, scenario.irradiance[hid], label=hid)
    axes[0].set_ylabel("electric load [kW]")
    axes[1].set_ylabel("heat load [kW]")
    axes[2].set_ylabel("irradiance [kW/m2]")
    axes[2].set_xlabel("hour")
    axes[0].legend(loc="upper right", fontsize="small")
    return _save(fig, path)


def plot_trades(result, path):
    """Canonical-direction trades per linked pair."""
    plt = _pyplot()
    prof = result.profile
    fig, ax = plt.subplots(figsize=(7, 3.5))
    hours = np.arange(prof.horizon)
    for e, (i, j) in enumerate(prof.pairs):
        ax.step(hours, prof.trades[e], where="mid", label=f"{i} imports from {j}")
    ax.axhline(0.0, color="0.6", lw=0.8)
    ax.set_xlabel("hour")
    ax.set_ylabel("traded power [kW]")
    ax.legend(fontsize="small")
    return _save(fig, path)


def plot_prices(prices, path):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(7, 3.5))
    hours = np.arange(prices.horizon)
    for e, (i, j) in enumerate(prices.pairs):
        ax.step(hours, prices.values[e], where="mid", label=f"{i}-{j}")
    ax.set_xlabel("hour")
    ax.set_ylabel("price [CHF/kWh]")
    ax.legend(fontsize="small")
    return _save(fig, path)


def plot_reductions(table, path):
    """Grouped bars of d_i per hub; ``table`` maps a label (e.g. a price) to {hub: d_i}."""
    plt = _pyplot()
    labels = list(table)
    hubs = list(next(iter(table.values()))) if table else []
    fig, ax = plt.subplots(figsize=(7, 3.5))
    width = 0.8 / max(len(labels), 1)
    x = np.arange(len(hubs))
    for k, lab in enumerate(labels):
        ax.bar(x + k * width, [100.0 * table[lab][h] for h in hubs], width, label=str(lab))
    ax.set_xticks(x + width * (len(labels) - 1) / 2, hubs)
    ax.axhline(0.0, color="0.3", lw=0.8)
    ax.set_ylabel("cost reduction [%]")
    ax.legend(fontsize="small")
    return _save(fig, path)


def plot_trace(rows, columns, path, log_scale=True):
    """Convergence trace; ``rows`` are dicts or tuples with ``columns[0]`` as the x axis."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 3.5))
    if rows and isinstance(rows[0], dict):
        data = {c: [r[c] for r in rows] for c in columns}
    else:
        data = {c: [r[k] for r in rows] for k, c in enumerate(columns)}
    x = data[columns[0]]
    for c in columns[1:]:
        y = np.abs(np.asarray(data[c], dtype=float))
        ax.plot(x, np.where(y > 0, y, np.nan) if log_scale else y, label=c)
    if log_scale:
        ax.set_yscale("log")
    ax.set_xlabel(columns[0])
    ax.legend(fontsize="small")
    return _save(fig, path)
