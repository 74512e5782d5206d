"""Trade and price containers shared by the dispatch and pricing layers.

Both store one row per linked unordered pair ``(i, j)`` (``i`` before ``j``
in hub order) and one column per hour. The value for the reversed pair is
derived on access, so reciprocity of trades (``p_ji = -p_ij``) and symmetry
of prices (``c_ji = c_ij``) hold by construction.

Sign convention: ``trade(i, j)[h] > 0`` means hub ``i`` imports from hub
``j`` during hour ``h``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _as_pair_array(a, n_pairs):
    a = np.asarray(a, dtype=float)
    if a.ndim == 2 and a.shape[0] == n_pairs:
        return a
    return a.reshape(n_pairs, -1)


def _pair_index(pairs):
    idx = {}
    for e, (i, j) in enumerate(pairs):
        idx[(i, j)] = (e, 1.0)
        idx[(j, i)] = (e, -1.0)
    return idx


@dataclass(eq=False)
class DispatchProfile:
    hub_ids: tuple
    pairs: tuple
    trades: np.ndarray                       # (E, H), canonical direction
    setpoints: dict = field(default_factory=dict)   # hub -> {block name: (H,) array}

    def __post_init__(self):
        self.hub_ids = tuple(self.hub_ids)
        self.pairs = tuple(tuple(p) for p in self.pairs)
        self.trades = _as_pair_array(self.trades, len(self.pairs))
        self._idx = _pair_index(self.pairs)

    @property
    def horizon(self):
        return self.trades.shape[1]

    def trade(self, i, j):
        """Series ``p_tr[i][j]``; zeros for unlinked pairs."""
        if (i, j) not in self._idx:
            return np.zeros(self.horizon)
        e, sign = self._idx[(i, j)]
        return sign * self.trades[e]

    def trade_tensor(self):
        """Dense ``(N, N, H)`` array over ordered pairs."""
        N = len(self.hub_ids)
        T = np.zeros((N, N, self.horizon))
        pos = {h: k for k, h in enumerate(self.hub_ids)}
        for e, (i, j) in enumerate(self.pairs):
            T[pos[i], pos[j]] = self.trades[e]
            T[pos[j], pos[i]] = -self.trades[e]
        return T

    def hub_trades(self, hub_id):
        """Net imports of ``hub_id`` from each linked partner."""
        out = {}
        for i, j in self.pairs:
            if hub_id == i:
                out[j] = self.trade(i, j)
            elif hub_id == j:
                out[i] = self.trade(j, i)
        return out

    def reciprocity_error(self):
        T = self.trade_tensor()
        return float(np.max(np.abs(T + T.transpose(1, 0, 2)))) if T.size else 0.0


@dataclass(eq=False)
class PriceProfile:
    hub_ids: tuple
    pairs: tuple
    values: np.ndarray                       # (E, H) CHF/kWh

    def __post_init__(self):
        self.hub_ids = tuple(self.hub_ids)
        self.pairs = tuple(tuple(p) for p in self.pairs)
        self.values = _as_pair_array(self.values, len(self.pairs))
        self._idx = _pair_index(self.pairs)

    @classmethod
    def uniform(cls, scenario, value):
        pairs = scenario.pairs()
        return cls(scenario.hub_ids, pairs, np.full((len(pairs), scenario.horizon_hours), float(value)))

    @classmethod
    def zero(cls, scenario):
        return cls.uniform(scenario, 0.0)

    @property
    def horizon(self):
        return self.values.shape[1]

    def price(self, i, j):
        """Series ``c_(i,j)``; symmetric in ``(i, j)``, zeros for unlinked pairs."""
        if (i, j) not in self._idx:
            return np.zeros(self.horizon)
        return self.values[self._idx[(i, j)][0]]

    def hub_prices(self, hub_id):
        out = {}
        for i, j in self.pairs:
            if hub_id in (i, j):
                out[j if hub_id == i else i] = self.values[self._idx[(i, j)][0]]
        return out

    def vector(self):
        return self.values.reshape(-1).copy()

    def with_vector(self, v):
        return PriceProfile(self.hub_ids, self.pairs, np.asarray(v, dtype=float).reshape(self.values.shape))

    def tensor(self):
        N = len(self.hub_ids)
        C = np.zeros((N, N, self.horizon))
        pos = {h: k for k, h in enumerate(self.hub_ids)}
        for e, (i, j) in enumerate(self.pairs):
            C[pos[i], pos[j]] = C[pos[j], pos[i]] = self.values[e]
        return C
