"""Scenario types, the JSON scenario format and validation.

Internal units are kW (power), kWh (energy), CHF, hours and kW/m2
(irradiance). Every quantity in a scenario file may be written either as a
bare number in those units or as ``{"value": ..., "unit": "..."}``; the loader
converts tagged values and rejects unknown tags.

File layout (single JSON document)::

    {
      "name": "threehub",
      "horizon_hours": 24,
      "tariffs": {"grid_import": 0.22, "grid_feed_in": 0.12, "gas": 0.115},
      "params": {"trading_tariff_gamma": 0.001, "admm_penalty_rho": 1.0,
                 "import_regularization_weight": 1e-7},
      "hubs": [{"id": "hub1", "grid": {"import_max": null, "export_max": null},
                "converters": [{"kind": "chp", ...}, {"kind": "pv", ...}]}],
      "links": [{"from_hub": "hub1", "to_hub": "hub2", "capacity_kappa": 1000}],
      "series": {"csv": "series.csv"}
    }

``series`` is either ``{"csv": relative_path}`` (columns
``hub_id,hour,L_e_kW,L_h_kW,irradiance_kW_m2``) or inline, keyed by hub id:
``{"hub1": {"L_e": [...], "L_h": [...], "irradiance": [...]}}``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParseError, SchemaError, UnitError

DEFAULT_GAMMA = 0.001
DEFAULT_RHO = 1.0
DEFAULT_KAPPA = 1000.0
DEFAULT_IMPORT_REG = 1e-7

CONVERTER_KINDS = ("chp", "hp", "gb", "pv", "es", "ts")
SERIES_COLUMNS = ("hub_id", "hour", "L_e_kW", "L_h_kW", "irradiance_kW_m2")

# unit tag -> factor to the internal unit, grouped by dimension
UNITS = {
    "power": {"W": 1e-3, "kW": 1.0, "MW": 1e3},
    "energy": {"Wh": 1e-3, "kWh": 1.0, "MWh": 1e3},
    # CHF/kW is read as CHF per kW held for one hour (1 h steps)
    "price": {"CHF/kWh": 1.0, "CHF/MWh": 1e-3, "Rp/kWh": 1e-2, "CHF/kW": 1.0},
    "gamma": {"CHF/kW2": 1.0, "CHF/kW^2": 1.0, "CHF/MW2": 1e-6, "CHF/MW^2": 1e-6},
    "irradiance": {"kW/m2": 1.0, "kW/m^2": 1.0, "W/m2": 1e-3, "W/m^2": 1e-3},
    "area": {"m2": 1.0, "m^2": 1.0},
    "ratio": {"": 1.0, "1": 1.0, "-": 1.0, "%": 1e-2},
    "scalar": {"": 1.0, "1": 1.0},
}


# -- types ----------------------------------------------------------------

@dataclass(frozen=True)
class ChpSpec:
    eta: float
    p_vertices: tuple
    q_vertices: tuple


@dataclass(frozen=True)
class HpSpec:
    cop: float
    q_min: float
    q_max: float


@dataclass(frozen=True)
class GbSpec:
    eta: float
    q_min: float
    q_max: float


@dataclass(frozen=True)
class PvSpec:
    eta: float
    area_m2: float
    p_min: float
    p_max: float


@dataclass(frozen=True)
class StorageSpec:
    """Electrical or thermal storage, ``soc[h] = g*soc[h-1] + eta*ch - dc/eta``."""

    standby_gamma: float
    cycle_eta: float
    soc_min: float
    soc_max: float
    charge_min: float
    charge_max: float
    discharge_min: float
    discharge_max: float
    soc_initial: float


@dataclass(frozen=True)
class HubSpec:
    id: str
    chp: ChpSpec | None = None
    hp: HpSpec | None = None
    gb: GbSpec | None = None
    pv: PvSpec | None = None
    es: StorageSpec | None = None
    ts: StorageSpec | None = None
    import_max: float = math.inf
    export_max: float = math.inf


@dataclass(frozen=True)
class TariffTable:
    grid_import: float
    grid_feed_in: float
    gas: float


@dataclass(frozen=True)
class TradeLink:
    from_hub: str
    to_hub: str
    capacity_kappa: float = DEFAULT_KAPPA

    @property
    def pair(self):
        return tuple(sorted((self.from_hub, self.to_hub)))


@dataclass(frozen=True, eq=False)
class DemandSeries:
    electric: np.ndarray
    thermal: np.ndarray


@dataclass(frozen=True, eq=False)
class Scenario:
    hubs: tuple
    tariffs: TariffTable
    links: tuple
    horizon_hours: int
    demand: dict
    irradiance: dict
    trading_tariff_gamma: float = DEFAULT_GAMMA
    admm_penalty_rho: float = DEFAULT_RHO
    import_regularization_weight: float = DEFAULT_IMPORT_REG
    name: str = "scenario"

    @property
    def hub_ids(self):
        return [h.id for h in self.hubs]

    def hub(self, hub_id):
        for h in self.hubs:
            if h.id == hub_id:
                return h
        raise KeyError(hub_id)

    def partners(self, hub_id):
        """Linked partners of ``hub_id`` in hub order."""
        linked = {l.to_hub if l.from_hub == hub_id else l.from_hub
                  for l in self.links if hub_id in (l.from_hub, l.to_hub)}
        return [h for h in self.hub_ids if h in linked]

    def pairs(self):
        """Linked unordered pairs as (i, j) with i before j in hub order."""
        order = {h: k for k, h in enumerate(self.hub_ids)}
        out = []
        for l in self.links:
            a, b = sorted((l.from_hub, l.to_hub), key=lambda h: order.get(h, len(order)))
            out.append((a, b))
        return sorted(set(out), key=lambda p: (order.get(p[0], 0), order.get(p[1], 0)))

    def kappa(self, i, j):
        for l in self.links:
            if {l.from_hub, l.to_hub} == {i, j}:
                return l.capacity_kappa
        return 0.0


@dataclass(frozen=True)
class Finding:
    path: str
    message: str

    def __str__(self):
        return f"{self.path}: {self.message}"


@dataclass
class ValidationReport:
    errors: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.errors

    def format(self):
        lines = [f"{len(self.errors)} error(s), {len(self.warnings)} warning(s)"]
        lines += [f"error   {f}" for f in self.errors]
        lines += [f"warning {f}" for f in self.warnings]
        return "\n".join(lines)


# -- validation ---------------------------------------------------------

def validate_scenario(s: Scenario) -> ValidationReport:
    """Check every scenario invariant; findings are returned, never raised."""
    rep = ValidationReport()
    err = lambda path, msg: rep.errors.append(Finding(path, msg))  # noqa: E731

    H = s.horizon_hours
    if not isinstance(H, (int, np.integer)) or H <= 0:
        err("horizon_hours", "horizon must be a positive integer")
        H = None

    ids = [h.id for h in s.hubs]
    if not ids:
        err("hubs", "at least one hub is required")
    seen = set()
    for k, hid in enumerate(ids):
        if hid in seen:
            err(f"hubs[{k}].id", f"duplicate hub id {hid!r}")
        seen.add(hid)

    t = s.tariffs
    for name in ("grid_import", "grid_feed_in", "gas"):
        if getattr(t, name) < 0:
            err(f"tariffs.{name}", "negative tariff")
    if t.grid_feed_in > t.grid_import:
        rep.warnings.append(Finding("tariffs.grid_feed_in", "feed-in price exceeds import price"))
    if s.trading_tariff_gamma < 0:
        err("params.trading_tariff_gamma", "negative trading tariff")
    if not s.admm_penalty_rho > 0:
        err("params.admm_penalty_rho", "ADMM penalty must be positive")
    if s.import_regularization_weight < 0:
        err("params.import_regularization_weight", "negative regularization weight")

    pairs = set()
    for k, l in enumerate(s.links):
        if l.from_hub not in seen:
            err(f"links[{k}].from_hub", f"unknown hub {l.from_hub!r}")
        if l.to_hub not in seen:
            err(f"links[{k}].to_hub", f"unknown hub {l.to_hub!r}")
        if l.from_hub == l.to_hub:
            err(f"links[{k}]", "link endpoints must differ")
        if l.capacity_kappa < 0:
            err(f"links[{k}].capacity_kappa", "negative link capacity")
        if l.pair in pairs:
            err(f"links[{k}]", "more than one link for this hub pair")
        pairs.add(l.pair)

    for k, hub in enumerate(s.hubs):
        _check_hub(hub, f"hubs[{k}]", err)

    for hid in ids:
        d = s.demand.get(hid)
        if d is None:
            err(f"series.{hid}", "missing demand series")
            continue
        for name, arr in (("L_e", d.electric), ("L_h", d.thermal)):
            path = f"series.{hid}.{name}"
            if H is not None and len(arr) != H:
                err(path, f"series has {len(arr)} entries, expected {H}")
            if np.any(~np.isfinite(arr)):
                err(path, "non-finite demand value")
            elif np.any(np.asarray(arr) < 0):
                err(path, "negative demand")
        irr = s.irradiance.get(hid)
        if irr is not None:
            path = f"series.{hid}.irradiance"
            if H is not None and len(irr) != H:
                err(path, f"series has {len(irr)} entries, expected {H}")
            if np.any(np.asarray(irr) < 0):
                err(path, "negative irradiance")
    for hid in s.demand:
        if hid not in seen:
            err(f"series.{hid}", f"series for unknown hub {hid!r}")
    return rep


def _check_hub(hub, path, err):
    if hub.import_max < 0 or hub.export_max < 0:
        err(f"{path}.grid", "grid bounds must be nonnegative")
    if hub.chp is not None:
        c = hub.chp
        if not 0 < c.eta <= 1:
            err(f"{path}.chp.eta", "efficiency must lie in (0, 1]")
        if len(c.p_vertices) != 4 or len(c.q_vertices) != 4:
            err(f"{path}.chp", "exactly four vertices are required")
        elif np.any(np.asarray(c.p_vertices) < 0) or np.any(np.asarray(c.q_vertices) < 0):
            err(f"{path}.chp", "vertex outputs must be nonnegative")
        elif len(set(zip(c.p_vertices, c.q_vertices))) == 1:
            err(f"{path}.chp", "vertices coincide; operating region is a point")
    if hub.hp is not None:
        if not hub.hp.cop > 0:
            err(f"{path}.hp.cop", "COP must be positive")
        if hub.hp.q_min > hub.hp.q_max:
            err(f"{path}.hp.q_bounds", "bounds out of order")
    if hub.gb is not None:
        if not 0 < hub.gb.eta <= 1:
            err(f"{path}.gb.eta", "efficiency must lie in (0, 1]")
        if hub.gb.q_min > hub.gb.q_max:
            err(f"{path}.gb.q_bounds", "bounds out of order")
    if hub.pv is not None:
        if not 0 < hub.pv.eta <= 1:
            err(f"{path}.pv.eta", "efficiency must lie in (0, 1]")
        if hub.pv.area_m2 < 0:
            err(f"{path}.pv.area_m2", "negative area")
        if hub.pv.p_min > hub.pv.p_max:
            err(f"{path}.pv.p_bounds", "bounds out of order")
    for kind in ("es", "ts"):
        st = getattr(hub, kind)
        if st is None:
            continue
        sp = f"{path}.{kind}"
        if not 0 < st.cycle_eta <= 1:
            err(f"{sp}.cycle_eta", "cycle efficiency must lie in (0, 1]")
        if not 0 < st.standby_gamma <= 1:
            err(f"{sp}.standby_gamma", "standby factor must lie in (0, 1]")
        for name in ("soc", "charge", "discharge"):
            lo, hi = getattr(st, f"{name}_min"), getattr(st, f"{name}_max")
            if lo > hi:
                err(f"{sp}.{name}_bounds", "bounds out of order")
        if not st.soc_min <= st.soc_initial <= st.soc_max:
            err(f"{sp}.soc_initial", "initial state of charge outside bounds")


# -- unit handling ----------------------------------------------------------

def convert(raw, dimension, path):
    """Convert a bare or unit-tagged value (scalar or list) to internal units."""
    unit = None
    if isinstance(raw, dict):
        if "value" not in raw:
            raise SchemaError(path, "tagged quantity needs a 'value'")
        unit = raw.get("unit", "")
        raw = raw["value"]
    factor = 1.0
    if unit is not None:
        table = UNITS[dimension]
        if unit not in table:
            known = {u for t in UNITS.values() for u in t}
            if unit in known:
                raise UnitError(f"{path}: unit {unit!r} is not a {dimension} unit")
            raise UnitError(f"{path}: unknown unit {unit!r}")
        factor = table[unit]
    try:
        if isinstance(raw, (list, tuple)):
            return [_num(v) * factor for v in raw]
        return _num(raw) * factor
    except (TypeError, ValueError):
        raise SchemaError(path, f"expected a number, got {raw!r}") from None


def _num(v):
    if v is None:
        return math.inf
    if isinstance(v, bool):
        raise TypeError
    return float(v)


def _req(d, key, path):
    if not isinstance(d, dict):
        raise SchemaError(path, "expected an object")
    if key not in d:
        raise SchemaError(f"{path}.{key}" if path else key, "missing required field")
    return d[key]


def _q(d, key, dim, path, default=None):
    sub = f"{path}.{key}" if path else key
    if key not in d:
        if default is None:
            raise SchemaError(sub, "missing required field")
        return default
    return convert(d[key], dim, sub)


def _bounds(d, key, dim, path):
    v = _q(d, key, dim, path)
    if not isinstance(v, list) or len(v) != 2:
        raise SchemaError(f"{path}.{key}", "expected [min, max]")
    return v


# -- loading ---------------------------------------------------------------

def load_scenario(path, strict=True) -> Scenario:
    """Read a scenario file.

    With ``strict`` (default) any validation error is raised as a
    SchemaError naming the offending field; otherwise the Scenario is
    returned as parsed and the caller is expected to run
    :func:`validate_scenario`.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ParseError(f"cannot read {path}: {e}") from e
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: invalid JSON ({e})") from e
    s = scenario_from_dict(doc, base_dir=path.parent, default_name=path.stem.split(".")[0])
    if strict:
        rep = validate_scenario(s)
        if rep.errors:
            f = rep.errors[0]
            raise SchemaError(f.path, f.message)
    return s


def scenario_from_dict(doc, base_dir=".", default_name="scenario") -> Scenario:
    if not isinstance(doc, dict):
        raise ParseError("scenario document must be a JSON object")
    H = _req(doc, "horizon_hours", "")
    if not isinstance(H, int) or isinstance(H, bool):
        raise SchemaError("horizon_hours", "expected an integer")

    traw = _req(doc, "tariffs", "")
    tariffs = TariffTable(
        grid_import=_q(traw, "grid_import", "price", "tariffs"),
        grid_feed_in=_q(traw, "grid_feed_in", "price", "tariffs"),
        gas=_q(traw, "gas", "price", "tariffs"),
    )

    params = doc.get("params", {}) or {}
    gamma = _q(params, "trading_tariff_gamma", "gamma", "params", DEFAULT_GAMMA)
    rho = _q(params, "admm_penalty_rho", "scalar", "params", DEFAULT_RHO)
    reg = _q(params, "import_regularization_weight", "scalar", "params", DEFAULT_IMPORT_REG)

    hubs_raw = _req(doc, "hubs", "")
    if not isinstance(hubs_raw, list):
        raise SchemaError("hubs", "expected a list")
    hubs = tuple(_parse_hub(h, f"hubs[{k}]") for k, h in enumerate(hubs_raw))

    links_raw = _req(doc, "links", "")
    if not isinstance(links_raw, list):
        raise SchemaError("links", "expected a list")
    links = []
    for k, l in enumerate(links_raw):
        p = f"links[{k}]"
        fr, to = _req(l, "from_hub", p), _req(l, "to_hub", p)
        links.append(TradeLink(str(fr), str(to), _q(l, "capacity_kappa", "power", p, DEFAULT_KAPPA)))

    series = _req(doc, "series", "")
    demand, irr = _parse_series(series, [h.id for h in hubs], Path(base_dir))

    return Scenario(
        hubs=hubs, tariffs=tariffs, links=tuple(links), horizon_hours=H,
        demand=demand, irradiance=irr, trading_tariff_gamma=gamma,
        admm_penalty_rho=rho, import_regularization_weight=reg,
        name=str(doc.get("name", default_name)),
    )


def _parse_hub(raw, path):
    hid = str(_req(raw, "id", path))
    grid = raw.get("grid", {}) or {}
    kw = {"id": hid,
          "import_max": _q(grid, "import_max", "power", f"{path}.grid", math.inf),
          "export_max": _q(grid, "export_max", "power", f"{path}.grid", math.inf)}
    convs = raw.get("converters", [])
    if not isinstance(convs, list):
        raise SchemaError(f"{path}.converters", "expected a list")
    for k, c in enumerate(convs):
        cp = f"{path}.converters[{k}]"
        kind = _req(c, "kind", cp)
        if kind not in CONVERTER_KINDS:
            raise SchemaError(f"{cp}.kind", f"unknown converter kind {kind!r}")
        if kind in kw:
            raise SchemaError(f"{cp}.kind", f"duplicate {kind} converter")
        if kind == "chp":
            kw[kind] = ChpSpec(_q(c, "eta", "ratio", cp),
                               tuple(_q(c, "p_vertices", "power", cp)),
                               tuple(_q(c, "q_vertices", "power", cp)))
        elif kind == "hp":
            lo, hi = _bounds(c, "q_bounds", "power", cp)
            kw[kind] = HpSpec(_q(c, "cop", "ratio", cp), lo, hi)
        elif kind == "gb":
            lo, hi = _bounds(c, "q_bounds", "power", cp)
            kw[kind] = GbSpec(_q(c, "eta", "ratio", cp), lo, hi)
        elif kind == "pv":
            lo, hi = _bounds(c, "p_bounds", "power", cp)
            kw[kind] = PvSpec(_q(c, "eta", "ratio", cp), _q(c, "area_m2", "area", cp), lo, hi)
        else:
            smin, smax = _bounds(c, "soc_bounds", "energy", cp)
            cmin, cmax = _bounds(c, "charge_bounds", "power", cp)
            dmin, dmax = _bounds(c, "discharge_bounds", "power", cp)
            kw[kind] = StorageSpec(
                standby_gamma=_q(c, "standby_gamma", "ratio", cp),
                cycle_eta=_q(c, "cycle_eta", "ratio", cp),
                soc_min=smin, soc_max=smax, charge_min=cmin, charge_max=cmax,
                discharge_min=dmin, discharge_max=dmax,
                soc_initial=_q(c, "soc_initial", "energy", cp, smin),
            )
    return HubSpec(**kw)


def _parse_series(series, hub_ids, base_dir):
    if not isinstance(series, dict):
        raise SchemaError("series", "expected an object")
    if "csv" in series:
        return read_series_csv(base_dir / series["csv"], hub_ids)
    demand, irr = {}, {}
    for hid, rec in series.items():
        p = f"series.{hid}"
        le = _q(rec, "L_e", "power", p)
        lh = _q(rec, "L_h", "power", p)
        if not isinstance(le, list) or not isinstance(lh, list):
            raise SchemaError(p, "demand series must be lists")
        demand[hid] = DemandSeries(np.array(le, dtype=float), np.array(lh, dtype=float))
        if "irradiance" in rec:
            irr[hid] = np.array(_q(rec, "irradiance", "irradiance", p), dtype=float)
    return demand, irr


def read_series_csv(path, hub_ids=None):
    """Read the long-format time-series CSV into demand and irradiance dicts."""
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as e:
        raise ParseError(f"cannot read series file {path}: {e}") from e
    rows = {}
    with fh:
        reader = csv.DictReader(fh)
        missing = [c for c in SERIES_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise SchemaError(f"series.csv.{missing[0]}", "missing column")
        for line, r in enumerate(reader, start=2):
            try:
                hour = int(r["hour"])
                vals = (float(r["L_e_kW"]), float(r["L_h_kW"]), float(r["irradiance_kW_m2"]))
            except (TypeError, ValueError):
                raise ParseError(f"{path}:{line}: malformed row") from None
            rows.setdefault(r["hub_id"], {})[hour] = vals
    demand, irr = {}, {}
    for hid, by_hour in rows.items():
        hours = sorted(by_hour)
        if hours != list(range(len(hours))):
            raise SchemaError(f"series.{hid}.hour", "hours must be 0..H-1 without gaps")
        arr = np.array([by_hour[h] for h in hours], dtype=float)
        demand[hid] = DemandSeries(arr[:, 0].copy(), arr[:, 1].copy())
        irr[hid] = arr[:, 2].copy()
    return demand, irr


def write_series_csv(s: Scenario, path):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SERIES_COLUMNS)
        for hid in s.hub_ids:
            d = s.demand[hid]
            irr = s.irradiance.get(hid, np.zeros(s.horizon_hours))
            for h in range(s.horizon_hours):
                w.writerow([hid, h, repr(float(d.electric[h])), repr(float(d.thermal[h])), repr(float(irr[h]))])


# -- saving -------------------------------------------------------------------

def _inf_to_none(v):
    return None if math.isinf(v) else v


def scenario_to_dict(s: Scenario, series_csv=None):
    """Inverse of :func:`scenario_from_dict` (bare numbers, internal units)."""
    hubs = []
    for hub in s.hubs:
        convs = []
        if hub.chp:
            convs.append({"kind": "chp", "eta": hub.chp.eta,
                          "p_vertices": list(hub.chp.p_vertices), "q_vertices": list(hub.chp.q_vertices)})
        if hub.hp:
            convs.append({"kind": "hp", "cop": hub.hp.cop, "q_bounds": [hub.hp.q_min, hub.hp.q_max]})
        if hub.gb:
            convs.append({"kind": "gb", "eta": hub.gb.eta, "q_bounds": [hub.gb.q_min, hub.gb.q_max]})
        if hub.pv:
            convs.append({"kind": "pv", "eta": hub.pv.eta, "area_m2": hub.pv.area_m2,
                          "p_bounds": [hub.pv.p_min, hub.pv.p_max]})
        for kind in ("es", "ts"):
            st = getattr(hub, kind)
            if st:
                convs.append({"kind": kind, "cycle_eta": st.cycle_eta, "standby_gamma": st.standby_gamma,
                              "soc_bounds": [st.soc_min, st.soc_max],
                              "charge_bounds": [st.charge_min, st.charge_max],
                              "discharge_bounds": [st.discharge_min, st.discharge_max],
                              "soc_initial": st.soc_initial})
        hubs.append({"id": hub.id,
                     "grid": {"import_max": _inf_to_none(hub.import_max),
                              "export_max": _inf_to_none(hub.export_max)},
                     "converters": convs})
    if series_csv is not None:
        series = {"csv": str(series_csv)}
    else:
        series = {}
        for hid in s.hub_ids:
            rec = {"L_e": s.demand[hid].electric.tolist(), "L_h": s.demand[hid].thermal.tolist()}
            if hid in s.irradiance:
                rec["irradiance"] = s.irradiance[hid].tolist()
            series[hid] = rec
    return {
        "name": s.name,
        "horizon_hours": s.horizon_hours,
        "tariffs": {"grid_import": s.tariffs.grid_import, "grid_feed_in": s.tariffs.grid_feed_in,
                    "gas": s.tariffs.gas},
        "params": {"trading_tariff_gamma": s.trading_tariff_gamma,
                   "admm_penalty_rho": s.admm_penalty_rho,
                   "import_regularization_weight": s.import_regularization_weight},
        "hubs": hubs,
        "links": [{"from_hub": l.from_hub, "to_hub": l.to_hub, "capacity_kappa": l.capacity_kappa}
                  for l in s.links],
        "series": series,
    }


def save_scenario(s: Scenario, path, series_csv=None):
    """Write ``s`` as JSON; with ``series_csv`` the series go to that CSV file
    (path relative to the scenario file)."""
    path = Path(path)
    if series_csv is not None:
        write_series_csv(s, path.parent / series_csv)
    path.write_text(json.dumps(scenario_to_dict(s, series_csv), indent=1) + "\n")


def shipped_scenario_path(name):
    """Path of a scenario bundled with the package (``threehub`` etc.)."""
    here = Path(__file__).parent / "scenarios"
    p = here / (name if name.endswith(".scenario") else f"{name}.scenario")
    if not p.exists():
        raise FileNotFoundError(f"no shipped scenario named {name!r}")
    return p


def shipped_scenarios():
    return sorted(p.name[:-len(".scenario")] for p in (Path(__file__).parent / "scenarios").glob("*.scenario"))
