"""``fairtrade`` command line.

Subcommands: validate, baseline, dispatch, sweep, mediate, certificate,
synth. Every command that produces files writes them to ``--out`` together
with ``manifest.json`` (command, scenario, overrides, seed, version and a
SHA-256 per output file). Exit codes: 0 success, 1 domain failure, 2 usage
or parse failure. ``FAIRTRADE_LOG`` sets the log level (default WARNING).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, plotting
from .dispatch import evaluate_profile, network_baseline, run_admm, solve_centralized
from .errors import (ConfigError, FairtradeError, IoError, MaxIterExceeded, ParseError, SchemaError,
                     UnitError)
from .pricing import (MediationConfig, PricingModel, construct_beneficial_prices, run_mediation)
from .profiles import PriceProfile
from .results_io import fmt, read_price_file, write_certificate, write_results
from .scenario import load_scenario, save_scenario, shipped_scenario_path, validate_scenario
from .synthetic import DEFAULT_SEED, threehub_scenario

log = logging.getLogger("fairtrade")

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2
MANIFEST = "manifest.json"


class UsageError(Exception):
    pass


# -- helpers ----------------------------------------------------------------

def resolve_scenario_path(arg):
    p = Path(arg)
    if p.exists():
        return p
    try:
        return shipped_scenario_path(arg)
    except FileNotFoundError:
        raise UsageError(f"no scenario file or shipped scenario named {arg!r}") from None


def parse_price(spec, scenario):
    """``uniform:V``, ``file:PATH`` or ``zero``."""
    if spec is None or spec == "zero":
        return PriceProfile.zero(scenario)
    kind, _, val = spec.partition(":")
    if kind == "uniform":
        try:
            return PriceProfile.uniform(scenario, float(val))
        except ValueError:
            raise UsageError(f"bad price value in {spec!r}") from None
    if kind == "file" and val:
        return read_price_file(val, scenario)
    raise UsageError(f"price source must be uniform:VALUE, file:PATH or zero (got {spec!r})")


def parse_price_list(text):
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"bad price list {text!r}") from None
    if not vals:
        raise UsageError("at least one price is required")
    return vals


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out, args, scenario_path, files):
    overrides = {k: v for k, v in sorted(vars(args).items())
                 if k not in ("func", "command", "scenario", "out") and v is not None}
    doc = {
        "tool": "fairtrade",
        "version": __version__,
        "command": args.command,
        "scenario": str(scenario_path) if scenario_path else None,
        "overrides": overrides,
        "output_dir": str(out),
        "seed": args.seed,
        "files": {Path(f).name: _sha256(f) for f in files},
    }
    path = Path(out) / MANIFEST
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return path


def _plots_enabled(args):
    if args.no_plots:
        return False
    if not plotting.available():
        log.warning("matplotlib is not installed; skipping figures")
        return False
    return True


def _out_dir(args):
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise IoError(f"cannot create output directory {out}: {e}") from e
    return out


def _load(args):
    path = resolve_scenario_path(args.scenario)
    s = load_scenario(path, strict=True)
    return path, s


def _solve(args, s, c, tol=None, max_iter=None):
    """Dispatch with the chosen mode; ``None`` keeps the solver defaults."""
    if args.mode == "admm":
        kw = {"tol": tol} if tol is not None else {}
        if max_iter is not None:
            kw["max_iter"] = max_iter
        return run_admm(s, c, rho=args.rho, **kw)
    return solve_centralized(s, c)


def _baseline_costs(s):
    return {h: b.J for h, b in network_baseline(s).items()}


def write_inputs_csv(s, path):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["hub_id", "hour", "L_e_kW", "L_h_kW", "irradiance_kW_m2"])
        for hid in s.hub_ids:
            irr = s.irradiance.get(hid, np.zeros(s.horizon_hours))
            for h in range(s.horizon_hours):
                w.writerow([hid, h, fmt(s.demand[hid].electric[h]), fmt(s.demand[hid].thermal[h]), fmt(irr[h])])
    return Path(path)


# -- commands ---------------------------------------------------------------

def cmd_validate(args):
    path = resolve_scenario_path(args.scenario)
    s = load_scenario(path, strict=False)
    rep = validate_scenario(s)
    text = rep.format()
    print(text)
    files = []
    if args.out:
        out = _out_dir(args)
        (out / "validation.txt").write_text(text + "\n")
        files.append(out / "validation.txt")
        write_manifest(out, args, path, files)
    return EXIT_OK if rep.ok else EXIT_DOMAIN


def cmd_baseline(args):
    path, s = _load(args)
    out = _out_dir(args)
    base = network_baseline(s)
    f = out / "baseline.csv"
    with f.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["hub", "J_nontrading"])
        for hid, b in base.items():
            w.writerow([hid, fmt(b.J)])
            print(f"{hid}: J_nt = {b.J:.4f} CHF")
    W_nt = sum(b.J for b in base.values())
    print(f"W_nt = {W_nt:.4f} CHF")
    write_manifest(out, args, path, [f])
    return EXIT_OK


def cmd_dispatch(args):
    path, s = _load(args)
    out = _out_dir(args)
    c = parse_price(args.price, s)
    status = EXIT_OK
    try:
        res = _solve(args, s, c, args.tol, args.max_iter)
    except MaxIterExceeded as e:
        log.error("%s; writing the best iterate", e)
        res, status = e.result, EXIT_DOMAIN
    base = _baseline_costs(s)
    W_nt = sum(base.values())
    files = write_results(res, out, "csv", baseline=base)
    files += write_results(res, out / "result.json", "json", baseline=base, manifest=MANIFEST)
    if _plots_enabled(args):
        files.append(plotting.plot_trades(res, out / "trades.png"))
        files.append(plotting.plot_prices(res.prices, out / "prices.png"))
        if res.trace:
            files.append(plotting.plot_trace(res.trace, ("iter", "primal_res", "dual_res"), out / "trace.png"))
    write_manifest(out, args, path, files)
    red = (W_nt - res.W) / W_nt if W_nt else 0.0
    print(f"mode {res.mode} status {res.status} iterations {res.iterations}")
    print(f"W = {res.W:.6f} CHF, W_nt = {W_nt:.6f} CHF, reduction = {100 * red:.4f} %")
    for hid in s.hub_ids:
        J = res.costs[hid].total
        d = (base[hid] - J) / base[hid] if base[hid] else float("nan")
        print(f"  {hid}: J = {J:.4f}  J_nt = {base[hid]:.4f}  d = {100 * d:.3f} %")
    return status


def cmd_sweep(args):
    path, s = _load(args)
    out = _out_dir(args)
    prices = parse_price_list(args.prices)
    base = _baseline_costs(s)
    results = [_solve(args, s, PriceProfile.uniform(s, v), args.tol, args.max_iter) for v in prices]
    table = {}
    for v, r in zip(prices, results):
        table[fmt(v)] = {h: (base[h] - r.costs[h].total) / base[h] for h in s.hub_ids}
    ref = results[0].profile.trades
    dev = [float(np.max(np.abs(r.profile.trades - ref))) if ref.size else 0.0 for r in results]
    f = out / "reductions.csv"
    with f.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["hub"] + list(table))
        for h in s.hub_ids:
            w.writerow([h] + [fmt(table[k][h]) for k in table])
        w.writerow(["trade_dev_kW"] + [fmt(x) for x in dev])
    files = [f]
    if _plots_enabled(args):
        files.append(plotting.plot_reductions(table, out / "reductions.png"))
    write_manifest(out, args, path, files)
    print("hub      " + "".join(f"{k:>12}" for k in table))
    for h in s.hub_ids:
        print(f"{h:<9}" + "".join(f"{100 * table[k][h]:>11.3f}%" for k in table))
    print(f"max trade deviation across prices: {max(dev):.3e} kW")
    return EXIT_OK


def mediation_config(args):
    return MediationConfig(
        step_beta=args.beta,
        safeguard_enabled=bool(args.safeguard),
        tol=args.tol if args.tol is not None else MediationConfig.tol,
        max_iter=args.max_iter if args.max_iter is not None else MediationConfig.max_iter,
    )


def cmd_mediate(args):
    path, s = _load(args)
    out = _out_dir(args)
    c0 = parse_price(args.price or "uniform:0.18", s)
    res = _solve(args, s, c0)
    base = _baseline_costs(s)
    model = PricingModel.from_dispatch(res, base)
    prices, rep = run_mediation(model, mediation_config(args), c0)
    files = write_results(rep, out, "csv")
    files += write_results(rep, out / "fairness.json", "json", manifest=MANIFEST)
    # the trade schedule is unchanged; only the prices and the cost split move
    final = replace(res, costs=evaluate_profile(s, res.profile, prices)[0], prices=prices)
    files += write_results(final, out, "csv", baseline=base)
    if _plots_enabled(args):
        files.append(plotting.plot_prices(prices, out / "prices.png"))
        files.append(plotting.plot_trace(rep.trace, ("iter", "phi", "max_step"), out / "fairness_trace.png"))
        J_start = model.costs(c0.vector())
        start = {h: (base[h] - J_start[k]) / base[h] for k, h in enumerate(s.hub_ids) if h in rep.d}
        files.append(plotting.plot_reductions({"start": start, "mediated": rep.d}, out / "reductions.png"))
    write_manifest(out, args, path, files)
    print(f"mediation {rep.status} after {rep.iterations} iterations, phi = {rep.phi:.3e}")
    for h in s.hub_ids:
        d = rep.d.get(h)
        dtxt = f"{100 * d:.4f} %" if d is not None else "excluded"
        print(f"  {h}: d = {dtxt}  J = {rep.J[h]:.4f}  J_nt = {rep.J_nt[h]:.4f}")
    print(f"max |d_i - mean| = {rep.max_deviation:.3e}")
    return EXIT_OK if rep.status != "MaxIter" else EXIT_DOMAIN


def cmd_certificate(args):
    path, s = _load(args)
    out = _out_dir(args)
    res = solve_centralized(s, PriceProfile.zero(s))
    base = _baseline_costs(s)
    model = PricingModel.from_dispatch(res, base)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        cert = construct_beneficial_prices(model, per_hour=args.per_hour)
    for w in caught:
        print(f"note: {w.message}")
    f = write_certificate(cert, out / "certificate.json", manifest=MANIFEST)
    write_manifest(out, args, path, [f])
    passed = 0
    for h in s.hub_ids:
        ok = cert.gaps[h] <= cert.tol
        passed += ok
        print(f"  {h}: gap = {cert.gaps[h]:+.6f} CHF  {'pass' if ok else 'FAIL'}")
    print(f"kappa = {cert.kappa:.6f} CHF; {passed}/{len(s.hub_ids)} hubs pass")
    return EXIT_OK if cert.passed else EXIT_DOMAIN


def cmd_synth(args):
    out = _out_dir(args)
    seed = DEFAULT_SEED if args.seed is None else args.seed
    s = threehub_scenario(seed=seed)
    scen = out / "threehub.scenario"
    save_scenario(s, scen, series_csv="threehub_series.csv")
    files = [scen, out / "threehub_series.csv", write_inputs_csv(s, out / "inputs.csv")]
    if _plots_enabled(args):
        files.append(plotting.plot_inputs(s, out / "inputs.png"))
    write_manifest(out, args, None, files)
    print(f"wrote {scen} (seed {seed})")
    return EXIT_OK


# -- entry point ------------------------------------------------------------

def build_parser():
    ap = argparse.ArgumentParser(prog="fairtrade", description="Bilateral energy trading between energy hubs.")
    ap.add_argument("--version", action="version", version=f"fairtrade {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, scenario=True, out_default="fairtrade-out"):
        if scenario:
            p.add_argument("scenario", help="scenario file or shipped scenario name")
        p.add_argument("--out", default=out_default, metavar="DIR", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="seed recorded in the manifest")
        p.add_argument("--no-plots", action="store_true", help="skip PNG figures")

    def solver_opts(p):
        p.add_argument("--mode", choices=("central", "admm"), default="central")
        p.add_argument("--rho", type=float, default=None, help="ADMM penalty (default: scenario value)")
        p.add_argument("--tol", type=float, default=None)
        p.add_argument("--max-iter", type=int, default=None)

    p = sub.add_parser("validate", help="check a scenario file")
    common(p, out_default=None)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("baseline", help="non-trading cost of every hub")
    common(p)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("dispatch", help="solve the trading game at given prices")
    common(p)
    solver_opts(p)
    p.add_argument("--price", default=None, help="uniform:VALUE | file:PATH | zero (default zero)")
    p.set_defaults(func=cmd_dispatch)

    p = sub.add_parser("sweep", help="cost reductions across uniform prices")
    common(p)
    solver_opts(p)
    p.add_argument("--prices", default="0.1,0.18,0.2", help="comma-separated CHF/kWh values")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("mediate", help="fair prices by projected-gradient mediation")
    common(p)
    solver_opts(p)
    p.add_argument("--price", default=None, help="start prices (default uniform:0.18)")
    p.add_argument("--beta", type=float, default=None, help="step size (default 1/L)")
    p.add_argument("--safeguard", action="store_true", help="keep every hub at or below its baseline cost")
    p.set_defaults(func=cmd_mediate)

    p = sub.add_parser("certificate", help="construct beneficial prices and check them")
    common(p)
    p.add_argument("--per-hour", action="store_true", help="one price per pair and hour")
    p.set_defaults(func=cmd_certificate)

    p = sub.add_parser("synth", help="write the synthetic 3-hub scenario")
    common(p, scenario=False)
    p.set_defaults(func=cmd_synth)
    return ap


def configure_logging():
    level = os.environ.get("FAIRTRADE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def main(argv=None):
    configure_logging()
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    try:
        return args.func(args)
    except (UsageError, ConfigError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, SchemaError, UnitError, IoError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except FairtradeError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
