"""Command-line front end: ``emfsg {analytic,rebt,simulate,fit,compare}``.

Configuration is a flat ``key = value`` file with ``#`` comments.  Physical
keys carry their unit in the name (``P4_dBm``, ``W5_MHz``, ``lambda4_per_m2``
or ``lambda4_per_km2``, ``D_m``, ``window_R_m``); all conversions to SI
happen in :func:`build_config`.  A line ``preset = table1`` fills every
physical key that is not given with the reference parameter set.

Curves are written as ``x,value`` CSV files.  Numbers use the shortest
round-trip decimal form, and each curve has a JSON sidecar with the scenario
and the numerical diagnostics.  Exposures are in watts, REBT-DL in W/(bit/s).

Exit codes: 0 success, 2 configuration error, 3 numerical tolerance not
met, 4 file or format error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import analytic, fitting, montecarlo
from .analytic import BudgetExceededError, DistributionCurve, ScenarioSpec, TruncationSpec
from .propagation import dbm_to_w
from .spatial import InsufficientTruncationError, NetworkParams, Window
from .specfun import ConvergenceError

log = logging.getLogger("emfsg")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

RATS = ("4g", "5g", "endc")
MODELS = ("ppp", "bgpp")

# key -> (default under "preset = table1", description)
PHYSICAL_KEYS = {
    "alpha": (4.0, "path-loss exponent"),
    "D_m": (40.0, "guard radius in metres"),
    "P4_dBm": (45.0, "4G effective transmit power in dBm"),
    "P5_dBm": (51.0, "5G effective transmit power in dBm"),
    "lambda4_per_m2": (7.5294e-6, "4G site intensity per square metre"),
    "lambda5_per_m2": (5.1244e-6, "5G site intensity per square metre"),
    "beta4": (0.75, "4G repulsion"),
    "beta5": (0.83, "5G repulsion"),
    "W4_MHz": (20.0, "4G bandwidth in MHz"),
    "W5_MHz": (90.0, "5G bandwidth in MHz"),
    "eta": (0.0469, "beam alignment probability"),
    "p": (0.7, "co-location probability"),
}
OTHER_KEYS = {
    "preset": None,
    "model": "both",
    "rat": "all",
    "seed": 0,
    "n_realizations": 100000,
    "window_R_m": 4500.0,
    "mc_integration_n": 200000,
    "tau_dBm_min": -80.0,
    "tau_dBm_max": 60.0,
    "tau_points": 281,
    "y_dB_min": -180.0,
    "y_dB_max": -50.0,
    "y_points": 131,
    "center_lat_deg": fitting.PARIS_CENTER[0],
    "center_lon_deg": fitting.PARIS_CENTER[1],
    "fit_replicates": 100,
    "colocation_radius_m": 10.0,
}
_ALIASES = {"lambda4_per_km2": "lambda4_per_m2", "lambda5_per_km2": "lambda5_per_m2"}
_INT_KEYS = {"seed", "n_realizations", "mc_integration_n", "tau_points", "y_points", "fit_replicates"}
_STR_KEYS = {"preset", "model", "rat"}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


class CurveFormatError(ValueError):
    """Malformed curve CSV; the message names the offending line."""


@dataclass
class RunConfig:
    params: NetworkParams
    rats: tuple
    models: tuple
    seed: int
    n_realizations: int
    window: Window
    mc_integration_n: int
    tau_grid: np.ndarray
    y_grid: np.ndarray
    center: tuple
    fit_replicates: int
    colocation_radius: float
    given: dict = field(default_factory=dict)


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Raw ``key -> (value string, line number)`` map."""
    raw = {}
    for n, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{source}: line {n}: expected 'key = value'")
        key, val = (s.strip() for s in body.split("=", 1))
        if key in raw:
            raise ConfigError(f"{source}: line {n}: duplicate key {key!r}")
        raw[key] = (val, n)
    return raw


def _number(key, val, line):
    try:
        if key in _INT_KEYS:
            f = float(val)
            if f != int(f):
                raise ValueError
            return int(f)
        return float(val)
    except ValueError:
        raise ConfigError(f"line {line}: field {key!r}: not a number: {val!r}") from None


def build_config(raw: dict, command: str) -> RunConfig:
    """Validate raw fields and convert engineering units to SI."""
    vals = {}
    for key, (val, line) in raw.items():
        canon = _ALIASES.get(key, key)
        if canon not in PHYSICAL_KEYS and canon not in OTHER_KEYS:
            raise ConfigError(f"line {line}: unknown field {key!r}")
        if canon in vals:
            raise ConfigError(f"line {line}: field {canon!r} given twice (with unit alias)")
        if canon in _STR_KEYS:
            vals[canon] = val.lower()
        else:
            v = _number(canon, val, line)
            vals[canon] = v * 1e-6 if key.endswith("_per_km2") else v
    preset = vals.get("preset")
    if preset not in (None, "table1"):
        raise ConfigError(f"field 'preset': unknown preset {preset!r}")
    rv = vals.get("rat", "all")
    if rv == "all":
        rats = RATS
    else:
        try:
            rats = (analytic.norm_rat(rv),)
        except ValueError:
            raise ConfigError(f"field 'rat': expected 4g, 5g, endc or all, got {rv!r}") from None
    mv = vals.get("model", "both")
    if mv not in ("ppp", "bgpp", "both"):
        raise ConfigError(f"field 'model': expected ppp, bgpp or both, got {mv!r}")
    models = MODELS if mv == "both" else (mv,)

    needed = set(PHYSICAL_KEYS)
    if command in ("analytic", "simulate"):
        needed -= {"W4_MHz", "W5_MHz"}
    if command in ("fit", "compare"):
        needed = set()
    phys = {}
    for key, (default, desc) in PHYSICAL_KEYS.items():
        if key in vals:
            phys[key] = vals[key]
        elif preset == "table1" or key not in needed:
            phys[key] = default
        else:
            raise ConfigError(f"field {key!r} ({desc}) is required for '{command}'")
    try:
        params = NetworkParams(
            lambda4=phys["lambda4_per_m2"], lambda5=phys["lambda5_per_m2"],
            beta4=phys["beta4"], beta5=phys["beta5"],
            P4_eff=float(dbm_to_w(phys["P4_dBm"])), P5_eff=float(dbm_to_w(phys["P5_dBm"])),
            W4=phys["W4_MHz"] * 1e6, W5=phys["W5_MHz"] * 1e6,
            D=phys["D_m"], alpha=phys["alpha"], eta=phys["eta"], p=phys["p"],
        )
    except ValueError as exc:
        raise ConfigError(f"invalid parameter: {exc}") from None
    o = {k: vals.get(k, d) for k, d in OTHER_KEYS.items()}
    for key in ("n_realizations", "mc_integration_n", "tau_points", "y_points", "fit_replicates"):
        if o[key] < 1:
            raise ConfigError(f"field {key!r} must be at least 1")
    if o["tau_dBm_max"] <= o["tau_dBm_min"] or o["y_dB_max"] <= o["y_dB_min"]:
        raise ConfigError("grid bounds must satisfy min < max")
    try:
        window = Window(o["window_R_m"])
    except ValueError as exc:
        raise ConfigError(f"field 'window_R_m': {exc}") from None
    tau = dbm_to_w(np.linspace(o["tau_dBm_min"], o["tau_dBm_max"], o["tau_points"]))
    y = 10.0 ** (np.linspace(o["y_dB_min"], o["y_dB_max"], o["y_points"]) / 10.0)
    return RunConfig(params, rats, models, o["seed"], o["n_realizations"], window, o["mc_integration_n"],
                     tau, y, (o["center_lat_deg"], o["center_lon_deg"]), o["fit_replicates"],
                     o["colocation_radius_m"], vals)


def load_config(path: Optional[str], command: str) -> RunConfig:
    if path is None:
        return build_config({"preset": ("table1", 0)}, command)
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise IOError(f"cannot read config {path}: {exc}") from exc
    return build_config(parse_config_text(text, path), command)


# ---------------------------------------------------------------------------
# Curve files
# ---------------------------------------------------------------------------


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return repr(f) if not math.isfinite(f) else f
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    return v


def write_curve(path, curve: DistributionCurve, sidecar: dict):
    """``x,value`` CSV plus ``<path>.json`` with kind, provenance and metadata."""
    lines = ["x,value"] + [f"{float(x)!r},{float(v)!r}" for x, v in zip(curve.grid, curve.values)]
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    side = {"kind": curve.kind, "provenance": curve.provenance, "meta": curve.meta}
    side.update(sidecar)
    with open(path + ".json", "w", newline="\n") as fh:
        json.dump(_jsonable(side), fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_curve(path) -> DistributionCurve:
    """Inverse of :func:`write_curve`; the sidecar is optional (kind defaults to cdf)."""
    xs, vs = [], []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "x,value":
            raise CurveFormatError(f"{path}: line 1: expected header 'x,value', got {header!r}")
        for n, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise CurveFormatError(f"{path}: line {n}: expected two fields")
            try:
                xs.append(float(parts[0]))
                vs.append(float(parts[1]))
            except ValueError:
                raise CurveFormatError(f"{path}: line {n}: not a number") from None
    kind, prov, meta = "cdf", "empirical", {}
    if os.path.exists(path + ".json"):
        with open(path + ".json") as fh:
            try:
                side = json.load(fh)
            except json.JSONDecodeError as exc:
                raise CurveFormatError(f"{path}.json: line {exc.lineno}: {exc.msg}") from None
        kind, prov, meta = side.get("kind", kind), side.get("provenance", prov), side.get("meta", {})
    try:
        return DistributionCurve(np.array(xs), np.array(vs), kind, prov, meta)
    except ValueError as exc:
        raise CurveFormatError(f"{path}: {exc}") from None


def _scenario_dict(sc: ScenarioSpec):
    return {"rat": sc.rat, "model": sc.model, "params": asdict(sc.params), "seed": sc.seed,
            "window_R_m": sc.window.radius,
            "truncation": {k: v for k, v in asdict(sc.truncation).items()}}


def _scenarios(cfg: RunConfig):
    tr = TruncationSpec(mc_integration_n=cfg.mc_integration_n)
    for rat in cfg.rats:
        for model in cfg.models:
            yield ScenarioSpec(rat, model, cfg.params, tr, cfg.seed, cfg.window)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_analytic(cfg: RunConfig, out: str):
    os.makedirs(out, exist_ok=True)
    written = []
    for sc in _scenarios(cfg):
        stem = os.path.join(out, f"exposure_{sc.rat}_{sc.model}")
        side = {"scenario": _scenario_dict(sc), "x_unit": "W"}
        cdf = analytic.cdf_exposure(sc, cfg.tau_grid)
        write_curve(stem + "_cdf.csv", cdf, dict(side, quantity="exposure CDF"))
        pdf = analytic.pdf_exposure(sc, cfg.tau_grid)
        write_curve(stem + "_pdf.csv", pdf, dict(side, quantity="exposure PDF", value_unit="1/W"))
        written += [stem + "_cdf.csv", stem + "_pdf.csv"]
    return written


def cmd_rebt(cfg: RunConfig, out: str):
    os.makedirs(out, exist_ok=True)
    written = []
    for sc in _scenarios(cfg):
        if sc.rat == "endc":
            curve = analytic.rebt_cdf_endc(cfg.y_grid, sc)
        else:
            curve = analytic.rebt_cdf_single(cfg.y_grid, sc)
        path = os.path.join(out, f"rebt_{sc.rat}_{sc.model}_cdf.csv")
        write_curve(path, curve, {"scenario": _scenario_dict(sc), "x_unit": "W/(bit/s)", "quantity": "REBT-DL CDF"})
        written.append(path)
    return written


def cmd_simulate(cfg: RunConfig, out: str):
    os.makedirs(out, exist_ok=True)
    written = []
    with_rebt = "W4_MHz" in cfg.given or "W5_MHz" in cfg.given or cfg.given.get("preset") == "table1"
    for sc in _scenarios(cfg):
        spec = montecarlo.McRunSpec(sc, cfg.n_realizations, cfg.seed, cfg.window)
        res = montecarlo.run_rebt_mc(spec) if with_rebt else montecarlo.run_exposure_mc(spec)
        stem = os.path.join(out, f"sim_{sc.rat}_{sc.model}")
        side = {"scenario": _scenario_dict(sc), "n_realizations": cfg.n_realizations,
                "n_redrawn": res.n_redrawn, "n_without_5g": res.n_without_5g}
        write_curve(stem + "_exposure_ecdf.csv", res.curve(cfg.tau_grid, "exposure"),
                    dict(side, x_unit="W", quantity="exposure ECDF"))
        written.append(stem + "_exposure_ecdf.csv")
        cols = {"S4": res.sample.S4, "I4": res.sample.I4, "S5": res.sample.S5, "I5": res.sample.I5,
                "exposure": res.exposure}
        if res.rebt is not None:
            write_curve(stem + "_rebt_ecdf.csv", res.curve(cfg.y_grid, "rebt"),
                        dict(side, x_unit="W/(bit/s)", quantity="REBT-DL ECDF", n_infinite=res.n_infinite))
            written.append(stem + "_rebt_ecdf.csv")
            cols["rebt"] = res.rebt
        with open(stem + "_samples.csv", "w", newline="\n") as fh:
            fh.write(",".join(cols) + "\n")
            for row in zip(*cols.values()):
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
        written.append(stem + "_samples.csv")
    return written


def cmd_fit(cfg: RunConfig, data_csv: str, out: str):
    os.makedirs(out, exist_ok=True)
    records = fitting.read_bs_csv(data_csv)
    window = Window(cfg.window.radius)
    summary = {"data": os.path.basename(data_csv), "center_lat_deg": cfg.center[0],
               "center_lon_deg": cfg.center[1], "window_R_m": window.radius}
    written = []
    pts = {}
    for tech, tag in (("fourG", "4g"), ("fiveG", "5g")):
        recs = [r for r in records if r.tech == tech]
        if not recs:
            summary[f"n_{tag}"] = 0
            continue
        xy = fitting.project(recs, cfg.center)
        pat = fitting.window_filter(xy, (0.0, 0.0), window.radius)
        pts[tag] = pat.points
        summary[f"n_{tag}"] = len(pat)
        if len(pat) < 30:
            log.warning("%s: %d points in the window, beta not fitted", tag, len(pat))
            continue
        res = fitting.fit_beta(pat, window, replicates=cfg.fit_replicates, seed=cfg.seed)
        summary[f"beta_{tag}"] = res.beta_hat
        summary[f"lambda_{tag}_per_m2"] = res.lambda_hat
        summary[f"objective_{tag}"] = res.objective
        for which, curve in (("empirical", res.curve_emp), ("model", res.curve_model)):
            path = os.path.join(out, f"J_{tag}_{which}.csv")
            write_curve(path, curve, {"x_unit": "m", "quantity": f"J-function ({which})", "tech": tag})
            written.append(path)
    if len(pts.get("4g", [])) and len(pts.get("5g", [])):
        summary["p_colocated"] = fitting.estimate_colocation(pts["4g"], pts["5g"], cfg.colocation_radius)
    path = os.path.join(out, "fit_summary.txt")
    with open(path, "w", newline="\n") as fh:
        for k in sorted(summary):
            v = summary[k]
            fh.write(f"{k} = {v!r}\n" if isinstance(v, float) else f"{k} = {v}\n")
    written.append(path)
    return written, summary


def cmd_compare(path_a: str, path_b: str):
    a, b = read_curve(path_a), read_curve(path_b)
    if a.kind != b.kind:
        raise ConfigError(f"cannot compare a {a.kind} with a {b.kind}")
    return montecarlo.ks_distance(a, b)


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _parser():
    ap = argparse.ArgumentParser(prog="emfsg", description="EMF exposure and REBT-DL in 4G/5G EN-DC networks")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, helptext in (("analytic", "exposure CDF/PDF by CF inversion"),
                           ("rebt", "REBT-DL CDFs"),
                           ("simulate", "Monte Carlo ECDFs and sample dumps")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", help="key = value file (default: the table1 preset)")
        p.add_argument("--out", required=True, help="output directory")
    p = sub.add_parser("fit", help="fit beta to base-station coordinates")
    p.add_argument("data_csv", help="id,lat_deg,lon_deg,tech file")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p = sub.add_parser("compare", help="KS distance between two curve files")
    p.add_argument("curve_a")
    p.add_argument("curve_b")
    p.add_argument("--max-ks", type=float, default=None, help="exit with code 3 above this distance")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "compare":
            ks = cmd_compare(args.curve_a, args.curve_b)
            print(f"ks = {ks!r}")
            if args.max_ks is not None and ks > args.max_ks:
                print(f"KS distance above {args.max_ks!r}", file=sys.stderr)
                return EXIT_NUMERIC
            return EXIT_OK
        cfg = load_config(args.config, args.command)
        if args.command == "analytic":
            files = cmd_analytic(cfg, args.out)
        elif args.command == "rebt":
            files = cmd_rebt(cfg, args.out)
        elif args.command == "simulate":
            files = cmd_simulate(cfg, args.out)
        else:
            files, summary = cmd_fit(cfg, args.data_csv, args.out)
            for k in sorted(summary):
                print(f"{k} = {summary[k]}")
        for f in files:
            log.info("wrote %s", f)
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConvergenceError, InsufficientTruncationError, BudgetExceededError) as exc:
        print(f"numerical tolerance not met: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, fitting.DataFormatError, CurveFormatError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
