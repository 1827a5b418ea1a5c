"""
Command-line front end.

Every command writes ``<command>.csv`` (plus ``nstar.csv`` for sweeps) and a
``manifest.json`` with the resolved configuration into the output
directory. Exit codes: 0 success, 2 configuration error, 3 infeasible
operating point, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__, bounds
from .config import PRESETS, ExperimentConfig, load_config, preset
from .correlation import max_spacing, optimize_spacing, spacing_objective
from .exceptions import ConfigurationError, InfeasibleError, NumericalError, SmMimoError
from .sweep import (MomentCache, NStarRow, SweepRow, TightnessRow, correlation_for, evaluate_grid,
                    fixed_ring_mu, optimize_n, random_tightness_report, row_fields,
                    tightness_report)

SCHEMA_VERSION = 1
OUTPUT_ENV = "SMMIMO_OUTPUT_DIR"
COMMANDS = ("bounds", "simulate", "tightness", "sweep", "optimize-n", "optimize-spacing",
            "moments")

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_NUMERICAL = 0, 2, 3, 4


def fmt(x) -> str:
    """Render a CSV cell: 12 significant digits for floats, plain text otherwise."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(x, ".12g")
    return str(x)


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])


# -- commands ----------------------------------------------------------------

def _moments(cfg, out, threads):
    sc = cfg.scenario()
    return MomentCache(out / "cache").get(sc, workers=threads)


def cmd_bounds(cfg, out, threads):
    sc = cfg.scenario()
    base = cfg.system_params()
    mom = _moments(cfg, out, threads) if sc.placement == "uniform-random" else None
    corr = correlation_for(base.N, sc.device_size, sc.wavelength, sc.spacing)
    header = ["combiner", "placement", "M", "N", "K", "T", "omega", "snr_eff", "B",
              "time_fraction", "chi_sq", "p_c", "shannon_term", "index_term",
              "detection_penalty", "per_ue_rate", "sum_rate", "eps_s", "r_sum"]
    rows = []
    for comb in cfg.combiners():
        p = base.with_(combiner=comb).validate()
        layout = sc.layout(p.omega)
        if mom is not None:
            sinr = bounds.inv_sinr_random(p, mom, corr, layout.pilot_mask, sc.include_variance)
        else:
            sinr = bounds.inv_sinr_fixed(p, fixed_ring_mu(sc, p.K), corr, layout.pilot_mask)
        res = bounds.se_from_sigma(sinr.sigma_sq, p.N, p.time_fraction)
        rows.append([comb, sc.placement, p.M, p.N, p.K, p.T, p.omega, p.snr, p.B,
                     p.time_fraction, float(np.mean(sinr.sigma_sq)), float(np.mean(res.p_c)),
                     float(np.mean(res.shannon_term)), float(np.mean(res.index_term)),
                     float(np.mean(res.detection_penalty)), float(np.mean(res.rate)),
                     float(res.sum_rate), corr.eps_s, corr.r_sum])
    write_csv(out / "bounds.csv", header, rows)
    return ["bounds.csv"]


def cmd_simulate(cfg, out, threads):
    from .geometry import attenuation, place_ues
    from .montecarlo import mutual_information, sinr_lemma1

    sc = cfg.scenario()
    base = cfg.system_params()
    layout = sc.layout(base.omega)
    placement = place_ues(layout, base.K, sc.placement, sc.ring_radius, sc.min_distance, cfg.seed)
    atten = attenuation(layout, placement, sc.alpha, sc.min_distance)
    corr = correlation_for(base.N, sc.device_size, sc.wavelength, sc.spacing)
    kinds = cfg.combiners()
    for comb in kinds:
        base.with_(combiner=comb).validate()
    sims = sinr_lemma1(base, atten, corr, layout.pilot_mask, draws=cfg.get("draws"),
                       seed=cfg.seed, combiners=kinds, workers=threads)
    header = ["combiner", "k", "n", "inv_sinr_simulated", "inv_sinr_stderr", "inv_sinr_bound",
              "ue_rate_simulated", "ue_rate_stderr", "ue_rate_bound", "draws"]
    rows = []
    for comb in kinds:
        p = base.with_(combiner=comb)
        cf = bounds.inv_sinr_fixed(p, atten.mu, corr, layout.pilot_mask)
        cf_rate = bounds.se_from_sigma(cf.sigma_sq, p.N, p.time_fraction)
        mi = mutual_information(p, sims[comb], samples=cfg.get("mi_samples"), seed=cfg.seed)
        for k in range(p.K):
            for n in range(p.N):
                rows.append([comb, k, n, sims[comb].inv_sinr[k, n], sims[comb].stderr[k, n],
                             cf.inv_sinr[k, n], mi.value[k], mi.stderr[k], cf_rate.rate[k],
                             sims[comb].draws])
    write_csv(out / "simulate.csv", header, rows)
    return ["simulate.csv"]


def cmd_tightness(cfg, out, threads):
    header = ["series"] + row_fields(TightnessRow)
    rows = []
    for member, grid, sc in cfg.grids():
        if grid.axis != "M":
            raise ConfigurationError("tightness sweeps run along the M axis")
        tag = _series_tag(member)
        if sc.placement == "fixed-ring":
            res = tightness_report(grid.fixed, sc, grid.values, grid.combiners,
                                   draws=cfg.get("draws"), mi_samples=cfg.get("mi_samples"),
                                   seed=cfg.seed, workers=threads)
        else:
            mom = MomentCache(out / "cache").get(sc, workers=threads)
            res = random_tightness_report(grid.fixed, sc, mom, grid.values, grid.combiners,
                                          placements=cfg.get("placements"), seed=cfg.seed)
        rows += [[tag] + list(asdict(r).values()) for r in res]
    write_csv(out / "tightness.csv", header, rows)
    return ["tightness.csv"]


def _series_tag(member):
    return ";".join(f"{k}={v}" for k, v in member.items())


def cmd_sweep(cfg, out, threads):
    rows, stars = [], []
    fingerprints = set()
    for member, grid, sc in cfg.grids():
        mom = MomentCache(out / "cache").get(sc, workers=threads) \
            if sc.placement == "uniform-random" else None
        res = evaluate_grid(grid, sc, mom)
        fingerprints.add(res.fingerprint)
        tag = _series_tag(member)
        rows += [[grid.axis, tag] + list(asdict(r).values()) for r in res.rows]
        stars += [[grid.axis, tag] + list(asdict(r).values()) for r in res.n_star]
    write_csv(out / "sweep.csv", ["axis", "series"] + row_fields(SweepRow), rows)
    write_csv(out / "nstar.csv", ["axis", "series"] + row_fields(NStarRow), stars)
    return ["sweep.csv", "nstar.csv"]


def cmd_optimize_n(cfg, out, threads):
    sc = cfg.scenario()
    mom = _moments(cfg, out, threads) if sc.placement == "uniform-random" else None
    header = ["combiner", "N", "feasible", "reason", "sum_rate", "per_ue_rate", "sigma_sq",
              "p_c", "time_fraction", "is_optimal"]
    rows = []
    for comb in cfg.combiners():
        p = cfg.system_params(combiner=comb)
        n_star, table = optimize_n(p, sc, mom, cfg.candidate_n())
        for r in table:
            rows.append([comb, r.N, r.feasible, r.reason, r.sum_rate, r.per_ue_rate, r.sigma_sq,
                         r.p_c, r.time_fraction, r.N == n_star])
    write_csv(out / "optimize-n.csv", header, rows)
    return ["optimize-n.csv"]


def cmd_optimize_spacing(cfg, out, threads):
    sc = cfg.scenario()
    header = ["N", "device_size", "wavelength", "d_max", "eps_at_d_max", "d_opt", "eps_opt"]
    rows = []
    for n in cfg.candidate_n():
        if n < 2:
            continue
        d_max = max_spacing(n, sc.device_size)
        d_opt, eps_opt = optimize_spacing(n, sc.device_size, sc.wavelength)
        rows.append([n, sc.device_size, sc.wavelength, d_max,
                     float(spacing_objective(d_max, n, sc.wavelength)), d_opt, eps_opt])
    write_csv(out / "optimize-spacing.csv", header, rows)
    return ["optimize-spacing.csv"]


def cmd_moments(cfg, out, threads):
    mom = _moments(cfg, out, threads)
    header = ["cell", "mu_bar1", "mu_bar2", "mu_var", "stderr_mu_bar1", "stderr_mu_bar2",
              "samples", "fingerprint"]
    rows = [[j, mom.mu_bar[j, 0], mom.mu_bar[j, 1], mom.mu_var[j], mom.stderr[j, 0],
             mom.stderr[j, 1], mom.sample_count, mom.fingerprint]
            for j in range(mom.mu_bar.shape[0])]
    write_csv(out / "moments.csv", header, rows)
    return ["moments.csv"]


HANDLERS = {
    "bounds": cmd_bounds,
    "simulate": cmd_simulate,
    "tightness": cmd_tightness,
    "sweep": cmd_sweep,
    "optimize-n": cmd_optimize_n,
    "optimize-spacing": cmd_optimize_spacing,
    "moments": cmd_moments,
}


# -- entry point -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="smmimo",
        description="Spectral-efficiency bounds and sweeps for multi-cell massive SM-MIMO uplinks.")
    ap.add_argument("command", nargs="?", choices=COMMANDS,
                    help="what to run (a preset supplies a default)")
    ap.add_argument("--config", metavar="PATH", help="INI configuration file")
    ap.add_argument("--preset", metavar="ID", help=f"figure preset: {', '.join(PRESETS)}")
    ap.add_argument("--set", metavar="KEY=VALUE", action="append", default=[],
                    help="override one key (repeatable); KEY may be section.key")
    ap.add_argument("--out", metavar="DIR", help=f"output directory (default ${OUTPUT_ENV} or ./out)")
    ap.add_argument("--seed", type=int, help="master seed")
    ap.add_argument("--threads", type=int, default=1, help="worker threads for Monte Carlo")
    # shortcuts for frequently changed keys
    ap.add_argument("--combiner", help="comma list of combiners (mr, zf)")
    ap.add_argument("--draws", type=int, help="Monte-Carlo channel draws")
    ap.add_argument("--axis", help="sweep axis")
    ap.add_argument("--values", help="sweep values, e.g. 64..1024 or 20..1000:20")
    return ap


def resolve(args) -> ExperimentConfig:
    cfg = preset(args.preset) if args.preset else ExperimentConfig.defaults()
    if args.config:
        cfg = load_config(args.config, cfg)
    updates = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigurationError(f"--set expects KEY=VALUE, got {item!r}")
        updates[key.strip()] = value
    for flag, key in (("seed", "seed"), ("combiner", "combiners"), ("draws", "draws"),
                      ("axis", "axis"), ("values", "values")):
        v = getattr(args, flag)
        if v is not None:
            updates[key] = v
    if args.combiner is not None and "," not in args.combiner:
        updates.setdefault("combiner", args.combiner)
    return cfg.override(updates) if updates else cfg


def run(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    t0 = time.perf_counter()
    try:
        cfg = resolve(args)
        command = args.command or cfg.get("command")
        if not command:
            raise ConfigurationError("no command given and the configuration names none")
        if command not in HANDLERS:
            raise ConfigurationError(f"unknown command {command!r}")
        if args.threads < 1:
            raise ConfigurationError("--threads must be >= 1")
        out = Path(args.out or cfg.get("directory") or os.environ.get(OUTPUT_ENV) or "out")
        out.mkdir(parents=True, exist_ok=True)
        files = HANDLERS[command](cfg, out, args.threads)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except SmMimoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "preset": args.preset,
        "seed": cfg.seed,
        "version": __version__,
        "config": cfg.to_sections(),
        "files": files,
        "wall_time_s": round(time.perf_counter() - t0, 3),
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {', '.join(files)} to {out}")
    return EXIT_OK


def main() -> None:
    sys.exit(run())
