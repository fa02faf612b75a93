"""Command-line entry point.

Subcommands: delta-grid, pop, fit-onset, fit-collapse, ghs-distance,
lbit-delta.  Exit codes: 0 success, 2 configuration error, 3 numerical
fit refusal.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

from .config import ConfigError, load_config
from .fits import FitRefusal, curves_from_aggregate, fit_collapse, fit_onset, plateau_value
from .runner import run_delta_grid_to_dir, run_pop_experiment

ERGODIC_ZERO_FLOOR = 1e-9
PRESET_FAMILIES = {"ergodic": "ergodic_ki", "mbl": "mbl_ki", "sdki": "sdki"}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="experiment config file")
    p.add_argument("--seed", type=int, default=None, help="override the master seed")
    p.add_argument("--out", default=None, help="override the output directory")
    p.add_argument("--threads", type=int, default=1, help="worker count (output-invariant)")
    p.add_argument("--preset", choices=sorted(PRESET_FAMILIES),
                   default=None, help="override the model family")


def _load(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out_dir = args.out
    if args.preset is not None:
        cfg = dataclasses.replace(cfg, family=PRESET_FAMILIES[args.preset])
    return cfg


def _default_thresholds(cfg, curves):
    """Ergodic runs: 10x the numerical zero floor; MBL/l-bit runs: 0.1 x plateau."""
    if cfg.family == "ergodic_ki" or cfg.family == "sdki":
        return 10.0 * ERGODIC_ZERO_FLOOR
    return {l_e: 0.1 * plateau_value(*curves[l_e]) for l_e in curves}


def _cmd_delta_grid(args) -> int:
    cfg = _load(args)
    rows, _ = run_delta_grid_to_dir(cfg, threads=args.threads)
    print(f"delta-grid: {len(rows)} rows -> {cfg.out_dir}")
    return 0


def _cmd_ghs_distance(args) -> int:
    cfg = _load(args)
    cfg.ghs = True
    rows, _ = run_delta_grid_to_dir(cfg, threads=args.threads)
    print(f"ghs-distance: {len(rows)} rows -> {cfg.out_dir}")
    return 0


def _cmd_lbit_delta(args) -> int:
    cfg = _load(args)
    if not cfg.family.startswith("lbit"):
        raise ConfigError("lbit-delta needs family lbit_z or lbit_x")
    rows, _ = run_delta_grid_to_dir(cfg, threads=args.threads)
    print(f"lbit-delta: {len(rows)} rows -> {cfg.out_dir}")
    return 0


def _cmd_pop(args) -> int:
    cfg = _load(args)
    written = run_pop_experiment(cfg, threads=args.threads)
    print(f"pop: {len(written)} files -> {cfg.out_dir}")
    return 0


def _cmd_fit_onset(args) -> int:
    cfg = _load(args)
    table = os.path.join(cfg.out_dir, "delta_aggregate.csv")
    if not os.path.exists(table):
        raise ConfigError(f"no aggregate table at {table}; run delta-grid first")
    curves = curves_from_aggregate(table)
    fit = fit_onset(curves, _default_thresholds(cfg, curves))
    doc = {"t_star": {str(k): v for k, v in fit.t_star.items()},
           "t0": fit.t0, "xi_t": fit.xi_t, "r_squared": fit.r_squared,
           "omitted": fit.omitted}
    out = os.path.join(cfg.out_dir, "onset_fit.json")
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
    for l_e in sorted(fit.t_star):
        print(f"l_e={l_e} t*={fit.t_star[l_e]:.6g}")
    print(f"xi_t={fit.xi_t:.6g} r2={fit.r_squared:.4f} -> {out}")
    if fit.omitted:
        print(f"omitted (no crossing): {fit.omitted}")
    return 0


def _cmd_fit_collapse(args) -> int:
    cfg = _load(args)
    table = os.path.join(cfg.out_dir, "delta_aggregate.csv")
    if not os.path.exists(table):
        raise ConfigError(f"no aggregate table at {table}; run delta-grid first")
    curves = curves_from_aggregate(table)
    fit = fit_collapse(curves)
    doc = {
        "delta_inf": {str(k): v for k, v in fit.delta_inf.items()},
        "tau_star": {str(k): v for k, v in fit.tau_star.items()},
        "t_sat": {str(k): v for k, v in fit.t_sat.items()},
        "xi_tau": fit.xi_tau,
        "residual": fit.residual,
        "t_star": {str(k): v for k, v in fit.onset.t_star.items()},
        "xi_t": fit.onset.xi_t,
    }
    out = os.path.join(cfg.out_dir, "collapse_fit.json")
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
    print(f"xi_t={fit.onset.xi_t:.6g} xi_tau={fit.xi_tau:.6g} "
          f"residual={fit.residual:.6g} -> {out}")
    return 0


_COMMANDS = {
    "delta-grid": _cmd_delta_grid,
    "pop": _cmd_pop,
    "fit-onset": _cmd_fit_onset,
    "fit-collapse": _cmd_fit_collapse,
    "ghs-distance": _cmd_ghs_distance,
    "lbit-delta": _cmd_lbit_delta,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="ppesim",
                                     description="partial projected ensemble experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        _add_common(sub.add_parser(name))
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FitRefusal as exc:
        print(f"fit refused: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
