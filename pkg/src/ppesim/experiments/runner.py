"""Sweep execution: disorder/initial-state grids over (t, L_E) cells.

Every cell (realization, geometry) draws its randomness from a SplitMix64
child seed, so the whole pipeline is a pure function of (config, master
seed): re-runs produce byte-identical CSV output for any worker count.
"""
from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .. import circuits, lbit
from ..ensembles import build_ppe, delta, ghs_distance
from ..pop import PoPHistogram, Erlang, export_histogram_csv, kl_divergence, \
    mellin_convolve, pop_bitstrings, sdki_reference
from ..states import MeasurementBasis, ProductStateSpec, Tripartition, \
    make_product_state, partial_trace, random_product_state
from .config import ConfigError, ExperimentConfig
from .seeding import child_seed

RESUME_MARKER = "delta_grid.resume.json"


def _initial_spec(cfg: ExperimentConfig, n_sites: int, gen) -> ProductStateSpec:
    if cfg.initial_state == "plus":
        return ProductStateSpec.plus(n_sites)
    if cfg.initial_state == "polarized":
        return ProductStateSpec.polarized(n_sites)
    if cfg.initial_state == "explicit":
        if cfg.explicit_amplitudes.n_sites != n_sites:
            raise ConfigError("explicit amplitudes do not match the geometry")
        return cfg.explicit_amplitudes
    return random_product_state(n_sites, gen)


def _ki_params(cfg: ExperimentConfig, n_sites: int, gen):
    if cfg.family == "ergodic_ki":
        return circuits.ergodic_params(n_sites, gen)
    if cfg.family == "mbl_ki":
        return circuits.mbl_params(n_sites, gen, cfg.gamma)
    return circuits.self_dual_params(n_sites, gen)


def _measure_basis(cfg: ExperimentConfig, l_s: int) -> MeasurementBasis:
    if cfg.family == "lbit_x":
        return MeasurementBasis.x(l_s)
    if cfg.family == "lbit_z":
        return MeasurementBasis.z(l_s)
    return MeasurementBasis.z(l_s) if cfg.basis == "z" else MeasurementBasis.x(l_s)


def _run_cell(cfg: ExperimentConfig, l_e: int, l_s: int, realization: int):
    """Delta (and optional gHS distance) along the time grid for one cell."""
    part = Tripartition(cfg.l_r, l_e, l_s)
    n = part.n_sites
    seed = child_seed(cfg.seed, realization, l_e, cfg.grid_id)
    gen = np.random.default_rng(seed)
    basis = _measure_basis(cfg, l_s)
    rows = []

    if cfg.family in ("ergodic_ki", "mbl_ki", "sdki"):
        params = _ki_params(cfg, n, gen)
        state = make_product_state(_initial_spec(cfg, n, gen))
        cur = 0
        for t in cfg.time_grid:
            t = int(round(t))
            circuits.evolve(state, params, t - cur)
            cur = t
            ens = build_ppe(state, part, basis)
            d = delta(ens)
            dg = ghs_distance(ens, part) if cfg.ghs else None
            rows.append((seed, l_e, l_s, float(t), d, dg, realization))
    else:
        ham = lbit.build_lbit(n, cfg.xi, cfg.max_order, rng_seed=int(gen.integers(2**63)))
        spec = _initial_spec(cfg, n, gen)
        closed = cfg.family == "lbit_z" and cfg.l_r == 1 and not cfg.ghs
        for t in cfg.time_grid:
            t = float(t)
            if closed:
                d, dg = lbit.z_delta_closed_form(spec, ham, t, part), None
            else:
                state = lbit.evolve_lbit(spec, ham, t)
                ens = build_ppe(state, part, basis)
                d = delta(ens)
                dg = ghs_distance(ens, part) if cfg.ghs else None
            rows.append((seed, l_e, l_s, t, d, dg, realization))
    return rows


def _cells(cfg: ExperimentConfig):
    return [(l_e, l_s, r)
            for l_e in cfg.l_e_list for l_s in cfg.l_s_list
            for r in range(cfg.realizations)]


def run_delta_grid(cfg: ExperimentConfig, threads: int = 1):
    """All cells of the sweep; returns (rows, aggregate).

    On KeyboardInterrupt the completed cells are flushed to the output
    directory together with a resume marker listing the pending ones.
    """
    cells = _cells(cfg)
    done: dict = {}
    try:
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                futures = {cell: pool.submit(_run_cell, cfg, *cell) for cell in cells}
                for cell, fut in futures.items():
                    done[cell] = fut.result()
        else:
            for cell in cells:
                done[cell] = _run_cell(cfg, *cell)
    except KeyboardInterrupt:
        rows = _sorted_rows(done)
        os.makedirs(cfg.out_dir, exist_ok=True)
        write_delta_csv(cfg, rows, os.path.join(cfg.out_dir, "delta_grid.partial.csv"))
        marker = {
            "completed": sorted([list(c) for c in done]),
            "pending": sorted([list(c) for c in cells if c not in done]),
        }
        with open(os.path.join(cfg.out_dir, RESUME_MARKER), "w", encoding="utf-8") as fh:
            json.dump(marker, fh, indent=1, sort_keys=True)
        raise
    rows = _sorted_rows(done)
    return rows, aggregate_rows(cfg, rows)


def _sorted_rows(done: dict):
    rows = []
    for cell in sorted(done):
        rows.extend(done[cell])
    return rows


def aggregate_rows(cfg: ExperimentConfig, rows):
    """Mean and standard error per (l_e, l_s, t); stderr = sample std / sqrt(N)."""
    groups: dict = {}
    for seed, l_e, l_s, t, d, dg, r in rows:
        groups.setdefault((l_e, l_s, t), []).append((d, dg))
    out = []
    for key in sorted(groups):
        vals = groups[key]
        ds = np.array([v[0] for v in vals])
        n = ds.size
        se = float(ds.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
        rec = [key[0], key[1], key[2], n, float(ds.mean()), se]
        if cfg.ghs:
            gs = np.array([v[1] for v in vals], dtype=np.float64)
            gse = float(gs.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
            rec += [float(gs.mean()), gse]
        out.append(tuple(rec))
    return out


def _fmt_t(t: float) -> str:
    return str(int(t)) if float(t).is_integer() else repr(float(t))


def write_delta_csv(cfg: ExperimentConfig, rows, path) -> None:
    cols = ["family", "seed", "l_r", "l_e", "l_s", "t", "delta"]
    if cfg.ghs:
        cols.append("delta_ghs")
    cols.append("realization")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(cols) + "\n")
        for seed, l_e, l_s, t, d, dg, r in rows:
            rec = [cfg.family, str(seed), str(cfg.l_r), str(l_e), str(l_s),
                   _fmt_t(t), repr(float(d))]
            if cfg.ghs:
                rec.append(repr(float(dg)))
            rec.append(str(r))
            fh.write(",".join(rec) + "\n")


def write_aggregate_csv(cfg: ExperimentConfig, agg, path) -> None:
    cols = ["family", "l_r", "l_e", "l_s", "t", "n", "mean_delta", "stderr_delta"]
    if cfg.ghs:
        cols += ["mean_delta_ghs", "stderr_delta_ghs"]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(cols) + "\n")
        for rec in agg:
            l_e, l_s, t, n, mean, se = rec[:6]
            row = [cfg.family, str(cfg.l_r), str(l_e), str(l_s), _fmt_t(t),
                   str(n), repr(mean), repr(se)]
            if cfg.ghs:
                row += [repr(rec[6]), repr(rec[7])]
            fh.write(",".join(row) + "\n")


def write_manifest(cfg: ExperimentConfig, path, extra=None) -> None:
    from .. import __version__
    doc = {
        "family": cfg.family,
        "seed": cfg.seed,
        "grid_spec": cfg.grid_spec,
        "grid_id": cfg.grid_id,
        "l_r": cfg.l_r,
        "l_e": cfg.l_e_list,
        "l_s": cfg.l_s_list,
        "realizations": cfg.realizations,
        "initial_state": cfg.initial_state,
        "basis": cfg.basis,
        "version": __version__,
    }
    if extra:
        doc.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)


def run_delta_grid_to_dir(cfg: ExperimentConfig, threads: int = 1):
    os.makedirs(cfg.out_dir, exist_ok=True)
    rows, agg = run_delta_grid(cfg, threads=threads)
    write_delta_csv(cfg, rows, os.path.join(cfg.out_dir, "delta_grid.csv"))
    write_aggregate_csv(cfg, agg, os.path.join(cfg.out_dir, "delta_aggregate.csv"))
    write_manifest(cfg, os.path.join(cfg.out_dir, "run_manifest.json"))
    return rows, agg


# ---------------------------------------------------------------------------
# PoP experiment


def _pooled_hist(chunks) -> PoPHistogram:
    vals = np.concatenate([c[0] for c in chunks])
    ws = np.concatenate([c[1] for c in chunks])
    return PoPHistogram.from_samples(vals, weights=ws / ws.sum())


def run_pop_experiment(cfg: ExperimentConfig, threads: int = 1) -> list:
    """PoP histograms, bit-string PoPs, Mellin convolutions and KLd series.

    Emits, per geometry and grid time: PoP_PPE histograms per z_R (Erlang
    overlay), the marginal-outcome PoP (self-dual beta overlay for the sdki
    family), bit-string PoPs of rho_R / rho_S / rho_RS, their Mellin
    convolution, and one KLd(t) series per geometry.  Returns written paths.
    """
    os.makedirs(cfg.out_dir, exist_ok=True)
    written = []
    for l_e in cfg.l_e_list:
        for l_s in cfg.l_s_list:
            part = Tripartition(cfg.l_r, l_e, l_s)
            n = part.n_sites
            basis = _measure_basis(cfg, l_s)
            z_r_list = cfg.pop_z_r or list(range(part.d_r))
            per_t: dict = {float(t): {"ppe": {z: [] for z in z_r_list}, "out": [],
                                      "r": [], "s": [], "rs": [], "mel": []}
                           for t in cfg.time_grid}
            for realization in range(cfg.realizations):
                seed = child_seed(cfg.seed, realization, l_e, cfg.grid_id)
                gen = np.random.default_rng(seed)
                if cfg.family in ("ergodic_ki", "mbl_ki", "sdki"):
                    params = _ki_params(cfg, n, gen)
                    state = make_product_state(_initial_spec(cfg, n, gen))
                    ham = spec = None
                else:
                    ham = lbit.build_lbit(n, cfg.xi, cfg.max_order,
                                          rng_seed=int(gen.integers(2**63)))
                    spec = _initial_spec(cfg, n, gen)
                    params = state = None
                cur = 0
                for t in cfg.time_grid:
                    t = float(t)
                    if params is not None:
                        circuits.evolve(state, params, int(round(t)) - cur)
                        cur = int(round(t))
                        psi = state
                    else:
                        psi = lbit.evolve_lbit(spec, ham, t)
                    ens = build_ppe(psi, part, basis)
                    bucket = per_t[t]
                    for z in z_r_list:
                        probs = ens.states[:, z, z].real
                        denom = float(np.sum(ens.weights * probs))
                        bucket["ppe"][z].append((probs / denom, ens.weights))
                    bucket["out"].append((part.d_s * ens.weights,
                                          np.full(len(ens), 1.0 / len(ens))))
                    rho_r = partial_trace(psi, part.r_sites)
                    rho_s = partial_trace(psi, part.s_sites)
                    rho_rs = partial_trace(psi, list(part.r_sites) + list(part.s_sites))
                    hr, hs = pop_bitstrings(rho_r), pop_bitstrings(rho_s)
                    hrs = pop_bitstrings(rho_rs)
                    mel = mellin_convolve(hr, hs)
                    bucket["r"].append((hr.samples, hr.sample_weights))
                    bucket["s"].append((hs.samples, hs.sample_weights))
                    bucket["rs"].append((hrs.samples, hrs.sample_weights))
                    bucket["mel"].append((mel.samples, mel.sample_weights))

            kld_series = []
            for t in (float(x) for x in cfg.time_grid):
                bucket = per_t[t]
                tl = _fmt_t(t)
                stem = f"le{l_e}_ls{l_s}_t{tl}"
                erlang = Erlang(part.d_e) if part.l_e > 0 else None
                for z in z_r_list:
                    h = _pooled_hist(bucket["ppe"][z])
                    path = os.path.join(cfg.out_dir, f"pop_ppe_{stem}_zr{z}.csv")
                    export_histogram_csv(h, path, reference=erlang)
                    written.append(path)
                out_ref = None
                if cfg.family == "sdki" and float(t).is_integer():
                    out_ref = sdki_reference(int(t), part.l_r + part.l_e)
                path = os.path.join(cfg.out_dir, f"pop_outcomes_{stem}.csv")
                export_histogram_csv(_pooled_hist(bucket["out"]), path, reference=out_ref)
                written.append(path)
                for tag in ("r", "s", "rs", "mel"):
                    h = _pooled_hist(bucket[tag])
                    path = os.path.join(cfg.out_dir, f"pop_bstr_{tag}_{stem}.csv")
                    export_histogram_csv(h, path,
                                         reference=erlang if tag == "rs" else None)
                    written.append(path)
                kld_series.append((t, kl_divergence(_pooled_hist(bucket["rs"]),
                                                    _pooled_hist(bucket["mel"]))))
            path = os.path.join(cfg.out_dir, f"kld_series_le{l_e}_ls{l_s}.csv")
            with open(path, "w", encoding="utf-8") as fh:
                fh.write("t,kld\n")
                for t, v in kld_series:
                    fh.write(f"{_fmt_t(t)},{v!r}\n")
            written.append(path)
    write_manifest(cfg, os.path.join(cfg.out_dir, "pop_manifest.json"))
    return written
