"""Onset-time extraction, exponential scaling fits, and scaling collapse."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class FitRefusal(RuntimeError):
    """Raised when the data cannot support the requested fit."""


@dataclass
class OnsetFit:
    """First-crossing times t*(L_E) and the exponential fit t* = t0 exp(L_E/xi_t)."""

    t_star: dict
    t0: float
    xi_t: float
    r_squared: float
    omitted: list = field(default_factory=list)


@dataclass
class ScalingFit:
    """Collapse of delta(t, L_E) onto delta_inf(L_E) * f(tau / tau*(L_E))."""

    onset: OnsetFit
    delta_inf: dict
    tau_star: dict
    xi_tau: float
    residual: float
    t_sat: dict


def _threshold_for(threshold, l_e):
    return threshold[l_e] if isinstance(threshold, dict) else float(threshold)


def fit_onset(curves: dict, threshold) -> OnsetFit:
    """Crossing of the mean fluctuation above a threshold, per L_E.

    ``curves`` maps l_e -> (t array, mean delta array).  The crossing is
    located at the first grid point above threshold with log-linear
    interpolation from the bracketing point; L_E values without a crossing
    are omitted and reported.  The exponential fit is least squares on
    ln t* versus L_E.
    """
    t_star: dict = {}
    omitted = []
    for l_e in sorted(curves):
        ts, means = (np.asarray(a, dtype=np.float64) for a in curves[l_e])
        th = _threshold_for(threshold, l_e)
        above = means > th
        if not above.any():
            omitted.append(l_e)
            continue
        i = int(np.argmax(above))
        if i == 0 or means[i - 1] <= 0.0:
            # crossing at the grid boundary, or rising out of an exact zero:
            # nothing to interpolate against
            t_star[l_e] = float(ts[i])
            continue
        t1, t2 = ts[i - 1], ts[i]
        d1, d2 = means[i - 1], means[i]
        frac = (th - d1) / (d2 - d1)
        t_star[l_e] = float(np.exp(np.log(t1) + frac * (np.log(t2) - np.log(t1))))
    if len(t_star) < 2:
        raise FitRefusal(f"need crossings for at least two L_E values, got {len(t_star)}")

    les = np.array(sorted(t_star), dtype=np.float64)
    ys = np.log([t_star[k] for k in sorted(t_star)])
    slope, intercept = np.polyfit(les, ys, 1)
    ss_tot = float(np.sum((ys - ys.mean()) ** 2))
    ss_res = float(np.sum((ys - (slope * les + intercept)) ** 2))
    r2 = 1.0 if ss_tot == 0.0 and ss_res < 1e-20 else 1.0 - ss_res / ss_tot if ss_tot else 0.0
    xi_t = math.inf if abs(slope) < 1e-12 else 1.0 / slope
    return OnsetFit(t_star=t_star, t0=float(np.exp(intercept)), xi_t=float(xi_t),
                    r_squared=float(r2), omitted=omitted)


def plateau_value(ts, means, window: float = 0.5) -> float:
    """Average of the curve over t in [window * t_max, t_max]."""
    ts = np.asarray(ts, dtype=np.float64)
    means = np.asarray(means, dtype=np.float64)
    sel = ts >= window * ts.max()
    return float(means[sel].mean())


def _plateau_reached(ts, means, rel_tol: float = 0.25) -> bool:
    ts = np.asarray(ts, dtype=np.float64)
    means = np.asarray(means, dtype=np.float64)
    a = means[(ts >= 0.5 * ts.max()) & (ts < 0.75 * ts.max())]
    b = means[ts >= 0.75 * ts.max()]
    if a.size == 0 or b.size == 0 or b.mean() <= 0:
        return False
    return abs(a.mean() - b.mean()) <= rel_tol * b.mean()


def _golden_section(fun, lo: float, hi: float, tol: float = 1e-6) -> float:
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = fun(c), fun(d)
    while abs(b - a) > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = fun(d)
    return 0.5 * (a + b)


def fit_collapse(curves: dict, threshold=None) -> ScalingFit:
    """Full scaling collapse of a family of delta(t) curves.

    The plateau estimator feeds delta_inf; tau*(L_E) is chosen (for each
    curve against the smallest-L_E reference) by golden-section search on
    ln tau* minimising the squared log-difference of the rescaled curves.
    Refuses to fit when a curve has not reached its plateau.  The residual
    is reported and never asserted against.
    """
    delta_inf: dict = {}
    for l_e in sorted(curves):
        ts, means = curves[l_e]
        if not _plateau_reached(ts, means):
            raise FitRefusal(f"plateau not reached for L_E={l_e}; extend the time grid")
        delta_inf[l_e] = plateau_value(ts, means)

    if threshold is None:
        threshold = {l_e: 0.1 * delta_inf[l_e] for l_e in delta_inf}
    onset = fit_onset(curves, threshold)

    ref_le = min(k for k in curves if k in onset.t_star)
    ref_ts, ref_means = (np.asarray(a, dtype=np.float64) for a in curves[ref_le])
    ref_tau = np.log(ref_ts / onset.t_star[ref_le])
    ref_y = np.log(np.maximum(np.asarray(ref_means) / delta_inf[ref_le], 1e-300))

    tau_star: dict = {ref_le: 1.0}
    residual = 0.0
    for l_e in sorted(curves):
        if l_e == ref_le or l_e not in onset.t_star:
            continue
        ts, means = (np.asarray(a, dtype=np.float64) for a in curves[l_e])
        tau = np.log(ts / onset.t_star[l_e])
        y = np.log(np.maximum(means / delta_inf[l_e], 1e-300))

        def sse(log_tau_star, tau=tau, y=y):
            shifted = tau - log_tau_star
            sel = (shifted >= ref_tau[0]) & (shifted <= ref_tau[-1]) & (y > np.log(1e-12))
            if sel.sum() < 3:
                return 1e12
            interp = np.interp(shifted[sel], ref_tau, ref_y)
            return float(np.sum((y[sel] - interp) ** 2))

        best = _golden_section(sse, math.log(1e-3), math.log(1e3))
        tau_star[l_e] = float(np.exp(best)) / 1.0
        residual += sse(best)

    # normalise so the reference curve has tau* = 1 by construction
    les = np.array(sorted(tau_star), dtype=np.float64)
    ys = np.log([tau_star[k] for k in sorted(tau_star)])
    if les.size >= 2:
        slope = np.polyfit(les, ys, 1)[0]
        xi_tau = math.inf if abs(slope) < 1e-12 else -1.0 / slope
    else:
        xi_tau = math.inf
    t_sat = {l_e: onset.t_star[l_e] * tau_star[l_e] for l_e in tau_star}
    return ScalingFit(onset=onset, delta_inf=delta_inf, tau_star=tau_star,
                      xi_tau=float(xi_tau), residual=float(residual), t_sat=t_sat)


def curves_from_aggregate(path) -> dict:
    """Load (t, mean_delta) curves per l_e from an aggregate CSV (single l_s)."""
    curves: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        idx = {name: i for i, name in enumerate(header)}
        for line in fh:
            cells = line.strip().split(",")
            l_e = int(cells[idx["l_e"]])
            curves.setdefault(l_e, []).append(
                (float(cells[idx["t"]]), float(cells[idx["mean_delta"]])))
    out = {}
    for l_e, pts in curves.items():
        pts.sort()
        out[l_e] = (np.array([p[0] for p in pts]), np.array([p[1] for p in pts]))
    return out
