"""Probability-of-probabilities machinery.

Covers the PoP over a partial projected ensemble for a fixed R bit-string,
the PoP over bit-strings of a fixed state, the Mellin convolution of exact
sample lists, binned KL divergence, and the analytic reference densities
(Porter-Thomas, Erlang, the self-dual beta law and its moments).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats


from .states import P_FLOOR
from .ensembles import PartialProjectedEnsemble

# Exact sample lists are retained on histograms only up to this count.
MAX_SAMPLES = 1 << 16

# Mellin convolution enumerates all pairwise products.
MAX_MELLIN_PRODUCTS = 1 << 20

N_LOG_BINS = 64
BIN_LO = 1e-4
BIN_HEADROOM = 1.05
KLD_SMOOTHING = 1e-9

# Delta-collapse detector: this much mass within this window of 1.
DELTA_MASS = 1.0 - 1e-9
DELTA_WINDOW = 1e-8


class UnsampledBitstring(RuntimeError):
    """The requested R bit-string carries no probability mass."""


def log_binning(max_value: float, n_bins: int = N_LOG_BINS, lo: float = BIN_LO) -> np.ndarray:
    """Bin edges: an underflow bin [0, lo) plus n_bins log-spaced bins up to max*1.05."""
    hi = max(max_value * BIN_HEADROOM, lo * 10.0)
    inner = np.logspace(np.log10(lo), np.log10(hi), n_bins + 1)
    return np.concatenate([[0.0], inner])


@dataclass
class PoPHistogram:
    """Empirical distribution of relative probabilities.

    ``samples``/``sample_weights`` hold the exact weighted sample list when
    the sample count is at most 2^16; binned mass always sums to one.
    """

    edges: np.ndarray
    mass: np.ndarray
    n_samples: int
    samples: np.ndarray | None = None
    sample_weights: np.ndarray | None = None

    @classmethod
    def from_samples(cls, values, weights=None, edges=None) -> "PoPHistogram":
        values = np.asarray(values, dtype=np.float64)
        if weights is None:
            weights = np.full(values.size, 1.0 / values.size)
        else:
            weights = np.asarray(weights, dtype=np.float64)
            weights = weights / weights.sum()
        if edges is None:
            edges = log_binning(float(values.max()) if values.size else 1.0)
        edges = np.asarray(edges, dtype=np.float64)
        clipped = np.minimum(values, edges[-1] * (1.0 - 1e-15))
        mass, _ = np.histogram(clipped, bins=edges, weights=weights)
        hist = cls(edges=edges, mass=mass, n_samples=values.size)
        if values.size <= MAX_SAMPLES:
            hist.samples = values
            hist.sample_weights = weights
        return hist

    def validate(self, atol: float = 1e-12) -> None:
        if not np.all(np.diff(self.edges) > 0):
            raise ValueError("bin edges must be strictly increasing")
        if abs(self.mass.sum() - 1.0) > atol:
            raise ValueError(f"masses sum to {self.mass.sum()}")

    def mean(self) -> float:
        if self.samples is None:
            mids = 0.5 * (self.edges[:-1] + self.edges[1:])
            return float(np.sum(mids * self.mass))
        return float(np.sum(self.samples * self.sample_weights))

    def variance(self) -> float:
        if self.samples is None:
            mids = 0.5 * (self.edges[:-1] + self.edges[1:])
            m = np.sum(mids * self.mass)
            return float(np.sum((mids - m) ** 2 * self.mass))
        m = self.mean()
        return float(np.sum((self.samples - m) ** 2 * self.sample_weights))


def is_delta_at_one(hist: PoPHistogram) -> bool:
    """True when >= 1-1e-9 of the mass lies within |p - 1| < 1e-8.

    Exact zeros hold analytically in the collapsed regimes; the window
    absorbs float noise.  Requires the exact sample list.
    """
    if hist.samples is None:
        raise ValueError("delta detection needs the exact sample list")
    inside = np.abs(hist.samples - 1.0) < DELTA_WINDOW
    return float(hist.sample_weights[inside].sum()) >= DELTA_MASS


def relative_conditional_probs(ens: PartialProjectedEnsemble, z_r: int,
                               p_floor: float = P_FLOOR):
    """Weights p(o_S) and relative probabilities p~(z_R|o_S) for one R bit-string.

    p(z_R|o_S) is the z_R diagonal element of the conditional state; the
    relative probability divides out p(z_R) so the weighted mean is one.
    """
    if not 0 <= z_r < ens.d_r:
        raise ValueError(f"z_r {z_r} out of range for d_r={ens.d_r}")
    probs = ens.states[:, z_r, z_r].real
    denom = float(np.sum(ens.weights * probs))
    if denom < p_floor:
        raise UnsampledBitstring(f"p(z_R={z_r}) = {denom} below floor")
    return ens.weights.copy(), probs / denom


def pop_ppe(ens: PartialProjectedEnsemble, z_r: int, edges=None) -> PoPHistogram:
    """PoP of the relative conditional probability of z_R, weighted by p(o_S)."""
    weights, ptilde = relative_conditional_probs(ens, z_r)
    return PoPHistogram.from_samples(ptilde, weights=weights, edges=edges)


def pop_bitstrings(rho: np.ndarray, edges=None) -> PoPHistogram:
    """PoP over the bit-strings of a state: samples are D * <z|rho|z>, uniform weight."""
    rho = np.asarray(rho)
    diag = np.diag(rho).real if rho.ndim == 2 else np.asarray(rho, dtype=np.float64)
    d = diag.size
    return PoPHistogram.from_samples(d * diag, weights=np.full(d, 1.0 / d), edges=edges)


def mellin_convolve(pa: PoPHistogram, pb: PoPHistogram, edges=None) -> PoPHistogram:
    """Exact product distribution of two sample lists, then binned."""
    if pa.samples is None or pb.samples is None:
        raise ValueError("Mellin convolution needs exact sample lists")
    if pa.samples.size * pb.samples.size > MAX_MELLIN_PRODUCTS:
        raise ValueError("product list exceeds the size cap")
    prod = np.multiply.outer(pa.samples, pb.samples).ravel()
    w = np.multiply.outer(pa.sample_weights, pb.sample_weights).ravel()
    return PoPHistogram.from_samples(prod, weights=w, edges=edges)


def common_binning(*hists: PoPHistogram) -> np.ndarray:
    """Shared KL grid: 65 linear bins from 0 up to the joint sample maximum.

    Linear spacing here (rather than the log grid used for exported
    histograms) keeps resolution where the relative probabilities actually
    live, around 1; log bins spend most of their resolution on empty
    decades and wash out the post-lightcone separation at desk scale.
    """
    top = max(float(h.samples.max()) if h.samples is not None else float(h.edges[-1])
              for h in hists)
    return np.linspace(0.0, top * BIN_HEADROOM, N_LOG_BINS + 2)


def kl_divergence(p: PoPHistogram, q: PoPHistogram) -> float:
    """Binned KL divergence sum_bins p ln(p/q) on the common grid.

    The q side receives additive smoothing mass 1e-9 per bin before
    renormalisation; bins with p = 0 contribute nothing.  Returns +inf only
    if a p-carrying bin still has zero q mass.
    """
    if p.samples is None or q.samples is None:
        raise ValueError("KL divergence needs exact sample lists for rebinning")
    edges = common_binning(p, q)
    pm, _ = np.histogram(np.minimum(p.samples, edges[-1] * (1 - 1e-15)),
                         bins=edges, weights=p.sample_weights)
    qm, _ = np.histogram(np.minimum(q.samples, edges[-1] * (1 - 1e-15)),
                         bins=edges, weights=q.sample_weights)
    if np.array_equal(pm, qm):
        return 0.0  # identical binned distributions: skip the smoothing bias
    qm = qm + KLD_SMOOTHING
    qm /= qm.sum()
    sel = pm > 0
    if np.any(qm[sel] == 0.0):
        return math.inf
    val = float(np.sum(pm[sel] * np.log(pm[sel] / qm[sel])))
    return max(0.0, val)


# ---------------------------------------------------------------------------
# Reference densities


class PorterThomas:
    """exp(-p): the PoP of Haar-random pure states."""

    def pdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        return np.where(x >= 0, np.exp(-x), 0.0)

    def cdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        return np.where(x >= 0, -np.expm1(-x), 0.0)


class Erlang:
    """Erlang PoP of gHS mixed states; mean 1, variance 1/d_e."""

    def __init__(self, d_e: int):
        if d_e < 1:
            raise ValueError("d_e must be >= 1")
        self.d_e = d_e
        self._dist = stats.gamma(a=d_e, scale=1.0 / d_e)

    def pdf(self, x):
        return self._dist.pdf(x)

    def cdf(self, x):
        return self._dist.cdf(x)


class SdkiBeta:
    """Self-dual beta law for the marginal-outcome PoP at time t.

    A Beta(d_re, d_t - d_re) in x = (d_re/d_t) p, supported on p < d_t/d_re;
    only defined for t > l_re (otherwise the law is a delta at 1).
    """

    def __init__(self, t: int, l_re: int):
        d_t, d_re = 1 << t, 1 << l_re
        if d_re >= d_t:
            raise ValueError(f"beta form needs t > l_re, got t={t}, l_re={l_re}")
        self.t, self.l_re = t, l_re
        self.d_t, self.d_re = d_t, d_re
        self._dist = stats.beta(a=d_re, b=d_t - d_re, scale=d_t / d_re)

    def pdf(self, x):
        return self._dist.pdf(x)

    def cdf(self, x):
        return self._dist.cdf(x)


class DeltaAtOne:
    """Dirac delta at p = 1 (collapsed regimes)."""

    def pdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        return np.where(x == 1.0, np.inf, 0.0)

    def cdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        return (x >= 1.0).astype(np.float64)


def sdki_reference(t: int, l_re: int):
    """Analytic marginal-outcome PoP: delta at 1 for t <= l_re, else the beta law."""
    return DeltaAtOne() if t <= l_re else SdkiBeta(t, l_re)


def reference_density(tag, x):
    """Evaluate a reference density object at x."""
    return tag.pdf(x)


def sdki_pop_moment(q: int, t: int, l_re: int) -> float:
    """q-th moment of the normalised self-dual PoP.

    (d_t/d_re)^q * prod_{a<q} (d_re+a)/(d_t+a); equals 1 for every q in the
    delta-collapsed regime t <= l_re.
    """
    if q < 1 or q != int(q):
        raise ValueError("q must be a positive integer")
    if t <= l_re:
        return 1.0
    d_t, d_re = 1 << t, 1 << l_re
    val = 1.0
    for a in range(q):
        val *= (d_t / d_re) * (d_re + a) / (d_t + a)
    return val


def tv_distance(hist: PoPHistogram, ref) -> float:
    """Total-variation distance between a binned PoP and a reference density."""
    cdf = ref.cdf(hist.edges)
    qmass = np.diff(cdf)
    outside = 1.0 - float(cdf[-1] - cdf[0])
    return 0.5 * (float(np.sum(np.abs(hist.mass - qmass))) + abs(outside))


def export_histogram_csv(hist: PoPHistogram, path, reference=None) -> None:
    """CSV with columns (bin_lo, bin_hi, mass[, ref_mass on the same grid])."""
    cols = ["bin_lo", "bin_hi", "mass"]
    ref_mass = None
    if reference is not None:
        ref_mass = np.diff(reference.cdf(hist.edges))
        cols.append("ref_mass")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(cols) + "\n")
        for i in range(hist.mass.size):
            row = [repr(float(hist.edges[i])), repr(float(hist.edges[i + 1])),
                   repr(float(hist.mass[i]))]
            if ref_mass is not None:
                row.append(repr(float(ref_mass[i])))
            fh.write(",".join(row) + "\n")
