"""Partial projected ensembles: construction, moments, fluctuation measure,
and distances to the generalised Hilbert-Schmidt ensemble."""
from __future__ import annotations

import logging
import struct
from dataclasses import dataclass

import numpy as np

from .states import (
    P_FLOOR,
    MeasurementBasis,
    Tripartition,
    conditional_states,
    trace_norm_distance,
)

log = logging.getLogger(__name__)

# k-fold moments live on D_R^k; cap the doubled-space size.
MAX_MOMENT_QUBITS = 12

_DUMP_MAGIC = b"PPEv1\x00"


@dataclass
class PartialProjectedEnsemble:
    """Weighted list of conditional states on R, one entry per retained outcome."""

    d_r: int
    outcomes: np.ndarray   # int64, ascending
    weights: np.ndarray    # float64, sums to 1 after floor exclusion
    states: np.ndarray     # complex128, shape (n, d_r, d_r)

    def __len__(self) -> int:
        return self.weights.size

    def validate(self, atol: float = 1e-10) -> None:
        if abs(self.weights.sum() - 1.0) > atol:
            raise ValueError(f"weights sum to {self.weights.sum()}")
        for rho in self.states:
            if not np.allclose(rho, rho.conj().T, rtol=0.0, atol=atol):
                raise ValueError("conditional state not Hermitian")
            if abs(np.trace(rho) - 1.0) > atol:
                raise ValueError("conditional state trace != 1")


def build_ppe(state: np.ndarray, part: Tripartition, basis: MeasurementBasis,
              p_floor: float = P_FLOOR) -> PartialProjectedEnsemble:
    """Enumerate all 2^l_s outcomes, drop sub-floor ones, renormalise weights."""
    weights, rhos = conditional_states(state, part, basis)
    keep = weights >= p_floor
    kept_w = weights[keep]
    total = kept_w.sum()
    n_dropped = int(weights.size - keep.sum())
    if n_dropped:
        log.info("build_ppe: dropped %d outcomes below p_floor=%g (mass %g), renormalising",
                 n_dropped, p_floor, 1.0 - total)
    outcomes = np.nonzero(keep)[0].astype(np.int64)
    states = rhos[keep] / kept_w[:, None, None]
    return PartialProjectedEnsemble(
        d_r=part.d_r,
        outcomes=outcomes,
        weights=kept_w / total,
        states=states,
    )


def moment(ens: PartialProjectedEnsemble, k: int) -> np.ndarray:
    """k-th ensemble moment sum_o p(o) rho(o)^(x k) on the k-fold tensor space."""
    if k < 1:
        raise ValueError("k must be >= 1")
    n_qubits = k * int(round(np.log2(ens.d_r)))
    if n_qubits > MAX_MOMENT_QUBITS:
        raise ValueError(f"moment of order {k} needs {n_qubits} qubits > cap {MAX_MOMENT_QUBITS}")
    if k == 1:
        return np.einsum("o,oab->ab", ens.weights, ens.states)
    acc = ens.states
    d = ens.d_r
    for _ in range(k - 1):
        m = acc.shape[1]
        acc = np.einsum("oab,ocd->oacbd", acc, ens.states).reshape(-1, m * d, m * d)
    return np.einsum("o,oab->ab", ens.weights, acc)


def delta(ens: PartialProjectedEnsemble) -> float:
    """Fluctuation over the ensemble: half trace norm of rho^(2) - rho^(1) x rho^(1)."""
    m1 = moment(ens, 1)
    m2 = moment(ens, 2)
    return trace_norm_distance(m2, np.kron(m1, m1))


def observable_moment(ens: PartialProjectedEnsemble, obs: np.ndarray, k: int) -> float:
    """sum_o p(o) (Tr[obs rho(o)])^k for a Hermitian observable on R."""
    obs = np.asarray(obs)
    if not np.allclose(obs, obs.conj().T, rtol=0.0, atol=1e-10):
        raise ValueError("observable must be Hermitian")
    vals = np.einsum("ab,oba->o", obs, ens.states).real
    return float(np.sum(ens.weights * vals**k))


def swap_operator(d: int) -> np.ndarray:
    """Replica-swap permutation matrix on the doubled space of dimension d^2."""
    s = np.zeros((d * d, d * d))
    for a in range(d):
        for b in range(d):
            s[a * d + b, b * d + a] = 1.0
    return s


def ghs_second_moment(d_r: int, d_e: int) -> np.ndarray:
    """Second moment of the gHS ensemble (trace E out of Haar on R+E):
    [d_e^2 I + d_e S] / (d_r d_e (d_r d_e + 1))."""
    for d in (d_r, d_e):
        if d < 1 or d & (d - 1):
            raise ValueError("dimensions must be powers of two")
    eye = np.eye(d_r * d_r)
    return (d_e**2 * eye + d_e * swap_operator(d_r)) / (d_r * d_e * (d_r * d_e + 1))


def ghs_distance(ens: PartialProjectedEnsemble, part: Tripartition) -> float:
    """Half trace norm between the ensemble's second moment and the gHS one."""
    return trace_norm_distance(moment(ens, 2), ghs_second_moment(part.d_r, part.d_e))


def sample_ghs(rng, d_r: int, d_e: int) -> np.ndarray:
    """One gHS draw: Haar-random pure state of dimension d_r*d_e, E traced out."""
    gen = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    v = gen.standard_normal(d_r * d_e) + 1j * gen.standard_normal(d_r * d_e)
    v /= np.linalg.norm(v)
    m = v.reshape(d_r, d_e)
    return m @ m.conj().T


def save_ensemble(ens: PartialProjectedEnsemble, path) -> None:
    """Binary dump: magic+version header, dimensions, then weight/outcome/matrix records."""
    with open(path, "wb") as fh:
        fh.write(_DUMP_MAGIC)
        fh.write(struct.pack("<qq", ens.d_r, len(ens)))
        for o, w, rho in zip(ens.outcomes, ens.weights, ens.states):
            fh.write(struct.pack("<qd", int(o), float(w)))
            fh.write(np.ascontiguousarray(rho, dtype=np.complex128).tobytes())


def load_ensemble(path) -> PartialProjectedEnsemble:
    with open(path, "rb") as fh:
        magic = fh.read(len(_DUMP_MAGIC))
        if magic != _DUMP_MAGIC:
            raise ValueError(f"bad dump header {magic!r}")
        d_r, n = struct.unpack("<qq", fh.read(16))
        outcomes = np.empty(n, dtype=np.int64)
        weights = np.empty(n, dtype=np.float64)
        states = np.empty((n, d_r, d_r), dtype=np.complex128)
        rec = 16 * d_r * d_r
        for i in range(n):
            outcomes[i], weights[i] = struct.unpack("<qd", fh.read(16))
            states[i] = np.frombuffer(fh.read(rec), dtype=np.complex128).reshape(d_r, d_r)
    return PartialProjectedEnsemble(d_r=d_r, outcomes=outcomes, weights=weights, states=states)
