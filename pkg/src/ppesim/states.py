"""Statevector and density-matrix primitives for qubit chains.

Conventions used throughout the package:

* site 0 is the *most significant* bit of a computational-basis index,
  so a tripartition R|E|S with R leftmost maps onto contiguous index
  blocks and partial traces over S become contiguous reshapes;
* bit value 0 means spin up, bit value 1 means spin down;
* the Pauli-Z eigenvalue of site i in basis state n is ``1 - 2*bit_i(n)``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

# Outcomes with probability below this are dropped from conditional
# ensembles and the remaining weights renormalised.
P_FLOOR = 1e-14

# Hard cap on chain length for dense statevectors (memory bound).
MAX_SITES = 22

# Dense per-basis-state phase tables are cached only up to this size;
# larger chains expand the phase generators chunk by chunk.
DENSE_PHASE_MAX_SITES = 16

_CHUNK = 1 << 16


class InvalidSpecError(ValueError):
    """Raised when a product-state specification violates per-site normalisation."""


def _as_seeded_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


@dataclass(frozen=True)
class Tripartition:
    """R|E|S geometry: sites 0..l_r-1 are R, the next l_e are E, the last l_s are S."""

    l_r: int
    l_e: int
    l_s: int

    def __post_init__(self):
        if self.l_r < 1 or self.l_e < 0 or self.l_s < 1:
            raise ValueError(f"need l_r >= 1, l_e >= 0, l_s >= 1, got {self}")
        if self.n_sites > MAX_SITES:
            raise ValueError(f"total chain length {self.n_sites} exceeds cap {MAX_SITES}")

    @property
    def n_sites(self) -> int:
        return self.l_r + self.l_e + self.l_s

    @property
    def d_r(self) -> int:
        return 1 << self.l_r

    @property
    def d_e(self) -> int:
        return 1 << self.l_e

    @property
    def d_s(self) -> int:
        return 1 << self.l_s

    @property
    def d_re(self) -> int:
        return 1 << (self.l_r + self.l_e)

    @property
    def r_sites(self) -> range:
        return range(0, self.l_r)

    @property
    def e_sites(self) -> range:
        return range(self.l_r, self.l_r + self.l_e)

    @property
    def s_sites(self) -> range:
        return range(self.l_r + self.l_e, self.n_sites)


class ProductStateSpec:
    """Per-site single-qubit amplitudes (A_up, A_down), one pair per site."""

    def __init__(self, amplitudes):
        amps = np.asarray(amplitudes, dtype=np.complex128)
        if amps.ndim != 2 or amps.shape[1] != 2:
            raise InvalidSpecError(f"expected shape (n_sites, 2), got {amps.shape}")
        norms = np.sum(np.abs(amps) ** 2, axis=1)
        if not np.allclose(norms, 1.0, rtol=0.0, atol=1e-12):
            raise InvalidSpecError(f"per-site normalisation violated: {norms}")
        self.amplitudes = amps

    @property
    def n_sites(self) -> int:
        return self.amplitudes.shape[0]

    @classmethod
    def polarized(cls, n_sites: int) -> "ProductStateSpec":
        """All spins up."""
        amps = np.zeros((n_sites, 2), dtype=np.complex128)
        amps[:, 0] = 1.0
        return cls(amps)

    @classmethod
    def plus(cls, n_sites: int) -> "ProductStateSpec":
        """|+>^n, uniform real amplitudes."""
        return cls(np.full((n_sites, 2), 1.0 / np.sqrt(2.0), dtype=np.complex128))


def random_product_state(n_sites: int, rng) -> ProductStateSpec:
    """Independent Haar-random single-qubit state on every site.

    Each pair is two standard complex Gaussians, normalised; deterministic
    for a given integer seed or Generator state.
    """
    gen = _as_seeded_rng(rng)
    z = gen.standard_normal((n_sites, 2)) + 1j * gen.standard_normal((n_sites, 2))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    return ProductStateSpec(z)


def make_product_state(spec: ProductStateSpec) -> np.ndarray:
    """Dense statevector of the product state; amplitude of bit-string z is prod_i A_{i,z_i}."""
    state = np.ones(1, dtype=np.complex128)
    for i in range(spec.n_sites):
        state = np.kron(state, spec.amplitudes[i])
    return state


def n_sites_of(state: np.ndarray) -> int:
    n = int(round(np.log2(state.size)))
    if 1 << n != state.size:
        raise ValueError(f"state length {state.size} is not a power of two")
    return n


def apply_one_qubit(state: np.ndarray, site: int, u: np.ndarray) -> np.ndarray:
    """Apply a 2x2 unitary to one site, in place. Returns the state for chaining."""
    u = np.asarray(u, dtype=np.complex128)
    if u.shape != (2, 2):
        raise ValueError("u must be 2x2")
    if not np.allclose(u @ u.conj().T, np.eye(2), rtol=0.0, atol=1e-12):
        raise ValueError("u is not unitary within 1e-12")
    n = n_sites_of(state)
    if not 0 <= site < n:
        raise ValueError(f"site {site} out of range for {n} sites")
    # site 0 is the MSB: axis layout (pre, site, post)
    v = state.reshape(1 << site, 2, -1)
    a = v[:, 0, :].copy()
    b = v[:, 1, :]
    v[:, 0, :] = u[0, 0] * a + u[0, 1] * b
    v[:, 1, :] = u[1, 0] * a + u[1, 1] * b
    return state


@dataclass
class DiagonalPhases:
    """Generator-list representation of a diagonal phase function.

    phi(z) = sum_i h_i z_i + sum_(i,j) J_ij z_i z_j + sum_T c_T prod_(i in T) z_i
    with z_i = +/-1 the Pauli-Z eigenvalue of site i.  Kept as term lists so
    chains above ``DENSE_PHASE_MAX_SITES`` never materialise a persistent
    2^L table.
    """

    fields: list = field(default_factory=list)    # (site, coeff)
    pairs: list = field(default_factory=list)     # (site_i, site_j, coeff)
    subsets: list = field(default_factory=list)   # (site_tuple, coeff)
    _dense: np.ndarray | None = field(default=None, repr=False, compare=False)

    def _terms(self):
        for i, c in self.fields:
            yield (i,), c
        for i, j, c in self.pairs:
            yield (i, j), c
        for sites, c in self.subsets:
            yield tuple(sites), c

    def chunk(self, lo: int, hi: int, n_sites: int) -> np.ndarray:
        """Phase values phi(z) for basis indices lo..hi-1."""
        idx = np.arange(lo, hi, dtype=np.int64)
        phi = np.zeros(hi - lo, dtype=np.float64)
        for sites, c in self._terms():
            sign = np.ones(hi - lo, dtype=np.float64)
            for s in sites:
                sign *= 1.0 - 2.0 * ((idx >> (n_sites - 1 - s)) & 1)
            phi += c * sign
        return phi

    def table(self, n_sites: int) -> np.ndarray:
        """Full phase table; cached only for small chains."""
        if self._dense is not None and self._dense.size == (1 << n_sites):
            return self._dense
        dense = self.chunk(0, 1 << n_sites, n_sites)
        if n_sites <= DENSE_PHASE_MAX_SITES:
            self._dense = dense
        return dense


def apply_diagonal(state: np.ndarray, phases, n_sites: int | None = None) -> np.ndarray:
    """Multiply amplitude(z) by exp(-i phi(z)), in place.

    ``phases`` is either a dense array of per-bit-string angles or a
    :class:`DiagonalPhases` generator; dense arrays are rejected above the
    cache cap to honour the memory bound.
    """
    n = n_sites_of(state) if n_sites is None else n_sites
    if isinstance(phases, DiagonalPhases):
        if n <= DENSE_PHASE_MAX_SITES:
            state *= np.exp(-1j * phases.table(n))
        else:
            for lo in range(0, state.size, _CHUNK):
                hi = min(lo + _CHUNK, state.size)
                state[lo:hi] *= np.exp(-1j * phases.chunk(lo, hi, n))
        return state
    phi = np.asarray(phases, dtype=np.float64)
    if phi.size != state.size:
        raise ValueError("dense phase table length mismatch")
    if n > DENSE_PHASE_MAX_SITES:
        raise ValueError(
            f"dense phase tables not accepted for {n} > {DENSE_PHASE_MAX_SITES} sites; "
            "pass a DiagonalPhases generator"
        )
    state *= np.exp(-1j * phi)
    return state


def partial_trace(state_or_rho: np.ndarray, keep, n_sites: int | None = None) -> np.ndarray:
    """Reduced density matrix over the ``keep`` sites (ascending site order)."""
    keep = sorted(set(int(k) for k in keep))
    if not keep:
        raise ValueError("empty keep set")
    arr = np.asarray(state_or_rho)
    if arr.ndim == 1:
        n = n_sites_of(arr) if n_sites is None else n_sites
        if any(k < 0 or k >= n for k in keep):
            raise ValueError(f"keep sites {keep} out of range for {n} sites")
        rest = [i for i in range(n) if i not in keep]
        psi = arr.reshape((2,) * n).transpose(keep + rest).reshape(1 << len(keep), -1)
        return psi @ psi.conj().T
    if arr.ndim == 2:
        d = arr.shape[0]
        n = int(round(np.log2(d))) if n_sites is None else n_sites
        if arr.shape != (d, d) or 1 << n != d:
            raise ValueError("density matrix must be square with power-of-two dimension")
        rest = [i for i in range(n) if i not in keep]
        t = arr.reshape((2,) * (2 * n))
        # contract each traced site's bra/ket axis pair
        for off, site in enumerate(sorted(rest, reverse=True)):
            t = np.trace(t, axis1=site, axis2=site + n - off)
        dk = 1 << len(keep)
        return t.reshape(dk, dk)
    raise ValueError("expected a statevector or a density matrix")


class MeasurementBasis:
    """Per-site single-qubit measurement basis for a measured region.

    Tags are 'z', 'x' or ('tilted', theta, phi); each defines an orthonormal
    outcome pair.  ``rotation(k)`` returns the unitary whose rows are the
    conjugated basis vectors, i.e. the frame change that maps outcome k to
    the computational bit k.
    """

    def __init__(self, tags):
        self.tags = list(tags)
        self._rotations = [self._make_rotation(t) for t in self.tags]
        for r in self._rotations:
            if not np.allclose(r @ r.conj().T, np.eye(2), rtol=0.0, atol=1e-12):
                raise ValueError("basis vectors not orthonormal within 1e-12")

    @staticmethod
    def _make_rotation(tag) -> np.ndarray:
        if tag == "z":
            return np.eye(2, dtype=np.complex128)
        if tag == "x":
            return np.array([[1, 1], [1, -1]], dtype=np.complex128) / np.sqrt(2.0)
        if isinstance(tag, tuple) and tag[0] == "tilted":
            _, theta, phi = tag
            c, s = np.cos(theta / 2.0), np.sin(theta / 2.0)
            b0 = np.array([c, np.exp(1j * phi) * s])
            b1 = np.array([-np.exp(-1j * phi) * s, c])
            return np.stack([b0.conj(), b1.conj()])
        raise ValueError(f"unknown basis tag {tag!r}")

    def __len__(self) -> int:
        return len(self.tags)

    def rotation(self, k: int) -> np.ndarray:
        return self._rotations[k]

    @classmethod
    def z(cls, n_sites: int) -> "MeasurementBasis":
        return cls(["z"] * n_sites)

    @classmethod
    def x(cls, n_sites: int) -> "MeasurementBasis":
        return cls(["x"] * n_sites)


def rotate_measured_region(state: np.ndarray, part: Tripartition,
                           basis: MeasurementBasis) -> np.ndarray:
    """Copy of ``state`` with the S sites rotated into the measurement frame."""
    if len(basis) != part.l_s:
        raise ValueError(f"basis covers {len(basis)} sites, S has {part.l_s}")
    work = state.copy()
    for k, site in enumerate(part.s_sites):
        apply_one_qubit(work, site, basis.rotation(k))
    return work


def conditional_states(state: np.ndarray, part: Tripartition, basis: MeasurementBasis):
    """All-outcome conditioning in one pass.

    Returns (weights, rhos) with weights[o] = p(o_S) and rhos[o] the
    *unnormalised* conditional operator on R (trace equals the weight).
    """
    if state.size != (1 << part.n_sites):
        raise ValueError("state dimension does not match tripartition")
    work = rotate_measured_region(state, part, basis)
    tensor = work.reshape(part.d_r, part.d_e, part.d_s)
    weights = np.einsum("aes,aes->s", tensor, tensor.conj()).real
    rhos = np.einsum("aes,bes->sab", tensor, tensor.conj())
    return weights, rhos


def project_and_condition(state: np.ndarray, part: Tripartition,
                          basis: MeasurementBasis, outcome: int,
                          p_floor: float = P_FLOOR):
    """Outcome probability and conditional state of R for one S outcome.

    Returns (p, rho); rho is None when p < p_floor, signalling an undefined
    conditional state the caller must exclude.
    """
    if not 0 <= outcome < part.d_s:
        raise ValueError(f"outcome {outcome} out of range for {part.l_s} measured sites")
    work = rotate_measured_region(state, part, basis)
    tensor = work.reshape(part.d_r, part.d_e, part.d_s)
    block = tensor[:, :, outcome]
    p = float(np.vdot(block, block).real)
    if p < p_floor:
        return p, None
    rho = (block @ block.conj().T) / p
    return p, rho


def trace_norm_distance(a: np.ndarray, b: np.ndarray, herm_tol: float = 1e-8) -> float:
    """Half the trace norm of (a - b) via a dense Hermitian eigensolve."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    for m in (a, b):
        if not np.allclose(m, m.conj().T, rtol=0.0, atol=herm_tol):
            raise ValueError("inputs must be Hermitian within tolerance")
    if a.tobytes() > b.tobytes():
        a, b = b, a  # canonical operand order makes the metric exactly symmetric
    d = a - b
    d = 0.5 * (d + d.conj().T)
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(d))))


def check_density_matrix(rho: np.ndarray, atol: float = 1e-10, eig_floor: float = -1e-9) -> None:
    """Assert the DensityMatrix invariants: Hermitian, unit trace, near-positive."""
    if not np.allclose(rho, rho.conj().T, rtol=0.0, atol=atol):
        raise ValueError("not Hermitian")
    if abs(np.trace(rho).real - 1.0) > atol or abs(np.trace(rho).imag) > atol:
        raise ValueError(f"trace {np.trace(rho)} != 1")
    w = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
    if w.min() < eig_floor:
        raise ValueError(f"negative eigenvalue {w.min()}")
