import numpy as np
import pytest

from ppesim import (
    MeasurementBasis,
    Tripartition,
    build_ppe,
    delta,
    ergodic_params,
    evolve,
    ghs_distance,
    ghs_second_moment,
    make_product_state,
    moment,
    observable_moment,
    partial_trace,
    random_product_state,
    sample_ghs,
)
from ppesim.ensembles import PartialProjectedEnsemble, load_ensemble, save_ensemble, swap_operator


def ghz(n):
    v = np.zeros(1 << n, dtype=complex)
    v[0] = v[-1] = 2**-0.5
    return v


def ghz_ensemble():
    return build_ppe(ghz(3), Tripartition(1, 0, 2), MeasurementBasis.z(2))


def test_product_state_gives_zero_delta():
    part = Tripartition(1, 1, 3)
    state = make_product_state(random_product_state(5, 8))
    ens = build_ppe(state, part, MeasurementBasis.z(3))
    assert delta(ens) < 1e-12
    ens.validate()


def test_empty_e_reduces_to_projected_ensemble():
    # no traced-out region: conditional states are pure
    part = Tripartition(2, 0, 3)
    state = make_product_state(random_product_state(5, 9))
    evolve(state, ergodic_params(5, 10), 5)
    ens = build_ppe(state, part, MeasurementBasis.z(3))
    for rho in ens.states:
        assert abs(np.trace(rho @ rho).real - 1.0) < 1e-10


def test_ghz_ensemble_entries():
    ens = ghz_ensemble()
    assert list(ens.outcomes) == [0, 3]
    assert np.allclose(ens.weights, 0.5)
    assert np.allclose(ens.states[0], [[1, 0], [0, 0]], atol=1e-14)
    assert np.allclose(ens.states[1], [[0, 0], [0, 1]], atol=1e-14)


def test_first_moment_is_partial_trace_and_basis_independent():
    part = Tripartition(1, 2, 3)
    state = make_product_state(random_product_state(6, 11))
    evolve(state, ergodic_params(6, 12), 4)
    rho_r = partial_trace(state, part.r_sites)
    for tags in (["z"] * 3, ["x"] * 3, [("tilted", 0.5, 0.8)] * 3):
        ens = build_ppe(state, part, MeasurementBasis(tags))
        assert np.allclose(moment(ens, 1), rho_r, atol=1e-10)


def test_single_entry_moment_is_tensor_power():
    rho = np.array([[0.7, 0.1j], [-0.1j, 0.3]])
    ens = PartialProjectedEnsemble(
        d_r=2, outcomes=np.array([0]), weights=np.array([1.0]),
        states=rho[None, :, :])
    assert np.allclose(moment(ens, 3), np.kron(np.kron(rho, rho), rho))


def test_ghz_second_moment():
    m2 = moment(ghz_ensemble(), 2)
    expect = np.zeros((4, 4))
    expect[0, 0] = expect[3, 3] = 0.5
    assert np.allclose(m2, expect, atol=1e-14)


def test_moment_size_cap():
    ens = ghz_ensemble()
    with pytest.raises(ValueError):
        moment(ens, 13)


def test_ghz_delta_is_half():
    assert abs(delta(ghz_ensemble()) - 0.5) < 1e-12


def test_delta_bounds_and_degeneracy():
    ens = ghz_ensemble()
    assert 0.0 <= delta(ens) <= 1.0
    same = PartialProjectedEnsemble(
        d_r=2, outcomes=np.array([0, 1]), weights=np.array([0.4, 0.6]),
        states=np.array([np.eye(2) / 2, np.eye(2) / 2]))
    assert delta(same) < 1e-14


def test_basis_relabelling_leaves_moments_invariant():
    ens = ghz_ensemble()
    perm = PartialProjectedEnsemble(
        d_r=2, outcomes=ens.outcomes[::-1].copy(), weights=ens.weights[::-1].copy(),
        states=ens.states[::-1].copy())
    assert delta(ens) == delta(perm)
    assert np.array_equal(moment(ens, 2), moment(perm, 2))


def test_observable_first_moment():
    ens = ghz_ensemble()
    obs = np.array([[0.3, 0.2], [0.2, -1.0]])
    rho = moment(ens, 1)
    assert abs(observable_moment(ens, obs, 1) - np.trace(obs @ rho).real) < 1e-12


def test_observable_second_moment_factorised_state():
    part = Tripartition(1, 1, 3)
    state = make_product_state(random_product_state(5, 13))
    ens = build_ppe(state, part, MeasurementBasis.z(3))
    obs = np.array([[1.0, 0.5], [0.5, -1.0]])
    m1 = observable_moment(ens, obs, 1)
    assert abs(observable_moment(ens, obs, 2) - m1**2) < 1e-10


def test_ghz_z_squared_moment_is_one():
    assert abs(observable_moment(ghz_ensemble(), np.diag([1.0, -1.0]), 2) - 1.0) < 1e-12


def test_observable_moment_consistency_with_tensor_moment():
    part = Tripartition(2, 1, 2)
    state = make_product_state(random_product_state(5, 14))
    evolve(state, ergodic_params(5, 15), 3)
    ens = build_ppe(state, part, MeasurementBasis.z(2))
    rng = np.random.default_rng(0)
    m = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    obs = m + m.conj().T
    k = 2
    lhs = observable_moment(ens, obs, k)
    rhs = np.trace(np.kron(obs, obs) @ moment(ens, k)).real
    assert abs(lhs - rhs) < 1e-10


# --- gHS ensemble


def test_ghs_second_moment_pure_limit():
    m = ghs_second_moment(2, 1)
    assert np.allclose(m, (np.eye(4) + swap_operator(2)) / 6)


@pytest.mark.parametrize("d_r,d_e", [(2, 1), (2, 4), (4, 2), (8, 8)])
def test_ghs_second_moment_unit_trace(d_r, d_e):
    assert abs(np.trace(ghs_second_moment(d_r, d_e)) - 1.0) < 1e-12


def test_ghs_second_moment_rejects_non_power_of_two():
    with pytest.raises(ValueError):
        ghs_second_moment(3, 2)


def test_sample_ghs_pure_when_no_environment():
    rho = sample_ghs(1, 4, 1)
    assert abs(np.trace(rho @ rho).real - 1.0) < 1e-12


def test_sample_ghs_mean_is_maximally_mixed():
    rng = np.random.default_rng(2)
    n = 10**4
    acc = np.zeros((2, 2), dtype=complex)
    for _ in range(n):
        acc += sample_ghs(rng, 2, 4)
    acc /= n
    # componentwise 3 sigma with entry std ~ 1/sqrt(D_R^2 D_E n)
    assert np.max(np.abs(acc - np.eye(2) / 2)) < 3 * 0.5 / np.sqrt(n)


def test_ghs_distance_zero_for_exact_moment():
    part = Tripartition(1, 2, 1)
    # fabricate an ensemble whose second moment equals the gHS one: single
    # entry equal to the closed form is not a valid state, so check the
    # distance functional directly through a Monte-Carlo ensemble instead
    rng = np.random.default_rng(3)
    n = 4000
    states = np.array([sample_ghs(rng, 2, 4) for _ in range(n)])
    ens = PartialProjectedEnsemble(
        d_r=2, outcomes=np.arange(n), weights=np.full(n, 1.0 / n), states=states)
    assert ghs_distance(ens, part) < 0.02


def test_ensemble_dump_roundtrip(tmp_path):
    ens = ghz_ensemble()
    path = tmp_path / "ens.bin"
    save_ensemble(ens, path)
    back = load_ensemble(path)
    assert back.d_r == ens.d_r
    assert np.array_equal(back.outcomes, ens.outcomes)
    assert np.array_equal(back.weights, ens.weights)
    assert np.array_equal(back.states, ens.states)


def test_dump_rejects_bad_header(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"not-an-ensemble")
    with pytest.raises(ValueError):
        load_ensemble(path)
