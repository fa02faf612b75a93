import numpy as np
import pytest

from ppesim import (
    DiagonalPhases,
    MeasurementBasis,
    ProductStateSpec,
    Tripartition,
    apply_diagonal,
    build_lbit,
    build_ppe,
    delta,
    delta_infinity_x_scaling,
    delta_infinity_z,
    effective_field,
    evolve_lbit,
    make_product_state,
    random_product_state,
    x_ppe,
    z_delta_closed_form,
    z_ppe_closed_form,
)
from ppesim.lbit import coupling_table_csv


# --- construction


def test_single_site_energies():
    ham = build_lbit(1, xi=0.5, rng_seed=5)
    r1 = ham.coupling_of((0,))
    assert np.allclose(ham.energies, [r1, -r1])


def test_two_site_energy_sum():
    ham = build_lbit(2, xi=0.5, rng_seed=3)
    j0, j1, j01 = ham.coupling_of((0,)), ham.coupling_of((1,)), ham.coupling_of((0, 1))
    assert abs(ham.energies[0] - (j0 + j1 + j01)) < 1e-12   # both spins up
    assert abs(ham.energies[1] - (j0 - j1 - j01)) < 1e-12   # site 1 down


def test_energy_cache_matches_recomputation():
    ham = build_lbit(8, xi=0.7, rng_seed=11)
    assert np.allclose(ham.recompute_energies(), ham.energies, atol=1e-12)


def test_deterministic_under_seed():
    a = build_lbit(6, xi=0.5, rng_seed=2)
    b = build_lbit(6, xi=0.5, rng_seed=2)
    assert np.array_equal(a.couplings, b.couplings)


def test_span_decay_regression():
    # mean |J| over subsets of span s should fit exp(-s/xi)
    ham = build_lbit(12, xi=0.5, rng_seed=7)
    spans = np.array([s[-1] - s[0] for s in ham.subsets])
    mags = np.abs(ham.couplings)
    ss, means = [], []
    for s in range(1, 12):
        sel = spans == s
        if sel.sum() >= 30:
            ss.append(s)
            means.append(np.log(mags[sel].mean()))
    slope = np.polyfit(ss, means, 1)[0]
    fitted_xi = -1.0 / slope
    assert abs(fitted_xi - 0.5) / 0.5 < 0.15


def test_gaussian_coupling_statistics():
    ham = build_lbit(12, xi=0.5, rng_seed=13)
    spans = np.array([s[-1] - s[0] for s in ham.subsets])
    for s in (10, 11):
        sel = spans == s
        assert sel.sum() >= 1000
        r = ham.couplings[sel] / np.exp(-s / 0.5)
        assert abs(r.std() - 1.0) < 0.1


def test_truncation_default_and_warning():
    with pytest.warns(UserWarning):
        ham = build_lbit(15, xi=0.5, rng_seed=1)
    assert ham.max_order == 4
    assert ham.truncation_bound == pytest.approx(np.exp(-4 / 0.5))
    full = build_lbit(10, xi=0.5, rng_seed=1)
    assert full.max_order == 10 and full.truncation_bound == 0.0


def test_coupling_table_csv(tmp_path):
    ham = build_lbit(4, xi=0.5, rng_seed=0)
    path = tmp_path / "table.csv"
    coupling_table_csv(ham, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "sites,span,coupling"
    assert len(lines) == 1 + len(ham.subsets)
    assert ham.to_config_dict() == {"seed": "0", "xi": "0.5", "max_order": "4"}


# --- effective field


def test_effective_field_single_site():
    ham = build_lbit(1, xi=0.5, rng_seed=5)
    assert effective_field(ham, 0, [0]) == pytest.approx(ham.coupling_of((0,)))


def test_effective_field_two_sites():
    ham = build_lbit(2, xi=0.5, rng_seed=3)
    want = ham.coupling_of((0,)) + ham.coupling_of((0, 1))
    assert effective_field(ham, 0, [0, 0]) == pytest.approx(want)
    want = ham.coupling_of((0,)) - ham.coupling_of((0, 1))
    assert effective_field(ham, 0, [0, 1]) == pytest.approx(want)


def test_truncated_field_error_decays_with_order():
    n, xi, site = 8, 0.5, 4
    full = build_lbit(n, xi=xi, rng_seed=9)
    rng = np.random.default_rng(0)
    configs = rng.integers(0, 2, size=(200, n))
    prev = None
    for m in (2, 3, 4, 5):
        trunc = build_lbit(n, xi=xi, max_order=m, rng_seed=9)
        # size-major draw order shares the prefix of the coupling stream
        assert np.array_equal(trunc.couplings, full.couplings[: trunc.couplings.size])
        err = max(abs(effective_field(full, site, c) - effective_field(trunc, site, c))
                  for c in configs)
        bound = np.exp(-m / xi)
        assert err < 20 * bound
        if prev is not None:
            assert err < prev
        prev = err


# --- dephasing evolution


def test_evolve_at_zero_is_product_state():
    spec = random_product_state(6, 21)
    ham = build_lbit(6, xi=0.5, rng_seed=22)
    assert np.allclose(evolve_lbit(spec, ham, 0.0), make_product_state(spec), atol=1e-15)


def test_eigenstate_picks_global_phase_only():
    spec = ProductStateSpec.polarized(5)
    ham = build_lbit(5, xi=0.5, rng_seed=23)
    state = evolve_lbit(spec, ham, 3.7)
    probs = np.abs(state) ** 2
    assert probs[0] == pytest.approx(1.0)


def test_matches_diagonal_phase_oracle():
    n, t = 8, 0.42
    spec = random_product_state(n, 31)
    ham = build_lbit(n, xi=0.5, rng_seed=32)
    got = evolve_lbit(spec, ham, t)
    oracle = make_product_state(spec)
    gen = DiagonalPhases(subsets=[(sites, j * t) for sites, j in
                                  zip(ham.subsets, ham.couplings)])
    apply_diagonal(oracle, gen)
    assert np.max(np.abs(got - oracle)) < 1e-12


# --- Z-measurement closed forms


def test_z_closed_form_at_zero_is_pure_initial_state():
    part = Tripartition(1, 2, 3)
    spec = random_product_state(6, 41)
    ham = build_lbit(6, xi=0.5, rng_seed=42)
    ens = z_ppe_closed_form(spec, ham, 0.0, part)
    a = spec.amplitudes[0]
    rho0 = np.outer(a, a.conj())
    for rho in ens.states:
        assert np.allclose(rho, rho0, atol=1e-12)
    assert z_delta_closed_form(spec, ham, 0.0, part) < 1e-14


def test_z_closed_form_matches_statevector_without_environment():
    part = Tripartition(1, 0, 2)
    spec = random_product_state(3, 43)
    ham = build_lbit(3, xi=0.5, rng_seed=44)
    for t in (0.3, 5.0):
        cf = z_ppe_closed_form(spec, ham, t, part)
        bf = build_ppe(evolve_lbit(spec, ham, t), part, MeasurementBasis.z(2))
        assert np.array_equal(cf.outcomes, bf.outcomes)
        assert np.allclose(cf.weights, bf.weights, atol=1e-12)
        assert np.allclose(cf.states, bf.states, atol=1e-12)


def test_z_oracle_equivalence_random_instances():
    rng = np.random.default_rng(50)
    for _ in range(8):
        l_e = int(rng.integers(0, 4))
        l_s = int(rng.integers(1, 5))
        part = Tripartition(1, l_e, l_s)
        n = part.n_sites
        ham = build_lbit(n, xi=0.5, rng_seed=int(rng.integers(2**31)))
        spec = random_product_state(n, int(rng.integers(2**31)))
        for t in (0.9, 1e6):
            cf = z_ppe_closed_form(spec, ham, t, part)
            bf = build_ppe(evolve_lbit(spec, ham, t), part, MeasurementBasis.z(l_s))
            assert np.allclose(cf.weights, bf.weights, atol=1e-10)
            assert np.allclose(cf.states, bf.states, atol=1e-10)
            assert abs(z_delta_closed_form(spec, ham, t, part) - delta(bf)) < 1e-10


def test_z_weights_stationary_and_diagonals_constant():
    part = Tripartition(1, 2, 3)
    spec = random_product_state(6, 51)
    ham = build_lbit(6, xi=0.5, rng_seed=52)
    ens0 = z_ppe_closed_form(spec, ham, 0.0, part)
    for t in (2.0, 300.0):
        ens = z_ppe_closed_form(spec, ham, t, part)
        assert np.array_equal(ens.weights, ens0.weights)
        assert np.allclose(np.diagonal(ens.states, axis1=1, axis2=2),
                           np.diagonal(ens0.states, axis1=1, axis2=2), atol=1e-12)
        assert np.allclose(ens.states, ens.states.conj().transpose(0, 2, 1))


def test_z_delta_matches_trace_norm_of_closed_form():
    part = Tripartition(1, 2, 4)
    spec = random_product_state(7, 53)
    ham = build_lbit(7, xi=0.5, rng_seed=54)
    for t in (0.5, 13.0, 2.2e4):
        ens = z_ppe_closed_form(spec, ham, t, part)
        assert abs(z_delta_closed_form(spec, ham, t, part) - delta(ens)) < 1e-10


def test_deep_mbl_window_stays_flat():
    # xi = 0.4, l_e = 4: the coherence is blind to S until t ~ 1e-4 e^{(l_e+1)/xi}
    part = Tripartition(1, 4, 5)
    n = part.n_sites
    scale = 1e-4 * np.exp((part.l_e + 1) / 0.4)
    for seed in (1, 2, 3):
        ham = build_lbit(n, xi=0.4, rng_seed=seed)
        spec = random_product_state(n, 100 + seed)
        ts = np.logspace(-1, 6, 113)
        ds = np.array([z_delta_closed_form(spec, ham, t, part) for t in ts])
        assert np.all(ds[ts <= 10.0] < 1e-8)
        onset = ts[np.argmax(ds > 1e-8)]
        assert scale / 10 < onset < scale * 10


# --- X measurements


def test_x_ppe_at_zero_time():
    part = Tripartition(1, 2, 3)
    spec = random_product_state(6, 61)
    ham = build_lbit(6, xi=0.5, rng_seed=62)
    ens = x_ppe(spec, ham, 0.0, part)
    a = spec.amplitudes[0]
    rho0 = np.outer(a, a.conj())
    for rho in ens.states:
        assert np.allclose(rho, rho0, atol=1e-10)
    assert delta(ens) < 1e-10


def _x_rho_upup_direct(spec, ham, t, part, x_s):
    """Population of the up state conditioned on an X outcome, by direct summation."""
    l_e, l_s = part.l_e, part.l_s
    d_e, d_s = part.d_e, part.d_s
    amps = spec.amplitudes
    a_up2 = abs(amps[0, 0]) ** 2
    a_dn2 = abs(amps[0, 1]) ** 2
    w_e = np.ones(1)
    for i in part.e_sites:
        w_e = np.kron(w_e, np.abs(amps[i]) ** 2)
    a_s = np.ones(1, dtype=complex)
    for i in part.s_sites:
        a_s = np.kron(a_s, amps[i])
    energies = ham.energies.reshape(2, d_e, d_s)
    num = den = 0.0 + 0.0j
    for z_e in range(d_e):
        for z_s in range(d_s):
            for z_sp in range(d_s):
                olap = (-1.0) ** (bin(x_s & z_s).count("1") + bin(x_s & z_sp).count("1"))
                b = a_s[z_sp].conj() * a_s[z_s] * olap / d_s
                num += w_e[z_e] * b * np.exp(-1j * t * (energies[1, z_e, z_s]
                                                        - energies[1, z_e, z_sp]))
                den += w_e[z_e] * b * np.exp(-1j * t * (energies[0, z_e, z_s]
                                                        - energies[0, z_e, z_sp]))
    g = num / den
    return a_up2 / (a_up2 + (g * a_dn2).real) if abs(g.imag) < 1e-9 else \
        (a_up2 / (a_up2 + g * a_dn2)).real


def test_x_conditional_population_matches_direct_sum():
    part = Tripartition(1, 2, 3)
    spec = random_product_state(6, 63)
    ham = build_lbit(6, xi=0.5, rng_seed=64)
    t = 3.7
    ens = x_ppe(spec, ham, t, part)
    for idx, x_s in enumerate(ens.outcomes):
        want = _x_rho_upup_direct(spec, ham, t, part, int(x_s))
        assert abs(ens.states[idx, 0, 0].real - want) < 1e-10


def test_x_onset_grows_with_environment():
    ts = np.logspace(-1, 7, 65)
    onsets = []
    for l_e in (2, 3, 4):
        part = Tripartition(1, l_e, 4)
        n = part.n_sites
        curves = []
        for r in range(10):
            rng = np.random.default_rng(888 + 13 * r + l_e)
            ham = build_lbit(n, xi=0.5, rng_seed=int(rng.integers(2**31)))
            spec = random_product_state(n, int(rng.integers(2**31)))
            curves.append([delta(x_ppe(spec, ham, t, part)) for t in ts])
        mean = np.array(curves).mean(axis=0)
        onsets.append(ts[np.argmax(mean > 0.01)])
    assert onsets[0] < onsets[1] < onsets[2]


# --- infinite-time values


def test_delta_infinity_zero_without_coherence():
    spec = ProductStateSpec.polarized(5)
    assert delta_infinity_z(spec, Tripartition(1, 2, 2)) == 0.0


def test_delta_infinity_uniform_spec():
    part = Tripartition(1, 3, 4)
    spec = ProductStateSpec.plus(8)
    assert delta_infinity_z(spec, part) == pytest.approx(0.25 * 0.5**3)


def test_delta_infinity_haar_average():
    # per site: E[u(1-u)] = 1/6 on R and E[u^2+(1-u)^2] = 2/3 on E for u
    # uniform on [0,1], so the ensemble mean is (2/3)^l_e / 6
    part = Tripartition(1, 3, 4)
    vals = np.array([delta_infinity_z(random_product_state(8, s), part)
                     for s in range(20000)])
    expect = (2.0 / 3.0) ** 3 / 6.0
    assert abs(vals.mean() - expect) < 3 * vals.std() / np.sqrt(vals.size)


def test_delta_infinity_matches_late_time_average():
    part = Tripartition(1, 2, 8)
    n = part.n_sites
    ham = build_lbit(n, xi=0.5, rng_seed=77)
    spec = random_product_state(n, 123)
    ts = np.logspace(6, 8, 40)
    avg = np.mean([z_delta_closed_form(spec, ham, t, part) for t in ts])
    assert avg == pytest.approx(delta_infinity_z(spec, part), rel=0.25)


def test_x_scaling_reference_ratio():
    for l_e in range(0, 5):
        a = delta_infinity_x_scaling(Tripartition(1, l_e, 1))
        b = delta_infinity_x_scaling(Tripartition(1, l_e + 1, 1))
        assert b / a == pytest.approx(2.0 / 3.0)
    assert delta_infinity_x_scaling(Tripartition(1, 0, 1)) > 0.0


def test_closed_forms_require_single_site_r():
    part = Tripartition(2, 1, 2)
    spec = random_product_state(5, 1)
    ham = build_lbit(5, xi=0.5, rng_seed=1)
    with pytest.raises(ValueError):
        z_ppe_closed_form(spec, ham, 1.0, part)
    with pytest.raises(ValueError):
        delta_infinity_z(spec, part)
