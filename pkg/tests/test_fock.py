import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from multitime.fock import (
    BOSON, FERMION, CouplingSpec, CutoffProfile, FockSpace, LatticeSpec, ResourceError,
    build_hamiltonian, dirac_matrix, evolve, free_evolve_F, free_propagator, random_state,
)


def full_x_space(sites, n_max=1, y_stats=BOSON, spacing=1.0):
    lat = LatticeSpec(sites, spacing)
    return FockSpace(lat, m_max=lat.n_modes, n_max=n_max, y_stats=y_stats)


def comm_error(a, b, target, anti, cols=None):
    c = (a @ b + b @ a) if anti else (a @ b - b @ a)
    c = c.toarray() - target
    if cols is not None:
        c = c[:, cols]
    return np.abs(c).max()


@pytest.mark.parametrize("sites", [2, 3])
def test_car_is_exact_on_full_x_space(sites):
    space = full_x_space(sites, n_max=0, spacing=0.7)
    eye = np.eye(space.dim)
    ops = [(s, x) for x in range(sites) for s in range(2)]
    worst = 0.0
    for (s, x), (r, y) in itertools.product(ops, ops):
        a, ad = space.annihilate_x(s, x), space.create_x(r, y)
        target = eye / 0.7 if (s, x) == (r, y) else 0 * eye
        worst = max(worst, comm_error(a, ad, target, anti=True))
        worst = max(worst, comm_error(a, space.annihilate_x(r, y), 0 * eye, anti=True))
    assert worst < 1e-13


def test_ccr_holds_below_the_truncation_boundary():
    lat = LatticeSpec(3, 0.5)
    space = FockSpace(lat, m_max=1, n_max=2)
    safe = space.y_number_operator().diagonal() <= space.n_max - 1
    eye = np.eye(space.dim)
    for (s, x), (r, y) in itertools.product([(0, 0), (1, 0), (0, 2)], repeat=2):
        b, bd = space.annihilate_y(s, x), space.create_y(r, y)
        target = eye / 0.5 if (s, x) == (r, y) else 0 * eye
        assert comm_error(b, bd, target, anti=False, cols=safe) < 1e-13


def test_fermionic_y_variant_obeys_car():
    space = FockSpace(LatticeSpec(2), m_max=1, n_max=4, y_stats=FERMION)
    eye = np.eye(space.dim)
    b, bd = space.annihilate_y(1, 0), space.create_y(1, 0)
    assert comm_error(b, bd, eye, anti=True) < 1e-13
    assert comm_error(b, space.create_y(0, 1), 0 * eye, anti=True) < 1e-13


def test_species_commute():
    space = FockSpace(LatticeSpec(2), m_max=2, n_max=2)
    a, bd = space.annihilate_x(0, 1), space.create_y(1, 0)
    assert abs(a @ bd - bd @ a).max() < 1e-15


def test_jordan_wigner_sign_of_two_fermion_state():
    space = full_x_space(2, n_max=0)
    vac = space.vacuum()
    # a†_0 a†_1 |0> = -a†_1 a†_0 |0>
    s1 = space.create_x(0, 0) @ (space.create_x(1, 0) @ vac)
    s2 = space.create_x(1, 0) @ (space.create_x(0, 0) @ vac)
    assert np.allclose(s1, -s2) and np.linalg.norm(s1) > 0


def test_annihilators_kill_vacuum():
    space = FockSpace(LatticeSpec(3), m_max=1, n_max=2)
    vac = space.vacuum()
    for s in range(2):
        for x in range(3):
            assert np.abs(space.annihilate_x(s, x) @ vac).max() == 0
            assert np.abs(space.annihilate_y(s, x) @ vac).max() == 0


def test_truncation_loss_matches_dropped_norm():
    space = FockSpace(LatticeSpec(2), m_max=1, n_max=2)
    psi = random_state(space, np.random.default_rng(0))
    bd = space.create_y(0, 1)
    # untruncated norm of b†ψ is <ψ|b b†|ψ> = <ψ|(1/a + b†b)|ψ>
    full = np.vdot(psi, psi).real + np.vdot(psi, space.create_y(0, 1) @ (space.annihilate_y(0, 1) @ psi)).real
    kept = np.linalg.norm(bd @ psi) ** 2
    assert space.truncation_loss(psi, 0, 1) == pytest.approx(full - kept, rel=1e-12)


def test_resource_guard():
    with pytest.raises(ResourceError):
        FockSpace(LatticeSpec(32), m_max=1, n_max=9)


@pytest.mark.parametrize("cutoff", [CutoffProfile(), CutoffProfile("gauss", 1.5)])
def test_hamiltonian_is_hermitian_and_conserves_x_number(cutoff):
    space = FockSpace(LatticeSpec(4), m_max=2, n_max=2)
    ham = build_hamiltonian(space, CouplingSpec((0.5, 0.3j), 0.4, 0.2), cutoff)
    assert ham.hermiticity_defect() == 0
    h = ham.full_sparse()
    nx = space.x_number()
    assert abs(h @ nx - nx @ h).max() == 0


def test_zero_coupling_is_block_diagonal_in_y_number():
    space = FockSpace(LatticeSpec(4), m_max=1, n_max=2)
    ham = build_hamiltonian(space, CouplingSpec((0, 0)))
    ny = space.y_number_operator()
    h = ham.full_sparse()
    assert abs(h @ ny - ny @ h).max() == 0


def test_interaction_matches_hand_built_oscillator_matrix():
    # h_x diagonal, h_y = ω·1, g = (g1, 0): each x position couples to one y oscillator
    lat = LatticeSpec(2, 0.8)
    eps = np.array([0.3, -0.1, 0.7, 0.2])
    omega, g1 = 1.1, 0.45
    space = FockSpace(lat, m_max=1, n_max=3)
    ham = build_hamiltonian(space, CouplingSpec((g1, 0)), h_x=np.diag(eps), h_y=omega * np.eye(4))
    blk = ham.blocks[1].toarray()
    off = space.offsets[1]
    expected = np.zeros_like(blk)
    for k in range(4):
        site = k // 2
        for n in space.y_configs:
            i = space.index(tuple(int(j == k) for j in range(4)), n) - off
            expected[i, i] += eps[k] + omega * sum(n)
            up = list(n)
            up[2 * site] += 1
            if sum(up) <= space.n_max:
                j = space.index(tuple(int(q == k) for q in range(4)), tuple(up)) - off
                amp = g1 * math.sqrt(up[2 * site]) / math.sqrt(0.8)
                expected[j, i] += amp
                expected[i, j] += amp
    assert np.abs(blk - expected).max() < 1e-14
    assert np.allclose(np.linalg.eigvalsh(blk), np.linalg.eigvalsh(expected), atol=1e-12)


def test_cutoff_rows_are_normalized_and_supported():
    lat = LatticeSpec(10, 0.5)
    k = CutoffProfile.parse("gauss:1.0").matrix(lat)
    assert np.allclose(k.sum(axis=1), 1.0)
    assert np.all(k >= 0)
    d = lat.distance(np.arange(10)[:, None], np.arange(10)[None, :])
    assert np.all(k[d > 1.0 + 1e-12] == 0)
    assert np.array_equal(CutoffProfile.parse("delta").matrix(lat), np.eye(10))
    with pytest.raises(ValueError):
        CutoffProfile.parse("box:1")


def test_wilson_dispersion_is_local_and_hermitian():
    lat = LatticeSpec(8, 0.5)
    h = dirac_matrix(lat, 0.3)
    assert np.allclose(h, h.conj().T)
    sites = np.arange(16) // 2
    far = lat.distance(sites[:, None], sites[None, :]) > 0.5 + 1e-12
    assert np.all(h[far] == 0)


def test_exact_dispersion_reproduces_relativistic_spectrum():
    lat = LatticeSpec(8, 1.0)
    e = np.sort(np.linalg.eigvalsh(dirac_matrix(lat, 0.6, "exact")))
    k = 2 * np.pi * np.fft.fftfreq(8)
    w = np.sqrt(k**2 + 0.36)
    assert np.allclose(e, np.sort(np.concatenate([w, -w])))


@pytest.fixture(scope="module")
def interacting():
    space = FockSpace(LatticeSpec(4), m_max=1, n_max=2)
    return build_hamiltonian(space, CouplingSpec((0.5, 0.2)), CutoffProfile("gauss", 1.0))


def test_evolution_at_zero_time_is_identity(interacting):
    psi = random_state(interacting.space, np.random.default_rng(3))
    assert np.array_equal(evolve(interacting, psi, 0.0), psi)


@settings(max_examples=10, deadline=None)
@given(t1=st.floats(-1.5, 1.5), t2=st.floats(-1.5, 1.5), seed=st.integers(0, 999))
def test_evolution_is_unitary_group(interacting, t1, t2, seed):
    psi = random_state(interacting.space, np.random.default_rng(seed))
    a = evolve(interacting, psi, t1)
    assert abs(np.linalg.norm(a) - 1) < 1e-12
    assert np.abs(evolve(interacting, a, t2) - evolve(interacting, psi, t1 + t2)).max() < 1e-10


def test_dense_and_krylov_agree(interacting):
    psi = random_state(interacting.space, np.random.default_rng(4))
    assert np.abs(evolve(interacting, psi, 0.9, "dense") - evolve(interacting, psi, 0.9, "krylov")).max() < 1e-10


def test_free_evolve_acts_per_slot():
    lat = LatticeSpec(3)
    h = dirac_matrix(lat, 0.5)
    rng = np.random.default_rng(5)
    u, v = rng.normal(size=6) + 0j, rng.normal(size=6) + 0j
    out = free_evolve_F(h, np.multiply.outer(u, v), [0.0, 0.0], [0.4, -0.3])
    expected = np.multiply.outer(free_propagator(h, 0.4) @ u, free_propagator(h, -0.3) @ v)
    assert np.allclose(out, expected)
