import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from multitime.consistency import (
    FIXTURES, MultiTimeOperatorSpec, TestFunctionBundle, apply_slot, commutator_apply,
    commutator_residual, free_pair, pair_potential, richardson_report, scalar_pair_potential,
    single_particle_potentials,
)
from multitime.spacetime import SIGMA1, SIGMA3, DomainError

CENTERS = [[0.1, -0.2, -0.5, 0.7], [0.3, 0.0, 1.0, -0.4], [-0.6, 0.4, 0.2, 2.1]]


def probe(seed=0, centers=CENTERS):
    return TestFunctionBundle.random(np.random.default_rng(seed), 2, centers)


def test_apply_slot_matches_kron():
    rng = np.random.default_rng(1)
    v = rng.normal(size=(5, 8)) + 1j * rng.normal(size=(5, 8))
    m = rng.normal(size=(2, 2))
    for slot in range(3):
        ops = [np.eye(2)] * 3
        ops[slot] = m
        full = np.kron(np.kron(ops[0], ops[1]), ops[2])
        assert np.allclose(apply_slot(m, v, slot, 3), v @ full.T)


@pytest.mark.parametrize("mass", [0.0, 1.3])
def test_free_operators_commute(mass):
    a, b = free_pair(mass)
    assert commutator_residual(a, b, probe(), 1e-3) < 1e-8


def test_single_particle_potentials_commute():
    a, b = single_particle_potentials(mass=0.5)
    assert commutator_residual(a, b, probe(), 1e-3) < 1e-8


def analytic_pair_commutator(pr, du):
    # [L1, L2] = -i (σ3 ⊗ 1 + 1 ⊗ σ3) ∂_{z1} u(z1 - z2) for V1 = V2 = u·1
    t, z = pr.times, pr.positions
    d = z[:, 0] - z[:, 1]
    s = np.kron(SIGMA3, np.eye(2)) + np.kron(np.eye(2), SIGMA3)
    return -1j * du(d)[:, None] * (pr(t, z) @ s.T)


def test_pair_potential_commutator_matches_analytic_value():
    pr = probe(2)
    a, b = pair_potential(mass=0.4)
    out = commutator_apply(a, b, pr, pr.times, pr.positions, 0.01)
    expected = analytic_pair_commutator(pr, lambda d: -d * (1 + d * d) ** -1.5)
    assert np.allclose(out, expected, atol=1e-8)


def test_scalar_pair_potential_matches_analytic_value():
    pr = probe(3)
    u = lambda d: 0.5 * np.exp(-d * d)
    du = lambda d: -d * np.exp(-d * d)
    a, b = scalar_pair_potential(u, mass=0.7)
    t, z = pr.times, pr.positions
    out = commutator_apply(a, b, pr, t, z, 0.01)
    d = z[:, 0] - z[:, 1]
    g1, g2 = np.kron(SIGMA1, np.eye(2)), np.kron(np.eye(2), SIGMA1)
    s1, s2 = np.kron(SIGMA3, np.eye(2)), np.kron(np.eye(2), SIGMA3)
    # -i σ3⊗γ0 ∂1u - i γ0⊗σ3 ∂1u  (using ∂2u = -∂1u)
    mat = -1j * (s1 @ g2 + g1 @ s2)
    expected = du(d)[:, None] * (pr(t, z) @ mat.T)
    assert np.allclose(out, expected, atol=1e-8)


def test_commutator_is_antisymmetric_exactly():
    pr = probe(4)
    a, b = pair_potential()
    ab = commutator_apply(a, b, pr, pr.times, pr.positions, 0.02)
    ba = commutator_apply(b, a, pr, pr.times, pr.positions, 0.02)
    assert np.array_equal(ab, -ba)


def test_pair_potential_has_nonzero_limit():
    rep = richardson_report(*pair_potential(), probe(), 0.04)
    assert rep.limit > 1e-3
    assert abs(rep.residuals[2] - rep.residuals[1]) < abs(rep.residuals[1] - rep.residuals[0])


@pytest.mark.parametrize("name", ["free", "single-particle"])
def test_commuting_fixtures_converge_to_zero(name):
    rep = richardson_report(*FIXTURES[name](), probe(), 0.04)
    assert rep.limit < 1e-8 and rep.converged_below(1e-8)


def test_same_particle_rejected_and_domain_enforced():
    a, _ = free_pair()
    with pytest.raises(ValueError):
        commutator_apply(a, a, probe(), np.zeros((1, 2)), np.zeros((1, 2)), 0.01)
    with pytest.raises(ValueError):
        MultiTimeOperatorSpec(2, 2)
    spacelike = lambda t, z: np.abs(t[..., 0] - t[..., 1]) < np.abs(z[..., 0] - z[..., 1])
    a = MultiTimeOperatorSpec(0, 2, domain=spacelike)
    b = MultiTimeOperatorSpec(1, 2, domain=spacelike)
    near = TestFunctionBundle.random(np.random.default_rng(0), 2, [[0.0, 0.0, 0.0, 0.03]])
    with pytest.raises(DomainError):
        commutator_residual(a, b, near, 0.01)
    far = TestFunctionBundle.random(np.random.default_rng(0), 2, [[0.0, 0.0, 0.0, 1.0]])
    assert commutator_residual(a, b, far, 0.01) < 1e-8


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2), st.integers(0, 2), st.floats(0, 2))
def test_disjoint_slots_commute_for_three_particles(j, k, mass):
    if j == k:
        return
    c = np.random.default_rng(j + 3 * k).normal(size=(2, 6))
    pr = TestFunctionBundle.random(np.random.default_rng(7), 3, c)
    v = lambda t, z: (np.exp(-z[..., j] ** 2))[..., None, None] * np.eye(8)
    a = MultiTimeOperatorSpec(j, 3, mass, v)
    b = MultiTimeOperatorSpec(k, 3, mass)
    assert commutator_residual(a, b, pr, 2e-3) < 1e-8
