import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from multitime.spacetime import DomainError, Hypersurface
from multitime.zerorange import (
    CallableData, GaussianPacket, GridData, ProductData, Superposition, ZeroRangeModel,
    lattice_oracle, random_spacelike_configs, tensor_current_of,
)

UP, DOWN = (1.0, 0.0), (0.0, 1.0)


def mixed_model(theta=np.pi / 2):
    p1 = GaussianPacket(-1.2, 0.2, 1.0, (1, 0.7j))
    p2 = GaussianPacket(1.2, 0.2, -0.5, (0.4, 1))
    return ZeroRangeModel(theta, ProductData(p1, p2))


def component3_model(theta):
    # particle 1 moves left from the right, particle 2 moves right from the left
    return ZeroRangeModel(theta, ProductData(GaussianPacket(1.3, 0.2, 0.3, DOWN),
                                             GaussianPacket(-1.3, 0.2, 0.0, UP)))


def test_theta_range_and_initial_boundary_check():
    data = ProductData(GaussianPacket(-2, 0.3), GaussianPacket(2, 0.3))
    with pytest.raises(ValueError):
        ZeroRangeModel(-np.pi, data)
    ZeroRangeModel(np.pi, data)
    overlapping = ProductData(GaussianPacket(0, 0.5, 0, (1, 1)), GaussianPacket(0.2, 0.5, 0, (1, 1)))
    with pytest.raises(ValueError):
        ZeroRangeModel(0.3, overlapping)


def test_initial_data_normalized():
    assert mixed_model().initial.norm(700) == pytest.approx(1, abs=1e-8)


def test_non_spacelike_and_collision_require_care():
    m = mixed_model()
    with pytest.raises(DomainError):
        m.evaluate(1.0, 0.0, 0.0, 0.5)
    with pytest.raises(DomainError):
        m.evaluate(0.3, 0.1, 0.3, 0.1)
    assert m.evaluate(0.3, 0.1, 0.3, 0.1, side=1).shape == (4,)


def test_component1_pure_transport():
    p1, p2 = GaussianPacket(-1, 0.3, 0.5, UP), GaussianPacket(1, 0.4, 0, UP)
    m = ZeroRangeModel(0.7, ProductData(p1, p2))
    cfg = random_spacelike_configs(np.random.default_rng(3), 50)
    out = m.evaluate(*cfg.T)
    expected = p1(cfg[:, 1] - cfg[:, 0])[:, 0] * p2(cfg[:, 3] - cfg[:, 2])[:, 0]
    assert np.allclose(out[:, 0], expected, atol=1e-15)
    assert np.all(out[:, 1:] == 0)


def test_crossing_formula_matches_closed_form():
    theta = 0.9
    m = component3_model(theta)
    t = 1.2
    z1 = np.linspace(0.1, 2.3, 30)
    z2 = z1 - 0.05
    phi = m.evaluate(t, z1, t, z2)
    expected = np.exp(1j * theta) * m.initial(z2 + t, z1 - t)[..., 2]
    assert np.allclose(phi[:, 1], expected, atol=1e-15)


def test_crossing_formula_against_lattice_oracle():
    m = component3_model(0.9)
    t = 1.6
    errs = []
    for dz in (0.02, 0.01):
        r = lattice_oracle(m, t, dz, window=(-3.0, 3.0))
        exact = m.equal_time_slice(t, r.z1, r.z2)
        errs.append(np.max(np.abs(exact - r.psi)))
    peak = np.max(np.abs(exact))
    assert errs[1] < 0.6 * errs[0]
    assert errs[1] < 0.1 * peak


def test_theta_independence_without_crossing():
    # particle 1 moves left away from particle 2 which moves right
    data = ProductData(GaussianPacket(-2.0, 0.2, 0.0, DOWN), GaussianPacket(2.0, 0.2, 0.0, UP))
    a, b = ZeroRangeModel(0.2, data), ZeroRangeModel(2.5, data)
    cfg = random_spacelike_configs(np.random.default_rng(0), 100, tmax=1.5)
    # Gaussian tails do reach the collision set, so agreement is up to their size
    assert np.allclose(a.evaluate(*cfg.T), b.evaluate(*cfg.T), rtol=0, atol=1e-14)
    ra, rb = lattice_oracle(a, 1.0, 0.02), lattice_oracle(b, 1.0, 0.02)
    assert np.allclose(ra.psi, rb.psi, rtol=0, atol=1e-14)


@pytest.mark.parametrize("theta", [0.0, np.pi / 2, np.pi, -2.0])
def test_boundary_condition_one_sided_limits(theta):
    m = mixed_model(theta)
    t = np.linspace(0.2, 2.5, 50)
    z = np.linspace(-0.5, 0.8, 50)
    below = m.evaluate(t, z, t, z, side=-1)   # z1 = z - 0
    above = m.evaluate(t, z, t, z, side=1)    # z1 = z + 0
    scale = np.max(np.abs(below[:, 1:3])) + np.max(np.abs(above[:, 1:3]))
    assert scale > 1e-3
    assert np.max(np.abs(below[:, 1] - np.exp(-1j * theta) * below[:, 2])) < 1e-8 * scale
    assert np.max(np.abs(above[:, 1] - np.exp(1j * theta) * above[:, 2])) < 1e-8 * scale
    # one-sided limits are the limits of nearby spacelike values
    eps = 1e-9
    near = m.evaluate(t, z - eps, t, z + eps)
    assert np.allclose(near, below, atol=1e-6)


def test_slice_at_zero_is_initial_data():
    m = mixed_model()
    z1 = np.linspace(-3, 3, 41)
    z2 = z1 + 0.013
    assert np.array_equal(m.equal_time_slice(0.0, z1, z2), m.initial(z1[:, None], z2[None, :]))


@pytest.mark.parametrize("surface", [
    Hypersurface.flat(1.6),
    Hypersurface(((-4.0, -1.0), (4.0, 1.0))),
    Hypersurface(((-3.0, 0.2), (0.0, 1.6), (3.0, 0.4))),
])
def test_unitarity_on_surfaces(surface):
    assert mixed_model(np.pi / 2).surface_norm(surface) == pytest.approx(1, abs=1e-10)


def test_lattice_component1_transport_is_exact():
    m = ZeroRangeModel(0.4, ProductData(GaussianPacket(-1, 0.2, 0, UP), GaussianPacket(1, 0.25, 0, UP)))
    r = lattice_oracle(m, 0.5, 0.02, window=(-3, 4))
    exact = m.equal_time_slice(0.5, r.z1, r.z2)
    k = 25   # cells entering from outside the window are not modelled
    assert np.max(np.abs(exact[k:, k:, 0] - r.psi[k:, k:, 0])) < 1e-13


def test_lattice_probability_conserved_every_step():
    r = lattice_oracle(mixed_model(), 1.6, 0.02, window=(-4.5, 4.5), record_norms=True)
    assert np.ptp(r.norms) < 1e-13
    assert abs(r.outflow) < 1e-13


def test_lattice_rejects_bad_parameters():
    m = mixed_model()
    with pytest.raises(ValueError):
        lattice_oracle(m, 1.0, 0.0)
    with pytest.raises(ValueError):
        lattice_oracle(m, 1.005, 0.02)


def test_oracle_converges_first_order():
    m = mixed_model()
    errs = []
    for dz in (0.04, 0.02, 0.01):
        r = lattice_oracle(m, 1.6, dz, window=(-3.2, 3.2))
        errs.append(np.max(np.abs(m.equal_time_slice(1.6, r.z1, r.z2) - r.psi)))
    slope = np.polyfit(np.log([0.04, 0.02, 0.01]), np.log(errs), 1)[0]
    assert slope == pytest.approx(1.0, abs=0.2)


def test_tensor_current_positivity_and_zero():
    m = mixed_model()
    cfg = random_spacelike_configs(np.random.default_rng(5), 200, tmax=1.5, zmax=2.5)
    j = m.tensor_current(*cfg.T)
    phi = m.evaluate(*cfg.T)
    assert np.allclose(j[:, 0, 0], np.sum(np.abs(phi) ** 2, axis=-1))
    assert np.all(j[:, 0, 0] >= 0)
    assert np.all(tensor_current_of(np.zeros(4)) == 0)


def test_current_conservation_residual_is_at_roundoff():
    # massless transport: the central-difference errors of ∂_t and ∂_z cancel exactly
    m = mixed_model()
    peak = np.max(m.tensor_current(1.3, -0.05, 1.1, 0.35))
    for h in (0.02, 0.01, 0.005):
        assert m.current_conservation_residual(1.3, -0.05, 1.1, 0.35, h) < 1e-9 * max(peak, 1)


def test_current_residual_rejects_neighbourhood_leaving_domain():
    with pytest.raises(DomainError):
        mixed_model().current_conservation_residual(0.0, 0.0, 0.0, 0.01, 0.02)


def test_free_equations_hold_away_from_collisions():
    m = mixed_model()
    cfg = np.array([1.3, -0.05, 1.1, 0.35])
    h = 1e-4
    sig = np.array([1, 1, -1, -1]), np.array([1, -1, 1, -1])   # σ3 per slot

    def d(k):
        p, q = cfg.copy(), cfg.copy()
        p[k] += h
        q[k] -= h
        return (m.evaluate(*p) - m.evaluate(*q)) / (2 * h)

    phi_scale = np.max(np.abs(m.evaluate(*cfg)))
    # i∂_t φ = -i σ3 ∂_z φ  =>  ∂_t φ + σ3 ∂_z φ = 0
    assert np.max(np.abs(d(0) + sig[0] * d(1))) < 1e-6 * max(phi_scale, 1)
    assert np.max(np.abs(d(2) + sig[1] * d(3))) < 1e-6 * max(phi_scale, 1)


def test_purity():
    z = np.linspace(-4, 4, 400)
    m = mixed_model()
    assert m.entanglement_purity(0.0, z) == pytest.approx(1, abs=1e-10)
    assert m.entanglement_purity(1.6, z) < 0.99
    apart = ZeroRangeModel(np.pi / 2, ProductData(GaussianPacket(-1.2, 0.2, 1, DOWN),
                                                  GaussianPacket(1.2, 0.2, 0, (1, 0.3))))
    # particle 1 moves left at light speed, so particle 2 can never catch up
    assert apart.entanglement_purity(1.6, z) > 1 - 1e-6


def test_boost_covariance():
    m = mixed_model()
    cfg = random_spacelike_configs(np.random.default_rng(11), 100)
    assert m.boost_covariance_check(0.0, cfg) == 0.0
    for beta in (0.1, 0.3, 0.6):
        assert m.boost_covariance_check(beta, cfg) < 1e-8


def test_boost_leaves_mixed_components_phase_relation():
    m = mixed_model(1.1)
    boosted = m.boosted(0.4)
    t = np.linspace(0.3, 2.0, 10)
    z = np.linspace(-0.2, 0.2, 10)
    below = boosted.evaluate(t, z, t, z, side=-1)
    assert np.allclose(below[:, 1], np.exp(-1.1j) * below[:, 2], atol=1e-7)


def antisymmetric_data():
    a = ProductData(GaussianPacket(-1.5, 0.2, 0.7, (1, 0.5)), GaussianPacket(1.5, 0.25, -0.3, (0.2, 1)))
    b = ProductData(GaussianPacket(1.5, 0.25, -0.3, (0.2, 1)), GaussianPacket(-1.5, 0.2, 0.7, (1, 0.5)))

    def swap(data):
        def f(z1, z2):
            v = data(z2, z1)
            return v[..., [0, 2, 1, 3]]
        return f

    return Superposition(((1.0, a), (-1.0, CallableData(swap(a), a.window)))), b


def test_antisymmetry_preserved():
    data, _ = antisymmetric_data()
    m = ZeroRangeModel(0.8, data)
    z1 = np.linspace(-3, 3, 61)
    z2 = z1 + 0.021
    for t in (0.0, 0.9, 1.7):
        s = m.equal_time_slice(t, z1, z2)
        swapped = m.equal_time_slice(t, z2, z1).transpose(1, 0, 2)[..., [0, 2, 1, 3]]
        assert np.max(np.abs(s + swapped)) < 1e-8


def test_grid_data_interpolates_bilinearly(tmp_path):
    z = np.linspace(-1, 1, 5)
    vals = np.zeros((5, 5, 4), complex)
    vals[..., 0] = z[:, None] + 2j * z[None, :]
    path = tmp_path / "data.npz"
    np.savez(path, z1=z, z2=z, values=vals)
    g = GridData.load(path)
    out = g(np.array([0.25, 3.0]), np.array([-0.3, 0.0]))
    assert out[0, 0] == pytest.approx(0.25 - 0.6j)
    assert np.all(out[1] == 0)
    with pytest.raises(ValueError):
        GridData(z, z, vals[:, :4])


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, 3.0))
def test_slice_norm_is_one_for_all_times(t):
    assert mixed_model().surface_norm(Hypersurface.flat(t), panel=0.3, order=8) == pytest.approx(1, abs=1e-8)
