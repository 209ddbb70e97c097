import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from multitime.spacetime import (
    GAMMA0, GAMMA1, GAMMAS, SIGMA3, Boost, Classification, DomainError, Hypersurface,
    SpacetimePoint, BOOST_GENERATOR, boost_coords, boost_point, boost_spinor, born_density,
    classify_configuration, hypersurface_norm, interval, spin_density,
)

finite = st.floats(-10, 10, allow_nan=False)
rapidity = st.floats(-2, 2, allow_nan=False)


def test_gamma_conventions():
    assert np.allclose(GAMMA0 @ GAMMA0, np.eye(2))
    assert np.allclose(GAMMA0 @ GAMMA1, SIGMA3)
    assert np.allclose(GAMMA1 @ GAMMA1, -np.eye(2))


@pytest.mark.parametrize("points, expected", [
    (((0, 0), (0, 1)), Classification.SPACELIKE),
    (((0, 0), (1, 0.5)), Classification.NON_SPACELIKE),
    (((2, 3), (2, 3)), Classification.COLLISION),
    (((0, 0), (1, 1)), Classification.NON_SPACELIKE),
    ((), Classification.SPACELIKE),
])
def test_classify(points, expected):
    assert classify_configuration(points) is expected


@given(st.lists(st.tuples(finite, finite), min_size=2, max_size=4), rapidity, st.randoms())
def test_classify_is_permutation_and_boost_invariant(points, beta, rnd):
    c = classify_configuration(points)
    shuffled = list(points)
    rnd.shuffle(shuffled)
    assert classify_configuration(shuffled) is c
    # skip near-lightlike pairs where rounding may flip the strict inequality
    gaps = [abs(abs(p[0] - q[0]) - abs(p[1] - q[1])) for i, p in enumerate(points) for q in points[i + 1:]]
    if min(gaps) > 1e-6:
        boosted = [tuple(boost_point(Boost(beta), p)) for p in points]
        assert classify_configuration(boosted, atol=1e-9) is c


def test_boost_examples():
    assert tuple(boost_point(Boost(0.0), (1, 2))) == (1, 2)
    assert tuple(boost_point(Boost(0.7), (0, 0))) == (0, 0)
    b = Boost(np.log(2))
    p = boost_point(b, (0, 1))
    assert p.t**2 - p.z**2 == pytest.approx(-1)
    # independent route: exponential of the generator
    q = expm(np.log(2) * BOOST_GENERATOR) @ np.array([0.0, 1.0])
    assert np.allclose([p.t, p.z], q)
    assert np.allclose(b.matrix @ [0.0, 1.0], q)


@given(rapidity, rapidity)
def test_boost_group_law(b1, b2):
    assert np.allclose(Boost(b1).matrix @ Boost(b2).matrix, Boost(b1 + b2).matrix, atol=1e-10)
    assert np.allclose(Boost(b1).spinor @ Boost(b2).spinor, Boost(b1 + b2).spinor, atol=1e-10)


@given(rapidity, finite, finite, finite, finite)
def test_boost_preserves_interval(beta, t1, z1, t2, z2):
    p, q = SpacetimePoint(t1, z1), SpacetimePoint(t2, z2)
    b = Boost(beta)
    assert interval(boost_point(b, p), boost_point(b, q)) == pytest.approx(interval(p, q), abs=1e-7)


@pytest.mark.parametrize("beta", [-1.3, 0.0, 0.4, 1.0])
def test_spinor_representation_intertwines_gammas(beta):
    b = Boost(beta)
    s, sinv, lam = b.spinor, np.linalg.inv(b.spinor), b.matrix
    for mu in range(2):
        rhs = sum(lam[mu, nu] * GAMMAS[nu] for nu in range(2))
        assert np.allclose(s @ GAMMAS[mu] @ sinv, rhs)


def test_boost_spinor_examples():
    amp = np.array([0.3, 1j, -2, 0.5])
    assert np.allclose(boost_spinor(Boost(0), amp), amp)
    assert np.allclose(boost_spinor(Boost(1), np.array([1, 0])), [np.exp(0.5), 0])
    out = boost_spinor(Boost(0.8), amp)
    assert out[1] == pytest.approx(amp[1]) and out[2] == pytest.approx(amp[2])


def test_boost_coords_vectorized():
    t, z = boost_coords(Boost(0.3), np.array([0.0, 1.0]), np.array([1.0, 0.0]))
    assert np.allclose([t[0], z[0]], tuple(boost_point(Boost(0.3), (0, 1))))


def test_flat_density_is_squared_norm():
    rng = np.random.default_rng(1)
    amp = rng.normal(size=4) + 1j * rng.normal(size=4)
    flat = Hypersurface.flat(0.0)
    d = born_density(amp, flat, [(0, -1), (0, 2)])
    assert d == pytest.approx(np.sum(np.abs(amp) ** 2))
    assert born_density(np.zeros(4), flat, [(0, 0), (0, 1)]) == 0


def test_tilted_density_against_matrix_oracle():
    surf = Hypersurface(((-1.0, -0.5), (1.0, 0.5)))
    phi = np.array([1, 1]) / np.sqrt(2)
    n_up = np.array([2, 1]) / np.sqrt(3)           # contravariant normal
    n_low = n_up * np.array([1, -1])               # lower the index
    slash = n_low[0] * GAMMA0 + n_low[1] * GAMMA1
    expected = (np.conj(phi) @ GAMMA0 @ slash @ phi).real
    assert born_density(phi, surf, [(0.0, 0.0)]) == pytest.approx(expected)
    with pytest.raises(DomainError):
        born_density(phi, surf, [(0.3, 0.0)])


@settings(max_examples=50)
@given(st.lists(st.floats(-5, 5), min_size=8, max_size=8), st.floats(-0.99, 0.99), st.floats(-0.99, 0.99))
def test_density_nonnegative(v, s1, s2):
    amp = np.array(v[:4]) + 1j * np.array(v[4:])
    from multitime.spacetime import normal_covector
    assert spin_density(amp, [normal_covector(s1), normal_covector(s2)]) >= -1e-12


def test_hypersurface_rejects_lightlike_and_roundtrips_json():
    with pytest.raises(DomainError):
        Hypersurface(((0, 0), (1, 1)))
    s = Hypersurface(((-1, 0), (0, 0.5), (2, -0.2)))
    assert Hypersurface.from_json(s.to_json()) == s
    assert s.time(-5) == 0 and s.time(5) == pytest.approx(-0.2)
    assert s.slope(-0.5) == pytest.approx(0.5)
    assert s.slope(10) == 0


def gaussian_one_particle(times, positions):
    # right-moving and left-moving normalized packets, exact free massless solution
    t, z = times[0], positions[0]
    up = np.exp(-((z - t) ** 2) / 2) / np.pi**0.25 * np.sqrt(0.5)
    down = np.exp(-((z + t - 1) ** 2) / 2) / np.pi**0.25 * np.sqrt(0.5)
    return np.stack([up, down], axis=-1)


@pytest.mark.parametrize("surface", [
    Hypersurface.flat(0.0),
    Hypersurface(((-2.0, 0.0), (2.0, 1.0))),
    Hypersurface(((-1.0, 0.5), (0.0, -0.2), (1.5, 0.6))),
])
def test_hypersurface_norm_of_free_solution(surface):
    assert hypersurface_norm(gaussian_one_particle, surface, 1, window=(-12, 12)) == pytest.approx(1, abs=1e-10)


def test_norm_scales_quadratically():
    def doubled(times, positions):
        return 2 * gaussian_one_particle(times, positions)
    assert hypersurface_norm(doubled, Hypersurface.flat(), 1, window=(-12, 12)) == pytest.approx(4)
