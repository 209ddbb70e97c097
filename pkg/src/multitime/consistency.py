"""Numerical evaluation of the multi-time consistency condition.

For operators ``L_j = i ∂/∂t_j - H_j`` acting on functions of ``N`` space-time
points, the condition is ``[L_j, L_k] φ = 0``.  Here ``H_j`` is the free
massive Dirac operator on particle ``j``'s spinor slot plus a matrix potential
``V_j(t, z)`` depending on all points.  Derivatives are 5-point central
differences; the commutator is applied by nesting them.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .spacetime import SIGMA1, SIGMA3, DomainError

_D5 = np.array([1.0, -8.0, 8.0, -1.0]) / 12.0
_OFFSETS = np.array([-2.0, -1.0, 1.0, 2.0])


def apply_slot(mat: np.ndarray, vec: np.ndarray, slot: int, n: int) -> np.ndarray:
    """Apply a 2x2 matrix to tensor slot ``slot`` of ``vec`` (shape ``(..., 2**n)``)."""
    batch = vec.shape[:-1]
    v = vec.reshape(batch + (2,) * n)
    v = np.moveaxis(v, len(batch) + slot, -1) @ np.asarray(mat).T
    return np.moveaxis(v, -1, len(batch) + slot).reshape(batch + (2**n,))


def apply_matrix(mat: np.ndarray, vec: np.ndarray) -> np.ndarray:
    """Batched ``mat @ vec`` where ``mat`` is ``(..., d, d)`` or ``(d, d)``."""
    return np.einsum("...ab,...b->...a", mat, vec)


@dataclass(frozen=True)
class MultiTimeOperatorSpec:
    """``i∂_{t_j} - H_j`` with ``H_j = -iσ3 ∂_{z_j} + m σ1 + V(t, z)``.

    ``potential(t, z)`` receives arrays of shape ``(B, N)`` and returns
    ``(B, 2**N, 2**N)`` matrices (or ``None`` for no potential).  ``domain``
    optionally flags stencil points where the operator is undefined.
    """

    particle: int
    n_particles: int
    mass: float = 0.0
    potential: Optional[Callable] = None
    domain: Optional[Callable] = None

    def __post_init__(self):
        if not 0 <= self.particle < self.n_particles:
            raise ValueError("particle index out of range")

    def hamiltonian(self, f: Callable, h: float) -> Callable:
        j, n = self.particle, self.n_particles

        def g(t, z):
            dz = sum(c * f(t, _shift(z, j, o * h)) for c, o in zip(_D5, _OFFSETS)) / h
            out = -1j * apply_slot(SIGMA3, dz, j, n)
            centre = f(t, z)
            if self.mass:
                out = out + self.mass * apply_slot(SIGMA1, centre, j, n)
            if self.potential is not None:
                out = out + apply_matrix(self.potential(t, z), centre)
            return out

        return g

    def operator(self, f: Callable, h: float) -> Callable:
        """``L_j f`` as a new callable."""
        j = self.particle
        hf = self.hamiltonian(f, h)

        def g(t, z):
            if self.domain is not None:
                for o in _OFFSETS * h:
                    _check_domain(self.domain, _shift(t, j, o), z)
                    _check_domain(self.domain, t, _shift(z, j, o))
            dt = sum(c * f(_shift(t, j, o * h), z) for c, o in zip(_D5, _OFFSETS)) / h
            return 1j * dt - hf(t, z)

        return g


def _shift(a, j, d):
    a = np.array(a, dtype=float, copy=True)
    a[..., j] += d
    return a


def _check_domain(domain, t, z):
    if domain is not None and not np.all(domain(t, z)):
        raise DomainError("finite-difference stencil leaves the operator's domain")


@dataclass(frozen=True)
class TestFunctionBundle:
    """Smooth probe ``Σ_b exp(-|q - q_b|²/2w²) (1 + c·(q - q_b)) χ``.

    ``q = (t_1..t_N, z_1..z_N)``; ``centers`` has shape ``(B, 2N)`` and lists
    the base configurations ``q_b`` at which residuals are reported.
    """

    __test__ = False   # not a pytest class

    centers: np.ndarray
    width: float = 0.7
    slope: tuple = ()
    spinor: tuple = ()
    n_particles: int = 2

    @classmethod
    def random(cls, rng: np.random.Generator, n_particles: int, centers) -> "TestFunctionBundle":
        d = 2**n_particles
        spinor = rng.normal(size=d) + 1j * rng.normal(size=d)
        spinor /= np.linalg.norm(spinor)
        slope = rng.normal(scale=0.5, size=2 * n_particles)
        return cls(np.atleast_2d(np.asarray(centers, float)), 0.7, tuple(slope), tuple(spinor), n_particles)

    def __call__(self, t, z):
        n = self.n_particles
        q = np.concatenate([np.atleast_2d(t), np.atleast_2d(z)], axis=-1)
        slope = np.asarray(self.slope if self.slope else np.zeros(2 * n))
        chi = np.asarray(self.spinor if self.spinor else np.ones(2**n) / 2 ** (n / 2), dtype=complex)
        total = 0.0
        for c in self.centers:       # one bump per base configuration
            d = q - c
            total = total + np.exp(-np.sum(d * d, axis=-1) / (2 * self.width**2)) * (1.0 + d @ slope)
        return total[..., None] * chi

    @property
    def times(self):
        return self.centers[:, : self.n_particles]

    @property
    def positions(self):
        return self.centers[:, self.n_particles:]


@dataclass
class CommutatorReport:
    steps: tuple
    residuals: tuple
    limit: float
    witness: np.ndarray = field(default=None)

    def converged_below(self, tol: float) -> bool:
        return abs(self.limit) < tol and max(self.residuals) < 10 * tol


def commutator_apply(hj: MultiTimeOperatorSpec, hk: MultiTimeOperatorSpec, f: Callable, t, z, h: float) -> np.ndarray:
    """``(L_j L_k - L_k L_j) f`` at the points ``(t, z)`` (shape ``(B, N)`` each)."""
    if hj.particle == hk.particle:
        raise ValueError("commutator needs two different particles")
    a = hj.operator(hk.operator(f, h), h)(t, z)
    b = hk.operator(hj.operator(f, h), h)(t, z)
    return a - b


def commutator_residual(hj: MultiTimeOperatorSpec, hk: MultiTimeOperatorSpec,
                        probe: TestFunctionBundle, h: float) -> float:
    """Max over base points of ``|[L_j, L_k] φ| / |φ|`` (probe-normalized)."""
    out = commutator_apply(hj, hk, probe, probe.times, probe.positions, h)
    scale = np.linalg.norm(probe(probe.times, probe.positions), axis=-1)
    return float(np.max(np.linalg.norm(out, axis=-1) / scale))


def richardson_report(hj, hk, probe, h: float) -> CommutatorReport:
    """Residual at ``h, h/2, h/4`` and the fourth-order Richardson limit."""
    steps = (h, h / 2, h / 4)
    res = tuple(commutator_residual(hj, hk, probe, s) for s in steps)
    limit = res[2] + (res[2] - res[1]) / 15.0
    return CommutatorReport(steps, res, float(limit))


# --------------------------------------------------------------------------
# regression fixtures
# --------------------------------------------------------------------------

def free_pair(mass: float = 0.0):
    return (MultiTimeOperatorSpec(0, 2, mass), MultiTimeOperatorSpec(1, 2, mass))


def single_particle_potentials(v: Callable = None, w: Callable = None, mass: float = 0.0):
    """``V_1 = v(z_1)·1``, ``V_2 = w(z_2)·1``."""
    v = v or (lambda z: 0.8 * np.exp(-z * z))
    w = w or (lambda z: np.cos(z))
    eye = np.eye(4)

    def p1(t, z):
        return v(z[..., 0])[..., None, None] * eye

    def p2(t, z):
        return w(z[..., 1])[..., None, None] * eye

    return (MultiTimeOperatorSpec(0, 2, mass, p1), MultiTimeOperatorSpec(1, 2, mass, p2))


def smoothed_coulomb(z):
    return 1.0 / np.sqrt(1.0 + z * z)


def pair_potential(u: Callable = smoothed_coulomb, mass: float = 0.0):
    """``V_1 = V_2 = u(z_1 - z_2)·1``."""
    eye = np.eye(4)

    def p(t, z):
        return u(z[..., 0] - z[..., 1])[..., None, None] * eye

    return (MultiTimeOperatorSpec(0, 2, mass, p), MultiTimeOperatorSpec(1, 2, mass, p))


def scalar_pair_potential(u: Callable = None, mass: float = 0.0):
    """``V_j = u(z_1 - z_2) γ^0`` on particle ``j``'s slot."""
    u = u or (lambda d: 0.5 * np.exp(-d * d))
    g1 = np.kron(SIGMA1, np.eye(2))
    g2 = np.kron(np.eye(2), SIGMA1)

    def p1(t, z):
        return u(z[..., 0] - z[..., 1])[..., None, None] * g1

    def p2(t, z):
        return u(z[..., 0] - z[..., 1])[..., None, None] * g2

    return (MultiTimeOperatorSpec(0, 2, mass, p1), MultiTimeOperatorSpec(1, 2, mass, p2))


FIXTURES = {
    "free": free_pair,
    "single-particle": single_particle_potentials,
    "pair-potential": pair_potential,
    "scalar-pair": scalar_pair_potential,
}
