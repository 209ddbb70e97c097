"""Geometry of 1+1 dimensional Minkowski space-time.

Coordinates are ``(t, z)`` with ``c = 1`` and metric signature ``(+, -)``.
Spinors are 2-component; an ``N``-particle amplitude lives in the tensor
product ``(C^2)^{⊗N}`` with particle 1 as the most significant index.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

SIGMA1 = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA2 = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA3 = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY2 = np.eye(2, dtype=complex)

GAMMA0 = SIGMA1.copy()
GAMMA1 = SIGMA1 @ SIGMA3
GAMMAS = (GAMMA0, GAMMA1)

# velocity of each sigma3 eigen-component under H0 = -i sigma3 d/dz
VELOCITIES = (1, -1)


class DomainError(ValueError):
    """Raised when a configuration lies outside the domain of an operation."""


class Classification(enum.Enum):
    SPACELIKE = "spacelike"
    COLLISION = "collision"
    NON_SPACELIKE = "non-spacelike"


@dataclass(frozen=True)
class SpacetimePoint:
    t: float
    z: float

    def __post_init__(self):
        if not (np.isfinite(self.t) and np.isfinite(self.z)):
            raise ValueError("space-time coordinates must be finite")

    def __iter__(self):
        yield self.t
        yield self.z


def interval(p: SpacetimePoint, q: SpacetimePoint) -> float:
    """Minkowski interval ``Δt² - Δz²`` (negative for spacelike pairs)."""
    dt = p.t - q.t
    dz = p.z - q.z
    return dt * dt - dz * dz


def classify_pair(p, q, atol: float = 0.0) -> Classification:
    dt = abs(p[0] - q[0])
    dz = abs(p[1] - q[1])
    if dt <= atol and dz <= atol:
        return Classification.COLLISION
    if dt < dz:
        return Classification.SPACELIKE
    return Classification.NON_SPACELIKE


def classify_configuration(points: Iterable, atol: float = 0.0) -> Classification:
    """Classify a tuple of space-time points.

    Spacelike if every pair is spacelike separated or identical, collision if in
    addition at least one pair coincides, non-spacelike otherwise.
    """
    pts = [tuple(p) for p in points]
    collision = False
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            c = classify_pair(pts[i], pts[j], atol)
            if c is Classification.NON_SPACELIKE:
                return c
            collision |= c is Classification.COLLISION
    return Classification.COLLISION if collision else Classification.SPACELIKE


# --------------------------------------------------------------------------
# Lorentz boosts
# --------------------------------------------------------------------------

BOOST_GENERATOR = np.array([[0.0, -1.0], [-1.0, 0.0]])


@dataclass(frozen=True)
class Boost:
    rapidity: float

    @property
    def matrix(self) -> np.ndarray:
        """Point map on ``(t, z)``."""
        c, s = np.cosh(self.rapidity), np.sinh(self.rapidity)
        return np.array([[c, -s], [-s, c]])

    @property
    def spinor(self) -> np.ndarray:
        return np.diag([np.exp(self.rapidity / 2), np.exp(-self.rapidity / 2)]).astype(complex)

    def inverse(self) -> "Boost":
        return Boost(-self.rapidity)

    def spinor_power(self, n: int) -> np.ndarray:
        """Diagonal of ``S(β)^{⊗n}``."""
        d = np.ones(1)
        s = np.array([np.exp(self.rapidity / 2), np.exp(-self.rapidity / 2)])
        for _ in range(n):
            d = np.kron(d, s)
        return d


def boost_point(b: Boost, p) -> SpacetimePoint:
    t, z = p
    c, s = np.cosh(b.rapidity), np.sinh(b.rapidity)
    return SpacetimePoint(t * c - z * s, z * c - t * s)


def boost_coords(b: Boost, t, z):
    """Vectorized boost of coordinate arrays."""
    c, s = np.cosh(b.rapidity), np.sinh(b.rapidity)
    t = np.asarray(t, dtype=float)
    z = np.asarray(z, dtype=float)
    return t * c - z * s, z * c - t * s


def boost_spinor(b: Boost, amplitude: np.ndarray) -> np.ndarray:
    """Apply ``S(β)^{⊗N}`` along the last axis of ``amplitude`` (length ``2**N``)."""
    amplitude = np.asarray(amplitude, dtype=complex)
    dim = amplitude.shape[-1]
    n = int(round(np.log2(dim)))
    if 2**n != dim:
        raise ValueError(f"spinor dimension {dim} is not a power of 2")
    return amplitude * b.spinor_power(n)


# --------------------------------------------------------------------------
# spin densities
# --------------------------------------------------------------------------

def normal_covector(slope) -> np.ndarray:
    """Future unit normal ``n_mu`` (lower index) of the line ``t = τ(z)`` with ``τ' = slope``.

    Returned with a trailing axis of length 2: ``(n_0, n_1)``.
    """
    slope = np.asarray(slope, dtype=float)
    if np.any(np.abs(slope) >= 1):
        raise DomainError("surface is not spacelike (|slope| >= 1)")
    g = 1.0 / np.sqrt(1.0 - slope * slope)
    return np.stack([g, -g * slope], axis=-1)


def slash_normal(n_cov) -> np.ndarray:
    """``γ^0 γ^μ n_μ`` for each covector; with the Dirac adjoint this gives the density kernel."""
    n_cov = np.asarray(n_cov, dtype=float)
    return n_cov[..., 0, None, None] * IDENTITY2 + n_cov[..., 1, None, None] * (GAMMA0 @ GAMMA1)


def spin_density(amplitude: np.ndarray, normals: Sequence[np.ndarray]) -> np.ndarray:
    """``φ̄ [γ^μ n_μ(x_1) ⊗ ... ⊗ γ^μ n_μ(x_N)] φ`` for arrays of amplitudes.

    ``amplitude`` has shape ``(..., 2**N)``; ``normals[j]`` broadcasts against
    ``amplitude.shape[:-1] + (2,)``.
    """
    amplitude = np.asarray(amplitude, dtype=complex)
    n = len(normals)
    if amplitude.shape[-1] != 2**n:
        raise ValueError("amplitude dimension does not match number of normals")
    batch = amplitude.shape[:-1]
    psi = amplitude.reshape(batch + (2,) * n)
    out = psi
    for j, nc in enumerate(normals):
        m = np.broadcast_to(slash_normal(nc), batch + (2, 2))
        out = np.moveaxis(out, len(batch) + j, -1)
        out = np.einsum("...ab,...b->...a", m.reshape(batch + (1,) * (n - 1) + (2, 2)), out)
        out = np.moveaxis(out, -1, len(batch) + j)
    dens = np.sum(np.conj(psi) * out, axis=tuple(range(len(batch), len(batch) + n)))
    return dens.real


# --------------------------------------------------------------------------
# hypersurfaces
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Hypersurface:
    """Piecewise-linear spacelike graph ``t = τ(z)`` with constant extension.

    ``nodes`` is a sequence of ``(z, t)`` pairs with strictly increasing ``z``.
    """

    nodes: tuple = field(default=((0.0, 0.0),))

    def __post_init__(self):
        nodes = tuple((float(z), float(t)) for z, t in self.nodes)
        if not nodes:
            raise ValueError("a hypersurface needs at least one node")
        zs = np.array([n[0] for n in nodes])
        ts = np.array([n[1] for n in nodes])
        if np.any(np.diff(zs) <= 0):
            raise ValueError("node positions must be strictly increasing")
        if len(nodes) > 1:
            slopes = np.diff(ts) / np.diff(zs)
            if np.any(np.abs(slopes) >= 1):
                raise DomainError("hypersurface is not spacelike: a segment has |slope| >= 1")
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def flat(cls, t: float = 0.0) -> "Hypersurface":
        return cls(((0.0, t),))

    @classmethod
    def from_json(cls, text: str) -> "Hypersurface":
        return cls(tuple(tuple(p) for p in json.loads(text)))

    def to_json(self) -> str:
        return json.dumps([list(p) for p in self.nodes])

    @property
    def z_nodes(self) -> np.ndarray:
        return np.array([n[0] for n in self.nodes])

    @property
    def t_nodes(self) -> np.ndarray:
        return np.array([n[1] for n in self.nodes])

    def time(self, z):
        return np.interp(z, self.z_nodes, self.t_nodes)

    def slope(self, z):
        z = np.asarray(z, dtype=float)
        zn, tn = self.z_nodes, self.t_nodes
        if len(zn) == 1:
            return np.zeros_like(z)
        slopes = np.diff(tn) / np.diff(zn)
        idx = np.searchsorted(zn, z, side="right") - 1
        inside = (idx >= 0) & (idx < len(slopes))
        return np.where(inside, slopes[np.clip(idx, 0, len(slopes) - 1)], 0.0)

    def normal(self, z) -> np.ndarray:
        return normal_covector(self.slope(z))

    def contains(self, p, atol: float = 1e-12) -> bool:
        t, z = p
        return abs(self.time(z) - t) <= atol

    def quadrature(self, lo: float, hi: float, panel: float = 0.25, order: int = 10):
        """Composite Gauss-Legendre nodes on ``[lo, hi]`` split at the kinks.

        Returns ``(z, t, w, n)``: positions, surface times, coordinate weights
        ``dz`` and normal covectors.  The density returned by
        :func:`spin_density` is per unit induced length, so the induced weight
        is ``w * sqrt(1 - slope²)``; :func:`hypersurface_norm` handles that.
        """
        breaks = [lo] + [z for z in self.z_nodes if lo < z < hi] + [hi]
        x, wx = np.polynomial.legendre.leggauss(order)
        zs, ws = [], []
        for a, b in zip(breaks[:-1], breaks[1:]):
            m = max(1, int(np.ceil((b - a) / panel)))
            edges = np.linspace(a, b, m + 1)
            for c, d in zip(edges[:-1], edges[1:]):
                zs.append(0.5 * (d - c) * x + 0.5 * (c + d))
                ws.append(0.5 * (d - c) * wx)
        z = np.concatenate(zs)
        w = np.concatenate(ws)
        return z, self.time(z), w, self.normal(z)

    def line_element(self, z):
        s = self.slope(z)
        return np.sqrt(1.0 - s * s)


def born_density(amplitude, surface: Hypersurface, points, atol: float = 1e-9) -> float:
    """Curved Born density at a configuration lying on ``surface``."""
    pts = [tuple(p) for p in points]
    for p in pts:
        if not surface.contains(p, atol):
            raise DomainError(f"point {p} is not on the hypersurface")
    normals = [surface.normal(p[1]) for p in pts]
    return float(spin_density(np.asarray(amplitude), normals))


def hypersurface_norm(phi, surface: Hypersurface, n_particles: int, window=(-10.0, 10.0),
                      panel: float = 0.25, order: int = 10) -> float:
    """Integral of the curved Born density over ``Σ^N`` (induced length measure).

    ``phi(times, positions)`` receives two lists of ``N`` broadcastable arrays
    and must return amplitudes of shape ``broadcast + (2**N,)``.
    """
    z, t, w, nrm = surface.quadrature(window[0], window[1], panel, order)
    dl = w * surface.line_element(z)
    grids = np.meshgrid(*([np.arange(len(z))] * n_particles), indexing="ij")
    times = [t[g] for g in grids]
    pos = [z[g] for g in grids]
    amp = phi(times, pos)
    dens = spin_density(amp, [nrm[g] for g in grids])
    weight = np.ones_like(dens)
    for g in grids:
        weight = weight * dl[g]
    return float(np.sum(dens * weight))


def sampled_norm(values: np.ndarray, weights: np.ndarray, normals: Sequence[np.ndarray]) -> float:
    """Norm from amplitudes already sampled on a surface grid."""
    return float(np.sum(spin_density(values, normals) * weights))
