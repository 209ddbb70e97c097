"""Hypersurface evolution in the interaction picture on the lattice.

A discrete surface assigns a time to every lattice site.  ``restrict`` reads
the multi-time function on it, ``interaction_picture_map`` pulls it back to a
flat reference surface with the free one-particle dynamics, and ``ts_step``
advances a single site, which is the elementary Tomonaga-Schwinger move.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .fock import FockSpace, Hamiltonian, _second_quantize, free_propagator
from .qft import HeisenbergField, position_amplitudes
from .spacetime import DomainError


@dataclass(frozen=True)
class DiscreteHypersurface:
    """Site times ``τ_i`` with ``|τ_{i+1} - τ_i| < a`` (wrapping when periodic)."""

    times: tuple
    spacing: float = 1.0
    periodic: bool = True

    def __post_init__(self):
        object.__setattr__(self, "times", tuple(float(t) for t in self.times))
        tau = np.asarray(self.times)
        steps = np.diff(np.append(tau, tau[0])) if self.periodic else np.diff(tau)
        if np.any(np.abs(steps) >= self.spacing):
            raise DomainError("neighbouring site times must differ by less than the spacing")

    @classmethod
    def flat(cls, sites: int, t: float = 0.0, spacing: float = 1.0, periodic: bool = True):
        return cls((t,) * sites, spacing, periodic)

    @property
    def sites(self) -> int:
        return len(self.times)

    def advanced(self, site: int, dt: float) -> "DiscreteHypersurface":
        tau = list(self.times)
        tau[site] += dt
        return DiscreteHypersurface(tuple(tau), self.spacing, self.periodic)

    def is_flat(self) -> bool:
        return len(set(self.times)) == 1


def restrict(phi: HeisenbergField, surface: DiscreteHypersurface, sectors) -> dict:
    """``φ_Σ``: each particle's time is the surface time at its site."""
    L = phi.lattice.sites
    if surface.sites != L:
        raise ValueError("surface and lattice sizes differ")
    out = {}
    for m, n in sectors:
        k = m + n
        if k == 0:
            out[(m, n)] = phi.amplitude(0, 0, [])
            continue
        if surface.is_flat():
            out[(m, n)] = phi.tensor(m, n, [surface.times[0]] * k)
            continue
        arr = np.zeros((2 * L,) * k, dtype=complex)
        for sites in itertools.product(range(L), repeat=k):
            idx = tuple(slice(2 * s, 2 * s + 2) for s in sites)
            arr[idx] = phi.amplitude(m, n, [(surface.times[s], s) for s in sites])
        out[(m, n)] = arr
    return out


def surface_map(h: np.ndarray, surface: DiscreteHypersurface, t0: float = 0.0) -> np.ndarray:
    """One-particle map from data on the flat surface ``t0`` to values on ``surface``."""
    rows = np.repeat(np.asarray(surface.times), 2) - t0
    out = np.empty_like(h, dtype=complex)
    for t in np.unique(rows):
        sel = rows == t
        out[sel] = free_propagator(h, t)[sel]
    return out


def interaction_picture_map(sectors: dict, surface: DiscreteHypersurface, h_x: np.ndarray,
                            h_y: np.ndarray, t0: float = 0.0) -> dict:
    """``ψ̃ = F_{Σ→Σ0} φ_Σ`` sector by sector, one free inverse per slot."""
    inv_x = np.linalg.inv(surface_map(h_x, surface, t0))
    inv_y = np.linalg.inv(surface_map(h_y, surface, t0))
    out = {}
    for (m, n), arr in sectors.items():
        arr = np.asarray(arr, dtype=complex)
        for j in range(m + n):
            u = inv_x if j < m else inv_y
            arr = np.moveaxis(np.tensordot(u, arr, axes=([1], [j])), 0, j)
        out[(m, n)] = arr
    return out


def fock_to_sectors(space: FockSpace, vec: np.ndarray, sectors) -> dict:
    return {(m, n): (np.vdot(space.vacuum(), vec) if m + n == 0 else position_amplitudes(space, vec, m, n))
            for m, n in sectors}


class InteractionPicture:
    """Free evolution per x-number block and the local vertices ``a·H_I``."""

    def __init__(self, ham: Hamiltonian):
        self.ham = ham
        self.space = space = ham.space
        a = space.lattice.spacing
        hy = _second_quantize(ham.h_y, space._y_ann)
        self._ey = np.linalg.eigh(hy.toarray())
        self._ex = [None]
        for m in range(1, space.m_max + 1):
            ann = [space._x_ann[k][m] for k in range(space.lattice.n_modes)]
            self._ex.append(np.linalg.eigh(_second_quantize(ham.h_x, ann).toarray()))
        kmat = ham.cutoff.matrix(space.lattice)
        g = ham.coupling.vector
        self.vertices = []          # vertices[site][m]
        for x in range(space.lattice.sites):
            per_block = [None]
            for m in range(1, space.m_max + 1):
                field = 0
                for xp in range(space.lattice.sites):
                    if kmat[x, xp] == 0:
                        continue
                    for s in range(2):
                        d = space.y_annihilator(2 * xp + s, m)
                        field = field + kmat[x, xp] * (np.conj(g[s]) * d + g[s] * d.conj().T)
                per_block.append((space.x_number_block(x, m) @ field / np.sqrt(a)).tocsr())
            self.vertices.append(per_block)
        self._cache = {}

    def _factor(self, m: int, t: float):
        key = (m, t)
        if key not in self._cache:
            ey, vy = self._ey
            uy = (vy * np.exp(-1j * ey * t)) @ vy.conj().T
            if m == 0:
                ux = np.ones((1, 1))
            else:
                ex, vx = self._ex[m]
                ux = (vx * np.exp(-1j * ex * t)) @ vx.conj().T
            self._cache[key] = (ux, uy)
        return self._cache[key]

    def free(self, vec: np.ndarray, t: float) -> np.ndarray:
        """``e^{-i(H_x + H_y)t}`` on a full Fock vector."""
        out = np.empty_like(vec, dtype=complex)
        for m in range(self.space.m_max + 1):
            s = self.space.block_slice(m)
            ux, uy = self._factor(m, t)
            blk = np.asarray(vec[s]).reshape(ux.shape[0], -1)
            out[s] = (ux @ blk @ uy.T).ravel()
        return out

    def vertex(self, vec: np.ndarray, site: int) -> np.ndarray:
        out = np.zeros_like(vec, dtype=complex)
        for m in range(1, self.space.m_max + 1):
            s = self.space.block_slice(m)
            out[s] = self.vertices[site][m] @ vec[s]
        return out

    def h_i(self, vec: np.ndarray, site: int, t: float) -> np.ndarray:
        """``a·H_I(t, site)`` applied to ``vec``."""
        return self.free(self.vertex(self.free(vec, t), site), -t)


def ts_step(ip: InteractionPicture, psi: np.ndarray, surface: DiscreteHypersurface, site: int,
            dt: float, scheme: str = "euler"):
    """Advance ``site`` by ``dt``: ``ψ̃ - i dt (a H_I) ψ̃``.  Returns ``(ψ̃', Σ')``."""
    new = surface.advanced(site, dt)
    t = surface.times[site]
    if scheme == "euler":
        out = psi - 1j * dt * ip.h_i(psi, site, t)
    elif scheme == "midpoint":
        half = psi - 0.5j * dt * ip.h_i(psi, site, t)
        out = psi - 1j * dt * ip.h_i(half, site, t + 0.5 * dt)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    return out, new


def sweep_path(start: DiscreteHypersurface, target: DiscreteHypersurface, sweeps: int) -> list:
    """``sweeps`` passes over the sites, each advancing every site by ``1/sweeps`` of its total."""
    inc = (np.asarray(target.times) - np.asarray(start.times)) / sweeps
    return [(i, float(inc[i])) for _ in range(sweeps) for i in range(start.sites) if inc[i] != 0]


def evolve_path(ip: InteractionPicture, psi: np.ndarray, surface: DiscreteHypersurface, path,
                scheme: str = "euler"):
    for site, dt in path:
        psi, surface = ts_step(ip, psi, surface, site, dt, scheme)
    return psi, surface


def _max_dev(a: dict, b: dict) -> float:
    return max(float(np.max(np.abs(np.asarray(a[k]) - np.asarray(b[k])))) for k in a)


def ts_vs_multitime(ham: Hamiltonian, state: np.ndarray, path, sectors, scheme: str = "euler",
                    phi: HeisenbergField = None, ip: InteractionPicture = None) -> float:
    """Evolve ``Ψ`` along ``path`` from the flat surface ``t = 0`` and compare with ``F φ_Σ``."""
    ip = ip or InteractionPicture(ham)
    phi = phi or HeisenbergField(ham, state)
    lat = ham.space.lattice
    start = DiscreteHypersurface.flat(lat.sites, 0.0, lat.spacing, lat.periodic)
    psi, surface = evolve_path(ip, np.asarray(state, complex), start, path, scheme)
    expected = interaction_picture_map(restrict(phi, surface, sectors), surface, ham.h_x, ham.h_y)
    return _max_dev(fock_to_sectors(ham.space, psi, sectors), expected)


def composition_defect(ip: InteractionPicture, state: np.ndarray, start: DiscreteHypersurface,
                       middle: DiscreteHypersurface, end: DiscreteHypersurface, sweeps: int,
                       scheme: str = "euler") -> float:
    """``|U_{Σ'}^{Σ''} U_Σ^{Σ'} ψ - U_Σ^{Σ''} ψ|`` with both sides built from site steps."""
    psi = np.asarray(state, complex)
    a, s1 = evolve_path(ip, psi, start, sweep_path(start, middle, sweeps), scheme)
    a, _ = evolve_path(ip, a, s1, sweep_path(middle, end, sweeps), scheme)
    b, _ = evolve_path(ip, psi, start, sweep_path(start, end, 2 * sweeps), scheme)
    return float(np.max(np.abs(a - b)))


# --------------------------------------------------------------------------
# local commutativity of H_I
# --------------------------------------------------------------------------

def safe_columns(space: FockSpace, margin: int = 2) -> np.ndarray:
    """Basis indices whose y number leaves room for ``margin`` creations."""
    ny = space.y_number_operator().diagonal()
    return np.flatnonzero(ny <= space.n_max - margin)


def hi_commutator_norm(ip: InteractionPicture, x: tuple, y: tuple, columns=None) -> float:
    """Largest column norm of ``[aH_I(x), aH_I(y)]`` on truncation-safe basis vectors."""
    space = ip.space
    columns = safe_columns(space) if columns is None else columns
    worst = 0.0
    for c in columns:
        e = np.zeros(space.dim, dtype=complex)
        e[c] = 1.0
        v = ip.h_i(ip.h_i(e, y[1], y[0]), x[1], x[0]) - ip.h_i(ip.h_i(e, x[1], x[0]), y[1], y[0])
        worst = max(worst, float(np.linalg.norm(v)))
    return worst


@dataclass
class TailFit:
    """``A e^{-d/ξ}`` fitted to the one-particle propagator envelope."""

    amplitude: float
    xi: float

    def __call__(self, d):
        return self.amplitude * np.exp(-np.asarray(d, float) / self.xi)


def propagator_tail(h: np.ndarray, sites: int, t: float, periodic: bool = True) -> np.ndarray:
    """Largest ``|e^{-iht}|`` entry between sites at each distance ``d = 0..L/2``."""
    u = np.abs(free_propagator(h, t))
    i = np.arange(2 * sites) // 2
    d = np.abs(i[:, None] - i[None, :])
    if periodic:
        d = np.minimum(d, sites - d)
    return np.array([u[d == k].max() for k in range(sites // 2 + 1)])


def fit_tail(distances, values) -> TailFit:
    slope, icpt = np.polyfit(np.asarray(distances, float), np.log(values), 1)
    return TailFit(float(np.exp(icpt)), float(-1.0 / slope))


def hi_tail_floor(ham: Hamiltonian, dt: float) -> TailFit:
    """Envelope for spacelike ``[aH_I, aH_I]`` at time separation ``|dt|``.

    The commutator of two vertices is a sum of single propagator contractions
    (x or y line) times vertex factors; each vertex is bounded by
    ``|g|·√(N_max+1)/√a`` times the x number, giving the prefactor.
    """
    lat = ham.space.lattice
    d = np.arange(1, lat.sites // 2 + 1)
    tail = np.maximum(propagator_tail(ham.h_x, lat.sites, abs(dt), lat.periodic),
                      propagator_tail(ham.h_y, lat.sites, abs(dt), lat.periodic))[1:]
    fit = fit_tail(d, tail)
    g2 = float(np.sum(np.abs(ham.coupling.vector) ** 2))
    scale = 8.0 * g2 * (ham.space.n_max + 1) * ham.space.m_max**2 / lat.spacing
    bound = max(1.0, float(np.max(tail / fit(d))))     # make the envelope dominate the data
    return TailFit(scale * fit.amplitude * bound, fit.xi)
