"""Truncated Fock space over a 1-d lattice for x- and y-particles.

Each species has one mode per (site, spin); the mode index is ``2*site + spin``
(site-major, spin-minor).  Lattice field operators are ``a = c/√a`` and
``b = d/√a`` where ``c, d`` are the dimensionless mode operators, so that
``{a(x), a†(x')} = δ_{xx'}/a``.

Fermionic modes use the Jordan-Wigner sign ``(-1)^{Σ_{l<k} n_l}`` within their
species.  The two species commute with each other in every statistics variant.
The y sector is truncated at total number ``n_max``; ``b†`` acting on the top
sector drops the amplitude.

The Hamiltonian conserves the x number, so operators are stored as blocks
labelled by ``M``.  Inside a block the basis is x-configuration major,
y-configuration minor.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply

from .spacetime import SIGMA1, SIGMA3

FERMION = "fermion"
BOSON = "boson"


class ResourceError(ValueError):
    """Requested state space exceeds the dimension budget."""


@dataclass(frozen=True)
class LatticeSpec:
    sites: int
    spacing: float = 1.0
    periodic: bool = True

    def __post_init__(self):
        if self.sites < 2:
            raise ValueError("a lattice needs at least 2 sites")
        if not self.spacing > 0:
            raise ValueError("spacing must be positive")

    @property
    def n_modes(self) -> int:
        return 2 * self.sites

    @property
    def positions(self) -> np.ndarray:
        return self.spacing * np.arange(self.sites)

    def displacement(self, i, j):
        """Signed site displacement ``j - i`` (minimum image when periodic)."""
        d = np.asarray(j) - np.asarray(i)
        if self.periodic:
            d = (d + self.sites // 2) % self.sites - self.sites // 2
        return d

    def distance(self, i, j):
        return np.abs(self.displacement(i, j)) * self.spacing


@dataclass(frozen=True)
class CouplingSpec:
    g: tuple = (0.5, 0.0)
    mass_x: float = 0.0
    mass_y: float = 0.0

    @property
    def vector(self) -> np.ndarray:
        g = np.asarray(self.g, dtype=complex)
        if g.shape != (2,):
            raise ValueError("g must be a 2-spinor")
        return g


@dataclass(frozen=True)
class CutoffProfile:
    """Smearing kernel ``φ_cut`` with ``Σ a φ_cut = 1``.

    ``kind="delta"`` is the lattice delta ``δ/a``; ``kind="gauss"`` is a
    Gaussian of standard deviation ``radius/2`` truncated at ``radius``.
    """

    kind: str = "delta"
    radius: float = 0.0

    @classmethod
    def parse(cls, text: str) -> "CutoffProfile":
        if text == "delta":
            return cls()
        if text.startswith("gauss:"):
            r = float(text.split(":", 1)[1])
            if r <= 0:
                raise ValueError("gauss cutoff radius must be positive")
            return cls("gauss", r)
        raise ValueError(f"unknown cutoff {text!r}; use 'delta' or 'gauss:<r>'")

    def matrix(self, lattice: LatticeSpec) -> np.ndarray:
        """``K[x, x'] = a φ_cut(x' - x)``; each row sums to 1."""
        i = np.arange(lattice.sites)
        dist = lattice.distance(i[:, None], i[None, :])
        if self.kind == "delta":
            return np.eye(lattice.sites)
        if self.kind != "gauss":
            raise ValueError(f"unknown cutoff kind {self.kind}")
        w = np.where(dist <= self.radius + 1e-12, np.exp(-(dist**2) / (2 * (self.radius / 2) ** 2)), 0.0)
        return w / w.sum(axis=1, keepdims=True)

    def support_radius(self, lattice: LatticeSpec) -> float:
        return 0.0 if self.kind == "delta" else self.radius


def dirac_matrix(lattice: LatticeSpec, mass: float, kind: str = "wilson", wilson_r: float = 1.0) -> np.ndarray:
    """One-particle lattice Dirac Hamiltonian on ``2L`` modes.

    ``wilson``: nearest-neighbour symmetric difference for ``-iσ3∂`` plus the
    Wilson term ``-(r a/2) σ1 Δ`` that lifts the doublers.  Hopping is strictly
    local.  ``exact``: ``σ3 k + m σ1`` for ``k`` in the Brillouin zone
    (periodic lattices only); it has no doublers but long-range hopping.
    """
    L, a = lattice.sites, lattice.spacing
    if kind == "wilson":
        shift = np.eye(L, k=1)
        if lattice.periodic:
            shift[L - 1, 0] = 1.0
        deriv = (shift - shift.T) / (2 * a)
        lap = (shift + shift.T - 2 * np.eye(L)) / a**2
        h = -1j * np.kron(deriv, SIGMA3) + np.kron(mass * np.eye(L) - 0.5 * wilson_r * a * lap, SIGMA1)
    elif kind == "exact":
        if not lattice.periodic:
            raise ValueError("exact dispersion requires a periodic lattice")
        k = 2 * np.pi * np.fft.fftfreq(L, d=a)
        f = np.fft.fft(np.eye(L), axis=0) / np.sqrt(L)     # unitary DFT
        kmat = f.conj().T @ np.diag(k) @ f
        h = np.kron(kmat, SIGMA3) + mass * np.kron(np.eye(L), SIGMA1)
    else:
        raise ValueError(f"unknown dispersion {kind!r}")
    return 0.5 * (h + h.conj().T)


def free_propagator(h: np.ndarray, t: float) -> np.ndarray:
    """``exp(-i h t)`` for a one-particle matrix."""
    return sla.expm(-1j * t * h)


# --------------------------------------------------------------------------
# occupation bases
# --------------------------------------------------------------------------

def _configs(n_modes: int, number: int, stats: str):
    if stats == FERMION:
        for modes in itertools.combinations(range(n_modes), number):
            occ = [0] * n_modes
            for m in modes:
                occ[m] = 1
            yield tuple(occ)
    elif stats == BOSON:
        for modes in itertools.combinations_with_replacement(range(n_modes), number):
            occ = [0] * n_modes
            for m in modes:
                occ[m] += 1
            yield tuple(occ)
    else:
        raise ValueError(f"unknown statistics {stats!r}")


def count_configs(n_modes: int, number: int, stats: str) -> int:
    if stats == FERMION:
        return math.comb(n_modes, number)
    return math.comb(n_modes + number - 1, number)


def _annihilation(configs_from, index_to, mode: int, stats: str) -> sp.csr_matrix:
    rows, cols, vals = [], [], []
    for j, occ in enumerate(configs_from):
        n = occ[mode]
        if n == 0:
            continue
        new = list(occ)
        new[mode] -= 1
        i = index_to.get(tuple(new))
        if i is None:
            continue
        if stats == FERMION:
            v = -1.0 if sum(occ[:mode]) % 2 else 1.0
        else:
            v = math.sqrt(n)
        rows.append(i)
        cols.append(j)
        vals.append(v)
    return sp.csr_matrix((vals, (rows, cols)), shape=(len(index_to), len(configs_from)))


class FockSpace:
    """Blocks ``M = 0..m_max`` of x number times all y configurations with ``N ≤ n_max``."""

    def __init__(self, lattice: LatticeSpec, m_max: int = 1, n_max: int = 2,
                 x_stats: str = FERMION, y_stats: str = BOSON, max_dim: int = 6000):
        self.lattice = lattice
        self.m_max = int(m_max)
        self.n_max = int(n_max)
        self.x_stats = x_stats
        self.y_stats = y_stats
        nm = lattice.n_modes
        if x_stats == FERMION and m_max > nm:
            raise ValueError("more fermions than modes")
        ny = sum(count_configs(nm, n, y_stats) for n in range(n_max + 1))
        dims = [count_configs(nm, m, x_stats) * ny for m in range(m_max + 1)]
        if sum(dims) > max_dim:
            raise ResourceError(f"Fock space dimension {sum(dims)} exceeds the budget {max_dim}")
        self.x_configs = [list(_configs(nm, m, x_stats)) for m in range(m_max + 1)]
        self.y_configs = [c for n in range(n_max + 1) for c in _configs(nm, n, y_stats)]
        self.x_index = [{c: i for i, c in enumerate(cs)} for cs in self.x_configs]
        self.y_index = {c: i for i, c in enumerate(self.y_configs)}
        self.y_number = np.array([sum(c) for c in self.y_configs])
        self.block_dims = dims
        self.offsets = np.concatenate([[0], np.cumsum(dims)]).astype(int)
        self.dim = int(self.offsets[-1])

    # ---- basic layout ---------------------------------------------------

    @property
    def n_y(self) -> int:
        return len(self.y_configs)

    def block_slice(self, m: int) -> slice:
        return slice(int(self.offsets[m]), int(self.offsets[m + 1]))

    def index(self, x_occ, y_occ) -> int:
        m = sum(x_occ)
        return int(self.offsets[m] + self.x_index[m][tuple(x_occ)] * self.n_y + self.y_index[tuple(y_occ)])

    def vacuum(self) -> np.ndarray:
        v = np.zeros(self.dim, dtype=complex)
        v[self.index((0,) * self.lattice.n_modes, (0,) * self.lattice.n_modes)] = 1.0
        return v

    def sector_mask(self, m: int, n: int) -> np.ndarray:
        """Boolean mask over the full space selecting sector ``(M, N)``."""
        mask = np.zeros(self.dim, dtype=bool)
        block = np.zeros(self.block_dims[m], dtype=bool).reshape(-1, self.n_y) if self.block_dims[m] else None
        if block is not None:
            block[:, self.y_number == n] = True
            mask[self.block_slice(m)] = block.ravel()
        return mask

    def sector_norms(self, state: np.ndarray) -> dict:
        return {(m, n): float(np.sum(np.abs(state[self.sector_mask(m, n)]) ** 2))
                for m in range(self.m_max + 1) for n in range(self.n_max + 1)}

    # ---- mode operators (dimensionless) ---------------------------------

    @cached_property
    def _y_ann(self):
        return [_annihilation(self.y_configs, self.y_index, k, self.y_stats)
                for k in range(self.lattice.n_modes)]

    @cached_property
    def _x_ann(self):
        out = []
        for k in range(self.lattice.n_modes):
            out.append([None] + [_annihilation(self.x_configs[m], self.x_index[m - 1], k, self.x_stats)
                                 for m in range(1, self.m_max + 1)])
        return out

    def x_annihilator(self, mode: int, m: int) -> sp.csr_matrix:
        """Dimensionless ``c_mode`` from block ``m`` to block ``m - 1``."""
        if m == 0:
            raise ValueError("block 0 has no x-particles")
        return sp.kron(self._x_ann[mode][m], sp.identity(self.n_y), format="csr")

    def y_annihilator(self, mode: int, m: int) -> sp.csr_matrix:
        """Dimensionless ``d_mode`` inside block ``m``."""
        nx = len(self.x_configs[m])
        return sp.kron(sp.identity(nx), self._y_ann[mode], format="csr")

    def x_number_block(self, site: int, m: int) -> sp.csr_matrix:
        """``Σ_r c†c`` on ``site`` inside block ``m``."""
        nx = len(self.x_configs[m])
        d = np.array([occ[2 * site] + occ[2 * site + 1] for occ in self.x_configs[m]], dtype=float)
        return sp.kron(sp.diags(d), sp.identity(self.n_y), format="csr") if nx else sp.csr_matrix((0, 0))

    # ---- full-space lattice field operators -----------------------------

    def _full(self, blocks: dict) -> sp.csr_matrix:
        """Assemble ``{(m_to, m_from): matrix}`` into a full-space sparse matrix."""
        grid = [[None] * (self.m_max + 1) for _ in range(self.m_max + 1)]
        for (mt, mf), mat in blocks.items():
            grid[mt][mf] = mat
        for m in range(self.m_max + 1):
            if grid[m][m] is None:
                grid[m][m] = sp.csr_matrix((self.block_dims[m], self.block_dims[m]))
        return sp.bmat(grid, format="csr")

    def annihilate_x(self, spin: int, site: int) -> sp.csr_matrix:
        """Lattice ``a_spin(site)`` on the full space."""
        k = 2 * site + spin
        scale = 1.0 / np.sqrt(self.lattice.spacing)
        return self._full({(m - 1, m): scale * self.x_annihilator(k, m) for m in range(1, self.m_max + 1)})

    def create_x(self, spin: int, site: int) -> sp.csr_matrix:
        return self.annihilate_x(spin, site).conj().T.tocsr()

    def annihilate_y(self, spin: int, site: int) -> sp.csr_matrix:
        k = 2 * site + spin
        scale = 1.0 / np.sqrt(self.lattice.spacing)
        return self._full({(m, m): scale * self.y_annihilator(k, m) for m in range(self.m_max + 1)})

    def create_y(self, spin: int, site: int) -> sp.csr_matrix:
        """Lattice ``b†``; amplitude pushed above ``n_max`` is dropped."""
        return self.annihilate_y(spin, site).conj().T.tocsr()

    def truncation_loss(self, state: np.ndarray, spin: int, site: int) -> float:
        """Squared norm that ``b†_spin(site)`` would push out of the truncated space."""
        k = 2 * site + spin
        top = self.y_number == self.n_max
        occ = np.array([c[k] for c in self.y_configs])
        weight = np.where(top, occ + 1 if self.y_stats == BOSON else 1 - occ, 0)
        lost = 0.0
        for m in range(self.m_max + 1):
            blk = np.asarray(state[self.block_slice(m)]).reshape(-1, self.n_y)
            lost += float(np.sum(np.abs(blk) ** 2 * weight))
        return lost / self.lattice.spacing

    def x_number(self) -> sp.csr_matrix:
        return sp.diags(np.concatenate([np.full(self.block_dims[m], float(m)) for m in range(self.m_max + 1)]))

    def y_number_operator(self) -> sp.csr_matrix:
        return sp.diags(np.concatenate([np.tile(self.y_number, len(self.x_configs[m])).astype(float)
                                        for m in range(self.m_max + 1)]))


# --------------------------------------------------------------------------
# Hamiltonian and evolution
# --------------------------------------------------------------------------

@dataclass
class Hamiltonian:
    space: FockSpace
    blocks: list            # sparse hermitian block per x number
    h_x: np.ndarray         # one-particle matrices
    h_y: np.ndarray
    coupling: CouplingSpec
    cutoff: CutoffProfile

    def full(self) -> np.ndarray:
        return sla.block_diag(*[b.toarray() for b in self.blocks])

    def full_sparse(self) -> sp.csr_matrix:
        return sp.block_diag(self.blocks, format="csr")

    def hermiticity_defect(self) -> float:
        return max((abs(b - b.conj().T).max() if b.nnz else 0.0) for b in self.blocks)


def _second_quantize(h: np.ndarray, ann: list) -> sp.csr_matrix:
    out = None
    for i in range(h.shape[0]):
        ci_dag = ann[i].conj().T
        for j in range(h.shape[1]):
            if h[i, j] != 0:
                term = h[i, j] * (ci_dag @ ann[j])
                out = term if out is None else out + term
    return out


def build_hamiltonian(space: FockSpace, coupling: CouplingSpec, cutoff: CutoffProfile = CutoffProfile(),
                      dispersion: str = "wilson", h_x: np.ndarray = None, h_y: np.ndarray = None) -> Hamiltonian:
    """``H = Σ c† h_x c + Σ d† h_y d + Σ_x n_x Σ_{x'} K[x,x'] (g*·d(x') + g·d†(x'))/√a``."""
    lat = space.lattice
    a = lat.spacing
    h_x = dirac_matrix(lat, coupling.mass_x, dispersion) if h_x is None else np.asarray(h_x, complex)
    h_y = dirac_matrix(lat, coupling.mass_y, dispersion) if h_y is None else np.asarray(h_y, complex)
    g = coupling.vector
    kmat = cutoff.matrix(lat)
    blocks = []
    for m in range(space.m_max + 1):
        dim = space.block_dims[m]
        hb = sp.csr_matrix((dim, dim), dtype=complex)
        d_ops = [space.y_annihilator(k, m) for k in range(lat.n_modes)]
        hb = hb + _second_quantize(h_y, d_ops)
        if m > 0:
            # c†_i c_j inside block m is (c_i out of m)† (c_j out of m)
            up = [space.x_annihilator(k, m) for k in range(lat.n_modes)]
            hb = hb + _second_quantize(h_x, up)
            if np.any(g != 0):
                for x in range(lat.sites):
                    field = None
                    for xp in range(lat.sites):
                        if kmat[x, xp] == 0:
                            continue
                        for s in range(2):
                            d = d_ops[2 * xp + s]
                            term = kmat[x, xp] * (np.conj(g[s]) * d + g[s] * d.conj().T)
                            field = term if field is None else field + term
                    hb = hb + (space.x_number_block(x, m) @ field) / np.sqrt(a)
        hb = hb.tocsr()
        hb.eliminate_zeros()
        blocks.append(hb)
    return Hamiltonian(space, blocks, h_x, h_y, coupling, cutoff)


class Evolver:
    """``exp(-iHt)`` per block.

    Small blocks use a cached dense eigendecomposition; larger ones use the
    sparse Krylov/Taylor action ``expm_multiply``.
    """

    def __init__(self, ham: Hamiltonian, dense_limit: int = 1200):
        self.ham = ham
        self.space = ham.space
        self.dense_limit = dense_limit
        self._eig = {}

    def eig(self, m: int):
        if m not in self._eig:
            self._eig[m] = np.linalg.eigh(self.ham.blocks[m].toarray())
        return self._eig[m]

    def block(self, m: int, vecs: np.ndarray, t: float) -> np.ndarray:
        """Apply ``exp(-iHt)`` to columns living in block ``m``."""
        vecs = np.asarray(vecs, dtype=complex)
        if t == 0 or vecs.size == 0:
            return vecs
        if self.space.block_dims[m] > self.dense_limit:
            return expm_multiply(-1j * t * self.ham.blocks[m], vecs)
        e, v = self.eig(m)
        coeff = v.conj().T @ vecs
        phase = np.exp(-1j * e * t)
        coeff = phase[:, None] * coeff if coeff.ndim == 2 else phase * coeff
        return v @ coeff

    def evolve(self, state: np.ndarray, t: float) -> np.ndarray:
        out = np.empty(len(state), dtype=complex)
        for m in range(self.space.m_max + 1):
            s = self.space.block_slice(m)
            out[s] = self.block(m, state[s], t)
        return out


def evolve(ham: Hamiltonian, state: np.ndarray, t: float, method: str = "auto") -> np.ndarray:
    """``exp(-iHt) state`` by eigendecomposition (``dense``) or Krylov (``krylov``)."""
    state = np.asarray(state, complex)
    if method == "auto":
        return Evolver(ham).evolve(state, t)
    if method == "dense":
        return Evolver(ham, dense_limit=10**9).evolve(state, t)
    if method == "krylov":
        return Evolver(ham, dense_limit=-1).evolve(state, t)
    raise ValueError(f"unknown method {method!r}")


def free_evolve_F(h: np.ndarray, amplitude: np.ndarray, times_from, times_to, slots=None) -> np.ndarray:
    """Per-slot free evolution of a sector function.

    ``amplitude`` has one axis of length ``2L`` per particle.  Particle ``j``
    is moved from time ``times_from[j]`` to ``times_to[j]`` with the free
    one-particle propagator of ``h`` (a single matrix or one per slot).
    """
    out = np.asarray(amplitude, dtype=complex)
    n = out.ndim
    hs = h if isinstance(h, (list, tuple)) else [h] * n
    for j in range(n) if slots is None else slots:
        dt = times_to[j] - times_from[j]
        if dt == 0:
            continue
        u = free_propagator(hs[j], dt)
        out = np.moveaxis(np.tensordot(u, out, axes=([1], [j])), 0, j)
    return out


def random_state(space: FockSpace, rng: np.random.Generator, sectors=None) -> np.ndarray:
    """Normalized random vector, optionally restricted to a list of ``(M, N)`` sectors."""
    v = rng.normal(size=space.dim) + 1j * rng.normal(size=space.dim)
    if sectors is not None:
        mask = np.zeros(space.dim, dtype=bool)
        for m, n in sectors:
            mask |= space.sector_mask(m, n)
        v = np.where(mask, v, 0)
    return v / np.linalg.norm(v)
