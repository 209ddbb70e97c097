"""Multi-time Fock function of the emission-absorption model on a lattice.

The multi-time function is built from Heisenberg-picture operators,

    φ^{(M,N)}(x_1..x_M, y_1..y_N)
        = s_M / √(M! N!) · ⟨∅| a(x_1)···a(x_M) b(y_1)···b(y_N) |Ψ⟩,

with ``a(t, q) = e^{iHt} a(q) e^{-iHt}`` and ``s_M = (-1)^{M(M-1)/2}`` for
fermionic x (``1`` for bosonic x).  Points are ``(time, site)`` pairs; every
amplitude carries one spin axis per particle, or a full mode axis of length
``2L`` when the site is ``None``.

Products are evaluated right to left.  With ops ``o_1..o_K`` at times
``τ_1..τ_K``, ``R_K = o_K e^{-iHτ_K} Ψ`` and
``R_p = o_p e^{-iH(τ_p - τ_{p+1})} R_{p+1}``.  The vacuum is an eigenvector of
``H`` with eigenvalue 0, so ``φ ∝ ⟨e^{iH(τ_1-τ_2)} o_1† ∅ | R_2⟩``.  Partial
products are cached by their operator suffix.

The x-particle operators ``H_{x_j}`` and ``H_{y_k}`` act on such functions and
can be composed, which is how the equation residuals, the splitting
comparison and the commutator experiment are evaluated.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg as sla

from .fock import (BOSON, FERMION, CouplingSpec, CutoffProfile, Evolver, FockSpace, Hamiltonian,
                   LatticeSpec, build_hamiltonian, random_state)

X, Y = "x", "y"


def prefactor(m: int, n: int, x_stats: str = FERMION) -> float:
    sign = (-1) ** (m * (m - 1) // 2) if x_stats == FERMION else 1
    return sign / math.sqrt(math.factorial(m) * math.factorial(n))


def _modes(site: Optional[int], sites: int) -> list:
    return list(range(2 * sites)) if site is None else [2 * site, 2 * site + 1]


def _perm_sign(perm) -> int:
    perm = list(perm)
    sign = 1
    for i in range(len(perm)):
        while perm[i] != i:
            j = perm[i]
            perm[i], perm[j] = perm[j], perm[i]
            sign = -sign
    return sign


def position_amplitudes(space: FockSpace, state: np.ndarray, m: int, n: int) -> np.ndarray:
    """Sector ``(m, n)`` of a Fock vector as a tensor over ``2L`` modes per particle.

    Independent of the operator construction: reads basis coefficients
    directly.  Basis states are ``Π_k (c†_k)^{n_k}/√(n_k!)`` applied in
    ascending mode order, so an ascending argument list picks up
    ``√(Π n!)`` and, for fermionic y, ``(-1)^{N(N-1)/2}``.
    """
    lat = space.lattice
    nm = lat.n_modes
    out = np.zeros((nm,) * (m + n), dtype=complex)
    if m > space.m_max or n > space.n_max:
        return out
    blk = np.asarray(state[space.block_slice(m)]).reshape(-1, space.n_y)
    norm = lat.spacing ** (-(m + n) / 2) / math.sqrt(math.factorial(m) * math.factorial(n))
    ysign = (-1) ** (n * (n - 1) // 2) if space.y_stats == FERMION else 1
    ycols = np.flatnonzero(space.y_number == n)

    def expand(occ):
        return [k for k, c in enumerate(occ) for _ in range(c)]

    def arrangements(modes, stats):
        seen = set()
        for p in itertools.permutations(range(len(modes))):
            key = tuple(modes[i] for i in p)
            if key in seen:
                continue
            seen.add(key)
            yield key, (_perm_sign(p) if stats == FERMION else 1)

    y_arr = {}
    for yi in ycols:
        occ = space.y_configs[yi]
        y_arr[yi] = (list(arrangements(expand(occ), space.y_stats)),
                     math.sqrt(math.prod(math.factorial(c) for c in occ)))
    for xi, xocc in enumerate(space.x_configs[m]):
        xw = math.sqrt(math.prod(math.factorial(c) for c in xocc))
        x_arr = list(arrangements(expand(xocc), space.x_stats))
        for yi in ycols:
            c = blk[xi, yi]
            if c == 0:
                continue
            yl, yw = y_arr[yi]
            base = c * norm * xw * yw * ysign
            for xk, xs in x_arr:
                for yk, ys in yl:
                    out[xk + yk] = base * xs * ys
    return out


class HeisenbergField:
    """``φ`` of a fixed Heisenberg state ``Ψ``; see the module docstring."""

    def __init__(self, ham: Hamiltonian, state: np.ndarray, evolver: Evolver = None):
        self.ham = ham
        self.space = ham.space
        self.state = np.asarray(state, dtype=complex)
        self.evolver = evolver or Evolver(ham)
        self._right_cache = {}
        self._left_cache = {}
        a = self.space.lattice.spacing
        self._ann = {X: lambda k, m: self.space.x_annihilator(k, m) / math.sqrt(a),
                     Y: lambda k, m: self.space.y_annihilator(k, m) / math.sqrt(a)}

    @property
    def lattice(self) -> LatticeSpec:
        return self.space.lattice

    def _check_sector(self, m, n):
        if m > self.space.m_max or m < 0 or n < 0:
            raise ValueError(f"sector ({m}, {n}) outside the truncated space")

    def _right(self, m: int, ops: tuple):
        """``(block, columns)`` for the operator suffix ``ops``."""
        key = (m, ops)
        if key in self._right_cache:
            return self._right_cache[key]
        if not ops:
            out = (m, self.state[self.space.block_slice(m)][:, None])
        else:
            (kind, t, site), rest = ops[0], ops[1:]
            blk, cols = self._right(m, rest)
            t_next = rest[0][1] if rest else 0.0
            cols = self.evolver.block(blk, cols, t - t_next)
            new_blk = blk - 1 if kind == X else blk
            if new_blk < 0:
                out = (0, np.zeros((self.space.block_dims[0], 0)))
            else:
                mats = [self._ann[kind](k, blk) for k in _modes(site, self.lattice.sites)]
                out = (new_blk, np.hstack([op @ cols for op in mats]))
        self._right_cache[key] = out
        return out

    def _left(self, kind: str, site, dt: float):
        """Rows ``⟨∅| o e^{-iH dt}`` for every mode of ``site``."""
        key = (kind, site, dt)
        if key not in self._left_cache:
            blk = 1 if kind == X else 0
            vac = np.zeros(self.space.block_dims[0], dtype=complex)
            vac[self.space.index((0,) * self.lattice.n_modes, (0,) * self.lattice.n_modes)] = 1.0
            kets = np.stack([(self._ann[kind](k, blk).conj().T @ vac) if kind == X
                             else (self._ann[kind](k, 0).conj().T @ vac)
                             for k in _modes(site, self.lattice.sites)], axis=1)
            kets = self.evolver.block(blk, kets, -dt)
            self._left_cache[key] = kets.conj().T
        return self._left_cache[key]

    def amplitude(self, m: int, n: int, points) -> np.ndarray:
        """``φ^{(m,n)}`` at ``points = [(t, site), ...]`` (x points first)."""
        self._check_sector(m, n)
        points = [(float(t), None if s is None else int(s)) for t, s in points]
        if len(points) != m + n:
            raise ValueError("need one point per particle")
        shape = tuple(2 * self.lattice.sites if s is None else 2 for _, s in points)
        if n > self.space.n_max:
            return np.zeros(shape, dtype=complex)
        ops = tuple((X if i < m else Y, t, s) for i, (t, s) in enumerate(points))
        pre = prefactor(m, n, self.space.x_stats)
        if not ops:
            vac = self.space.vacuum()
            return np.asarray(pre * np.vdot(vac, self.state))
        blk, cols = self._right(m, ops[1:])
        t_next = ops[1][1] if len(ops) > 1 else 0.0
        kind, t0, s0 = ops[0]
        want = 1 if kind == X else 0
        if blk != want or cols.shape[1] == 0:
            return np.zeros(shape, dtype=complex)
        vals = self._left(kind, s0, t0 - t_next) @ cols
        return pre * vals.reshape(shape)

    def tensor(self, m: int, n: int, times) -> np.ndarray:
        """``φ^{(m,n)}`` over all positions with per-particle ``times``."""
        return self.amplitude(m, n, [(t, None) for t in times])

    __call__ = amplitude


def heisenberg_phi(ham: Hamiltonian, state: np.ndarray, m: int, n: int, points) -> np.ndarray:
    return HeisenbergField(ham, state).amplitude(m, n, points)


# --------------------------------------------------------------------------
# multi-time operators acting on functions (m, n, points) -> array
# --------------------------------------------------------------------------

@dataclass
class ModelOperators:
    """One-particle data needed to apply ``H_{x_j}`` and ``H_{y_k}``."""

    h_x: np.ndarray
    h_y: np.ndarray
    g: np.ndarray
    kmat: np.ndarray
    spacing: float
    n_max: int
    y_stats: str = BOSON
    _green: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_hamiltonian(cls, ham: Hamiltonian) -> "ModelOperators":
        sp_ = ham.space
        return cls(ham.h_x, ham.h_y, ham.coupling.vector, ham.cutoff.matrix(sp_.lattice),
                   sp_.lattice.spacing, sp_.n_max, sp_.y_stats)

    @property
    def sites(self) -> int:
        return self.kmat.shape[0]

    def green(self, dt: float, site: int) -> np.ndarray:
        """``G_cut(dt, · - x)`` for the x-particle at ``site``: a vector over y modes."""
        key = (dt, site)
        if key not in self._green:
            src = np.kron(self.kmat[site], self.g) / self.spacing
            self._green[key] = src if dt == 0 else sla.expm(-1j * dt * self.h_y) @ src
        return self._green[key]

    def creation_weights(self, site: int) -> np.ndarray:
        """``K[x, x'] g*_s`` over y modes ``2x' + s``."""
        return np.kron(self.kmat[site], np.conj(self.g))


def _slot_apply(h, f, axis, site, sites):
    rows = _modes(site, sites)
    return np.moveaxis(np.tensordot(h[rows, :], f, axes=([1], [axis])), 0, axis)


def _drop(points, i):
    return points[:i] + points[i + 1:]


def apply_hx(ops: ModelOperators, func: Callable, j: int, green_term: bool = True) -> Callable:
    """``H_{x_j}`` with the annihilation (Green's function) term, or without it."""

    def out(m, n, points):
        points = list(points)
        t, site = points[j]
        if site is None:
            raise ValueError("the acting particle needs a definite site")
        pts = points.copy()
        pts[j] = (t, None)
        res = _slot_apply(ops.h_x, func(m, n, pts), j, site, ops.sites)
        if n + 1 <= ops.n_max:
            # new y-particle at the x-particle's time, placed first among the y's
            pts = points[:m] + [(t, None)] + points[m:]
            f = func(m, n + 1, pts)
            res = res + math.sqrt(n + 1) * np.tensordot(f, ops.creation_weights(site), axes=([m], [0]))
        if green_term and n > 0:
            res = res + _green_terms(ops, func, m, n, points, [j], list(range(n)))
        return res

    return out


def apply_hy(ops: ModelOperators, func: Callable, k: int, green_term: bool = False) -> Callable:
    """``H_{y_k}``: free, or with the relocated Green's function term."""

    def out(m, n, points):
        points = list(points)
        t, site = points[m + k]
        pts = points.copy()
        pts[m + k] = (t, None)
        res = _slot_apply(ops.h_y, func(m, n, pts), m + k, site, ops.sites)
        if green_term:
            res = res + _green_terms(ops, func, m, n, points, list(range(m)), [k], signed=False)
        return res

    return out


def _green_terms(ops, func, m, n, points, xs, ks, signed=True):
    total = 0.0
    for j in xs:
        tx, sx = points[j]
        for k in ks:
            ty, sy = points[m + k]
            gvec = ops.green(ty - tx, sx)[_modes(sy, ops.sites)]
            sign = (-1) ** k if (signed and ops.y_stats == FERMION) else 1
            f = func(m, n - 1, _drop(points, m + k))
            total = total + sign / math.sqrt(n) * np.moveaxis(np.multiply.outer(f, gvec), -1, m + k)
    return total


# --------------------------------------------------------------------------
# checks
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Config:
    """A multi-time configuration: ``x`` and ``y`` lists of ``(time, site)``."""

    x: tuple
    y: tuple = ()

    @property
    def m(self):
        return len(self.x)

    @property
    def n(self):
        return len(self.y)

    @property
    def points(self):
        return list(self.x) + list(self.y)

    def min_separation(self, lattice: LatticeSpec) -> float:
        sites = [s for _, s in self.points]
        if len(sites) < 2:
            return math.inf
        return min(float(lattice.distance(a, b)) for a, b in itertools.combinations(sites, 2))

    def is_spacelike(self, lattice: LatticeSpec) -> bool:
        """Lattice criterion: distinct points have ``|Δt| < distance``."""
        for (ta, sa), (tb, sb) in itertools.combinations(self.points, 2):
            d = float(lattice.distance(sa, sb))
            if (ta, sa) != (tb, sb) and not abs(ta - tb) < d:
                return False
        return True

    def shifted(self, which: str, idx: int, dt: float) -> "Config":
        lst = list(self.x if which == X else self.y)
        t, s = lst[idx]
        lst[idx] = (t + dt, s)
        return Config(tuple(lst), self.y) if which == X else Config(self.x, tuple(lst))


def multitime_equation_residual(phi: HeisenbergField, config: Config, which: str, idx: int,
                                dt: float, ops: ModelOperators = None) -> float:
    """Max over spins of ``|i D_t φ - H φ|`` with a central difference of step ``dt``."""
    lat = phi.lattice
    ops = ops or ModelOperators.from_hamiltonian(phi.ham)
    if not config.is_spacelike(lat):
        raise ValueError("configuration is not spacelike")
    for sgn in (-1, 1):
        if not config.shifted(which, idx, sgn * dt).is_spacelike(lat):
            raise ValueError("difference stencil leaves the spacelike set")
    m, n = config.m, config.n
    plus = phi(m, n, config.shifted(which, idx, dt).points)
    minus = phi(m, n, config.shifted(which, idx, -dt).points)
    lhs = 1j * (plus - minus) / (2 * dt)
    op = apply_hx(ops, phi, idx) if which == X else apply_hy(ops, phi, idx)
    return float(np.max(np.abs(lhs - op(m, n, config.points))))


def splitting_equivalence_residual(phi: HeisenbergField, config: Config, ops: ModelOperators = None) -> float:
    """``Σ_j |H_{x_j}φ - H^alt_{x_j}φ| + Σ_k |H_{y_k}φ - H^alt_{y_k}φ|`` at ``config``."""
    ops = ops or ModelOperators.from_hamiltonian(phi.ham)
    m, n, pts = config.m, config.n, config.points
    total = 0.0
    for j in range(m):
        d = apply_hx(ops, phi, j)(m, n, pts) - apply_hx(ops, phi, j, green_term=False)(m, n, pts)
        total += float(np.max(np.abs(d)))
    for k in range(n):
        d = apply_hy(ops, phi, k)(m, n, pts) - apply_hy(ops, phi, k, green_term=True)(m, n, pts)
        total += float(np.max(np.abs(d)))
    return total


def equal_time_reduction_check(phi: HeisenbergField, times, sectors=None) -> float:
    """Max ``|φ(all times = t) - amplitudes of e^{-iHt}Ψ|`` over ``times`` and sectors."""
    space = phi.space
    sectors = sectors or [(m, n) for m in range(space.m_max + 1) for n in range(space.n_max + 1)]
    worst = 0.0
    for t in times:
        psi_t = phi.evolver.evolve(phi.state, t)
        for m, n in sectors:
            if m + n == 0:
                a = phi.amplitude(0, 0, [])
                b = np.vdot(space.vacuum(), psi_t)
            else:
                a = phi.tensor(m, n, [t] * (m + n))
                b = position_amplitudes(space, psi_t, m, n)
            worst = max(worst, float(np.max(np.abs(a - b))))
    return worst


def truncation_leak(ham: Hamiltonian, state: np.ndarray, times) -> float:
    """Largest weight in the top y sector along ``e^{-iHt}Ψ``."""
    space = ham.space
    ev = Evolver(ham)
    top = np.zeros(space.dim, dtype=bool)
    for m in range(space.m_max + 1):
        top |= space.sector_mask(m, space.n_max)
    return max(float(np.sum(np.abs(ev.evolve(state, t)[top]) ** 2)) for t in times)


def permutation_defect(phi: HeisenbergField, config: Config) -> float:
    """Deviation from (anti)symmetry under swapping the first two x and first two y points."""
    m, n, pts = config.m, config.n, config.points
    base = phi(m, n, pts)
    worst = 0.0
    if m >= 2:
        swapped = [pts[1], pts[0]] + pts[2:]
        sign = -1 if phi.space.x_stats == FERMION else 1
        worst = max(worst, float(np.max(np.abs(np.swapaxes(phi(m, n, swapped), 0, 1) - sign * base))))
    if n >= 2:
        swapped = pts[:m] + [pts[m + 1], pts[m]] + pts[m + 2:]
        sign = -1 if phi.space.y_stats == FERMION else 1
        worst = max(worst, float(np.max(np.abs(np.swapaxes(phi(m, n, swapped), m, m + 1) - sign * base))))
    return worst


@dataclass
class CommutatorCheck:
    config: Config
    residual: float
    creation_part: float
    scale: float


def qft_commutator_check(phi: HeisenbergField, config: Config, ops: ModelOperators = None) -> CommutatorCheck:
    """``[H_{x_1}, H_{x_2}] φ`` at a two-x configuration (time derivatives commute with both)."""
    ops = ops or ModelOperators.from_hamiltonian(phi.ham)
    if config.m < 2:
        raise ValueError("need two x-particles")
    m, n, pts = config.m, config.n, config.points
    h1, h2 = (lambda f: apply_hx(ops, f, 0)), (lambda f: apply_hx(ops, f, 1))
    full = h1(h2(phi))(m, n, pts) - h2(h1(phi))(m, n, pts)
    nog = lambda f, j: apply_hx(ops, f, j, green_term=False)
    creation = nog(nog(phi, 1), 0)(m, n, pts) - nog(nog(phi, 0), 1)(m, n, pts)
    scale = float(np.max(np.abs(h1(h2(phi))(m, n, pts)))) or 1.0
    return CommutatorCheck(config, float(np.max(np.abs(full))), float(np.max(np.abs(creation))), scale)


VARIANTS = {
    "y-bosonic": (FERMION, BOSON),
    "y-fermionic": (FERMION, FERMION),
    "x-bosonic": (BOSON, BOSON),
}


@dataclass
class StatisticsReport:
    variant: str
    max_residual: float
    witness: Optional[Config]
    residuals: list

    def passes(self, tol: float) -> bool:
        return self.max_residual < tol


def sweep_configs(lattice: LatticeSpec, times=(0.0, 0.4, 0.9)) -> list:
    """Equal-time two-x configurations at every pair of distinct sites."""
    out = []
    for t in times:
        for a, b in itertools.combinations(range(lattice.sites), 2):
            out.append(Config(((t, a), (t, b))))
    return out


def statistics_consistency_experiment(variant: str, sites: int = 4, n_max: int = 2,
                                      g=(0.5, 0.3j), seed: int = 0, configs=None) -> StatisticsReport:
    """Relative commutator residual of the x-equations for one statistics variant.

    The residual at each configuration is normalized by ``|H_{x_1}H_{x_2}φ|``.
    """
    x_stats, y_stats = VARIANTS[variant]
    lat = LatticeSpec(sites)
    space = FockSpace(lat, m_max=2, n_max=n_max, x_stats=x_stats, y_stats=y_stats)
    ham = build_hamiltonian(space, CouplingSpec(g, 0.0, 0.5))
    state = random_state(space, np.random.default_rng(seed), sectors=[(2, k) for k in range(n_max + 1)])
    phi = HeisenbergField(ham, state)
    ops = ModelOperators.from_hamiltonian(ham)
    results = [qft_commutator_check(phi, c, ops) for c in (configs or sweep_configs(lat))]
    rel = [r.residual / r.scale for r in results]
    i = int(np.argmax(rel))
    return StatisticsReport(variant, rel[i], results[i].config, rel)
