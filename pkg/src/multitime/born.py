"""Detection statistics on a curved surface from iterated collapse in one frame.

A spacelike surface is replaced by horizontal detector pieces at times
``t_j = t_0 + jε``.  The state is evolved from piece to piece; at each piece
the part inside the piece's interval is detected cell by cell and removed,
and the remainder continues unnormalized, so probabilities stay absolute.

The comparison target is the flux of the current through the surface,
``j^0 - τ' j^1`` per unit ``z``, binned on a fixed grid of ``z`` bins.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .spacetime import SIGMA1, SIGMA3, DomainError, Hypersurface, spin_density

# --------------------------------------------------------------------------
# schedule
# --------------------------------------------------------------------------


@dataclass
class DetectionSchedule:
    """Pieces ``(t_j, mask_j)`` over a uniform ``z`` grid."""

    eps: float
    z: np.ndarray
    times: np.ndarray
    masks: np.ndarray          # (levels, n_z) boolean
    level: np.ndarray          # staircase level of each grid point

    @property
    def n_levels(self) -> int:
        return len(self.times)

    def intervals(self, j: int) -> list:
        """Piece ``j`` as a list of ``(z_lo, z_hi)`` runs."""
        m = self.masks[j].astype(int)
        edges = np.flatnonzero(np.diff(np.concatenate([[0], m, [0]])))
        return [(self.z[a], self.z[b - 1]) for a, b in zip(edges[::2], edges[1::2])]


def build_schedule(surface: Hypersurface, eps: float, z: np.ndarray, speed: float = 1.0,
                   t0: float = None, n_levels: int = None) -> DetectionSchedule:
    """Staircase of ``surface`` with vertical spacing ``eps`` on the grid ``z``.

    Grid point ``z`` belongs to level ``round((τ(z) - t_0)/ε)``.  Piece ``j``
    also reaches back a distance ``speed·ε`` into lower levels, so anything
    still undetected at ``t_{j-1}`` (necessarily at a level ``≥ j``) cannot
    slip below the staircase before ``t_j``.  ``t0`` and ``n_levels`` let two
    grids share one set of piece times.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    z = np.asarray(z, float)
    tau = surface.time(z)
    t0 = float(tau.min()) if t0 is None else float(t0)
    level = np.rint((tau - t0) / eps).astype(int)
    if level.min() < 0:
        raise DomainError("surface dips below the first piece time")
    n_levels = int(level.max()) + 1 if n_levels is None else int(n_levels)
    if level.max() >= n_levels:
        raise DomainError("surface rises above the last piece time")
    dz = z[1] - z[0]
    reach = int(np.floor(speed * eps / dz + 1e-9)) + 1
    masks = np.zeros((n_levels, len(z)), dtype=bool)
    for j in range(n_levels):
        ahead = level >= j
        near = np.zeros_like(ahead)
        idx = np.flatnonzero(ahead)
        if idx.size:
            # dilate the region {level ≥ j} by `reach` cells
            kernel = np.ones(2 * reach + 1)
            near = np.convolve(ahead.astype(float), kernel, mode="same") > 0
        masks[j] = (level == j) | (near & (level < j))
    return DetectionSchedule(eps, z, t0 + eps * np.arange(n_levels), masks, level)


def audit_coverage(schedule: DetectionSchedule, n_lines: int = 400, speed: float = 0.999, seed: int = 0) -> int:
    """Count straight timelike worldlines that cross the schedule undetected.

    Each line starts below the first piece inside the central part of the grid
    and moves at constant velocity; it is detected at the first piece whose
    mask contains its position at that time.
    """
    rng = np.random.default_rng(seed)
    z = schedule.z
    dz = z[1] - z[0]
    span = z[-1] - z[0]
    t_span = schedule.times[-1] - schedule.times[0] + schedule.eps
    lo, hi = z[0] + t_span + 0.1 * span, z[-1] - t_span - 0.1 * span
    if hi <= lo:
        raise ValueError("grid too small for the audit")
    misses = 0
    for _ in range(n_lines):
        z0 = rng.uniform(lo, hi)
        v = rng.choice([-speed, speed, rng.uniform(-speed, speed)])
        t_start = schedule.times[0] - 0.5 * schedule.eps
        hit = False
        for j, t in enumerate(schedule.times):
            pos = z0 + v * (t - t_start)
            i = int(round((pos - z[0]) / dz))
            if 0 <= i < len(z) and schedule.masks[j, i]:
                hit = True
                break
        misses += not hit
    return misses


# --------------------------------------------------------------------------
# dynamics
# --------------------------------------------------------------------------


@dataclass
class FreeDirac1D:
    """``H = -iσ3 ∂_z + m σ1`` on a periodic uniform grid, evolved exactly in Fourier space."""

    z: np.ndarray
    mass: float = 1.0
    _k: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.z = np.asarray(self.z, float)
        dz = self.z[1] - self.z[0]
        self._k = 2 * np.pi * np.fft.fftfreq(len(self.z), d=dz)

    def propagator_k(self, t: float) -> np.ndarray:
        """``exp(-iH(k)t)`` per wavenumber, shape ``(n, 2, 2)``."""
        k = self._k
        w = np.sqrt(k * k + self.mass**2)
        hk = k[:, None, None] * SIGMA3 + self.mass * SIGMA1
        c = np.cos(w * t)[:, None, None]
        s = np.where(w > 0, np.sin(w * t) / np.where(w > 0, w, 1), t)[:, None, None]
        return c * np.eye(2) - 1j * s * hk

    def evolve(self, psi: np.ndarray, t: float, axis: int = -2) -> np.ndarray:
        """Evolve along grid ``axis``; the spin axis is the last one."""
        if t == 0:
            return psi
        psi = np.moveaxis(np.asarray(psi, complex), axis, -2)
        f = np.fft.fft(psi, axis=-2)
        f = np.einsum("kab,...kb->...ka", self.propagator_k(t), f)
        return np.moveaxis(np.fft.ifft(f, axis=-2), -2, axis)

    def evaluate(self, psi0: np.ndarray, t, z) -> np.ndarray:
        """``ψ(t, z)`` at arbitrary points from data ``psi0`` at ``t = 0`` (direct Fourier sum)."""
        t = np.atleast_1d(np.asarray(t, float))
        z = np.atleast_1d(np.asarray(z, float))
        f = np.fft.fft(psi0, axis=0) / len(self.z)
        k = self._k
        w = np.sqrt(k * k + self.mass**2)
        hk = k[:, None, None] * SIGMA3 + self.mass * SIGMA1
        out = np.empty((len(z), 2), dtype=complex)
        for i, (ti, zi) in enumerate(zip(t, z)):
            c = np.cos(w * ti)
            s = np.where(w > 0, np.sin(w * ti) / np.where(w > 0, w, 1), ti)
            fk = c[:, None] * f - 1j * s[:, None] * np.einsum("kab,kb->ka", hk, f)
            out[i] = np.exp(1j * k * (zi - self.z[0])) @ fk
        return out


def gaussian_spinor(z, center, width, momentum, spinor=(1.0, 0.0)) -> np.ndarray:
    z = np.asarray(z, float)
    env = np.exp(-((z - center) ** 2) / (4 * width**2) + 1j * momentum * z)
    psi = env[:, None] * np.asarray(spinor, complex)[None, :]
    dz = z[1] - z[0]
    return psi / np.sqrt(np.sum(np.abs(psi) ** 2) * dz)


# --------------------------------------------------------------------------
# iterated collapse
# --------------------------------------------------------------------------


@dataclass
class OneParticleOutcome:
    prob: np.ndarray          # (levels, n_z) detection probability per piece cell
    undetected: float

    @property
    def total(self) -> float:
        return float(self.prob.sum())

    def by_position(self) -> np.ndarray:
        return self.prob.sum(axis=0)


def collapse_one(dyn: FreeDirac1D, psi0: np.ndarray, schedule: DetectionSchedule, t_init: float = 0.0):
    """Exact outcome distribution of the single-particle detection process."""
    dz = dyn.z[1] - dyn.z[0]
    psi, t = np.asarray(psi0, complex), t_init
    prob = np.zeros((schedule.n_levels, len(dyn.z)))
    for j, tj in enumerate(schedule.times):
        if tj < t - 1e-12:
            raise DomainError("initial time lies above the first detector piece")
        psi = dyn.evolve(psi, tj - t)
        t = tj
        m = schedule.masks[j]
        prob[j, m] = np.sum(np.abs(psi[m]) ** 2, axis=-1) * dz
        psi = np.where(m[:, None], 0, psi)
    return OneParticleOutcome(prob, float(np.sum(np.abs(psi) ** 2) * dz))


@dataclass
class TwoParticleOutcome:
    joint: np.ndarray          # (n_z, n_z) detection probability by positions
    undetected: float

    @property
    def total(self) -> float:
        return float(self.joint.sum())


def collapse_two(pair_evolve, single_evolve, psi0: np.ndarray, schedule: DetectionSchedule,
                 cell: float, t_init: float = 0.0, schedule2: DetectionSchedule = None) -> TwoParticleOutcome:
    """Exact enumeration for two distinguishable particles.

    ``psi0`` has shape ``(n, n, 2, 2)``.  ``pair_evolve(ψ, dt)`` evolves the
    undetected two-particle state; ``single_evolve(slot, χ, dt)`` evolves a
    batch ``(b, n, 2)`` of conditional states of the remaining particle.  When
    one particle is found in a cell, the other continues from the
    conditional state for that cell (partial collapse).  ``schedule2``
    gives particle 2 its own masks when its grid differs from particle 1's.
    """
    schedule2 = schedule if schedule2 is None else schedule2
    if not np.allclose(schedule.times, schedule2.times):
        raise ValueError("the two schedules must share piece times")
    n = psi0.shape[0]
    psi, t = np.asarray(psi0, complex), t_init
    joint = np.zeros((n, n))
    pending = []       # conditional single states: (slot, cells, states, time)
    for j, tj in enumerate(schedule.times):
        if tj < t - 1e-12:
            raise DomainError("initial time lies above the first detector piece")
        psi = pair_evolve(psi, tj - t)
        m1, m2 = schedule.masks[j], schedule2.masks[j]
        in1, in2 = np.flatnonzero(m1), np.flatnonzero(m2)
        # advance and detect the conditional single-particle branches
        still = []
        for slot, cells, chi, tc in pending:
            chi = single_evolve(slot, chi, tj - tc)
            m = m2 if slot == 1 else m1
            p = np.sum(np.abs(chi[:, m]) ** 2, axis=-1) * cell    # (b, cells in m)
            if slot == 1:
                joint[np.ix_(cells, in2)] += p
            else:
                joint[np.ix_(in1, cells)] += p.T
            chi = np.where(m[None, :, None], 0, chi)
            still.append((slot, cells, chi, tj))
        pending = still
        t = tj
        w = np.abs(psi) ** 2
        # both particles detected at this piece
        joint[np.ix_(in1, in2)] += w[np.ix_(in1, in2)].sum(axis=(-1, -2)) * cell**2
        # exactly one detected: the other continues conditionally
        out1, out2 = ~m1, ~m2
        if in1.size:
            # particle 1 found in cell c (spin r): particle 2 keeps ψ(c, ·, r, ·)
            chi2 = psi[in1] * out2[None, :, None, None]
            for r in range(2):
                pending.append((1, in1, chi2[:, :, r, :] * np.sqrt(cell), tj))
        if in2.size:
            chi1 = np.swapaxes(psi[:, in2], 0, 1) * out1[None, :, None, None]
            for r in range(2):
                pending.append((2, in2, chi1[:, :, :, r] * np.sqrt(cell), tj))
        psi = psi * (out1[:, None, None, None] & out2[None, :, None, None])
    undetected = float(np.sum(np.abs(psi) ** 2) * cell**2)
    for _, _, chi, _ in pending:
        undetected += float(np.sum(np.abs(chi) ** 2) * cell)
    return TwoParticleOutcome(joint, undetected)


# --------------------------------------------------------------------------
# Born side and comparison
# --------------------------------------------------------------------------


def flux_density(values: np.ndarray, slope) -> np.ndarray:
    """``j^0 - τ' j^1`` per unit ``z`` for one-particle spinors ``(..., 2)``."""
    slope = np.asarray(slope, float)
    g = 1.0 / np.sqrt(1 - slope**2)
    nrm = np.stack([g, -g * slope], axis=-1)
    return spin_density(values, [nrm]) / g


def born_bins(dyn: FreeDirac1D, psi0: np.ndarray, surface: Hypersurface, edges: np.ndarray,
              order: int = 6) -> np.ndarray:
    """Probability of each ``z`` bin on ``surface`` (Gauss-Legendre per bin, split at kinks)."""
    x, w = np.polynomial.legendre.leggauss(order)
    out = np.zeros(len(edges) - 1)
    for b, (lo, hi) in enumerate(zip(edges[:-1], edges[1:])):
        cuts = [lo] + [k for k in surface.z_nodes if lo < k < hi] + [hi]
        for a, c in zip(cuts[:-1], cuts[1:]):
            zq = 0.5 * (c - a) * x + 0.5 * (a + c)
            vals = dyn.evaluate(psi0, surface.time(zq), zq)
            out[b] += np.sum(0.5 * (c - a) * w * flux_density(vals, surface.slope(zq)))
    return out


def bin_by_position(z: np.ndarray, weights: np.ndarray, edges: np.ndarray) -> np.ndarray:
    return np.histogram(z, bins=edges, weights=weights)[0]


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.sum(np.abs(np.asarray(p) - np.asarray(q))))


def mutual_information(joint: np.ndarray) -> float:
    """Mutual information (nats) of a normalized 2-d distribution."""
    p = np.asarray(joint, float)
    p = p / p.sum()
    a, b = p.sum(axis=1), p.sum(axis=0)
    outer = np.outer(a, b)
    nz = p > 0
    return float(np.sum(p[nz] * np.log(p[nz] / outer[nz])))


# --------------------------------------------------------------------------
# scenarios
# --------------------------------------------------------------------------


@dataclass
class Scenario:
    name: str
    surface: Hypersurface
    grid: np.ndarray
    edges: np.ndarray


@dataclass
class BornResult:
    eps: float
    tv: float
    total_probability: float
    mutual_information: float = float("nan")


def cell_grid(n: int, half_width: float) -> np.ndarray:
    """Cell centres, so that cell boundaries fall on multiples of the spacing."""
    dz = 2 * half_width / n
    return -half_width + dz * (np.arange(n) + 0.5)


def free1_scenario(n: int = 2048, half_width: float = 12.8):
    z = cell_grid(n, half_width)
    # corners kept off the cell lattice; a commensurate kink aliases piece edges onto bin edges
    surface = Hypersurface(((-2.9863, 0.5), (3.0137, 3.5)))
    edges = np.linspace(-6.0, 8.0, 29)
    return Scenario("free1", surface, z, edges)


def run_free1(eps: float, scenario: Scenario = None, mass: float = 1.0) -> BornResult:
    sc = scenario or free1_scenario()
    dyn = FreeDirac1D(sc.grid, mass)
    psi0 = gaussian_spinor(sc.grid, 0.0, 0.6, 1.0, (1.0, 0.3))
    sched = build_schedule(sc.surface, eps, sc.grid)
    out = collapse_one(dyn, psi0, sched)
    detected = bin_by_position(sc.grid, out.by_position(), sc.edges)
    born = born_bins(dyn, psi0, sc.surface, sc.edges)
    return BornResult(eps, total_variation(detected, born), out.total + out.undetected)


def bloch_scenario(n: int = 512, half_width: float = 10.24):
    z = cell_grid(n, half_width)
    # horizontal near each packet, joined by a spacelike ramp
    surface = Hypersurface(((-1.5, 0.6), (1.5, 1.5)))
    edges = np.linspace(-8.0, 8.0, 17)
    return Scenario("bloch2", surface, z, edges)


def run_bloch2(eps: float, scenario: Scenario = None, mass: float = 1.0) -> BornResult:
    """Two distinguishable free particles confined to the two flat parts of the surface."""
    sc = scenario or bloch_scenario()
    dyn = FreeDirac1D(sc.grid, mass)
    cell = sc.grid[1] - sc.grid[0]
    a = gaussian_spinor(sc.grid, -4.5, 0.5, 0.5, (1.0, 0.2))
    b = gaussian_spinor(sc.grid, 4.5, 0.5, -0.5, (0.3, 1.0))
    psi0 = np.einsum("ir,js->ijrs", a, b)
    sched = build_schedule(sc.surface, eps, sc.grid)

    def pair(psi, dt):
        if dt == 0:
            return psi
        psi = dyn.evolve(psi, dt, axis=1)                      # (z1, z2, r1, r2): z2 with r2
        psi = dyn.evolve(psi.transpose(1, 3, 0, 2), dt)       # (z2, r2, z1, r1): z1 with r1
        return psi.transpose(2, 0, 3, 1)

    def single(slot, chi, dt):
        return dyn.evolve(chi, dt, axis=1)

    out = collapse_two(pair, single, psi0, sched, cell)
    joint = _bin2(sc.grid, out.joint, sc.edges)
    born = np.outer(born_bins(dyn, a, sc.surface, sc.edges), born_bins(dyn, b, sc.surface, sc.edges))
    return BornResult(eps, total_variation(joint, born), out.total + out.undetected, mutual_information(joint))


def _bin2(z, joint, edges):
    idx = np.digitize(z, edges) - 1
    nb = len(edges) - 1
    ok = (idx >= 0) & (idx < nb)
    out = np.zeros((nb, nb))
    np.add.at(out, (idx[ok][:, None], idx[ok][None, :]), joint[np.ix_(ok, ok)])
    return out


def pair_flux_density(values: np.ndarray, slope1, slope2) -> np.ndarray:
    """Two-particle flux per ``dz1 dz2`` for components ordered ``(+,+), (+,-), (-,+), (-,-)``."""
    f1 = 1 - np.asarray(slope1, float)[..., None] * np.array([1.0, -1.0])
    f2 = 1 - np.asarray(slope2, float)[..., None] * np.array([1.0, -1.0])
    w = np.einsum("...a,...b->...ab", f1, f2).reshape(np.shape(values))
    return np.sum(w * np.abs(values) ** 2, axis=-1)


def zerorange_born_bins(model, surface: Hypersurface, edges: np.ndarray, order: int = 6) -> np.ndarray:
    """Binned ``|φ_Σ|²`` flux of an exact zero-range solution over ``z1 × z2`` bins."""
    x, w = np.polynomial.legendre.leggauss(order)
    nb = len(edges) - 1
    nodes, weights, owner = [], [], []
    for b, (lo, hi) in enumerate(zip(edges[:-1], edges[1:])):
        cuts = [lo] + [k for k in surface.z_nodes if lo < k < hi] + [hi]
        for a, c in zip(cuts[:-1], cuts[1:]):
            nodes.append(0.5 * (c - a) * x + 0.5 * (a + c))
            weights.append(0.5 * (c - a) * w)
            owner.append(np.full(order, b))
    zq, wq, bq = (np.concatenate(v) for v in (nodes, weights, owner))
    tq, sq = surface.time(zq), surface.slope(zq)
    z1, z2 = zq[:, None], zq[None, :]
    # the diagonal has measure zero; pick one side there
    vals = model.evaluate(tq[:, None], z1, tq[None, :], z2, side=1)
    dens = pair_flux_density(vals, sq[:, None], sq[None, :]) * np.outer(wq, wq)
    out = np.zeros((nb, nb))
    np.add.at(out, (bq[:, None], bq[None, :]), dens)
    return out


def zerorange_scenario(n: int = 1040, half_width: float = 13.0):
    z = cell_grid(n, half_width)
    # the packets collide near t = 2.5 and are detected afterwards
    surface = Hypersurface(((-3.0137, 3.0), (2.9863, 6.0)))
    edges = np.linspace(-10.0, 10.0, 21)
    return Scenario("zerorange", surface, z, edges)


def run_zerorange(eps: float, scenario: Scenario = None, theta: float = np.pi / 2) -> BornResult:
    """Two interacting massless particles; single-time evolution by the zero-range lattice scheme.

    Particle 2 lives on the grid shifted by half a cell, so ``eps`` must be a
    multiple of the cell size.
    """
    from .zerorange import GaussianPacket, ProductData, ZeroRangeModel, lattice_step

    sc = scenario or zerorange_scenario()
    z1 = sc.grid
    dz = z1[1] - z1[0]
    z2 = z1 + 0.5 * dz
    per = eps / dz
    if abs(per - round(per)) > 1e-9:
        raise ValueError("eps must be a multiple of the grid spacing")
    model = ZeroRangeModel(theta, ProductData(GaussianPacket(-2.5, 0.4, 0.0, (1.0, 0.4)),
                                              GaussianPacket(2.5, 0.4, 0.0, (0.4, 1.0))))
    t0 = float(min(sc.surface.time(z1).min(), sc.surface.time(z2).min()))
    top = float(max(sc.surface.time(z1).max(), sc.surface.time(z2).max()))
    levels = int(np.rint((top - t0) / eps)) + 1
    s1 = build_schedule(sc.surface, eps, z1, t0=t0, n_levels=levels)
    s2 = build_schedule(sc.surface, eps, z2, t0=t0, n_levels=levels)
    psi0 = model.equal_time_slice(t0, z1, z2).reshape(len(z1), len(z2), 2, 2)
    psi0 /= np.sqrt(np.sum(np.abs(psi0) ** 2) * dz * dz)

    def pair(psi, dt):
        k = int(round(dt / dz))
        if k == 0:
            return psi
        return lattice_step(psi.reshape(psi.shape[:2] + (4,)), theta, k).reshape(psi.shape)

    def single(slot, chi, dt):
        # free massless motion: upper component right, lower component left
        k = int(round(dt / dz))
        if k == 0:
            return chi
        out = np.zeros_like(chi)
        out[:, k:, 0] = chi[:, :-k, 0]
        out[:, :-k, 1] = chi[:, k:, 1]
        return out

    out = collapse_two(pair, single, psi0, s1, dz, t_init=t0, schedule2=s2)
    nb = len(sc.edges) - 1
    i1 = np.digitize(z1, sc.edges) - 1
    i2 = np.digitize(z2, sc.edges) - 1
    ok1, ok2 = (i1 >= 0) & (i1 < nb), (i2 >= 0) & (i2 < nb)
    joint = np.zeros((nb, nb))
    np.add.at(joint, (i1[ok1][:, None], i2[ok2][None, :]), out.joint[np.ix_(ok1, ok2)])
    born = zerorange_born_bins(model, sc.surface, sc.edges)
    return BornResult(eps, total_variation(joint, born), out.total + out.undetected, mutual_information(joint))


SCENARIOS = {"free1": run_free1, "bloch2": run_bloch2, "zerorange": run_zerorange}


def refinement_study(dynamics: str, eps0: float = 0.2, refinements: int = 3) -> list:
    run = SCENARIOS[dynamics]
    return [run(eps0 / 2**k) for k in range(refinements)]
