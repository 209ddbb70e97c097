"""Evolving a state from surface to surface, one site at a time.

Starting on the flat slice t = 0, each step lifts the time of one lattice
site.  The result is compared with the multi-time wave function restricted
to the same surface; halving the step halves the deviation.
"""
import numpy as np

from multitime import qft, tomonaga
from multitime.experiments import fitted_slope
from multitime.fock import CouplingSpec, FockSpace, LatticeSpec, build_hamiltonian, random_state

lat = LatticeSpec(6, periodic=False)
space = FockSpace(lat, m_max=1, n_max=2)
ham = build_hamiltonian(space, CouplingSpec((0.5, 0.0)))
psi = random_state(space, np.random.default_rng(0), sectors=[(1, 0), (1, 1)])
ip, phi = tomonaga.InteractionPicture(ham), qft.HeisenbergField(ham, psi)

start = tomonaga.DiscreteHypersurface.flat(6, 0.0, 1.0, False)
target = tomonaga.DiscreteHypersurface(tuple(0.4 + 0.03 * i for i in range(6)), 1.0, False)
sectors = [(1, 0), (1, 1), (1, 2)]
sweeps = (4, 8, 16)
devs = []
for s in sweeps:
    for scheme in ("euler", "midpoint"):
        d = tomonaga.ts_vs_multitime(ham, psi, tomonaga.sweep_path(start, target, s), sectors,
                                     scheme=scheme, phi=phi, ip=ip)
        print(f"{s:3d} sweeps, {scheme:>8s}: deviation {d:.3e}")
        if scheme == "euler":
            devs.append(d)
print(f"Euler order: {fitted_slope([1 / s for s in sweeps], devs):.2f}")
