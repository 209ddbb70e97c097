"""A lattice emission/absorption model seen as a multi-time wave function.

An x-type fermion emits and absorbs y-type particles.  The Heisenberg
construction gives amplitudes with one time per particle; at equal times
they reproduce the Fock state, off equal times they solve one equation per
particle to second order in the step.
"""
import numpy as np

from multitime import qft
from multitime.fock import CouplingSpec, FockSpace, LatticeSpec, build_hamiltonian, random_state

lat = LatticeSpec(6)
space = FockSpace(lat, m_max=1, n_max=2)
ham = build_hamiltonian(space, CouplingSpec((0.5, 0.2j), 0.0, 0.5))
phi = qft.HeisenbergField(ham, random_state(space, np.random.default_rng(3)))
ops = qft.ModelOperators.from_hamiltonian(ham)
print(f"Fock dimension {space.dim}")

err = qft.equal_time_reduction_check(phi, [0.0, 0.5, 1.0])
print(f"equal-time reduction error: {err:.1e}")

config = qft.Config(((0.3, 0),), ((0.7, 3),))
for h in (0.04, 0.02, 0.01):
    r = qft.multitime_equation_residual(phi, config, "x", 0, h, ops)
    print(f"  step {h:.2f}: x-equation residual {r:.3e}")

print("statistics choices (residual of the consistency sweep):")
for variant in qft.VARIANTS:
    rep = qft.statistics_consistency_experiment(variant)
    print(f"  {variant:>11s}: {rep.max_residual:.2e}")
