"""Why two-time equations and instantaneous pair potentials do not mix.

For each operator family the commutator of the two partial Hamiltonians is
applied to smooth probe functions at shrinking finite-difference steps and
extrapolated to zero step.  Free motion and external potentials give zero;
a pair potential leaves a finite remainder.
"""
import numpy as np

from multitime import consistency
from multitime.experiments import PROBE_CENTERS

probe = consistency.TestFunctionBundle.random(np.random.default_rng(0), 2, PROBE_CENTERS)
for name, build in consistency.FIXTURES.items():
    report = consistency.richardson_report(*build(), probe, 0.04)
    print(f"{name:>16s}: extrapolated commutator {report.limit:.3e}")
