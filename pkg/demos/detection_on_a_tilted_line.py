"""Detecting particles along a tilted line by a chain of local collapses.

The tilted line is replaced by a staircase of flat pieces.  Collapsing the
state piece by piece reproduces the flux distribution on the line itself as
the staircase is refined.
"""
from multitime import born

for dynamics in ("free1", "bloch2"):
    print(dynamics)
    for r in born.refinement_study(dynamics, 0.2, 3):
        line = f"  eps {r.eps:.3f}: TV {r.tv:.4f}, probability {r.total_probability:.12f}"
        if dynamics == "bloch2":
            # two detectors far apart: the joint outcome should factorize
            line += f", mutual information {r.mutual_information:.1e}"
        print(line)
