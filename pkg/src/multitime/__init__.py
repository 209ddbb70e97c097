"""Multi-time wave functions: zero-range pairs, a lattice emission-absorption model and detection on curved surfaces."""

__version__ = "0.1.0"
