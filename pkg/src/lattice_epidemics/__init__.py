"""Lattice epidemic processes: exact simulation, coupling, and hydrodynamic-limit checks."""
__version__ = "0.1.0"
