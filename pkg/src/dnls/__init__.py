"""Cubic derivative nonlinear Schrodinger equations: dissipative structure and asymptotics."""
__version__ = "0.1.0"
