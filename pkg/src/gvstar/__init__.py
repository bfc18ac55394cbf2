"""Numerical Frenet geometry of unit vector fields on 3-dimensional charts, the gv* functional
of the associated almost contact metric structure, its first variations and critical points."""

__version__ = "0.1.0"
