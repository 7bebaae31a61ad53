"""Hard-sphere gas on the unit torus: equilibrium sampling, event-driven
dynamics, fluctuation fields, and the low-density limit machinery."""

__version__ = "0.1.0"

from ._backend import USING_NUMBA, backend_name
