"""Flood-time simulator and statistical verifier for mobile agents on torus
grids and road networks."""

from ._backend import BACKEND_NAME

__version__ = "0.1.0"
__all__ = ["BACKEND_NAME", "__version__"]
