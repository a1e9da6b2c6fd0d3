"""Pseudo-spectral simulation of the 3D stochastic Euler vorticity equation
with Stratonovich transport noise on the periodic torus."""

__version__ = "0.1.0"

from .field import ConfigError, Grid, GridMismatchError, VectorField, abc_field  # noqa: F401
from .kernels import BACKEND as KERNEL_BACKEND  # noqa: F401
