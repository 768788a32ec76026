"""Numerical lab for the random walk with binomial catastrophes."""

__version__ = "0.1.0"

from .chain import ModelParams, Trajectory, simulate_trajectory
from .errors import NumericalFault, UnreliableEstimate
from .pmf import Pmf, SeriesResult
