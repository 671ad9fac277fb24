"""Numerics for Aubry duality of quasiperiodic Schrodinger operators."""
from .errors import *  # noqa: F401,F403
from .model import Box, Frequency, TrigPotential, build_direct_window, build_dual_window, continued_fraction

__version__ = "0.1.0"
