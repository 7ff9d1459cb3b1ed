"""Vorticity simulations on the periodic torus, inviscid-limit and splitting
experiments, and discrete Morrey-Campanato norm diagnostics."""

__version__ = "0.1.0"

from .grid import PeriodicGrid, ScalarField, VectorField, make_grid  # noqa: E402,F401
