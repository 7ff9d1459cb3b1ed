"""Named initial vorticities used by the experiments."""
from __future__ import annotations

import math

import numpy as np
from scipy.special import j1

from .grid import PeriodicGrid, ScalarField, sample_function, spectral_ops, torus_delta


def taylor_green(grid: PeriodicGrid, amplitude: float = 1.0) -> ScalarField:
    return sample_function(grid, lambda x, y: -2 * amplitude * np.cos(x) * np.cos(y), "taylor_green")


def taylor_green_exact(grid: PeriodicGrid, t: float, epsilon: float, amplitude: float = 1.0) -> ScalarField:
    decay = math.exp(-2 * epsilon * t)
    return sample_function(grid, lambda x, y: -2 * amplitude * decay * np.cos(x) * np.cos(y), "taylor_green")


def shear(grid: PeriodicGrid, amplitude: float = 1.0) -> ScalarField:
    return sample_function(grid, lambda x, y: amplitude * np.cos(x) + 0 * y, "shear")


def zero(grid: PeriodicGrid) -> ScalarField:
    return ScalarField(grid, np.zeros((grid.n, grid.n)), "zero")


def _center(grid, center):
    return (grid.L / 2, grid.L / 2) if center is None else tuple(center)


def mollified_patch(
    grid: PeriodicGrid,
    radius: float = 0.5,
    width: float = 0.1,
    center=None,
    aspect: float = 1.0,
) -> ScalarField:
    """Periodised indicator of a disk (or ellipse), smoothed by a Gaussian of
    standard deviation ``width``.

    Built from the exact Fourier coefficients of the indicator, so samples do
    not depend on the grid beyond spectral truncation. ``aspect`` stretches
    the disk into an ellipse with semi-axes ``radius*aspect`` and ``radius/aspect``
    (same area).
    """
    ops = spectral_ops(grid)
    c1, c2 = _center(grid, center)
    a, b = radius * aspect, radius / aspect
    kr = np.sqrt((ops.k1 * a) ** 2 + (ops.k2 * b) ** 2)
    area = math.pi * a * b
    with np.errstate(invalid="ignore", divide="ignore"):
        shape = np.where(kr > 0, 2 * j1(kr) / kr, 1.0)
    coeff = area / grid.L ** 2 * shape * np.exp(-0.5 * width ** 2 * ops.ksq)
    coeff = coeff * np.exp(-1j * (ops.k1 * c1 + ops.k2 * c2))
    n = grid.n
    return ScalarField(grid, ops.inv(coeff * n * n), "mollified_patch")


def lmo_exemplar(grid: PeriodicGrid, center=None) -> ScalarField:
    """log(1 - log|x - c|) on |x - c| <= 1, zero outside, periodised.

    The singular node is clamped to the value at radius spacing/2.
    """
    c1, c2 = _center(grid, center)
    if grid.L < 2.0:
        raise ValueError("lmo_exemplar needs domain length >= 2 (support radius 1)")
    X1, X2 = grid.mesh()
    r = np.hypot(torus_delta(X1 - c1, grid.L), torus_delta(X2 - c2, grid.L))
    r = np.where(r == 0, grid.spacing / 2, r)
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = np.where(r <= 1.0, np.log(1.0 - np.log(np.minimum(r, 1.0))), 0.0)
    return ScalarField(grid, vals, "lmo_exemplar")


def sign_step(grid: PeriodicGrid, position: float | None = None) -> ScalarField:
    c = grid.L / 2 if position is None else position
    return sample_function(grid, lambda x, y: np.sign(x - c) + 0 * y, "sign_step")


def random_seeded(grid: PeriodicGrid, seed: int = 0, kmax: float = 4.0) -> ScalarField:
    """Band-limited Gaussian random vorticity (1 <= |k| <= kmax), unit rms, zero mean."""
    ops = spectral_ops(grid)
    rng = np.random.default_rng(seed)
    shape = ops.ksq.shape
    coeff = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    mask = (ops.kmag >= 1.0) & (ops.kmag <= kmax)
    vals = ops.inv(np.where(mask, coeff, 0.0))
    vals = vals / np.sqrt(np.mean(vals ** 2))
    return ScalarField(grid, vals, "random_seeded")


REGISTRY = {
    "taylor_green": taylor_green,
    "shear": shear,
    "mollified_patch": mollified_patch,
    "lmo_exemplar": lmo_exemplar,
    "random_seeded": random_seeded,
    "sign_step": sign_step,
    "zero": zero,
}

SMOOTH = {"taylor_green", "shear", "random_seeded", "zero"}


def make_initial(name: str, grid: PeriodicGrid, **params) -> ScalarField:
    try:
        builder = REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown initial data {name!r}; choose from {sorted(REGISTRY)}") from None
    return builder(grid, **params)
