"""Periodic torus grid, field containers and the spectral transform.

Arrays are indexed ``values[i, j]`` with ``i`` along ``x1`` and ``j`` along
``x2``; node ``(i, j)`` sits at ``(i * h, j * h)``.

Spectral coefficients use the mean-preserving normalisation
``coefficient(k) = fft2(values)[k] / n**2`` so that ``coefficient(0, 0)`` is
the field mean.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable

import numpy as np


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class PeriodicGrid:
    n: int
    L: float = 2 * math.pi

    def __post_init__(self):
        n = self.n
        if not isinstance(n, (int, np.integer)) or n < 8 or n & (n - 1):
            raise GridError(f"n must be power of two (>= 8), got {n!r}")
        if not self.L > 0:
            raise GridError(f"domain length must be positive, got {self.L!r}")

    @property
    def spacing(self) -> float:
        return self.L / self.n

    @property
    def cell_area(self) -> float:
        return self.spacing ** 2

    def coords(self) -> np.ndarray:
        return np.arange(self.n) * self.spacing

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        x = self.coords()
        return np.meshgrid(x, x, indexing="ij")

    def wavenumbers(self) -> np.ndarray:
        """Physical wavenumbers in FFT order (integer multiples of 2*pi/L)."""
        return np.fft.fftfreq(self.n, d=1.0 / self.n) * (2 * math.pi / self.L)

    def to_json(self) -> dict:
        return {"n": int(self.n), "L": float(self.L)}


def make_grid(n: int, L: float = 2 * math.pi) -> PeriodicGrid:
    return PeriodicGrid(int(n) if isinstance(n, (int, np.integer)) else n, float(L))


def _check_finite(name: str, arr: np.ndarray) -> None:
    if not np.all(np.isfinite(arr)):
        bad = np.argwhere(~np.isfinite(arr))[0]
        raise ValueError(f"{name} has non-finite value at node {tuple(int(b) for b in bad)}")


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: PeriodicGrid
    values: np.ndarray
    name: str = "field"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n, self.grid.n):
            raise ValueError(f"expected shape {(self.grid.n,) * 2}, got {v.shape}")
        _check_finite(self.name, v)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def mean(self) -> float:
        return float(self.values.mean())

    def lp_norm(self, p: float) -> float:
        """Discrete L^p norm on the torus, sum |f|^p h^2 raised to 1/p."""
        return lp_norm(self.values, p, self.grid.cell_area)

    def l2(self) -> float:
        return self.lp_norm(2)

    def sup(self) -> float:
        return float(np.abs(self.values).max())

    def with_values(self, values: np.ndarray, name: str | None = None) -> "ScalarField":
        return ScalarField(self.grid, values, self.name if name is None else name)

    def __sub__(self, other: "ScalarField") -> "ScalarField":
        return self.with_values(self.values - other.values)

    def __add__(self, other: "ScalarField") -> "ScalarField":
        return self.with_values(self.values + other.values)


@dataclass(frozen=True, eq=False)
class VectorField:
    grid: PeriodicGrid
    u1: np.ndarray
    u2: np.ndarray
    name: str = "velocity"

    def __post_init__(self):
        for comp in ("u1", "u2"):
            v = np.asarray(getattr(self, comp), dtype=float)
            if v.shape != (self.grid.n, self.grid.n):
                raise ValueError(f"{comp}: expected shape {(self.grid.n,) * 2}, got {v.shape}")
            _check_finite(f"{self.name}.{comp}", v)
            v.setflags(write=False)
            object.__setattr__(self, comp, v)

    def speed(self) -> np.ndarray:
        return np.hypot(self.u1, self.u2)

    def max_speed(self) -> float:
        return float(self.speed().max())

    def l2(self) -> float:
        return math.sqrt(float(np.sum(self.u1 ** 2 + self.u2 ** 2)) * self.grid.cell_area)


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Full (n, n) complex coefficient array in FFT index order."""

    grid: PeriodicGrid
    coefficients: np.ndarray

    def coefficient(self, k1: int, k2: int) -> complex:
        n = self.grid.n
        if abs(k1) > n // 2 or abs(k2) > n // 2:
            raise IndexError(f"wavevector ({k1}, {k2}) outside |k_i| <= {n // 2}")
        return complex(self.coefficients[k1 % n, k2 % n])

    def l2(self) -> float:
        # Parseval with the mean-preserving normalisation: ||f||^2 = L^2 sum |c|^2
        return self.grid.L * math.sqrt(float(np.sum(np.abs(self.coefficients) ** 2)))

    def conjugate_symmetry_error(self) -> float:
        c = self.coefficients
        flipped = np.roll(np.flip(c, axis=(0, 1)), 1, axis=(0, 1))
        scale = max(float(np.abs(c).max()), 1e-300)
        return float(np.abs(c - np.conj(flipped)).max()) / scale


def lp_norm(values: np.ndarray, p: float, cell_area: float) -> float:
    a = np.abs(values)
    if math.isinf(p):
        return float(a.max())
    return float(np.sum(a ** p) * cell_area) ** (1.0 / p)


def to_spectral(f: ScalarField) -> SpectralField:
    n = f.grid.n
    return SpectralField(f.grid, np.fft.fft2(f.values) / (n * n))


def from_spectral(F: SpectralField, name: str = "field") -> ScalarField:
    n = F.grid.n
    return ScalarField(F.grid, np.real(np.fft.ifft2(F.coefficients * (n * n))), name)


def sample_function(grid: PeriodicGrid, g: Callable, name: str = "field") -> ScalarField:
    """Sample ``g(x1, x2)`` at the grid nodes; ``g`` must accept arrays."""
    X1, X2 = grid.mesh()
    vals = np.broadcast_to(np.asarray(g(X1, X2), dtype=float), X1.shape).copy()
    if not np.all(np.isfinite(vals)):
        i, j = np.argwhere(~np.isfinite(vals))[0]
        raise ValueError(
            f"non-finite sample of {name} at node ({i}, {j}) = "
            f"({X1[i, j]:.6g}, {X2[i, j]:.6g})"
        )
    return ScalarField(grid, vals, name)


def torus_delta(a: np.ndarray, L: float) -> np.ndarray:
    """Minimum-image difference on a circle of length L."""
    return (a + 0.5 * L) % L - 0.5 * L


# --- rfft operator cache shared by the spectral modules ---------------------


@dataclass(frozen=True, eq=False)
class SpectralOps:
    """Wavenumber arrays in rfft2 layout for one grid."""

    grid: PeriodicGrid
    k1: np.ndarray  # (n, 1)
    k2: np.ndarray  # (1, n//2+1)
    ik1: np.ndarray  # i*k1 with the Nyquist row zeroed
    ik2: np.ndarray
    ksq: np.ndarray
    ksq_inv: np.ndarray  # 0 at k = 0
    stream_inv: np.ndarray  # ksq_inv with both Nyquist lines dropped
    kmag: np.ndarray
    dealias: np.ndarray = field(repr=False)

    def fwd(self, values: np.ndarray) -> np.ndarray:
        return np.fft.rfft2(values)

    def inv(self, coeffs: np.ndarray) -> np.ndarray:
        return np.fft.irfft2(coeffs, s=(self.grid.n, self.grid.n))


@lru_cache(maxsize=32)
def spectral_ops(grid: PeriodicGrid) -> SpectralOps:
    n = grid.n
    scale = 2 * math.pi / grid.L
    int1 = np.fft.fftfreq(n, d=1.0 / n)
    int2 = np.fft.rfftfreq(n, d=1.0 / n)
    k1 = (int1 * scale)[:, None]
    k2 = (int2 * scale)[None, :]
    d1 = np.where(np.abs(int1) == n // 2, 0.0, int1 * scale)[:, None]
    d2 = np.where(np.abs(int2) == n // 2, 0.0, int2 * scale)[None, :]
    ksq = k1 ** 2 + k2 ** 2
    ksq_inv = np.zeros_like(ksq)
    ksq_inv[ksq > 0] = 1.0 / ksq[ksq > 0]
    stream_inv = ksq_inv * (np.abs(int1) != n // 2)[:, None] * (np.abs(int2) != n // 2)[None, :]
    # 2/3 rule on integer wavenumbers
    cut = n / 3.0
    dealias = (np.abs(int1)[:, None] < cut) & (np.abs(int2)[None, :] < cut)
    for arr in (k1, k2, d1, d2, ksq, ksq_inv, stream_inv, dealias):
        arr.setflags(write=False)
    return SpectralOps(
        grid=grid,
        k1=k1,
        k2=k2,
        ik1=1j * d1,
        ik2=1j * d2,
        ksq=ksq,
        ksq_inv=ksq_inv,
        stream_inv=stream_inv,
        kmag=np.sqrt(ksq),
        dealias=dealias,
    )


# --- raw field dumps ---------------------------------------------------------


def write_fld(path: str | Path, f: ScalarField, time: float = 0.0) -> Path:
    """Write a ``.fld`` dump: one JSON header line, then little-endian float64."""
    path = Path(path)
    header = {"n": int(f.grid.n), "L": float(f.grid.L), "name": f.name, "time": float(time)}
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes(order="C"))
    return path


def read_fld(path: str | Path) -> tuple[ScalarField, dict]:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        data = np.frombuffer(fh.read(), dtype="<f8")
    n = int(header["n"])
    if data.size != n * n:
        raise ValueError(f"{path}: expected {n * n} samples, found {data.size}")
    grid = make_grid(n, header["L"])
    return ScalarField(grid, data.reshape(n, n).astype(float), header.get("name", "field")), header
