"""Tracer trajectories under a time-dependent velocity and their regularity.

Velocity snapshots are interpolated with periodic cubic splines in space and
linearly in time; tracers are advanced with RK4.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage

from .biot_savart import lipschitz_seminorm, velocity_from_vorticity
from .grid import PeriodicGrid, ScalarField, VectorField, torus_delta

log = logging.getLogger(__name__)


class TimeRangeError(ValueError):
    pass


class SnapshotVelocity:
    """Velocity interpolated from snapshots at increasing ``times``."""

    def __init__(self, times: Sequence[float], fields: Sequence[VectorField]):
        if len(times) != len(fields) or not len(times):
            raise ValueError("need one velocity field per snapshot time")
        if np.any(np.diff(times) <= 0):
            raise ValueError("snapshot times must increase")
        self.times = np.asarray(times, float)
        self.grid: PeriodicGrid = fields[0].grid
        self._coef = [
            (ndimage.spline_filter(f.u1, order=3, mode="grid-wrap"),
             ndimage.spline_filter(f.u2, order=3, mode="grid-wrap"))
            for f in fields
        ]
        self.max_speed = max(f.max_speed() for f in fields)

    @classmethod
    def from_vorticity(cls, times: Sequence[float], snapshots: Sequence[ScalarField]) -> "SnapshotVelocity":
        return cls(times, [velocity_from_vorticity(w) for w in snapshots])

    @classmethod
    def steady(cls, u: VectorField) -> "SnapshotVelocity":
        return cls([0.0, math.inf], [u, u])

    @property
    def t_range(self) -> tuple[float, float]:
        return float(self.times[0]), float(self.times[-1])

    def _eval(self, k: int, idx: np.ndarray) -> np.ndarray:
        c1, c2 = self._coef[k]
        kw = dict(order=3, mode="grid-wrap", prefilter=False)
        return np.stack([ndimage.map_coordinates(c1, idx, **kw), ndimage.map_coordinates(c2, idx, **kw)], axis=1)

    def __call__(self, t: float, x: np.ndarray) -> np.ndarray:
        lo, hi = self.t_range
        if t < lo - 1e-12 or t > hi + 1e-12:
            raise TimeRangeError(f"velocity requested at t={t:.6g}, outside [{lo:.6g}, {hi:.6g}]")
        idx = (np.mod(x, self.grid.L) / self.grid.spacing).T
        k = int(np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, len(self.times) - 2))
        t0, t1 = self.times[k], self.times[k + 1]
        if math.isinf(t1):
            return self._eval(k, idx)
        w = (t - t0) / (t1 - t0)
        a = self._eval(k, idx)
        if w == 0:
            return a
        return (1 - w) * a + w * self._eval(k + 1, idx)


class AnalyticVelocity:
    """Closed-form velocity ``func(t, x1, x2) -> (u1, u2)`` on a torus of length L."""

    def __init__(self, func: Callable, L: float = 2 * math.pi, max_speed: float | None = None):
        self.func = func
        self.L = L
        self.max_speed = max_speed
        self.grid = None
        self.t_range = (-math.inf, math.inf)

    def __call__(self, t: float, x: np.ndarray) -> np.ndarray:
        u1, u2 = self.func(t, x[:, 0], x[:, 1])
        return np.stack([np.broadcast_to(u1, x[:, 0].shape), np.broadcast_to(u2, x[:, 0].shape)], axis=1)


@dataclass
class FlowMap:
    seeds: np.ndarray  # (m, 2) initial points
    times: list[float]  # integration clock at each record
    positions: list[np.ndarray]  # wrapped onto [0, L)^2
    direction: str
    L: float
    pairs: np.ndarray | None = None  # (k, 2) seed indices of matched pairs
    pair_separation: np.ndarray | None = None
    unwrapped: list[np.ndarray] = field(default_factory=list, repr=False)

    @property
    def final(self) -> np.ndarray:
        return self.positions[-1]


def integrate_flow(
    velocity,
    seeds: np.ndarray,
    t0: float,
    t1: float,
    dt: float,
    direction: str = "forward",
    record_every: int = 1,
    pairs: np.ndarray | None = None,
    pair_separation: np.ndarray | None = None,
) -> FlowMap:
    """RK4 tracer integration.

    ``forward`` advances seeds from t0 to t1 (the flow psi(t1 - t0, .)).
    ``backward`` starts the seeds at t1 and integrates back to t0, giving
    the inverse map psi^-1 evaluated at the seeds.
    """
    if direction not in ("forward", "backward"):
        raise ValueError("direction must be 'forward' or 'backward'")
    if not t1 > t0 or not dt > 0:
        raise ValueError("need t1 > t0 and dt > 0")
    lo, hi = velocity.t_range
    if t0 < lo - 1e-12 or t1 > hi + 1e-12:
        raise TimeRangeError(f"flow on [{t0}, {t1}] needs velocity outside [{lo}, {hi}]")
    grid = getattr(velocity, "grid", None)
    vmax = getattr(velocity, "max_speed", None)
    if grid is not None and vmax is not None and dt * vmax > 0.5 * grid.spacing * (1 + 1e-12):
        raise ValueError(f"tracer CFL violated: dt={dt:.4g} * max|u|={vmax:.4g} > 0.5 * spacing")
    L = grid.L if grid is not None else velocity.L
    steps = max(1, int(math.ceil((t1 - t0) / dt - 1e-9)))
    h = (t1 - t0) / steps
    sign = 1.0 if direction == "forward" else -1.0
    t = t0 if direction == "forward" else t1
    x = np.array(seeds, dtype=float)
    fm = FlowMap(np.array(seeds, float), [t], [np.mod(x, L)], direction, L, pairs, pair_separation, [x.copy()])
    for s in range(steps):
        hs = sign * h
        k1 = velocity(t, x)
        k2 = velocity(t + 0.5 * hs, x + 0.5 * hs * k1)
        k3 = velocity(t + 0.5 * hs, x + 0.5 * hs * k2)
        k4 = velocity(t + hs, x + hs * k3)
        x = x + (hs / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t = (t0 + (s + 1) * h) if direction == "forward" else (t1 - (s + 1) * h)
        if (s + 1) % record_every == 0 or s + 1 == steps:
            fm.times.append(t)
            fm.positions.append(np.mod(x, L))
            fm.unwrapped.append(x.copy())
    return fm


def torus_distance(a: np.ndarray, b: np.ndarray, L: float) -> np.ndarray:
    d = torus_delta(a - b, L)
    return np.hypot(d[..., 0], d[..., 1])


def bilipschitz_constant(fm: FlowMap, record: int = -1, max_initial: float | None = None) -> float:
    """Sampled sup over seed pairs of max(|phi x - phi y| / |x - y|, inverse).

    Pairs farther apart than ``max_initial`` (default L/4) are skipped, as
    are coincident seeds. The value is a lower bound of the true constant.
    """
    L = fm.L
    cap = L / 4 if max_initial is None else max_initial
    x0, x1 = fm.seeds, fm.positions[record]
    m = len(x0)
    if m < 2:
        raise ValueError("need at least two seeds")
    best = 1.0
    chunk = max(1, 2_000_000 // m)
    for s in range(0, m, chunk):
        d0 = torus_distance(x0[s:s + chunk, None, :], x0[None, :, :], L)
        d1 = torus_distance(x1[s:s + chunk, None, :], x1[None, :, :], L)
        ok = (d0 > 0) & (d0 <= cap) & (d1 > 0)
        if np.any(ok):
            r = d1[ok] / d0[ok]
            best = max(best, float(r.max()), float((1.0 / r).max()))
    return best


def velocity_lipschitz_integral(times: Sequence[float], vorticity: Sequence[ScalarField]) -> np.ndarray:
    """V(t) = int_0^t ||grad u||_inf, trapezoid over snapshot times."""
    lip = np.array([lipschitz_seminorm(w) for w in vorticity])
    t = np.asarray(times, float)
    return np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (lip[1:] + lip[:-1]))])


def lipschitz_bound_check(fm: FlowMap, V_t: float, tol: float = 0.05, record: int = -1) -> dict:
    """Compare the sampled bi-Lipschitz constant against exp(V(t))."""
    K = bilipschitz_constant(fm, record)
    logK = math.log(K)
    return {
        "K": K,
        "log_K": logK,
        "V": float(V_t),
        "bound": math.exp(float(V_t)),
        "holds": bool(logK <= V_t * (1 + tol) + 1e-12),
        "margin": float(V_t * (1 + tol) - logK),
        "n_seeds": len(fm.seeds),
    }


# --- matched pairs and modulus profile ----------------------------------------


def dyadic_pair_seeds(
    L: float, n_base: int, jmin: int = 2, jmax: int = 8, seed: int = 0
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Base points plus partners at distance 2^-j (random direction) for each j.

    Returns (seeds, pairs, separations) where ``pairs`` holds seed indices.
    """
    rng = np.random.default_rng(seed)
    base = rng.uniform(0, L, size=(n_base, 2))
    seeds = [base]
    pairs, seps = [], []
    nxt = n_base
    for j in range(jmin, jmax + 1):
        d = 2.0 ** -j
        theta = rng.uniform(0, 2 * math.pi, size=n_base)
        partner = base + d * np.stack([np.cos(theta), np.sin(theta)], axis=1)
        seeds.append(np.mod(partner, L))
        pairs.append(np.stack([np.arange(n_base), nxt + np.arange(n_base)], axis=1))
        seps.append(np.full(n_base, d))
        nxt += n_base
    return np.concatenate(seeds), np.concatenate(pairs), np.concatenate(seps)


@dataclass
class ModulusProfile:
    separations: np.ndarray
    growth: np.ndarray  # max final distance among pairs at each separation
    fitted_eta_V: float
    alpha: float

    @property
    def ratio(self) -> np.ndarray:
        return self.growth / self.separations


def modulus_profile(fm: FlowMap, alpha: float, record: int = -1) -> ModulusProfile:
    """Per-separation max growth; through-origin fit of log(growth/d) on |ln d|^(1-alpha)."""
    if fm.pairs is None or fm.pair_separation is None:
        raise ValueError("flow map carries no matched pairs (use dyadic_pair_seeds)")
    x = fm.positions[record]
    final = torus_distance(x[fm.pairs[:, 0]], x[fm.pairs[:, 1]], fm.L)
    seps, growth = [], []
    for d in np.unique(fm.pair_separation):
        sel = np.isclose(fm.pair_separation, d)
        if not np.any(sel):
            log.warning("no pairs at separation %g; bin dropped", d)
            continue
        seps.append(d)
        growth.append(float(final[sel].max()))
    seps_a, growth_a = np.asarray(seps), np.asarray(growth)
    xs = np.abs(np.log(seps_a)) ** (1.0 - alpha)
    ys = np.log(growth_a / seps_a)
    eta_v = float(np.dot(xs, ys) / np.dot(xs, xs)) if len(xs) else float("nan")
    return ModulusProfile(seps_a, growth_a, eta_v, alpha)


# --- derived checks ------------------------------------------------------------


def roundtrip_error(velocity, seeds: np.ndarray, t0: float, t1: float, dt: float) -> float:
    """max |psi^-1(psi(x)) - x| in the torus metric."""
    fwd = integrate_flow(velocity, seeds, t0, t1, dt, "forward")
    back = integrate_flow(velocity, fwd.unwrapped[-1], t0, t1, dt, "backward")
    return float(torus_distance(back.final, np.mod(seeds, fwd.L), fwd.L).max())


def triangle_seeds(L: float, n_tri: int, size: float, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    base = rng.uniform(0, L, size=(n_tri, 2))
    pts = np.concatenate([base, base + [size, 0.0], base + [0.0, size]])
    tri = np.stack([np.arange(n_tri), n_tri + np.arange(n_tri), 2 * n_tri + np.arange(n_tri)], axis=1)
    return pts, tri


def triangle_area_drift(fm: FlowMap, triangles: np.ndarray, record: int = -1) -> float:
    """Largest relative change of tracer-triangle areas (Jacobian proxy)."""

    def areas(x):
        a = torus_delta(x[triangles[:, 1]] - x[triangles[:, 0]], fm.L)
        b = torus_delta(x[triangles[:, 2]] - x[triangles[:, 0]], fm.L)
        return 0.5 * np.abs(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])

    a0 = areas(fm.seeds)
    return float(np.abs(areas(fm.positions[record]) / a0 - 1).max())


def grid_seeds(grid: PeriodicGrid) -> np.ndarray:
    X1, X2 = grid.mesh()
    return np.stack([X1.ravel(), X2.ravel()], axis=1)


def compose_field(f: ScalarField, fm: FlowMap, record: int = -1) -> ScalarField:
    """f evaluated at the mapped grid nodes (seeds must be the grid, row-major)."""
    n = f.grid.n
    if len(fm.seeds) != n * n or not np.allclose(fm.seeds, grid_seeds(f.grid)):
        raise ValueError("flow map seeds must be the grid nodes in row-major order")
    idx = (fm.positions[record] / f.grid.spacing).T
    vals = ndimage.map_coordinates(f.values, idx, order=3, mode="grid-wrap")
    return f.with_values(vals.reshape(n, n))


def write_tracers_csv(path: str | Path, fm: FlowMap) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "seed_id", "x1", "x2"])
        for t, pos in zip(fm.times, fm.positions):
            for i, (a, b) in enumerate(pos):
                w.writerow([repr(float(t)), i, repr(float(a)), repr(float(b))])
    return path
