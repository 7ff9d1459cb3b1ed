"""Heat semigroup, pseudo-spectral Euler transport, Strang Navier-Stokes and
the alternating heat/Euler (Trotter) scheme.

All steppers work on the vorticity. Internally the state is kept as rfft2
coefficients so repeated steps avoid needless round trips.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .biot_savart import _bs_hat
from .grid import ScalarField, spectral_ops, write_fld

CFL_NUMBER = 0.5


class CFLError(RuntimeError):
    def __init__(self, max_u: float, dt: float, spacing: float, subinterval: int | None = None):
        self.max_u = max_u
        self.dt = dt
        self.spacing = spacing
        self.subinterval = subinterval
        where = "" if subinterval is None else f" in subinterval {subinterval}"
        super().__init__(
            f"CFL violated{where}: dt={dt:.4g} * max|u|={max_u:.4g} > "
            f"{CFL_NUMBER} * spacing={spacing:.4g}"
        )


@dataclass(frozen=True)
class SchemeConfig:
    epsilon: float
    horizon: float
    n_subintervals: int
    inner_dt: float
    dealias: bool = True
    fractional_sigma: float = 2.0

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if not self.horizon > 0:
            raise ValueError("horizon must be > 0")
        n = self.n_subintervals
        if not isinstance(n, (int, np.integer)) or n <= 0 or n % 2:
            raise ValueError(f"n_subintervals must be an even positive integer, got {n!r}")
        if not self.inner_dt > 0:
            raise ValueError("inner_dt must be > 0")
        if self.inner_dt > self.step / 4 * (1 + 1e-12):
            raise ValueError(f"inner_dt={self.inner_dt} exceeds (T/n)/4={self.step / 4}")
        if not 0 < self.fractional_sigma <= 2:
            raise ValueError("fractional_sigma must lie in (0, 2]")

    @property
    def step(self) -> float:
        return self.horizon / self.n_subintervals


# --- spectral kernels ---------------------------------------------------------


def _heat_multiplier(ops, nu_dt: float, sigma: float) -> np.ndarray:
    if nu_dt == 0:
        return np.ones_like(ops.ksq)
    if sigma == 2:
        return np.exp(-nu_dt * ops.ksq)
    return np.exp(-nu_dt * ops.kmag ** sigma)


def _max_speed(ops, w_hat) -> float:
    u1h, u2h = _bs_hat(ops, w_hat)
    return float(np.sqrt(ops.inv(u1h) ** 2 + ops.inv(u2h) ** 2).max())


def _advection_rhs(ops, w_hat, speed: float, dealias: bool) -> np.ndarray:
    u1h, u2h = _bs_hat(ops, w_hat)
    u1, u2 = ops.inv(u1h), ops.inv(u2h)
    wx, wy = ops.inv(ops.ik1 * w_hat), ops.inv(ops.ik2 * w_hat)
    nl = ops.fwd(u1 * wx + u2 * wy)
    if dealias:
        nl = nl * ops.dealias
    nl[0, 0] = 0.0  # u . grad w has zero mean for divergence-free u
    return -speed * nl


def _check_cfl(ops, w_hat, dt: float, speed: float, subinterval=None) -> float:
    umax = _max_speed(ops, w_hat) * abs(speed)
    h = ops.grid.spacing
    if dt * umax > CFL_NUMBER * h * (1 + 1e-12):
        raise CFLError(umax, dt, h, subinterval)
    return umax


def _rk4(ops, w_hat, dt: float, speed: float, dealias: bool) -> np.ndarray:
    k1 = _advection_rhs(ops, w_hat, speed, dealias)
    k2 = _advection_rhs(ops, w_hat + 0.5 * dt * k1, speed, dealias)
    k3 = _advection_rhs(ops, w_hat + 0.5 * dt * k2, speed, dealias)
    k4 = _advection_rhs(ops, w_hat + dt * k3, speed, dealias)
    return w_hat + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _euler_hat(ops, w_hat, dt, speed, dealias, subinterval=None):
    _check_cfl(ops, w_hat, dt, speed, subinterval)
    return _rk4(ops, w_hat, dt, speed, dealias)


def _strang_hat(ops, w_hat, epsilon, dt, sigma, dealias, subinterval=None):
    half = _heat_multiplier(ops, epsilon * dt / 2, sigma)
    w_hat = w_hat * half
    w_hat = _euler_hat(ops, w_hat, dt, 1.0, dealias, subinterval)
    return w_hat * half


# --- public steppers ----------------------------------------------------------


def heat_step(w: ScalarField, nu: float, dt: float, sigma: float = 2.0) -> ScalarField:
    """Apply exp(-nu |k|^sigma dt) to the vorticity coefficients."""
    if nu < 0 or dt < 0:
        raise ValueError(f"heat_step needs nu >= 0 and dt >= 0 (nu={nu}, dt={dt})")
    if not 0 < sigma <= 2:
        raise ValueError("sigma must lie in (0, 2]")
    ops = spectral_ops(w.grid)
    w_hat = ops.fwd(w.values) * _heat_multiplier(ops, nu * dt, sigma)
    return w.with_values(ops.inv(w_hat))


def euler_step(w: ScalarField, dt: float, speed_factor: float = 1.0, dealias: bool = True) -> ScalarField:
    """One RK4 step of d_t w = -speed_factor * (u . grad w), u refreshed per stage."""
    ops = spectral_ops(w.grid)
    return w.with_values(ops.inv(_euler_hat(ops, ops.fwd(w.values), dt, speed_factor, dealias)))


def ns_step(w: ScalarField, epsilon: float, dt: float, sigma: float = 2.0, dealias: bool = True) -> ScalarField:
    """Strang step heat(dt/2) o euler(dt) o heat(dt/2)."""
    if epsilon < 0 or dt < 0:
        raise ValueError("ns_step needs epsilon >= 0 and dt >= 0")
    ops = spectral_ops(w.grid)
    return w.with_values(ops.inv(_strang_hat(ops, ops.fwd(w.values), epsilon, dt, sigma, dealias)))


def _substeps(duration: float, max_dt: float) -> tuple[int, float]:
    m = max(1, int(math.ceil(duration / max_dt - 1e-9)))
    return m, duration / m


# --- reference runs -----------------------------------------------------------


@dataclass
class Simulation:
    """Reference Euler / Navier-Stokes run sampled at snapshot times."""

    times: list[float]
    snapshots: list[ScalarField]
    epsilon: float
    sigma: float
    dt: float
    energy: list[float] = field(default_factory=list)  # ||u||^2 at each snapshot
    enstrophy: list[float] = field(default_factory=list)  # ||w - mean||^2, equal to ||grad u||^2

    def energy_balance_error(self) -> np.ndarray:
        """Relative defect of ||u(t)||^2 + 2 eps int ||grad u||^2 - ||u0||^2 (Simpson/trapezoid)."""
        from scipy.integrate import cumulative_simpson

        t = np.asarray(self.times)
        ens = np.asarray(self.enstrophy)
        if len(t) >= 3:
            dissip = cumulative_simpson(ens, x=t, initial=0.0)
        else:
            dissip = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (ens[1:] + ens[:-1]))])
        e0 = self.energy[0]
        return (np.asarray(self.energy) + 2 * self.epsilon * dissip - e0) / e0


def _energy_enstrophy(ops, w_hat) -> tuple[float, float]:
    grid = ops.grid
    u1h, u2h = _bs_hat(ops, w_hat)
    u1, u2 = ops.inv(u1h), ops.inv(u2h)
    w = ops.inv(w_hat)
    energy = float(np.sum(u1 ** 2 + u2 ** 2)) * grid.cell_area
    enstrophy = float(np.sum((w - w.mean()) ** 2)) * grid.cell_area
    return energy, enstrophy


def simulate(
    w0: ScalarField,
    epsilon: float,
    horizon: float,
    dt: float,
    sigma: float = 2.0,
    snapshot_every: float | None = None,
    dealias: bool = True,
) -> Simulation:
    """Strang-split NS (or Euler for epsilon = 0) from 0 to ``horizon``.

    ``dt`` is shrunk so an integer number of steps lands on every snapshot
    time; ``snapshot_every`` defaults to a single final snapshot.
    """
    ops = spectral_ops(w0.grid)
    every = horizon if snapshot_every is None else snapshot_every
    n_snap = max(1, int(round(horizon / every)))
    seg = horizon / n_snap
    m, h = _substeps(seg, dt)
    w_hat = ops.fwd(w0.values)
    e, z = _energy_enstrophy(ops, w_hat)
    sim = Simulation([0.0], [w0], epsilon, sigma, h, [e], [z])
    for s in range(n_snap):
        for _ in range(m):
            w_hat = _strang_hat(ops, w_hat, epsilon, h, sigma, dealias)
        e, z = _energy_enstrophy(ops, w_hat)
        sim.times.append((s + 1) * seg)
        sim.snapshots.append(w0.with_values(ops.inv(w_hat)))
        sim.energy.append(e)
        sim.enstrophy.append(z)
    return sim


# --- Trotter scheme -----------------------------------------------------------


@dataclass
class TrotterTrajectory:
    times: list[float]
    snapshots: list[ScalarField]
    stage_tags: list[str]
    stage_norms: list[float]  # tracking norm at each T_i
    norm_history: list[float]  # running sup X_k

    @property
    def final(self) -> ScalarField:
        return self.snapshots[-1]

    def bound_ratio(self) -> float:
        return max(self.norm_history) / self.norm_history[0]

    def fitted_mu(self) -> float:
        """Smallest mu with X_{k+1} <= X_k exp(mu X_k h) across Euler stages."""
        h = self.times[1] - self.times[0]
        mu = 0.0
        X = self.norm_history
        for k, tag in enumerate(self.stage_tags):
            if tag == "euler" and X[k] > 0:
                mu = max(mu, math.log(X[k + 1] / X[k]) / (X[k] * h))
        return mu

    def heat_violation(self) -> float:
        """Largest relative rise of the tracking norm over a heat stage."""
        worst = 0.0
        for k, tag in enumerate(self.stage_tags):
            if tag == "heat" and self.stage_norms[k] > 0:
                worst = max(worst, self.stage_norms[k + 1] / self.stage_norms[k] - 1.0)
        return worst


def trotter_run(
    w0: ScalarField,
    cfg: SchemeConfig,
    norm: Callable[[ScalarField], float] | None = None,
) -> TrotterTrajectory:
    """Alternate heat (coefficient 2 eps) on even subintervals and doubled-speed
    Euler on odd ones, recording the vorticity at every T_i = i T / n."""
    ops = spectral_ops(w0.grid)
    norm = norm or (lambda f: f.l2())
    h = cfg.step
    m, dt = _substeps(h, cfg.inner_dt)
    heat = _heat_multiplier(ops, 2 * cfg.epsilon * h, cfg.fractional_sigma)
    w_hat = ops.fwd(w0.values)
    n0 = norm(w0)
    traj = TrotterTrajectory([0.0], [w0], [], [n0], [n0])
    for i in range(cfg.n_subintervals):
        if i % 2 == 0:
            w_hat = w_hat * heat
            traj.stage_tags.append("heat")
        else:
            for _ in range(m):
                w_hat = _euler_hat(ops, w_hat, dt, 2.0, cfg.dealias, subinterval=i)
            traj.stage_tags.append("euler")
        snap = w0.with_values(ops.inv(w_hat))
        val = norm(snap)
        traj.times.append((i + 1) * h)
        traj.snapshots.append(snap)
        traj.stage_norms.append(val)
        traj.norm_history.append(max(traj.norm_history[-1], val))
    return traj


@dataclass
class TrotterComparison:
    n_list: list[int]
    errors: list[float]
    order: float  # fitted exponent of 1/n; nan when all errors are at round-off
    reference_dt: float


def fit_order(n_list: Sequence[int], errors: Sequence[float], floor: float = 1e-13) -> float:
    n = np.asarray(n_list, float)
    e = np.asarray(errors, float)
    keep = e > floor
    if keep.sum() < 2:
        return float("nan")
    slope = np.polyfit(np.log(1.0 / n[keep]), np.log(e[keep]), 1)[0]
    return float(slope)


def trotter_vs_ns(
    w0: ScalarField,
    cfg: SchemeConfig,
    n_list: Sequence[int],
    reference_dt: float | None = None,
) -> TrotterComparison:
    """L2 distance at T between the Trotter scheme and a fine Strang NS run."""
    ref_dt = reference_dt or cfg.inner_dt / 2
    ref = simulate(w0, cfg.epsilon, cfg.horizon, ref_dt, cfg.fractional_sigma, dealias=cfg.dealias)
    w_ref = ref.snapshots[-1]
    errors = []
    for n in n_list:
        h = cfg.horizon / n
        sub = SchemeConfig(
            cfg.epsilon, cfg.horizon, n, min(cfg.inner_dt, h / 4), cfg.dealias, cfg.fractional_sigma
        )
        traj = trotter_run(w0, sub)
        errors.append((traj.final - w_ref).l2())
    return TrotterComparison(list(n_list), errors, fit_order(n_list, errors), ref.dt)


# --- trajectory manifest ------------------------------------------------------


def write_trajectory(
    out_dir: str | Path, times: Sequence[float], snapshots: Sequence[ScalarField],
    stage_tags: Sequence[str] = (), norm_history: Sequence[float] = (), name: str = "traj",
) -> Path:
    """Dump snapshots as ``.fld`` files plus a JSON manifest listing them."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for i, (t, snap) in enumerate(zip(times, snapshots)):
        fname = f"{name}_{i:04d}.fld"
        write_fld(out / fname, snap, t)
        files.append(fname)
    manifest = {
        "times": [float(t) for t in times],
        "stage_tags": list(stage_tags),
        "norm_history": [float(x) for x in norm_history],
        "snapshots": files,
    }
    path = out / f"{name}.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path
