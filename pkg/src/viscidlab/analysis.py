"""Theoretical exponent curves, Osgood/Gronwall bound evaluators and rate fits."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, optimize, special

from .records import read_columns, write_columns  # noqa: F401

log = logging.getLogger(__name__)

G_FLOOR = 1e-14  # below this a squared error is treated as numerically zero


def beta_lbmo(t: float, C: float) -> float:
    """exp(1 - e^{Ct}); equals 1 at t = 0 and decays to 0."""
    if t < 0 or C <= 0:
        raise ValueError("need t >= 0 and C > 0")
    return math.exp(1.0 - math.exp(C * t))


def beta_lmo(t: float, C0: float, delta: float) -> float:
    """max(1 - delta, (1 - (e^{C0 t} - 1)/2)^(1/delta)); the floor takes over once the base is <= 0."""
    if t < 0 or C0 <= 0 or not 0 < delta < 1:
        raise ValueError("need t >= 0, C0 > 0 and delta in (0, 1)")
    base = 1.0 - 0.5 * (math.exp(C0 * t) - 1.0)
    if base <= 0:
        return 1.0 - delta
    return max(1.0 - delta, base ** (1.0 / delta))


def alpha_schedule(t: float, delta: float) -> float:
    """1 - sqrt(t) up to t = delta^2, then the floor 1 - delta."""
    if t < 0 or not 0 < delta < 1:
        raise ValueError("need t >= 0 and delta in (0, 1)")
    return 1.0 - math.sqrt(t) if t <= delta * delta else 1.0 - delta


@dataclass
class BoundCurve:
    kind: str
    params: dict
    t: np.ndarray
    values: np.ndarray
    residual: np.ndarray | None = None

    @classmethod
    def sample(cls, kind: str, t: Sequence[float], **params) -> "BoundCurve":
        fn = {"beta_lbmo": beta_lbmo, "beta_lmo": beta_lmo, "alpha_schedule": alpha_schedule}[kind]
        t = np.asarray(t, float)
        return cls(kind, dict(params), t, np.array([fn(float(s), **params) for s in t]))

    def to_csv(self, path: str | Path) -> Path:
        cols = {"t": self.t, "value": self.values}
        if self.residual is not None:
            cols["residual"] = self.residual
        return write_columns(path, cols)


# --- Osgood ----------------------------------------------------------------------


@dataclass
class OsgoodResult:
    t: np.ndarray
    rho_max: np.ndarray  # nan where the bound is void
    t_void: float | None  # first time the bound escapes, if any

    @property
    def message(self) -> str:
        if self.t_void is None:
            return "bound valid on the whole grid"
        return f"bound void beyond t*={self.t_void:.6g}"


class OsgoodIntegral:
    """M(x) = int_x^a dr / mu(r), evaluated in the variable s = ln r."""

    def __init__(self, mu: Callable[[float], float], a: float, tol: float = 1e-10):
        self.mu = mu
        self.a = a
        self.tol = tol
        self.log_a = math.log(a)

    def of_log(self, s: float) -> float:
        if s == self.log_a:
            return 0.0
        g = lambda v: math.exp(v) / self.mu(math.exp(v))
        val, _ = integrate.quad(g, s, self.log_a, epsabs=self.tol * 1e-3, epsrel=self.tol * 1e-2, limit=200)
        return val

    def __call__(self, x: float) -> float:
        return self.of_log(math.log(x))

    def inverse_log(self, target: float, s_lo: float) -> float:
        """ln of the x in (0, a] with M(x) = target; M decreases in x."""
        f = lambda s: self.of_log(s) - target
        lo = s_lo
        while f(lo) < 0:
            lo -= 1.0 + abs(lo)
        return optimize.brentq(f, lo, self.log_a, xtol=self.tol, rtol=4 * np.finfo(float).eps, maxiter=500)


def osgood_bound(
    c_of_t: Callable[[float], float],
    gamma_of_t: Callable[[float], float],
    mu_of_r: Callable[[float], float],
    a: float,
    t_grid: Sequence[float],
    t0: float = 0.0,
    tol: float = 1e-10,
) -> OsgoodResult:
    """rho_max(t) = M^-1(M(c(t)) - int_{t0}^t gamma), the Osgood upper bound.

    The bound is void once the target drops below M(a) = 0, because rho
    would have to leave (0, a].
    """
    M = OsgoodIntegral(mu_of_r, a, tol)
    ts = np.asarray(t_grid, float)
    rho = np.full(ts.shape, np.nan)

    def target(t):
        G, _ = integrate.quad(gamma_of_t, t0, t, epsabs=tol * 1e-3, epsrel=tol * 1e-2, limit=200) if t > t0 else (0.0, 0)
        return M(c_of_t(t)) - G

    t_void = None
    for i, t in enumerate(ts):
        c = c_of_t(t)
        if not 0 < c <= a:
            raise ValueError(f"c(t) = {c} outside (0, a] at t = {t}")
        tg = target(t)
        if tg < 0:
            if t_void is None:
                prev = ts[i - 1] if i > 0 else t0
                try:
                    t_void = optimize.brentq(target, prev, t, xtol=tol) if target(prev) >= 0 else float(t)
                except ValueError:
                    t_void = float(t)
            continue
        rho[i] = math.exp(M.inverse_log(tg, math.log(c)))
    return OsgoodResult(ts, rho, t_void)


# --- Gronwall with a 1/sqrt(t) kernel ------------------------------------------


@dataclass
class GronwallCheck:
    holds: bool
    margin: float  # min over samples of (A exp(2B sqrt t) - f) / A
    worst_t: float


def gronwall_sqrt_check(t: Sequence[float], f: Sequence[float], A: float, B: float, rtol: float = 1e-12) -> GronwallCheck:
    t = np.asarray(t, float)
    f = np.asarray(f, float)
    bound = A * np.exp(2 * B * np.sqrt(t))
    slack = (bound - f) / A
    i = int(np.argmin(slack))
    return GronwallCheck(bool(np.all(f <= bound * (1 + rtol))), float(slack[i]), float(t[i]))


def picard_sqrt_iterate(A: float, B: float, iterations: int = 8, n_nodes: int = 4001, T: float = 1.0):
    """Iterate f <- A + B int_0^t f(s)/sqrt(s) ds from f = A.

    The integral is taken in u = sqrt(s), where it reads int_0^sqrt(t) 2 f(u^2) du.
    Returns (t, f) on a grid uniform in sqrt(t).
    """
    u = np.linspace(0.0, math.sqrt(T), n_nodes)
    f = np.full_like(u, A)
    for _ in range(iterations):
        f = A + B * integrate.cumulative_simpson(2 * f, x=u, initial=0.0)
    return u * u, f


# --- a-priori growth ------------------------------------------------------------


@dataclass
class GrowthFit:
    C0: float
    per_sample: np.ndarray
    finite: bool


def minimal_growth_constant(t: float, norm: float) -> float:
    """Smallest C with norm <= C e^{C t}: C = W(norm t)/t (or norm at t = 0)."""
    if t == 0:
        return float(norm)
    return float(special.lambertw(norm * t).real / t)


def apriori_growth_check(t: Sequence[float], norms: Sequence[float]) -> GrowthFit:
    per = np.array([minimal_growth_constant(float(s), float(v)) for s, v in zip(t, norms)])
    C0 = float(per.max())
    return GrowthFit(C0, per, bool(np.isfinite(C0)))


# --- rate fitting ---------------------------------------------------------------


@dataclass
class RateFit:
    times: np.ndarray
    epsilons: np.ndarray
    errors: np.ndarray  # shape (len(times), len(epsilons)), g = ||U||^2
    fitted_exponent: np.ndarray  # slope of log g vs log eps, nan when undefined
    confidence: np.ndarray  # rms residual of the per-time fit
    flags: list[str] = field(default_factory=list)

    @property
    def per_norm_exponent(self) -> np.ndarray:
        """Exponent of eps in ||U|| itself."""
        return 0.5 * self.fitted_exponent

    def to_csv(self, path: str | Path) -> Path:
        cols = {"t": self.times, "exponent_g": self.fitted_exponent, "exponent_u": self.per_norm_exponent,
                "residual": self.confidence}
        for j, e in enumerate(self.epsilons):
            cols[f"g_eps{j}"] = self.errors[:, j]
        return write_columns(path, cols)


def fit_rate(times: Sequence[float], epsilons: Sequence[float], errors) -> RateFit:
    """Per-time least-squares slope of log g against log eps."""
    t = np.asarray(times, float)
    eps = np.asarray(epsilons, float)
    g = np.asarray(errors, float)
    if g.shape != (len(t), len(eps)):
        raise ValueError(f"errors must have shape {(len(t), len(eps))}, got {g.shape}")
    if len(eps) < 3:
        raise ValueError("need >= 3 viscosities")
    if np.log10(eps.max() / eps.min()) < 2 - 1e-9:
        raise ValueError("viscosities must span at least two decades")
    if np.any(g < 0):
        raise ValueError("errors must be non-negative")
    order = np.argsort(eps)
    eps, g = eps[order], g[:, order]
    slope = np.full(len(t), np.nan)
    resid = np.full(len(t), np.nan)
    flags = []
    x = np.log(eps)
    for i, ti in enumerate(t):
        if ti == 0 or np.any(g[i] < G_FLOOR):
            flags.append(f"t={ti:.6g}: slope undefined (zero error)")
            continue
        y = np.log(g[i])
        if np.any(np.diff(g[i]) < 0):
            flags.append(f"t={ti:.6g}: errors not monotone in eps")
        p, r = np.polyfit(x, y, 1, full=True)[:2]
        slope[i] = p[0]
        resid[i] = math.sqrt(r[0] / len(x)) if len(r) else 0.0
    return RateFit(t, eps, g, slope, resid, flags)


def smallness_condition(C0: float, T: float, eps: float, beta_T: float) -> bool:
    """(C0 T eps)^beta(T) <= e^-2, the admissible-viscosity test."""
    return (C0 * T * eps) ** beta_T <= math.exp(-2.0)
