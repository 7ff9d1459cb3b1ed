"""Discrete Morrey-Campanato norms on the periodic grid.

Balls are sets of grid nodes within torus distance ``r`` of a centre node.
Every supremum is taken over a finite family (strided centres x dyadic
radii), so each reported norm is a lower bound of the continuum value.

For the default quadratic oscillation the ball averages of ``f`` and
``f**2`` for *all* centres come from one FFT convolution per radius;
other exponents fall back to gathering ball samples explicitly.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .biot_savart import dyadic_decompose
from .grid import PeriodicGrid, ScalarField, VectorField, torus_delta

log = logging.getLogger(__name__)

MIN_BALL_NODES = 32
UNIT_RADIUS = 1.0 / math.sqrt(math.pi)  # |B| = 1


@dataclass(frozen=True)
class Ball:
    center: tuple[float, float]
    radius: float


def disk_offsets(grid: PeriodicGrid, r: float) -> tuple[np.ndarray, np.ndarray]:
    m = int(math.floor(r / grid.spacing)) + 1
    d = np.arange(-m, m + 1)
    D1, D2 = np.meshgrid(d, d, indexing="ij")
    inside = (D1 ** 2 + D2 ** 2) * grid.spacing ** 2 <= r * r * (1 + 1e-12)
    return D1[inside], D2[inside]


@lru_cache(maxsize=24)
def _disk_kernel_hat(grid: PeriodicGrid, r: float) -> tuple[np.ndarray, int]:
    d1, d2 = disk_offsets(grid, r)
    if d1.size and (np.abs(d1).max() >= grid.n // 2 or np.abs(d2).max() >= grid.n // 2):
        raise ValueError(f"radius {r} too large for the torus")
    ker = np.zeros((grid.n, grid.n))
    ker[d1 % grid.n, d2 % grid.n] = 1.0 / d1.size
    out = np.fft.rfft2(ker)
    out.setflags(write=False)
    return out, d1.size


def ball_means(grid: PeriodicGrid, values: np.ndarray, r: float) -> np.ndarray:
    """Average of ``values`` over B(x, r) for every node x."""
    ker_hat, _ = _disk_kernel_hat(grid, float(r))
    return np.fft.irfft2(np.fft.rfft2(values) * ker_hat, s=values.shape)


@dataclass(frozen=True)
class BallFamily:
    grid: PeriodicGrid
    radii: tuple[float, ...]
    stride: int = 1
    pair_stride: int = 1
    unit_radius: float = UNIT_RADIUS

    def __post_init__(self):
        if self.grid.n % self.stride or self.grid.n % self.pair_stride:
            raise ValueError("strides must divide the grid size")
        for r in self.radii:
            if r > 0.5 + 1e-12:
                raise ValueError(f"radius {r} exceeds 1/2")
            count = disk_offsets(self.grid, r)[0].size
            if count < MIN_BALL_NODES:
                raise ValueError(
                    f"ball of radius {r:.4g} holds {count} nodes (< {MIN_BALL_NODES}); below resolution floor"
                )

    @classmethod
    def dyadic(
        cls,
        grid: PeriodicGrid,
        jmax: int | None = None,
        jmin: int = 1,
        stride: int = 1,
        pair_stride: int | None = None,
    ) -> "BallFamily":
        """Radii 2^-j for j = jmin..jmax, jmax capped so 2^-jmax >= 4 * spacing."""
        cap = int(math.floor(math.log2(1.0 / (4 * grid.spacing))))
        top = cap if jmax is None else min(jmax, cap)
        if top < jmin:
            raise ValueError(f"grid too coarse for radii 2^-{jmin}..: finest admissible j is {cap}")
        radii = tuple(2.0 ** -j for j in range(jmin, top + 1))
        if pair_stride is None:
            pair_stride = max(1, grid.n // 64)
        return cls(grid, radii, stride, pair_stride)

    @property
    def jmax(self) -> int:
        return int(round(-math.log2(min(self.radii))))

    def center_index(self, flat: int) -> tuple[int, int]:
        m = self.grid.n // self.stride
        return (flat // m) * self.stride, (flat % m) * self.stride

    def to_json(self) -> dict:
        return {
            "radii": list(self.radii),
            "stride": self.stride,
            "pair_stride": self.pair_stride,
            "unit_radius": self.unit_radius,
        }


# --- oscillations -------------------------------------------------------------


def _ball_mask(grid: PeriodicGrid, ball: Ball) -> np.ndarray:
    X1, X2 = grid.mesh()
    d1 = torus_delta(X1 - ball.center[0], grid.L)
    d2 = torus_delta(X2 - ball.center[1], grid.L)
    return d1 * d1 + d2 * d2 <= ball.radius ** 2 * (1 + 1e-12)


def oscillation(f: ScalarField, ball: Ball, q: float = 2.0) -> float:
    """(avg_B |f - avg_B f|^q)^(1/q) over the grid nodes of ``ball``."""
    if q < 1:
        raise ValueError("oscillation exponent must be >= 1")
    vals = f.values[_ball_mask(f.grid, ball)]
    if vals.size < MIN_BALL_NODES:
        raise ValueError(f"ball holds {vals.size} nodes (< {MIN_BALL_NODES}); below resolution floor")
    dev = np.abs(vals - vals.mean())
    return float(np.mean(dev ** q) ** (1.0 / q))


def _osc_direct(grid, values, r, stride, q):
    d1, d2 = disk_offsets(grid, r)
    n = grid.n
    ci = np.arange(0, n, stride)
    C1, C2 = np.meshgrid(ci, ci, indexing="ij")
    C1, C2 = C1.ravel(), C2.ravel()
    out = np.empty(C1.size)
    chunk = max(1, 4_000_000 // d1.size)
    for s in range(0, C1.size, chunk):
        a = values[(C1[s:s + chunk, None] + d1) % n, (C2[s:s + chunk, None] + d2) % n]
        dev = np.abs(a - a.mean(axis=1, keepdims=True))
        out[s:s + chunk] = np.mean(dev ** q, axis=1) ** (1.0 / q)
    return out.reshape(n // stride, n // stride)


class OscillationScan:
    """Oscillation maps for every radius of a family, shared by several norms."""

    def __init__(self, f: ScalarField, fam: BallFamily, q: float = 2.0):
        if f.grid != fam.grid:
            raise ValueError("field and ball family live on different grids")
        if q < 1:
            raise ValueError("oscillation exponent must be >= 1")
        self.f = f
        self.fam = fam
        self.q = q
        s = fam.stride
        centered = f.values - f.values.mean()
        self.osc: dict[float, np.ndarray] = {}
        for r in fam.radii:
            if q == 2:
                m1 = ball_means(f.grid, centered, r)
                m2 = ball_means(f.grid, centered * centered, r)
                self.osc[r] = np.sqrt(np.maximum(m2 - m1 * m1, 0.0))[::s, ::s]
            else:
                self.osc[r] = _osc_direct(f.grid, centered, r, s, q)
        sq = ball_means(f.grid, f.values * f.values, fam.unit_radius)[::s, ::s]
        self.unit_term = float(math.sqrt(max(float(sq.max()), 0.0)))

    def _argmax(self, weight: Callable[[float], float]):
        best, arg = 0.0, None
        for r, osc in self.osc.items():
            k = int(np.argmax(osc))
            val = weight(r) * float(osc.flat[k])
            if arg is None or val > best:
                i, j = self.fam.center_index(k)
                best, arg = val, Ball((i * self.f.grid.spacing, j * self.f.grid.spacing), r)
        return best, arg

    def homogeneous(self, alpha: float) -> tuple[float, Ball]:
        return self._argmax(lambda r: abs(math.log(r)) ** alpha)

    def bmo(self) -> tuple[float, Ball]:
        return self._argmax(lambda r: 1.0)


@dataclass(frozen=True)
class LamoEntry:
    alpha: float
    value: float
    homogeneous: float
    unit_term: float
    argmax_ball: Ball


def lamo_norm(f: ScalarField, alpha: float, fam: BallFamily, q: float = 2.0,
              scan: OscillationScan | None = None) -> LamoEntry:
    """sup_B |ln r|^alpha osc_q(B) plus (sup_{|B|=1} int_B f^2)^(1/2)."""
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    scan = scan or OscillationScan(f, fam, q)
    hom, ball = scan.homogeneous(alpha)
    return LamoEntry(alpha, hom + scan.unit_term, hom, scan.unit_term, ball)


def bmo_norm(f: ScalarField, fam: BallFamily, q: float = 2.0, scan: OscillationScan | None = None) -> float:
    scan = scan or OscillationScan(f, fam, q)
    return scan.bmo()[0]


def lbmo_pair_term(f: ScalarField, fam: BallFamily) -> tuple[float, tuple[Ball, Ball] | None]:
    """sup over nested pairs 2B2 in B1 of |avg_B2 - avg_B1| / (1 + ln((1 - ln r2)/(1 - ln r1))).

    Outer balls are centred at every node; inner centres sit at offsets that
    are multiples of ``fam.pair_stride``, which keeps the pair set invariant
    under grid translations and quarter turns.
    """
    grid = f.grid
    s = fam.pair_stride
    h = grid.spacing * s
    centered = f.values - f.values.mean()
    means = {r: ball_means(grid, centered, r) for r in fam.radii}
    best, arg = 0.0, None
    for r1 in fam.radii:
        for r2 in fam.radii:
            if 2 * r2 > r1 * (1 + 1e-12):
                continue
            reach = r1 - 2 * r2
            m = int(math.floor(reach / h + 1e-9))
            d = np.arange(-m, m + 1)
            D1, D2 = np.meshgrid(d, d, indexing="ij")
            keep = (D1 ** 2 + D2 ** 2) * h * h <= reach * reach * (1 + 1e-12)
            denom = 1.0 + math.log((1 - math.log(r2)) / (1 - math.log(r1)))
            A1, A2 = means[r1], means[r2]
            for o1, o2 in zip(D1[keep] * s, D2[keep] * s):
                diff = np.abs(np.roll(A2, (-o1, -o2), axis=(0, 1)) - A1)
                k = int(np.argmax(diff))
                val = float(diff.flat[k]) / denom
                if val > best:
                    i, j = divmod(k, grid.n)
                    c1 = (i * grid.spacing, j * grid.spacing)
                    c2 = ((i + o1) % grid.n * grid.spacing, (j + o2) % grid.n * grid.spacing)
                    best, arg = val, (Ball(c1, r1), Ball(c2, r2))
    return best, arg


def lbmo_norm(f: ScalarField, fam: BallFamily, q: float = 2.0, scan: OscillationScan | None = None) -> float:
    return bmo_norm(f, fam, q, scan) + lbmo_pair_term(f, fam)[0]


@dataclass
class NormReport:
    lp: dict[float, float]
    bmo: float
    lamo: dict[float, float]
    lbmo: float
    argmax_ball: dict[str, Ball]
    q_oscillation: float
    sup: float = 0.0

    def to_json(self) -> dict:
        return {
            "lp": {str(k): v for k, v in self.lp.items()},
            "bmo": self.bmo,
            "lamo": {str(k): v for k, v in self.lamo.items()},
            "lbmo": self.lbmo,
            "sup": self.sup,
            "q_oscillation": self.q_oscillation,
            "argmax_ball": {
                k: {"center": list(b.center), "radius": b.radius} for k, b in self.argmax_ball.items()
            },
        }


def norm_report(
    f: ScalarField,
    fam: BallFamily,
    alphas: Sequence[float] = (0.0, 0.5, 1.0, 2.0),
    ps: Sequence[float] = (1.0, 4 / 3, 2.0, 4.0),
    q: float = 2.0,
    with_lbmo: bool = True,
) -> NormReport:
    scan = OscillationScan(f, fam, q)
    balls = {}
    lamo = {}
    for a in alphas:
        e = lamo_norm(f, a, fam, q, scan)
        lamo[a] = e.value
        balls[f"lamo_{a:g}"] = e.argmax_ball
    bmo, bball = scan.bmo()
    balls["bmo"] = bball
    lbmo = float("nan")
    if with_lbmo:
        pair, pballs = lbmo_pair_term(f, fam)
        lbmo = bmo + pair
        if pballs is not None:
            balls["lbmo_outer"], balls["lbmo_inner"] = pballs
    return NormReport({p: f.lp_norm(p) for p in ps}, bmo, lamo, lbmo, balls, q, f.sup())


def tracking_norm(fam: BallFamily, alpha: float = 2.0, p: float = 1.5) -> Callable[[ScalarField], float]:
    """||f||_{L^p} + discrete L^alpha mo on a fixed family: the Trotter tracking norm."""

    def norm(f: ScalarField) -> float:
        return f.lp_norm(p) + lamo_norm(f, alpha, fam).value

    return norm


# --- velocity modulus ---------------------------------------------------------


def lbl_modulus(u: VectorField, beta: float, max_separation: float = 0.5) -> float:
    """Empirical L^beta L norm: sup |u(x)-u(y)| / (|x-y| |ln|x-y||^beta) + sup|u|.

    Pairs are grid nodes offset by dyadic multiples m of the spacing along the
    axes and diagonals, with |x - y| < ``max_separation``.
    """
    if not 0 <= beta <= 1:
        raise ValueError("beta must lie in [0, 1]")
    h = u.grid.spacing
    best = 0.0
    m = 1
    while m * h < max_separation and m < u.grid.n // 2:
        for o1, o2 in ((m, 0), (0, m), (m, m), (m, -m)):
            d = h * math.hypot(o1, o2)
            if d >= max_separation:
                continue
            du1 = np.roll(u.u1, (-o1, -o2), axis=(0, 1)) - u.u1
            du2 = np.roll(u.u2, (-o1, -o2), axis=(0, 1)) - u.u2
            q = float(np.sqrt(du1 ** 2 + du2 ** 2).max()) / (d * abs(math.log(d)) ** beta)
            best = max(best, q)
        m *= 2
    return best + u.max_speed()


# --- John-Nirenberg tails -----------------------------------------------------


@dataclass
class TailProfile:
    lambdas: np.ndarray
    fractions: np.ndarray
    alpha: float
    slope: float
    intercept: float
    r_squared: float
    n_fit: int
    norm_value: float | None = None

    @property
    def C1(self) -> float:
        return math.exp(self.intercept)

    @property
    def C2(self) -> float | None:
        return None if self.norm_value is None else -self.slope * self.norm_value


def john_nirenberg_profile(
    f: ScalarField,
    ball: Ball,
    alpha: float,
    lambdas: Sequence[float],
    fit_range: tuple[float, float] = (1e-4, 0.5),
    norm_value: float | None = None,
) -> TailProfile:
    """Fraction of ``ball`` where |f - avg f| > lambda; log-linear fit in lambda^(1/(1-alpha))."""
    if not 0 <= alpha < 1:
        raise ValueError("alpha must lie in [0, 1)")
    lam = np.asarray(lambdas, float)
    if np.any(lam <= 0) or np.any(np.diff(lam) <= 0):
        raise ValueError("lambda grid must be positive and increasing")
    vals = f.values[_ball_mask(f.grid, ball)]
    dev = np.sort(np.abs(vals - vals.mean()))
    # count of deviations strictly above each lambda
    frac = (dev.size - np.searchsorted(dev, lam, side="right")) / dev.size
    keep = (frac > 0) & (frac >= fit_range[0]) & (frac <= fit_range[1])
    slope = intercept = r2 = float("nan")
    if keep.sum() >= 3:
        x = lam[keep] ** (1.0 / (1.0 - alpha))
        fit = stats.linregress(x, np.log(frac[keep]))
        slope, intercept, r2 = float(fit.slope), float(fit.intercept), float(fit.rvalue ** 2)
    return TailProfile(lam, frac, alpha, slope, intercept, r2, int(keep.sum()), norm_value)


# --- interpolation inequality ---------------------------------------------------


@dataclass
class InterpolationTable:
    r: list[float]
    lr_norm: list[float]
    ratio: list[float]
    denominator: float
    alpha: float | None

    @property
    def max_ratio(self) -> float:
        return max(self.ratio) if self.ratio else 0.0


def interpolation_check(
    f: ScalarField, r_grid: Sequence[float], fam: BallFamily, alpha: float | None = None
) -> InterpolationTable:
    """||f||_{L^r} / (r ||f||_{L^2 cap BMO}); with ``alpha`` the denominator
    becomes r^(1-alpha) (||f||_{L^2} + ||f||_{L^alpha mo})."""
    if any(r < 2 for r in r_grid):
        raise ValueError("interpolation exponents must be >= 2")
    if alpha is None:
        denom = f.l2() + bmo_norm(f, fam)
    else:
        denom = f.l2() + lamo_norm(f, alpha, fam).value
    power = 1.0 if alpha is None else 1.0 - alpha
    rows_r, rows_n, rows_q = [], [], []
    for r in r_grid:
        lr = f.lp_norm(r)
        rows_r.append(float(r))
        rows_n.append(lr)
        rows_q.append(0.0 if denom == 0 else lr / (r ** power * denom))
    return InterpolationTable(rows_r, rows_n, rows_q, denom, alpha)


# --- composition with measure-preserving maps -----------------------------------


@dataclass(frozen=True)
class TorusMap:
    """x -> A (x - c) + c + s in node-index space (mod n), A integer with |det A| = 1."""

    matrix: tuple[tuple[int, int], tuple[int, int]] = ((1, 0), (0, 1))
    shift: tuple[int, int] = (0, 0)
    center: tuple[int, int] = (0, 0)
    label: str = "map"

    def __post_init__(self):
        A = np.asarray(self.matrix, float)
        if A.shape != (2, 2) or not np.all(A == np.round(A)):
            raise ValueError("map matrix must be a 2x2 integer matrix")
        if abs(round(float(np.linalg.det(A)))) != 1:
            raise ValueError("map is not measure-preserving (|det| != 1)")

    @classmethod
    def translation(cls, d1: int, d2: int) -> "TorusMap":
        return cls(shift=(int(d1), int(d2)), label=f"translation({d1},{d2})")

    @classmethod
    def rotation(cls, quarter_turns: int = 1, center: tuple[int, int] = (0, 0)) -> "TorusMap":
        R = np.array([[0, -1], [1, 0]])
        A = np.linalg.matrix_power(R, quarter_turns % 4)
        return cls(tuple(map(tuple, A.astype(int).tolist())), center=center, label=f"rotation({quarter_turns})")

    @classmethod
    def shear(cls, k: int = 1) -> "TorusMap":
        return cls(((1, k), (0, 1)), label=f"shear({k})")

    @property
    def K(self) -> float:
        """Bi-Lipschitz constant: max(sigma_max, 1/sigma_min) of the matrix."""
        s = np.linalg.svd(np.asarray(self.matrix, float), compute_uv=False)
        return float(max(s[0], 1.0 / s[-1]))

    def apply_to_field(self, f: ScalarField) -> ScalarField:
        """Return f o phi, exact on the grid (phi permutes the nodes)."""
        n = f.grid.n
        I, J = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        (a, b), (c, d) = self.matrix
        x1, x2 = I - self.center[0], J - self.center[1]
        p1 = (a * x1 + b * x2 + self.center[0] + self.shift[0]) % n
        p2 = (c * x1 + d * x2 + self.center[1] + self.shift[1]) % n
        return f.with_values(f.values[p1, p2])


def _norm_of_kind(f, kind, alpha, fam, q):
    if kind == "bmo":
        return bmo_norm(f, fam, q)
    if kind == "lamo":
        return lamo_norm(f, alpha, fam, q).value
    if kind == "lbmo":
        return lbmo_norm(f, fam, q)
    raise ValueError(f"unknown norm kind {kind!r}")


def composition_ratio(
    f: ScalarField, phi, norm_kind: str, fam: BallFamily, alpha: float = 1.0, q: float = 2.0
) -> tuple[float, float]:
    """(norm(f o phi) / norm(f), K_phi) on a shared ball family.

    ``phi`` is a :class:`TorusMap` or a flow map whose seeds are the grid
    nodes in row-major order (then f is interpolated at the mapped points).
    """
    if isinstance(phi, TorusMap):
        g = phi.apply_to_field(f)
        K = phi.K
    else:
        from .flow_map import bilipschitz_constant, compose_field

        g = compose_field(f, phi)
        K = bilipschitz_constant(phi)
    base = _norm_of_kind(f, norm_kind, alpha, fam, q)
    return _norm_of_kind(g, norm_kind, alpha, fam, q) / base, K


# --- dyadic diagnostic -----------------------------------------------------------


@dataclass
class DyadicDecay:
    value: float
    block_sups: dict[int, float]
    relative: float | None = None


def dyadic_decay_check(f: ScalarField, alpha: float, fam: BallFamily | None = None) -> DyadicDecay:
    """sup_{n >= 0} (1 + n)^alpha ||Delta_n f||_inf, optionally relative to ||f||_{L^alpha mo}."""
    sups = {b.index: b.sup for b in dyadic_decompose(f) if b.index >= 0}
    value = max(((1 + m) ** alpha * s for m, s in sups.items()), default=0.0)
    rel = None
    if fam is not None:
        base = lamo_norm(f, alpha, fam).value
        rel = value / base if base > 0 else 0.0
    return DyadicDecay(value, sups, rel)
