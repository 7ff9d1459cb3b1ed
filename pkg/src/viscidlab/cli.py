"""Command-line driver: ``viscidlab <command> --config run.json --out dir``.

Each command writes CSV tables, optional SVG charts and a ``manifest.json``
with sha256 digests, prints one PASS/FAIL line per verdict and exits 0 only
when every verdict passed.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import analysis
from .biot_savart import velocity_from_vorticity
from .camp_norms import Ball, BallFamily, TorusMap, composition_ratio, john_nirenberg_profile, norm_report, tracking_norm
from .flow_map import (
    AnalyticVelocity,
    SnapshotVelocity,
    dyadic_pair_seeds,
    integrate_flow,
    lipschitz_bound_check,
    modulus_profile,
    roundtrip_error,
    triangle_area_drift,
    triangle_seeds,
    velocity_lipschitz_integral,
    write_tracers_csv,
)
from .grid import GridError, PeriodicGrid, ScalarField, make_grid
from .initial_data import SMOOTH, make_initial, taylor_green_exact
from .records import load_config, resolve_config, write_columns, write_manifest, write_rows
from .timestep import CFLError, SchemeConfig, fit_order, simulate, trotter_run, write_trajectory

log = logging.getLogger("viscidlab")

TWO_PI = 2 * math.pi

DEFAULTS: dict[str, dict] = {
    "simulate": {
        "n": 64, "L": TWO_PI, "initial": "taylor_green", "initial_params": {},
        "epsilon": 0.01, "T": 0.5, "dt": 0.01, "sigma": 2.0, "snapshots": 10,
        "dealias": True, "write_fields": True, "seed": 0,
    },
    "invlimit": {
        "n": 128, "L": TWO_PI, "initial": "mollified_patch", "initial_params": {"width": 0.05},
        "epsilons": [1e-2, 3e-3, 1e-3, 3e-4, 1e-4], "T": 1.0, "dt": 0.01, "snapshots": 10,
        "delta": 0.2, "C0": None, "jmax": 2, "seed": 0,
    },
    "trotter": {
        "n": 128, "L": TWO_PI, "initial": "mollified_patch", "initial_params": {"width": 0.05},
        "epsilon": 0.01, "T": 1.0, "n_subintervals": [8, 16, 32, 64], "inner_dt": 0.005,
        "reference_dt": None,
        "bound": {"epsilon": 1e-3, "n_subintervals": 32, "horizon_cap": 4.0, "inner_dt": 0.002,
                  "jmax": 2, "alpha": 2.0, "p": 1.5},
        "seed": 0,
    },
    "norms": {
        "n_list": [256, 512, 1024], "L": TWO_PI, "initial": "lmo_exemplar", "initial_params": {},
        "alphas": [0.0, 0.5, 1.0], "ps": [1.0, 2.0, 4.0], "jmax": None, "with_lbmo": True,
        "john_nirenberg": {"alphas": [0.0, 0.5], "radius": 0.5, "n_lambda": 200},
        "seed": 0,
    },
    "compose": {
        "n": 256, "L": TWO_PI,
        "corpus": [
            {"initial": "lmo_exemplar", "params": {}},
            {"initial": "mollified_patch", "params": {"width": 0.05}},
            {"initial": "random_seeded", "params": {}},
            {"initial": "sign_step", "params": {}},
        ],
        "maps": [
            {"kind": "rotation", "quarter_turns": 1, "center": [128, 128]},
            {"kind": "translation", "shift": [17, -5]},
            {"kind": "shear", "k": 1},
            {"kind": "shear", "k": 2},
        ],
        "norms": ["bmo", "lamo", "lbmo"], "alpha": 1.0, "jmax": None, "seed": 0,
    },
    "flow": {
        "n": 64, "L": TWO_PI,
        "velocity": {"kind": "vorticity", "initial": "taylor_green", "params": {}, "epsilon": 0.0,
                     "speed": [1.0, 0.0]},
        "T": 1.0, "dt": 0.01, "snapshots": 10, "n_seeds": 400, "alpha": 0.0,
        "pair_base": 64, "pair_jmin": 2, "pair_jmax": 8, "n_triangles": 100, "triangle_size": 1e-3,
        "lipschitz_tol": 0.05, "seed": 0,
    },
}


@dataclass
class Verdict:
    name: str
    passed: bool
    detail: str

    def to_json(self) -> dict:
        return {"name": self.name, "passed": bool(self.passed), "detail": self.detail}

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


@dataclass
class Context:
    out: Path
    workers: int
    plots: bool
    timings: dict

    def stage(self, name: str, start: float) -> None:
        self.timings[name] = time.perf_counter() - start


def parallel_map(fn, items, workers: int) -> list:
    """Ordered map; results do not depend on the worker count."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as ex:
        return list(ex.map(fn, items))


def _initial(grid: PeriodicGrid, name: str, params: dict, seed: int) -> ScalarField:
    params = dict(params)
    if name == "random_seeded":
        params.setdefault("seed", seed)
    try:
        return make_initial(name, grid, **params)
    except TypeError as exc:
        raise ValueError(f"bad parameters for initial data {name!r}: {exc}") from None


def _write_summary(ctx: Context, summary: dict) -> None:
    (ctx.out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


def _plot(ctx: Context, *args, **kw) -> None:
    if ctx.plots:
        from .plotting import line_chart

        line_chart(*args, **kw)


# --- simulate -------------------------------------------------------------------------


def cmd_simulate(cfg: dict, ctx: Context) -> list[Verdict]:
    t0 = time.perf_counter()
    grid = make_grid(cfg["n"], cfg["L"])
    w0 = _initial(grid, cfg["initial"], cfg["initial_params"], cfg["seed"])
    eps, T = float(cfg["epsilon"]), float(cfg["T"])
    sim = simulate(w0, eps, T, cfg["dt"], cfg["sigma"], T / cfg["snapshots"], cfg["dealias"])
    ctx.stage("integrate", t0)

    t0 = time.perf_counter()
    if cfg["write_fields"]:
        write_trajectory(ctx.out / "fields", sim.times, sim.snapshots, name="w")
    balance = sim.energy_balance_error()
    write_columns(ctx.out / "history.csv", {
        "t": sim.times,
        "energy": sim.energy,
        "enstrophy": sim.enstrophy,
        "l2_vorticity": [w.l2() for w in sim.snapshots],
        "mean": [w.mean() for w in sim.snapshots],
        "sup": [w.sup() for w in sim.snapshots],
        "energy_balance": balance,
    })
    _plot(ctx, ctx.out / "history.csv", ctx.out / "history.svg", "t", ["energy", "enstrophy"], ylabel="value")
    ctx.stage("write", t0)

    verdicts = []
    final = sim.snapshots[-1]
    summary = {"dt": sim.dt, "final_l2": final.l2()}
    if cfg["initial"] == "taylor_green" and cfg["sigma"] == 2.0:
        amp = cfg["initial_params"].get("amplitude", 1.0)
        exact = taylor_green_exact(grid, T, eps, amp)
        rel = (final - exact).l2() / exact.l2()
        summary["taylor_green_rel_error"] = rel
        print(f"final relative L2 error vs exact solution: {rel:.3e}")
        verdicts.append(Verdict("taylor_green_exact", rel < 1e-8, f"relative L2 error {rel:.3e} (< 1e-8)"))
    if eps == 0.0:
        mean_drift = abs(final.mean() - w0.mean())
        l2_drift = abs(final.l2() - w0.l2()) / max(w0.l2(), 1e-300)
        summary.update(mean_drift=mean_drift, l2_drift=l2_drift)
        verdicts.append(Verdict("euler_mean", mean_drift <= 1e-12, f"mean drift {mean_drift:.2e} (<= 1e-12)"))
        verdicts.append(Verdict("euler_l2", l2_drift <= 1e-6, f"relative L2 drift {l2_drift:.2e} (<= 1e-6)"))
        if cfg["initial"] == "shear":
            d = float(np.abs(final.values - w0.values).max())
            summary["shear_drift"] = d
            verdicts.append(Verdict("shear_stationary", d <= 1e-10, f"max |w(T) - w0| = {d:.2e} (<= 1e-10)"))
    elif cfg["sigma"] == 2.0:
        err = float(np.abs(balance).max())
        summary["energy_balance"] = err
        verdicts.append(Verdict("energy_balance", err <= 1e-5, f"max relative defect {err:.2e} (<= 1e-5)"))
    _write_summary(ctx, summary)
    return verdicts


# --- invlimit -------------------------------------------------------------------------


def _reference_task(args) -> tuple[list[float], np.ndarray]:
    n, L, name, params, seed, eps, T, dt, snaps = args
    grid = make_grid(n, L)
    sim = simulate(_initial(grid, name, params, seed), eps, T, dt, snapshot_every=T / snaps)
    return sim.times, np.stack([w.values for w in sim.snapshots])


def _velocity_gap(grid: PeriodicGrid, a: np.ndarray, b: np.ndarray) -> float:
    ua = velocity_from_vorticity(ScalarField(grid, a))
    ub = velocity_from_vorticity(ScalarField(grid, b))
    return float(np.sum((ua.u1 - ub.u1) ** 2 + (ua.u2 - ub.u2) ** 2)) * grid.cell_area


def cmd_invlimit(cfg: dict, ctx: Context) -> list[Verdict]:
    eps_list = [float(e) for e in cfg["epsilons"]]
    if len(eps_list) < 3:
        raise ValueError("need >= 3 viscosities")
    if any(e <= 0 for e in eps_list):
        raise ValueError("viscosities must be positive")
    grid = make_grid(cfg["n"], cfg["L"])
    delta = float(cfg["delta"])
    base = (cfg["n"], cfg["L"], cfg["initial"], cfg["initial_params"], cfg["seed"])
    tail = (cfg["T"], cfg["dt"], cfg["snapshots"])

    t0 = time.perf_counter()
    runs = parallel_map(_reference_task, [base + (e,) + tail for e in [0.0] + eps_list], ctx.workers)
    ctx.stage("runs", t0)

    t0 = time.perf_counter()
    times, ref = runs[0]
    g = np.array([[_velocity_gap(grid, run[1][k], ref[k]) for run in runs[1:]] for k in range(len(times))])
    fit = analysis.fit_rate(times, eps_list, g)
    fit.to_csv(ctx.out / "rates.csv")

    # growth constant from the reference run's norm history
    fam = BallFamily.dyadic(grid, jmax=cfg["jmax"])
    from .camp_norms import lamo_norm

    norms = []
    for k, t in enumerate(times):
        w = ScalarField(grid, ref[k])
        norms.append(w.l2() + lamo_norm(w, analysis.alpha_schedule(t, delta), fam).value)
    growth = analysis.apriori_growth_check(times, norms)
    C0 = float(cfg["C0"]) if cfg["C0"] is not None else growth.C0
    ctx.stage("fit", t0)

    blbmo = [analysis.beta_lbmo(t, C0) for t in times]
    blmo = [analysis.beta_lmo(t, C0, delta) for t in times]
    write_columns(ctx.out / "theory.csv", {
        "t": times,
        "alpha": [analysis.alpha_schedule(t, delta) for t in times],
        "norm": norms,
        "beta_lbmo": blbmo,
        "beta_lmo": blmo,
        "half_beta_lbmo": [0.5 * b for b in blbmo],
        "half_beta_lmo": [0.5 * b for b in blmo],
        "exponent_u": fit.per_norm_exponent,
    })
    T = float(cfg["T"])
    bT = analysis.beta_lbmo(T, C0)
    write_rows(ctx.out / "smallness.csv", ["epsilon", "C0", "beta_T", "admissible"],
               [(e, C0, bT, analysis.smallness_condition(C0, T, e, bT)) for e in eps_list])
    _plot(ctx, ctx.out / "theory.csv", ctx.out / "exponents.svg", "t",
          ["exponent_u", "half_beta_lbmo", "half_beta_lmo"], ylabel="exponent of eps in ||U||")

    ex = fit.per_norm_exponent
    live = ~np.isnan(ex)
    for flag in fit.flags:
        print(f"note: {flag}")
    verdicts = []
    if cfg["initial"] in SMOOTH:
        lo = float(np.min(ex[live]))
        verdicts.append(Verdict("smooth_rate", lo >= 0.5, f"min exponent {lo:.4f} over t in (0,T] (>= 0.5)"))
    else:
        e_live, t_live = ex[live], np.asarray(times)[live]
        monotone = bool(np.all(np.diff(e_live) <= 0))
        floor = (1 - delta) / 2 - 0.05
        lo = float(e_live.min())
        verdicts.append(Verdict("rough_rate_monotone", monotone, f"exponents {np.round(e_live, 4).tolist()}"))
        verdicts.append(Verdict("rough_rate_floor", lo >= floor, f"min exponent {lo:.4f} (>= {floor:.3f})"))
        theory = np.array([0.5 * analysis.beta_lmo(t, C0, delta) for t in t_live])
        gap = float(np.min(e_live - 0.9 * theory))
        verdicts.append(Verdict("rough_rate_vs_theory", gap >= 0,
                                f"min(exponent - 0.9 * beta_lmo/2) = {gap:.4f} with C0 = {C0:.4g}"))
    verdicts.append(Verdict("growth_constant", growth.finite, f"fitted C0 = {growth.C0:.6g}"))
    _write_summary(ctx, {"C0": C0, "C0_fitted": growth.C0, "flags": fit.flags})
    return verdicts


# --- trotter -------------------------------------------------------------------------


def _trotter_task(args) -> np.ndarray:
    n, L, name, params, seed, eps, T, nsub, inner_dt = args
    grid = make_grid(n, L)
    w0 = _initial(grid, name, params, seed)
    h = T / nsub
    traj = trotter_run(w0, SchemeConfig(eps, T, nsub, min(inner_dt, h / 4)))
    return traj.final.values


def _ns_task(args) -> np.ndarray:
    return _reference_task(args)[1][-1]


def uniform_bound_run(w0: ScalarField, b: dict):
    """Fit mu from a pilot run on [0, cap], then rerun on T with exp(2 mu T X0) = 2.

    Returns (mu, X0, T, trajectory). A non-positive mu keeps T at the cap.
    """
    fam = BallFamily.dyadic(w0.grid, jmax=b["jmax"])
    norm = tracking_norm(fam, b["alpha"], b["p"])
    cap = float(b["horizon_cap"])
    nb = int(b["n_subintervals"])
    pilot = trotter_run(w0, SchemeConfig(b["epsilon"], cap, nb, min(b["inner_dt"], cap / nb / 4)), norm)
    mu = pilot.fitted_mu()
    X0 = pilot.norm_history[0]
    Tb = min(cap, math.log(2) / (2 * mu * X0)) if mu > 0 else cap
    run = trotter_run(w0, SchemeConfig(b["epsilon"], Tb, nb, min(b["inner_dt"], Tb / nb / 4)), norm)
    return mu, X0, Tb, run


def cmd_trotter(cfg: dict, ctx: Context) -> list[Verdict]:
    n_list = [int(k) for k in cfg["n_subintervals"]]
    for k in n_list:
        if k <= 0 or k % 2:
            raise ValueError(f"n_subintervals must be positive even integers, got {k}")
    grid = make_grid(cfg["n"], cfg["L"])
    w0 = _initial(grid, cfg["initial"], cfg["initial_params"], cfg["seed"])
    eps, T, inner = float(cfg["epsilon"]), float(cfg["T"]), float(cfg["inner_dt"])
    SchemeConfig(eps, T, n_list[0], min(inner, T / n_list[0] / 4))  # validate early
    ref_dt = cfg["reference_dt"] or inner / 2
    base = (cfg["n"], cfg["L"], cfg["initial"], cfg["initial_params"], cfg["seed"])

    t0 = time.perf_counter()
    refs = parallel_map(_ns_task, [base + (e, T, ref_dt, 1) for e in (eps, 0.0)], ctx.workers)
    tasks = [base + (e, T, k, inner) for e in (eps, 0.0) for k in n_list]
    finals = parallel_map(_trotter_task, tasks, ctx.workers)
    ctx.stage("splitting", t0)

    m = len(n_list)
    err = [ScalarField(grid, finals[i] - refs[0]).l2() for i in range(m)]
    err0 = [ScalarField(grid, finals[m + i] - refs[1]).l2() for i in range(m)]
    order = fit_order(n_list, err)
    write_columns(ctx.out / "trotter_errors.csv", {"n": n_list, "error": err, "euler_error": err0})
    _plot(ctx, ctx.out / "trotter_errors.csv", ctx.out / "trotter_errors.svg", "n", ["error", "euler_error"],
          ylabel="L2 error at T", logx=True, logy=True)

    t0 = time.perf_counter()
    mu, X0, Tb, run = uniform_bound_run(w0, cfg["bound"])
    ratio = run.bound_ratio()
    ctx.stage("uniform_bound", t0)
    write_columns(ctx.out / "bound.csv", {
        "k": list(range(len(run.times))),
        "t": run.times,
        "stage": ["start"] + run.stage_tags,
        "norm": run.stage_norms,
        "X": run.norm_history,
    })
    _plot(ctx, ctx.out / "bound.csv", ctx.out / "bound.svg", "t", ["norm", "X"], ylabel="tracking norm")

    verdicts = []
    tiny = max(err) <= 1e-8
    if tiny:
        verdicts.append(Verdict("trotter_invariant", True, f"max error {max(err):.2e} (<= 1e-8)"))
    else:
        verdicts.append(Verdict("trotter_order", order >= 0.9, f"fitted order {order:.4f} (>= 0.9), errors {[f'{e:.3e}' for e in err]}"))
    scale = w0.l2()
    worst = max(e * k / scale for e, k in zip(err0, n_list)) if scale > 0 else 0.0
    verdicts.append(Verdict("trotter_inviscid", worst <= 1.0,
                            f"max n * error / ||w0|| = {worst:.2e} against doubled-speed Euler (<= 1)"))
    verdicts.append(Verdict("uniform_bound", ratio <= 2.1,
                            f"max X_k / X_0 = {ratio:.4f} (<= 2.1) on T = {Tb:.4g}, mu = {mu:.4g}"))
    _write_summary(ctx, {"order": order, "errors": err, "euler_errors": err0, "mu": mu, "X0": X0,
                         "bound_T": Tb, "bound_ratio": ratio, "exp_2muTX0": math.exp(2 * mu * Tb * X0)})
    return verdicts


# --- norms ----------------------------------------------------------------------------


def _norms_task(args) -> dict:
    n, L, name, params, seed, alphas, ps, jmax, with_lbmo = args
    grid = make_grid(n, L)
    f = _initial(grid, name, params, seed)
    fam = BallFamily.dyadic(grid, jmax=jmax)
    rep = norm_report(f, fam, alphas, ps, with_lbmo=with_lbmo)
    return {"n": n, "jmax": fam.jmax, "report": rep.to_json()}


def cmd_norms(cfg: dict, ctx: Context) -> list[Verdict]:
    alphas = [float(a) for a in cfg["alphas"]]
    ps = [float(p) for p in cfg["ps"]]
    n_list = sorted(int(n) for n in cfg["n_list"])
    t0 = time.perf_counter()
    tasks = [(n, cfg["L"], cfg["initial"], cfg["initial_params"], cfg["seed"], alphas, ps, cfg["jmax"],
              cfg["with_lbmo"]) for n in n_list]
    out = parallel_map(_norms_task, tasks, ctx.workers)
    ctx.stage("norms", t0)

    cols = {"n": n_list, "jmax": [o["jmax"] for o in out]}
    for p in ps:
        cols[f"lp_{p:g}"] = [o["report"]["lp"][str(p)] for o in out]
    cols["bmo"] = [o["report"]["bmo"] for o in out]
    for a in alphas:
        cols[f"lamo_{a:g}"] = [o["report"]["lamo"][str(a)] for o in out]
    cols["lbmo"] = [o["report"]["lbmo"] for o in out]
    cols["sup"] = [o["report"]["sup"] for o in out]
    write_columns(ctx.out / "norms.csv", cols)
    (ctx.out / "argmax_balls.json").write_text(
        json.dumps({str(o["n"]): o["report"]["argmax_ball"] for o in out}, indent=2, sort_keys=True) + "\n")
    lam_cols = [k for k in cols if k.startswith("lamo_")]
    _plot(ctx, ctx.out / "norms.csv", ctx.out / "norms.svg", "n", lam_cols + ["bmo", "sup"], logx=True,
          ylabel="norm value")

    verdicts = []
    name = cfg["initial"]
    if name == "lmo_exemplar" and 1.0 in alphas:
        v = np.asarray(cols["lamo_1"])
        spread = float(v.max() / v.min() - 1)
        verdicts.append(Verdict("lamo_stable", spread <= 0.10, f"lamo(1) values {np.round(v, 4).tolist()}, spread {spread:.3f} (<= 0.10)"))
        s = np.diff(cols["sup"])
        verdicts.append(Verdict("sup_increasing", bool(np.all(s > 0)), f"sup increments {np.round(s, 4).tolist()}"))
    if name == "sign_step" and 1.0 in alphas:
        v = np.diff(cols["lamo_1"])
        verdicts.append(Verdict("lamo_diverges", bool(np.all(v > 0)), f"lamo(1) increments {np.round(v, 4).tolist()}"))
        bm = np.asarray(cols["bmo"])
        spread = float(bm.max() / bm.min() - 1)
        verdicts.append(Verdict("bmo_stable", spread <= 0.05, f"bmo spread {spread:.4f} (<= 0.05)"))

    jn = cfg.get("john_nirenberg")
    if jn:
        t0 = time.perf_counter()
        grid = make_grid(n_list[-1], cfg["L"])
        f = _initial(grid, name, cfg["initial_params"], cfg["seed"])
        ball = Ball((grid.L / 2, grid.L / 2), float(jn["radius"]))
        from .camp_norms import _ball_mask

        vals = f.values[_ball_mask(grid, ball)]
        top = float(np.abs(vals - vals.mean()).max())
        lambdas = np.linspace(top / jn["n_lambda"], top, int(jn["n_lambda"]))
        rows, fits = [], []
        for a in jn["alphas"]:
            prof = john_nirenberg_profile(f, ball, float(a), lambdas)
            rows += [(a, lam, fr) for lam, fr in zip(prof.lambdas, prof.fractions)]
            fits.append((a, prof.slope, prof.intercept, prof.r_squared, prof.n_fit))
            ok = prof.n_fit >= 3 and prof.r_squared >= 0.9
            verdicts.append(Verdict(f"john_nirenberg_alpha_{a:g}", ok, f"R^2 = {prof.r_squared:.4f} over {prof.n_fit} points (>= 0.9)"))
        write_rows(ctx.out / "jn_tail.csv", ["alpha", "lambda", "fraction"], rows)
        write_rows(ctx.out / "jn_fit.csv", ["alpha", "slope", "intercept", "r_squared", "n_fit"], fits)
        ctx.stage("john_nirenberg", t0)
    _write_summary(ctx, {"n_list": n_list, "reports": {str(o["n"]): o["report"] for o in out}})
    return verdicts


# --- compose --------------------------------------------------------------------------


def _make_map(mdef: dict) -> TorusMap:
    kind = mdef["kind"]
    if kind == "rotation":
        return TorusMap.rotation(int(mdef.get("quarter_turns", 1)), tuple(mdef.get("center", (0, 0))))
    if kind == "translation":
        return TorusMap.translation(*mdef["shift"])
    if kind == "shear":
        return TorusMap.shear(int(mdef.get("k", 1)))
    if kind == "matrix":
        return TorusMap(tuple(map(tuple, mdef["matrix"])), tuple(mdef.get("shift", (0, 0))), label="matrix")
    raise ValueError(f"unknown map kind {kind!r}")


def _compose_task(args) -> list[tuple]:
    n, L, entry, seed, maps, kinds, alpha, jmax = args
    grid = make_grid(n, L)
    f = _initial(grid, entry["initial"], entry.get("params", {}), seed)
    fam = BallFamily.dyadic(grid, jmax=jmax)
    rows = []
    for mdef in maps:
        phi = _make_map(mdef)
        for kind in kinds:
            r, K = composition_ratio(f, phi, kind, fam, alpha)
            rows.append((entry["initial"], phi.label, K, kind, r))
    return rows


def cmd_compose(cfg: dict, ctx: Context) -> list[Verdict]:
    for mdef in cfg["maps"]:
        _make_map(mdef)  # validate before spawning work
    t0 = time.perf_counter()
    tasks = [(cfg["n"], cfg["L"], e, cfg["seed"], cfg["maps"], cfg["norms"], cfg["alpha"], cfg["jmax"])
             for e in cfg["corpus"]]
    rows = [r for part in parallel_map(_compose_task, tasks, ctx.workers) for r in part]
    ctx.stage("compose", t0)
    write_rows(ctx.out / "compose.csv", ["field", "map", "K", "norm", "ratio"], rows)

    verdicts = []
    iso = [r for r in rows if abs(r[2] - 1) < 1e-12]
    if iso:
        dev = max(abs(r[4] - 1) for r in iso)
        verdicts.append(Verdict("isometry_ratio", dev <= 1e-6, f"max |ratio - 1| = {dev:.2e} over {len(iso)} cases (<= 1e-6)"))
    stretch = [r for r in rows if r[2] > 1 + 1e-12 and r[3] == "bmo"]
    c_hat = None
    if stretch:
        # calibrate c on the mildest stretch, then test it on every stronger one
        k_min = min(r[2] for r in stretch)
        calib = [r for r in stretch if abs(r[2] - k_min) < 1e-12]
        held = [r for r in stretch if r[2] > k_min + 1e-12]
        c_hat = max(max((r[4] - 1) / math.log(r[2]) for r in calib), 0.0)
        low = min(r[4] for r in stretch)
        verdicts.append(Verdict("stretch_bmo_lower", low >= 1 - 1e-6, f"min BMO ratio {low:.6f} (>= 1 - 1e-6)"))
        if held:
            excess = max(r[4] - (1 + c_hat * math.log(r[2])) for r in held)
            verdicts.append(Verdict("stretch_bmo_log_bound", excess <= 0,
                                    f"c = {c_hat:.4f} fitted at K = {k_min:.4f}; worst excess at larger K {excess:.4f} (<= 0)"))
    _write_summary(ctx, {"c_hat": c_hat, "rows": [list(r) for r in rows]})
    return verdicts


# --- flow -----------------------------------------------------------------------------


def _velocity_source(cfg: dict, grid: PeriodicGrid, times: np.ndarray, seed: int):
    """(velocity source, V at ``times``)."""
    v = cfg["velocity"]
    kind = v["kind"]
    if kind == "zero":
        return AnalyticVelocity(lambda t, x, y: (0.0, 0.0), grid.L, 0.0), np.zeros_like(times)
    if kind == "translation":
        a, b = (float(c) for c in v["speed"])
        return AnalyticVelocity(lambda t, x, y: (a, b), grid.L, math.hypot(a, b)), np.zeros_like(times)
    if kind == "sin_shear":
        return AnalyticVelocity(lambda t, x, y: (0.0, np.sin(x)), grid.L, 1.0), times.copy()
    if kind == "vorticity":
        w0 = _initial(grid, v["initial"], v.get("params", {}), seed)
        T = times[-1]
        sim = simulate(w0, float(v.get("epsilon", 0.0)), T, cfg["dt"], snapshot_every=T / (len(times) - 1))
        return SnapshotVelocity.from_vorticity(sim.times, sim.snapshots), velocity_lipschitz_integral(sim.times, sim.snapshots)
    raise ValueError(f"unknown velocity kind {kind!r}")


def cmd_flow(cfg: dict, ctx: Context) -> list[Verdict]:
    grid = make_grid(cfg["n"], cfg["L"])
    T, snaps = float(cfg["T"]), int(cfg["snapshots"])
    per = max(1, math.ceil(T / snaps / cfg["dt"] - 1e-9))
    dt = T / (snaps * per)
    times = np.linspace(0.0, T, snaps + 1)
    t0 = time.perf_counter()
    source, V = _velocity_source(cfg, grid, times, cfg["seed"])
    ctx.stage("velocity", t0)

    t0 = time.perf_counter()
    rng = np.random.default_rng(cfg["seed"])
    seeds = rng.uniform(0, grid.L, size=(int(cfg["n_seeds"]), 2))
    fwd = integrate_flow(source, seeds, 0.0, T, dt, "forward", record_every=per)
    back = integrate_flow(source, seeds, 0.0, T, dt, "backward")
    write_tracers_csv(ctx.out / "tracers.csv", fwd)
    lip_rows = []
    ok_all = True
    for k, t in enumerate(fwd.times):
        rep = lipschitz_bound_check(fwd, float(V[k]), cfg["lipschitz_tol"], record=k)
        ok_all &= rep["holds"]
        lip_rows.append((t, "forward", rep["K"], rep["log_K"], rep["V"], rep["holds"]))
    rep_b = lipschitz_bound_check(back, float(V[-1]), cfg["lipschitz_tol"])
    ok_all &= rep_b["holds"]
    lip_rows.append((T, "backward", rep_b["K"], rep_b["log_K"], rep_b["V"], rep_b["holds"]))
    write_rows(ctx.out / "lipschitz.csv", ["t", "direction", "K", "log_K", "V", "holds"], lip_rows)
    _plot(ctx, ctx.out / "lipschitz.csv", ctx.out / "lipschitz.svg", "t", ["log_K", "V"], ylabel="value")

    pseeds, pairs, seps = dyadic_pair_seeds(grid.L, int(cfg["pair_base"]), int(cfg["pair_jmin"]),
                                            int(cfg["pair_jmax"]), int(cfg["seed"]))
    pfm = integrate_flow(source, pseeds, 0.0, T, dt, "forward", pairs=pairs, pair_separation=seps)
    prof = modulus_profile(pfm, float(cfg["alpha"]))
    write_columns(ctx.out / "modulus.csv", {"d": prof.separations, "growth": prof.growth, "ratio": prof.ratio})
    _plot(ctx, ctx.out / "modulus.csv", ctx.out / "modulus.svg", "d", ["ratio"], logx=True, ylabel="growth / d")

    rt = roundtrip_error(source, seeds, 0.0, T, dt)
    tri_pts, tri = triangle_seeds(grid.L, int(cfg["n_triangles"]), float(cfg["triangle_size"]), int(cfg["seed"]))
    area = triangle_area_drift(integrate_flow(source, tri_pts, 0.0, T, dt), tri)
    ctx.stage("tracers", t0)

    verdicts = [
        Verdict("lipschitz_bound", bool(ok_all),
                f"log K <= V (1 + {cfg['lipschitz_tol']:g}) at {len(lip_rows)} records; final log K = {lip_rows[-2][3]:.4f}, V = {V[-1]:.4f}"),
        Verdict("roundtrip", rt < grid.spacing / 4, f"max |psi^-1(psi(x)) - x| = {rt:.2e} (< {grid.spacing / 4:.3e})"),
        Verdict("area_preservation", area < 0.01, f"max relative triangle area change {area:.2e} (< 0.01)"),
    ]
    if cfg["velocity"]["kind"] in ("zero", "translation"):
        dev = float(np.abs(prof.ratio - 1).max())
        verdicts.append(Verdict("isometric_modulus", dev <= 1e-9, f"max |growth ratio - 1| = {dev:.2e}"))
    _write_summary(ctx, {"dt": dt, "fitted_eta_V": prof.fitted_eta_V, "roundtrip": rt, "area_drift": area,
                         "V": [float(x) for x in V], "n_seeds": int(cfg["n_seeds"])})
    return verdicts


COMMANDS = {
    "simulate": cmd_simulate,
    "invlimit": cmd_invlimit,
    "trotter": cmd_trotter,
    "norms": cmd_norms,
    "compose": cmd_compose,
    "flow": cmd_flow,
}


def _default_workers() -> int:
    raw = os.environ.get("VISCIDLAB_WORKERS")
    if raw is None:
        return 1
    try:
        k = int(raw)
    except ValueError:
        raise SystemExit(f"error: VISCIDLAB_WORKERS must be an integer, got {raw!r}")
    return max(1, k)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="viscidlab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", type=Path, help="JSON config or a previous manifest.json")
        s.add_argument("--out", type=Path, default=None, help="output directory (default runs/<command>)")
        s.add_argument("--workers", type=int, default=None, help="parallel runs (default $VISCIDLAB_WORKERS or 1)")
        s.add_argument("--seed", type=int, default=None, help="random seed (overrides the config)")
        s.add_argument("--no-plots", action="store_true", help="skip SVG charts")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    workers = args.workers if args.workers is not None else _default_workers()
    if workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return 2
    try:
        given, from_cmd = ({}, None) if args.config is None else load_config(args.config)
        if from_cmd is not None and from_cmd != args.command:
            raise ValueError(f"manifest is for {from_cmd!r}, not {args.command!r}")
        cfg = resolve_config(DEFAULTS[args.command], given)
        if "initial" in given and "initial_params" not in given:
            cfg["initial_params"] = {}  # default params belong to the default initial data
        if args.seed is not None:
            cfg["seed"] = args.seed
        if not 0 <= int(cfg["seed"]) < 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        out = args.out or Path("runs") / args.command
        out.mkdir(parents=True, exist_ok=True)
        ctx = Context(out, workers, not args.no_plots, {})
        verdicts = COMMANDS[args.command](cfg, ctx)
    except (GridError, CFLError, ValueError, KeyError, OSError) as exc:
        cause = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"error: {cause}", file=sys.stderr)
        return 2
    write_manifest(out, args.command, cfg, workers, ctx.timings, verdicts)
    for v in verdicts:
        print(v.line())
    return 0 if all(v.passed for v in verdicts) else 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
