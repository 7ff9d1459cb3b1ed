"""Acceptance criteria, one test each; every test prints a PASS/FAIL line."""
import json
import math

import numpy as np
import pytest

from viscidlab.analysis import osgood_bound
from viscidlab.cli import DEFAULTS, _initial, run, uniform_bound_run
from viscidlab.grid import make_grid
from viscidlab.records import read_columns

pytestmark = pytest.mark.slow


class Runs:
    """CLI runs shared across the module, keyed by (command, config)."""

    def __init__(self, root):
        self.root = root
        self.cache = {}

    def __call__(self, command, cfg=None, *extra):
        key = (command, json.dumps(cfg or {}, sort_keys=True), extra)
        if key not in self.cache:
            out = self.root / f"run{len(self.cache)}_{command}"
            args = [command, "--out", str(out), "--no-plots", *extra]
            if cfg:
                path = self.root / f"cfg{len(self.cache)}.json"
                path.write_text(json.dumps(cfg))
                args += ["--config", str(path)]
            rc = run(args)
            man = json.loads((out / "manifest.json").read_text())
            self.cache[key] = (rc, out, {v["name"]: v for v in man["verdicts"]})
        return self.cache[key]


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    return Runs(tmp_path_factory.mktemp("acceptance"))


def _summary(out):
    return json.loads((out / "summary.json").read_text())


def _check(verdicts, names):
    ok = all(verdicts[n]["passed"] for n in names)
    return ok, "; ".join(f"{n}: {verdicts[n]['detail']}" for n in names)


def test_criterion_1_exact_solutions(runs, criterion):
    _, out, v1 = runs("simulate", {"n": 64, "epsilon": 0.01, "T": 0.5})
    _, _, v2 = runs("simulate", {"n": 64, "initial": "shear", "epsilon": 0.0, "T": 1.0})
    ok1, d1 = _check(v1, ["taylor_green_exact"])
    ok2, d2 = _check(v2, ["shear_stationary"])
    assert criterion(1, ok1 and ok2, f"{d1}; {d2}")


def test_criterion_2_conservation(runs, criterion):
    _, _, ve = runs("simulate", {"n": 64, "initial": "random_seeded", "epsilon": 0.0, "T": 1.0})
    _, _, vn = runs("simulate", {"n": 64, "initial": "random_seeded", "epsilon": 0.01, "T": 1.0})
    _, _, vt = runs("simulate", {"n": 64, "epsilon": 0.01, "T": 0.5})
    oke, de = _check(ve, ["euler_mean", "euler_l2"])
    okn, dn = _check(vn, ["energy_balance"])
    okt, dt = _check(vt, ["energy_balance"])
    assert criterion(2, oke and okn and okt, f"{de}; random NS {dn}; Taylor-Green {dt}")


def test_criterion_3_trotter(runs, criterion):
    _, out, v = runs("trotter", {"n": 128, "initial": "mollified_patch", "n_subintervals": [8, 16, 32, 64]})
    ok, d = _check(v, ["trotter_order", "trotter_inviscid"])
    err = read_columns(out / "trotter_errors.csv")["error"]
    dec = bool(np.all(np.diff(err) < 0))
    assert criterion(3, ok and dec, f"errors decreasing {dec}; {d}")


CORPUS = [
    ("random_seeded", {}),
    ("mollified_patch", {"width": 0.05, "aspect": 2.0}),
    ("lmo_exemplar", {}),
    ("taylor_green", {}),
]


def test_criterion_4_uniform_bound(criterion):
    grid = make_grid(128)
    bound = DEFAULTS["trotter"]["bound"]
    parts, ok = [], True
    for name, params in CORPUS:
        mu, X0, T, traj = uniform_bound_run(_initial(grid, name, params, 0), bound)
        ratio = traj.bound_ratio()
        ok &= ratio <= 2.1
        parts.append(f"{name} mu={mu:.3g} T={T:.3g} ratio={ratio:.4f}")
    assert criterion(4, ok, "max X_k/X_0 <= 2.1: " + ", ".join(parts))


def test_criterion_5_inviscid_rates(runs, criterion):
    eps = [1e-2, 3e-3, 1e-3, 3e-4, 1e-4]
    _, _, vs = runs("invlimit", {"n": 128, "initial": "taylor_green", "epsilons": eps})
    _, _, vr = runs("invlimit", {"n": 128, "initial": "mollified_patch", "initial_params": {"width": 0.05},
                                 "epsilons": eps, "delta": 0.2})
    oks, ds = _check(vs, ["smooth_rate"])
    okr, dr = _check(vr, ["rough_rate_monotone", "rough_rate_floor"])
    assert criterion(5, oks and okr, f"smooth {ds}; rough {dr}")


def _osgood_sweeps():
    t = np.linspace(0.05, 0.5, 10)
    a = math.exp(-1)
    worst = {"loglog": 0.0, "one_minus_log": 0.0, "power_log": 0.0}
    for C in (0.5, 1.0, 2.0):
        gamma = lambda s, C=C: C * math.exp(C * s)
        beta = np.exp(1 - np.exp(C * t))
        for eps in (1e-6, 1e-8, 1e-10):
            c = lambda s, C=C, eps=eps: C * s * eps
            cc = C * t * eps
            r1 = osgood_bound(c, gamma, lambda r: -r * math.log(r), a, t).rho_max
            worst["loglog"] = max(worst["loglog"], float(np.max(np.abs(r1 / cc ** beta - 1))))
            r2 = osgood_bound(c, gamma, lambda r: r * (1 - math.log(r)), a, t).rho_max
            exact2 = np.exp(1 - beta) * cc ** beta
            worst["one_minus_log"] = max(worst["one_minus_log"], float(np.max(np.abs(r2 / exact2 - 1))))
        for al in (0.5, 0.7, 0.9):
            eps = 1e-8
            cc = C * t * eps
            r3 = osgood_bound(lambda s, C=C: C * s * eps, lambda s, C=C, al=al: C * math.exp(C * s) / al,
                              lambda r, al=al: r * abs(math.log(r)) ** (1 - al), a, t).rho_max
            exact3 = np.exp(-(np.abs(np.log(cc)) ** al - (np.exp(C * t) - 1)) ** (1 / al))
            worst["power_log"] = max(worst["power_log"], float(np.max(np.abs(r3 / exact3 - 1))))
    return worst


def test_criterion_6_osgood(criterion):
    worst = _osgood_sweeps()
    ok = all(v <= 1e-6 for v in worst.values())
    detail = ("max relative error over 3x3 sweeps: (Cte)^beta with mu=-r ln r {loglog:.2e}; "
              "e^(1-beta)(Cte)^beta with mu=r(1-ln r) {one_minus_log:.2e}; "
              "|ln|^alpha chain {power_log:.2e} (<= 1e-6)").format(**worst)
    assert criterion(6, ok, detail)


def test_criterion_7_norm_toolkit(runs, criterion):
    _, out, vl = runs("norms", {"n_list": [256, 512, 1024], "initial": "lmo_exemplar"})
    _, _, vs = runs("norms", {"n_list": [256, 512, 1024], "initial": "sign_step", "john_nirenberg": None})
    okl, dl = _check(vl, ["lamo_stable", "sup_increasing"])
    oks, ds = _check(vs, ["lamo_diverges", "bmo_stable"])
    inc = np.diff(read_columns(out / "norms.csv")["sup"])
    big = bool(np.all(inc >= 0.2))
    detail = f"{dl}; sup increment >= 0.2 per doubling {big} (min {inc.min():.4f}); sign step {ds}"
    assert criterion(7, okl and oks and big, detail)


def test_criterion_8_composition(runs, criterion):
    _, out, v = runs("compose", {})
    ok, d = _check(v, ["isometry_ratio", "stretch_bmo_lower", "stretch_bmo_log_bound"])
    tab = read_columns(out / "compose.csv")
    iso_norms = sorted(str(s) for s in set(tab["norm"][np.abs(tab["K"] - 1) < 1e-12]))
    ok &= iso_norms == ["bmo", "lamo", "lbmo"]
    golden = (1 + math.sqrt(5)) / 2
    ok &= bool(np.any(np.abs(tab["K"] - golden) < 1e-9))
    assert criterion(8, ok, f"isometry norms {iso_norms}; {d}")


def test_criterion_9_john_nirenberg(runs, criterion):
    _, out, v = runs("norms", {"n_list": [256, 512, 1024], "initial": "lmo_exemplar"})
    ok, d = _check(v, ["john_nirenberg_alpha_0", "john_nirenberg_alpha_0.5"])
    assert criterion(9, ok, d)


def test_criterion_10_flow(runs, criterion):
    _, _, v = runs("flow", {})
    ok, d = _check(v, ["lipschitz_bound", "roundtrip"])
    assert criterion(10, ok, d)


def test_criterion_11_determinism(runs, tmp_path, criterion):
    same, total = 0, 0
    for command, cfg in (("invlimit", {"initial": "random_seeded", "initial_params": {}}), ("compose", {})):
        _, out, _ = runs(command, cfg, "--workers", "1")
        rerun = tmp_path / command
        run([command, "--config", str(out / "manifest.json"), "--out", str(rerun), "--workers", "3", "--no-plots"])
        for f in sorted(out.glob("*.csv")):
            total += 1
            same += f.read_bytes() == (rerun / f.name).read_bytes()
    assert criterion(11, total > 0 and same == total, f"{same}/{total} CSVs bit-identical on manifest re-run with 3 workers")
