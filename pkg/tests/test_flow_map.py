import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from viscidlab.biot_savart import velocity_from_vorticity
from viscidlab.flow_map import (
    AnalyticVelocity,
    SnapshotVelocity,
    TimeRangeError,
    bilipschitz_constant,
    compose_field,
    dyadic_pair_seeds,
    grid_seeds,
    integrate_flow,
    lipschitz_bound_check,
    modulus_profile,
    roundtrip_error,
    torus_distance,
    triangle_area_drift,
    triangle_seeds,
    velocity_lipschitz_integral,
    write_tracers_csv,
)
from viscidlab.grid import make_grid, sample_function
from viscidlab.initial_data import mollified_patch, taylor_green, zero
from viscidlab.records import read_columns
from viscidlab.timestep import simulate

L = 2 * math.pi


def _zero_velocity():
    return AnalyticVelocity(lambda t, x, y: (0.0, 0.0), L, 0.0)


def _sin_shear():
    return AnalyticVelocity(lambda t, x, y: (0.0 * x, np.sin(x)), L, 1.0)


def _seeds(m, seed=0):
    return np.random.default_rng(seed).uniform(0, L, size=(m, 2))


def test_zero_velocity_is_identity():
    s = _seeds(50)
    fm = integrate_flow(_zero_velocity(), s, 0.0, 1.0, 0.1)
    assert np.array_equal(fm.final, s)


def test_stagnation_line():
    fm = integrate_flow(_sin_shear(), np.array([[0.0, 0.0]]), 0.0, 1.0, 0.01)
    assert np.allclose(fm.final, 0.0, atol=1e-15)


def test_uniform_translation():
    v = AnalyticVelocity(lambda t, x, y: (1.0, 0.0), L, 1.0)
    s = _seeds(30)
    fm = integrate_flow(v, s, 0.0, 2.5, 0.05)
    exact = np.mod(s + [2.5, 0.0], L)
    assert torus_distance(fm.final, exact, L).max() < 1e-10
    assert np.all((fm.final >= 0) & (fm.final < L))


def test_snapshot_velocity_time_range():
    g = make_grid(32)
    w = taylor_green(g)
    v = SnapshotVelocity.from_vorticity([0.0, 1.0], [w, w])
    with pytest.raises(TimeRangeError):
        integrate_flow(v, _seeds(3), 0.0, 2.0, 0.05)
    with pytest.raises(TimeRangeError):
        v(1.5, _seeds(3))


def test_snapshot_interpolation_is_accurate():
    g = make_grid(64)
    v = SnapshotVelocity.steady(velocity_from_vorticity(taylor_green(g)))
    x = _seeds(200, 3)
    u = v(0.3, x)
    assert np.abs(u[:, 0] - np.cos(x[:, 0]) * np.sin(x[:, 1])).max() < 1e-5
    assert np.abs(u[:, 1] + np.sin(x[:, 0]) * np.cos(x[:, 1])).max() < 1e-5


def test_tracer_cfl_is_checked():
    g = make_grid(32)
    v = SnapshotVelocity.steady(velocity_from_vorticity(taylor_green(g, 10.0)))
    with pytest.raises(ValueError, match="CFL"):
        integrate_flow(v, _seeds(3), 0.0, 1.0, 0.1)


def test_bilipschitz_identity_and_translation():
    s = _seeds(300)
    assert bilipschitz_constant(integrate_flow(_zero_velocity(), s, 0.0, 1.0, 0.1)) == 1.0
    v = AnalyticVelocity(lambda t, x, y: (0.7, -0.2), L, 1.0)
    assert bilipschitz_constant(integrate_flow(v, s, 0.0, 1.0, 0.1)) == pytest.approx(1.0, abs=1e-12)


def test_bilipschitz_skips_coincident_seeds():
    s = np.array([[1.0, 1.0], [1.0, 1.0], [1.2, 1.0]])
    assert bilipschitz_constant(integrate_flow(_zero_velocity(), s, 0.0, 1.0, 0.5)) == 1.0


def test_bilipschitz_of_integer_shear_approaches_golden_ratio():
    # phi(x) = (x1 + x2, x2) is the time-1 map of u = (x2, 0) on the seeds' neighbourhood
    golden = (1 + math.sqrt(5)) / 2
    oracle = np.linalg.svd(np.array([[1.0, 1.0], [0.0, 1.0]]), compute_uv=False)[0]
    assert oracle == pytest.approx(golden)
    from viscidlab.flow_map import FlowMap

    previous = 1.0
    for m in (50, 200, 800):
        s = np.random.default_rng(5).uniform(2.0, 2.5, size=(m, 2))
        fm = FlowMap(s, [0.0, 1.0], [s, np.stack([s[:, 0] + s[:, 1], s[:, 1]], axis=1)], "forward", L)
        K = bilipschitz_constant(fm)
        assert previous - 1e-12 <= K <= golden + 1e-12
        previous = K
    assert K == pytest.approx(golden, rel=1e-3)


def test_bilipschitz_monotone_in_seed_set():
    fm_small = integrate_flow(_sin_shear(), _seeds(100, 1), 0.0, 1.0, 0.05)
    both = np.concatenate([_seeds(100, 1), _seeds(100, 2)])
    fm_big = integrate_flow(_sin_shear(), both, 0.0, 1.0, 0.05)
    assert bilipschitz_constant(fm_big) >= bilipschitz_constant(fm_small)


def test_lipschitz_bound_zero_and_shear():
    rep = lipschitz_bound_check(integrate_flow(_zero_velocity(), _seeds(20), 0.0, 1.0, 0.1), 0.0)
    assert rep["K"] == 1.0 and rep["holds"]
    g = make_grid(64)
    w = sample_function(g, lambda a, b: np.cos(a) + 0 * b)
    V = velocity_lipschitz_integral([0.0, 1.0], [w, w])
    assert V[-1] == pytest.approx(1.0, abs=1e-14)
    rep = lipschitz_bound_check(integrate_flow(_sin_shear(), _seeds(400), 0.0, 1.0, 0.01), V[-1])
    assert rep["holds"] and rep["K"] <= math.e * 1.05


def test_lipschitz_bound_taylor_green_every_snapshot():
    g = make_grid(64)
    sim = simulate(taylor_green(g), 0.0, 0.5, 0.01, snapshot_every=0.1)
    v = SnapshotVelocity.from_vorticity(sim.times, sim.snapshots)
    V = velocity_lipschitz_integral(sim.times, sim.snapshots)
    fm = integrate_flow(v, _seeds(300), 0.0, 0.5, 0.01, record_every=10)
    assert len(fm.times) == len(sim.times)
    for k in range(len(fm.times)):
        rep = lipschitz_bound_check(fm, V[k], record=k)
        assert rep["holds"], rep
        assert rep["margin"] >= 0


def test_modulus_profile_trivial_flows():
    s, pairs, sep = dyadic_pair_seeds(L, 20, 2, 8, seed=1)
    for v in (_zero_velocity(), AnalyticVelocity(lambda t, x, y: (1.0, 0.5), L, 1.2)):
        fm = integrate_flow(v, s, 0.0, 1.0, 0.05, pairs=pairs, pair_separation=sep)
        prof = modulus_profile(fm, 0.0)
        assert np.allclose(prof.ratio, 1.0, atol=1e-9)
        assert abs(prof.fitted_eta_V) < 1e-9


def test_modulus_profile_patch_velocity():
    g = make_grid(128)
    v = SnapshotVelocity.steady(velocity_from_vorticity(mollified_patch(g, width=0.05)))
    s, pairs, sep = dyadic_pair_seeds(L, 64, 2, 8, seed=0)
    fm = integrate_flow(v, s, 0.0, 1.0, 0.01, pairs=pairs, pair_separation=sep)
    prof = modulus_profile(fm, 0.0)
    assert np.all(np.isfinite(prof.growth))
    assert np.all(np.diff(prof.separations) > 0)
    assert np.all(np.diff(prof.growth) > 0)
    assert np.isfinite(prof.fitted_eta_V) and prof.fitted_eta_V > 0


def test_modulus_profile_needs_pairs():
    fm = integrate_flow(_zero_velocity(), _seeds(5), 0.0, 1.0, 0.5)
    with pytest.raises(ValueError):
        modulus_profile(fm, 0.0)


@given(st.integers(0, 1000))
def test_roundtrip_and_area(seed):
    g = make_grid(64)
    sim = simulate(taylor_green(g), 0.0, 1.0, 0.02, snapshot_every=0.25)
    v = SnapshotVelocity.from_vorticity(sim.times, sim.snapshots)
    assert roundtrip_error(v, _seeds(50, seed), 0.0, 1.0, 0.02) < g.spacing / 4
    pts, tri = triangle_seeds(L, 40, 1e-3, seed)
    assert triangle_area_drift(integrate_flow(v, pts, 0.0, 1.0, 0.02), tri) < 0.01


def test_compose_field_identity():
    g = make_grid(32)
    f = taylor_green(g)
    fm = integrate_flow(_zero_velocity(), grid_seeds(g), 0.0, 1.0, 0.5)
    assert np.abs(compose_field(f, fm).values - f.values).max() < 1e-12
    with pytest.raises(ValueError):
        compose_field(f, integrate_flow(_zero_velocity(), _seeds(4), 0.0, 1.0, 0.5))


def test_tracer_csv(tmp_path):
    fm = integrate_flow(_sin_shear(), _seeds(4), 0.0, 1.0, 0.25)
    cols = read_columns(write_tracers_csv(tmp_path / "t.csv", fm))
    assert list(cols) == ["t", "seed_id", "x1", "x2"]
    assert len(cols["t"]) == 4 * len(fm.times)
    assert (tmp_path / "t.csv").read_bytes().count(b"\r\n") == len(cols["t"]) + 1


def test_zero_field_builder():
    assert np.all(zero(make_grid(8)).values == 0)
