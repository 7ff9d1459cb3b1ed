import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from viscidlab.grid import (
    GridError,
    ScalarField,
    from_spectral,
    make_grid,
    read_fld,
    sample_function,
    spectral_ops,
    to_spectral,
    torus_delta,
    write_fld,
)
from viscidlab.initial_data import lmo_exemplar, random_seeded


def test_make_grid_spacing():
    assert make_grid(64, 2 * math.pi).spacing == pytest.approx(2 * math.pi / 64, rel=1e-15)
    assert make_grid(8, 1.0).spacing == 0.125


@pytest.mark.parametrize("n", [7, 100, 4, 0, -8])
def test_make_grid_rejects_bad_n(n):
    with pytest.raises(GridError, match="n must be power of two"):
        make_grid(n)


@pytest.mark.parametrize("L", [0.0, -1.0])
def test_make_grid_rejects_bad_length(L):
    with pytest.raises(GridError):
        make_grid(16, L)


def test_spacing_times_n_is_length():
    for n in (8, 64, 1024):
        g = make_grid(n, 3.7)
        assert g.spacing * n == pytest.approx(3.7, rel=1e-15)


def test_constant_field_coefficients():
    g = make_grid(16)
    F = to_spectral(ScalarField(g, np.ones((16, 16))))
    assert F.coefficient(0, 0) == pytest.approx(1.0)
    c = F.coefficients.copy()
    c[0, 0] = 0
    assert np.abs(c).max() < 1e-15


def test_cosine_coefficients():
    g = make_grid(16)
    F = to_spectral(sample_function(g, lambda x, y: np.cos(x)))
    assert F.coefficient(1, 0) == pytest.approx(0.5)
    assert F.coefficient(-1, 0) == pytest.approx(0.5)
    c = F.coefficients.copy()
    c[1, 0] = c[-1, 0] = 0
    assert np.abs(c).max() < 1e-15


def test_round_trip_random(rng):
    g = make_grid(16)
    f = ScalarField(g, rng.standard_normal((16, 16)))
    back = from_spectral(to_spectral(f))
    assert (back - f).l2() / f.l2() < 1e-12


@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([8, 16, 32, 64]))
def test_parseval_and_symmetry(seed, n):
    g = make_grid(n)
    f = ScalarField(g, np.random.default_rng(seed).standard_normal((n, n)))
    F = to_spectral(f)
    assert F.l2() == pytest.approx(f.l2(), rel=1e-12)
    assert F.conjugate_symmetry_error() < 1e-13


def test_parseval_at_1024():
    g = make_grid(1024)
    f = random_seeded(g, seed=3, kmax=200)
    assert to_spectral(f).l2() == pytest.approx(f.l2(), rel=1e-12)


def test_sample_function_values():
    g = make_grid(32)
    assert np.all(sample_function(g, lambda x, y: 0 * x).values == 0)
    X1, X2 = g.mesh()
    f = sample_function(g, lambda x, y: np.cos(x) * np.sin(y))
    assert np.array_equal(f.values, np.cos(X1) * np.sin(X2))


def test_sample_function_reports_bad_node():
    g = make_grid(8)
    with np.errstate(divide="ignore"), pytest.raises(ValueError, match="non-finite") as err:
        sample_function(g, lambda x, y: 1.0 / (x + y))
    assert "node (0, 0)" in str(err.value)


def test_lmo_exemplar_is_finite_and_clamped():
    g = make_grid(256)
    f = lmo_exemplar(g)
    assert np.all(np.isfinite(f.values))
    i = g.n // 2
    # the centre node takes the value at radius spacing/2
    assert f.values[i, i] == pytest.approx(math.log(1 - math.log(g.spacing / 2)))
    assert f.values[0, 0] == 0.0


def test_scalar_field_is_read_only():
    g = make_grid(8)
    f = ScalarField(g, np.zeros((8, 8)))
    with pytest.raises(ValueError):
        f.values[0, 0] = 1.0


def test_scalar_field_rejects_nan():
    g = make_grid(8)
    v = np.zeros((8, 8))
    v[2, 3] = np.nan
    with pytest.raises(ValueError):
        ScalarField(g, v)


def test_lp_norm_of_constant():
    g = make_grid(16, 2.0)
    f = ScalarField(g, np.full((16, 16), -3.0))
    for p in (1.0, 2.0, 4.0):
        assert f.lp_norm(p) == pytest.approx(3.0 * 4.0 ** (1 / p))
    assert f.sup() == 3.0


def test_torus_delta_wraps():
    L = 2 * math.pi
    d = torus_delta(np.array([0.1, L - 0.1, L / 2 + 0.2, -L + 0.3]), L)
    assert np.allclose(d, [0.1, -0.1, -L / 2 + 0.2, 0.3])


def test_dealias_mask_and_nyquist():
    ops = spectral_ops(make_grid(16))
    # two-thirds rule keeps |k_i| < 16/3
    assert ops.dealias[5, 0] and not ops.dealias[6, 0]
    assert ops.dealias[0, 5] and not ops.dealias[0, 6]
    assert ops.dealias[-5, 0] and not ops.dealias[-6, 0]
    # first-derivative multipliers drop the Nyquist mode
    assert np.all(ops.ik1[8, :] == 0)
    assert np.all(ops.ik2[:, -1] == 0)


def test_fld_round_trip(tmp_path, rng):
    g = make_grid(16, 3.0)
    f = ScalarField(g, rng.standard_normal((16, 16)), "w")
    path = write_fld(tmp_path / "a.fld", f, time=0.25)
    back, meta = read_fld(path)
    assert np.array_equal(back.values, f.values)
    assert back.grid == g
    assert meta["time"] == 0.25
