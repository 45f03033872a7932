import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import lut_cell_oracle
from specgloss._accel import backend
from specgloss.brdf import (
    BrdfLut,
    MaterialMR,
    MaterialMRS,
    MaterialSG,
    compute_brdf_lut,
    cook_torrance,
    default_lut,
    f0_from_mr,
    from_array,
    shade,
    shade_backward,
    shade_terms,
    shading_inputs,
    shading_inputs_adjoint,
    squash,
    unsquash,
)
from specgloss.brdf.lut import lut_table
from specgloss.envlight import CubeMap, prefilter_pmrem
from specgloss.sampling import hammersley
from specgloss.synth import random_smooth_env


@pytest.fixture(scope="module")
def lut32():
    return compute_brdf_lut(32, 1024)


def unit(rng, n):
    d = rng.normal(size=(n, 3))
    return d / np.linalg.norm(d, axis=-1, keepdims=True)


# --- parameterisations ------------------------------------------------------


def test_f0_from_mr_examples():
    b = np.array([0.8, 0.2, 0.1])
    assert np.allclose(f0_from_mr(0.0, b), 0.04)
    assert np.allclose(f0_from_mr(1.0, b), b)
    assert np.allclose(f0_from_mr(0.5, np.ones(3)), 0.52)
    with pytest.raises(ValueError):
        f0_from_mr(1.5, b)


def test_material_arrays_round_trip():
    sg = MaterialSG(np.array([0.1, 0.2, 0.3]), np.array([0.04] * 3), 0.5)
    mr = MaterialMR(np.array([0.5, 0.4, 0.3]), 0.2, 0.7)
    mrs = MaterialMRS(np.array([0.5, 0.4, 0.3]), 0.2, 0.7, np.array([0.9, 0.8, 0.7]))
    for m in (sg, mr, mrs):
        back = from_array(m.to_array(), m.mode)
        assert np.array_equal(back.to_array(), m.to_array())
    with pytest.raises(ValueError):
        from_array(np.zeros(7), "pbr")


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-30, 30), min_size=1, max_size=20))
def test_squash_monotone_and_invertible(vals):
    x = np.sort(np.array(vals))
    s = squash(x)
    assert np.all((s >= 0) & (s <= 1))
    assert np.all(np.diff(s) >= 0)
    mid = np.abs(x) < 12  # away from float saturation
    assert np.allclose(unsquash(s[mid]), x[mid], atol=1e-6)


def test_squash_values_round_trip():
    v = np.linspace(1e-4, 1 - 1e-4, 101)
    assert np.abs(squash(unsquash(v)) - v).max() <= 1e-6


def test_shading_inputs_mr_matches_sg_identity():
    rng = np.random.default_rng(0)
    b, r = rng.random((20, 3)), rng.random(20)
    mr = np.concatenate([b, np.zeros((20, 1)), r[:, None]], axis=1)
    sg = np.concatenate([b, np.full((20, 3), 0.04), r[:, None]], axis=1)
    a = shading_inputs(mr, "mr")
    c = shading_inputs(sg, "sg")
    for x, y in zip(a, c):
        assert np.array_equal(x, y)


@pytest.mark.parametrize("mode,c", [("sg", 7), ("mr", 5), ("mrs", 8)])
def test_shading_inputs_adjoint_matches_fd(mode, c):
    rng = np.random.default_rng(1)
    mat = rng.random((4, c))
    g = [rng.normal(size=(4, 3)), rng.normal(size=(4, 3)), rng.normal(size=(4, 3)), rng.normal(size=4)]

    def f(m):
        kd, add, f0, r = shading_inputs(m, mode)
        return np.sum(g[0] * kd) + np.sum(g[1] * add) + np.sum(g[2] * f0) + np.sum(g[3] * r)

    an = shading_inputs_adjoint(mat, mode, *g)
    h = 1e-6
    for idx in np.ndindex(mat.shape):
        p, m = mat.copy(), mat.copy()
        p[idx] += h
        m[idx] -= h
        assert abs((f(p) - f(m)) / (2 * h) - an[idx]) < 1e-8


# --- LUT --------------------------------------------------------------------


def test_lut_bounds_and_energy(lut32):
    t = lut32.table
    assert t.shape == (32, 32, 2)
    assert np.all(t >= 0) and np.all(t[..., 0] <= 1) and np.all(t[..., 1] <= 1)
    assert np.all(t.sum(-1) <= 1 + 1e-3)


def test_lut_mirror_limit():
    lut = compute_brdf_lut(64, 1024)
    ref = lut_cell_oracle(0.5 / 64, 63.5 / 64, 2**16, np.random.default_rng(0))
    assert np.all(np.abs(lut.table[0, 63] - ref) <= 0.02)
    assert abs(lut.table[0, 63, 0] - 1.0) <= 0.02 and lut.table[0, 63, 1] <= 0.02


def test_lut_probe_cells_vs_oracle(lut32):
    rng = np.random.default_rng(1)
    for i in (3, 15, 28):
        for j in (2, 16, 30):
            ref = lut_cell_oracle((i + 0.5) / 32, (j + 0.5) / 32, 2**18, rng)
            assert np.all(np.abs(lut32.table[i, j] - ref) <= 1e-2), (i, j)


def test_lut_is_deterministic_and_seeded():
    a = compute_brdf_lut(8, 64, seed=3)
    b = compute_brdf_lut(8, 64, seed=3)
    c = compute_brdf_lut(8, 64, seed=4)
    assert np.array_equal(a.table, b.table)
    assert not np.array_equal(a.table, c.table)


def test_lut_backends_agree():
    xi = np.ascontiguousarray(hammersley(128, 0))
    with backend("numba"):
        a = lut_table(12, xi)
    with backend("numpy"):
        b = lut_table(12, xi)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-14)


def test_lut_rejects_bad_sizes():
    with pytest.raises(ValueError):
        compute_brdf_lut(1, 64)
    with pytest.raises(ValueError):
        compute_brdf_lut(8, 8)


def test_lut_fetch_at_centres_and_grad(lut32):
    t = lut32.table
    assert np.allclose(lut32.fetch(5.5 / 32, 9.5 / 32), t[5, 9])
    r = np.linspace(0.05, 0.95, 13) + 0.003
    nv = np.linspace(0.1, 0.9, 13)
    _, d = lut32.fetch_with_grad(r, nv)
    h = 1e-7
    fd = (lut32.fetch(r + h, nv) - lut32.fetch(r - h, nv)) / (2 * h)
    assert np.allclose(d, fd, atol=1e-6)


def test_lut_save_load(tmp_path):
    lut = compute_brdf_lut(8, 64)
    manifest = lut.save(tmp_path / "lut")
    back = BrdfLut.load(manifest)
    assert back.n == 8 and back.samples == 64 and back.seed == 0
    assert np.array_equal(back.table, lut.table.astype(np.float32).astype(np.float64))


# --- shading ----------------------------------------------------------------


def test_shade_pure_diffuse_constant_env():
    env = prefilter_pmrem(CubeMap.constant(16, 1.7), res_min=4, mode="fast")
    zero_lut = BrdfLut(np.zeros((8, 8, 2)), 16)
    rng = np.random.default_rng(2)
    n, v = unit(rng, 10), unit(rng, 10)
    out = shade(MaterialSG(np.ones(3), np.zeros(3), 0.4), n, v, env, zero_lut)
    assert np.all(np.abs(out - 1.7) <= 0.02 * 1.7)


def test_shade_mr_dielectric_equals_sg(lut32):
    env = prefilter_pmrem(random_smooth_env(16, np.random.default_rng(3)), res_min=4, samples=64)
    rng = np.random.default_rng(4)
    n, v = unit(rng, 30), unit(rng, 30)
    for _ in range(5):
        b, r = rng.random(3), rng.random()
        a = shade(MaterialMR(b, 0.0, r), n, v, env, lut32)
        c = shade(MaterialSG(b, np.full(3, 0.04), r), n, v, env, lut32)
        assert np.array_equal(a, c)


def test_shade_zero_env(lut32):
    env = prefilter_pmrem(CubeMap.constant(8, 0.0), res_min=2, samples=16)
    rng = np.random.default_rng(5)
    n, v = unit(rng, 8), unit(rng, 8)
    b = np.array([0.3, 0.6, 0.9])
    assert np.all(shade(MaterialSG(b, b, 0.3), n, v, env, lut32) == 0)
    assert np.all(shade(MaterialMR(b, 0.5, 0.3), n, v, env, lut32) == 0)
    assert np.allclose(shade(MaterialMRS(b, 0.5, 0.3, b), n, v, env, lut32), b)


@pytest.mark.parametrize("mat", [MaterialSG(np.array([0.2, 0.5, 0.7]), np.array([0.3, 0.2, 0.1]), 0.35),
                                 MaterialMR(np.array([0.6, 0.5, 0.2]), 0.4, 0.6)])
def test_shade_homogeneous_in_light(lut32, mat):
    base = random_smooth_env(16, np.random.default_rng(6))
    e1 = prefilter_pmrem(base, res_min=4, samples=64)
    e2 = prefilter_pmrem(CubeMap(3.5 * base.data), res_min=4, samples=64)
    rng = np.random.default_rng(7)
    n, v = unit(rng, 20), unit(rng, 20)
    a = shade(mat, n, v, e1, lut32)
    b = shade(mat, n, v, e2, lut32)
    assert np.allclose(b, 3.5 * a, rtol=1e-6, atol=0)


def test_shade_grazing_is_finite(lut32):
    env = prefilter_pmrem(CubeMap.constant(8, 1.0), res_min=2, samples=16)
    n = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 1.0]])
    v = np.array([[1.0, 0.0, 0.0], [0.0, 0.6, -0.8]])  # grazing and back-facing
    out = shade(MaterialSG(np.full(3, 0.5), np.full(3, 0.5), 0.5), n, v, env, lut32)
    assert np.all(np.isfinite(out)) and np.all(out >= 0)


@pytest.mark.parametrize("mode,c", [("sg", 7), ("mr", 5), ("mrs", 8)])
def test_shade_backward_matches_fd(lut32, mode, c):
    rng = np.random.default_rng(8)
    base = CubeMap(rng.uniform(0.2, 2.0, (6, 8, 8, 3)))
    env = prefilter_pmrem(base, res_min=2, mode="fast", irradiance_res=4)
    p = 6
    mat = rng.uniform(0.1, 0.9, (p, c))
    n, v = unit(rng, p), unit(rng, p)
    v = np.where((np.sum(n * v, -1) < 0)[:, None], -v, v)
    gd, gs = rng.normal(size=(p, 3)), rng.normal(size=(p, 3))

    def f(m, e):
        d, s, _ = shade_terms(m, mode, n, v, e, lut32)
        return np.sum(gd * d) + np.sum(gs * s)

    _, _, cache = shade_terms(mat, mode, n, v, env, lut32)
    g_mat, g_env = shade_backward(cache, env, gd, gs)
    h = 1e-6
    for idx in list(np.ndindex(mat.shape))[::3]:
        a, b = mat.copy(), mat.copy()
        a[idx] += h
        b[idx] -= h
        fd = (f(a, env) - f(b, env)) / (2 * h)
        assert abs(fd - g_mat[idx]) <= 1e-5 * max(1.0, abs(fd))
    for idx in [(0, 1, 2, 0), (4, 3, 3, 1), (2, 0, 7, 2), (5, 6, 1, 0)]:
        a, b = base.data.copy(), base.data.copy()
        a[idx] += h
        b[idx] -= h
        ea = prefilter_pmrem(CubeMap(a), res_min=2, mode="fast", irradiance_res=4)
        eb = prefilter_pmrem(CubeMap(b), res_min=2, mode="fast", irradiance_res=4)
        fd = (f(mat, ea) - f(mat, eb)) / (2 * h)
        assert abs(fd - g_env[idx]) <= 1e-5 * max(1.0, abs(fd))


def test_cook_torrance_reciprocal_and_zero_below_horizon():
    rng = np.random.default_rng(9)
    n = np.array([0.0, 0.0, 1.0])
    for _ in range(10):
        v, l = unit(rng, 2)
        v[2], l[2] = abs(v[2]), abs(l[2])
        v /= np.linalg.norm(v)
        l /= np.linalg.norm(l)
        a = cook_torrance(n, v, l, np.full(3, 0.3), np.full(3, 0.5), 0.4)
        b = cook_torrance(n, l, v, np.full(3, 0.3), np.full(3, 0.5), 0.4)
        assert np.allclose(a, b)
    below = cook_torrance(n, np.array([0, 0, 1.0]), np.array([0, 0.6, -0.8]), np.ones(3), np.ones(3), 0.5)
    assert np.all(below == 0)


def test_default_lut_is_cached():
    assert default_lut(8, 32) is default_lut(8, 32)
