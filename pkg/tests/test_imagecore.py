import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from specgloss.imagecore import (
    PSNR_IDENTICAL,
    ImageFormatError,
    NormalMap,
    mae_degrees,
    psnr,
    read_hdr,
    read_image,
    read_pfm,
    read_png,
    srgb_transfer,
    ssim,
    ssim_and_grad,
    to_linear,
    to_srgb,
    to_srgb_grad,
    write_hdr,
    write_pfm,
    write_png,
)


# --- sRGB -------------------------------------------------------------------


def test_srgb_fixed_points():
    assert to_srgb(0.0) == 0.0
    assert abs(to_srgb(1.0) - 1.0) < 1e-15
    assert abs(to_linear(to_srgb(0.2)) - 0.2) <= 1e-6


def test_srgb_round_trip_bulk():
    x = np.random.default_rng(0).uniform(0.0, 4.0, 100_000)
    err = np.abs(to_linear(to_srgb(x)) - x)
    assert np.all(err <= 1e-6 * np.maximum(1.0, x))


def test_srgb_matches_piecewise_formula():
    # scalar reimplementation of the standard curve
    def enc(v):
        return 12.92 * v if v <= 0.0031308 else 1.055 * v ** (1 / 2.4) - 0.055

    xs = [0.0, 0.001, 0.0031308, 0.01, 0.18, 0.5, 1.0, 3.0]
    for v in xs:
        assert abs(float(to_srgb(v)) - enc(v)) < 1e-14


def test_srgb_direction_dispatch_and_errors():
    x = np.linspace(0, 1, 7)
    assert np.array_equal(srgb_transfer(x, "to_srgb"), to_srgb(x))
    assert np.array_equal(srgb_transfer(x, "to_linear"), to_linear(x))
    with pytest.raises(ValueError):
        srgb_transfer(x, "sideways")
    with pytest.raises(ValueError):
        to_srgb(np.array([0.1, np.nan]))
    with pytest.raises(ValueError):
        to_linear(np.array([np.inf]))
    with pytest.raises(ValueError):
        to_srgb(np.array([-0.1]))
    with pytest.raises(ValueError):
        to_srgb(np.zeros((2, 2, 4)))


def test_srgb_grad_matches_finite_differences():
    x = np.array([0.0005, 0.002, 0.01, 0.2, 0.7, 2.5])
    h = 1e-7
    fd = (to_srgb(x + h) - to_srgb(x - h)) / (2 * h)
    assert np.allclose(to_srgb_grad(x), fd, rtol=1e-5)


# --- PSNR -------------------------------------------------------------------


def test_psnr_identical_is_sentinel():
    a = np.random.default_rng(1).random((8, 8, 3))
    assert psnr(a, a) == PSNR_IDENTICAL
    assert math.isinf(PSNR_IDENTICAL)


def test_psnr_zero_vs_one_is_zero_db():
    assert psnr(np.zeros((4, 4, 3)), np.ones((4, 4, 3)), peak=1.0) == 0.0


def test_psnr_matches_direct_mse():
    rng = np.random.default_rng(2)
    a, b = rng.random((13, 9, 3)), rng.random((13, 9, 3))
    total = 0.0
    for v1, v2 in zip(a.ravel(), b.ravel()):
        total += (v1 - v2) ** 2
    ref = 10 * math.log10(1.0 / (total / a.size))
    assert abs(psnr(a, b) - ref) < 1e-9
    assert psnr(a, b) == psnr(b, a)


def test_psnr_shape_mismatch():
    with pytest.raises(ValueError):
        psnr(np.zeros((4, 4)), np.zeros((4, 5)))


# --- SSIM -------------------------------------------------------------------


def ssim_bruteforce(a, b, peak=1.0):
    """Windowed SSIM by explicit loops, zero padding outside the image."""
    a = a[..., None] if a.ndim == 2 else a
    b = b[..., None] if b.ndim == 2 else b
    h, w, c = a.shape
    r = 5
    k = np.array([math.exp(-((i - r) ** 2) / (2 * 1.5**2)) for i in range(11)])
    k = k / k.sum()
    c1, c2 = (0.01 * peak) ** 2, (0.03 * peak) ** 2
    vals = []
    for ch in range(c):
        for y in range(h):
            for x in range(w):
                mx = my = exx = eyy = exy = 0.0
                for dy in range(-r, r + 1):
                    for dx in range(-r, r + 1):
                        yy, xx = y + dy, x + dx
                        if 0 <= yy < h and 0 <= xx < w:
                            wt = k[dy + r] * k[dx + r]
                            p, q = a[yy, xx, ch], b[yy, xx, ch]
                            mx += wt * p
                            my += wt * q
                            exx += wt * p * p
                            eyy += wt * q * q
                            exy += wt * p * q
                sx, sy, sxy = exx - mx * mx, eyy - my * my, exy - mx * my
                vals.append(((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx * mx + my * my + c1) * (sx + sy + c2)))
    return float(np.mean(vals))


def test_ssim_self_is_one():
    a = np.random.default_rng(3).random((16, 16, 3))
    assert abs(ssim(a, a) - 1.0) < 1e-12


def test_ssim_inverted_binary_is_negative():
    a = (np.random.default_rng(4).random((16, 16)) > 0.5).astype(float)
    s = ssim(a, 1.0 - a)
    assert s < 0
    assert abs(s - ssim_bruteforce(a, 1.0 - a)) < 1e-9


def test_ssim_ramp_matches_bruteforce():
    ramp = np.tile(np.linspace(0, 0.8, 16), (16, 1))
    assert abs(ssim(ramp, ramp + 0.1) - ssim_bruteforce(ramp, ramp + 0.1)) < 1e-9


def test_ssim_symmetric_and_rejects_small():
    rng = np.random.default_rng(5)
    a, b = rng.random((12, 14, 3)), rng.random((12, 14, 3))
    assert abs(ssim(a, b) - ssim(b, a)) < 1e-12
    with pytest.raises(ValueError):
        ssim(np.zeros((10, 10)), np.zeros((10, 10)))


def test_ssim_grad_matches_finite_differences():
    rng = np.random.default_rng(6)
    a, b = rng.random((12, 12, 2)), rng.random((12, 12, 2))
    _, g = ssim_and_grad(a, b)
    h = 1e-6
    for idx in [(0, 0, 0), (5, 6, 1), (11, 3, 0), (7, 11, 1)]:
        ap, am = a.copy(), a.copy()
        ap[idx] += h
        am[idx] -= h
        fd = (ssim(ap, b) - ssim(am, b)) / (2 * h)
        assert abs(g[idx] - fd) <= 1e-6 * max(1.0, abs(fd))


# --- normals ----------------------------------------------------------------


def _random_normals(rng, shape):
    n = rng.normal(size=(*shape, 3))
    return n / np.linalg.norm(n, axis=-1, keepdims=True)


def test_mae_identical_and_orthogonal():
    rng = np.random.default_rng(7)
    n = _random_normals(rng, (6, 5))
    m = np.ones((6, 5), bool)
    assert mae_degrees(NormalMap(n, m), NormalMap(n, m)) == 0.0
    ortho = np.cross(n, _random_normals(rng, (6, 5)))
    ortho /= np.linalg.norm(ortho, axis=-1, keepdims=True)
    assert abs(mae_degrees(NormalMap(n, m), NormalMap(ortho, m)) - 90.0) < 1e-6


def test_mae_matches_scalar_loop():
    rng = np.random.default_rng(8)
    a, b = _random_normals(rng, (7, 7)), _random_normals(rng, (7, 7))
    ma = rng.random((7, 7)) > 0.2
    mb = rng.random((7, 7)) > 0.2
    total, count = 0.0, 0
    for y in range(7):
        for x in range(7):
            if ma[y, x] and mb[y, x]:
                c = max(-1.0, min(1.0, float(np.dot(a[y, x], b[y, x]))))
                total += math.degrees(math.acos(c))
                count += 1
    assert abs(mae_degrees(NormalMap(a, ma), NormalMap(b, mb)) - total / count) < 1e-9


def test_mae_empty_mask_rejected():
    n = np.zeros((3, 3, 3))
    n[..., 2] = 1
    with pytest.raises(ValueError):
        mae_degrees(NormalMap(n, np.zeros((3, 3), bool)), NormalMap(n, np.ones((3, 3), bool)))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_mae_rotation_invariant(seed):
    rng = np.random.default_rng(seed)
    a, b = _random_normals(rng, (5, 4)), _random_normals(rng, (5, 4))
    m = np.ones((5, 4), bool)
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    base = mae_degrees(NormalMap(a, m), NormalMap(b, m))
    rot = mae_degrees(NormalMap(a, m).rotated(q), NormalMap(b, m).rotated(q))
    assert abs(base - rot) <= 1e-6


def test_normal_map_encoding_round_trip():
    rng = np.random.default_rng(9)
    n = _random_normals(rng, (4, 4))
    mask = np.ones((4, 4), bool)
    mask[0, 0] = False
    nm = NormalMap(np.where(mask[..., None], n, 0.0), mask)
    back = NormalMap.from_image(nm.to_image(), mask)
    assert back.check_unit()
    assert np.allclose(back.normals[mask], n[mask], atol=1e-12)
    assert not back.mask[0, 0]


# --- file I/O ---------------------------------------------------------------


def test_hdr_round_trip_within_half_percent(tmp_path):
    rng = np.random.default_rng(10)
    img = np.exp(rng.uniform(-6, 6, (9, 33, 3)))
    write_hdr(tmp_path / "a.hdr", img)
    back = read_hdr(tmp_path / "a.hdr")
    assert back.shape == img.shape
    # per texel: relative to the texel's brightest channel (shared exponent)
    rel = np.abs(back - img) / img.max(axis=-1, keepdims=True)
    assert rel.max() <= 0.005


def test_hdr_zero_and_rle_width(tmp_path):
    img = np.zeros((3, 200, 3))
    img[1, 50:150] = [2.0, 0.5, 0.25]
    write_hdr(tmp_path / "z.hdr", img)
    back = read_image(tmp_path / "z.hdr")
    assert np.all(back[0] == 0)
    rel = np.abs(back[1, 50:150] - [2.0, 0.5, 0.25]) / 2.0
    assert rel.max() <= 0.005


def test_hdr_bad_file(tmp_path):
    p = tmp_path / "bad.hdr"
    p.write_bytes(b"not a radiance file\n")
    with pytest.raises(ImageFormatError):
        read_hdr(p)


def test_pfm_round_trip_exact_float32(tmp_path):
    rng = np.random.default_rng(11)
    img = rng.normal(size=(5, 7, 3))
    write_pfm(tmp_path / "a.pfm", img)
    assert np.array_equal(read_pfm(tmp_path / "a.pfm"), img.astype(np.float32).astype(np.float64))
    gray = rng.random((4, 3, 1))
    write_pfm(tmp_path / "g.pfm", gray)
    assert read_pfm(tmp_path / "g.pfm").shape == (4, 3, 1)


def test_png_round_trip_quantised(tmp_path):
    rng = np.random.default_rng(12)
    img = rng.random((6, 5, 3))
    write_png(tmp_path / "a.png", img)
    back = read_png(tmp_path / "a.png")
    assert np.abs(back - img).max() <= 0.5 / 255 + 1e-12


def test_read_image_rejects_unknown_extension(tmp_path):
    with pytest.raises(ImageFormatError):
        read_image(tmp_path / "x.exr")
