"""Material parameterisations and their mapping to shading inputs.

Per-primitive materials are stored as flat channel arrays so that the
rasteriser can blend any parameterisation the same way:

====  ============================================  ==
mode  channels                                      C
====  ============================================  ==
sg    kd (3), F0 (3), r                             7
mr    base color b (3), metallic m, r               5
mrs   b (3), m, r, specular tint ks (3)             8
====  ============================================  ==

Every channel lives in [0, 1] and is obtained from an unconstrained raw value
by a logistic sigmoid.
"""
from dataclasses import dataclass

import numpy as np

DIELECTRIC_F0 = 0.04

CHANNELS = {"sg": 7, "mr": 5, "mrs": 8}

# learning-rate group of every channel
LR_GROUPS = {
    "sg": ["albedo"] * 3 + ["f0r"] * 4,
    "mr": ["albedo"] * 3 + ["f0r"] * 2,
    "mrs": ["albedo"] * 3 + ["f0r"] * 5,
}

# channels that carry the diffuse albedo / base color
ALBEDO = slice(0, 3)


def check_mode(mode):
    mode = str(mode).lower()
    if mode not in CHANNELS:
        raise ValueError(f"unknown material parameterisation {mode!r}")
    return mode


def roughness_channel(mode):
    return {"sg": 6, "mr": 4, "mrs": 4}[check_mode(mode)]


@dataclass
class MaterialSG:
    kd: np.ndarray
    F0: np.ndarray
    r: float

    mode = "sg"

    def to_array(self):
        return np.concatenate([np.broadcast_to(self.kd, 3), np.broadcast_to(self.F0, 3), [self.r]]).astype(float)


@dataclass
class MaterialMR:
    b: np.ndarray
    m: float
    r: float

    mode = "mr"

    def to_array(self):
        return np.concatenate([np.broadcast_to(self.b, 3), [self.m, self.r]]).astype(float)


@dataclass
class MaterialMRS:
    b: np.ndarray
    m: float
    r: float
    ks: np.ndarray

    mode = "mrs"

    def to_array(self):
        return np.concatenate([np.broadcast_to(self.b, 3), [self.m, self.r], np.broadcast_to(self.ks, 3)]).astype(float)


def from_array(arr, mode):
    a = np.asarray(arr, dtype=float)
    mode = check_mode(mode)
    if mode == "sg":
        return MaterialSG(a[0:3].copy(), a[3:6].copy(), float(a[6]))
    if mode == "mr":
        return MaterialMR(a[0:3].copy(), float(a[3]), float(a[4]))
    return MaterialMRS(a[0:3].copy(), float(a[3]), float(a[4]), a[5:8].copy())


def f0_from_mr(m, b):
    """Specular reflectance of the metallic workflow: ``(1 - m) 0.04 + m b``."""
    m = np.asarray(m, dtype=float)
    if np.any((m < 0) | (m > 1)):
        raise ValueError("metallic must lie in [0, 1]")
    return (1.0 - m)[..., None] * DIELECTRIC_F0 + m[..., None] * np.asarray(b, dtype=float) if m.ndim else (
        (1.0 - m) * DIELECTRIC_F0 + m * np.asarray(b, dtype=float)
    )


def squash(raw):
    return 1.0 / (1.0 + np.exp(-np.asarray(raw, dtype=float)))


def squash_grad(raw):
    s = squash(raw)
    return s * (1.0 - s)


def unsquash(val, eps=1e-12):
    v = np.clip(np.asarray(val, dtype=float), eps, 1.0 - eps)
    return np.log(v) - np.log1p(-v)


def shading_inputs(mat, mode):
    """Split blended material channels (P, C) into the shading quantities.

    Returns ``(kd, add, f0, r)``: the factor on diffuse irradiance, a constant
    diffuse term (non-zero only for mrs), the specular reflectance and the
    roughness.
    """
    mode = check_mode(mode)
    mat = np.asarray(mat, dtype=float)
    zeros = np.zeros(mat.shape[:-1] + (3,))
    if mode == "sg":
        return mat[..., 0:3], zeros, mat[..., 3:6], mat[..., 6]
    b = mat[..., 0:3]
    m = mat[..., 3:4]
    r = mat[..., 4]
    if mode == "mr":
        return (1.0 - m) * b, zeros, (1.0 - m) * DIELECTRIC_F0 + m * b, r
    ks = mat[..., 5:8]
    return zeros, b, (1.0 - m) * DIELECTRIC_F0 + m * ks, r


def shading_inputs_adjoint(mat, mode, g_kd, g_add, g_f0, g_r):
    """Chain gradients on ``(kd, add, f0, r)`` back to the material channels."""
    mode = check_mode(mode)
    g = np.zeros_like(np.asarray(mat, dtype=float))
    if mode == "sg":
        g[..., 0:3] = g_kd
        g[..., 3:6] = g_f0
        g[..., 6] = g_r
        return g
    b = mat[..., 0:3]
    m = mat[..., 3:4]
    g[..., 4] = g_r
    if mode == "mr":
        g[..., 0:3] = g_kd * (1.0 - m) + g_f0 * m
        g[..., 3] = np.sum(-g_kd * b + g_f0 * (b - DIELECTRIC_F0), axis=-1)
        return g
    ks = mat[..., 5:8]
    g[..., 0:3] = g_add
    g[..., 5:8] = g_f0 * m
    g[..., 3] = np.sum(g_f0 * (ks - DIELECTRIC_F0), axis=-1)
    return g
