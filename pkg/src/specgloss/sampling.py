"""Low-discrepancy points and GGX half-vector sampling shared by the LUT and
the prefilter."""
import numpy as np


def radical_inverse_vdc(i):
    bits = np.asarray(i, dtype=np.uint32)
    bits = (bits << np.uint32(16)) | (bits >> np.uint32(16))
    bits = ((bits & np.uint32(0x55555555)) << np.uint32(1)) | ((bits & np.uint32(0xAAAAAAAA)) >> np.uint32(1))
    bits = ((bits & np.uint32(0x33333333)) << np.uint32(2)) | ((bits & np.uint32(0xCCCCCCCC)) >> np.uint32(2))
    bits = ((bits & np.uint32(0x0F0F0F0F)) << np.uint32(4)) | ((bits & np.uint32(0xF0F0F0F0)) >> np.uint32(4))
    bits = ((bits & np.uint32(0x00FF00FF)) << np.uint32(8)) | ((bits & np.uint32(0xFF00FF00)) >> np.uint32(8))
    return bits.astype(np.float64) * 2.3283064365386963e-10


def hammersley(n, seed=None):
    """``n`` 2D Hammersley points in [0,1)^2.

    With a seed, the set gets a Cranley-Patterson rotation (a random toroidal
    shift), which keeps the stratification but decorrelates runs.
    """
    i = np.arange(n)
    pts = np.stack([(i + 0.5) / n, radical_inverse_vdc(i)], axis=-1)
    if seed is not None:
        shift = np.random.default_rng(seed).random(2)
        pts = np.mod(pts + shift, 1.0)
    return pts


def ggx_half_vectors(xi, alpha):
    """Tangent-space GGX (Trowbridge-Reitz) half vectors for uniforms ``xi`` (N,2)."""
    a2 = alpha * alpha
    phi = 2.0 * np.pi * xi[:, 0]
    cos_t = np.sqrt((1.0 - xi[:, 1]) / (1.0 + (a2 - 1.0) * xi[:, 1]))
    sin_t = np.sqrt(np.maximum(0.0, 1.0 - cos_t * cos_t))
    return np.stack([np.cos(phi) * sin_t, np.sin(phi) * sin_t, cos_t], axis=-1)


def tangent_frame(n):
    """Orthonormal (t, b) for unit normals ``n`` (..., 3)."""
    n = np.asarray(n, dtype=np.float64)
    up = np.where((np.abs(n[..., 2]) < 0.999)[..., None], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0])
    t = np.cross(up, n)
    t /= np.linalg.norm(t, axis=-1, keepdims=True)
    return t, np.cross(n, t)
