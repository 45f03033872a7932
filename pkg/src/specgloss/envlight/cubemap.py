"""Cube map geometry, texel solid angles and the bilinear sampling kernels.

Face order is +X, -X, +Y, -Y, +Z, -Z. Each face is stored row-major with the
row index growing downwards (``v`` down), i.e. the OpenGL cube convention:

    +X: ( 1, -v, -u)   -X: (-1, -v,  u)
    +Y: ( u,  1,  v)   -Y: ( u, -1, -v)
    +Z: ( u, -v,  1)   -Z: (-u, -v, -1)

with ``u, v`` in [-1, 1] measured at texel centres. Bilinear lookups clamp at
face edges and never fetch across a seam.
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .._accel import dispatch, njit

FACE_NAMES = ("px", "nx", "py", "ny", "pz", "nz")


def is_pow2(n):
    return n >= 1 and (n & (n - 1)) == 0


@dataclass
class CubeMap:
    """Six square HDR faces, ``data`` shaped (6, res, res, channels)."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        d = self.data
        if d.ndim != 4 or d.shape[0] != 6 or d.shape[1] != d.shape[2]:
            raise ValueError(f"cube data must be (6, R, R, C), got {d.shape}")
        if not is_pow2(d.shape[1]):
            raise ValueError(f"face resolution {d.shape[1]} is not a power of two")
        if not np.all(np.isfinite(d)):
            raise ValueError("cube map contains non-finite texels")

    @property
    def res(self):
        return self.data.shape[1]

    @property
    def channels(self):
        return self.data.shape[3]

    @classmethod
    def constant(cls, res, value, channels=3):
        val = np.broadcast_to(np.asarray(value, dtype=np.float64), (channels,))
        return cls(np.broadcast_to(val, (6, res, res, channels)).copy())

    def copy(self):
        return CubeMap(self.data.copy())

    def weighted_mean(self):
        """Solid-angle weighted mean radiance per channel."""
        w = texel_solid_angles(self.res)
        return np.einsum("fij,fijc->c", np.broadcast_to(w, self.data.shape[:3]), self.data) / (4.0 * np.pi)


def face_uv_to_dir(face, uc, vc):
    """Unnormalised direction for face index and centred coords in [-1, 1]."""
    one = np.ones_like(uc)
    table = {
        0: (one, -vc, -uc),
        1: (-one, -vc, uc),
        2: (uc, one, vc),
        3: (uc, -one, -vc),
        4: (uc, -vc, one),
        5: (-uc, -vc, -one),
    }
    return np.stack(table[face], axis=-1)


@lru_cache(maxsize=16)
def _face_dirs_cached(res):
    c = (np.arange(res) + 0.5) / res * 2.0 - 1.0
    vc, uc = np.meshgrid(c, c, indexing="ij")
    d = np.stack([face_uv_to_dir(f, uc, vc) for f in range(6)])
    d /= np.linalg.norm(d, axis=-1, keepdims=True)
    d.setflags(write=False)
    return d


def face_dirs(res):
    """Unit directions of all texel centres, (6, res, res, 3)."""
    return _face_dirs_cached(res)


@lru_cache(maxsize=16)
def _solid_angles_cached(res):
    edges = np.arange(res + 1) / res * 2.0 - 1.0

    def area(x, y):
        return np.arctan2(x * y, np.sqrt(x * x + y * y + 1.0))

    y0, x0 = np.meshgrid(edges[:-1], edges[:-1], indexing="ij")
    y1, x1 = np.meshgrid(edges[1:], edges[1:], indexing="ij")
    w = np.abs(area(x0, y0) - area(x0, y1) - area(x1, y0) + area(x1, y1))
    w.setflags(write=False)
    return w


def texel_solid_angles(res):
    """Exact solid angle of each texel of one face, (res, res); sums to 4*pi/6."""
    return _solid_angles_cached(res)


def dirs_to_face_uv(dirs):
    """Map directions (..., 3) to face index and (u, v) in [0, 1]."""
    d = np.asarray(dirs, dtype=np.float64)
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    ax, ay, az = np.abs(x), np.abs(y), np.abs(z)
    xmaj = (ax >= ay) & (ax >= az)
    ymaj = ~xmaj & (ay >= az)
    zmaj = ~xmaj & ~ymaj
    face = np.where(xmaj, np.where(x > 0, 0, 1), np.where(ymaj, np.where(y > 0, 2, 3), np.where(z > 0, 4, 5)))
    ma = np.where(xmaj, ax, np.where(ymaj, ay, az))
    ma = np.where(ma > 0, ma, 1.0)
    uc = np.select(
        [face == 0, face == 1, face == 2, face == 3, face == 4],
        [-z, z, x, x, x],
        -x,
    ) / ma
    vc = np.select(
        [face == 0, face == 1, face == 2, face == 3, face == 4],
        [-y, -y, z, -z, -y],
        -y,
    ) / ma
    return face.astype(np.int64), (uc + 1.0) * 0.5, (vc + 1.0) * 0.5


def _taps_np(dirs, res):
    face, u, v = dirs_to_face_uv(dirs)
    px = np.clip(u * res - 0.5, 0.0, res - 1.0)
    py = np.clip(v * res - 0.5, 0.0, res - 1.0)
    x0 = np.floor(px).astype(np.int64)
    y0 = np.floor(py).astype(np.int64)
    x1 = np.minimum(x0 + 1, res - 1)
    y1 = np.minimum(y0 + 1, res - 1)
    return face, x0, x1, y0, y1, px - x0, py - y0


def cube_sample_np(data, dirs):
    """Bilinear, edge-clamped lookup of ``data`` (6,R,R,C) at ``dirs`` (P,3)."""
    face, x0, x1, y0, y1, fx, fy = _taps_np(dirs, data.shape[1])
    fx = fx[:, None]
    fy = fy[:, None]
    top = data[face, y0, x0] * (1 - fx) + data[face, y0, x1] * fx
    bot = data[face, y1, x0] * (1 - fx) + data[face, y1, x1] * fx
    return top * (1 - fy) + bot * fy


def cube_sample_adjoint_np(dirs, grad, res):
    """Transpose of :func:`cube_sample`: scatter ``grad`` (P,C) onto a cube."""
    face, x0, x1, y0, y1, fx, fy = _taps_np(dirs, res)
    out = np.zeros((6, res, res, grad.shape[1]))
    fx = fx[:, None]
    fy = fy[:, None]
    np.add.at(out, (face, y0, x0), grad * ((1 - fx) * (1 - fy)))
    np.add.at(out, (face, y0, x1), grad * (fx * (1 - fy)))
    np.add.at(out, (face, y1, x0), grad * ((1 - fx) * fy))
    np.add.at(out, (face, y1, x1), grad * (fx * fy))
    return out


@njit(inline="always")
def _face_uv_jit(x, y, z):
    ax, ay, az = abs(x), abs(y), abs(z)
    if ax >= ay and ax >= az:
        ma = ax if ax > 0 else 1.0
        if x > 0:
            return 0, (-z / ma + 1.0) * 0.5, (-y / ma + 1.0) * 0.5
        return 1, (z / ma + 1.0) * 0.5, (-y / ma + 1.0) * 0.5
    if ay >= az:
        ma = ay if ay > 0 else 1.0
        if y > 0:
            return 2, (x / ma + 1.0) * 0.5, (z / ma + 1.0) * 0.5
        return 3, (x / ma + 1.0) * 0.5, (-z / ma + 1.0) * 0.5
    ma = az if az > 0 else 1.0
    if z > 0:
        return 4, (x / ma + 1.0) * 0.5, (-y / ma + 1.0) * 0.5
    return 5, (-x / ma + 1.0) * 0.5, (-y / ma + 1.0) * 0.5


@njit(inline="always")
def _tap_jit(t, res):
    p = t * res - 0.5
    if p < 0.0:
        p = 0.0
    elif p > res - 1.0:
        p = res - 1.0
    i0 = int(np.floor(p))
    i1 = i0 + 1 if i0 + 1 < res else res - 1
    return i0, i1, p - i0


@njit
def cube_sample_jit(data, dirs):
    res = data.shape[1]
    nch = data.shape[3]
    out = np.empty((dirs.shape[0], nch))
    for p in range(dirs.shape[0]):
        f, u, v = _face_uv_jit(dirs[p, 0], dirs[p, 1], dirs[p, 2])
        x0, x1, fx = _tap_jit(u, res)
        y0, y1, fy = _tap_jit(v, res)
        for c in range(nch):
            top = data[f, y0, x0, c] * (1 - fx) + data[f, y0, x1, c] * fx
            bot = data[f, y1, x0, c] * (1 - fx) + data[f, y1, x1, c] * fx
            out[p, c] = top * (1 - fy) + bot * fy
    return out


@njit
def cube_sample_adjoint_jit(dirs, grad, res):
    nch = grad.shape[1]
    out = np.zeros((6, res, res, nch))
    for p in range(dirs.shape[0]):
        f, u, v = _face_uv_jit(dirs[p, 0], dirs[p, 1], dirs[p, 2])
        x0, x1, fx = _tap_jit(u, res)
        y0, y1, fy = _tap_jit(v, res)
        for c in range(nch):
            g = grad[p, c]
            out[f, y0, x0, c] += g * (1 - fx) * (1 - fy)
            out[f, y0, x1, c] += g * fx * (1 - fy)
            out[f, y1, x0, c] += g * (1 - fx) * fy
            out[f, y1, x1, c] += g * fx * fy
    return out


_cube_sample = dispatch(cube_sample_jit, cube_sample_np)
_cube_sample_adjoint = dispatch(cube_sample_adjoint_jit, cube_sample_adjoint_np)


def cube_sample(data, dirs):
    data = np.ascontiguousarray(data, dtype=np.float64)
    dirs = np.ascontiguousarray(np.reshape(dirs, (-1, 3)), dtype=np.float64)
    return _cube_sample(data, dirs)


def cube_sample_adjoint(dirs, grad, res):
    dirs = np.ascontiguousarray(np.reshape(dirs, (-1, 3)), dtype=np.float64)
    grad = np.ascontiguousarray(grad, dtype=np.float64)
    return _cube_sample_adjoint(dirs, grad, int(res))


# --- resolution changes -----------------------------------------------------


def pool_weighted(data):
    """Halve the face resolution by solid-angle weighted 2x2 averaging.

    Child texels tile their parent exactly, so the solid-angle weighted mean of
    the whole map is preserved.
    """
    res = data.shape[1]
    if res < 2:
        raise ValueError("cannot pool a 1x1 face")
    w = texel_solid_angles(res)[None, :, :, None]
    num = (data * w).reshape(6, res // 2, 2, res // 2, 2, -1).sum(axis=(2, 4))
    den = w.reshape(1, res // 2, 2, res // 2, 2, 1).sum(axis=(2, 4))
    return num / den


def pool_weighted_adjoint(grad, res):
    """Transpose of :func:`pool_weighted` from a (6, res/2, res/2, C) gradient."""
    w = texel_solid_angles(res)
    den = w.reshape(res // 2, 2, res // 2, 2).sum(axis=(1, 3))
    frac = w / np.repeat(np.repeat(den, 2, axis=0), 2, axis=1)
    up = np.repeat(np.repeat(grad, 2, axis=1), 2, axis=2)
    return up * frac[None, :, :, None]


def pool_average(data):
    """Plain (unweighted) 2x2 average per face."""
    res = data.shape[1]
    return data.reshape(6, res // 2, 2, res // 2, 2, -1).mean(axis=(2, 4))


def _upsample_axis(a, axis):
    # bilinear x2 at texel centres with edge clamp: weights (1/4, 3/4) / (3/4, 1/4)
    n = a.shape[axis]
    idx = np.arange(n)
    prev = np.take(a, np.maximum(idx - 1, 0), axis=axis)
    nxt = np.take(a, np.minimum(idx + 1, n - 1), axis=axis)
    even = 0.25 * prev + 0.75 * a
    odd = 0.75 * a + 0.25 * nxt
    out = np.stack([even, odd], axis=axis + 1)
    shape = list(a.shape)
    shape[axis] = 2 * n
    return out.reshape(shape)


def upsample_bilinear2x(data):
    """Double the face resolution with bilinear filtering, per face, edge clamped."""
    return _upsample_axis(_upsample_axis(np.asarray(data, dtype=np.float64), 1), 2)
