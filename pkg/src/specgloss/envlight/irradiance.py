"""Diffuse irradiance convolution of a cube map.

Each output texel integrates ``max(n . w, 0) / pi * E(w)`` over every input
texel, weighted by the texel's exact solid angle. The kernel is linear in E;
``irradiance_adjoint`` is its transpose and feeds the training gradients.
"""
import numpy as np

from .._accel import dispatch, njit
from .cubemap import CubeMap, face_dirs, texel_solid_angles

try:
    from numba import prange
except ImportError:  # pragma: no cover
    prange = range

_CHUNK = 256


def _flat_inputs(res):
    d = face_dirs(res).reshape(-1, 3)
    w = np.broadcast_to(texel_solid_angles(res), (6, res, res)).reshape(-1) / np.pi
    return np.ascontiguousarray(d), np.ascontiguousarray(w)


def irradiance_np(out_dirs, in_dirs, in_w, vals):
    out = np.empty((out_dirs.shape[0], vals.shape[1]))
    for s in range(0, out_dirs.shape[0], _CHUNK):
        k = np.maximum(out_dirs[s : s + _CHUNK] @ in_dirs.T, 0.0) * in_w
        out[s : s + _CHUNK] = k @ vals
    return out


def irradiance_adjoint_np(out_dirs, in_dirs, in_w, grad):
    g = np.zeros((in_dirs.shape[0], grad.shape[1]))
    for s in range(0, out_dirs.shape[0], _CHUNK):
        k = np.maximum(out_dirs[s : s + _CHUNK] @ in_dirs.T, 0.0) * in_w
        g += k.T @ grad[s : s + _CHUNK]
    return g


@njit(parallel=True)
def irradiance_jit(out_dirs, in_dirs, in_w, vals):
    m = out_dirs.shape[0]
    nch = vals.shape[1]
    out = np.zeros((m, nch))
    for i in prange(m):
        nx, ny, nz = out_dirs[i, 0], out_dirs[i, 1], out_dirs[i, 2]
        acc = np.zeros(nch)
        for k in range(in_dirs.shape[0]):
            c = nx * in_dirs[k, 0] + ny * in_dirs[k, 1] + nz * in_dirs[k, 2]
            if c > 0.0:
                wk = c * in_w[k]
                for ch in range(nch):
                    acc[ch] += wk * vals[k, ch]
        for ch in range(nch):
            out[i, ch] = acc[ch]
    return out


@njit(parallel=True)
def irradiance_adjoint_jit(out_dirs, in_dirs, in_w, grad):
    kn = in_dirs.shape[0]
    nch = grad.shape[1]
    g = np.zeros((kn, nch))
    for k in prange(kn):
        dx, dy, dz = in_dirs[k, 0], in_dirs[k, 1], in_dirs[k, 2]
        acc = np.zeros(nch)
        for i in range(out_dirs.shape[0]):
            c = out_dirs[i, 0] * dx + out_dirs[i, 1] * dy + out_dirs[i, 2] * dz
            if c > 0.0:
                for ch in range(nch):
                    acc[ch] += c * grad[i, ch]
        for ch in range(nch):
            g[k, ch] = acc[ch] * in_w[k]
    return g


_irradiance = dispatch(irradiance_jit, irradiance_np)
_irradiance_adjoint = dispatch(irradiance_adjoint_jit, irradiance_adjoint_np)


def diffuse_irradiance(base, out_res):
    """Cosine-convolved irradiance map ``L_d`` of ``base`` at face size ``out_res``."""
    data = base.data if isinstance(base, CubeMap) else np.asarray(base, dtype=np.float64)
    in_res = data.shape[1]
    if out_res > in_res:
        raise ValueError(f"out_res {out_res} exceeds base resolution {in_res}")
    in_dirs, in_w = _flat_inputs(in_res)
    out_dirs = np.ascontiguousarray(face_dirs(out_res).reshape(-1, 3))
    vals = np.ascontiguousarray(data.reshape(-1, data.shape[3]))
    out = _irradiance(out_dirs, in_dirs, in_w, vals)
    return CubeMap(out.reshape(6, out_res, out_res, -1))


def irradiance_adjoint(grad, in_res):
    """Transpose of :func:`diffuse_irradiance`; ``grad`` is (6, r, r, C)."""
    out_res = grad.shape[1]
    in_dirs, in_w = _flat_inputs(in_res)
    out_dirs = np.ascontiguousarray(face_dirs(out_res).reshape(-1, 3))
    g = _irradiance_adjoint(out_dirs, in_dirs, in_w, np.ascontiguousarray(grad.reshape(-1, grad.shape[3])))
    return g.reshape(6, in_res, in_res, -1)
