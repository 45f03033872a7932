"""Prefiltered, mipmapped radiance environment maps (PMREM) and lookups.

Two build modes share one mip -> roughness mapping
(``roughness_grid[j] = r_min + (r_max - r_min) * j / (J - 1)``):

``"fast"``
    Level ``j + 1`` is the solid-angle weighted 2x2 average of level ``j``.
    Cheap, linear, differentiable; this is what the training loop rebuilds
    every iteration.
``"ggx"``
    Level ``j >= 1`` convolves the base with the GGX lobe of roughness
    ``roughness_grid[j]`` under the ``n = v = r`` assumption, by importance
    sampling. Lookups use filtered importance sampling (the source mip is
    picked from the sample pdf), so few samples stay alias free.
"""
import warnings
from dataclasses import dataclass, field

import numpy as np

from .._accel import dispatch, njit
from ..sampling import ggx_half_vectors, hammersley
from .cubemap import (
    CubeMap,
    _face_uv_jit,
    _tap_jit,
    cube_sample,
    cube_sample_adjoint,
    cube_sample_np,
    face_dirs,
    pool_weighted,
    pool_weighted_adjoint,
    upsample_bilinear2x,
)
from .irradiance import diffuse_irradiance, irradiance_adjoint

try:
    from numba import prange
except ImportError:  # pragma: no cover
    prange = range

MODES = ("ggx", "fast")


@dataclass
class EnvLight:
    base: CubeMap
    mips: list
    roughness_grid: np.ndarray
    irradiance: CubeMap
    mode: str = "fast"
    res_min: int = 16
    r_min: float = 0.02
    r_max: float = 0.5
    samples: int = 256
    irradiance_res: int = 16
    seed: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def res(self):
        return self.base.res

    @property
    def levels(self):
        return len(self.mips)

    def sample(self, dirs, roughness):
        return sample(self, dirs, roughness)

    def scaled(self, s):
        """Same lighting multiplied by ``s`` (every stage is linear in E)."""
        return EnvLight(
            CubeMap(self.base.data * s),
            [CubeMap(m.data * s) for m in self.mips],
            self.roughness_grid.copy(),
            CubeMap(self.irradiance.data * s),
            self.mode,
            self.res_min,
            self.r_min,
            self.r_max,
            self.samples,
            self.irradiance_res,
            self.seed,
            dict(self.meta),
        )


def roughness_grid(levels, r_min, r_max):
    if levels < 2:
        raise ValueError("a PMREM needs at least two mip levels")
    return r_min + (r_max - r_min) * np.arange(levels) / (levels - 1)


def level_count(res, res_min):
    if res_min < 1 or res < res_min:
        raise ValueError(f"base resolution {res} below minimum {res_min}")
    n = 1
    r = res
    while r > res_min:
        r //= 2
        n += 1
    if r != res_min:
        raise ValueError(f"{res_min} is not reachable from {res} by halving")
    return n


def pooled_pyramid(data, stop_res=1):
    levels = [np.asarray(data, dtype=np.float64)]
    while levels[-1].shape[1] > stop_res:
        levels.append(pool_weighted(levels[-1]))
    return levels


# --- GGX prefilter kernels --------------------------------------------------


def _ggx_lobe(alpha, samples, seed, base_res, n_levels):
    """Sample-set of the lobe: local directions, n.l weights and source lods."""
    xi = hammersley(samples, seed)
    h = ggx_half_vectors(xi, alpha)
    nh = h[:, 2]
    l = 2.0 * nh[:, None] * h - np.array([0.0, 0.0, 1.0])
    keep = l[:, 2] > 0.0
    l, nh = l[keep], nh[keep]
    a2 = alpha * alpha
    pdf = a2 / (np.pi * (nh * nh * (a2 - 1.0) + 1.0) ** 2) / 4.0  # D(h) / 4 when n = v
    omega_s = 1.0 / (samples * pdf)
    omega_p = 4.0 * np.pi / (6.0 * base_res * base_res)
    lod = np.clip(0.5 * np.log2(omega_s / omega_p) + 1.0, 0.0, n_levels - 1)
    return np.ascontiguousarray(l), np.ascontiguousarray(l[:, 2]), np.ascontiguousarray(lod)


def ggx_filter_np(levels, out_dirs, l_local, weights, lods):
    n = out_dirs
    up = np.where((np.abs(n[:, 2]) < 0.999)[:, None], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0])
    t = np.cross(up, n)
    t /= np.linalg.norm(t, axis=-1, keepdims=True)
    b = np.cross(n, t)
    acc = np.zeros((n.shape[0], levels[0].shape[3]))
    for k in range(l_local.shape[0]):
        l = t * l_local[k, 0] + b * l_local[k, 1] + n * l_local[k, 2]
        l /= np.linalg.norm(l, axis=-1, keepdims=True)
        lo = int(np.floor(lods[k]))
        hi = min(lo + 1, len(levels) - 1)
        f = lods[k] - lo
        val = cube_sample_np(levels[lo], l)
        if f > 0.0:
            val = val * (1.0 - f) + cube_sample_np(levels[hi], l) * f
        acc += weights[k] * val
    return acc / weights.sum()


@njit(inline="always")
def _packed_bilinear(pyr, off, res, lev, x, y, z, c):
    r = res[lev]
    f, u, v = _face_uv_jit(x, y, z)
    x0, x1, fx = _tap_jit(u, r)
    y0, y1, fy = _tap_jit(v, r)
    base = off[lev] + f * r * r
    top = pyr[base + y0 * r + x0, c] * (1 - fx) + pyr[base + y0 * r + x1, c] * fx
    bot = pyr[base + y1 * r + x0, c] * (1 - fx) + pyr[base + y1 * r + x1, c] * fx
    return top * (1 - fy) + bot * fy


@njit(parallel=True)
def _ggx_filter_packed(pyr, off, res, out_dirs, l_local, weights, lods):
    m = out_dirs.shape[0]
    nch = pyr.shape[1]
    nlev = res.shape[0]
    wsum = 0.0
    for k in range(weights.shape[0]):
        wsum += weights[k]
    out = np.zeros((m, nch))
    for i in prange(m):
        nx, ny, nz = out_dirs[i, 0], out_dirs[i, 1], out_dirs[i, 2]
        if abs(nz) < 0.999:
            ux, uy, uz = 0.0, 0.0, 1.0
        else:
            ux, uy, uz = 1.0, 0.0, 0.0
        tx = uy * nz - uz * ny
        ty = uz * nx - ux * nz
        tz = ux * ny - uy * nx
        tn = np.sqrt(tx * tx + ty * ty + tz * tz)
        tx, ty, tz = tx / tn, ty / tn, tz / tn
        bx = ny * tz - nz * ty
        by = nz * tx - nx * tz
        bz = nx * ty - ny * tx
        for k in range(l_local.shape[0]):
            a, b_, c_ = l_local[k, 0], l_local[k, 1], l_local[k, 2]
            lx = tx * a + bx * b_ + nx * c_
            ly = ty * a + by * b_ + ny * c_
            lz = tz * a + bz * b_ + nz * c_
            ln = np.sqrt(lx * lx + ly * ly + lz * lz)
            lx, ly, lz = lx / ln, ly / ln, lz / ln
            lo = int(np.floor(lods[k]))
            hi = lo + 1 if lo + 1 < nlev else nlev - 1
            fr = lods[k] - lo
            for ch in range(nch):
                val = _packed_bilinear(pyr, off, res, lo, lx, ly, lz, ch)
                if fr > 0.0:
                    val = val * (1.0 - fr) + _packed_bilinear(pyr, off, res, hi, lx, ly, lz, ch) * fr
                out[i, ch] += weights[k] * val
        for ch in range(nch):
            out[i, ch] /= wsum
    return out


def ggx_filter_jit(levels, out_dirs, l_local, weights, lods):
    res = np.array([lv.shape[1] for lv in levels], dtype=np.int64)
    sizes = 6 * res * res
    off = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
    pyr = np.ascontiguousarray(np.concatenate([lv.reshape(-1, lv.shape[3]) for lv in levels]))
    return _ggx_filter_packed(pyr, off, res, out_dirs, l_local, weights, lods)


_ggx_filter = dispatch(ggx_filter_jit, ggx_filter_np)


def ggx_prefilter_level(source_levels, out_res, roughness, samples, seed=0):
    """GGX-convolve a pooled source pyramid onto a face of size ``out_res``."""
    alpha = float(roughness) ** 2
    base_res = source_levels[0].shape[1]
    l_local, w, lods = _ggx_lobe(max(alpha, 1e-8), samples, seed, base_res, len(source_levels))
    dirs = np.ascontiguousarray(face_dirs(out_res).reshape(-1, 3))
    out = _ggx_filter(source_levels, dirs, l_local, w, lods)
    return out.reshape(6, out_res, out_res, -1)


# --- builders --------------------------------------------------------------


def prefilter_pmrem(
    base,
    res_min=16,
    r_min=0.02,
    r_max=0.5,
    samples=256,
    mode="ggx",
    irradiance_res=16,
    seed=0,
):
    """Build an :class:`EnvLight` (mip pyramid, roughness grid, irradiance)."""
    if not isinstance(base, CubeMap):
        base = CubeMap(base)
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if samples < 1:
        raise ValueError("prefilter needs at least one sample")
    if not 0.0 <= r_min < r_max <= 1.0:
        raise ValueError("need 0 <= r_min < r_max <= 1")
    n_levels = level_count(base.res, res_min)
    grid = roughness_grid(n_levels, r_min, r_max)
    if mode == "fast":
        mips = [CubeMap(d) for d in pooled_pyramid(base.data, res_min)]
    else:
        source = pooled_pyramid(base.data, 1)
        mips = [base]
        for j in range(1, n_levels):
            out_res = base.res >> j
            mips.append(CubeMap(ggx_prefilter_level(source, out_res, grid[j], samples, seed)))
    irr = diffuse_irradiance(base, min(irradiance_res, base.res))
    return EnvLight(base, mips, grid, irr, mode, res_min, r_min, r_max, samples, irradiance_res, seed)


def rebuild(env, base):
    """Rebuild ``env``'s pyramid and irradiance for a new base map, same settings."""
    return prefilter_pmrem(
        base, env.res_min, env.r_min, env.r_max, env.samples, env.mode, env.irradiance_res, env.seed
    )


def progressive_upsample(env, res_final=None):
    """Double the base face resolution bilinearly and rebuild the pyramid.

    At ``res_final`` this is a no-op: the same object comes back and a
    ``RuntimeWarning`` flags it.
    """
    if res_final is not None and env.res * 2 > res_final:
        warnings.warn(f"envmap already at final resolution {env.res}", RuntimeWarning, stacklevel=2)
        return env
    return rebuild(env, CubeMap(upsample_bilinear2x(env.base.data)))


def clip_nonnegative(base):
    """Negative-only clipping: ``max(0, E)``; positives are left untouched."""
    data = base.data if isinstance(base, CubeMap) else np.asarray(base, dtype=np.float64)
    return CubeMap(np.where(data < 0.0, 0.0, data))


# --- lookups --------------------------------------------------------------


def _level_coords(env, roughness):
    n = env.levels
    t = (np.asarray(roughness, dtype=np.float64) - env.r_min) / (env.r_max - env.r_min)
    inside = (t > 0.0) & (t < 1.0)
    t = np.clip(t, 0.0, 1.0) * (n - 1)
    snap = np.round(t)
    t = np.where(np.abs(t - snap) < 1e-9, snap, t)
    lo = np.minimum(np.floor(t).astype(np.int64), n - 2)
    frac = t - lo
    dt_dr = np.where(inside, (n - 1) / (env.r_max - env.r_min), 0.0)
    return lo, frac, dt_dr


def sample_with_cache(env, dirs, roughness):
    """Trilinear prefiltered lookup plus what :func:`sample_adjoint` needs."""
    dirs = np.reshape(np.asarray(dirs, dtype=np.float64), (-1, 3))
    dirs = dirs / np.linalg.norm(dirs, axis=-1, keepdims=True)
    r = np.broadcast_to(np.asarray(roughness, dtype=np.float64), dirs.shape[:1])
    lo, frac, dt_dr = _level_coords(env, r)
    per_level = {}
    out = np.zeros((dirs.shape[0], env.base.channels))
    d_dr = np.zeros_like(out)
    for j in np.unique(np.concatenate([lo, lo + 1])):
        sel = (lo == j) | (lo + 1 == j)
        vals = np.zeros_like(out)
        vals[sel] = cube_sample(env.mips[j].data, dirs[sel])
        per_level[int(j)] = sel
        w = np.where(lo == j, 1.0 - frac, 0.0) + np.where(lo + 1 == j, frac, 0.0)
        out += w[:, None] * vals
        slope = np.where(lo + 1 == j, 1.0, 0.0) - np.where(lo == j, 1.0, 0.0)
        d_dr += (slope * dt_dr)[:, None] * vals
    cache = {"dirs": dirs, "lo": lo, "frac": frac, "levels": per_level}
    return out, d_dr, cache


def sample(env, dirs, roughness):
    """Prefiltered radiance toward ``dirs`` (P,3) at ``roughness`` (scalar or (P,))."""
    single = np.ndim(dirs) == 1
    out = sample_with_cache(env, dirs, roughness)[0]
    return out[0] if single else out


def sample_adjoint(env, cache, grad):
    """Gradient of a trilinear lookup with respect to every mip level."""
    dirs, lo, frac = cache["dirs"], cache["lo"], cache["frac"]
    grads = [np.zeros_like(m.data) for m in env.mips]
    for j, sel in cache["levels"].items():
        w = np.where(lo == j, 1.0 - frac, 0.0) + np.where(lo + 1 == j, frac, 0.0)
        grads[j] += cube_sample_adjoint(dirs[sel], grad[sel] * w[sel, None], env.mips[j].res)
    return grads


def fast_adjoint(env, mip_grads, irradiance_grad=None):
    """Pull gradients on a "fast" pyramid (and irradiance) back to the base map."""
    if env.mode != "fast":
        raise NotImplementedError("gradients are only defined for the fast pyramid")
    g = mip_grads[-1]
    for j in range(len(mip_grads) - 1, 0, -1):
        g = mip_grads[j - 1] + pool_weighted_adjoint(g, env.mips[j - 1].res)
    if irradiance_grad is not None:
        g = g + irradiance_adjoint(irradiance_grad, env.res)
    return g
