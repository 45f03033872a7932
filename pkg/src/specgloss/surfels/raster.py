"""Per-pixel ray casting of surfels and depth-ordered alpha blending.

A render happens in three steps:

1. ``gather`` walks every surfel's screen bounding box (3 sigma disk extent
   plus the screen-space filter radius) and records one fragment per covered
   pixel: surfel id, ray distance, camera depth, filtered Gaussian value and
   the sign that turns the normal toward the camera.
2. Fragments are sorted by (pixel, ray distance, surfel id).
3. ``blend_weights`` runs front-to-back compositing per pixel,
   ``w_i = a_i T_i`` with ``a_i = opacity * G_hat``, and stops after the
   fragment that drops transmittance below ``T_MIN``.

A G-buffer channel is then the weighted sum ``sum_i w_i x_i``, stored as a
sparse (pixels x surfels) matrix so blending and its transpose are matvecs.
"""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .._accel import dispatch, njit, numba_enabled
from ..brdf.materials import CHANNELS, squash

try:
    from numba import prange
except ImportError:  # pragma: no cover
    prange = range

T_MIN = 1e-4
G_CUTOFF = float(np.exp(-4.5))  # 3 sigma
SCREEN_SIGMA = 0.5  # px
EPS_MASK = 0.5
PARALLEL_EPS = 1e-8


def intersect(surfel, origin, direction):
    """Ray vs surfel plane. Returns ``(u, v, t)`` or ``None`` on a miss.

    ``u, v`` are in units of the surfel scales; ``t`` is the ray distance.
    """
    d = np.asarray(direction, dtype=np.float64)
    o = np.asarray(origin, dtype=np.float64)
    tw = np.cross(surfel.t_u, surfel.t_v)
    denom = d @ tw
    if abs(denom) < PARALLEL_EPS:
        return None
    t = (surfel.p - o) @ tw / denom
    if t <= 0.0:
        return None
    x = o + t * d - surfel.p
    return (x @ surfel.t_u) / surfel.s[0], (x @ surfel.t_v) / surfel.s[1], t


# --- fragment gathering ----------------------------------------------------


@njit
def _bbox_jit(p, tu, tv, s, R, tc, fx, fy, cx, cy, w, h, sig):
    pc = R @ p + tc
    if pc[2] <= 1e-6:
        return 0, -1, 0, -1, 0.0, 0.0
    px = fx * pc[0] / pc[2] + cx
    py = fy * pc[1] / pc[2] + cy
    r_s = 3.0 * sig
    x0 = px - r_s
    x1 = px + r_s
    y0 = py - r_s
    y1 = py + r_s
    full = False
    for a in (-3.0, 3.0):
        for b in (-3.0, 3.0):
            q = p + a * s[0] * tu + b * s[1] * tv
            qc = R @ q + tc
            if qc[2] <= 1e-6:
                full = True
            else:
                qx = fx * qc[0] / qc[2] + cx
                qy = fy * qc[1] / qc[2] + cy
                x0 = min(x0, qx)
                x1 = max(x1, qx)
                y0 = min(y0, qy)
                y1 = max(y1, qy)
    if full:
        return 0, w - 1, 0, h - 1, px, py
    # pixel i covers [i, i+1); its centre is i + 0.5
    ix0 = max(0, int(np.floor(x0 - 0.5)))
    ix1 = min(w - 1, int(np.ceil(x1 - 0.5)))
    iy0 = max(0, int(np.floor(y0 - 0.5)))
    iy1 = min(h - 1, int(np.ceil(y1 - 0.5)))
    return ix0, ix1, iy0, iy1, px, py


@njit
def _frag_jit(p, tu, tv, tw, s, o, d, px, py, x, y, sig):
    denom = d[0] * tw[0] + d[1] * tw[1] + d[2] * tw[2]
    if abs(denom) < 1e-8:
        return False, 0.0, 0.0
    t = ((p[0] - o[0]) * tw[0] + (p[1] - o[1]) * tw[1] + (p[2] - o[2]) * tw[2]) / denom
    if t <= 0.0:
        return False, 0.0, 0.0
    qx = o[0] + t * d[0] - p[0]
    qy = o[1] + t * d[1] - p[1]
    qz = o[2] + t * d[2] - p[2]
    u = (qx * tu[0] + qy * tu[1] + qz * tu[2]) / s[0]
    v = (qx * tv[0] + qy * tv[1] + qz * tv[2]) / s[1]
    g_obj = np.exp(-0.5 * (u * u + v * v))
    dx = x + 0.5 - px
    dy = y + 0.5 - py
    g_scr = np.exp(-0.5 * (dx * dx + dy * dy) / (sig * sig))
    g = max(g_obj, g_scr)
    if g < 0.011108996538242306:  # exp(-4.5)
        return False, 0.0, 0.0
    return True, t, g


@njit(parallel=True)
def gather_jit(pos, tu, tv, scale, R, tc, fx, fy, cx, cy, w, h, sig, dirs):
    k = pos.shape[0]
    o = -R.T @ tc
    tw = np.empty((k, 3))
    for i in range(k):
        tw[i] = np.cross(tu[i], tv[i])
    counts = np.zeros(k, dtype=np.int64)
    for i in prange(k):
        x0, x1, y0, y1, px, py = _bbox_jit(pos[i], tu[i], tv[i], scale[i], R, tc, fx, fy, cx, cy, w, h, sig)
        c = 0
        for y in range(y0, y1 + 1):
            for x in range(x0, x1 + 1):
                ok, t, g = _frag_jit(pos[i], tu[i], tv[i], tw[i], scale[i], o, dirs[y, x], px, py, x, y, sig)
                if ok:
                    c += 1
        counts[i] = c
    offs = np.zeros(k + 1, dtype=np.int64)
    for i in range(k):
        offs[i + 1] = offs[i] + counts[i]
    n = offs[k]
    pix = np.empty(n, dtype=np.int64)
    sid = np.empty(n, dtype=np.int64)
    tt = np.empty(n)
    gg = np.empty(n)
    sign = np.empty(n)
    for i in prange(k):
        x0, x1, y0, y1, px, py = _bbox_jit(pos[i], tu[i], tv[i], scale[i], R, tc, fx, fy, cx, cy, w, h, sig)
        c = offs[i]
        for y in range(y0, y1 + 1):
            for x in range(x0, x1 + 1):
                d = dirs[y, x]
                ok, t, g = _frag_jit(pos[i], tu[i], tv[i], tw[i], scale[i], o, d, px, py, x, y, sig)
                if ok:
                    pix[c] = y * w + x
                    sid[c] = i
                    tt[c] = t
                    gg[c] = g
                    sign[c] = 1.0 if d[0] * tw[i, 0] + d[1] * tw[i, 1] + d[2] * tw[i, 2] < 0.0 else -1.0
                    c += 1
    return pix, sid, tt, gg, sign


def _bbox_np(pos, tu, tv, scale, cam, sig):
    k = pos.shape[0]
    uv, z = cam.project(pos)
    corners = []
    for a in (-3.0, 3.0):
        for b in (-3.0, 3.0):
            corners.append(pos + a * scale[:, :1] * tu + b * scale[:, 1:] * tv)
    cuv, cz = cam.project(np.stack(corners, axis=1))
    behind = np.any(cz <= 1e-6, axis=1)
    cuv = np.where(behind[:, None, None], uv[:, None, :], cuv)
    r_s = 3.0 * sig
    lo = np.minimum(cuv.min(axis=1), uv - r_s)
    hi = np.maximum(cuv.max(axis=1), uv + r_s)
    ix0 = np.maximum(0, np.floor(lo[:, 0] - 0.5)).astype(np.int64)
    ix1 = np.minimum(cam.width - 1, np.ceil(hi[:, 0] - 0.5)).astype(np.int64)
    iy0 = np.maximum(0, np.floor(lo[:, 1] - 0.5)).astype(np.int64)
    iy1 = np.minimum(cam.height - 1, np.ceil(hi[:, 1] - 0.5)).astype(np.int64)
    ix0[behind] = 0
    iy0[behind] = 0
    ix1[behind] = cam.width - 1
    iy1[behind] = cam.height - 1
    skip = z <= 1e-6
    ix1[skip] = -1
    return ix0, ix1, iy0, iy1, uv


def gather_np(pos, tu, tv, scale, cam, sig, dirs):
    o = cam.center
    tw = np.cross(tu, tv)
    ix0, ix1, iy0, iy1, uv = _bbox_np(pos, tu, tv, scale, cam, sig)
    out = [], [], [], [], []
    for i in range(pos.shape[0]):
        if ix1[i] < ix0[i] or iy1[i] < iy0[i]:
            continue
        ys, xs = np.mgrid[iy0[i] : iy1[i] + 1, ix0[i] : ix1[i] + 1]
        ys = ys.ravel()
        xs = xs.ravel()
        d = dirs[ys, xs]
        denom = d @ tw[i]
        hit = np.abs(denom) >= PARALLEL_EPS
        with np.errstate(divide="ignore", invalid="ignore"):
            t = ((pos[i] - o) @ tw[i]) / denom
        hit &= t > 0.0
        q = o + t[:, None] * d - pos[i]
        u = (q @ tu[i]) / scale[i, 0]
        v = (q @ tv[i]) / scale[i, 1]
        g_obj = np.exp(-0.5 * (u * u + v * v))
        dx = xs + 0.5 - uv[i, 0]
        dy = ys + 0.5 - uv[i, 1]
        g_scr = np.exp(-0.5 * (dx * dx + dy * dy) / (sig * sig))
        g = np.maximum(g_obj, g_scr)
        hit &= g >= G_CUTOFF
        out[0].append((ys * cam.width + xs)[hit])
        out[1].append(np.full(hit.sum(), i, dtype=np.int64))
        out[2].append(t[hit])
        out[3].append(g[hit])
        out[4].append(np.where(denom[hit] < 0.0, 1.0, -1.0))
    if not out[0]:
        return np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0), np.zeros(0), np.zeros(0)
    return tuple(np.concatenate(a) for a in out)


def gather(scene, cam, sigma_px=SCREEN_SIGMA):
    dirs = np.ascontiguousarray(cam.ray_dirs())
    args = (scene.pos, scene.t_u, scene.t_v, scene.scale)
    if numba_enabled():
        return gather_jit(
            *args, cam.R, cam.t, float(cam.fx), float(cam.fy), float(cam.cx), float(cam.cy),
            cam.width, cam.height, float(sigma_px), dirs,
        )
    return gather_np(*args, cam, float(sigma_px), dirs)


# --- blending ----------------------------------------------------------------


@njit(parallel=True)
def blend_weights_jit(starts, alpha):
    n_pix = starts.shape[0] - 1
    w = np.zeros(alpha.shape[0])
    used = np.zeros(alpha.shape[0], dtype=np.bool_)
    for p in prange(n_pix):
        T = 1.0
        for f in range(starts[p], starts[p + 1]):
            w[f] = alpha[f] * T
            used[f] = True
            T *= 1.0 - alpha[f]
            if T < 1e-4:
                break
    return w, used


def blend_weights_np(starts, alpha):
    """Front-to-back weights, one depth rank of all pixels at a time."""
    n_pix = starts.shape[0] - 1
    counts = np.diff(starts)
    w = np.zeros(alpha.shape[0])
    used = np.zeros(alpha.shape[0], dtype=bool)
    T = np.ones(n_pix)
    active = counts > 0
    for rank in range(int(counts.max(initial=0))):
        pix = np.nonzero(active & (counts > rank))[0]
        if pix.size == 0:
            break
        f = starts[pix] + rank
        w[f] = alpha[f] * T[pix]
        used[f] = True
        T[pix] *= 1.0 - alpha[f]
        active[pix[T[pix] < T_MIN]] = False
    return w, used


blend_weights = dispatch(blend_weights_jit, blend_weights_np)


@njit(parallel=True)
def blend_alpha_grad_jit(starts, alpha, w, used, g_w):
    """d/da of ``sum_f g_w[f] w[f]`` where ``w`` came from :func:`blend_weights`."""
    n_pix = starts.shape[0] - 1
    g_a = np.zeros(alpha.shape[0])
    for p in prange(n_pix):
        # suffix sum over later fragments of g_w * w
        acc = 0.0
        for f in range(starts[p + 1] - 1, starts[p] - 1, -1):
            if not used[f]:
                continue
            one_minus = 1.0 - alpha[f]
            T = w[f] / alpha[f] if alpha[f] > 0.0 else 0.0
            g = g_w[f] * T
            if acc != 0.0:
                g -= acc / one_minus
            g_a[f] = g
            acc += g_w[f] * w[f]
    return g_a


def blend_alpha_grad_np(starts, alpha, w, used, g_w):
    n_pix = starts.shape[0] - 1
    counts = np.diff(starts)
    g_a = np.zeros(alpha.shape[0])
    acc = np.zeros(n_pix)
    for rank in range(int(counts.max(initial=0)) - 1, -1, -1):
        pix = np.nonzero(counts > rank)[0]
        f = starts[pix] + rank
        u = used[f]
        pix = pix[u]
        f = f[u]
        with np.errstate(divide="ignore", invalid="ignore"):
            T = np.where(alpha[f] > 0.0, w[f] / alpha[f], 0.0)
            g = g_w[f] * T - np.where(acc[pix] != 0.0, acc[pix] / (1.0 - alpha[f]), 0.0)
        g_a[f] = g
        acc[pix] += g_w[f] * w[f]
    return g_a


blend_alpha_grad = dispatch(blend_alpha_grad_jit, blend_alpha_grad_np)


# --- G-buffer ----------------------------------------------------------------


@dataclass
class Fragments:
    """Sorted fragments of one view plus the blend matrix ``W`` (pixels x surfels)."""

    shape: tuple
    starts: np.ndarray
    pix: np.ndarray
    sid: np.ndarray
    t: np.ndarray
    z: np.ndarray
    g: np.ndarray
    sign: np.ndarray
    alpha: np.ndarray
    w: np.ndarray
    used: np.ndarray
    n_surfels: int

    def matrix(self, per_fragment=None):
        """CSR blend matrix whose rows keep depth order, so products sum front to back."""
        vals = self.w if per_fragment is None else self.w * per_fragment
        m = self.used
        n_pix = self.shape[0] * self.shape[1]
        indptr = np.zeros(n_pix + 1, dtype=np.int64)
        np.cumsum(np.bincount(self.pix[m], minlength=n_pix), out=indptr[1:])
        return sp.csr_matrix((vals[m], self.sid[m], indptr), shape=(n_pix, self.n_surfels))


def rasterize_fragments(scene, cam, opacity=None, sigma_px=SCREEN_SIGMA):
    """Gather, sort and weight the fragments of ``scene`` seen from ``cam``.

    ``opacity`` (K,) overrides the squashed ``scene.alpha_raw``.
    """
    pix, sid, t, g, sign = gather(scene, cam, sigma_px)
    order = np.lexsort((sid, t, pix))
    pix, sid, t, g, sign = pix[order], sid[order], t[order], g[order], sign[order]
    n_pix = cam.width * cam.height
    starts = np.zeros(n_pix + 1, dtype=np.int64)
    np.cumsum(np.bincount(pix, minlength=n_pix), out=starts[1:])
    op = squash(scene.alpha_raw) if opacity is None else np.asarray(opacity, dtype=np.float64)
    alpha = np.ascontiguousarray(op[sid] * g)
    w, used = blend_weights(starts, alpha)
    # camera depth of the hit: distance along the optical axis
    dirs = cam.ray_dirs().reshape(-1, 3)
    z = t * (dirs[pix] @ cam.R[2])
    return Fragments((cam.height, cam.width), starts, pix, sid, t, z, g, sign, alpha, w, used, len(scene))


@dataclass
class GBuffer:
    """Raw front-to-back blends of every attribute plus the accumulated opacity.

    ``material``, ``normal`` and ``depth`` hold ``sum_i w_i x_i``; the
    normalised views divide by ``accum``.
    """

    mode: str
    accum: np.ndarray  # (H, W)
    mat_blend: np.ndarray  # (H, W, C), squashed channels
    normal_blend: np.ndarray  # (H, W, 3)
    depth_blend: np.ndarray  # (H, W)
    eps_mask: float = EPS_MASK

    @property
    def shape(self):
        return self.accum.shape

    @property
    def mask(self):
        n = np.linalg.norm(self.normal_blend, axis=-1)
        return (self.accum >= self.eps_mask) & (n > 1e-12)

    def _norm(self, x):
        a = np.where(self.accum > 0.0, self.accum, 1.0)
        return x / (a[..., None] if x.ndim == 3 else a)

    @property
    def material(self):
        return self._norm(self.mat_blend)

    @property
    def depth(self):
        return self._norm(self.depth_blend)

    @property
    def normals(self):
        n = np.linalg.norm(self.normal_blend, axis=-1, keepdims=True)
        return np.where(n > 1e-12, self.normal_blend / np.where(n > 1e-12, n, 1.0), 0.0)

    def channels(self):
        """Named, accum-normalised per-pixel maps for dumping."""
        m = self.material
        if self.mode == "sg":
            out = {"kd": m[..., 0:3], "F0": m[..., 3:6], "roughness": m[..., 6]}
        else:
            out = {"basecolor": m[..., 0:3], "metallic": m[..., 3], "roughness": m[..., 4]}
            if self.mode == "mrs":
                out["ks"] = m[..., 5:8]
        return out


def blend_gbuffer(frags, scene_or_mat, normals, mode):
    """Blend per-surfel squashed materials (K, C) and normals into a :class:`GBuffer`."""
    mat = scene_or_mat
    W = frags.matrix()
    Wn = frags.matrix(frags.sign)
    h, w = frags.shape
    accum = (W @ np.ones(frags.n_surfels)).reshape(h, w)
    mat_b = (W @ mat).reshape(h, w, -1)
    nrm_b = (Wn @ normals).reshape(h, w, 3)
    depth_b = (frags.matrix(frags.z) @ np.ones(frags.n_surfels)).reshape(h, w)
    return GBuffer(mode, accum, mat_b, nrm_b, depth_b)


def rasterize(scene, cam, opacity=None, sigma_px=SCREEN_SIGMA):
    """Render ``scene`` into a :class:`GBuffer` seen from ``cam``."""
    frags = rasterize_fragments(scene, cam, opacity, sigma_px)
    return blend_gbuffer(frags, scene.materials, scene.normals, scene.mode), frags


def gbuffer_backward(frags, mat, normals, g_mat_blend, g_accum=None, g_normal_blend=None, g_depth_blend=None):
    """Gradients of a scalar with respect to per-surfel opacity and materials.

    Inputs are gradients on the raw blends (H, W, ...). Returns
    ``(g_opacity (K,), g_mat (K, C))`` where ``g_mat`` is on squashed values.
    """
    n_pix = frags.shape[0] * frags.shape[1]
    W = frags.matrix()
    gm = np.asarray(g_mat_blend).reshape(n_pix, -1)
    g_mat = np.asarray(W.T @ gm)
    # per-fragment gradient on its blend weight
    f = frags.pix
    g_w = np.einsum("fc,fc->f", gm[f], mat[frags.sid])
    if g_accum is not None:
        g_w += np.asarray(g_accum).reshape(n_pix)[f]
    if g_normal_blend is not None:
        gn = np.asarray(g_normal_blend).reshape(n_pix, 3)
        g_w += frags.sign * np.einsum("fc,fc->f", gn[f], normals[frags.sid])
    if g_depth_blend is not None:
        g_w += np.asarray(g_depth_blend).reshape(n_pix)[f] * frags.z
    g_a = blend_alpha_grad(frags.starts, frags.alpha, frags.w, frags.used, np.ascontiguousarray(g_w))
    g_op = np.bincount(frags.sid, weights=g_a * frags.g, minlength=frags.n_surfels)
    return g_op, g_mat
