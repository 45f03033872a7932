"""Split-sum environment-BRDF table.

Cell ``(i, j)`` of an ``N x N`` table holds the Fresnel scale ``beta1`` and bias
``beta2`` at roughness ``r = (i + 0.5) / N`` and ``n.v = (j + 0.5) / N``::

    beta1 = E[(1 - Fc) G_vis],  beta2 = E[Fc G_vis],  Fc = (1 - v.h)^5
    G_vis = G(n.v, n.l) (v.h) / ((n.h)(n.v))

with half vectors drawn from the GGX distribution (``alpha = r^2``) on a
Hammersley set shifted by ``seed``.
"""
import json
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .._accel import dispatch, njit
from ..imagecore.fileio import read_pfm, write_pfm
from ..sampling import hammersley

try:
    from numba import prange
except ImportError:  # pragma: no cover
    prange = range

DEFAULT_N = 64
DEFAULT_SAMPLES = 1024


def _cell_np(r, nv, xi):
    alpha = r * r
    a2 = alpha * alpha
    k = alpha / 2.0
    v = np.array([np.sqrt(1.0 - nv * nv), 0.0, nv])
    phi = 2.0 * np.pi * xi[:, 0]
    cos_t = np.sqrt((1.0 - xi[:, 1]) / (1.0 + (a2 - 1.0) * xi[:, 1]))
    sin_t = np.sqrt(np.maximum(0.0, 1.0 - cos_t * cos_t))
    h = np.stack([sin_t * np.cos(phi), sin_t * np.sin(phi), cos_t], axis=-1)
    vh = h @ v
    l_z = 2.0 * vh * h[:, 2] - v[2]
    ok = (l_z > 0.0) & (vh > 0.0)
    nl = np.where(ok, l_z, 1.0)
    g = (nv / (nv * (1.0 - k) + k)) * (nl / (nl * (1.0 - k) + k))
    g_vis = np.where(ok, g * vh / (h[:, 2] * nv), 0.0)
    fc = (1.0 - np.clip(vh, 0.0, 1.0)) ** 5
    return np.mean((1.0 - fc) * g_vis), np.mean(fc * g_vis)


def lut_table_np(n, xi):
    out = np.zeros((n, n, 2))
    for i in range(n):
        for j in range(n):
            out[i, j] = _cell_np((i + 0.5) / n, (j + 0.5) / n, xi)
    return out


@njit(parallel=True)
def lut_table_jit(n, xi):
    out = np.zeros((n, n, 2))
    m = xi.shape[0]
    for i in prange(n):
        r = (i + 0.5) / n
        alpha = r * r
        a2 = alpha * alpha
        k = alpha / 2.0
        for j in range(n):
            nv = (j + 0.5) / n
            vx = np.sqrt(1.0 - nv * nv)
            a = 0.0
            b = 0.0
            for s in range(m):
                phi = 2.0 * np.pi * xi[s, 0]
                cos_t = np.sqrt((1.0 - xi[s, 1]) / (1.0 + (a2 - 1.0) * xi[s, 1]))
                sin_t = np.sqrt(max(0.0, 1.0 - cos_t * cos_t))
                hx = sin_t * np.cos(phi)
                vh = vx * hx + nv * cos_t
                l_z = 2.0 * vh * cos_t - nv
                if l_z > 0.0 and vh > 0.0:
                    g = (nv / (nv * (1.0 - k) + k)) * (l_z / (l_z * (1.0 - k) + k))
                    g_vis = g * vh / (cos_t * nv)
                    fc = (1.0 - min(vh, 1.0)) ** 5
                    a += (1.0 - fc) * g_vis
                    b += fc * g_vis
            out[i, j, 0] = a / m
            out[i, j, 1] = b / m
    return out


lut_table = dispatch(lut_table_jit, lut_table_np)


@dataclass
class BrdfLut:
    table: np.ndarray  # (N, N, 2) indexed [roughness, n.v]
    samples: int
    seed: int = 0

    @property
    def n(self):
        return self.table.shape[0]

    def _coords(self, x):
        t = np.clip(np.asarray(x, dtype=np.float64) * self.n - 0.5, 0.0, self.n - 1.0)
        i0 = np.minimum(np.floor(t).astype(np.int64), self.n - 2)
        return i0, t - i0

    def fetch(self, r, nv):
        """Bilinear ``(beta1, beta2)`` at ``(r, n.v)``; returns (..., 2)."""
        return self.fetch_with_grad(r, nv)[0]

    def fetch_with_grad(self, r, nv):
        """Bilinear lookup and its derivative with respect to ``r``.

        Coordinates outside the cell-centre range are clamped, where the
        derivative is zero.
        """
        r = np.asarray(r, dtype=np.float64)
        nv = np.asarray(nv, dtype=np.float64)
        i0, fr = self._coords(r)
        j0, fv = self._coords(nv)
        t = self.table
        fv_ = fv[..., None]
        lo = t[i0, j0] * (1.0 - fv_) + t[i0, j0 + 1] * fv_
        hi = t[i0 + 1, j0] * (1.0 - fv_) + t[i0 + 1, j0 + 1] * fv_
        val = lo + (hi - lo) * fr[..., None]
        tr = r * self.n - 0.5
        inside = (tr > 0.0) & (tr < self.n - 1.0)
        d_dr = np.where(inside[..., None], (hi - lo) * self.n, 0.0)
        return val, d_dr

    def save(self, path):
        """Write ``<path>.pfm`` (beta1, beta2, 0) and ``<path>.json``."""
        path = Path(path).with_suffix("")
        rgb = np.concatenate([self.table, np.zeros(self.table.shape[:2] + (1,))], axis=-1)
        write_pfm(path.with_suffix(".pfm"), rgb)
        meta = {"N": self.n, "samples": self.samples, "seed": self.seed, "image": path.with_suffix(".pfm").name}
        path.with_suffix(".json").write_text(json.dumps(meta, indent=2) + "\n")
        return path.with_suffix(".json")

    @classmethod
    def load(cls, manifest):
        manifest = Path(manifest)
        meta = json.loads(manifest.read_text())
        img = read_pfm(manifest.parent / meta.get("image", manifest.with_suffix(".pfm").name))
        if img.shape[:2] != (meta["N"], meta["N"]):
            raise ValueError("LUT image size disagrees with its manifest")
        return cls(np.ascontiguousarray(img[..., :2], dtype=np.float64), int(meta["samples"]), int(meta["seed"]))


def compute_brdf_lut(n=DEFAULT_N, samples=DEFAULT_SAMPLES, seed=0):
    if n < 2:
        raise ValueError("LUT resolution must be at least 2")
    if samples < 16:
        raise ValueError("LUT integration needs at least 16 samples")
    xi = np.ascontiguousarray(hammersley(samples, seed))
    return BrdfLut(lut_table(int(n), xi), int(samples), int(seed))


@lru_cache(maxsize=4)
def default_lut(n=DEFAULT_N, samples=DEFAULT_SAMPLES, seed=0):
    """Shared LUT instance; treat as read-only."""
    return compute_brdf_lut(n, samples, seed)
