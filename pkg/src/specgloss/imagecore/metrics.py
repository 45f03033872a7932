"""Image quality metrics: PSNR, SSIM (with adjoint) and normal angular error."""
import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

PSNR_IDENTICAL = math.inf

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5


@dataclass
class NormalMap:
    """Per-pixel unit normals with a validity mask."""

    normals: np.ndarray  # (H, W, 3)
    mask: np.ndarray  # (H, W) bool

    def __post_init__(self):
        self.normals = np.asarray(self.normals, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.normals.shape[:2] != self.mask.shape or self.normals.shape[-1] != 3:
            raise ValueError("normals must be (H, W, 3) with an (H, W) mask")

    def check_unit(self, tol=1e-4):
        n = np.linalg.norm(self.normals[self.mask], axis=-1)
        return bool(np.all(np.abs(n - 1.0) <= tol))

    @classmethod
    def from_image(cls, encoded, mask=None):
        """Decode (n + 1) / 2 color encoding; renormalises and masks zero vectors."""
        n = np.asarray(encoded, dtype=np.float64)[..., :3] * 2.0 - 1.0
        length = np.linalg.norm(n, axis=-1)
        valid = length > 0.5
        if mask is not None:
            valid &= np.asarray(mask, dtype=bool)
        out = np.zeros_like(n)
        out[valid] = n[valid] / length[valid, None]
        return cls(out, valid)

    def to_image(self):
        img = np.where(self.mask[..., None], (self.normals + 1.0) * 0.5, 0.0)
        return np.clip(img, 0.0, 1.0)

    def rotated(self, rot):
        """Apply a 3x3 rotation to every normal (``n' = rot @ n``)."""
        n = self.normals @ np.asarray(rot, dtype=np.float64).T
        return NormalMap(np.where(self.mask[..., None], n, 0.0), self.mask.copy())


def _same_shape(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return a, b


def mse(a, b, mask=None):
    a, b = _same_shape(a, b)
    d = (a - b) ** 2
    if mask is not None:
        d = d[np.asarray(mask, dtype=bool)]
    return float(np.mean(d))


def psnr(a, b, peak=1.0, mask=None):
    """10 log10(peak^2 / MSE); returns ``PSNR_IDENTICAL`` (+inf) for zero error."""
    err = mse(a, b, mask)
    if err == 0.0:
        return PSNR_IDENTICAL
    return 10.0 * math.log10(peak * peak / err)


def gaussian_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def _blur(x, g):
    # zero-padded separable filter; symmetric kernel so this is also its own adjoint
    y = correlate1d(x, g, axis=0, mode="constant", cval=0.0)
    return correlate1d(y, g, axis=1, mode="constant", cval=0.0)


def _as_hwc(x):
    return x[..., None] if x.ndim == 2 else x


def _ssim_terms(a, b, peak):
    a, b = _same_shape(a, b)
    a = _as_hwc(a)
    b = _as_hwc(b)
    if a.shape[0] < SSIM_WINDOW or a.shape[1] < SSIM_WINDOW:
        raise ValueError(f"image smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")
    g = gaussian_window()
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    mx = _blur(a, g)
    my = _blur(b, g)
    exx = _blur(a * a, g)
    eyy = _blur(b * b, g)
    exy = _blur(a * b, g)
    sxx = exx - mx * mx
    syy = eyy - my * my
    sxy = exy - mx * my
    a1 = 2.0 * mx * my + c1
    a2 = 2.0 * sxy + c2
    b1 = mx * mx + my * my + c1
    b2 = sxx + syy + c2
    smap = (a1 * a2) / (b1 * b2)
    return a, b, g, mx, my, a1, a2, b1, b2, smap


def ssim(a, b, peak=1.0):
    """Mean SSIM, 11x11 Gaussian window (sigma 1.5), zero padded, averaged over channels."""
    return float(np.mean(_ssim_terms(a, b, peak)[-1]))


def ssim_and_grad(a, b, peak=1.0):
    """Mean SSIM and its gradient with respect to ``a``."""
    shape = np.shape(a)
    a, b, g, mx, my, a1, a2, b1, b2, smap = _ssim_terms(a, b, peak)
    scale = 1.0 / smap.size
    denom = b1 * b2
    d_mx = (2.0 * my * (a2 - a1) / denom - 2.0 * mx * smap * (1.0 / b1 - 1.0 / b2)) * scale
    d_exx = -smap / b2 * scale
    d_exy = 2.0 * a1 / denom * scale
    grad = _blur(d_mx, g) + 2.0 * a * _blur(d_exx, g) + b * _blur(d_exy, g)
    return float(np.mean(smap)), grad.reshape(shape)


def mae_degrees(pred, gt):
    """Mean angular error in degrees over the intersection of both masks."""
    if pred.normals.shape != gt.normals.shape:
        raise ValueError("normal maps differ in shape")
    mask = pred.mask & gt.mask
    if not mask.any():
        raise ValueError("no pixel is valid in both normal maps")
    a, b = pred.normals[mask], gt.normals[mask]
    # atan2 of |a x b| and a.b equals arccos(a.b) for unit vectors but stays
    # exact near 0 and 180 degrees
    sin = np.linalg.norm(np.cross(a, b), axis=-1)
    cos = np.einsum("ij,ij->i", a, b)
    return float(np.degrees(np.mean(np.arctan2(sin, cos))))
