"""Equirectangular (lat-long) <-> cube map resampling.

Lat-long pixel (x, y) of a W x H image (W = 2H) maps to
``theta = pi (y + 0.5) / H`` (polar angle from +Y) and
``phi = 2 pi ((x + 0.5) / W - 0.5)``, direction
``(sin theta sin phi, cos theta, -sin theta cos phi)``; the image centre looks
down -Z.
"""
import math

import numpy as np

from .cubemap import CubeMap, cube_sample, face_uv_to_dir, is_pow2


def latlong_dirs(width, height):
    theta = np.pi * (np.arange(height) + 0.5) / height
    phi = 2.0 * np.pi * ((np.arange(width) + 0.5) / width - 0.5)
    th, ph = np.meshgrid(theta, phi, indexing="ij")
    st = np.sin(th)
    return np.stack([st * np.sin(ph), np.cos(th), -st * np.cos(ph)], axis=-1)


def dirs_to_latlong_uv(dirs):
    d = np.asarray(dirs, dtype=np.float64)
    theta = np.arccos(np.clip(d[..., 1], -1.0, 1.0))
    phi = np.arctan2(d[..., 0], -d[..., 2])
    return phi / (2.0 * np.pi) + 0.5, theta / np.pi


def latlong_sample(img, dirs):
    """Bilinear lookup in a lat-long image; wraps in longitude, clamps at poles."""
    h, w = img.shape[:2]
    u, v = dirs_to_latlong_uv(dirs)
    px = u * w - 0.5
    py = np.clip(v * h - 0.5, 0.0, h - 1.0)
    x0 = np.floor(px).astype(np.int64)
    y0 = np.floor(py).astype(np.int64)
    fx = (px - x0)[..., None]
    fy = (py - y0)[..., None]
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = (x0 + 1) % w
    x0 = x0 % w
    top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
    return top * (1 - fy) + bot * fy


def latlong_mean(img):
    """Solid-angle weighted mean radiance of a lat-long image."""
    h = img.shape[0]
    theta = np.pi * (np.arange(h) + 0.5) / h
    w = np.sin(theta)[:, None, None] * np.ones(img.shape[:2] + (1,))
    return (img * w).sum(axis=(0, 1)) / w.sum(axis=(0, 1))


def latlong_to_cube(img, res):
    """Resample a lat-long image to a cube with face size ``res`` (power of two)."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        img = img[..., None]
    h, w = img.shape[:2]
    if w != 2 * h:
        raise ValueError(f"lat-long image must be 2:1, got {w}x{h}")
    if not is_pow2(res):
        raise ValueError(f"face resolution {res} is not a power of two")
    # supersample when the source is finer than the face grid
    ss = max(1, math.ceil(h / (2 * res)))
    sub = (np.arange(res * ss) + 0.5) / (res * ss) * 2.0 - 1.0
    vc, uc = np.meshgrid(sub, sub, indexing="ij")
    faces = []
    for f in range(6):
        d = face_uv_to_dir(f, uc, vc)
        d /= np.linalg.norm(d, axis=-1, keepdims=True)
        vals = latlong_sample(img, d)
        faces.append(vals.reshape(res, ss, res, ss, -1).mean(axis=(1, 3)))
    return CubeMap(np.stack(faces))


def cube_to_latlong(cube, height):
    """Resample a cube map to a 2H x H lat-long image."""
    data = cube.data if isinstance(cube, CubeMap) else np.asarray(cube)
    res = data.shape[1]
    ss = max(1, math.ceil(2 * res / height))
    w = 2 * height
    theta = np.pi * (np.arange(height * ss) + 0.5) / (height * ss)
    phi = 2.0 * np.pi * ((np.arange(w * ss) + 0.5) / (w * ss) - 0.5)
    th, ph = np.meshgrid(theta, phi, indexing="ij")
    st = np.sin(th)
    d = np.stack([st * np.sin(ph), np.cos(th), -st * np.cos(ph)], axis=-1)
    vals = cube_sample(data, d.reshape(-1, 3)).reshape(height, ss, w, ss, -1)
    return vals.mean(axis=(1, 3))


def latlong_convert(src, direction, res=None, height=None):
    """``direction="to_cube"`` takes a lat-long image and face size ``res``;
    ``direction="to_latlong"`` takes a CubeMap and output ``height``."""
    if direction == "to_cube":
        if res is None:
            raise ValueError("to_cube needs a face resolution")
        return latlong_to_cube(src, res)
    if direction == "to_latlong":
        if height is None:
            height = src.res * 2
        return cube_to_latlong(src, height)
    raise ValueError(f"unknown direction {direction!r}")

