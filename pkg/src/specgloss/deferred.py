"""Pixel-level shading of a G-buffer under an environment light."""
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .brdf.materials import check_mode
from .brdf.shade import shade_backward, shade_terms
from .imagecore.color import to_srgb
from .imagecore.fileio import write_hdr, write_png
from .surfels.raster import rasterize_fragments


@dataclass
class ShadeOutput:
    radiance: np.ndarray  # (H, W, 3) linear, zero on masked pixels
    diffuse: np.ndarray
    specular: np.ndarray
    composite: np.ndarray  # radiance over the background, weighted by accum
    srgb: np.ndarray  # to_srgb(clip(composite, 0, 1))
    mask: np.ndarray


@dataclass
class PixelShade:
    """Shading of the valid pixels only, with what the backward pass needs."""

    diffuse: np.ndarray  # (P, 3)
    specular: np.ndarray
    composite: np.ndarray
    accum: np.ndarray  # (P,)
    cache: object


def shade_pixels(mat, n, v, accum, background, env, lut, mode):
    d, s, cache = shade_terms(mat, mode, n, v, env, lut)
    a = accum[:, None]
    comp = a * (d + s) + (1.0 - a) * background
    return PixelShade(d, s, comp, accum, cache)


def shade_pixels_backward(ps, env, g_composite, g_diffuse_extra=None, want_env=True):
    """Backward of :func:`shade_pixels` for a gradient on the composite (P, 3).

    ``g_diffuse_extra`` adds a gradient on the diffuse term alone (the diffuse
    prior reads it).
    """
    g = g_composite * ps.accum[:, None]
    g_d = g if g_diffuse_extra is None else g + g_diffuse_extra
    return shade_backward(ps.cache, env, g_d, g, want_env)


def view_vectors(cam):
    """Unit vectors from the surface toward the eye, per pixel (H, W, 3)."""
    return -cam.ray_dirs()


def deferred_shade(g, env, lut, cam, param_mode=None, background=None):
    """Shade every pixel with ``accum >= eps_mask``; the rest shows ``background``."""
    if g.shape != cam.shape:
        raise ValueError(f"G-buffer {g.shape} does not match camera {cam.shape}")
    mode = check_mode(param_mode or g.mode)
    if mode != g.mode:
        raise ValueError(f"G-buffer holds {g.mode!r} materials, asked to shade {mode!r}")
    bg = np.zeros(3) if background is None else np.asarray(background, dtype=np.float64)
    mask = g.mask
    h, w = g.shape
    rad = np.zeros((h, w, 3))
    dif = np.zeros((h, w, 3))
    spec = np.zeros((h, w, 3))
    comp = np.broadcast_to(bg, (h, w, 3)).copy()
    if mask.any():
        ps = shade_pixels(
            g.material[mask], g.normals[mask], view_vectors(cam)[mask], g.accum[mask], bg, env, lut, mode
        )
        dif[mask] = ps.diffuse
        spec[mask] = ps.specular
        rad[mask] = ps.diffuse + ps.specular
        comp[mask] = ps.composite
    srgb = to_srgb(np.clip(comp, 0.0, 1.0))
    return ShadeOutput(rad, dif, spec, comp, srgb, mask)


def dump_buffers(g, out, directory, stem):
    """Write material maps, normals and the diffuse/specular split of one view."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for name, img in g.channels().items():
        img = np.where(g.mask[..., None] if img.ndim == 3 else g.mask, img, 0.0)
        p = directory / f"{stem}_{name}.png"
        write_png(p, img if name in ("roughness", "metallic") else to_srgb(np.clip(img, 0.0, 1.0)))
        written.append(p)
    n = np.where(g.mask[..., None], (g.normals + 1.0) * 0.5, 0.0)
    write_png(directory / f"{stem}_normal.png", n)
    written.append(directory / f"{stem}_normal.png")
    for name in ("diffuse", "specular"):
        img = getattr(out, name)
        write_hdr(directory / f"{stem}_{name}.hdr", img)
        write_png(directory / f"{stem}_{name}.png", to_srgb(np.clip(img, 0.0, 1.0)))
        written += [directory / f"{stem}_{name}.hdr", directory / f"{stem}_{name}.png"]
    return written


def forward_render(scene, cam, env, lut, frags=None):
    """Reference renderer: shade every fragment with its own surfel's material
    and normal, then alpha blend the radiance. Returns the composite (H, W, 3)."""
    if frags is None:
        frags = rasterize_fragments(scene, cam)
    h, w = frags.shape
    bg = np.asarray(scene.background, dtype=np.float64)
    u = frags.used
    pix = frags.pix[u]
    sid = frags.sid[u]
    n = scene.normals[sid] * frags.sign[u][:, None]
    v = view_vectors(cam).reshape(-1, 3)[pix]
    d, s, _ = shade_terms(scene.materials[sid], scene.mode, n, v, env, lut)
    wts = frags.w[u]
    rad = np.zeros((h * w, 3))
    acc = np.zeros(h * w)
    np.add.at(rad, pix, wts[:, None] * (d + s))
    np.add.at(acc, pix, wts)
    return (rad + (1.0 - acc)[:, None] * bg).reshape(h, w, 3)
