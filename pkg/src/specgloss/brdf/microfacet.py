"""GGX microfacet terms.

Roughness ``r`` maps to GGX ``alpha = r**2``. The geometry term is the
separable Smith form with the Schlick-GGX ``k = alpha / 2`` used for image
based lighting.
"""
import numpy as np


def ggx_alpha(r):
    return np.asarray(r, dtype=np.float64) ** 2


def ggx_d(n_dot_h, alpha):
    a2 = alpha * alpha
    nh = np.maximum(n_dot_h, 0.0)
    denom = nh * nh * (a2 - 1.0) + 1.0
    return a2 / (np.pi * denom * denom)


def schlick_g1(n_dot_x, k):
    n_dot_x = np.maximum(n_dot_x, 0.0)
    return n_dot_x / (n_dot_x * (1.0 - k) + k)


def smith_g(n_dot_v, n_dot_l, alpha):
    k = alpha / 2.0
    return schlick_g1(n_dot_v, k) * schlick_g1(n_dot_l, k)


def fresnel_schlick(f0, v_dot_h):
    fc = (1.0 - np.clip(v_dot_h, 0.0, 1.0)) ** 5
    return f0 + (1.0 - f0) * fc


def cook_torrance(n, v, l, kd, f0, r):
    """Full BRDF value ``kd/pi + D G F / (4 nl nv)`` for unit vectors (..., 3).

    ``kd`` and ``f0`` broadcast as RGB; returns (..., 3). Zero below the horizon.
    """
    alpha = ggx_alpha(r)
    nl = np.einsum("...i,...i->...", n, l)
    nv = np.einsum("...i,...i->...", n, v)
    h = v + l
    h = h / np.linalg.norm(h, axis=-1, keepdims=True)
    nh = np.einsum("...i,...i->...", n, h)
    vh = np.einsum("...i,...i->...", v, h)
    ok = (nl > 0) & (nv > 0)
    nl_s = np.where(ok, nl, 1.0)
    nv_s = np.where(ok, nv, 1.0)
    spec = (ggx_d(nh, alpha) * smith_g(nv_s, nl_s, alpha) / (4.0 * nl_s * nv_s))[..., None]
    f = fresnel_schlick(np.asarray(f0, dtype=np.float64), vh[..., None])
    val = np.asarray(kd, dtype=np.float64) / np.pi + spec * f
    return np.where(ok[..., None], val, 0.0)
