"""Split-sum image based shading for batches of points.

``L_o = diffuse + specular`` with::

    diffuse  = kd * L_d(n) + add
    specular = (F0 * beta1 + beta2) * L_s(w_r, r)

``(kd, add, F0, r)`` come from :func:`materials.shading_inputs`, so the same
code serves all three parameterisations. ``L_d`` reads the irradiance cube,
``L_s`` the prefiltered pyramid along the mirrored view direction.
"""
from dataclasses import dataclass

import numpy as np

from ..envlight.cubemap import cube_sample, cube_sample_adjoint
from ..envlight.prefilter import fast_adjoint, sample_adjoint, sample_with_cache
from .materials import shading_inputs, shading_inputs_adjoint

NV_MIN = 1e-4


def reflect_view(n, v):
    """Mirror direction of ``v`` about ``n`` and the clamped ``n.v``."""
    nv_raw = np.einsum("...i,...i->...", n, v)
    w_r = 2.0 * nv_raw[..., None] * n - v
    return w_r, np.clip(nv_raw, NV_MIN, 1.0)


@dataclass
class ShadeCache:
    mat: np.ndarray
    mode: str
    n: np.ndarray
    kd: np.ndarray
    f0: np.ndarray
    beta: np.ndarray
    dbeta_dr: np.ndarray
    l_d: np.ndarray
    l_s: np.ndarray
    dls_dr: np.ndarray
    lookup: dict


def shade_terms(mat, mode, n, v, env, lut):
    """Diffuse and specular radiance (P, 3) each, plus a cache for the backward pass.

    ``mat`` is (P, C) in the channel layout of ``mode``; ``n`` and ``v`` are
    unit vectors (P, 3), ``v`` pointing from the surface toward the eye.
    """
    mat = np.asarray(mat, dtype=np.float64).reshape(-1, np.shape(mat)[-1])
    n = np.asarray(n, dtype=np.float64).reshape(-1, 3)
    v = np.asarray(v, dtype=np.float64).reshape(-1, 3)
    kd, add, f0, r = shading_inputs(mat, mode)
    w_r, nv = reflect_view(n, v)
    beta, dbeta_dr = lut.fetch_with_grad(r, nv)
    l_d = cube_sample(env.irradiance.data, n)
    l_s, dls_dr, lookup = sample_with_cache(env, w_r, r)
    diffuse = kd * l_d + add
    specular = (f0 * beta[:, :1] + beta[:, 1:]) * l_s
    cache = ShadeCache(mat, mode, n, kd, f0, beta, dbeta_dr, l_d, l_s, dls_dr, lookup)
    return diffuse, specular, cache


def shade(material, n, v, env, lut, mode=None):
    """Outgoing radiance of one material (dataclass or channel array) at (P, 3) points."""
    if mode is None:
        mode = material.mode
    arr = material.to_array() if hasattr(material, "to_array") else np.asarray(material, dtype=np.float64)
    single = np.ndim(n) == 1
    n2 = np.reshape(n, (-1, 3))
    mat = np.broadcast_to(arr, (n2.shape[0], arr.shape[-1]))
    d, s, _ = shade_terms(mat, mode, n2, v, env, lut)
    out = d + s
    return out[0] if single else out


def shade_backward(cache, env, g_diffuse, g_specular, want_env=True):
    """Gradients of a scalar with respect to the material channels and the envmap.

    Returns ``(g_mat, g_env_base)``; the envmap gradient goes through the
    "fast" pyramid and the irradiance convolution back to the base cube.
    """
    c = cache
    g_kd = g_diffuse * c.l_d
    g_add = g_diffuse
    b1 = c.beta[:, :1]
    b2 = c.beta[:, 1:]
    g_f0 = g_specular * b1 * c.l_s
    g_b1 = np.sum(g_specular * c.f0 * c.l_s, axis=-1)
    g_b2 = np.sum(g_specular * c.l_s, axis=-1)
    g_ls = g_specular * (c.f0 * b1 + b2)
    g_r = g_b1 * c.dbeta_dr[:, 0] + g_b2 * c.dbeta_dr[:, 1] + np.sum(g_ls * c.dls_dr, axis=-1)
    g_mat = shading_inputs_adjoint(c.mat, c.mode, g_kd, g_add, g_f0, g_r)
    if not want_env:
        return g_mat, None
    mip_grads = sample_adjoint(env, c.lookup, g_ls)
    g_irr = cube_sample_adjoint(c.n, g_diffuse * c.kd, env.irradiance.res)
    return g_mat, fast_adjoint(env, mip_grads, g_irr)
