"""Brute-force reference computations shared by the tests.

Each function here is written from the defining integral or formula with its
own sampler, so it shares no code path with the library routine it checks.
"""
import numpy as np

from specgloss.envlight import cube_sample


def _frame(n):
    n = n / np.linalg.norm(n)
    a = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    t = np.cross(n, a)
    t /= np.linalg.norm(t)
    return t, np.cross(n, t), n


def _ggx_half(rng, count, alpha):
    u1, u2 = rng.random(count), rng.random(count)
    a2 = alpha * alpha
    cos_t = np.sqrt((1.0 - u1) / (1.0 + (a2 - 1.0) * u1))
    sin_t = np.sqrt(1.0 - cos_t**2)
    phi = 2.0 * np.pi * u2
    return np.stack([sin_t * np.cos(phi), sin_t * np.sin(phi), cos_t], axis=-1)


def _d_ggx(nh, alpha):
    a2 = alpha * alpha
    return a2 / (np.pi * (nh * nh * (a2 - 1.0) + 1.0) ** 2)


def _g_schlick(nv, nl, alpha):
    k = alpha / 2.0
    return nv / (nv * (1 - k) + k) * nl / (nl * (1 - k) + k)


def lut_cell_oracle(r, nv, count, rng):
    """(beta1, beta2) from the specular BRDF integral, estimator f nl / pdf."""
    alpha = r * r
    v = np.array([np.sqrt(1.0 - nv * nv), 0.0, nv])
    h = _ggx_half(rng, count, alpha)
    vh = h @ v
    l = 2.0 * vh[:, None] * h - v
    nl, nh = l[:, 2], h[:, 2]
    ok = (nl > 0) & (vh > 0)
    nl_, vh_ = np.where(ok, nl, 1.0), np.where(ok, vh, 1.0)
    brdf = _d_ggx(nh, alpha) * _g_schlick(nv, nl_, alpha) / (4.0 * nl_ * nv)  # F = 1
    pdf = _d_ggx(nh, alpha) * nh / (4.0 * vh_)
    est = np.where(ok, brdf * nl_ / pdf, 0.0)
    fc = (1.0 - np.clip(vh, 0, 1)) ** 5
    return np.array([np.mean(est * (1 - fc)), np.mean(est * fc)])


def rendering_equation_mc(base, n, v, kd, f0, r, count, rng):
    """Outgoing radiance of the full GGX + Smith + Schlick BRDF under cube map ``base``.

    Diffuse: cosine-weighted hemisphere samples. Specular: GGX half vectors.
    """
    t, b, n = _frame(np.asarray(n, dtype=float))
    v = np.asarray(v, dtype=float)
    kd, f0 = np.asarray(kd, float), np.asarray(f0, float)
    # diffuse: kd/pi * int E nl = kd * mean(E) under cosine sampling
    u1, u2 = rng.random(count), rng.random(count)
    rr, phi = np.sqrt(u1), 2 * np.pi * u2
    loc = np.stack([rr * np.cos(phi), rr * np.sin(phi), np.sqrt(1 - u1)], axis=-1)
    ld = loc[:, :1] * t + loc[:, 1:2] * b + loc[:, 2:3] * n
    diffuse = kd * cube_sample(base.data, ld).mean(axis=0)
    # specular
    alpha = r * r
    hl = _ggx_half(rng, count, alpha)
    h = hl[:, :1] * t + hl[:, 1:2] * b + hl[:, 2:3] * n
    vh = h @ v
    l = 2.0 * vh[:, None] * h - v
    nl, nh, nv = l @ n, h @ n, float(v @ n)
    ok = (nl > 0) & (vh > 0)
    nl_, vh_ = np.where(ok, nl, 1.0), np.where(ok, vh, 1.0)
    fres = f0 + (1 - f0) * ((1 - np.clip(vh, 0, 1)) ** 5)[:, None]
    weight = _g_schlick(nv, nl_, alpha) * vh_ / (nh * nv)  # f nl / pdf without F
    e = cube_sample(base.data, np.where(ok[:, None], l, n))
    specular = np.where(ok[:, None], fres * weight[:, None] * e, 0.0).mean(axis=0)
    return diffuse + specular


def blend_front_to_back(alpha, g, attrs):
    """sum_i a_i G_i prod_{j<i} (1 - a_j G_j) attr_i for front-to-back lists."""
    total = np.zeros_like(np.asarray(attrs[0], dtype=float))
    trans = 1.0
    for a, gi, c in zip(alpha, g, attrs):
        total = total + a * gi * trans * np.asarray(c, dtype=float)
        trans = trans * (1.0 - a * gi)
    return total
