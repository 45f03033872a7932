"""Loss terms, each returning its value and the gradient on its inputs."""
import warnings

import numpy as np

from ..envlight.cubemap import CubeMap
from ..imagecore.metrics import ssim_and_grad

# differences below this count as ties for the L1 subgradient, so rounding
# noise at an exact fit does not turn into full-size sign steps under Adam
L1_DEAD_ZONE = 1e-10


def _l1_sign(diff):
    return np.where(np.abs(diff) > L1_DEAD_ZONE, np.sign(diff), 0.0)


def loss_color(pred_srgb, gt_srgb, lam=0.2):
    return loss_color_grad(pred_srgb, gt_srgb, lam)[0]


def loss_color_grad(pred_srgb, gt_srgb, lam=0.2):
    """``(1 - lam) * mean|pred - gt| + lam * (1 - ssim) / 2`` and d/d pred."""
    pred = np.asarray(pred_srgb, dtype=np.float64)
    gt = np.asarray(gt_srgb, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {gt.shape}")
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lam must lie in [0, 1]")
    diff = pred - gt
    l1 = np.mean(np.abs(diff))
    g = (1.0 - lam) * _l1_sign(diff) / diff.size
    val = (1.0 - lam) * l1
    if lam > 0.0:
        s, g_s = ssim_and_grad(pred, gt)
        val += lam * (1.0 - s) / 2.0
        # a matching image sits at the SSIM maximum, where the gradient is 0
        if np.abs(diff).max(initial=0.0) > L1_DEAD_ZONE:
            g = g - lam * 0.5 * g_s
    return val, g


def _cos_dist(a, b, mask):
    """Mean of ``1 - a.b`` over ``mask`` and its gradients on ``a`` and ``b``."""
    cnt = int(mask.sum())
    if cnt == 0:
        return 0.0, np.zeros_like(a), np.zeros_like(b), 0
    dots = np.einsum("...i,...i->...", a, b)
    val = float(np.sum(1.0 - dots[mask]) / cnt)
    m = mask[..., None] / cnt
    return val, -b * m, -a * m, cnt


def loss_normal_consistency(n_hat, n_depth):
    """Mean cosine distance between rendered and depth-derived normals."""
    return loss_normal_consistency_grad(n_hat, n_depth)[0]


def loss_normal_consistency_grad(n_hat, n_depth):
    mask = n_hat.mask & n_depth.mask
    val, ga, gb, cnt = _cos_dist(n_hat.normals, n_depth.normals, mask)
    if cnt == 0:
        warnings.warn("normal maps do not overlap; consistency loss is 0", RuntimeWarning, stacklevel=2)
    return val, ga, gb


def loss_normal_prior(n_hat, n_depth, n_prior):
    return loss_normal_prior_grad(n_hat, n_depth, n_prior)[0]


def loss_normal_prior_grad(n_hat, n_depth, n_prior):
    """Sum of the two mean cosine distances to the prior normals.

    Each term averages over the pixels where both of its maps are valid. A
    missing prior (``None``) contributes nothing.
    """
    if n_prior is None:
        z = np.zeros_like(n_hat.normals)
        return 0.0, z, z.copy()
    v1, g1, _, _ = _cos_dist(n_hat.normals, n_prior.normals, n_hat.mask & n_prior.mask)
    v2, g2, _, _ = _cos_dist(n_depth.normals, n_prior.normals, n_depth.mask & n_prior.mask)
    return v1 + v2, g1, g2


def loss_diffuse_prior(i_d, i_dp, t, lam_dp=0.05, t_dp=15000):
    return loss_diffuse_prior_grad(i_d, i_dp, t, lam_dp, t_dp)[0]


def loss_diffuse_prior_grad(i_d, i_dp, t, lam_dp=0.05, t_dp=15000):
    """``lam_dp * mean|I_d - I_dp|`` up to iteration ``t_dp``, exactly 0 after."""
    i_d = np.asarray(i_d, dtype=np.float64)
    if i_dp is None or t > t_dp:
        return 0.0, np.zeros_like(i_d)
    i_dp = np.asarray(i_dp, dtype=np.float64)
    if i_d.shape != i_dp.shape:
        raise ValueError(f"shape mismatch {i_d.shape} vs {i_dp.shape}")
    diff = i_d - i_dp
    return lam_dp * float(np.mean(np.abs(diff))), lam_dp * _l1_sign(diff) / diff.size


def loss_light_white(env):
    return loss_light_white_grad(env)[0]


def loss_light_white_grad(env):
    """Mean over texels of ``sum_c |E_c - mean_c E|`` and d/dE."""
    data = np.asarray(env.data if isinstance(env, CubeMap) else env, dtype=np.float64)
    dev = data - data.mean(axis=-1, keepdims=True)
    # a gray texel can round to a nonzero deviation; pin it to exactly 0
    dev[np.ptp(data, axis=-1) == 0.0] = 0.0
    n_tex = data.size // data.shape[-1]
    val = float(np.sum(np.abs(dev)) / n_tex)
    s = _l1_sign(dev)
    g = (s - s.mean(axis=-1, keepdims=True)) / n_tex
    return val, g
