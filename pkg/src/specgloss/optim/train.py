"""Joint recovery of surfel materials and an HDR environment map.

Geometry and opacity stay frozen, so each view's blend weights are computed
once: the material G-buffer of a view is a sparse matrix times the squashed
per-surfel materials, and its transpose carries gradients back.
"""
import csv
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..brdf.lut import default_lut
from ..brdf.materials import CHANNELS, LR_GROUPS, check_mode, squash, squash_grad, unsquash
from ..deferred import shade_pixels, shade_pixels_backward, view_vectors
from ..envlight.cubemap import CubeMap
from ..envlight.io import save_cubemap
from ..envlight.prefilter import clip_nonnegative, prefilter_pmrem
from ..envlight.cubemap import upsample_bilinear2x
from ..imagecore.color import to_srgb, to_srgb_grad
from ..surfels.depth import depth_to_normals
from ..surfels.raster import EPS_MASK, rasterize
from ..imagecore.metrics import NormalMap
from .adam import Adam
from .losses import (
    loss_color_grad,
    loss_diffuse_prior_grad,
    loss_light_white_grad,
    loss_normal_consistency_grad,
    loss_normal_prior_grad,
)

TERMS = ("color", "normal", "normal_prior", "diffuse_prior", "light")

# initial squashed values per channel group
INIT_VALUES = {
    "sg": [0.5, 0.5, 0.5, 0.25, 0.25, 0.25, 0.5],
    "mr": [0.5, 0.5, 0.5, 0.25, 0.5],
    "mrs": [0.5, 0.5, 0.5, 0.25, 0.5, 0.5, 0.5, 0.5],
}


class NumericalDivergence(RuntimeError):
    """Raised when the loss or a parameter turns non-finite."""


@dataclass
class LossWeights:
    lam: float = 0.2
    lam_n: float = 0.05
    lam_np: float = 0.01
    lam_dp: float = 0.05
    lam_light: float = 0.001
    t_dp: int = 15000

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lam must lie in [0, 1]")
        for k in ("lam_n", "lam_np", "lam_dp", "lam_light"):
            if getattr(self, k) < 0:
                raise ValueError(f"{k} must be non-negative")


@dataclass
class TrainConfig:
    iterations: int = 3000
    # 4x the rates of a 30k-iteration schedule, for the 3k-iteration desk runs
    lr_albedo: float = 0.03
    lr_f0r: float = 0.02
    lr_env: float = 0.04
    lr_decay: float = 0.1
    res_init: int = 16
    res_final: int = 64
    res_min: int = 4
    pu_interval: int = 1000
    irradiance_res: int = 8
    env_init: float = 0.5
    param: str = "sg"
    views_per_iter: int = 2
    seed: int = 0
    eps_mask: float = EPS_MASK
    checkpoint_every: int = 0
    lut_n: int = 64
    lut_samples: int = 1024
    weights: LossWeights = field(default_factory=LossWeights)

    def __post_init__(self):
        if isinstance(self.weights, dict):
            self.weights = LossWeights(**self.weights)
        self.param = check_mode(self.param)
        for r in (self.res_init, self.res_final):
            if r < 1 or r & (r - 1):
                raise ValueError("envmap resolutions must be powers of two")
        if self.res_init > self.res_final:
            raise ValueError("res_init exceeds res_final")
        if self.res_min > self.res_init // 2:
            raise ValueError("res_min must be at most res_init / 2 so the pyramid has two levels")
        if self.iterations < 0 or self.pu_interval < 1 or self.views_per_iter < 1:
            raise ValueError("iterations, pu_interval and views_per_iter must be positive")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def lr_vector(self, mode):
        groups = {"albedo": self.lr_albedo, "f0r": self.lr_f0r}
        return np.array([groups[g] for g in LR_GROUPS[mode]])

    def res_at(self, iteration):
        """Envmap face resolution in effect at ``iteration`` (0-based)."""
        res = self.res_init
        for _ in range(iteration // self.pu_interval):
            if res * 2 > self.res_final:
                break
            res *= 2
        return res


@dataclass
class ViewData:
    """Everything about one training view that stays fixed during a fit."""

    cam: object
    shape: tuple
    idx: np.ndarray  # flat indices of valid pixels
    W: object  # (P, K) blend matrix normalised by accum
    normals: np.ndarray  # (P, 3) world
    v: np.ndarray  # (P, 3)
    accum: np.ndarray  # (P,)
    gt_srgb: np.ndarray  # (H, W, 3)
    diffuse_prior: np.ndarray = None  # (H, W, 3) sRGB, or None
    loss_normal: float = 0.0
    loss_normal_prior: float = 0.0


def prepare_view(scene, cam, gt_srgb, normal_prior_cam=None, diffuse_prior=None, eps_mask=EPS_MASK):
    """Rasterise once and cache the blend matrix and the geometry-only losses.

    ``normal_prior_cam`` is a :class:`NormalMap` in camera coordinates; it is
    rotated to world space here.
    """
    g, frags = rasterize(scene, cam)
    g.eps_mask = eps_mask
    mask = g.mask
    idx = np.flatnonzero(mask)
    W = frags.matrix().tocsr()[idx]
    W = W.multiply(1.0 / g.accum.reshape(-1)[idx][:, None]).tocsr()
    n_hat = NormalMap(g.normals, mask)
    n_depth = depth_to_normals(g.depth, cam, mask, frame="world")
    l_n = loss_normal_consistency_grad(n_hat, n_depth)[0] if (mask.any() and n_depth.mask.any()) else 0.0
    l_np = 0.0
    if normal_prior_cam is not None:
        l_np = loss_normal_prior_grad(n_hat, n_depth, normal_prior_cam.rotated(cam.R.T))[0]
    return ViewData(
        cam,
        g.shape,
        idx,
        W,
        g.normals.reshape(-1, 3)[idx],
        view_vectors(cam).reshape(-1, 3)[idx],
        g.accum.reshape(-1)[idx],
        np.asarray(gt_srgb, dtype=np.float64),
        None if diffuse_prior is None else np.asarray(diffuse_prior, dtype=np.float64),
        l_n,
        l_np,
    )


def build_env(base, cfg):
    base = base if isinstance(base, CubeMap) else CubeMap(base)
    return prefilter_pmrem(
        base, res_min=cfg.res_min, mode="fast", irradiance_res=min(cfg.irradiance_res, base.res)
    )


def render_view(mat, env, view, mode, lut, background):
    """Composite linear image and the per-pixel shading record of one view."""
    ps = shade_pixels(view.W @ mat, view.normals, view.v, view.accum, background, env, lut, mode)
    h, w = view.shape
    comp = np.broadcast_to(background, (h * w, 3)).copy()
    comp[view.idx] = ps.composite
    return comp.reshape(h, w, 3), ps


def total_loss(mat_raw, env, views, t, cfg, lut=None, background=np.zeros(3), want_grad=True):
    """Weighted sum of all loss terms averaged over ``views``.

    Returns ``(loss, terms, grads)`` with ``grads = {"mat": d/d mat_raw,
    "env": d/d env.base}``. The normal terms depend only on frozen geometry,
    so they add a constant and no gradient.
    """
    wts = cfg.weights
    mode = cfg.param
    lut = lut or default_lut(cfg.lut_n, cfg.lut_samples)
    mat = squash(mat_raw)
    terms = dict.fromkeys(TERMS, 0.0)
    g_mat = np.zeros_like(mat)
    g_env = np.zeros_like(env.base.data)
    nv = len(views)
    for view in views:
        comp, ps = render_view(mat, env, view, mode, lut, background)
        pred = to_srgb(np.maximum(comp, 0.0))
        lc, g_pred = loss_color_grad(pred, view.gt_srgb, wts.lam)
        terms["color"] += lc / nv
        terms["normal"] += wts.lam_n * view.loss_normal / nv
        terms["normal_prior"] += wts.lam_np * view.loss_normal_prior / nv
        g_diff = None
        if view.diffuse_prior is not None and t <= wts.t_dp and wts.lam_dp > 0:
            h, w = view.shape
            lin = np.zeros((h * w, 3))
            lin[view.idx] = ps.accum[:, None] * ps.diffuse
            i_d = to_srgb(np.maximum(lin, 0.0)).reshape(h, w, 3)
            ldp, g_id = loss_diffuse_prior_grad(i_d, view.diffuse_prior, t, wts.lam_dp, wts.t_dp)
            terms["diffuse_prior"] += ldp / nv
            if want_grad:
                g_lin = (g_id.reshape(-1, 3) * to_srgb_grad(np.maximum(lin, 0.0)))[view.idx]
                g_diff = g_lin * ps.accum[:, None] / nv
        if want_grad:
            g_comp = (g_pred.reshape(-1, 3) * to_srgb_grad(np.maximum(comp, 0.0)).reshape(-1, 3))[view.idx] / nv
            gm_pix, ge = shade_pixels_backward(ps, env, g_comp, g_diff)
            g_mat += view.W.T @ gm_pix
            g_env += ge
    ll, g_ll = loss_light_white_grad(env.base)
    terms["light"] = wts.lam_light * ll
    g_env += wts.lam_light * g_ll
    loss = sum(terms.values())
    grads = {"mat": g_mat * squash_grad(mat_raw), "env": g_env} if want_grad else None
    return loss, terms, grads


@dataclass
class TrainState:
    mat_raw: np.ndarray
    env_base: CubeMap
    iteration: int = 0
    stage: int = 0
    history: list = field(default_factory=list)
    seconds: float = 0.0
    checkpoints: list = field(default_factory=list)


def initial_materials(n_surfels, mode):
    return np.tile(unsquash(np.array(INIT_VALUES[check_mode(mode)])), (n_surfels, 1))


def save_checkpoint(state, scene, cfg, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    scene.with_materials(state.mat_raw, cfg.param).save(directory / "scene.json")
    save_cubemap(state.env_base, directory, "env")
    manifest = {
        "iteration": state.iteration,
        "stage": state.stage,
        "param": cfg.param,
        "env_res": state.env_base.res,
        "env_min": float(state.env_base.data.min()),
        "env_max": float(state.env_base.data.max()),
        "scene": "scene.json",
        "env": "env.json",
        "config": cfg.to_dict(),
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return directory


def write_history(history, path):
    cols = ["iteration", "env_res", *TERMS, "total"]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(cols)
        for row in history:
            wr.writerow([row[c] if isinstance(row[c], int) else repr(float(row[c])) for c in cols])


def fit(cfg, scene, views, env_init=None, mat_init=None, out_dir=None, lut=None, log=None):
    """Optimise materials and lighting; returns the final :class:`TrainState`."""
    if len(views) < 2:
        raise ValueError("fit needs at least two views")
    mode = cfg.param
    lut = lut or default_lut(cfg.lut_n, cfg.lut_samples)
    rng = np.random.default_rng(cfg.seed)
    k = len(scene)
    mat_raw = initial_materials(k, mode) if mat_init is None else np.array(mat_init, dtype=np.float64)
    if mat_raw.shape != (k, CHANNELS[mode]):
        raise ValueError("initial materials have the wrong shape")
    base = (
        CubeMap.constant(cfg.res_init, cfg.env_init).data
        if env_init is None
        else np.array(env_init.data if isinstance(env_init, CubeMap) else env_init, dtype=np.float64)
    )
    state = TrainState(mat_raw, CubeMap(base))
    opt = Adam()
    lr_mat = cfg.lr_vector(mode)
    out_dir = Path(out_dir) if out_dir is not None else None
    order = np.zeros(0, dtype=np.int64)
    pos = 0
    t0 = time.perf_counter()
    env = build_env(base, cfg)
    for it in range(cfg.iterations):
        if it > 0 and it % cfg.pu_interval == 0 and base.shape[1] * 2 <= cfg.res_final:
            base = upsample_bilinear2x(base)
            opt.reset("env")
            state.stage += 1
            env = build_env(base, cfg)
        batch = []
        for _ in range(cfg.views_per_iter):
            if pos >= order.size:
                order = rng.permutation(len(views))
                pos = 0
            batch.append(views[order[pos]])
            pos += 1
        loss, terms, grads = total_loss(mat_raw, env, batch, it, cfg, lut, scene.background)
        if not np.isfinite(loss) or not np.all(np.isfinite(grads["mat"])) or not np.all(np.isfinite(grads["env"])):
            state.mat_raw, state.env_base, state.iteration = mat_raw, CubeMap(np.nan_to_num(base)), it
            if out_dir is not None:
                save_checkpoint(state, scene, cfg, out_dir / "diverged")
                write_history(state.history, out_dir / "loss.csv")
            raise NumericalDivergence(f"non-finite loss at iteration {it}")
        decay = cfg.lr_decay ** (it / max(cfg.iterations, 1))
        mat_raw = opt.step("mat", mat_raw, grads["mat"], lr_mat * decay)
        base = clip_nonnegative(opt.step("env", base, grads["env"], cfg.lr_env * decay)).data
        env = build_env(base, cfg)
        row = {"iteration": it, "env_res": int(base.shape[1]), **terms, "total": loss}
        state.history.append(row)
        state.iteration = it + 1
        state.mat_raw, state.env_base = mat_raw, env.base
        if log is not None:
            log(row)
        if out_dir is not None and cfg.checkpoint_every and (it + 1) % cfg.checkpoint_every == 0:
            state.checkpoints.append(save_checkpoint(state, scene, cfg, out_dir / f"ckpt_{it + 1:06d}"))
    state.seconds = time.perf_counter() - t0
    state.mat_raw, state.env_base = mat_raw, CubeMap(base)
    if out_dir is not None:
        state.checkpoints.append(save_checkpoint(state, scene, cfg, out_dir / "final"))
        write_history(state.history, out_dir / "loss.csv")
    return state
