"""Command line entry point: ``specgloss <command> [flags]``.

Commands: prefilter, render, fit, relight, eval, synth. Every run writes
``run.json`` into ``--out-dir`` with the version, resolved flags and seed.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure.
"""
import argparse
import csv
import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._accel import set_threads
from .brdf.lut import default_lut
from .brdf.materials import CHANNELS, check_mode
from .deferred import deferred_shade, dump_buffers, forward_render
from .envlight.cubemap import CubeMap
from .envlight.io import load_cubemap, save_cubemap, save_envlight
from .envlight.latlong import cube_to_latlong, latlong_to_cube
from .envlight.prefilter import prefilter_pmrem
from .imagecore.color import to_srgb
from .imagecore.fileio import ImageFormatError, read_image, write_hdr, write_png
from .imagecore.metrics import NormalMap, mae_degrees, psnr, ssim
from .optim.train import NumericalDivergence, TrainConfig, build_env, fit, prepare_view
from .surfels.camera import load_cameras, save_cameras
from .surfels.raster import rasterize
from .surfels.scene import Scene
from . import synth

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


class ConfigError(ValueError):
    pass


def version_string():
    """``git describe`` of the source tree when available, else the package version."""
    try:
        out = subprocess.run(
            ["git", "describe", "--tags", "--always", "--dirty"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return f"v{__version__}"


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_run_manifest(args, extra=None):
    cfg = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    cfg = {k: str(v) if isinstance(v, Path) else v for k, v in cfg.items()}
    manifest = {"command": args.command, "version": version_string(), "seed": args.seed, "config": cfg}
    if extra:
        manifest.update(extra)
    write_json(Path(args.out_dir) / "run.json", manifest)


def load_env_cube(path, res=None):
    """A cube map from a cube manifest (.json) or a lat-long image (.hdr/.pfm)."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"no such environment file: {path}")
    if path.suffix.lower() == ".json":
        cube = load_cubemap(path)
        if res is not None and cube.res != res:
            raise ConfigError(f"cube map has res {cube.res}, asked for {res}")
        return cube
    img = read_image(path)[..., :3]
    if res is None:
        res = max(1, 1 << int(np.log2(max(img.shape[0] // 2, 1))))
    return latlong_to_cube(img, res)


def load_scene_arg(path):
    """Scene from a scene JSON, a checkpoint directory or a checkpoint manifest."""
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    if not path.exists():
        raise ConfigError(f"no such scene or checkpoint: {path}")
    data = json.loads(path.read_text())
    if "surfels" in data:
        return Scene.from_dict(data), None
    scene = Scene.load(path.parent / data["scene"])
    return scene, data


# --- commands ---------------------------------------------------------------


def cmd_prefilter(args):
    base = load_env_cube(args.env, args.res)
    env = prefilter_pmrem(
        base, res_min=args.min_res, r_min=args.r_min, r_max=args.r_max, samples=args.samples,
        mode=args.mode, irradiance_res=args.irradiance_res, seed=args.seed,
    )
    save_envlight(env, args.out_dir)
    write_run_manifest(args, {"levels": env.levels, "mip_res": [m.res for m in env.mips]})
    print(f"wrote {env.levels} mip levels ({env.res} -> {env.mips[-1].res}) to {args.out_dir}")


def _prefiltered(args, cube):
    return prefilter_pmrem(
        cube, res_min=args.min_res, samples=args.samples, mode=args.mode,
        irradiance_res=args.irradiance_res, seed=args.seed,
    )


def render_set(scene, cams, env, lut, out_dir, stem="view", dump=False):
    """Deferred-shade every camera; write HDR and PNG per view."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    outs = []
    for i, cam in enumerate(cams):
        g, _ = rasterize(scene, cam)
        sh = deferred_shade(g, env, lut, cam, background=scene.background)
        if not np.all(np.isfinite(sh.composite)):
            raise FloatingPointError(f"non-finite radiance in view {i}")
        write_hdr(out_dir / f"{stem}_{i:03d}.hdr", sh.composite)
        write_png(out_dir / f"{stem}_{i:03d}.png", sh.srgb)
        if dump:
            dump_buffers(g, sh, out_dir / "buffers", f"{stem}_{i:03d}")
        outs.append(sh)
    return outs


def cmd_render(args):
    scene, _ = load_scene_arg(args.scene)
    cams = load_cameras(args.views)
    env = _prefiltered(args, load_env_cube(args.env, args.res))
    render_set(scene, cams, env, default_lut(), args.out_dir, "view", args.dump_buffers)
    write_run_manifest(args, {"param": scene.mode, "n_views": len(cams)})
    print(f"rendered {len(cams)} views to {args.out_dir}")


def _load_dataset(path):
    path = Path(path)
    if path.is_dir():
        path = path / "dataset.json"
    if not path.exists():
        raise ConfigError(f"no dataset manifest at {path}")
    return path.parent, json.loads(path.read_text())


def _gt_image(root, entry):
    """Training target in sRGB: from the HDR file when present, else the PNG."""
    if entry.get("hdr"):
        return to_srgb(np.maximum(read_image(root / entry["hdr"])[..., :3], 0.0))
    return read_image(root / entry["png"])[..., :3]


def train_config_from_args(args):
    cfg = {}
    if args.config:
        cfg = json.loads(Path(args.config).read_text())
    overrides = {
        "iterations": args.iterations,
        "param": args.param,
        "res_init": args.res_init,
        "res_final": args.res_final,
        "res_min": args.res_min,
        "pu_interval": args.pu_interval,
        "views_per_iter": args.views_per_iter,
        "checkpoint_every": args.checkpoint_every,
        "irradiance_res": args.irradiance_res,
        "lr_albedo": args.lr_albedo,
        "lr_f0r": args.lr_f0r,
        "lr_env": args.lr_env,
    }
    for k, v in overrides.items():
        if v is not None:
            cfg[k] = v
    cfg["seed"] = args.seed
    weights = dict(cfg.get("weights", {}))
    if args.t_dp is not None:
        weights["t_dp"] = args.t_dp
    cfg["weights"] = weights
    try:
        return TrainConfig.from_dict(cfg)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_fit(args):
    root, ds = _load_dataset(args.data)
    cfg = train_config_from_args(args)
    gt_scene = Scene.load(root / ds["scene"])
    # materials are unknowns: keep geometry, drop the stored materials
    geo = gt_scene.with_materials(np.zeros((len(gt_scene), CHANNELS[cfg.param])), cfg.param)
    cams = load_cameras(root / ds["cameras"])
    views = []
    for cam, entry in zip(cams, ds["images"]):
        n_prior = None
        if entry.get("normal") and not args.no_normal_prior:
            n_prior = NormalMap.from_image(read_image(root / entry["normal"]))
        d_prior = None
        if entry.get("diffuse") and not args.no_diffuse_prior:
            d_prior = read_image(root / entry["diffuse"])[..., :3]
        views.append(prepare_view(geo, cam, _gt_image(root, entry), n_prior, d_prior, cfg.eps_mask))
    log = None
    if args.verbose:
        def log(row):
            if row["iteration"] % 100 == 0:
                print(f"it {row['iteration']:5d} res {row['env_res']:3d} loss {row['total']:.6f}", flush=True)
    state = fit(cfg, geo, views, out_dir=args.out_dir, log=log)
    write_json(Path(args.out_dir) / "train_config.json", cfg.to_dict())
    write_run_manifest(
        args,
        {"train_config": cfg.to_dict(), "final": "final/manifest.json", "seconds_excluded": True},
    )
    print(f"fit done: {state.iteration} iterations, env res {state.env_base.res}, final loss {state.history[-1]['total']:.6f}")


def cmd_relight(args):
    scene, ck = load_scene_arg(args.scene)
    if args.param is not None and check_mode(args.param) != scene.mode:
        raise ConfigError(f"checkpoint holds {scene.mode!r} materials, --param asked for {args.param!r}")
    cams = load_cameras(args.views)
    env = _prefiltered(args, load_env_cube(args.env, args.res))
    outs = render_set(scene, cams, env, default_lut(), args.out_dir, "relit")
    rows = []
    if args.gt:
        gt_dir = Path(args.gt)
        for i, sh in enumerate(outs):
            gt_path = gt_dir / f"{i:03d}.png"
            if not gt_path.exists():
                raise ConfigError(f"missing ground truth image {gt_path}")
            pred = read_image(Path(args.out_dir) / f"relit_{i:03d}.png")[..., :3]
            gt = read_image(gt_path)[..., :3]
            rows.append({"view": i, "psnr": psnr(pred, gt), "ssim": ssim(pred, gt)})
        write_metrics(rows, Path(args.out_dir) / "metrics.csv", Path(args.out_dir) / "summary.md")
    write_run_manifest(args, {"param": scene.mode, "n_views": len(cams)})
    if rows:
        print(f"relit {len(cams)} views: mean PSNR {np.mean([r['psnr'] for r in rows]):.3f} dB")
    else:
        print(f"relit {len(cams)} views to {args.out_dir}")


def write_metrics(rows, csv_path, md_path=None):
    keys = [k for k in rows[0] if k != "view"] if rows else []
    with open(csv_path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["view", *keys])
        for r in rows:
            wr.writerow([r["view"], *(repr(float(r[k])) for k in keys)])
    if md_path is not None and rows:
        lines = ["| metric | mean |", "|---|---|"]
        for k in keys:
            lines.append(f"| {k} | {np.mean([r[k] for r in rows]):.4f} |")
        Path(md_path).write_text("\n".join(lines) + "\n")


def _pairs(pred_dir, gt_dir, pattern):
    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    names = sorted(p.name for p in pred_dir.glob(pattern))
    pairs = [(pred_dir / n, gt_dir / n) for n in names if (gt_dir / n).exists()]
    if not pairs:
        raise ConfigError(f"no files matching {pattern!r} present in both {pred_dir} and {gt_dir}")
    return pairs


def cmd_eval(args):
    rows = []
    for p, g in _pairs(args.pred, args.gt, args.pattern):
        a = read_image(p)[..., :3]
        b = read_image(g)[..., :3]
        if args.kind == "normal":
            rows.append({"view": p.name, "mae_deg": mae_degrees(NormalMap.from_image(a), NormalMap.from_image(b))})
        else:
            if p.suffix.lower() != ".png":
                a = to_srgb(np.clip(a, 0.0, 1.0))
                b = to_srgb(np.clip(b, 0.0, 1.0))
            rows.append({"view": p.name, "psnr": psnr(a, b), "ssim": ssim(a, b)})
    out = Path(args.out_dir)
    write_metrics(rows, out / "metrics.csv", out / "summary.md")
    write_run_manifest(args, {"n_pairs": len(rows)})
    for k in rows[0]:
        if k != "view":
            print(f"{k}: {np.mean([r[k] for r in rows]):.6f}")


def cmd_synth(args):
    out = Path(args.out_dir)
    (out / "views").mkdir(parents=True, exist_ok=True)
    scene, groups = synth.make_scene(args.preset, args.surfels)
    cams = synth.make_cameras(args.views, args.res)
    lut = default_lut()
    # render from the cubes as stored, so RGBE rounding cannot split GT from relights
    save_cubemap(synth.make_env(args.env_res, "train", args.peak), out / "env_train", "env")
    save_cubemap(synth.make_env(args.env_res, "heldout"), out / "env_heldout", "env")
    train_cube = load_cubemap(out / "env_train" / "env.json")
    held_cube = load_cubemap(out / "env_heldout" / "env.json")
    # training renders use the pyramid the fit rebuilds every iteration
    fit_cfg = TrainConfig(res_init=min(16, args.env_res), res_final=args.env_res, res_min=args.min_res)
    env_train = build_env(train_cube, fit_cfg)
    gt = synth.render_views(scene, cams, env_train, lut)
    scene.save(out / "scene_gt.json")
    save_cameras(cams, out / "cameras.json")
    write_hdr(out / "env_train.hdr", cube_to_latlong(train_cube, 2 * args.env_res))
    write_hdr(out / "env_heldout.hdr", cube_to_latlong(held_cube, 2 * args.env_res))
    images = []
    for i, e in enumerate(gt):
        stem = f"views/{i:03d}"
        write_hdr(out / f"{stem}_rgb.hdr", e["hdr"])
        write_png(out / f"{stem}_rgb.png", e["srgb"])
        write_png(out / f"{stem}_normal.png", e["normal"].to_image())
        write_png(out / f"{stem}_diffuse.png", e["diffuse"])
        write_png(out / f"{stem}_albedo.png", to_srgb(np.clip(e["albedo"], 0.0, 1.0)))
        images.append(
            {
                "hdr": f"{stem}_rgb.hdr",
                "png": f"{stem}_rgb.png",
                "normal": f"{stem}_normal.png",
                "diffuse": f"{stem}_diffuse.png",
                "albedo": f"{stem}_albedo.png",
            }
        )
    # ground truth under the held-out light, with the relighting defaults
    env_held = prefilter_pmrem(held_cube, res_min=args.min_res, mode="ggx", seed=args.seed)
    relit_dir = out / "relight_gt"
    relit_dir.mkdir(exist_ok=True)
    for i, cam in enumerate(cams):
        g, _ = rasterize(scene, cam)
        sh = deferred_shade(g, env_held, lut, cam, background=scene.background)
        write_hdr(relit_dir / f"{i:03d}.hdr", sh.composite)
        write_png(relit_dir / f"{i:03d}.png", sh.srgb)
        if args.forward_reference:
            fwd = forward_render(scene, cam, env_held, lut)
            write_png(relit_dir / f"{i:03d}_forward.png", to_srgb(np.clip(fwd, 0.0, 1.0)))
    manifest = {
        "preset": args.preset,
        "res": args.res,
        "n_views": args.views,
        "n_surfels": len(scene),
        "param": scene.mode,
        "scene": "scene_gt.json",
        "cameras": "cameras.json",
        "env_train": "env_train/env.json",
        "env_heldout": "env_heldout/env.json",
        "env_train_latlong": "env_train.hdr",
        "env_heldout_latlong": "env_heldout.hdr",
        "env_res": args.env_res,
        "min_res": args.min_res,
        "relight_gt": "relight_gt",
        "material_groups": [
            {"id": g["id"], "name": g["name"], "kd": list(g["kd"]), "F0": list(g["F0"]), "r": g["r"]} for g in groups
        ],
        "images": images,
    }
    write_json(out / "dataset.json", manifest)
    write_run_manifest(args)
    print(f"wrote {args.views} views of preset {args.preset!r} ({len(scene)} surfels) to {out}")


# --- argument parsing -------------------------------------------------------


def _add_env_flags(p, mode_default):
    p.add_argument("--res", type=int, default=None, help="cube face resolution for lat-long input (power of two)")
    p.add_argument("--min-res", type=int, default=4, help="coarsest mip face resolution")
    p.add_argument("--mode", choices=("ggx", "fast"), default=mode_default, help="prefilter mode")
    p.add_argument("--samples", type=int, default=256, help="GGX samples per texel")
    p.add_argument("--irradiance-res", type=int, default=16, help="irradiance face resolution")


def build_parser():
    # global flags go after the command name: ``specgloss fit --seed 1 ...``
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    common.add_argument(
        "--threads", type=int, default=None, help="worker threads; falls back to SPECGLOSS_THREADS"
    )
    common.add_argument("--out-dir", type=Path, default=Path("out"), help="output directory (default ./out)")

    ap = argparse.ArgumentParser(prog="specgloss", description="Split-sum inverse rendering of 2D Gaussian surfels.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prefilter", parents=[common], help="build a prefiltered mip pyramid from an HDR map")
    p.add_argument("--env", required=True, help="lat-long .hdr/.pfm or cube manifest .json")
    p.add_argument("--res", type=int, default=512, help="cube face resolution")
    p.add_argument("--min-res", type=int, default=16, help="coarsest mip face resolution")
    p.add_argument("--mode", choices=("ggx", "fast"), default="ggx")
    p.add_argument("--samples", type=int, default=256, help="GGX samples per texel")
    p.add_argument("--r-min", type=float, default=0.02)
    p.add_argument("--r-max", type=float, default=0.5)
    p.add_argument("--irradiance-res", type=int, default=16)
    p.set_defaults(func=cmd_prefilter)

    p = sub.add_parser("render", parents=[common], help="deferred-shade a scene for a set of cameras")
    p.add_argument("--scene", required=True, help="scene JSON or checkpoint directory")
    p.add_argument("--views", required=True, help="cameras JSON")
    p.add_argument("--env", required=True, help="lat-long .hdr or cube manifest .json")
    p.add_argument("--dump-buffers", action="store_true", help="also write material, normal, diffuse and specular maps")
    _add_env_flags(p, "ggx")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("fit", parents=[common], help="recover materials and lighting from a dataset")
    p.add_argument("--data", required=True, help="dataset directory or dataset.json (see synth)")
    p.add_argument("--config", default=None, help="TrainConfig JSON; flags below override it")
    p.add_argument("--param", choices=("sg", "mr", "mrs"), default=None)
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--res-init", type=int, default=None)
    p.add_argument("--res-final", type=int, default=None)
    p.add_argument("--res-min", type=int, default=None)
    p.add_argument("--pu-interval", type=int, default=None)
    p.add_argument("--views-per-iter", type=int, default=None)
    p.add_argument("--checkpoint-every", type=int, default=None)
    p.add_argument("--irradiance-res", type=int, default=None, help="irradiance face resolution during the fit")
    p.add_argument("--lr-albedo", type=float, default=None)
    p.add_argument("--lr-f0r", type=float, default=None, help="learning rate of F0, roughness and metallic")
    p.add_argument("--lr-env", type=float, default=None)
    p.add_argument("--t-dp", type=int, default=None, help="last iteration of the diffuse prior")
    p.add_argument("--no-normal-prior", action="store_true")
    p.add_argument("--no-diffuse-prior", action="store_true")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("relight", parents=[common], help="render a checkpoint under a new environment map")
    p.add_argument("--scene", required=True, help="checkpoint directory, its manifest.json, or a scene JSON")
    p.add_argument("--env", required=True, help="lat-long .hdr or cube manifest .json")
    p.add_argument("--views", required=True, help="cameras JSON")
    p.add_argument("--param", choices=("sg", "mr", "mrs"), default=None, help="expected material mode")
    p.add_argument("--gt", default=None, help="directory of ground truth NNN.png images")
    _add_env_flags(p, "ggx")
    p.set_defaults(func=cmd_relight)

    p = sub.add_parser("eval", parents=[common], help="PSNR/SSIM or normal MAE between two image sets")
    p.add_argument("--pred", required=True, help="directory of predictions")
    p.add_argument("--gt", required=True, help="directory of references with the same file names")
    p.add_argument("--pattern", default="*.png", help="glob selecting files (default *.png)")
    p.add_argument("--kind", choices=("rgb", "normal"), default="rgb")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset with known materials")
    p.add_argument("--preset", choices=synth.PRESETS, default="two-material")
    p.add_argument("--res", type=int, default=128, help="image width and height")
    p.add_argument("--views", type=int, default=24)
    p.add_argument("--surfels", type=int, default=1800)
    p.add_argument("--env-res", type=int, default=64)
    p.add_argument("--min-res", type=int, default=4)
    p.add_argument("--peak", type=float, default=10.0, help="radiance of the bright 3x3 texel patch")
    p.add_argument("--forward-reference", action="store_true", help="also write forward-shaded relit references")
    p.set_defaults(func=cmd_synth)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        set_threads(args.threads if args.threads is not None else os.environ.get("SPECGLOSS_THREADS"))
        Path(args.out_dir).mkdir(parents=True, exist_ok=True)
        args.func(args)
    except (NumericalDivergence, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ImageFormatError, ValueError, KeyError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
