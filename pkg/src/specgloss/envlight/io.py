"""Cube maps on disk: six face images plus a JSON manifest.

Manifest: ``{"res": R, "faces": [px, nx, py, ny, pz, nz], "convention": "rhs-ydown"}``
with face paths relative to the manifest. Faces are .hdr (written) or .pfm
(accepted on read).
"""
import json
from pathlib import Path

import numpy as np

from ..imagecore.fileio import read_image, write_hdr
from .cubemap import FACE_NAMES, CubeMap

CONVENTION = "rhs-ydown"


def save_cubemap(cube, directory, prefix="face"):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    faces = []
    for i, name in enumerate(FACE_NAMES):
        fname = f"{prefix}_{name}.hdr"
        write_hdr(directory / fname, cube.data[i])
        faces.append(fname)
    manifest = {"res": cube.res, "faces": faces, "convention": CONVENTION}
    path = directory / f"{prefix}.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def load_cubemap(manifest_path):
    manifest_path = Path(manifest_path)
    meta = json.loads(manifest_path.read_text())
    if meta.get("convention", CONVENTION) != CONVENTION:
        raise ValueError(f"unsupported cube convention {meta['convention']!r}")
    faces = meta["faces"]
    if len(faces) != 6:
        raise ValueError("cube manifest must list six faces")
    data = np.stack([read_image(manifest_path.parent / f)[..., :3] for f in faces])
    if data.shape[1] != meta["res"]:
        raise ValueError("face size disagrees with manifest res")
    return CubeMap(data)


def save_envlight(env, directory):
    """Write base, every mip level, irradiance and a top-level manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_cubemap(env.base, directory, "base")
    mips = [save_cubemap(m, directory, f"mip{j}").name for j, m in enumerate(env.mips)]
    save_cubemap(env.irradiance, directory, "irradiance")
    manifest = {
        "res": env.res,
        "res_min": env.res_min,
        "mode": env.mode,
        "samples": env.samples,
        "seed": env.seed,
        "r_min": env.r_min,
        "r_max": env.r_max,
        "roughness_grid": [float(r) for r in env.roughness_grid],
        "mips": mips,
        "mip_res": [m.res for m in env.mips],
        "irradiance": "irradiance.json",
        "base": "base.json",
        "convention": CONVENTION,
    }
    path = directory / "envlight.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path
