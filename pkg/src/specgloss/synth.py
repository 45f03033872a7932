"""Synthetic test scenes and procedural environment maps."""
import numpy as np

from .brdf.materials import unsquash
from .deferred import deferred_shade
from .envlight.cubemap import CubeMap, face_dirs
from .imagecore.color import to_srgb
from .imagecore.metrics import NormalMap
from .surfels.camera import orbit_cameras
from .surfels.raster import rasterize
from .surfels.scene import Scene

PRESETS = ("spheres", "two-material")

# SG ground truth of the two material groups
DIELECTRIC = {"name": "dielectric-rough", "kd": (0.70, 0.32, 0.18), "F0": (0.04, 0.04, 0.04), "r": 0.6}
METAL = {"name": "metal-smooth", "kd": (0.08, 0.08, 0.08), "F0": (0.95, 0.64, 0.54), "r": 0.2}
GROUPS = (DIELECTRIC, METAL)

SURFEL_OPACITY = 0.98


def fibonacci_sphere(n):
    i = np.arange(n) + 0.5
    y = 1.0 - 2.0 * i / n
    rad = np.sqrt(1.0 - y * y)
    phi = i * np.pi * (3.0 - np.sqrt(5.0))
    return np.stack([rad * np.cos(phi), y, rad * np.sin(phi)], axis=-1)


def sphere_surfels(center, radius, n):
    """Tangent disks on a sphere; scale picked so neighbours overlap."""
    nrm = fibonacci_sphere(n)
    up = np.where((np.abs(nrm[:, 1]) < 0.9)[:, None], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0])
    tu = np.cross(up, nrm)
    tu /= np.linalg.norm(tu, axis=-1, keepdims=True)
    tv = np.cross(nrm, tu)
    spacing = radius * np.sqrt(4.0 * np.pi / n)
    scale = np.full((n, 2), 0.75 * spacing)
    return np.asarray(center) + radius * nrm, tu, tv, scale, nrm


def material_array(group):
    return np.concatenate([group["kd"], group["F0"], [group["r"]]])


def make_scene(preset="two-material", n_surfels=1800):
    """Surfel scene with known SG materials. Returns ``(scene, groups)``."""
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; choose from {PRESETS}")
    if preset == "spheres":
        half = n_surfels // 2
        parts = [sphere_surfels((-0.5, 0.0, 0.0), 0.45, half), sphere_surfels((0.5, 0.0, 0.0), 0.45, n_surfels - half)]
        pos, tu, tv, scale, _ = (np.concatenate(a) for a in zip(*parts))
        group = np.repeat([0, 1], [half, n_surfels - half])
    else:
        pos, tu, tv, scale, nrm = sphere_surfels((0.0, 0.0, 0.0), 0.8, n_surfels)
        # left half dielectric, right half metal
        group = (nrm[:, 0] > 0.0).astype(np.int64)
    mats = np.stack([material_array(GROUPS[g]) for g in group])
    scene = Scene(
        pos, tu, tv, scale,
        np.full(len(pos), unsquash(SURFEL_OPACITY)),
        unsquash(mats), "sg", np.zeros(3), group,
    )
    return scene, [dict(g, id=i) for i, g in enumerate(GROUPS)]


def make_cameras(n_views=24, res=128):
    return orbit_cameras(n_views, radius=3.2, fov_deg=40.0, res=res)


# --- environments -----------------------------------------------------------


def _lobe(d, axis, power):
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    return np.maximum(d @ axis, 0.0) ** power


def env_radiance(dirs, kind="train"):
    """Smooth sky/ground gradient plus broad lobes; all values positive."""
    y = dirs[..., 1:2]
    t = np.clip(0.5 + 0.5 * y, 0.0, 1.0)
    if kind == "train":
        # close to white balanced, as the white-light regulariser assumes
        sky, ground = np.array([0.62, 0.62, 0.66]), np.array([0.34, 0.33, 0.31])
        lobes = [((0.6, 0.5, 0.6), (1.5, 1.45, 1.35), 6.0), ((-0.7, 0.2, -0.5), (0.9, 0.95, 1.05), 10.0)]
    elif kind == "heldout":
        sky, ground = np.array([0.70, 0.62, 0.50]), np.array([0.15, 0.20, 0.22])
        lobes = [((-0.4, 0.7, 0.6), (2.5, 2.0, 1.4), 24.0), ((0.8, -0.1, -0.5), (0.5, 0.9, 0.6), 4.0)]
    else:
        raise ValueError(f"unknown environment {kind!r}")
    out = ground + (sky - ground) * t
    for axis, color, power in lobes:
        out = out + np.asarray(color) * _lobe(dirs, axis, power)[..., None]
    return out


def make_env(res=64, kind="train", peak=10.0):
    """Procedural cube map; ``kind="train"`` adds a 3x3 texel patch of radiance ``peak``."""
    cube = env_radiance(face_dirs(res), kind)
    if kind == "train" and peak is not None:
        c = res // 2
        # +Z face, a little above centre, so the object reflects it toward most cameras
        cube[4, c - 8 : c - 5, c - 1 : c + 2] = peak
    return CubeMap(cube)


def random_smooth_env(res, rng, n_lobes=4):
    """Random positive envmap made of a few broad lobes over a constant floor."""
    dirs = face_dirs(res)
    out = np.full(dirs.shape, 0.1) + 0.2 * rng.random(3)
    for _ in range(n_lobes):
        axis = rng.normal(size=3)
        out = out + rng.uniform(0.2, 2.0, 3) * _lobe(dirs, axis, rng.uniform(1.0, 8.0))[..., None]
    return CubeMap(out)


def render_views(scene, cams, env, lut, dump_albedo=True):
    """Ground-truth renders and priors for every camera.

    Each entry holds the composited HDR image, its clamped sRGB version, the
    camera-space normal prior, the sRGB diffuse prior (diffuse buffer over
    black) and the albedo map.
    """
    out = []
    for cam in cams:
        g, _ = rasterize(scene, cam)
        sh = deferred_shade(g, env, lut, cam, background=scene.background)
        mask = g.mask
        n_cam = NormalMap(np.where(mask[..., None], g.normals @ cam.R.T, 0.0), mask)
        diff = to_srgb(np.clip(g.accum[..., None] * sh.diffuse, 0.0, None))
        entry = {"hdr": sh.composite, "srgb": sh.srgb, "normal": n_cam, "diffuse": diff, "mask": mask}
        if dump_albedo:
            entry["albedo"] = np.where(mask[..., None], g.material[..., 0:3], 0.0)
        out.append(entry)
    return out
