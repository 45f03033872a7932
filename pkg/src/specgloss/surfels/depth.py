"""Normals from a depth map by central differences of back-projected points."""
import numpy as np

from ..imagecore.metrics import NormalMap


def backproject(depth, cam):
    """Camera-space points (H, W, 3) for per-pixel camera depth ``z``."""
    return cam.camera_rays() * np.asarray(depth, dtype=np.float64)[..., None]


def depth_to_normals(depth, cam, mask=None, frame="camera"):
    """Unit normals facing the camera, from the cross product of central differences.

    Pixels on the border or with a masked 4-neighbour are masked. ``frame``
    selects camera or world coordinates for the result.
    """
    depth = np.asarray(depth, dtype=np.float64)
    if depth.shape != cam.shape:
        raise ValueError("depth map and camera resolution differ")
    valid = np.isfinite(depth) if mask is None else (np.asarray(mask, dtype=bool) & np.isfinite(depth))
    d = np.where(valid, depth, 0.0)
    pts = backproject(d, cam)
    ok = np.zeros_like(valid)
    ok[1:-1, 1:-1] = (
        valid[1:-1, 1:-1] & valid[1:-1, 2:] & valid[1:-1, :-2] & valid[2:, 1:-1] & valid[:-2, 1:-1]
    )
    n = np.zeros_like(pts)
    dx = pts[1:-1, 2:] - pts[1:-1, :-2]
    dy = pts[2:, 1:-1] - pts[:-2, 1:-1]
    n[1:-1, 1:-1] = np.cross(dx, dy)
    length = np.linalg.norm(n, axis=-1)
    ok &= length > 1e-12
    n = np.where(ok[..., None], n / np.where(length > 1e-12, length, 1.0)[..., None], 0.0)
    # the vector to the camera is -p
    flip = np.einsum("...i,...i->...", n, pts) > 0.0
    n = np.where(flip[..., None], -n, n)
    if frame == "world":
        n = n @ cam.R
    elif frame != "camera":
        raise ValueError("frame must be 'camera' or 'world'")
    return NormalMap(n, ok)
