"""Pinhole cameras in the OpenCV convention.

``x_cam = R @ x_world + t``; camera x points right, y down, z forward.
Pixel ``(i, j)`` (column, row) has its centre at ``(i + 0.5, j + 0.5)``.
"""
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass
class Camera:
    R: np.ndarray
    t: np.ndarray
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        self.R = np.asarray(self.R, dtype=np.float64).reshape(3, 3)
        self.t = np.asarray(self.t, dtype=np.float64).reshape(3)
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise ValueError("camera resolution must be positive")
        if not np.allclose(self.R @ self.R.T, np.eye(3), atol=1e-6):
            raise ValueError("camera rotation is not orthonormal")
        self.width = int(self.width)
        self.height = int(self.height)

    @property
    def center(self):
        return -self.R.T @ self.t

    @property
    def shape(self):
        return (self.height, self.width)

    def camera_rays(self):
        """Un-normalised camera-space directions (H, W, 3) with z = 1."""
        x = (np.arange(self.width) + 0.5 - self.cx) / self.fx
        y = (np.arange(self.height) + 0.5 - self.cy) / self.fy
        xx, yy = np.meshgrid(x, y)
        return np.stack([xx, yy, np.ones_like(xx)], axis=-1)

    def ray_dirs(self):
        """Unit world-space ray directions (H, W, 3)."""
        d = self.camera_rays() @ self.R
        return d / np.linalg.norm(d, axis=-1, keepdims=True)

    def to_camera(self, pts):
        return np.asarray(pts, dtype=np.float64) @ self.R.T + self.t

    def project(self, pts):
        """Pixel coordinates (..., 2) and camera depth z (...)."""
        pc = self.to_camera(pts)
        z = pc[..., 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            uv = np.stack([self.fx * pc[..., 0] / z + self.cx, self.fy * pc[..., 1] / z + self.cy], axis=-1)
        return uv, z

    def to_dict(self):
        return {
            "R": self.R.tolist(),
            "t": self.t.tolist(),
            "fx": float(self.fx),
            "fy": float(self.fy),
            "cx": float(self.cx),
            "cy": float(self.cy),
            "width": self.width,
            "height": self.height,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["R"], d["t"], d["fx"], d["fy"], d["cx"], d["cy"], d["width"], d["height"])


def look_at(eye, target, up=(0.0, 1.0, 0.0), fov_deg=40.0, width=128, height=128):
    """Camera at ``eye`` looking at ``target`` with vertical field of view ``fov_deg``."""
    eye = np.asarray(eye, dtype=np.float64)
    z = np.asarray(target, dtype=np.float64) - eye
    z /= np.linalg.norm(z)
    x = np.cross(z, np.asarray(up, dtype=np.float64))
    if np.linalg.norm(x) < 1e-9:
        raise ValueError("up vector is parallel to the viewing direction")
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    R = np.stack([x, y, z])
    f = 0.5 * height / np.tan(np.radians(fov_deg) / 2.0)
    return Camera(R, -R @ eye, f, f, width / 2.0, height / 2.0, width, height)


def orbit_cameras(n, radius=3.0, target=(0.0, 0.0, 0.0), fov_deg=40.0, res=128, elev_deg=(-25.0, 45.0)):
    """``n`` cameras on a spiral around ``target``, alternating elevation bands."""
    cams = []
    lo, hi = elev_deg
    golden = np.pi * (3.0 - np.sqrt(5.0))
    for i in range(n):
        elev = np.radians(lo + (hi - lo) * (i + 0.5) / n)
        az = i * golden
        eye = np.asarray(target) + radius * np.array(
            [np.cos(elev) * np.sin(az), np.sin(elev), np.cos(elev) * np.cos(az)]
        )
        cams.append(look_at(eye, target, fov_deg=fov_deg, width=res, height=res))
    return cams


def save_cameras(cams, path):
    Path(path).write_text(json.dumps([c.to_dict() for c in cams], indent=1) + "\n")


def load_cameras(path):
    data = json.loads(Path(path).read_text())
    if not isinstance(data, list) or not data:
        raise ValueError("cameras file must hold a non-empty JSON list")
    return [Camera.from_dict(d) for d in data]
