"""Surfel scenes: structure-of-arrays storage plus JSON I/O."""
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..brdf.materials import CHANNELS, check_mode, squash, unsquash

# JSON keys of the raw material channels per parameterisation, with widths
MATERIAL_KEYS = {
    "sg": [("kd_raw", 3), ("F0_raw", 3), ("r_raw", 1)],
    "mr": [("b_raw", 3), ("m_raw", 1), ("r_raw", 1)],
    "mrs": [("b_raw", 3), ("m_raw", 1), ("r_raw", 1), ("ks_raw", 3)],
}


@dataclass
class Surfel:
    """One 2D Gaussian disk. ``material`` holds raw (pre-sigmoid) channels."""

    p: np.ndarray
    t_u: np.ndarray
    t_v: np.ndarray
    s: np.ndarray
    alpha_raw: float
    material: np.ndarray

    @property
    def normal(self):
        return np.cross(self.t_u, self.t_v)

    @property
    def opacity(self):
        return float(squash(self.alpha_raw))


@dataclass
class Scene:
    pos: np.ndarray  # (K, 3)
    t_u: np.ndarray  # (K, 3)
    t_v: np.ndarray  # (K, 3)
    scale: np.ndarray  # (K, 2)
    alpha_raw: np.ndarray  # (K,)
    mat_raw: np.ndarray  # (K, C)
    mode: str = "sg"
    background: np.ndarray = field(default_factory=lambda: np.zeros(3))
    group: np.ndarray = None  # optional (K,) material group ids

    def __post_init__(self):
        self.mode = check_mode(self.mode)
        self.pos = np.asarray(self.pos, dtype=np.float64).reshape(-1, 3)
        k = self.pos.shape[0]
        if k == 0:
            raise ValueError("scene has no surfels")
        self.t_u = np.asarray(self.t_u, dtype=np.float64).reshape(k, 3)
        self.t_v = np.asarray(self.t_v, dtype=np.float64).reshape(k, 3)
        self.scale = np.asarray(self.scale, dtype=np.float64).reshape(k, 2)
        self.alpha_raw = np.asarray(self.alpha_raw, dtype=np.float64).reshape(k)
        self.mat_raw = np.asarray(self.mat_raw, dtype=np.float64).reshape(k, CHANNELS[self.mode])
        self.background = np.asarray(self.background, dtype=np.float64).reshape(3)
        if self.group is not None:
            self.group = np.asarray(self.group, dtype=np.int64).reshape(k)
        if np.any(self.scale <= 0):
            raise ValueError("surfel scales must be positive")
        dots = np.stack(
            [
                np.einsum("ij,ij->i", self.t_u, self.t_u) - 1.0,
                np.einsum("ij,ij->i", self.t_v, self.t_v) - 1.0,
                np.einsum("ij,ij->i", self.t_u, self.t_v),
            ]
        )
        if np.abs(dots).max() > 1e-5:
            raise ValueError("surfel frames must be orthonormal")

    def __len__(self):
        return self.pos.shape[0]

    @property
    def normals(self):
        return np.cross(self.t_u, self.t_v)

    @property
    def opacity(self):
        return squash(self.alpha_raw)

    @property
    def materials(self):
        """Squashed material channels (K, C)."""
        return squash(self.mat_raw)

    def with_materials(self, mat_raw, mode=None):
        return Scene(
            self.pos, self.t_u, self.t_v, self.scale, self.alpha_raw, mat_raw,
            mode or self.mode, self.background, self.group,
        )

    def surfel(self, i):
        return Surfel(self.pos[i], self.t_u[i], self.t_v[i], self.scale[i], self.alpha_raw[i], self.mat_raw[i])

    def permuted(self, order):
        order = np.asarray(order)
        return Scene(
            self.pos[order], self.t_u[order], self.t_v[order], self.scale[order],
            self.alpha_raw[order], self.mat_raw[order], self.mode, self.background,
            None if self.group is None else self.group[order],
        )

    @classmethod
    def from_surfels(cls, surfels, mode="sg", background=(0.0, 0.0, 0.0)):
        return cls(
            np.array([s.p for s in surfels]),
            np.array([s.t_u for s in surfels]),
            np.array([s.t_v for s in surfels]),
            np.array([s.s for s in surfels]),
            np.array([s.alpha_raw for s in surfels]),
            np.array([s.material for s in surfels]),
            mode,
            background,
        )

    @classmethod
    def from_values(cls, pos, t_u, t_v, scale, opacity, materials, mode="sg", background=(0, 0, 0), group=None):
        """Build from bounded opacity/material values instead of raw ones."""
        return cls(pos, t_u, t_v, scale, unsquash(opacity), unsquash(materials), mode, background, group)

    def to_dict(self):
        keys = MATERIAL_KEYS[self.mode]
        surfels = []
        for i in range(len(self)):
            d = {
                "p": self.pos[i].tolist(),
                "t_u": self.t_u[i].tolist(),
                "t_v": self.t_v[i].tolist(),
                "s": self.scale[i].tolist(),
                "alpha_raw": float(self.alpha_raw[i]),
            }
            c = 0
            for key, width in keys:
                vals = self.mat_raw[i, c : c + width]
                d[key] = float(vals[0]) if width == 1 else vals.tolist()
                c += width
            if self.group is not None:
                d["group"] = int(self.group[i])
            surfels.append(d)
        return {"param": self.mode, "surfels": surfels, "background": self.background.tolist()}

    @classmethod
    def from_dict(cls, d):
        mode = check_mode(d.get("param", "sg"))
        surf = d["surfels"]
        if not surf:
            raise ValueError("scene has no surfels")
        mats = []
        for s in surf:
            row = []
            for key, width in MATERIAL_KEYS[mode]:
                if key not in s:
                    raise ValueError(f"surfel lacks {key!r} required by param mode {mode!r}")
                row.extend(np.atleast_1d(s[key]).tolist())
            mats.append(row)
        group = [s["group"] for s in surf] if all("group" in s for s in surf) else None
        return cls(
            [s["p"] for s in surf],
            [s["t_u"] for s in surf],
            [s["t_v"] for s in surf],
            [s["s"] for s in surf],
            [s["alpha_raw"] for s in surf],
            mats,
            mode,
            d.get("background", [0.0, 0.0, 0.0]),
            group,
        )

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))
