from .camera import Camera, load_cameras, look_at, orbit_cameras, save_cameras
from .depth import backproject, depth_to_normals
from .raster import (
    EPS_MASK,
    Fragments,
    GBuffer,
    blend_gbuffer,
    blend_weights,
    gbuffer_backward,
    intersect,
    rasterize,
    rasterize_fragments,
)
from .scene import Scene, Surfel

__all__ = [
    "EPS_MASK",
    "Camera",
    "Fragments",
    "GBuffer",
    "Scene",
    "Surfel",
    "backproject",
    "blend_gbuffer",
    "blend_weights",
    "depth_to_normals",
    "gbuffer_backward",
    "intersect",
    "load_cameras",
    "look_at",
    "orbit_cameras",
    "rasterize",
    "rasterize_fragments",
    "save_cameras",
]
