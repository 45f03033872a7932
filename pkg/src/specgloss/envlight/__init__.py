from .cubemap import (
    FACE_NAMES,
    CubeMap,
    cube_sample,
    cube_sample_adjoint,
    dirs_to_face_uv,
    face_dirs,
    pool_average,
    pool_weighted,
    texel_solid_angles,
    upsample_bilinear2x,
)
from .io import load_cubemap, save_cubemap, save_envlight
from .irradiance import diffuse_irradiance, irradiance_adjoint
from .latlong import cube_to_latlong, latlong_convert, latlong_dirs, latlong_mean, latlong_to_cube
from .prefilter import (
    EnvLight,
    clip_nonnegative,
    fast_adjoint,
    prefilter_pmrem,
    progressive_upsample,
    rebuild,
    sample,
    sample_adjoint,
    sample_with_cache,
)

__all__ = [
    "FACE_NAMES",
    "CubeMap",
    "EnvLight",
    "clip_nonnegative",
    "cube_sample",
    "cube_sample_adjoint",
    "cube_to_latlong",
    "diffuse_irradiance",
    "dirs_to_face_uv",
    "face_dirs",
    "fast_adjoint",
    "irradiance_adjoint",
    "latlong_convert",
    "latlong_dirs",
    "latlong_mean",
    "latlong_to_cube",
    "load_cubemap",
    "pool_average",
    "pool_weighted",
    "prefilter_pmrem",
    "progressive_upsample",
    "rebuild",
    "sample",
    "sample_adjoint",
    "sample_with_cache",
    "save_cubemap",
    "save_envlight",
    "texel_solid_angles",
    "upsample_bilinear2x",
]
