from .lut import BrdfLut, compute_brdf_lut, default_lut
from .materials import (
    CHANNELS,
    DIELECTRIC_F0,
    MaterialMR,
    MaterialMRS,
    MaterialSG,
    f0_from_mr,
    from_array,
    shading_inputs,
    shading_inputs_adjoint,
    squash,
    unsquash,
)
from .microfacet import cook_torrance, fresnel_schlick, ggx_d, smith_g
from .shade import shade, shade_backward, shade_terms

__all__ = [
    "CHANNELS",
    "DIELECTRIC_F0",
    "BrdfLut",
    "MaterialMR",
    "MaterialMRS",
    "MaterialSG",
    "compute_brdf_lut",
    "cook_torrance",
    "default_lut",
    "f0_from_mr",
    "fresnel_schlick",
    "from_array",
    "ggx_d",
    "shade",
    "shade_backward",
    "shade_terms",
    "shading_inputs",
    "shading_inputs_adjoint",
    "smith_g",
    "squash",
    "unsquash",
]
