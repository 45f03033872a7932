from .color import luminance, srgb_transfer, to_linear, to_srgb, to_srgb_grad
from .fileio import (
    ImageFormatError,
    read_hdr,
    read_image,
    read_pfm,
    read_png,
    write_hdr,
    write_pfm,
    write_png,
)
from .metrics import (
    PSNR_IDENTICAL,
    NormalMap,
    mae_degrees,
    mse,
    psnr,
    ssim,
    ssim_and_grad,
)

__all__ = [
    "ImageFormatError",
    "NormalMap",
    "PSNR_IDENTICAL",
    "luminance",
    "mae_degrees",
    "mse",
    "psnr",
    "read_hdr",
    "read_image",
    "read_pfm",
    "read_png",
    "srgb_transfer",
    "ssim",
    "ssim_and_grad",
    "to_linear",
    "to_srgb",
    "to_srgb_grad",
    "write_hdr",
    "write_pfm",
    "write_png",
]
