import numpy as np

# IEC 61966-2-1 constants
_A = 0.055
_GAMMA = 2.4
_LIN_CUT = 0.0031308
_ENC_CUT = 0.04045


def _check(img):
    x = np.asarray(img, dtype=np.float64)
    if x.ndim == 3 and x.shape[-1] not in (1, 3):
        raise ValueError(f"expected 1 or 3 channels, got {x.shape[-1]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite values in image")
    return x


def to_srgb(img):
    x = _check(img)
    if np.any(x < 0):
        raise ValueError("to_srgb expects non-negative linear values")
    hi = (1.0 + _A) * np.power(np.maximum(x, _LIN_CUT), 1.0 / _GAMMA) - _A
    return np.where(x <= _LIN_CUT, 12.92 * x, hi)


def to_linear(img):
    x = _check(img)
    hi = np.power((np.maximum(x, _ENC_CUT) + _A) / (1.0 + _A), _GAMMA)
    return np.where(x <= _ENC_CUT, x / 12.92, hi)


def srgb_transfer(img, direction):
    """Apply the sRGB transfer curve; ``direction`` is ``"to_srgb"`` or ``"to_linear"``."""
    if direction == "to_srgb":
        return to_srgb(img)
    if direction == "to_linear":
        return to_linear(img)
    raise ValueError(f"unknown direction {direction!r}")


def to_srgb_grad(x):
    """d to_srgb / dx, elementwise, for x >= 0."""
    x = np.asarray(x, dtype=np.float64)
    hi = (1.0 + _A) / _GAMMA * np.power(np.maximum(x, _LIN_CUT), 1.0 / _GAMMA - 1.0)
    return np.where(x <= _LIN_CUT, 12.92, hi)


def luminance(rgb):
    rgb = np.asarray(rgb, dtype=np.float64)
    return rgb[..., 0] * 0.2126 + rgb[..., 1] * 0.7152 + rgb[..., 2] * 0.0722
