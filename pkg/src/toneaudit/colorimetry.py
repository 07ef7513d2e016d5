"""sRGB -> CIELAB conversion and the two tone angles (ITA and hue).

All conversions assume sRGB primaries with a D65 white, 2 degree observer.
The white point is taken as the row sums of the RGB->XYZ matrix, so sRGB
white lands exactly on L*=100, a*=b*=0 and every gray is exactly achromatic
up to floating point noise.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

# IEC 61966-2-1 sRGB -> XYZ (D65)
SRGB_TO_XYZ = np.array(
    [
        [0.4124, 0.3576, 0.1805],
        [0.2126, 0.7152, 0.0722],
        [0.0193, 0.1192, 0.9505],
    ]
)
XYZ_TO_SRGB = np.linalg.inv(SRGB_TO_XYZ)
D65_WHITE = SRGB_TO_XYZ.sum(axis=1)

_DELTA = 6.0 / 29.0
_DELTA_CUBED = _DELTA**3


class Rgb8(NamedTuple):
    r: int
    g: int
    b: int

    @classmethod
    def checked(cls, r: int, g: int, b: int) -> "Rgb8":
        """Build an Rgb8, raising ValueError if a channel is outside [0, 255]."""
        for name, v in (("r", r), ("g", g), ("b", b)):
            if int(v) != v or not 0 <= v <= 255:
                raise ValueError(f"channel {name}={v!r} outside [0, 255]")
        return cls(int(r), int(g), int(b))


class LinearRgb(NamedTuple):
    r: float
    g: float
    b: float


class XyzColor(NamedTuple):
    x: float
    y: float
    z: float


class LabColor(NamedTuple):
    l_star: float
    a_star: float
    b_star: float


class ToneAngles(NamedTuple):
    ita_deg: float | None
    hue_deg: float | None


# --- vectorised core -------------------------------------------------------


def srgb_decode(values: np.ndarray) -> np.ndarray:
    """Apply the sRGB EOTF to 8-bit codes, returning linear light in [0, 1]."""
    s = np.asarray(values, dtype=np.float64) / 255.0
    return np.where(s <= 0.04045, s / 12.92, ((s + 0.055) / 1.055) ** 2.4)


def srgb_encode(linear: np.ndarray) -> np.ndarray:
    """Inverse EOTF: linear light -> real-valued 8-bit codes (unrounded)."""
    v = np.clip(np.asarray(linear, dtype=np.float64), 0.0, 1.0)
    s = np.where(v <= 0.0031308, v * 12.92, 1.055 * v ** (1 / 2.4) - 0.055)
    return s * 255.0


def _f(t: np.ndarray) -> np.ndarray:
    return np.where(t > _DELTA_CUBED, np.cbrt(t), t / (3 * _DELTA**2) + 4.0 / 29.0)


def _f_inv(t: np.ndarray) -> np.ndarray:
    return np.where(t > _DELTA, t**3, 3 * _DELTA**2 * (t - 4.0 / 29.0))


def rgb_array_to_lab(rgb: np.ndarray) -> np.ndarray:
    """Convert an (..., 3) array of 8-bit sRGB values to (..., 3) Lab."""
    rgb = np.asarray(rgb)
    if rgb.shape[-1] != 3:
        raise ValueError(f"last dimension must be 3, got {rgb.shape[-1]}")
    xyz = srgb_decode(rgb) @ SRGB_TO_XYZ.T
    fx, fy, fz = np.moveaxis(_f(xyz / D65_WHITE), -1, 0)
    lab = np.stack([116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)], axis=-1)
    # cube-root noise can push pure white a hair past 100
    lab[..., 0] = np.clip(lab[..., 0], 0.0, 100.0)
    return lab


def lab_array_to_rgb(lab: np.ndarray) -> np.ndarray:
    """Inverse of :func:`rgb_array_to_lab`, rounded to 8-bit codes.

    Only used to check round-tripping; out-of-gamut colours are clipped.
    """
    lab = np.asarray(lab, dtype=np.float64)
    fy = (lab[..., 0] + 16.0) / 116.0
    fx = fy + lab[..., 1] / 500.0
    fz = fy - lab[..., 2] / 200.0
    xyz = _f_inv(np.stack([fx, fy, fz], axis=-1)) * D65_WHITE
    codes = srgb_encode(xyz @ XYZ_TO_SRGB.T)
    return np.clip(np.floor(codes + 0.5), 0, 255).astype(np.uint8)


# --- scalar API ------------------------------------------------------------


def srgb_to_linear(c: Rgb8) -> LinearRgb:
    return LinearRgb(*(float(v) for v in srgb_decode(np.array(c))))


def linear_to_xyz(c: LinearRgb) -> XyzColor:
    return XyzColor(*(float(v) for v in SRGB_TO_XYZ @ np.array(c)))


def rgb_to_lab(c: Rgb8) -> LabColor:
    """Convert one 8-bit sRGB colour to CIELAB (D65)."""
    l, a, b = rgb_array_to_lab(np.array([c], dtype=np.float64))[0]
    return LabColor(float(l), float(a), float(b))


def lab_to_rgb(lab: LabColor) -> Rgb8:
    return Rgb8(*(int(v) for v in lab_array_to_rgb(np.array([lab]))[0]))


def compute_ita(lab: LabColor) -> float | None:
    """Individual Typology Angle in degrees, arctan((L* - 50) / b*).

    For b* = 0 the angle saturates to +90 (L* > 50) or -90 (L* < 50).
    Returns None when L* = 50 and b* = 0, where no angle exists.
    """
    rise = lab.l_star - 50.0
    if lab.b_star == 0.0:
        if rise == 0.0:
            return None
        return 90.0 if rise > 0 else -90.0
    return math.degrees(math.atan(rise / lab.b_star))


def compute_hue(lab: LabColor) -> float | None:
    """Hue angle atan2(b*, a*) in degrees, wrapped to [0, 360).

    Returns None for an exactly achromatic colour (a* = b* = 0).
    """
    if lab.a_star == 0.0 and lab.b_star == 0.0:
        return None
    deg = math.degrees(math.atan2(lab.b_star, lab.a_star)) % 360.0
    # tiny negative angles wrap to exactly 360.0 in floating point
    return 0.0 if deg >= 360.0 else deg


def tone_angles(lab: LabColor) -> ToneAngles:
    return ToneAngles(compute_ita(lab), compute_hue(lab))
