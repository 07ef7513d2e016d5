"""Low-colour filtering, skin segmentation and the representative skin colour.

Images are ``(height, width, 3)`` uint8 arrays in sRGB channel order; masks
are ``(height, width)`` bool arrays.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

from .colorimetry import Rgb8

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LowColorCriterion:
    """Flag an image as low-colour when the mean ``max(rgb) - min(rgb)`` is
    below ``min_mean_chroma`` or when fewer than ``min_vivid_fraction`` of
    pixels have a proxy above ``vivid_chroma``."""

    min_mean_chroma: float = 8.0
    vivid_chroma: float = 16.0
    min_vivid_fraction: float = 0.05


@dataclass(frozen=True)
class YCrCbBox:
    y_min: float = 80.0  # exclusive
    cr_min: float = 135.0
    cr_max: float = 180.0
    cb_min: float = 85.0
    cb_max: float = 135.0


@dataclass(frozen=True)
class HsvBox:
    h_min_deg: float = 0.0
    h_max_deg: float = 50.0
    s_min: float = 0.23
    s_max: float = 0.68
    v_min: float = 0.35  # exclusive


@dataclass(frozen=True)
class SegmentationConfig:
    ycrcb: YCrCbBox = field(default_factory=YCrCbBox)
    hsv: HsvBox = field(default_factory=HsvBox)
    # Otsu refinement drops the low-Cr class only if class means differ by more
    otsu_min_separation: float = 10.0
    min_coverage_fraction: float = 0.01
    min_coverage_pixels: int = 64


class ColorfulnessStats(NamedTuple):
    mean_chroma: float
    saturation_fraction: float


def as_image(img) -> np.ndarray:
    """Validate and return ``img`` as a non-empty (H, W, 3) uint8 array."""
    arr = np.asarray(img)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) image, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError("image must have at least one pixel")
    if arr.dtype != np.uint8:
        if arr.min() < 0 or arr.max() > 255 or not np.all(np.mod(arr, 1) == 0):
            raise ValueError("pixel values must be integers in [0, 255]")
        arr = arr.astype(np.uint8)
    return arr


def image_from_pixels(width: int, height: int, pixels: Iterable) -> np.ndarray:
    """Build an image array from a row-major sequence of RGB triples."""
    arr = np.asarray(list(pixels), dtype=np.int64)
    if arr.shape != (width * height, 3):
        raise ValueError(
            f"expected {width * height} pixels for {width}x{height}, got {len(arr)}"
        )
    return as_image(arr.reshape(height, width, 3))


def chroma_proxy(img: np.ndarray) -> np.ndarray:
    img = img.astype(np.int16)
    return (img.max(axis=-1) - img.min(axis=-1)).astype(np.float64)


def is_low_color(
    img: np.ndarray, criterion: LowColorCriterion = LowColorCriterion()
) -> tuple[bool, ColorfulnessStats]:
    img = as_image(img)
    proxy = chroma_proxy(img)
    stats = ColorfulnessStats(
        mean_chroma=float(proxy.mean()),
        saturation_fraction=float(np.mean(proxy > criterion.vivid_chroma)),
    )
    low = (
        stats.mean_chroma < criterion.min_mean_chroma
        or stats.saturation_fraction < criterion.min_vivid_fraction
    )
    return low, stats


def rgb_to_ycrcb(img: np.ndarray) -> np.ndarray:
    """Full-range BT.601 (JPEG) YCrCb, real valued, channel order Y, Cr, Cb."""
    r, g, b = np.moveaxis(np.asarray(img, dtype=np.float64), -1, 0)
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cr = 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b
    cb = 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b
    return np.stack([y, cr, cb], axis=-1)


def rgb_to_hsv(img: np.ndarray) -> np.ndarray:
    """HSV with H in degrees [0, 360) and S, V in [0, 1]."""
    rgb = np.asarray(img, dtype=np.float64) / 255.0
    mx = rgb.max(axis=-1)
    mn = rgb.min(axis=-1)
    span = mx - mn
    r, g, b = np.moveaxis(rgb, -1, 0)
    safe = np.where(span > 0, span, 1.0)
    h = np.select(
        [span == 0, mx == r, mx == g],
        [0.0, ((g - b) / safe) % 6.0, (b - r) / safe + 2.0],
        default=(r - g) / safe + 4.0,
    )
    s = np.where(mx > 0, span / np.where(mx > 0, mx, 1.0), 0.0)
    return np.stack([h * 60.0, s, mx], axis=-1)


def skin_mask_ycrcb(img: np.ndarray, box: YCrCbBox = YCrCbBox()) -> np.ndarray:
    y, cr, cb = np.moveaxis(rgb_to_ycrcb(as_image(img)), -1, 0)
    return (
        (y > box.y_min)
        & (cr >= box.cr_min)
        & (cr <= box.cr_max)
        & (cb >= box.cb_min)
        & (cb <= box.cb_max)
    )


def skin_mask_hsv(img: np.ndarray, box: HsvBox = HsvBox()) -> np.ndarray:
    h, s, v = np.moveaxis(rgb_to_hsv(as_image(img)), -1, 0)
    return (
        (h >= box.h_min_deg)
        & (h <= box.h_max_deg)
        & (s >= box.s_min)
        & (s <= box.s_max)
        & (v > box.v_min)
    )


def otsu_threshold(values) -> int:
    """Otsu threshold over the 256-bin histogram of 8-bit ``values``.

    The returned ``t`` splits values into ``x < t`` and ``x >= t``. Between
    class variance is compared exactly in integer arithmetic and ties go to
    the lowest ``t``. With a single distinct value, that value is returned.
    """
    arr = np.asarray(values).ravel()
    if arr.size == 0:
        raise ValueError("otsu_threshold needs at least one value")
    if arr.min() < 0 or arr.max() > 255:
        raise ValueError("values must lie in [0, 255]")
    hist = np.bincount(arr.astype(np.int64), minlength=256)
    counts = [int(c) for c in hist]
    total_n = sum(counts)
    total_s = sum(i * c for i, c in enumerate(counts))

    best_t = None
    best_num, best_den = 0, 1
    n0 = s0 = 0
    for t in range(1, 256):
        n0 += counts[t - 1]
        s0 += (t - 1) * counts[t - 1]
        n1 = total_n - n0
        if n0 == 0 or n1 == 0:
            continue
        s1 = total_s - s0
        # sigma_b^2 * N^2 = (n0*s1 - n1*s0)^2 / (n0*n1)
        num = (n0 * s1 - n1 * s0) ** 2
        den = n0 * n1
        if best_t is None or num * best_den > best_num * den:
            best_t, best_num, best_den = t, num, den
    if best_t is None:
        return int(arr[0])
    return best_t


def segment_skin(
    img: np.ndarray, config: SegmentationConfig = SegmentationConfig()
) -> np.ndarray:
    """Skin mask: YCrCb box AND HSV box, then an Otsu split on Cr.

    Candidates on the low-Cr side of the Otsu threshold are dropped when
    both classes are populated and their mean Cr values are more than
    ``config.otsu_min_separation`` apart.
    """
    img = as_image(img)
    mask = skin_mask_ycrcb(img, config.ycrcb) & skin_mask_hsv(img, config.hsv)
    if not mask.any():
        return mask
    cr = rgb_to_ycrcb(img)[..., 1]
    cr8 = np.clip(np.floor(cr + 0.5), 0, 255).astype(np.int64)
    cand = cr8[mask]
    t = otsu_threshold(cand)
    low = cand[cand < t]
    high = cand[cand >= t]
    if low.size and high.size and high.mean() - low.mean() > config.otsu_min_separation:
        mask = mask & (cr8 >= t)
    return mask


def mean_skin_rgb(
    img: np.ndarray,
    mask: np.ndarray,
    min_fraction: float = 0.01,
    min_pixels: int = 64,
) -> Rgb8 | None:
    """Per-channel mean of masked pixels, rounded half up.

    Returns None when the mask covers fewer than ``min_pixels`` pixels or
    less than ``min_fraction`` of the image.
    """
    img = as_image(img)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != img.shape[:2]:
        raise ValueError(f"mask shape {mask.shape} does not match image {img.shape[:2]}")
    n = int(mask.sum())
    if n == 0 or n < min_pixels or n < min_fraction * mask.size:
        log.debug("skin coverage too low: %d of %d pixels", n, mask.size)
        return None
    sums = img[mask].astype(np.int64).sum(axis=0)
    # floor(s/n + 1/2) without floats
    return Rgb8(*((2 * int(s) + n) // (2 * n) for s in sums))
