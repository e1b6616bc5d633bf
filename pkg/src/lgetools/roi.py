"""Geometric preprocessing: LV centering, crop/pad, and intensity normalization.

Conventions pinned here and relied on by tests:
  - middle slice of an nz-stack is floor(nz/2), 0-based;
  - crop/pad centering drops the extra row/column from the high-index side
    and pads the extra zero row/column on the high-index side;
  - the center of mass is rounded half-up to the nearest integer pixel;
  - normalization uses the population (divide-by-N) standard deviation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyMaskError, ValidationError
from .volume import LV_CLASSES, MaskVolume, label_mask

STD_EPS = 1e-8


@dataclass(frozen=True)
class CropSpec:
    """Axis-aligned window of ``size`` centered at an integer pixel."""

    center_px: tuple[int, int]  # (cx, cy)
    size: tuple[int, int]  # (w, h)

    def __post_init__(self):
        w, h = self.size
        if w < 1 or h < 1:
            raise ValidationError("crop size must be >= 1 in both dimensions")

    @property
    def bounds(self) -> tuple[int, int, int, int]:
        """(x0, y0, x1, y1) half-open window on the source grid."""
        cx, cy = self.center_px
        w, h = self.size
        x0 = cx - w // 2
        y0 = cy - h // 2
        return x0, y0, x0 + w, y0 + h


def middle_slice_index(nz: int) -> int:
    if nz < 1:
        raise ValidationError("nz must be >= 1")
    return nz // 2


def center_of_mass(binary_mask: np.ndarray) -> tuple[float, float]:
    """(cx, cy) mean of foreground pixel indices; raises on an empty mask."""
    mask = np.asarray(binary_mask).astype(bool)
    if mask.ndim != 2:
        raise ValidationError("center_of_mass expects a 2D mask")
    ys, xs = np.nonzero(mask)
    if xs.size == 0:
        raise EmptyMaskError("mask has no foreground pixels")
    return float(xs.mean()), float(ys.mean())


def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def crop_window(image: np.ndarray, spec: CropSpec, fill=0) -> np.ndarray:
    """Extract ``spec``'s window from a 2D array, zero-filling out of bounds."""
    img = np.asarray(image)
    h_in, w_in = img.shape
    x0, y0, x1, y1 = spec.bounds
    out = np.full((y1 - y0, x1 - x0), fill, dtype=img.dtype)
    sx0, sx1 = max(x0, 0), min(x1, w_in)
    sy0, sy1 = max(y0, 0), min(y1, h_in)
    if sx0 < sx1 and sy0 < sy1:
        out[sy0 - y0 : sy1 - y0, sx0 - x0 : sx1 - x0] = img[sy0:sy1, sx0:sx1]
    return out


def pad_crop_to(image: np.ndarray, target: tuple[int, int]) -> np.ndarray:
    """Center-crop or zero-pad a 2D array to (w, h)."""
    img = np.asarray(image)
    if img.ndim != 2 or img.size == 0:
        raise ValidationError("pad_crop_to expects a non-empty 2D array")
    w, h = target
    if w < 1 or h < 1:
        raise ValidationError("target size must be >= 1")

    def window(n_in: int, n_out: int) -> tuple[int, int]:
        # start index on the source grid; negative start means padding
        if n_out <= n_in:
            start = (n_in - n_out) // 2
        else:
            start = -((n_out - n_in) // 2)
        return start, start + n_out

    y0, y1 = window(img.shape[0], h)
    x0, x1 = window(img.shape[1], w)
    out = np.zeros((h, w), dtype=img.dtype)
    sy0, sy1 = max(y0, 0), min(y1, img.shape[0])
    sx0, sx1 = max(x0, 0), min(x1, img.shape[1])
    if sy0 < sy1 and sx0 < sx1:
        out[sy0 - y0 : sy1 - y0, sx0 - x0 : sx1 - x0] = img[sy0:sy1, sx0:sx1]
    return out


def lv_mask_from_labels(volume: MaskVolume) -> np.ndarray:
    """Binary LV mask (blood pool + myocardium) derived from the labels."""
    return label_mask(volume, LV_CLASSES)


def roi_center(lv_mask: np.ndarray, dims: tuple[int, int, int]) -> tuple[int, int]:
    """Integer LV center: center of mass of the middle slice, with fallbacks.

    Falls back to the whole-stack center of mass if the middle slice is
    empty, then to the geometric image center if the stack is empty.
    """
    nx, ny, nz = dims
    mask = np.asarray(lv_mask).astype(bool)
    mid = middle_slice_index(nz)
    try:
        cx, cy = center_of_mass(mask[mid])
    except EmptyMaskError:
        zs, ys, xs = np.nonzero(mask)
        if xs.size:
            cx, cy = float(xs.mean()), float(ys.mean())
        else:
            cx, cy = (nx - 1) / 2.0, (ny - 1) / 2.0
    return _round_half_up(cx), _round_half_up(cy)


def extract_roi_stack(volume: MaskVolume, lv_mask: np.ndarray, size: tuple[int, int]) -> MaskVolume:
    """Excise a (w, h) stack around the LV center in every slice.

    The same window is applied to the image and the labels; spacing and the
    number of slices are unchanged. Out-of-bounds regions are zero-filled
    (background for labels).
    """
    mask = np.asarray(lv_mask).astype(bool)
    if mask.shape != volume.image.shape:
        raise ValidationError("lv_mask dims must match the volume")
    spec = CropSpec(center_px=roi_center(mask, volume.dims), size=size)
    image = np.stack([crop_window(volume.image[z], spec) for z in range(volume.nz)])
    labels = np.stack([crop_window(volume.labels[z], spec) for z in range(volume.nz)])
    return volume.with_arrays(image=image, labels=labels)


def normalize(image: np.ndarray) -> np.ndarray:
    """Zero-mean, unit-std (population) normalization; constant input maps to zeros."""
    img = np.asarray(image, dtype=np.float64)
    if img.size == 0:
        raise ValidationError("normalize expects a non-empty array")
    std = float(img.std())
    if std < STD_EPS:
        return np.zeros_like(img)
    return (img - img.mean()) / std
