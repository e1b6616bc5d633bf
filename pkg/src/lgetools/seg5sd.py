"""Reference scar segmentation: remote-ROI statistics and the 5-SD threshold.

The protocol: take the mean and SD of a remote-myocardium ROI, threshold
the myocardium at mean + k*SD (k defaults to 5, inclusive >=), and report
hyperenhanced area per slice and total volume using the effective slice
spacing. MVO is never thresholded here.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyMaskError, ValidationError
from .perturb import connected_components
from .volume import MYOCARDIUM_CLASSES, ClassId, MaskVolume, label_mask

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RemoteRoi:
    """Hand-placed remote-myocardium ROI on one slice."""

    slice_index: int
    pixels: frozenset[tuple[int, int]]  # (x, y)

    def __post_init__(self):
        if not self.pixels:
            raise EmptyMaskError("remote ROI must contain at least one pixel")
        object.__setattr__(self, "pixels", frozenset((int(x), int(y)) for x, y in self.pixels))

    def validate_against(self, volume: MaskVolume) -> None:
        """Bounds-check the ROI; warn if pixels are not remote myocardium."""
        nx, ny, nz = volume.dims
        if not (0 <= self.slice_index < nz):
            raise ValidationError(f"ROI slice {self.slice_index} out of range 0..{nz - 1}")
        for x, y in self.pixels:
            if not (0 <= x < nx and 0 <= y < ny):
                raise ValidationError(f"ROI pixel ({x},{y}) out of bounds {nx}x{ny}")
        off = [
            (x, y)
            for x, y in sorted(self.pixels)
            if volume.labels[self.slice_index, y, x] != ClassId.REMOTE_MYOCARDIUM
        ]
        if off:
            warnings.warn(
                f"{len(off)} ROI pixel(s) are not labeled remote myocardium "
                f"(first: {off[0]})",
                stacklevel=2,
            )


@dataclass(frozen=True)
class ThresholdReport:
    mean: float
    sd: float
    k: float
    threshold: float
    per_slice_area_mm2: tuple[float, ...]
    total_volume_ml: float


def remote_stats(image_slice: np.ndarray, roi: RemoteRoi) -> tuple[float, float]:
    """Mean and population SD of the intensities under the ROI pixels."""
    img = np.asarray(image_slice, dtype=np.float64)
    xs = np.array([p[0] for p in sorted(roi.pixels)])
    ys = np.array([p[1] for p in sorted(roi.pixels)])
    values = img[ys, xs]
    return float(values.mean()), float(values.std())


def threshold_5sd(
    image_slice: np.ndarray,
    myocardium_mask: np.ndarray,
    mean: float,
    sd: float,
    k: float = 5.0,
) -> np.ndarray:
    """Binary scar mask: myocardial pixels with intensity >= mean + k*sd."""
    img = np.asarray(image_slice, dtype=np.float64)
    myo = np.asarray(myocardium_mask).astype(bool)
    if myo.shape != img.shape:
        raise ValidationError("myocardium mask shape must match the image slice")
    return myo & (img >= mean + k * sd)


def filter_small_components(mask: np.ndarray, min_pixels: int) -> np.ndarray:
    """Drop 8-connected components smaller than ``min_pixels``."""
    if min_pixels <= 1:
        return np.asarray(mask).astype(bool)
    labels, sizes = connected_components(mask, connectivity=8)
    keep = np.zeros_like(labels, dtype=bool)
    for comp_id, size in enumerate(sizes, start=1):
        if size >= min_pixels:
            keep |= labels == comp_id
    return keep


def infarct_report(
    volume: MaskVolume,
    scar_masks: np.ndarray,
    mean: float = float("nan"),
    sd: float = float("nan"),
    k: float = 5.0,
) -> ThresholdReport:
    """Slice-wise hyperenhanced area (mm^2) and gap-inclusive total volume (ml)."""
    masks = np.asarray(scar_masks).astype(bool)
    if masks.shape != volume.labels.shape:
        raise ValidationError("scar_masks dims must match the volume")
    sp = volume.spacing
    areas = tuple(float(masks[z].sum()) * sp.dx * sp.dy for z in range(volume.nz))
    total_ml = sum(areas) * sp.effective_slice_spacing / 1000.0
    return ThresholdReport(
        mean=mean,
        sd=sd,
        k=k,
        threshold=mean + k * sd,
        per_slice_area_mm2=areas,
        total_volume_ml=total_ml,
    )


def segment_volume_5sd(
    volume: MaskVolume,
    roi: RemoteRoi,
    k: float = 5.0,
    min_component_px: int = 1,
    sd_floor: float = 0.0,
) -> tuple[np.ndarray, ThresholdReport]:
    """Run the full protocol on a volume whose labels carry the myocardium.

    The remote statistics come from ``roi`` on its slice; the threshold is
    applied to every slice within the myocardium label set {remote, scar,
    mvo}. ``sd_floor`` guards the degenerate noiseless case where the remote
    SD is exactly zero and the plain threshold would mark all myocardium.
    """
    roi.validate_against(volume)
    mean, sd = remote_stats(volume.image[roi.slice_index], roi)
    sd = max(sd, sd_floor)
    myo = label_mask(volume, MYOCARDIUM_CLASSES)
    masks = np.zeros_like(myo)
    for z in range(volume.nz):
        m = threshold_5sd(volume.image[z], myo[z], mean, sd, k)
        masks[z] = filter_small_components(m, min_component_px)
    report = infarct_report(volume, masks, mean=mean, sd=sd, k=k)
    return masks, report


def report_to_json(report: ThresholdReport) -> str:
    return json.dumps(
        {
            "mean": report.mean,
            "sd": report.sd,
            "k": report.k,
            "threshold": report.threshold,
            "per_slice_area_mm2": list(report.per_slice_area_mm2),
            "total_volume_ml": report.total_volume_ml,
        },
        indent=2,
        sort_keys=True,
    )


def report_to_csv(report: ThresholdReport) -> str:
    """CSV with one row per slice and a footer carrying the scalars."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["slice", "area_mm2"])
    for z, area in enumerate(report.per_slice_area_mm2):
        w.writerow([z, repr(area)])
    w.writerow(["mean", repr(report.mean)])
    w.writerow(["sd", repr(report.sd)])
    w.writerow(["threshold", repr(report.threshold)])
    w.writerow(["total_ml", repr(report.total_volume_ml)])
    return buf.getvalue()
