"""Synthetic LV phantom with analytically countable ground truth.

The phantom is an annulus (myocardium) around a blood-pool disk, with an
optional scar wedge and an MVO core nested inside the wedge. Region
membership is decided at pixel centers, so the ground-truth voxel counts
are exact by construction.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ValidationError
from .volume import ClassId, MaskVolume, Spacing

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class AngleRange:
    """Half-open angular interval [start, end) on the circle, radians.

    start == end denotes the empty range; start > end wraps through 0.
    """

    start: float
    end: float

    @property
    def sweep(self) -> float:
        if self.start == self.end:
            return 0.0
        return (self.end - self.start) % TWO_PI or TWO_PI

    def contains(self, theta: np.ndarray) -> np.ndarray:
        if self.sweep == 0.0:
            return np.zeros_like(theta, dtype=bool)
        rel = (theta - self.start) % TWO_PI
        return rel < self.sweep


@dataclass(frozen=True)
class ScarWedge:
    angles: AngleRange
    slice_range: tuple[int, int]  # half-open [z0, z1)


@dataclass(frozen=True)
class MvoCore:
    angles: AngleRange
    radial_band: tuple[float, float]  # (r_inner, r_outer) in px
    slice_range: tuple[int, int]


@dataclass(frozen=True)
class PhantomSpec:
    dims: tuple[int, int, int]  # (nx, ny, nz)
    spacing: Spacing
    inner_radius_px: float
    outer_radius_px: float
    center_px: tuple[float, float]
    scar_wedge: ScarWedge
    mvo_core: Optional[MvoCore] = None
    intensities: tuple[float, float, float, float] = (500.0, 100.0, 300.0, 50.0)  # blood, remote, scar, mvo
    noise_sd: float = 0.0
    seed: int = 0

    def __post_init__(self):
        nx, ny, nz = self.dims
        if nx < 1 or ny < 1 or nz < 1:
            raise ValidationError("dims must be positive")
        if not (0 < self.inner_radius_px < self.outer_radius_px):
            raise ValidationError("need 0 < inner_radius_px < outer_radius_px")
        if self.noise_sd < 0:
            raise ValidationError("noise_sd must be >= 0")


@dataclass(frozen=True)
class GroundTruth:
    """Per-class voxel counts and volumes of a generated phantom."""

    counts: dict[ClassId, int]
    volumes_ml: dict[ClassId, float]


def _slice_set(rng: tuple[int, int], nz: int) -> set[int]:
    z0, z1 = rng
    return {z for z in range(max(z0, 0), min(z1, nz))}


def make_phantom(spec: PhantomSpec) -> tuple[MaskVolume, GroundTruth]:
    """Generate the phantom volume and its exact ground-truth summary."""
    nx, ny, nz = spec.dims
    cx, cy = spec.center_px
    xs = np.arange(nx, dtype=np.float64)
    ys = np.arange(ny, dtype=np.float64)
    gx, gy = np.meshgrid(xs, ys)  # shape (ny, nx)
    r = np.hypot(gx - cx, gy - cy)
    theta = np.arctan2(gy - cy, gx - cx) % TWO_PI

    in_disk = r < spec.inner_radius_px
    in_annulus = (r >= spec.inner_radius_px) & (r < spec.outer_radius_px)
    in_wedge_angle = spec.scar_wedge.angles.contains(theta)
    wedge_slices = _slice_set(spec.scar_wedge.slice_range, nz)

    mvo = spec.mvo_core
    if mvo is not None:
        r0, r1 = mvo.radial_band
        in_mvo_2d = mvo.angles.contains(theta) & (r >= r0) & (r < r1)
        mvo_slices = _slice_set(mvo.slice_range, nz)
    else:
        in_mvo_2d = np.zeros_like(in_disk)
        mvo_slices = set()

    blood_i, remote_i, scar_i, mvo_i = spec.intensities
    labels = np.zeros((nz, ny, nx), dtype=np.uint8)
    base = np.zeros((nz, ny, nx), dtype=np.float64)

    for z in range(nz):
        sl = np.zeros((ny, nx), dtype=np.uint8)
        sl[in_disk] = ClassId.BLOODPOOL
        sl[in_annulus] = ClassId.REMOTE_MYOCARDIUM
        wedge_here = in_annulus & in_wedge_angle if z in wedge_slices else np.zeros_like(in_disk)
        sl[wedge_here] = ClassId.SCAR
        mvo_here = in_annulus & in_mvo_2d if z in mvo_slices else np.zeros_like(in_disk)
        if mvo_here.any():
            if (mvo_here & ~wedge_here).any():
                raise ValidationError("mvo_core not inside scar wedge")
            if wedge_here.any() and not (wedge_here & ~mvo_here).any():
                raise ValidationError("mvo_core must be a strict subset of the scar wedge")
            sl[mvo_here] = ClassId.MVO
        labels[z] = sl
        b = np.zeros((ny, nx), dtype=np.float64)
        b[sl == ClassId.BLOODPOOL] = blood_i
        b[sl == ClassId.REMOTE_MYOCARDIUM] = remote_i
        b[sl == ClassId.SCAR] = scar_i
        b[sl == ClassId.MVO] = mvo_i
        base[z] = b

    if spec.noise_sd > 0:
        rng = np.random.default_rng(spec.seed)
        base = base + rng.normal(0.0, spec.noise_sd, size=base.shape)

    volume = MaskVolume(
        image=base.astype(np.float32),
        labels=labels,
        spacing=spec.spacing,
        patient_id="phantom",
        series_id=f"seed-{spec.seed}",
    )
    vv = spec.spacing.effective_voxel_volume_mm3
    counts = {c: int((labels == c).sum()) for c in ClassId}
    volumes = {c: counts[c] * vv / 1000.0 for c in ClassId}
    return volume, GroundTruth(counts=counts, volumes_ml=volumes)
