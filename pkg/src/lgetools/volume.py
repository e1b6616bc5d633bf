"""Mask-volume data model, physical geometry, and the on-disk container format.

A volume is a co-registered pair of a float32 intensity stack and a uint8
label stack with physical pixel spacing. Slices are indexed base-to-apex.
Arrays are stored as numpy arrays with shape (nz, ny, nx) so that the raw
little-endian serialization is x-fastest, then y, then z.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import IntEnum
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import ValidationError, VolumeFormatError


class ClassId(IntEnum):
    BACKGROUND = 0
    BLOODPOOL = 1
    REMOTE_MYOCARDIUM = 2
    SCAR = 3
    MVO = 4


LABEL_NAMES = {
    ClassId.BACKGROUND: "background",
    ClassId.BLOODPOOL: "bloodpool",
    ClassId.REMOTE_MYOCARDIUM: "remote_myocardium",
    ClassId.SCAR: "scar",
    ClassId.MVO: "mvo",
}

# Derived label sets; never stored in a volume.
MYOCARDIUM_CLASSES = frozenset({ClassId.REMOTE_MYOCARDIUM, ClassId.SCAR, ClassId.MVO})
INFARCT_CLASSES = frozenset({ClassId.SCAR, ClassId.MVO})
LV_CLASSES = frozenset({ClassId.BLOODPOOL, ClassId.REMOTE_MYOCARDIUM, ClassId.SCAR, ClassId.MVO})

_VALID_CODES = np.array([c.value for c in ClassId], dtype=np.uint8)


@dataclass(frozen=True)
class Spacing:
    """Physical pixel geometry in millimetres."""

    dx: float
    dy: float
    slice_thickness: float
    interslice_gap: float

    def __post_init__(self):
        for name in ("dx", "dy", "slice_thickness", "interslice_gap"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"Spacing.{name} must be strictly positive")

    @property
    def effective_slice_spacing(self) -> float:
        """Slice thickness plus interslice gap, in mm."""
        return self.slice_thickness + self.interslice_gap

    @property
    def effective_voxel_volume_mm3(self) -> float:
        return self.dx * self.dy * self.effective_slice_spacing


@dataclass(frozen=True)
class MaskVolume:
    """Intensity stack + label stack with spacing and identifiers.

    ``image`` and ``labels`` have shape (nz, ny, nx); treat instances as
    immutable values (arrays are set non-writeable on construction).
    """

    image: np.ndarray
    labels: np.ndarray
    spacing: Spacing
    patient_id: str = ""
    series_id: str = ""

    def __post_init__(self):
        image = np.asarray(self.image, dtype=np.float32)
        labels = np.asarray(self.labels, dtype=np.uint8)
        if image.ndim != 3 or labels.ndim != 3:
            raise ValidationError("image and labels must be 3D (nz, ny, nx)")
        if image.shape != labels.shape:
            raise ValidationError(
                f"image shape {image.shape} != labels shape {labels.shape}"
            )
        if image.shape[0] < 1:
            raise ValidationError("volume needs at least one slice")
        bad = ~np.isin(labels, _VALID_CODES)
        if bad.any():
            z, y, x = (int(i[0]) for i in np.nonzero(bad))
            raise ValidationError(
                f"invalid label code {int(labels[z, y, x])} at voxel (x={x}, y={y}, z={z})"
            )
        image = image.copy()
        labels = labels.copy()
        image.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "image", image)
        object.__setattr__(self, "labels", labels)

    @property
    def dims(self) -> tuple[int, int, int]:
        """(nx, ny, nz)."""
        nz, ny, nx = self.image.shape
        return nx, ny, nz

    @property
    def nz(self) -> int:
        return self.image.shape[0]

    def with_arrays(self, image: np.ndarray | None = None, labels: np.ndarray | None = None) -> "MaskVolume":
        """Copy of this volume with replaced image and/or labels."""
        return replace(
            self,
            image=self.image if image is None else image,
            labels=self.labels if labels is None else labels,
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, MaskVolume):
            return NotImplemented
        return (
            self.spacing == other.spacing
            and self.patient_id == other.patient_id
            and self.series_id == other.series_id
            and self.image.shape == other.image.shape
            and np.array_equal(self.image, other.image)
            and np.array_equal(self.labels, other.labels)
        )


def label_mask(volume_or_labels, classes: Iterable[int]) -> np.ndarray:
    """Boolean mask of voxels whose label is in ``classes``."""
    labels = volume_or_labels.labels if isinstance(volume_or_labels, MaskVolume) else np.asarray(volume_or_labels)
    codes = np.array(sorted({int(c) for c in classes}), dtype=np.uint8)
    if codes.size == 0:
        raise ValidationError("classes must be non-empty")
    return np.isin(labels, codes)


def class_volume_ml(volume: MaskVolume, classes: Iterable[int]) -> float:
    """Volume in ml of all voxels labeled with any class in ``classes``.

    Uses the effective slice spacing (thickness + gap), so a voxel counts
    dx*dy*(thickness+gap) cubic millimetres.
    """
    count = int(label_mask(volume, classes).sum())
    return count * volume.spacing.effective_voxel_volume_mm3 / 1000.0


def _meta_dict(volume: MaskVolume) -> dict:
    nx, ny, nz = volume.dims
    return {
        "dims": [nx, ny, nz],
        "spacing": {
            "dx": volume.spacing.dx,
            "dy": volume.spacing.dy,
            "slice_thickness": volume.spacing.slice_thickness,
            "interslice_gap": volume.spacing.interslice_gap,
        },
        "patient_id": volume.patient_id,
        "series_id": volume.series_id,
        "labels": {str(int(c)): LABEL_NAMES[c] for c in ClassId},
    }


def save_volume(volume: MaskVolume, path: str | Path) -> None:
    """Write ``meta.json`` + ``image.raw`` + ``labels.raw`` into directory ``path``.

    Output is byte-deterministic for equal inputs: JSON keys are sorted and
    raw payloads are little-endian, x-fastest.
    """
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    meta = json.dumps(_meta_dict(volume), sort_keys=True, indent=2) + "\n"
    (path / "meta.json").write_text(meta, encoding="utf-8")
    (path / "image.raw").write_bytes(np.ascontiguousarray(volume.image, dtype="<f4").tobytes())
    (path / "labels.raw").write_bytes(np.ascontiguousarray(volume.labels, dtype=np.uint8).tobytes())


def load_volume(path: str | Path) -> MaskVolume:
    """Read a volume directory written by :func:`save_volume`."""
    path = Path(path)
    meta_path = path / "meta.json"
    image_path = path / "image.raw"
    labels_path = path / "labels.raw"
    for p in (meta_path, image_path, labels_path):
        if not p.is_file():
            raise FileNotFoundError(f"missing volume file: {p}")
    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise VolumeFormatError(f"unparseable meta.json: {exc}") from exc
    try:
        nx, ny, nz = (int(v) for v in meta["dims"])
        sp = meta["spacing"]
        spacing = Spacing(
            dx=float(sp["dx"]),
            dy=float(sp["dy"]),
            slice_thickness=float(sp["slice_thickness"]),
            interslice_gap=float(sp["interslice_gap"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise VolumeFormatError(f"malformed meta.json: {exc}") from exc
    n = nx * ny * nz
    image_bytes = image_path.read_bytes()
    labels_bytes = labels_path.read_bytes()
    if len(image_bytes) != 4 * n:
        raise VolumeFormatError(
            f"image.raw has {len(image_bytes)} bytes, expected {4 * n} for dims ({nx},{ny},{nz})"
        )
    if len(labels_bytes) != n:
        raise VolumeFormatError(
            f"labels.raw has {len(labels_bytes)} bytes, expected {n} for dims ({nx},{ny},{nz})"
        )
    image = np.frombuffer(image_bytes, dtype="<f4").reshape(nz, ny, nx)
    labels = np.frombuffer(labels_bytes, dtype=np.uint8).reshape(nz, ny, nx)
    bad = ~np.isin(labels, _VALID_CODES)
    if bad.any():
        z, y, x = (int(i[0]) for i in np.nonzero(bad))
        raise VolumeFormatError(
            f"invalid label code {int(labels[z, y, x])} at voxel (x={x}, y={y}, z={z})"
        )
    return MaskVolume(
        image=image,
        labels=labels,
        spacing=spacing,
        patient_id=str(meta.get("patient_id", "")),
        series_id=str(meta.get("series_id", "")),
    )
