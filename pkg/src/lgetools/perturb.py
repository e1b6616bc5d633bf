"""Seeded probabilistic corruption of 2D label masks and slice intensities.

Five error generators: class deletion on a single slice, whole-slice
nullification, false-scar insertion (85th-percentile largest component),
false-MVO insertion around a random scar pixel, and widened intensity
transforms. Applications are Bernoulli draws per volume in a fixed order,
so the output is a deterministic function of (volume, config). Every
application is logged and the log replays bit-exactly.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Literal, Optional

import numpy as np

from .errors import ValidationError
from .volume import MYOCARDIUM_CLASSES, ClassId, MaskVolume

DRAW_ORDER = ("delete_class", "nullify", "false_scar", "false_mvo", "intensity")

_NEW_LABEL = {
    "delete_class": int(ClassId.REMOTE_MYOCARDIUM),
    "nullify": int(ClassId.BACKGROUND),
    "false_scar": int(ClassId.SCAR),
    "false_mvo": int(ClassId.MVO),
}


def connected_components(binary: np.ndarray, connectivity: int = 8) -> tuple[np.ndarray, list[int]]:
    """Two-pass connected-component labeling of a 2D binary mask.

    Returns (labels, sizes): labels is int32 with 0 for background and
    component ids 1..n assigned in scan order of first occurrence; sizes[i]
    is the pixel count of component i+1.
    """
    if connectivity not in (4, 8):
        raise ValidationError("connectivity must be 4 or 8")
    mask = np.asarray(binary).astype(bool)
    if mask.ndim != 2:
        raise ValidationError("connected_components expects a 2D mask")
    h, w = mask.shape
    labels = np.zeros((h, w), dtype=np.int32)
    parent: list[int] = [0]  # parent[i] for provisional labels, 1-based

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(a: int, b: int) -> None:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    next_label = 1
    for y in range(h):
        row = mask[y]
        for x in range(w):
            if not row[x]:
                continue
            neigh = []
            if x > 0 and mask[y, x - 1]:
                neigh.append(labels[y, x - 1])
            if y > 0:
                if mask[y - 1, x]:
                    neigh.append(labels[y - 1, x])
                if connectivity == 8:
                    if x > 0 and mask[y - 1, x - 1]:
                        neigh.append(labels[y - 1, x - 1])
                    if x + 1 < w and mask[y - 1, x + 1]:
                        neigh.append(labels[y - 1, x + 1])
            if not neigh:
                labels[y, x] = next_label
                parent.append(next_label)
                next_label += 1
            else:
                m = min(neigh)
                labels[y, x] = m
                for other in neigh:
                    union(m, other)

    # Second pass: resolve roots and renumber by first occurrence.
    remap: dict[int, int] = {}
    sizes: list[int] = []
    for y in range(h):
        for x in range(w):
            lbl = labels[y, x]
            if lbl == 0:
                continue
            root = find(lbl)
            if root not in remap:
                remap[root] = len(remap) + 1
                sizes.append(0)
            new = remap[root]
            labels[y, x] = new
            sizes[new - 1] += 1
    return labels, sizes


def percentile(values: Iterable[float], p: float) -> float:
    """Nearest-rank percentile: element at index ceil(p/100 * n) - 1, clamped."""
    data = sorted(float(v) for v in values)
    n = len(data)
    if n == 0:
        raise ValidationError("percentile of an empty collection")
    idx = math.ceil(p * n / 100.0) - 1
    return data[min(max(idx, 0), n - 1)]


@dataclass(frozen=True)
class PerturbationConfig:
    seed: int
    p_delete_class: float = 0.10
    p_nullify: float = 0.10
    p_false_scar: float = 0.10
    p_false_mvo: float = 0.02
    p_intensity: float = 0.10
    scar_percentile: float = 85.0
    mvo_neighbor_radius_px: int = 1
    gamma_range: tuple[float, float] = (0.5, 2.0)
    brightness_range: float = 0.3  # +/- fraction of the slice intensity span
    contrast_range: tuple[float, float] = (0.5, 1.5)
    lowres_factors: tuple[int, ...] = (2, 3, 4)
    nullify_whole_volume: bool = False

    def __post_init__(self):
        for name in ("p_delete_class", "p_nullify", "p_false_scar", "p_false_mvo", "p_intensity"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValidationError(f"{name} must be in [0, 1]")
        if not 0.0 < self.scar_percentile < 100.0:
            raise ValidationError("scar_percentile must be in (0, 100)")
        if self.mvo_neighbor_radius_px < 0:
            raise ValidationError("mvo_neighbor_radius_px must be >= 0")
        if any(f < 1 for f in self.lowres_factors):
            raise ValidationError("lowres factors must be >= 1")


@dataclass(frozen=True)
class PerturbationEvent:
    kind: str  # one of DRAW_ORDER
    slice_index: int
    affected_class: str  # "scar" | "mvo" | "both" | "all" | "none"
    pixels: tuple[tuple[int, int], ...]  # (x, y) whose label changed
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "slice_index": self.slice_index,
            "affected_class": self.affected_class,
            "pixels": [list(p) for p in self.pixels],
            "params": self.params,
        }

    @staticmethod
    def from_dict(d: dict) -> "PerturbationEvent":
        return PerturbationEvent(
            kind=d["kind"],
            slice_index=int(d["slice_index"]),
            affected_class=d["affected_class"],
            pixels=tuple((int(x), int(y)) for x, y in d["pixels"]),
            params=dict(d.get("params", {})),
        )


@dataclass(frozen=True)
class PerturbationLog:
    events: tuple[PerturbationEvent, ...]

    def to_json(self) -> str:
        return json.dumps([e.to_dict() for e in self.events], indent=2)

    @staticmethod
    def from_json(text: str) -> "PerturbationLog":
        return PerturbationLog(tuple(PerturbationEvent.from_dict(d) for d in json.loads(text)))

    def replay(self, volume: MaskVolume) -> MaskVolume:
        """Re-apply the logged events to ``volume``; reproduces the output exactly."""
        image = volume.image.copy()
        labels = volume.labels.copy()
        for ev in self.events:
            if ev.kind == "intensity":
                image[ev.slice_index] = intensity_transform(
                    image[ev.slice_index], ev.params["transform"], ev.params["amount"]
                ).astype(np.float32)
            else:
                new = _NEW_LABEL[ev.kind]
                for x, y in ev.pixels:
                    labels[ev.slice_index, y, x] = new
        return volume.with_arrays(image=image, labels=labels)


def _changed_pixels(before: np.ndarray, after: np.ndarray) -> tuple[tuple[int, int], ...]:
    ys, xs = np.nonzero(before != after)
    return tuple((int(x), int(y)) for x, y in zip(xs, ys))


def delete_class_slice(
    labels: np.ndarray, which: Literal["scar", "mvo", "both"], slice_index: int
) -> tuple[np.ndarray, tuple[tuple[int, int], ...]]:
    """Relabel scar and/or MVO on one slice to remote myocardium."""
    if which not in ("scar", "mvo", "both"):
        raise ValidationError(f"unknown class selector {which!r}")
    out = np.asarray(labels).copy()
    if not 0 <= slice_index < out.shape[0]:
        raise ValidationError("slice index out of range")
    targets = {"scar": [ClassId.SCAR], "mvo": [ClassId.MVO], "both": [ClassId.SCAR, ClassId.MVO]}[which]
    sl = out[slice_index]
    hit = np.isin(sl, [int(t) for t in targets])
    before = sl.copy()
    sl[hit] = ClassId.REMOTE_MYOCARDIUM
    return out, _changed_pixels(before, sl)


def nullify_mask(labels: np.ndarray, slice_index: int) -> tuple[np.ndarray, tuple[tuple[int, int], ...]]:
    """Set every label on one slice to background."""
    out = np.asarray(labels).copy()
    if not 0 <= slice_index < out.shape[0]:
        raise ValidationError("slice index out of range")
    before = out[slice_index].copy()
    out[slice_index] = ClassId.BACKGROUND
    return out, _changed_pixels(before, out[slice_index])


def add_false_scar(
    image_slice: np.ndarray, labels_slice: np.ndarray, percentile_p: float = 85.0
) -> tuple[np.ndarray, tuple[tuple[int, int], ...]]:
    """Mark the brightest myocardial blob as scar.

    Threshold at the nearest-rank ``percentile_p`` of myocardial intensities,
    take the largest 8-connected candidate component (scan-order tie-break),
    and relabel it scar. The threshold is an attained value, so the
    candidate set is never empty.
    """
    img = np.asarray(image_slice, dtype=np.float64)
    out = np.asarray(labels_slice).copy()
    myo = np.isin(out, [int(c) for c in MYOCARDIUM_CLASSES])
    if not myo.any():
        raise ValidationError("slice has no myocardium")
    t = percentile(img[myo], percentile_p)
    candidates = myo & (img >= t)
    comp, sizes = connected_components(candidates, connectivity=8)
    largest = int(np.argmax(sizes)) + 1  # argmax returns the first (lowest) max
    blob = comp == largest
    before = out.copy()
    out[blob] = ClassId.SCAR
    return out, _changed_pixels(before, out)


def add_false_mvo(
    labels_slice: np.ndarray, rng: np.random.Generator, radius_px: int = 1
) -> tuple[np.ndarray, tuple[tuple[int, int], ...]]:
    """Relabel a random scar pixel and its scar neighbors (Chebyshev ball) to MVO."""
    out = np.asarray(labels_slice).copy()
    ys, xs = np.nonzero(out == ClassId.SCAR)
    if xs.size == 0:
        return out, ()
    pick = int(rng.integers(xs.size))
    px, py = int(xs[pick]), int(ys[pick])
    h, w = out.shape
    before = out.copy()
    y0, y1 = max(py - radius_px, 0), min(py + radius_px + 1, h)
    x0, x1 = max(px - radius_px, 0), min(px + radius_px + 1, w)
    window = out[y0:y1, x0:x1]
    window[window == ClassId.SCAR] = ClassId.MVO
    return out, _changed_pixels(before, out)


def intensity_transform(image_slice: np.ndarray, kind: str, amount: float) -> np.ndarray:
    """Apply one widened augmentation to a slice; labels are never touched.

    gamma: power curve on the slice rescaled to [0, 1];
    brightness: shift by amount * intensity span;
    contrast: scale around the slice mean;
    lowres: box-downsample by an integer factor, nearest-neighbor upsample.
    """
    img = np.asarray(image_slice, dtype=np.float64)
    if kind == "gamma":
        mn, mx = float(img.min()), float(img.max())
        if mx - mn <= 0:
            return img.copy()
        xn = (img - mn) / (mx - mn)
        return np.power(xn, amount) * (mx - mn) + mn
    if kind == "brightness":
        mn, mx = float(img.min()), float(img.max())
        if mx - mn <= 0:
            return img.copy()
        return img + amount * (mx - mn)
    if kind == "contrast":
        mean = float(img.mean())
        return mean + amount * (img - mean)
    if kind == "lowres":
        f = int(amount)
        if f < 1:
            raise ValidationError("lowres factor must be >= 1")
        if f == 1:
            return img.copy()
        h, w = img.shape
        out = np.empty_like(img)
        for by in range(0, h, f):
            for bx in range(0, w, f):
                block = img[by : by + f, bx : bx + f]
                out[by : by + f, bx : bx + f] = block.mean()
        return out
    raise ValidationError(f"unknown intensity transform {kind!r}")


_INTENSITY_KINDS = ("gamma", "brightness", "contrast", "lowres")


def apply_perturbations(volume: MaskVolume, config: PerturbationConfig) -> tuple[MaskVolume, PerturbationLog]:
    """One Bernoulli draw per perturbation kind, in a fixed order.

    An applied kind targets one uniformly chosen slice. Draws consume the
    seeded generator in a fixed order, so equal (volume, config) pairs give
    equal outputs and logs.
    """
    rng = np.random.default_rng(config.seed)
    nz = volume.nz
    image = volume.image.copy()
    labels = volume.labels.copy()
    events: list[PerturbationEvent] = []

    probs = {
        "delete_class": config.p_delete_class,
        "nullify": config.p_nullify,
        "false_scar": config.p_false_scar,
        "false_mvo": config.p_false_mvo,
        "intensity": config.p_intensity,
    }

    for kind in DRAW_ORDER:
        if rng.random() >= probs[kind]:
            continue
        z = int(rng.integers(nz))
        if kind == "delete_class":
            which = ("scar", "mvo", "both")[int(rng.integers(3))]
            labels, pixels = delete_class_slice(labels, which, z)
            events.append(PerturbationEvent(kind, z, which, pixels))
        elif kind == "nullify":
            if config.nullify_whole_volume:
                for zz in range(nz):
                    labels, pixels = nullify_mask(labels, zz)
                    events.append(PerturbationEvent(kind, zz, "all", pixels, {"whole_volume": True}))
            else:
                labels, pixels = nullify_mask(labels, z)
                events.append(PerturbationEvent(kind, z, "all", pixels))
        elif kind == "false_scar":
            myo = np.isin(labels[z], [int(c) for c in MYOCARDIUM_CLASSES])
            if myo.any():
                new_slice, pixels = add_false_scar(image[z], labels[z], config.scar_percentile)
                labels[z] = new_slice
                events.append(PerturbationEvent(kind, z, "scar", pixels, {"percentile": config.scar_percentile}))
            else:
                events.append(PerturbationEvent(kind, z, "scar", (), {"no_myocardium": True}))
        elif kind == "false_mvo":
            new_slice, pixels = add_false_mvo(labels[z], rng, config.mvo_neighbor_radius_px)
            labels[z] = new_slice
            events.append(PerturbationEvent(kind, z, "mvo", pixels, {"radius_px": config.mvo_neighbor_radius_px}))
        else:  # intensity
            tkind = _INTENSITY_KINDS[int(rng.integers(len(_INTENSITY_KINDS)))]
            if tkind == "gamma":
                amount = float(rng.uniform(*config.gamma_range))
            elif tkind == "brightness":
                amount = float(rng.uniform(-config.brightness_range, config.brightness_range))
            elif tkind == "contrast":
                amount = float(rng.uniform(*config.contrast_range))
            else:
                amount = float(config.lowres_factors[int(rng.integers(len(config.lowres_factors)))])
            image[z] = intensity_transform(image[z], tkind, amount).astype(np.float32)
            events.append(PerturbationEvent(kind, z, "none", (), {"transform": tkind, "amount": amount}))

    out = volume.with_arrays(image=image, labels=labels)
    return out, PerturbationLog(tuple(events))
