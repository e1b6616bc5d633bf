"""Segmentation accuracy metrics, per-patient detection tables, and exact CIs.

Dice uses the both-empty := 1 convention. Volumes are gap-inclusive.
Confidence intervals are Clopper-Pearson exact; with zero negatives the
specificity is reported as undefined (rendered "-").
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.stats import beta as _beta

from .errors import UndefinedStatisticError, ValidationError
from .volume import INFARCT_CLASSES, MYOCARDIUM_CLASSES, MaskVolume, Spacing, label_mask


def dice(pred: np.ndarray, truth: np.ndarray) -> float:
    """2|P∩G| / (|P|+|G|); defined as 1.0 when both masks are empty."""
    p = np.asarray(pred).astype(bool)
    g = np.asarray(truth).astype(bool)
    if p.shape != g.shape:
        raise ValidationError("dice inputs must share dims")
    denom = int(p.sum()) + int(g.sum())
    if denom == 0:
        return 1.0
    return 2.0 * int((p & g).sum()) / denom


def dice_per_slice(pred: np.ndarray, truth: np.ndarray) -> list[float]:
    """Slice-wise Dice over 3D masks (the default reporting is per volume)."""
    p = np.asarray(pred).astype(bool)
    g = np.asarray(truth).astype(bool)
    if p.shape != g.shape:
        raise ValidationError("dice inputs must share dims")
    if p.ndim != 3:
        raise ValidationError("dice_per_slice expects 3D masks")
    return [dice(p[z], g[z]) for z in range(p.shape[0])]


def avd(pred: np.ndarray, truth: np.ndarray, spacing: Spacing) -> float:
    """Absolute volume difference in ml, gap-inclusive voxel volume."""
    p = np.asarray(pred).astype(bool)
    g = np.asarray(truth).astype(bool)
    if p.shape != g.shape:
        raise ValidationError("avd inputs must share dims")
    return abs(int(p.sum()) - int(g.sum())) * spacing.effective_voxel_volume_mm3 / 1000.0


def avdr(avd_ml: float, v_myo_ml: float) -> float:
    """Volume difference as a fraction of the myocardial volume."""
    if v_myo_ml <= 0:
        raise UndefinedStatisticError("AVDR needs a positive myocardium volume")
    return avd_ml / v_myo_ml


def infarct_fraction(
    volume: MaskVolume,
    infarct_classes: Iterable[int] = INFARCT_CLASSES,
    myo_classes: Iterable[int] = MYOCARDIUM_CLASSES,
) -> float:
    """Infarct voxels as a percentage of all myocardial voxels."""
    n_myo = int(label_mask(volume, myo_classes).sum())
    if n_myo == 0:
        raise UndefinedStatisticError("volume has no myocardium voxels")
    n_inf = int(label_mask(volume, infarct_classes).sum())
    return 100.0 * n_inf / n_myo


def patient_detection(volume: MaskVolume, classes: Iterable[int]) -> bool:
    """True iff any voxel carries one of the given labels."""
    return bool(label_mask(volume, classes).any())


@dataclass(frozen=True)
class Contingency:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValidationError("contingency counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def contingency(predictions: Sequence[bool], truths: Sequence[bool]) -> Contingency:
    if len(predictions) != len(truths):
        raise ValidationError("predictions and truths must have equal length")
    tp = fp = fn = tn = 0
    for p, t in zip(predictions, truths):
        if p and t:
            tp += 1
        elif p and not t:
            fp += 1
        elif not p and t:
            fn += 1
        else:
            tn += 1
    return Contingency(tp=tp, fp=fp, fn=fn, tn=tn)


@dataclass(frozen=True)
class RateWithCI:
    rate: float
    ci_low: float
    ci_high: float


def clopper_pearson(k: int, n: int, level: float = 0.95) -> tuple[float, float]:
    """Exact binomial CI from the beta distribution tails."""
    if not 0 <= k <= n or n <= 0:
        raise ValidationError("need 0 <= k <= n, n > 0")
    if not 0 < level < 1:
        raise ValidationError("level must be in (0, 1)")
    alpha = 1.0 - level
    low = 0.0 if k == 0 else float(_beta.ppf(alpha / 2.0, k, n - k + 1))
    high = 1.0 if k == n else float(_beta.ppf(1.0 - alpha / 2.0, k + 1, n - k))
    return low, high


def sens_spec_ci(
    table: Contingency, level: float = 0.95
) -> tuple[Optional[RateWithCI], Optional[RateWithCI]]:
    """(sensitivity, specificity), each with its exact CI or None if undefined."""

    def rate(k: int, n: int) -> Optional[RateWithCI]:
        if n == 0:
            return None
        low, high = clopper_pearson(k, n, level)
        return RateWithCI(rate=k / n, ci_low=low, ci_high=high)

    return rate(table.tp, table.tp + table.fn), rate(table.tn, table.tn + table.fp)


def format_rate(r: Optional[RateWithCI]) -> str:
    """One-decimal percent rendering; undefined rates render as '-'."""
    if r is None:
        return "-"
    return f"{100 * r.rate:.1f}% [{100 * r.ci_low:.1f}, {100 * r.ci_high:.1f}]"


@dataclass(frozen=True)
class MetricRow:
    patient_id: str
    target: str  # class-set name, e.g. "infarct" or "mvo"
    dice: float
    avd_ml: float
    avdr: float
    infarct_pct_pred: float
    infarct_pct_gt: float


def evaluate_pair(
    pred: MaskVolume,
    truth: MaskVolume,
    target_classes: Iterable[int],
    target_name: str,
    myo_classes: Iterable[int] = MYOCARDIUM_CLASSES,
    infarct_classes: Iterable[int] = INFARCT_CLASSES,
) -> MetricRow:
    """All per-examination metrics for one class set, 3D over the volume.

    The myocardium volume for AVDR comes from the ground-truth labels.
    """
    if pred.dims != truth.dims:
        raise ValidationError("prediction and ground truth dims differ")
    p = label_mask(pred, target_classes)
    g = label_mask(truth, target_classes)
    a = avd(p, g, truth.spacing)
    v_myo = int(label_mask(truth, myo_classes).sum()) * truth.spacing.effective_voxel_volume_mm3 / 1000.0
    return MetricRow(
        patient_id=truth.patient_id,
        target=target_name,
        dice=dice(p, g),
        avd_ml=a,
        avdr=avdr(a, v_myo),
        infarct_pct_pred=infarct_fraction(pred, infarct_classes, myo_classes),
        infarct_pct_gt=infarct_fraction(truth, infarct_classes, myo_classes),
    )
