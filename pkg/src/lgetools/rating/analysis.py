"""Unblinded aggregation of rating sessions.

All functions consume an immutable SessionData snapshot, apply supersession
(latest event per key), honor consensus overrides, and delegate every kappa
and chi-square to the stats module.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import UndefinedStatisticError, ValidationError
from ..metrics import Contingency
from ..stats import ConfusionMatrix, chi_square_uniform, cohen_kappa
from .model import (
    CONSENSUS_RATER,
    COARSE_MAP,
    MARKED_CATEGORIES,
    PRESENCE_CATEGORIES,
    ComparisonChoice,
    Method,
    RatingCategory,
    RatingEvent,
    TargetClass,
)
from .store import SessionData, latest_by_key

CATEGORY_ORDER = tuple(RatingCategory)
PREFERENCE_ORDER = ("prefer_manual", "equal", "prefer_automatic")
COARSE_ORDER = ("true_negative", "true_positive", "false_negative", "false_positive")


def comparison_eligible(rating_a: RatingCategory, rating_b: RatingCategory) -> bool:
    """A slice enters the comparison unless both methods correctly found nothing."""
    if rating_a is None or rating_b is None:
        raise ValidationError("both arms must be rated before comparison")
    return not (
        rating_a == RatingCategory.TRUE_NEGATIVE and rating_b == RatingCategory.TRUE_NEGATIVE
    )


def _latest_ratings(data: SessionData, target_class: TargetClass) -> dict[tuple, RatingEvent]:
    return latest_by_key(e for e in data.rating_events if e.target_class == target_class)


def _latest_comparisons(data: SessionData, target_class: TargetClass) -> dict[tuple, RatingEvent]:
    return latest_by_key(e for e in data.comparison_events if e.target_class == target_class)


def effective_ratings(
    data: SessionData, target_class: TargetClass
) -> dict[tuple[str, int, str], list[tuple[str, RatingCategory]]]:
    """Latest rating per rater for each (patient, slice, arm).

    A consensus event for a slot replaces every individual rater's entry.
    """
    latest = _latest_ratings(data, target_class)
    slots: dict[tuple[str, int, str], list[tuple[str, RatingCategory]]] = {}
    consensus: set[tuple[str, int, str]] = set()
    for (rater, pid, sl, _cls, arm), ev in sorted(latest.items(), key=lambda kv: kv[1].seq):
        slot = (pid, sl, arm)
        if rater == CONSENSUS_RATER:
            slots[slot] = [(CONSENSUS_RATER, ev.category)]
            consensus.add(slot)
        elif slot not in consensus:
            slots.setdefault(slot, []).append((rater, ev.category))
    return slots


def _rating_pair(
    latest: dict[tuple, RatingEvent], target_class: TargetClass, rater: str, pid: str, sl: int
) -> Optional[tuple[RatingCategory, RatingCategory]]:
    """This rater's latest (arm A, arm B) categories, consensus-aware."""
    pair = []
    for arm in ("A", "B"):
        ev = latest.get((CONSENSUS_RATER, pid, sl, target_class, arm)) or latest.get(
            (rater, pid, sl, target_class, arm)
        )
        if ev is None:
            return None
        pair.append(ev.category)
    return pair[0], pair[1]


@dataclass(frozen=True)
class MethodProportions:
    n: int
    detailed_counts: dict[str, int]
    coarse_counts: dict[str, int]
    detailed_fractions: dict[str, float]
    coarse_fractions: dict[str, float]


def aggregate_proportions(data: SessionData, target_class: TargetClass) -> dict[str, MethodProportions]:
    """Rating distribution per (unblinded) method over all rated slices."""
    out: dict[str, MethodProportions] = {}
    slots = effective_ratings(data, target_class)
    for method in Method:
        detailed: Counter = Counter()
        for (pid, _sl, arm), entries in slots.items():
            if data.assignments[pid].method_of(arm) != method:
                continue
            for _rater, cat in entries:
                detailed[cat.value] += 1
        n = sum(detailed.values())
        coarse: Counter = Counter()
        for cat, cnt in detailed.items():
            coarse[COARSE_MAP[RatingCategory(cat)]] += cnt
        out[method.value] = MethodProportions(
            n=n,
            detailed_counts={c.value: detailed.get(c.value, 0) for c in CATEGORY_ORDER},
            coarse_counts={c: coarse.get(c, 0) for c in COARSE_ORDER},
            detailed_fractions={
                c.value: (detailed.get(c.value, 0) / n if n else 0.0) for c in CATEGORY_ORDER
            },
            coarse_fractions={c: (coarse.get(c, 0) / n if n else 0.0) for c in COARSE_ORDER},
        )
    return out


@dataclass(frozen=True)
class PreferenceSummary:
    n_automatic: int
    n_manual: int
    n_equal: int
    frac_automatic: float
    frac_manual: float
    frac_equal: float
    chi2_p: Optional[float]  # None when no non-equal comparisons exist


def preference_summary(data: SessionData, target_class: TargetClass) -> PreferenceSummary:
    """Unblinded preference counts over eligible comparison verdicts."""
    latest = _latest_comparisons(data, target_class)
    latest_ratings = _latest_ratings(data, target_class)
    consensus_slots = {
        (pid, sl) for (rater, pid, sl, _c, _a) in latest if rater == CONSENSUS_RATER
    }
    n_auto = n_manual = n_equal = 0
    for (rater, pid, sl, _cls, _arm), ev in latest.items():
        if rater != CONSENSUS_RATER and (pid, sl) in consensus_slots:
            continue
        pair = _rating_pair(latest_ratings, target_class, rater, pid, sl)
        if pair is None or not comparison_eligible(*pair):
            continue
        choice = ev.choice
        if choice == ComparisonChoice.EQUAL:
            n_equal += 1
        else:
            method = data.assignments[pid].method_of(choice.value)
            if method == Method.AUTOMATIC:
                n_auto += 1
            else:
                n_manual += 1
    total = n_auto + n_manual + n_equal
    p = chi_square_uniform([n_auto, n_manual]).p if (n_auto + n_manual) > 0 else None
    return PreferenceSummary(
        n_automatic=n_auto,
        n_manual=n_manual,
        n_equal=n_equal,
        frac_automatic=n_auto / total if total else 0.0,
        frac_manual=n_manual / total if total else 0.0,
        frac_equal=n_equal / total if total else 0.0,
        chi2_p=p,
    )


@dataclass(frozen=True)
class AgreementResult:
    matrix: ConfusionMatrix
    kappa: float
    n: int


def rater_agreement(
    data: SessionData, target_class: TargetClass, kind: str = "categories"
) -> AgreementResult:
    """Between the first two raters of the roster, on the overlap subset only.

    kind="categories": 7x7 matrix of per-slice ratings, unweighted kappa.
    kind="comparison": ordered (prefer manual, equal, prefer automatic)
    after unblinding, linearly weighted kappa.
    """
    if kind not in ("categories", "comparison"):
        raise ValidationError(f"unknown agreement kind {kind!r}")
    if len(data.raters) < 2:
        raise ValidationError("agreement needs at least two raters")
    r1, r2 = data.raters[0], data.raters[1]

    if kind == "categories":
        labels = tuple(c.value for c in CATEGORY_ORDER)
        index = {c: i for i, c in enumerate(CATEGORY_ORDER)}
        latest = _latest_ratings(data, target_class)
        counts = np.zeros((len(labels), len(labels)), dtype=np.int64)
        n = 0
        for pid in data.overlap:
            for sl in range(data.n_slices[pid]):
                for arm in ("A", "B"):
                    e1 = latest.get((r1, pid, sl, target_class, arm))
                    e2 = latest.get((r2, pid, sl, target_class, arm))
                    if e1 is None or e2 is None:
                        continue
                    counts[index[e1.category], index[e2.category]] += 1
                    n += 1
        if n == 0:
            raise UndefinedStatisticError("no jointly rated overlap slices")
        matrix = ConfusionMatrix(counts=counts, labels=labels)
        return AgreementResult(matrix=matrix, kappa=cohen_kappa(matrix, "none"), n=n)

    latest = _latest_comparisons(data, target_class)
    index = {name: i for i, name in enumerate(PREFERENCE_ORDER)}
    counts = np.zeros((3, 3), dtype=np.int64)
    n = 0
    for pid in data.overlap:
        assignment = data.assignments[pid]
        for sl in range(data.n_slices[pid]):
            e1 = latest.get((r1, pid, sl, target_class, None))
            e2 = latest.get((r2, pid, sl, target_class, None))
            if e1 is None or e2 is None:
                continue

            def unblind(ev: RatingEvent) -> str:
                if ev.choice == ComparisonChoice.EQUAL:
                    return "equal"
                return (
                    "prefer_manual"
                    if assignment.method_of(ev.choice.value) == Method.MANUAL
                    else "prefer_automatic"
                )

            counts[index[unblind(e1)], index[unblind(e2)]] += 1
            n += 1
    if n == 0:
        raise UndefinedStatisticError("no jointly compared overlap slices")
    matrix = ConfusionMatrix(counts=counts, labels=PREFERENCE_ORDER)
    return AgreementResult(matrix=matrix, kappa=cohen_kappa(matrix, "linear"), n=n)


def patient_contingency_from_ratings(
    data: SessionData, target_class: TargetClass
) -> dict[str, Contingency]:
    """Per-patient detection table per method, derived from slice ratings.

    A patient is ground-truth positive for a method iff any of its slice
    ratings implies the finding is present; predicted positive iff any
    rating implies the method marked something. Every slice of every
    patient must be rated for the method's arm.
    """
    slots = effective_ratings(data, target_class)
    tables: dict[str, Contingency] = {}
    for method in Method:
        tp = fp = fn = tn = 0
        for pid in data.case_order:
            arm = data.assignments[pid].arm_of(method)
            cats: list[RatingCategory] = []
            for sl in range(data.n_slices[pid]):
                entries = slots.get((pid, sl, arm))
                if not entries:
                    raise ValidationError(
                        f"patient {pid!r} slice {sl} not rated for the {method.value} method"
                    )
                cats.extend(cat for _r, cat in entries)
            gt_pos = any(c in PRESENCE_CATEGORIES for c in cats)
            pred_pos = any(c in MARKED_CATEGORIES for c in cats)
            if gt_pos and pred_pos:
                tp += 1
            elif not gt_pos and pred_pos:
                fp += 1
            elif gt_pos and not pred_pos:
                fn += 1
            else:
                tn += 1
        tables[method.value] = Contingency(tp=tp, fp=fp, fn=fn, tn=tn)
    return tables
