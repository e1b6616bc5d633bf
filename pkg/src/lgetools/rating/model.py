"""Domain model of the blinded rating experiment."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from ..errors import ValidationError

CONSENSUS_RATER = "consensus"


class RatingCategory(str, Enum):
    OPTIMAL = "optimal"
    TOO_BIG = "too_big"
    TOO_SMALL = "too_small"
    WRONG_ORGAN = "wrong_organ"
    FALSE_NEGATIVE = "false_negative"
    FALSE_POSITIVE = "false_positive"
    TRUE_NEGATIVE = "true_negative"


class ComparisonChoice(str, Enum):
    A = "A"
    B = "B"
    EQUAL = "equal"


class Method(str, Enum):
    MANUAL = "manual"
    AUTOMATIC = "automatic"


class TargetClass(str, Enum):
    SCAR = "scar"
    MVO = "mvo"


# Coarse 4-way view of the detailed categories (wrong_organ counts as a
# wrong marking, hence false positive).
COARSE_MAP = {
    RatingCategory.OPTIMAL: "true_positive",
    RatingCategory.TOO_BIG: "true_positive",
    RatingCategory.TOO_SMALL: "true_positive",
    RatingCategory.WRONG_ORGAN: "false_positive",
    RatingCategory.FALSE_NEGATIVE: "false_negative",
    RatingCategory.FALSE_POSITIVE: "false_positive",
    RatingCategory.TRUE_NEGATIVE: "true_negative",
}

# Ratings implying the finding is actually present / that the method marked something.
PRESENCE_CATEGORIES = frozenset(
    {RatingCategory.OPTIMAL, RatingCategory.TOO_BIG, RatingCategory.TOO_SMALL, RatingCategory.FALSE_NEGATIVE}
)
MARKED_CATEGORIES = frozenset(
    {
        RatingCategory.OPTIMAL,
        RatingCategory.TOO_BIG,
        RatingCategory.TOO_SMALL,
        RatingCategory.FALSE_POSITIVE,
        RatingCategory.WRONG_ORGAN,
    }
)


@dataclass(frozen=True)
class CaseEntry:
    patient_id: str
    manual_path: str
    auto_path: str


@dataclass(frozen=True)
class CaseAssignment:
    """Which method hides behind arm A for one case; never sent to raters."""

    patient_id: str
    method_of_a: Method

    @property
    def method_of_b(self) -> Method:
        return Method.MANUAL if self.method_of_a == Method.AUTOMATIC else Method.AUTOMATIC

    def arm_of(self, method: Method) -> str:
        return "A" if self.method_of_a == method else "B"

    def method_of(self, arm: str) -> Method:
        if arm == "A":
            return self.method_of_a
        if arm == "B":
            return self.method_of_b
        raise ValidationError(f"unknown arm {arm!r}")


def assign_case(seed: int, patient_id: str) -> CaseAssignment:
    """Deterministic blinding assignment from (session seed, patient id)."""
    digest = hashlib.sha256(f"{seed}:{patient_id}".encode("utf-8")).digest()
    method_of_a = Method.MANUAL if digest[0] % 2 == 0 else Method.AUTOMATIC
    return CaseAssignment(patient_id=patient_id, method_of_a=method_of_a)


@dataclass(frozen=True)
class SessionPlan:
    session_id: str
    cases: tuple[CaseEntry, ...]
    raters: tuple[str, ...]
    overlap: frozenset[str]  # patient ids rated by every rater
    partition: dict[str, tuple[str, ...]]  # rater -> exclusive patient ids
    n_slices: dict[str, int]
    seed: int

    def assignment(self, patient_id: str) -> CaseAssignment:
        return assign_case(self.seed, patient_id)

    def patients_of(self, rater: str) -> list[str]:
        """Patients assigned to a rater, in session case order."""
        if rater == CONSENSUS_RATER:
            allowed = {c.patient_id for c in self.cases}
        elif rater in self.partition:
            allowed = set(self.overlap) | set(self.partition[rater])
        else:
            raise ValidationError(f"unknown rater {rater!r}")
        return [c.patient_id for c in self.cases if c.patient_id in allowed]

    def tasks_of(self, rater: str) -> list[tuple[str, int]]:
        """(patient_id, slice) pairs in task order: plan order, slices ascending."""
        out = []
        for pid in self.patients_of(rater):
            out.extend((pid, z) for z in range(self.n_slices[pid]))
        return out


@dataclass(frozen=True)
class RatingEvent:
    """One immutable event in the session log.

    ``arm`` is set for category ratings and None for comparisons; ``payload``
    is the category or choice value. Later events supersede earlier ones for
    the same (rater, patient, slice, class, arm) key; history keeps all.
    """

    seq: int
    timestamp: str
    session_id: str
    rater_id: str
    patient_id: str
    slice_index: int
    target_class: TargetClass
    arm: Optional[str]
    payload: str

    @property
    def is_comparison(self) -> bool:
        return self.arm is None

    @property
    def category(self) -> RatingCategory:
        return RatingCategory(self.payload)

    @property
    def choice(self) -> ComparisonChoice:
        return ComparisonChoice(self.payload)

    def key(self) -> tuple:
        return (self.rater_id, self.patient_id, self.slice_index, self.target_class, self.arm)

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "timestamp": self.timestamp,
            "session_id": self.session_id,
            "rater_id": self.rater_id,
            "patient_id": self.patient_id,
            "slice_index": self.slice_index,
            "target_class": self.target_class.value,
            "arm": self.arm,
            "payload": self.payload,
        }

    @staticmethod
    def from_dict(d: dict) -> "RatingEvent":
        return RatingEvent(
            seq=int(d["seq"]),
            timestamp=str(d["timestamp"]),
            session_id=str(d["session_id"]),
            rater_id=str(d["rater_id"]),
            patient_id=str(d["patient_id"]),
            slice_index=int(d["slice_index"]),
            target_class=TargetClass(d["target_class"]),
            arm=d.get("arm"),
            payload=str(d["payload"]),
        )
