"""Session persistence: plan snapshot + append-only JSONL event log.

Every mutation goes through a per-session lock so sequence numbers are a
total order; reads work on immutable snapshots.
"""
from __future__ import annotations

import csv
import datetime as _dt
import io
import json
import threading
import uuid
import zipfile
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from ..errors import ValidationError
from ..volume import load_volume
from .model import (
    CONSENSUS_RATER,
    CaseAssignment,
    CaseEntry,
    ComparisonChoice,
    Method,
    RatingCategory,
    RatingEvent,
    SessionPlan,
    TargetClass,
    assign_case,
)

RATINGS_COLUMNS = ["session_id", "rater_id", "patient_id", "slice", "class", "arm", "category", "seq", "timestamp"]
COMPARISONS_COLUMNS = ["session_id", "rater_id", "patient_id", "slice", "class", "choice", "seq", "timestamp"]
ASSIGNMENTS_COLUMNS = ["session_id", "patient_id", "method_of_A", "method_of_B", "n_slices", "in_overlap"]
SESSION_COLUMNS = ["session_id", "seed", "raters", "overlap_n"]


@dataclass(frozen=True)
class SessionData:
    """Immutable snapshot used by every aggregation routine."""

    session_id: str
    raters: tuple[str, ...]
    case_order: tuple[str, ...]
    n_slices: dict[str, int]
    overlap: frozenset[str]
    assignments: dict[str, CaseAssignment]
    rating_events: tuple[RatingEvent, ...]
    comparison_events: tuple[RatingEvent, ...]
    seed: Optional[int] = None


def make_plan(
    cases: Iterable[CaseEntry],
    raters: Iterable[str],
    overlap_n: int,
    seed: int,
    n_slices: dict[str, int],
    session_id: Optional[str] = None,
) -> SessionPlan:
    """Deterministic session plan: overlap subset + round-robin remainder."""
    cases = tuple(cases)
    raters = tuple(raters)
    if not raters:
        raise ValidationError("need at least one rater")
    if CONSENSUS_RATER in raters:
        raise ValidationError(f"rater id {CONSENSUS_RATER!r} is reserved")
    ids = [c.patient_id for c in cases]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise ValidationError(f"duplicate patient ids: {dupes}")
    if not 0 <= overlap_n <= len(cases):
        raise ValidationError("overlap_n must be between 0 and the case count")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(cases))
    shuffled = [ids[i] for i in perm]
    overlap = frozenset(shuffled[:overlap_n])
    partition: dict[str, list[str]] = {r: [] for r in raters}
    for i, pid in enumerate(shuffled[overlap_n:]):
        partition[raters[i % len(raters)]].append(pid)
    return SessionPlan(
        session_id=session_id or uuid.uuid4().hex[:12],
        cases=cases,
        raters=raters,
        overlap=overlap,
        partition={r: tuple(v) for r, v in partition.items()},
        n_slices=dict(n_slices),
        seed=seed,
    )


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="microseconds")


class SessionStore:
    """Filesystem-backed store for one data directory holding many sessions."""

    def __init__(self, data_dir: str | Path):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()
        self._plan_cache: dict[str, SessionPlan] = {}
        self._next_seq: dict[str, int] = {}

    def _lock(self, session_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(session_id, threading.Lock())

    def _session_dir(self, session_id: str) -> Path:
        return self.data_dir / session_id

    # -- creation / loading -------------------------------------------------

    def create_session(
        self,
        manifest: Iterable[CaseEntry],
        raters: Iterable[str],
        overlap_n: int,
        seed: int,
        session_id: Optional[str] = None,
    ) -> SessionPlan:
        cases = tuple(manifest)
        ids = [c.patient_id for c in cases]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ValidationError(f"duplicate patient ids: {dupes}")
        n_slices: dict[str, int] = {}
        for case in cases:
            for path in (case.manual_path, case.auto_path):
                vol = load_volume(path)  # raises on unreadable volumes
                prev = n_slices.setdefault(case.patient_id, vol.nz)
                if prev != vol.nz:
                    raise ValidationError(
                        f"case {case.patient_id}: manual and automatic volumes have different slice counts"
                    )
        plan = make_plan(cases, raters, overlap_n, seed, n_slices, session_id=session_id)
        sdir = self._session_dir(plan.session_id)
        if sdir.exists():
            raise ValidationError(f"session {plan.session_id} already exists")
        sdir.mkdir(parents=True)
        (sdir / "plan.json").write_text(self._plan_to_json(plan), encoding="utf-8")
        (sdir / "events.jsonl").touch()
        return plan

    @staticmethod
    def _plan_to_json(plan: SessionPlan) -> str:
        return json.dumps(
            {
                "session_id": plan.session_id,
                "cases": [
                    {"patient_id": c.patient_id, "manual_path": c.manual_path, "auto_path": c.auto_path}
                    for c in plan.cases
                ],
                "raters": list(plan.raters),
                "overlap": sorted(plan.overlap),
                "partition": {r: list(v) for r, v in plan.partition.items()},
                "n_slices": plan.n_slices,
                "seed": plan.seed,
            },
            indent=2,
            sort_keys=True,
        )

    def load_plan(self, session_id: str) -> SessionPlan:
        cached = self._plan_cache.get(session_id)
        if cached is not None:
            return cached
        path = self._session_dir(session_id) / "plan.json"
        if not path.is_file():
            raise KeyError(f"unknown session {session_id}")
        d = json.loads(path.read_text(encoding="utf-8"))
        plan = SessionPlan(
            session_id=d["session_id"],
            cases=tuple(CaseEntry(**c) for c in d["cases"]),
            raters=tuple(d["raters"]),
            overlap=frozenset(d["overlap"]),
            partition={r: tuple(v) for r, v in d["partition"].items()},
            n_slices={k: int(v) for k, v in d["n_slices"].items()},
            seed=int(d["seed"]),
        )
        self._plan_cache[session_id] = plan
        return plan

    def list_sessions(self) -> list[str]:
        return sorted(p.name for p in self.data_dir.iterdir() if (p / "plan.json").is_file())

    # -- events -------------------------------------------------------------

    def append_event(
        self,
        session_id: str,
        rater_id: str,
        patient_id: str,
        slice_index: int,
        target_class: TargetClass,
        arm: Optional[str],
        payload: str,
    ) -> RatingEvent:
        plan = self.load_plan(session_id)
        self._validate_event(plan, rater_id, patient_id, slice_index, target_class, arm, payload)
        with self._lock(session_id):
            if session_id not in self._next_seq:
                events = self._read_events(session_id)
                self._next_seq[session_id] = events[-1].seq + 1 if events else 1
            seq = self._next_seq[session_id]
            self._next_seq[session_id] = seq + 1
            event = RatingEvent(
                seq=seq,
                timestamp=_now(),
                session_id=session_id,
                rater_id=rater_id,
                patient_id=patient_id,
                slice_index=int(slice_index),
                target_class=target_class,
                arm=arm,
                payload=payload,
            )
            with (self._session_dir(session_id) / "events.jsonl").open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(event.to_dict(), sort_keys=True) + "\n")
        return event

    @staticmethod
    def _validate_event(plan, rater_id, patient_id, slice_index, target_class, arm, payload) -> None:
        if rater_id != CONSENSUS_RATER and rater_id not in plan.raters:
            raise ValidationError(f"unknown rater {rater_id!r}")
        if patient_id not in {c.patient_id for c in plan.cases}:
            raise ValidationError(f"unknown patient {patient_id!r}")
        if patient_id not in plan.patients_of(rater_id):
            raise ValidationError(f"patient {patient_id!r} is not assigned to rater {rater_id!r}")
        if not 0 <= slice_index < plan.n_slices[patient_id]:
            raise ValidationError(f"slice {slice_index} out of range for patient {patient_id!r}")
        if not isinstance(target_class, TargetClass):
            raise ValidationError(f"invalid class {target_class!r}")
        if arm is None:
            ComparisonChoice(payload)  # raises ValueError on bad enum
        else:
            if arm not in ("A", "B"):
                raise ValidationError(f"invalid arm {arm!r}")
            RatingCategory(payload)

    def _read_events(self, session_id: str) -> list[RatingEvent]:
        path = self._session_dir(session_id) / "events.jsonl"
        if not path.is_file():
            raise KeyError(f"unknown session {session_id}")
        out = []
        with path.open(encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    out.append(RatingEvent.from_dict(json.loads(line)))
        return out

    def history(self, session_id: str) -> list[RatingEvent]:
        """Every event ever appended, in sequence order."""
        return self._read_events(session_id)

    # -- snapshots ------------------------------------------------------------

    def snapshot(self, session_id: str) -> SessionData:
        plan = self.load_plan(session_id)
        events = self._read_events(session_id)
        return SessionData(
            session_id=session_id,
            raters=plan.raters,
            case_order=tuple(c.patient_id for c in plan.cases),
            n_slices=dict(plan.n_slices),
            overlap=plan.overlap,
            assignments={c.patient_id: plan.assignment(c.patient_id) for c in plan.cases},
            rating_events=tuple(e for e in events if not e.is_comparison),
            comparison_events=tuple(e for e in events if e.is_comparison),
            seed=plan.seed,
        )


# -- export / import -----------------------------------------------------------


def latest_by_key(events: Iterable[RatingEvent]) -> dict[tuple, RatingEvent]:
    """Supersession: the highest-seq event per key wins."""
    out: dict[tuple, RatingEvent] = {}
    for ev in sorted(events, key=lambda e: e.seq):
        out[ev.key()] = ev
    return out


def export_session_csvs(data: SessionData) -> dict[str, str]:
    """Deterministic CSV bundle: ratings, comparisons, unblinded mapping, session."""

    def render(columns: list[str], rows: list[list]) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        w.writerows(rows)
        return buf.getvalue()

    ratings = [
        [e.session_id, e.rater_id, e.patient_id, e.slice_index, e.target_class.value, e.arm, e.payload, e.seq, e.timestamp]
        for e in sorted(latest_by_key(data.rating_events).values(), key=lambda e: e.seq)
    ]
    comparisons = [
        [e.session_id, e.rater_id, e.patient_id, e.slice_index, e.target_class.value, e.payload, e.seq, e.timestamp]
        for e in sorted(latest_by_key(data.comparison_events).values(), key=lambda e: e.seq)
    ]
    assignments = [
        [
            data.session_id,
            pid,
            data.assignments[pid].method_of_a.value,
            data.assignments[pid].method_of_b.value,
            data.n_slices[pid],
            int(pid in data.overlap),
        ]
        for pid in data.case_order
    ]
    session = [[data.session_id, "" if data.seed is None else data.seed, ";".join(data.raters), len(data.overlap)]]
    return {
        "ratings.csv": render(RATINGS_COLUMNS, ratings),
        "comparisons.csv": render(COMPARISONS_COLUMNS, comparisons),
        "assignments.csv": render(ASSIGNMENTS_COLUMNS, assignments),
        "session.csv": render(SESSION_COLUMNS, session),
    }


def export_session_zip(data: SessionData) -> bytes:
    files = export_session_csvs(data)
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", zipfile.ZIP_DEFLATED) as zf:
        for name in sorted(files):
            zf.writestr(name, files[name])
    return buf.getvalue()


def import_session_csvs(files: dict[str, str]) -> SessionData:
    """Rebuild an aggregation-ready snapshot from an exported bundle."""

    def rows(name: str) -> list[dict[str, str]]:
        return list(csv.DictReader(io.StringIO(files[name])))

    srow = rows("session.csv")[0]
    session_id = srow["session_id"]
    seed = int(srow["seed"]) if srow["seed"] else None
    raters = tuple(r for r in srow["raters"].split(";") if r)
    assignments: dict[str, CaseAssignment] = {}
    n_slices: dict[str, int] = {}
    overlap = set()
    case_order = []
    for row in rows("assignments.csv"):
        pid = row["patient_id"]
        case_order.append(pid)
        assignments[pid] = CaseAssignment(patient_id=pid, method_of_a=Method(row["method_of_A"]))
        n_slices[pid] = int(row["n_slices"])
        if row["in_overlap"] == "1":
            overlap.add(pid)
    ratings = tuple(
        RatingEvent(
            seq=int(r["seq"]),
            timestamp=r["timestamp"],
            session_id=r["session_id"],
            rater_id=r["rater_id"],
            patient_id=r["patient_id"],
            slice_index=int(r["slice"]),
            target_class=TargetClass(r["class"]),
            arm=r["arm"],
            payload=r["category"],
        )
        for r in rows("ratings.csv")
    )
    comparisons = tuple(
        RatingEvent(
            seq=int(r["seq"]),
            timestamp=r["timestamp"],
            session_id=r["session_id"],
            rater_id=r["rater_id"],
            patient_id=r["patient_id"],
            slice_index=int(r["slice"]),
            target_class=TargetClass(r["class"]),
            arm=None,
            payload=r["choice"],
        )
        for r in rows("comparisons.csv")
    )
    return SessionData(
        session_id=session_id,
        raters=raters,
        case_order=tuple(case_order),
        n_slices=n_slices,
        overlap=frozenset(overlap),
        assignments=assignments,
        rating_events=ratings,
        comparison_events=comparisons,
        seed=seed,
    )


def import_session_zip(blob: bytes) -> SessionData:
    with zipfile.ZipFile(io.BytesIO(blob)) as zf:
        files = {name: zf.read(name).decode("utf-8") for name in zf.namelist()}
    return import_session_csvs(files)
