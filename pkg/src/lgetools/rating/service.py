"""HTTP face of the rating experiment.

Rater-facing endpoints are strictly blinded: tasks and acks never carry
method identity. Unblinded summaries, agreement, history, and the export
bundle sit behind an admin token header.
"""
from __future__ import annotations

import dataclasses
from pathlib import Path
from typing import Optional

from fastapi import Depends, FastAPI, Header, HTTPException, Query, Response
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, ConfigDict, Field

from ..errors import UndefinedStatisticError, ValidationError
from ..metrics import sens_spec_ci
from ..volume import MaskVolume, load_volume
from . import analysis
from .model import CaseEntry, ComparisonChoice, RatingCategory, TargetClass
from .overlay import base_png, overlay_png, to_base64
from .store import SessionStore, export_session_zip, latest_by_key

ADMIN_HEADER = "x-admin-token"


class ManifestRow(BaseModel):
    patient_id: str
    manual_path: str
    auto_path: str


class CreateSessionRequest(BaseModel):
    manifest: list[ManifestRow]
    raters: list[str]
    overlap_n: int = Field(ge=0)
    seed: int
    session_id: Optional[str] = None


class RatingRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    rater_id: str
    patient_id: str
    slice_index: int
    target_class: TargetClass
    arm: str
    category: RatingCategory


class ComparisonRequest(BaseModel):
    # extra="forbid" rejects stray fields, notably an "arm" on a comparison
    model_config = ConfigDict(extra="forbid")

    rater_id: str
    patient_id: str
    slice_index: int
    target_class: TargetClass
    choice: ComparisonChoice


def create_app(data_dir: str | Path, admin_token: str) -> FastAPI:
    store = SessionStore(data_dir)
    volume_cache: dict[str, MaskVolume] = {}

    app = FastAPI(title="blinded segmentation rating service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    def require_admin(x_admin_token: Optional[str] = Header(default=None)) -> None:
        if x_admin_token != admin_token:
            raise HTTPException(status_code=403, detail="admin token required")

    def get_volume(path: str) -> MaskVolume:
        if path not in volume_cache:
            volume_cache[path] = load_volume(path)
        return volume_cache[path]

    def load_plan_or_404(session_id: str):
        try:
            return store.load_plan(session_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id}")

    @app.post("/sessions")
    def create_session(req: CreateSessionRequest) -> dict:
        try:
            plan = store.create_session(
                manifest=[CaseEntry(r.patient_id, r.manual_path, r.auto_path) for r in req.manifest],
                raters=req.raters,
                overlap_n=req.overlap_n,
                seed=req.seed,
                session_id=req.session_id,
            )
        except (ValidationError, OSError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return {"session_id": plan.session_id}

    @app.get("/sessions/{session_id}/raters/{rater}/tasks/{cursor}")
    def get_task(session_id: str, rater: str, cursor: int) -> dict:
        plan = load_plan_or_404(session_id)
        try:
            tasks = plan.tasks_of(rater)
        except ValidationError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        if cursor < 0:
            raise HTTPException(status_code=400, detail="cursor must be >= 0")
        if cursor >= len(tasks):
            return {"done": True, "cursor": cursor, "progress": {"position": len(tasks), "total": len(tasks)}}
        pid, sl = tasks[cursor]
        case = next(c for c in plan.cases if c.patient_id == pid)
        assignment = plan.assignment(pid)
        manual = get_volume(case.manual_path)
        auto = get_volume(case.auto_path)
        by_arm = {assignment.arm_of(m): v for m, v in (("manual", manual), ("automatic", auto))}
        return {
            "done": False,
            "cursor": cursor,
            "task": {
                "patient_id": pid,
                "slice_index": sl,
                "n_slices": plan.n_slices[pid],
                "classes": [c.value for c in TargetClass],
                "arms": ["A", "B"],
                "images": {
                    "base": to_base64(base_png(manual.image[sl])),
                    "overlay_a": to_base64(overlay_png(by_arm["A"].labels[sl])),
                    "overlay_b": to_base64(overlay_png(by_arm["B"].labels[sl])),
                },
            },
            "progress": {"position": cursor, "total": len(tasks)},
        }

    @app.get("/sessions/{session_id}/raters/{rater}/slices/{patient_id}/{slice_index}")
    def slice_state(session_id: str, rater: str, patient_id: str, slice_index: int) -> dict:
        """This rater's own latest submissions for one slice (for resume/revision)."""
        plan = load_plan_or_404(session_id)
        try:
            if patient_id not in plan.patients_of(rater):
                raise ValidationError(f"patient {patient_id!r} is not assigned to rater {rater!r}")
        except ValidationError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        data = store.snapshot(session_id)
        ratings = latest_by_key(
            e
            for e in data.rating_events
            if e.rater_id == rater and e.patient_id == patient_id and e.slice_index == slice_index
        )
        comparisons = latest_by_key(
            e
            for e in data.comparison_events
            if e.rater_id == rater and e.patient_id == patient_id and e.slice_index == slice_index
        )
        out = {
            "ratings": {
                cls.value: {
                    arm: (
                        ratings[(rater, patient_id, slice_index, cls, arm)].payload
                        if (rater, patient_id, slice_index, cls, arm) in ratings
                        else None
                    )
                    for arm in ("A", "B")
                }
                for cls in TargetClass
            },
            "comparisons": {
                cls.value: (
                    comparisons[(rater, patient_id, slice_index, cls, None)].payload
                    if (rater, patient_id, slice_index, cls, None) in comparisons
                    else None
                )
                for cls in TargetClass
            },
        }
        return out

    @app.post("/sessions/{session_id}/ratings")
    def submit_rating(session_id: str, req: RatingRequest) -> dict:
        load_plan_or_404(session_id)
        try:
            event = store.append_event(
                session_id,
                rater_id=req.rater_id,
                patient_id=req.patient_id,
                slice_index=req.slice_index,
                target_class=req.target_class,
                arm=req.arm,
                payload=req.category.value,
            )
        except (ValidationError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return {"seq": event.seq, "timestamp": event.timestamp}

    @app.post("/sessions/{session_id}/comparisons")
    def submit_comparison(session_id: str, req: ComparisonRequest) -> dict:
        load_plan_or_404(session_id)
        data = store.snapshot(session_id)
        latest = latest_by_key(e for e in data.rating_events if e.target_class == req.target_class)
        pair = analysis._rating_pair(latest, req.target_class, req.rater_id, req.patient_id, req.slice_index)
        if pair is None:
            raise HTTPException(status_code=409, detail="both arms must be rated before comparing")
        if not analysis.comparison_eligible(*pair):
            raise HTTPException(
                status_code=409, detail="slice excluded: both methods correctly found nothing"
            )
        try:
            event = store.append_event(
                session_id,
                rater_id=req.rater_id,
                patient_id=req.patient_id,
                slice_index=req.slice_index,
                target_class=req.target_class,
                arm=None,
                payload=req.choice.value,
            )
        except (ValidationError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return {"seq": event.seq, "timestamp": event.timestamp}

    @app.get("/sessions/{session_id}/progress/{rater}")
    def progress(session_id: str, rater: str) -> dict:
        plan = load_plan_or_404(session_id)
        try:
            tasks = plan.tasks_of(rater)
        except ValidationError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        data = store.snapshot(session_id)
        mine = [e for e in data.rating_events if e.rater_id == rater]
        latest = latest_by_key(mine)
        completed = 0
        for pid, sl in tasks:
            slots = [
                (rater, pid, sl, cls, arm) for cls in TargetClass for arm in ("A", "B")
            ]
            if all(s in latest for s in slots):
                completed += 1
        n_comparisons = len(
            latest_by_key(e for e in data.comparison_events if e.rater_id == rater)
        )
        return {
            "total_tasks": len(tasks),
            "completed_tasks": completed,
            "category_events": len(mine),
            "comparison_events": n_comparisons,
        }

    @app.get("/sessions/{session_id}/summary", dependencies=[Depends(require_admin)])
    def summary(session_id: str, target_class: TargetClass = Query(alias="class")) -> dict:
        load_plan_or_404(session_id)
        data = store.snapshot(session_id)
        proportions = analysis.aggregate_proportions(data, target_class)
        preference = analysis.preference_summary(data, target_class)
        try:
            tables = analysis.patient_contingency_from_ratings(data, target_class)
            contingency = {}
            for method, table in tables.items():
                sens, spec = sens_spec_ci(table)
                contingency[method] = {
                    "tp": table.tp,
                    "fp": table.fp,
                    "fn": table.fn,
                    "tn": table.tn,
                    "sensitivity": dataclasses.asdict(sens) if sens else None,
                    "specificity": dataclasses.asdict(spec) if spec else None,
                }
        except ValidationError:
            contingency = None  # incomplete ratings: tables not yet derivable
        return {
            "class": target_class.value,
            "proportions": {m: dataclasses.asdict(p) for m, p in proportions.items()},
            "preference": dataclasses.asdict(preference),
            "patient_contingency": contingency,
        }

    @app.get("/sessions/{session_id}/agreement", dependencies=[Depends(require_admin)])
    def agreement(
        session_id: str,
        target_class: TargetClass = Query(alias="class"),
        kind: str = "categories",
    ) -> dict:
        load_plan_or_404(session_id)
        data = store.snapshot(session_id)
        try:
            result = analysis.rater_agreement(data, target_class, kind)
        except (ValidationError, UndefinedStatisticError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return {
            "class": target_class.value,
            "kind": kind,
            "labels": list(result.matrix.labels),
            "matrix": result.matrix.counts.tolist(),
            "kappa": result.kappa,
            "n": result.n,
        }

    @app.get("/sessions/{session_id}/export", dependencies=[Depends(require_admin)])
    def export(session_id: str) -> Response:
        load_plan_or_404(session_id)
        blob = export_session_zip(store.snapshot(session_id))
        return Response(
            content=blob,
            media_type="application/zip",
            headers={"content-disposition": f'attachment; filename="{session_id}.zip"'},
        )

    @app.get("/sessions/{session_id}/history", dependencies=[Depends(require_admin)])
    def history(session_id: str) -> dict:
        load_plan_or_404(session_id)
        return {"events": [e.to_dict() for e in store.history(session_id)]}

    return app
