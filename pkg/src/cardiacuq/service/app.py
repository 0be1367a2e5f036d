"""HTTP review service for expert correction of flagged regions."""

from __future__ import annotations

import base64
import io
from dataclasses import dataclass

import numpy as np
from fastapi import Depends, FastAPI, HTTPException, Request
from PIL import Image
from pydantic import BaseModel

from ..detection.infer import DetectionResult
from ..errors import MissingDependencyError
from ..evaluation import dice_3d, hausdorff_3d, simulate_correction
from ..io.acdc import load_acdc_patient
from ..io.layout import ExperimentLayout, load_arrays, save_arrays, write_json
from ..io.preprocess import invert_resample_labels
from ..pipeline import STRUCTURES, ExperimentConfig
from .rle import encode_mask
from .sessions import (
    CorrectionSession,
    EditRejectedError,
    SessionClosedError,
    SessionStore,
    StaleVersionError,
)


class SessionRequest(BaseModel):
    patient_id: str
    phase: str


class SubEdit(BaseModel):
    slice: int
    runs: list[list[int]]
    label: int


class EditRequest(BaseModel):
    version: int
    slice: int | None = None
    runs: list[list[int]] | None = None
    label: int | None = None
    edits: list[SubEdit] | None = None  # atomic batch form


@dataclass
class CaseData:
    study: object  # preprocessed PatientStudy
    raw: object  # original-resolution PatientStudy
    pred_labels: np.ndarray  # working 1.4 mm grid
    umap_values: np.ndarray
    detections: DetectionResult


def _png_b64(arr: np.ndarray) -> str:
    scaled = np.clip(arr, 0.0, 1.0)
    img = Image.fromarray((scaled * 255).astype(np.uint8), mode="L")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode()


def _structure_metrics(pred_original, ref_original, spacing):
    out = {}
    for name, cls in STRUCTURES.items():
        entry = {"dice": dice_3d(pred_original, ref_original, cls)}
        try:
            entry["hausdorff_mm"] = hausdorff_3d(pred_original, ref_original, cls, spacing)
        except Exception:
            entry["hausdorff_mm"] = None
        out[name] = entry
    return out


def create_app(config: ExperimentConfig, fold: int = 0, token: str | None = None) -> FastAPI:
    layout = ExperimentLayout(config.output_root)
    if not layout.folds_path.exists():
        raise MissingDependencyError("experiment has no folds.json; run ingest first")
    app = FastAPI(title="cardiacuq review service")
    store = SessionStore()
    cases: dict[tuple[str, str], CaseData] = {}
    session_cases: dict[str, tuple[str, str]] = {}

    def check_token(request: Request):
        if token and request.headers.get("x-auth-token") != token:
            raise HTTPException(status_code=401, detail="missing or invalid token")

    def get_case(pid: str, phase: str) -> CaseData:
        key = (pid, phase)
        if key in cases:
            return cases[key]
        if phase not in ("ED", "ES"):
            raise HTTPException(status_code=404, detail=f"unknown phase {phase}")
        try:
            study = layout.load_study(pid)
        except FileNotFoundError:
            raise HTTPException(status_code=404, detail=f"unknown case {pid}")
        labels_path = layout.volume_path(fold, "pred_labels", pid, phase)
        det_path = layout.volume_path(fold, "detections", pid, phase)
        umap_path = layout.volume_path(
            fold, "umaps", pid, phase, suffix=f"_{config.umap_kind}"
        )
        for p in (labels_path, det_path, umap_path):
            if not p.exists():
                raise HTTPException(
                    status_code=409, detail=f"pipeline artifact missing: {p.name}"
                )
        arrays, _ = load_arrays(labels_path)
        umap_arrays, _ = load_arrays(umap_path)
        case = CaseData(
            study=study,
            raw=load_acdc_patient(config.dataset_root, pid),
            pred_labels=np.asarray(arrays["labels"]),
            umap_values=np.asarray(umap_arrays["values"]),
            detections=DetectionResult.load(det_path),
        )
        cases[key] = case
        return case

    def case_report(case: CaseData, phase: str, corrected14: np.ndarray) -> dict:
        ref = case.raw.phases[phase].reference
        spacing = case.raw.spacing
        before = _structure_metrics(
            invert_resample_labels(case.pred_labels, case.study.resample), ref, spacing
        )
        after = _structure_metrics(
            invert_resample_labels(corrected14, case.study.resample), ref, spacing
        )
        delta = {}
        for name in STRUCTURES:
            d = {"dice": after[name]["dice"] - before[name]["dice"]}
            if before[name]["hausdorff_mm"] is not None and after[name]["hausdorff_mm"] is not None:
                d["hausdorff_mm"] = after[name]["hausdorff_mm"] - before[name]["hausdorff_mm"]
            else:
                d["hausdorff_mm"] = None
            delta[name] = d
        return {"before": before, "after": after, "delta": delta}

    @app.get("/cases", dependencies=[Depends(check_token)])
    def list_cases():
        out = []
        for pid in layout.patient_ids():
            study = layout.load_study(pid)
            out.append(
                {
                    "patient_id": pid,
                    "phases": sorted(study.phases),
                    "slices": {ph: int(d.image.shape[0]) for ph, d in study.phases.items()},
                }
            )
        return out

    @app.get("/cases/{pid}/{phase}/slices/{z}", dependencies=[Depends(check_token)])
    def get_slice(pid: str, phase: str, z: int):
        case = get_case(pid, phase)
        data = case.study.phases[phase]
        nz, h, w = data.image.shape
        if not 0 <= z < nz:
            raise HTTPException(status_code=404, detail=f"slice {z} outside 0..{nz - 1}")
        p = case.detections.patch_size
        flagged = []
        for rz, r0, c0 in case.detections.voxel_regions():
            if rz != z:
                continue
            flagged.append(
                {
                    "row0": max(r0, 0),
                    "col0": max(c0, 0),
                    "rows": min(r0 + p, h) - max(r0, 0),
                    "cols": min(c0 + p, w) - max(c0, 0),
                }
            )
        return {
            "patient_id": pid,
            "phase": phase,
            "slice": z,
            "slice_count": nz,
            "shape": [h, w],
            "image_png": _png_b64(data.image[z]),
            "umap_png": _png_b64(case.umap_values[z]),
            "mask_rle": encode_mask(case.pred_labels[z]),
            "reference_rle": encode_mask(data.reference[z]),
            "flagged": flagged,
        }

    @app.post("/sessions", dependencies=[Depends(check_token)])
    def create_session(req: SessionRequest):
        case = get_case(req.patient_id, req.phase)
        session = CorrectionSession.create(
            req.patient_id, req.phase, case.pred_labels, case.detections
        )
        store.add(session)
        session_cases[session.session_id] = (req.patient_id, req.phase)
        return {"session_id": session.session_id, "version": session.version}

    def get_session(sid: str) -> CorrectionSession:
        try:
            return store.get(sid)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown session {sid}")

    @app.post("/sessions/{sid}/edits", dependencies=[Depends(check_token)])
    def post_edit(sid: str, req: EditRequest):
        session = get_session(sid)
        if req.edits is not None:
            batch = [(e.slice, e.runs, e.label) for e in req.edits]
        elif req.slice is not None and req.runs is not None and req.label is not None:
            batch = [(req.slice, req.runs, req.label)]
        else:
            raise HTTPException(status_code=422, detail="no edit payload")
        try:
            version = session.apply_edits(batch, req.version)
        except EditRejectedError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        except StaleVersionError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except SessionClosedError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return {"version": version}

    @app.post("/sessions/{sid}/submit", dependencies=[Depends(check_token)])
    def submit_session(sid: str):
        session = get_session(sid)
        pid, phase = session_cases[sid]
        case = get_case(pid, phase)
        try:
            corrected = session.submit()
        except SessionClosedError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        report = case_report(case, phase, corrected)
        report["session_id"] = sid
        report["patient_id"] = pid
        report["phase"] = phase
        report["edits"] = len(session.audit_log)
        session_dir = layout.stage_dir(fold, "reports") / "sessions"
        save_arrays(
            session_dir / f"{sid}.h5",
            {"corrected": corrected, "base": session.base_labels},
            attrs={"patient_id": pid, "phase": phase},
        )
        write_json(session_dir / f"{sid}.json", {"report": report, "audit_log": session.audit_log})
        app.state.last_report = report
        return report

    @app.get("/sessions/{sid}/report", dependencies=[Depends(check_token)])
    def session_report(sid: str):
        session = get_session(sid)
        if session.status != "submitted":
            raise HTTPException(status_code=409, detail="session not submitted yet")
        payload = layout.stage_dir(fold, "reports") / "sessions" / f"{sid}.json"
        from ..io.layout import read_json

        return read_json(payload)["report"]

    @app.get("/cases/{pid}/{phase}/reports/simulated", dependencies=[Depends(check_token)])
    def simulated_report(pid: str, phase: str):
        case = get_case(pid, phase)
        corrected = simulate_correction(
            case.pred_labels,
            case.study.phases[phase].reference,
            case.detections.voxel_regions(),
            patch_size=case.detections.patch_size,
        )
        report = case_report(case, phase, corrected)
        report["patient_id"] = pid
        report["phase"] = phase
        return report

    return app
