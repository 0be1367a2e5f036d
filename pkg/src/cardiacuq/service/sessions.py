"""Correction sessions: edits restricted to flagged regions, atomic and audited."""

from __future__ import annotations

import threading
import time
import uuid
from dataclasses import dataclass, field

import numpy as np

from ..detection.infer import DetectionResult
from .rle import decode_index_runs


class EditRejectedError(ValueError):
    """Edit touches voxels outside the flagged regions; nothing was applied."""


class SessionClosedError(RuntimeError):
    """The session was already submitted and is immutable."""


class StaleVersionError(RuntimeError):
    """Another write was applied first; retry with the current version."""


def allowed_edit_mask(detections: DetectionResult, shape: tuple[int, int, int]) -> np.ndarray:
    """Voxels the expert may change: union of flagged regions, clipped."""
    mask = np.zeros(shape, dtype=bool)
    p = detections.patch_size
    nz, h, w = shape
    for z, r0, c0 in detections.voxel_regions():
        if 0 <= z < nz:
            mask[z, max(r0, 0) : min(r0 + p, h), max(c0, 0) : min(c0 + p, w)] = True
    return mask


@dataclass
class CorrectionSession:
    session_id: str
    patient_id: str
    phase: str
    base_labels: np.ndarray  # automatic segmentation, working grid
    edited: np.ndarray
    allowed: np.ndarray  # bool, same shape
    audit_log: list = field(default_factory=list)
    status: str = "open"
    version: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @classmethod
    def create(cls, patient_id: str, phase: str, base_labels: np.ndarray, detections: DetectionResult) -> "CorrectionSession":
        return cls(
            session_id=uuid.uuid4().hex[:12],
            patient_id=patient_id,
            phase=phase,
            base_labels=base_labels.copy(),
            edited=base_labels.copy(),
            allowed=allowed_edit_mask(detections, base_labels.shape),
        )

    def apply_edit(self, slice_idx: int, runs: list[list[int]], new_label: int, version: int) -> int:
        return self.apply_edits([(slice_idx, runs, new_label)], version)

    def apply_edits(self, edits: list[tuple[int, list[list[int]], int]], version: int) -> int:
        """Atomically apply a batch of (slice, RLE runs, label) edits.

        The whole batch is rejected - nothing applied - if any voxel falls
        outside a flagged region; a stale `version` is rejected likewise.
        """
        with self._lock:
            if self.status != "open":
                raise SessionClosedError(f"session {self.session_id} is submitted")
            if version != self.version:
                raise StaleVersionError(f"expected version {self.version}, got {version}")
            if not edits:
                raise EditRejectedError("empty edit batch")
            nz, h, w = self.edited.shape
            decoded = []
            for slice_idx, runs, new_label in edits:
                if not 0 <= new_label <= 3:
                    raise EditRejectedError(f"label {new_label} outside 0..3")
                if not 0 <= slice_idx < nz:
                    raise EditRejectedError(f"slice {slice_idx} outside volume")
                indices = decode_index_runs(runs)
                if indices.size == 0:
                    raise EditRejectedError("empty edit")
                if indices.max() >= h * w:
                    raise EditRejectedError("edit indices outside slice")
                inside = self.allowed[slice_idx].ravel()[indices]
                if not inside.all():
                    raise EditRejectedError(
                        f"{int((~inside).sum())} voxel(s) outside the flagged regions"
                    )
                decoded.append((slice_idx, indices, new_label, runs))
            stamp = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
            for slice_idx, indices, new_label, runs in decoded:
                self.edited[slice_idx].ravel()[indices] = new_label
                self.audit_log.append(
                    {
                        "timestamp": stamp,
                        "slice": int(slice_idx),
                        "runs": [[int(a), int(b)] for a, b in runs],
                        "label": int(new_label),
                    }
                )
            self.version += 1
            return self.version

    def submit(self) -> np.ndarray:
        with self._lock:
            if self.status != "open":
                raise SessionClosedError(f"session {self.session_id} already submitted")
            self.status = "submitted"
            return self.edited.copy()

    def replay_audit(self) -> np.ndarray:
        """Re-apply the audit log to the base mask (must equal `edited`)."""
        replayed = self.base_labels.copy()
        for entry in self.audit_log:
            flat = replayed[entry["slice"]].ravel()
            flat[decode_index_runs(entry["runs"])] = entry["label"]
        return replayed


class SessionStore:
    def __init__(self):
        self._sessions: dict[str, CorrectionSession] = {}
        self._lock = threading.Lock()

    def add(self, session: CorrectionSession) -> None:
        with self._lock:
            self._sessions[session.session_id] = session

    def get(self, session_id: str) -> CorrectionSession:
        with self._lock:
            if session_id not in self._sessions:
                raise KeyError(session_id)
            return self._sessions[session_id]
