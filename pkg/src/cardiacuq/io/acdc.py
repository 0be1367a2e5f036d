"""ACDC-format study ingestion.

Expects the challenge directory layout: one directory per patient holding an
``Info.cfg`` (ED/ES frame numbers, disease group) next to
``<patient>_frameXX.nii.gz`` image volumes and ``..._gt.nii.gz`` references.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import LabelOutOfRangeError, MalformedHeaderError
from . import nifti

PHASES = ("ED", "ES")
DISEASE_GROUPS = ("NOR", "DCM", "HCM", "MINF", "ARV")
# real ACDC metadata spells the RV-abnormality group "RV"
_GROUP_ALIASES = {"RV": "ARV", "ARV": "ARV"}

VALID_LABELS = (0, 1, 2, 3)


@dataclass
class PhaseData:
    """Image and reference label volume for one cardiac phase, (Z, H, W)."""

    image: np.ndarray
    reference: np.ndarray

    def __post_init__(self):
        if self.image.shape != self.reference.shape:
            raise ValueError(
                f"image {self.image.shape} and reference {self.reference.shape} differ"
            )


@dataclass
class PatientStudy:
    patient_id: str
    disease_group: str
    phases: dict[str, PhaseData]
    spacing: tuple[float, float, float]  # (dx, dy, dz) mm; dx along W, dy along H
    original_shape: tuple[int, int, int]  # (H, W, Z)
    resample: "ResampleGeometry | None" = field(default=None)

    def __post_init__(self):
        if self.disease_group not in DISEASE_GROUPS:
            raise ValueError(f"unknown disease group {self.disease_group!r}")
        if any(s <= 0 for s in self.spacing):
            raise ValueError(f"non-positive spacing {self.spacing}")
        for name, phase in self.phases.items():
            bad = np.setdiff1d(np.unique(phase.reference), VALID_LABELS)
            if bad.size:
                raise LabelOutOfRangeError(
                    f"{self.patient_id}/{name}: reference labels {bad.tolist()} outside {VALID_LABELS}"
                )


def _parse_info(path: Path) -> dict[str, str]:
    info = {}
    for line in path.read_text().splitlines():
        if ":" in line:
            key, value = line.split(":", 1)
            info[key.strip()] = value.strip()
    return info


def _frame_path(patient_dir: Path, patient_id: str, frame: int, gt: bool) -> Path:
    suffix = "_gt" if gt else ""
    for ext in (".nii.gz", ".nii"):
        p = patient_dir / f"{patient_id}_frame{frame:02d}{suffix}{ext}"
        if p.exists():
            return p
    raise FileNotFoundError(
        f"{patient_dir}/{patient_id}_frame{frame:02d}{suffix}.nii[.gz]"
    )


def load_acdc_patient(root_path, patient_id: str) -> PatientStudy:
    """Load one patient's ED and ES image/reference volumes plus metadata."""
    patient_dir = Path(root_path) / patient_id
    info_path = patient_dir / "Info.cfg"
    if not info_path.exists():
        raise FileNotFoundError(str(info_path))
    info = _parse_info(info_path)
    try:
        frames = {"ED": int(info["ED"]), "ES": int(info["ES"])}
        group = _GROUP_ALIASES.get(info["Group"], info["Group"])
    except (KeyError, ValueError) as exc:
        raise MalformedHeaderError(f"{info_path}: missing/invalid keys: {exc}") from exc

    phases = {}
    spacing = None
    for phase, frame in frames.items():
        img, img_spacing = nifti.read(_frame_path(patient_dir, patient_id, frame, gt=False))
        ref, _ = nifti.read(_frame_path(patient_dir, patient_id, frame, gt=True))
        if img.ndim != 3 or ref.ndim != 3:
            raise MalformedHeaderError(
                f"{patient_id}/{phase}: expected 3D volumes, got {img.ndim}D/{ref.ndim}D"
            )
        # on-disk (X, Y, Z) -> internal (Z, H, W)
        image = np.ascontiguousarray(np.transpose(img, (2, 1, 0)).astype(np.float32))
        reference = np.ascontiguousarray(np.transpose(ref, (2, 1, 0)))
        if not np.all(np.isin(reference, VALID_LABELS)):
            bad = np.setdiff1d(np.unique(reference), VALID_LABELS)
            raise LabelOutOfRangeError(
                f"{patient_id}/{phase}: reference labels {bad.tolist()} outside {VALID_LABELS}"
            )
        phases[phase] = PhaseData(image=image, reference=reference.astype(np.uint8))
        if spacing is None:
            spacing = tuple(round(float(s), 6) for s in img_spacing[:3])

    dz = spacing[2]
    if not 5.0 <= dz <= 10.0:
        raise MalformedHeaderError(
            f"{patient_id}: slice spacing {dz} mm outside the ACDC range [5, 10]"
        )
    z, h, w = phases["ED"].image.shape
    return PatientStudy(
        patient_id=patient_id,
        disease_group=group,
        phases=phases,
        spacing=spacing,
        original_shape=(h, w, z),
    )


def list_patients(root_path) -> list[str]:
    root = Path(root_path)
    return sorted(p.name for p in root.iterdir() if p.is_dir() and (p / "Info.cfg").exists())
