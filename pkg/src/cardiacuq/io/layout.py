"""On-disk experiment layout and HDF5/JSON persistence helpers.

Tree (one experiment root per configuration):

    {exp}/config.json, folds.json
    {exp}/data/<patient>.h5                       preprocessed studies
    {exp}/fold{i}/{checkpoints,pred_probs,pred_labels,umaps,
                   failure_sets,detections,reports}/
    {exp}/fold{i}/provenance.json
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import h5py
import numpy as np

from .acdc import PatientStudy, PhaseData
from .preprocess import ResampleGeometry

STAGE_DIRS = (
    "checkpoints",
    "pred_probs",
    "pred_labels",
    "umaps",
    "failure_sets",
    "detections",
    "reports",
)


def write_json(path, payload) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = tempfile.NamedTemporaryFile(
        "w", dir=path.parent, prefix=path.name, suffix=".tmp", delete=False
    )
    try:
        json.dump(payload, tmp, indent=2, sort_keys=True)
        tmp.write("\n")
        tmp.close()
        os.replace(tmp.name, path)
    finally:
        if os.path.exists(tmp.name):
            os.unlink(tmp.name)


def read_json(path):
    with open(path) as f:
        return json.load(f)


def save_arrays(path, arrays: dict[str, np.ndarray], attrs: dict | None = None) -> None:
    """Write named arrays plus scalar attrs to one compressed HDF5 file, atomically."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with h5py.File(tmp, "w") as f:
        for name, arr in arrays.items():
            arr = np.asarray(arr)
            kw = {"compression": "gzip", "compression_opts": 4} if arr.size > 128 else {}
            f.create_dataset(name, data=arr, **kw)
        for key, value in (attrs or {}).items():
            f.attrs[key] = value
    os.replace(tmp, path)


def load_arrays(path) -> tuple[dict[str, np.ndarray], dict]:
    arrays: dict[str, np.ndarray] = {}
    with h5py.File(path, "r") as f:
        def collect(name, obj):
            if isinstance(obj, h5py.Dataset):
                arrays[name] = obj[()]
        f.visititems(collect)
        attrs = {k: (v.item() if hasattr(v, "item") and np.ndim(v) == 0 else v) for k, v in f.attrs.items()}
    return arrays, attrs


class ExperimentLayout:
    def __init__(self, root):
        self.root = Path(root)

    # --- experiment-level ---
    @property
    def config_path(self) -> Path:
        return self.root / "config.json"

    @property
    def folds_path(self) -> Path:
        return self.root / "folds.json"

    def study_path(self, patient_id: str) -> Path:
        return self.root / "data" / f"{patient_id}.h5"

    def patient_ids(self) -> list[str]:
        data = self.root / "data"
        if not data.is_dir():
            return []
        return sorted(p.stem for p in data.glob("*.h5"))

    # --- fold-level ---
    def fold_dir(self, fold: int) -> Path:
        return self.root / f"fold{fold}"

    def stage_dir(self, fold: int, stage: str) -> Path:
        return self.fold_dir(fold) / stage

    def checkpoint_dir(self, fold: int, tag: str) -> Path:
        return self.stage_dir(fold, "checkpoints") / tag

    def volume_path(self, fold: int, stage: str, patient_id: str, phase: str, suffix: str = "") -> Path:
        return self.stage_dir(fold, stage) / f"{patient_id}_{phase}{suffix}.h5"

    def provenance_path(self, fold: int) -> Path:
        return self.fold_dir(fold) / "provenance.json"

    def lock_path(self) -> Path:
        return self.root / ".lock"

    def make_fold_dirs(self, fold: int) -> None:
        for stage in STAGE_DIRS:
            self.stage_dir(fold, stage).mkdir(parents=True, exist_ok=True)

    # --- study persistence ---
    def save_study(self, study: PatientStudy) -> None:
        arrays = {}
        for phase, data in study.phases.items():
            arrays[f"{phase}/image"] = data.image
            arrays[f"{phase}/reference"] = data.reference
        attrs = {
            "patient_id": study.patient_id,
            "disease_group": study.disease_group,
            "spacing": np.asarray(study.spacing, dtype=np.float64),
            "original_shape": np.asarray(study.original_shape, dtype=np.int64),
        }
        if study.resample is not None:
            attrs["original_hw"] = np.asarray(study.resample.original_hw, dtype=np.int64)
            attrs["original_spacing"] = np.asarray(study.resample.original_spacing, dtype=np.float64)
            attrs["resampled_hw"] = np.asarray(study.resample.resampled_hw, dtype=np.int64)
        save_arrays(self.study_path(study.patient_id), arrays, attrs)

    def load_study(self, patient_id: str) -> PatientStudy:
        arrays, attrs = load_arrays(self.study_path(patient_id))
        phases = {}
        for phase in ("ED", "ES"):
            phases[phase] = PhaseData(
                image=np.asarray(arrays[f"{phase}/image"], dtype=np.float32),
                reference=np.asarray(arrays[f"{phase}/reference"], dtype=np.uint8),
            )
        resample = None
        if "resampled_hw" in attrs:
            resample = ResampleGeometry(
                original_hw=tuple(int(v) for v in attrs["original_hw"]),
                original_spacing=tuple(float(v) for v in attrs["original_spacing"]),
                resampled_hw=tuple(int(v) for v in attrs["resampled_hw"]),
            )
        group = attrs["disease_group"]
        return PatientStudy(
            patient_id=str(attrs["patient_id"]),
            disease_group=group if isinstance(group, str) else group.decode(),
            phases=phases,
            spacing=tuple(float(v) for v in attrs["spacing"]),
            original_shape=tuple(int(v) for v in attrs["original_shape"]),
            resample=resample,
        )
