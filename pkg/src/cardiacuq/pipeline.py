"""Experiment configuration and the staged train/infer/detect/correct pipeline."""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from filelock import FileLock
from jsonschema import Draft7Validator

from . import PATCH_SIZE
from .detection.config import DetectorConfig
from .detection.infer import DetectionResult, detect_failure_regions
from .detection.model import build_detector
from .detection.train import DetectionDataset, DetectionSlice, compute_w_pos, train_detector
from .errors import ConfigError, MissingDependencyError
from .evaluation import (
    agreement_stats,
    clinical_metrics,
    dice_3d,
    hausdorff_3d,
    mann_whitney_u,
    simulate_correction,
    slice_detection_pr,
    voxel_sensitivity_vs_fp,
)
from .failures import ToleranceSpec, compute_failure_set
from .io.acdc import list_patients, load_acdc_patient
from .io.folds import FoldSplit, make_stratified_folds
from .io.layout import ExperimentLayout, load_arrays, read_json, save_arrays, write_json
from .io.preprocess import invert_resample_labels, preprocess_volume
from .models.config import SegModelConfig
from .models.inference import (
    SnapshotEnsemble,
    load_checkpoint,
    mc_inference,
    mc_inference_summary,
    stochastic_single_inference,
)
from .models.postprocess import largest_component_filter
from .models.train import collect_training_slices, train_segmentation
from .uncertainty import (
    UncertaintyMap,
    bayesian_map_from_std,
    entropy_map,
    risk_coverage_curve,
)
from .volumes import ProbabilityVolume

STAGE_ORDER = (
    "ingest",
    "train-seg",
    "infer",
    "umap",
    "oracle",
    "train-detect",
    "detect",
    "correct",
    "report",
)
STAGE_DEPS = {
    "ingest": (),
    "train-seg": ("ingest",),
    "infer": ("train-seg",),
    "umap": ("infer",),
    "oracle": ("infer",),
    "train-detect": ("umap", "oracle"),
    "detect": ("train-detect",),
    "correct": ("detect",),
    "report": ("correct",),
}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["dataset_root", "output_root"],
    "properties": {
        "dataset_root": {"type": "string"},
        "output_root": {"type": "string"},
        "arch": {"enum": ["DN", "DRN", "U-net"]},
        "loss": {"enum": ["soft_dice", "cross_entropy", "brier"]},
        "mc_enabled": {"type": "boolean"},
        "T": {"type": "integer", "minimum": 1},
        "umap_kind": {"enum": ["entropy", "bayesian"]},
        "tolerance": {
            "type": "object",
            "properties": {
                "outside_voxels": {"type": "integer", "minimum": 0},
                "inside_voxels": {"type": "integer", "minimum": 0},
                "min_cluster": {"type": "integer", "minimum": 1},
            },
        },
        "patch_size": {"enum": [4, 8, 16]},
        "folds": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "k": {"type": "integer", "minimum": 2},
        "seed": {"type": "integer"},
        "detect_threshold": {"type": "number", "minimum": 0.0, "maximum": 1.0},
        "eval_patients": {"enum": ["test", "all"]},
        "seg": {"type": "object"},
        "detector": {"type": "object"},
    },
    "additionalProperties": False,
}


@dataclass
class ExperimentConfig:
    dataset_root: str
    output_root: str
    arch: str = "DRN"
    loss: str = "cross_entropy"
    mc_enabled: bool = False
    T: int = 10
    umap_kind: str = "entropy"
    tolerance: dict = field(default_factory=dict)
    patch_size: int = PATCH_SIZE
    folds: list[int] = field(default_factory=lambda: [0])
    k: int = 4
    seed: int = 0
    detect_threshold: float = 0.5
    eval_patients: str = "all"
    seg: dict = field(default_factory=dict)
    detector: dict = field(default_factory=dict)

    @classmethod
    def from_json(cls, payload: dict) -> "ExperimentConfig":
        errors = sorted(Draft7Validator(CONFIG_SCHEMA).iter_errors(payload), key=str)
        if errors:
            raise ConfigError("; ".join(e.message for e in errors))
        cfg = cls(**payload)
        if not Path(cfg.dataset_root).exists():
            raise ConfigError(f"dataset_root does not exist: {cfg.dataset_root}")
        if cfg.mc_enabled and cfg.T < 2:
            raise ConfigError("mc_enabled requires T >= 2")
        if cfg.umap_kind == "bayesian" and not cfg.mc_enabled:
            raise ConfigError("bayesian uncertainty maps require mc_enabled")
        if any(f >= cfg.k for f in cfg.folds):
            raise ConfigError(f"fold indices {cfg.folds} incompatible with k={cfg.k}")
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            payload = read_json(path)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_json(payload)

    def to_json(self) -> dict:
        return {
            "dataset_root": self.dataset_root,
            "output_root": self.output_root,
            "arch": self.arch,
            "loss": self.loss,
            "mc_enabled": self.mc_enabled,
            "T": self.T,
            "umap_kind": self.umap_kind,
            "tolerance": self.tolerance,
            "patch_size": self.patch_size,
            "folds": self.folds,
            "k": self.k,
            "seed": self.seed,
            "detect_threshold": self.detect_threshold,
            "eval_patients": self.eval_patients,
            "seg": self.seg,
            "detector": self.detector,
        }

    def config_hash(self) -> str:
        canon = json.dumps(self.to_json(), sort_keys=True).encode()
        return hashlib.sha256(canon).hexdigest()[:16]

    def tolerance_spec(self) -> ToleranceSpec:
        return ToleranceSpec(**self.tolerance) if self.tolerance else ToleranceSpec()

    def seg_config(self, fold: int) -> SegModelConfig:
        defaults = dict(arch=self.arch, loss=self.loss, seed=self.seed + fold)
        defaults.update(self.seg)
        return SegModelConfig(**defaults)

    def detector_config(self, fold: int) -> DetectorConfig:
        defaults = dict(
            patch_size=self.patch_size,
            umap_kind=self.umap_kind,
            seed=self.seed + fold,
        )
        defaults.update(self.detector)
        return DetectorConfig(**defaults)


# --- provenance bookkeeping ---


def _provenance_path(layout: ExperimentLayout, stage: str, fold: int) -> Path:
    if stage == "ingest":
        return layout.root / "provenance.json"
    return layout.provenance_path(fold)


def _stage_done(layout: ExperimentLayout, stage: str, fold: int) -> bool:
    path = _provenance_path(layout, stage, fold)
    if not path.exists():
        return False
    return stage in read_json(path)


def _mark_done(layout: ExperimentLayout, stage: str, fold: int, config: ExperimentConfig) -> None:
    path = _provenance_path(layout, stage, fold)
    record = read_json(path) if path.exists() else {}
    record[stage] = {
        "completed_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "config_hash": config.config_hash(),
        "seed": config.seed,
    }
    write_json(path, record)


# --- stage implementations ---


def _eval_ids(config: ExperimentConfig, split: FoldSplit, fold: int) -> list[str]:
    if config.eval_patients == "test":
        return split.test_ids(fold)
    return sorted(split.assignments)


def stage_ingest(config: ExperimentConfig, layout: ExperimentLayout) -> None:
    ids = list_patients(config.dataset_root)
    if not ids:
        raise ConfigError(f"no patients found under {config.dataset_root}")
    studies = []
    for pid in ids:
        study = preprocess_volume(load_acdc_patient(config.dataset_root, pid))
        layout.save_study(study)
        studies.append((study.patient_id, study.disease_group))
    split = make_stratified_folds(studies, k=config.k, seed=config.seed)
    write_json(layout.folds_path, split.to_json())
    write_json(layout.config_path, config.to_json())


def _load_split(layout: ExperimentLayout) -> FoldSplit:
    return FoldSplit.from_json(read_json(layout.folds_path))


def stage_train_seg(config: ExperimentConfig, layout: ExperimentLayout, fold: int) -> None:
    split = _load_split(layout)
    studies = [layout.load_study(pid) for pid in split.train_ids(fold)]
    seg_cfg = config.seg_config(fold)
    layout.make_fold_dirs(fold)
    train_segmentation(
        seg_cfg, collect_training_slices(studies), layout.checkpoint_dir(fold, seg_cfg.tag())
    )


def _load_seg_model(config: ExperimentConfig, layout: ExperimentLayout, fold: int):
    seg_cfg = config.seg_config(fold)
    ckpt_dir = layout.checkpoint_dir(fold, seg_cfg.tag())
    final = ckpt_dir / "model_final.pt"
    if not final.exists():
        raise MissingDependencyError(f"no segmentation checkpoint at {final}")
    snapshots = sorted(ckpt_dir.glob("snapshot_*.pt"))
    if seg_cfg.arch == "DN" and snapshots:
        members = [load_checkpoint(seg_cfg, p) for p in snapshots]
        return SnapshotEnsemble(members)
    return load_checkpoint(seg_cfg, final)


def stage_infer(config: ExperimentConfig, layout: ExperimentLayout, fold: int) -> None:
    split = _load_split(layout)
    model = _load_seg_model(config, layout, fold)
    for pid in sorted(split.assignments):
        study = layout.load_study(pid)
        for phase, data in study.phases.items():
            if config.mc_enabled:
                probs, std = mc_inference_summary(
                    model, data.image, T=config.T, seed=config.seed + fold
                )
                arrays = {"probs": probs, "std": std}
            else:
                pv = mc_inference(model, data.image, mc_enabled=False)
                arrays = {"probs": pv.probs}
            save_arrays(
                layout.volume_path(fold, "pred_probs", pid, phase),
                arrays,
                attrs={"T": config.T if config.mc_enabled else 1, "mc_enabled": config.mc_enabled},
            )
            labels = np.argmax(arrays["probs"], axis=-1).astype(np.uint8)
            labels = largest_component_filter(labels)
            labels_original = invert_resample_labels(labels, study.resample)
            save_arrays(
                layout.volume_path(fold, "pred_labels", pid, phase),
                {"labels": labels, "labels_original": labels_original},
                attrs={"spacing": np.asarray(study.spacing)},
            )


def stage_umap(config: ExperimentConfig, layout: ExperimentLayout, fold: int) -> None:
    split = _load_split(layout)
    source = (config.arch, config.loss, config.mc_enabled)
    for pid in sorted(split.assignments):
        for phase in ("ED", "ES"):
            arrays, attrs = load_arrays(layout.volume_path(fold, "pred_probs", pid, phase))
            if config.umap_kind == "entropy":
                pv = ProbabilityVolume(probs=np.asarray(arrays["probs"], dtype=np.float64))
                umap = entropy_map(pv, source=source)
            else:
                umap = bayesian_map_from_std(arrays["std"], T=int(attrs["T"]), source=source)
            save_arrays(
                layout.volume_path(fold, "umaps", pid, phase, suffix=f"_{config.umap_kind}"),
                {"values": umap.values},
                attrs={"kind": umap.kind, "T": umap.T or 0},
            )


def _load_umap(config, layout, fold, pid, phase) -> UncertaintyMap:
    path = layout.volume_path(fold, "umaps", pid, phase, suffix=f"_{config.umap_kind}")
    if not path.exists():
        raise MissingDependencyError(f"missing uncertainty map {path}")
    arrays, attrs = load_arrays(path)
    kind = attrs["kind"] if isinstance(attrs["kind"], str) else attrs["kind"].decode()
    return UncertaintyMap(
        values=np.asarray(arrays["values"]),
        kind=kind,
        T=int(attrs["T"]) or None,
    )


def stage_oracle(config: ExperimentConfig, layout: ExperimentLayout, fold: int) -> None:
    split = _load_split(layout)
    spec = config.tolerance_spec()
    for pid in sorted(split.assignments):
        study = layout.load_study(pid)
        for phase, data in study.phases.items():
            arrays, _ = load_arrays(layout.volume_path(fold, "pred_labels", pid, phase))
            fs = compute_failure_set(
                np.asarray(arrays["labels"]), data.reference, spec, config.patch_size
            )
            save_arrays(
                layout.volume_path(fold, "failure_sets", pid, phase),
                {"voxel_mask": fs.voxel_mask, "patch_labels": fs.patch_labels},
                attrs={
                    "outside_voxels": spec.outside_voxels,
                    "inside_voxels": spec.inside_voxels,
                    "min_cluster": spec.min_cluster,
                    "patch_size": config.patch_size,
                },
            )


def _detection_volumes(config, layout, fold, patient_ids):
    volumes = []
    for pid in patient_ids:
        study = layout.load_study(pid)
        for phase, data in study.phases.items():
            umap = _load_umap(config, layout, fold, pid, phase)
            fs_arrays, _ = load_arrays(layout.volume_path(fold, "failure_sets", pid, phase))
            grids = np.asarray(fs_arrays["patch_labels"], dtype=bool)
            volume = [
                DetectionSlice(
                    image=data.image[z],
                    umap=umap.values[z],
                    patch_grid=grids[z],
                )
                for z in range(data.image.shape[0])
            ]
            volumes.append(volume)
    return volumes


def stage_train_detect(config: ExperimentConfig, layout: ExperimentLayout, fold: int) -> None:
    split = _load_split(layout)
    det_cfg = config.detector_config(fold)
    volumes = _detection_volumes(config, layout, fold, split.train_ids(fold))
    dataset = DetectionDataset(volumes, patch_size=det_cfg.patch_size)
    out_dir = layout.checkpoint_dir(fold, f"detector-{config.umap_kind}")
    train_detector(det_cfg, dataset, out_dir)


def _load_detector(config: ExperimentConfig, layout: ExperimentLayout, fold: int):
    import torch

    det_cfg = config.detector_config(fold)
    path = layout.checkpoint_dir(fold, f"detector-{config.umap_kind}") / "detector_final.pt"
    if not path.exists():
        raise MissingDependencyError(f"no detector checkpoint at {path}")
    model = build_detector(det_cfg)
    model.load_state_dict(torch.load(path, map_location="cpu", weights_only=True))
    model.eval()
    return model


def stage_detect(config: ExperimentConfig, layout: ExperimentLayout, fold: int) -> None:
    split = _load_split(layout)
    model = _load_detector(config, layout, fold)
    for pid in sorted(split.assignments):
        study = layout.load_study(pid)
        for phase, data in study.phases.items():
            umap = _load_umap(config, layout, fold, pid, phase)
            arrays, _ = load_arrays(layout.volume_path(fold, "pred_labels", pid, phase))
            det = detect_failure_regions(
                model,
                data.image,
                umap,
                np.asarray(arrays["labels"]),
                threshold=config.detect_threshold,
                expected_umap_kind=config.umap_kind,
            )
            det.save(layout.volume_path(fold, "detections", pid, phase))


def stage_correct(config: ExperimentConfig, layout: ExperimentLayout, fold: int) -> None:
    split = _load_split(layout)
    for pid in sorted(split.assignments):
        study = layout.load_study(pid)
        for phase, data in study.phases.items():
            arrays, attrs = load_arrays(layout.volume_path(fold, "pred_labels", pid, phase))
            det = DetectionResult.load(layout.volume_path(fold, "detections", pid, phase))
            corrected = simulate_correction(
                np.asarray(arrays["labels"]),
                data.reference,
                det.voxel_regions(config.detect_threshold),
                patch_size=det.patch_size,
            )
            corrected_original = invert_resample_labels(corrected, study.resample)
            save_arrays(
                layout.volume_path(fold, "pred_labels", pid, phase, suffix="_corrected"),
                {"labels": corrected, "labels_original": corrected_original},
                attrs=dict(attrs),
            )


STRUCTURES = {"RV": 1, "LVM": 2, "LV": 3}
CLINICAL_KEYS = ("LV_EDV_ml", "LV_EF_pct", "RV_EDV_ml", "RV_EF_pct", "LVM_mass_g")


def _original_reference(config: ExperimentConfig, pid: str):
    return load_acdc_patient(config.dataset_root, pid)


def _volume_metrics(pred, ref, spacing):
    out = {}
    for name, cls in STRUCTURES.items():
        entry = {"dice": dice_3d(pred, ref, cls)}
        try:
            entry["hausdorff_mm"] = hausdorff_3d(pred, ref, cls, spacing)
        except Exception:
            entry["hausdorff_mm"] = None
        out[name] = entry
    return out


def stage_report(config: ExperimentConfig, layout: ExperimentLayout, fold: int) -> dict:
    split = _load_split(layout)
    eval_ids = _eval_ids(config, split, fold)
    scenarios = {"auto": "", "corrected": "_corrected"}
    per_volume = {s: [] for s in scenarios}
    clinical = {s: {k: [] for k in CLINICAL_KEYS} for s in scenarios}
    clinical_ref = {k: [] for k in CLINICAL_KEYS}
    slice_scores, slice_labels = [], []
    sensitivity_volumes = []
    rc_dir = layout.stage_dir(fold, "reports") / "risk_coverage"

    for pid in eval_ids:
        raw = _original_reference(config, pid)
        study = layout.load_study(pid)
        preds = {}
        for scenario, suffix in scenarios.items():
            labels = {}
            for phase in ("ED", "ES"):
                arrays, _ = load_arrays(
                    layout.volume_path(fold, "pred_labels", pid, phase, suffix=suffix)
                )
                labels[phase] = np.asarray(arrays["labels_original"])
            preds[scenario] = labels
        for phase in ("ED", "ES"):
            ref = raw.phases[phase].reference
            for scenario in scenarios:
                per_volume[scenario].append(
                    {
                        "patient": pid,
                        "phase": phase,
                        "metrics": _volume_metrics(preds[scenario][phase], ref, raw.spacing),
                    }
                )
            # detection evaluation on the 1.4 mm grid
            det = DetectionResult.load(layout.volume_path(fold, "detections", pid, phase))
            fs_arrays, _ = load_arrays(layout.volume_path(fold, "failure_sets", pid, phase))
            fmask = np.asarray(fs_arrays["voxel_mask"], dtype=bool)
            grids = np.asarray(fs_arrays["patch_labels"], dtype=bool)
            slice_scores.extend(det.slice_scores().tolist())
            slice_labels.extend(grids.any(axis=(1, 2)).tolist())
            sensitivity_volumes.append((det.scored_voxel_regions(), fmask))
            # risk-coverage per volume
            umap = _load_umap(config, layout, fold, pid, phase)
            arrays, _ = load_arrays(layout.volume_path(fold, "pred_labels", pid, phase))
            curve = risk_coverage_curve(
                umap, np.asarray(arrays["labels"]), study.phases[phase].reference
            )
            curve.write_csv(rc_dir / f"{pid}_{phase}.csv")
        for scenario in scenarios:
            try:
                values = clinical_metrics(
                    preds[scenario]["ED"], preds[scenario]["ES"], raw.spacing
                )
                for key in CLINICAL_KEYS:
                    clinical[scenario][key].append(values[key])
            except Exception:
                for key in CLINICAL_KEYS:
                    clinical[scenario][key].append(float("nan"))
        ref_values = clinical_metrics(
            raw.phases["ED"].reference, raw.phases["ES"].reference, raw.spacing
        )
        for key in CLINICAL_KEYS:
            clinical_ref[key].append(ref_values[key])

    report = {
        "fold": fold,
        "config_hash": config.config_hash(),
        "eval_patients": eval_ids,
        "structures": {},
        "clinical": {},
        "detection": {},
    }
    def _aggregate(volumes, name):
        dices = [v["metrics"][name]["dice"] for v in volumes]
        hds = [
            v["metrics"][name]["hausdorff_mm"]
            for v in volumes
            if v["metrics"][name]["hausdorff_mm"] is not None
        ]
        return {
            "dice_mean": float(np.mean(dices)),
            "dice_sd": float(np.std(dices)),
            "hausdorff_mean": float(np.mean(hds)) if hds else None,
            "hausdorff_sd": float(np.std(hds)) if hds else None,
        }

    for name in STRUCTURES:
        entry = {}
        for scenario in scenarios:
            entry[scenario] = _aggregate(per_volume[scenario], name)
            entry[scenario]["phases"] = {
                phase: _aggregate(
                    [v for v in per_volume[scenario] if v["phase"] == phase], name
                )
                for phase in ("ED", "ES")
            }
        a = [v["metrics"][name]["dice"] for v in per_volume["auto"]]
        b = [v["metrics"][name]["dice"] for v in per_volume["corrected"]]
        entry["dice_p_value"] = mann_whitney_u(a, b)
        hd_a = [
            v["metrics"][name]["hausdorff_mm"]
            for v in per_volume["auto"]
            if v["metrics"][name]["hausdorff_mm"] is not None
        ]
        hd_b = [
            v["metrics"][name]["hausdorff_mm"]
            for v in per_volume["corrected"]
            if v["metrics"][name]["hausdorff_mm"] is not None
        ]
        entry["hausdorff_p_value"] = mann_whitney_u(hd_a, hd_b) if hd_a and hd_b else None
        report["structures"][name] = entry

    all_auto = [
        v["metrics"][name]["dice"] for v in per_volume["auto"] for name in STRUCTURES
    ]
    all_corr = [
        v["metrics"][name]["dice"] for v in per_volume["corrected"] for name in STRUCTURES
    ]
    report["overall"] = {
        "auto_dice_mean": float(np.mean(all_auto)),
        "corrected_dice_mean": float(np.mean(all_corr)),
        "dice_improvement": float(np.mean(all_corr) - np.mean(all_auto)),
        "dice_p_value": mann_whitney_u(all_auto, all_corr),
    }

    for key in CLINICAL_KEYS:
        entry = {}
        abs_errors = {}
        for scenario in scenarios:
            values = np.asarray(clinical[scenario][key])
            ref_vals = np.asarray(clinical_ref[key])
            ok = ~np.isnan(values)
            abs_errors[scenario] = np.abs(values[ok] - ref_vals[ok])
            if ok.sum() >= 2 and np.ptp(values[ok]) > 0 and np.ptp(ref_vals[ok]) > 0:
                stats = agreement_stats(values[ok], ref_vals[ok])
                entry[scenario] = {
                    "pearson_r": stats.pearson_r,
                    "bias": stats.bias,
                    "bias_sd": stats.bias_sd,
                    "mae": stats.mae,
                }
            else:
                entry[scenario] = None
        if abs_errors["auto"].size and abs_errors["corrected"].size:
            entry["abs_error_p_value"] = mann_whitney_u(
                abs_errors["auto"], abs_errors["corrected"]
            )
        else:
            entry["abs_error_p_value"] = None
        report["clinical"][key] = entry

    try:
        pr = slice_detection_pr(np.asarray(slice_scores), np.asarray(slice_labels, dtype=bool))
        report["detection"]["slice_average_precision"] = pr.average_precision
        pr_path = layout.stage_dir(fold, "reports") / "slice_pr.csv"
        with open(pr_path, "w") as f:
            f.write("threshold,precision,recall\n")
            for t, p, r in zip(pr.thresholds, pr.precision, pr.recall):
                f.write(f"{t:.6g},{p:.6g},{r:.6g}\n")
    except Exception as exc:
        report["detection"]["slice_average_precision"] = None
        report["detection"]["note"] = str(exc)
    try:
        thr, sens, fps = voxel_sensitivity_vs_fp(sensitivity_volumes, patch_size=config.patch_size)
        with open(layout.stage_dir(fold, "reports") / "sensitivity_fp.csv", "w") as f:
            f.write("threshold,sensitivity,fp_regions_per_volume\n")
            for t, s, fp in zip(thr, sens, fps):
                f.write(f"{t:.6g},{s:.6g},{fp:.6g}\n")
        report["detection"]["sensitivity_at_default"] = float(
            sens[np.searchsorted(thr, config.detect_threshold, side="right") - 1]
        )
    except Exception as exc:
        report["detection"]["sensitivity_note"] = str(exc)

    write_json(layout.stage_dir(fold, "reports") / "report.json", report)
    with open(layout.stage_dir(fold, "reports") / "dice.csv", "w") as f:
        f.write("patient,phase,scenario,structure,dice,hausdorff_mm\n")
        for scenario in scenarios:
            for v in per_volume[scenario]:
                for name in STRUCTURES:
                    m = v["metrics"][name]
                    hd = "" if m["hausdorff_mm"] is None else f"{m['hausdorff_mm']:.4f}"
                    f.write(
                        f"{v['patient']},{v['phase']},{scenario},{name},{m['dice']:.6f},{hd}\n"
                    )
    return report


_STAGE_FUNCS = {
    "train-seg": stage_train_seg,
    "infer": stage_infer,
    "umap": stage_umap,
    "oracle": stage_oracle,
    "train-detect": stage_train_detect,
    "detect": stage_detect,
    "correct": stage_correct,
    "report": stage_report,
}


def run_pipeline(
    config: ExperimentConfig, stages, force: bool = False
) -> dict[str, str]:
    """Run the requested stages in order; completed stages are skipped.

    Raises MissingDependencyError when a stage's prerequisites have not run.
    """
    requested = [s for s in STAGE_ORDER if s in set(stages)]
    unknown = set(stages) - set(STAGE_ORDER)
    if unknown:
        raise ConfigError(f"unknown stages: {sorted(unknown)}")
    layout = ExperimentLayout(config.output_root)
    layout.root.mkdir(parents=True, exist_ok=True)
    status: dict[str, str] = {}
    with FileLock(str(layout.lock_path()) + ".lock"):
        for stage in requested:
            folds = [None] if stage == "ingest" else config.folds
            for fold in folds:
                for dep in STAGE_DEPS[stage]:
                    dep_fold = None if dep == "ingest" else fold
                    if not _stage_done(layout, dep, dep_fold):
                        raise MissingDependencyError(
                            f"stage {stage!r} requires {dep!r} to have completed"
                            + (f" for fold {fold}" if dep_fold is not None else "")
                        )
                if _stage_done(layout, stage, fold) and not force:
                    status[stage] = "skipped"
                    continue
                if stage == "ingest":
                    stage_ingest(config, layout)
                else:
                    _STAGE_FUNCS[stage](config, layout, fold)
                _mark_done(layout, stage, fold, config)
                status[stage] = "ran"
    return status


# --- ablations ---

MC_SAMPLE_SWEEP = (1, 3, 5, 7, 10, 20, 30, 60)
PATCH_SIZE_SWEEP = (4, 8, 16)
TOLERANCE_SWEEP = tuple((t, max(0, t - 1)) for t in range(7))


def _dice_over_volumes(config, layout, fold, patient_ids, labels_by_volume):
    dices = []
    for pid in patient_ids:
        raw = _original_reference(config, pid)
        study = layout.load_study(pid)
        for phase in ("ED", "ES"):
            labels = labels_by_volume[(pid, phase)]
            original = invert_resample_labels(labels, study.resample)
            for cls in STRUCTURES.values():
                dices.append(dice_3d(original, raw.phases[phase].reference, cls))
    return float(np.mean(dices))


def run_ablation(kind: str, config: ExperimentConfig, fold: int, values=None) -> list[dict]:
    """Parameter sweeps: MC sample count, detector patch size, tolerance threshold."""
    layout = ExperimentLayout(config.output_root)
    split = _load_split(layout)
    out_dir = layout.stage_dir(fold, "reports")
    out_dir.mkdir(parents=True, exist_ok=True)
    rows: list[dict] = []

    if kind == "mc_samples":
        model = _load_seg_model(config, layout, fold)
        eval_ids = split.test_ids(fold)
        for T in values or MC_SAMPLE_SWEEP:
            labels_by_volume = {}
            for pid in eval_ids:
                study = layout.load_study(pid)
                for phase, data in study.phases.items():
                    if T == 1:
                        pv = stochastic_single_inference(
                            model, data.image, seed=config.seed + fold
                        )
                        probs = pv.probs
                    else:
                        probs, _ = mc_inference_summary(
                            model, data.image, T=T, seed=config.seed + fold
                        )
                    labels = largest_component_filter(
                        np.argmax(probs, axis=-1).astype(np.uint8)
                    )
                    labels_by_volume[(pid, phase)] = labels
            rows.append(
                {"T": T, "dice_mean": _dice_over_volumes(config, layout, fold, eval_ids, labels_by_volume)}
            )
        path = out_dir / "ablation_mc_samples.csv"
        with open(path, "w") as f:
            f.write("T,dice_mean\n")
            for row in rows:
                f.write(f"{row['T']},{row['dice_mean']:.6f}\n")

    elif kind == "patch_size":
        sweep = list(values or PATCH_SIZE_SWEEP)
        for p in sweep:
            sub = ExperimentConfig.from_json({**config.to_json(), "patch_size": int(p)})
            stage_oracle(sub, layout, fold)
            stage_train_detect(sub, layout, fold)
            stage_detect(sub, layout, fold)
            sensitivity_volumes = []
            scores, labels = [], []
            for pid in _eval_ids(sub, split, fold):
                for phase in ("ED", "ES"):
                    det = DetectionResult.load(layout.volume_path(fold, "detections", pid, phase))
                    fs_arrays, _ = load_arrays(layout.volume_path(fold, "failure_sets", pid, phase))
                    fmask = np.asarray(fs_arrays["voxel_mask"], dtype=bool)
                    grids = np.asarray(fs_arrays["patch_labels"], dtype=bool)
                    scores.extend(det.slice_scores().tolist())
                    labels.extend(grids.any(axis=(1, 2)).tolist())
                    sensitivity_volumes.append((det.scored_voxel_regions(), fmask))
            ap = slice_detection_pr(np.asarray(scores), np.asarray(labels, dtype=bool)).average_precision
            thr, sens, fps = voxel_sensitivity_vs_fp(sensitivity_volumes, patch_size=int(p))
            at_default = int(np.searchsorted(thr, config.detect_threshold, side="right")) - 1
            rows.append(
                {
                    "patch_size": int(p),
                    "slice_ap": ap,
                    "sensitivity": float(sens[at_default]),
                    "fp_regions_per_volume": float(fps[at_default]),
                }
            )
        path = out_dir / "ablation_patch_size.csv"
        with open(path, "w") as f:
            f.write("patch_size,slice_ap,sensitivity,fp_regions_per_volume\n")
            for row in rows:
                f.write(
                    f"{row['patch_size']},{row['slice_ap']:.6f},{row['sensitivity']:.6f},{row['fp_regions_per_volume']:.6f}\n"
                )
        if sweep[-1] != config.patch_size:
            # the sweep overwrote the experiment's oracle/detector artifacts;
            # regenerate them at the configured patch size
            stage_oracle(config, layout, fold)
            stage_train_detect(config, layout, fold)
            stage_detect(config, layout, fold)

    elif kind == "tolerance":
        for outside, inside in values or TOLERANCE_SWEEP:
            total_failures = 0
            total_errors = 0
            for pid in _eval_ids(config, split, fold):
                study = layout.load_study(pid)
                for phase, data in study.phases.items():
                    arrays, _ = load_arrays(layout.volume_path(fold, "pred_labels", pid, phase))
                    pred = np.asarray(arrays["labels"])
                    spec = ToleranceSpec(outside, inside, config.tolerance_spec().min_cluster)
                    fs = compute_failure_set(pred, data.reference, spec, config.patch_size)
                    total_failures += int(fs.voxel_mask.sum())
                    total_errors += int((pred != data.reference).sum())
            rows.append(
                {
                    "outside_voxels": outside,
                    "inside_voxels": inside,
                    "failure_fraction": total_failures / max(total_errors, 1),
                }
            )
        path = out_dir / "ablation_tolerance.csv"
        with open(path, "w") as f:
            f.write("outside_voxels,inside_voxels,failure_fraction\n")
            for row in rows:
                f.write(
                    f"{row['outside_voxels']},{row['inside_voxels']},{row['failure_fraction']:.6f}\n"
                )
    else:
        raise ConfigError(f"unknown ablation kind {kind!r}")
    return rows
