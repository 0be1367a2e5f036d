import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cardiacuq.io import nifti


def pytest_runtest_logreport(report):
    """One visible PASS/FAIL line per acceptance criterion."""
    if report.when == "call" and "test_acceptance.py" in report.nodeid:
        outcome = "PASS" if report.passed else "FAIL"
        name = report.nodeid.split("::")[-1]
        print(f"\n[ACCEPTANCE {outcome}] {name} ({report.duration:.1f}s)", flush=True)


def write_synthetic_patient(
    root: Path,
    patient_id: str = "patient001",
    group: str = "DCM",
    shape_xyz=(32, 28, 10),
    spacing=(1.5625, 1.5625, 10.0),
    ed_frame: int = 1,
    es_frame: int = 12,
    rng=None,
    bad_label: bool = False,
):
    """Write a minimal ACDC-layout patient directory and return its path."""
    rng = rng or np.random.default_rng(0)
    pdir = root / patient_id
    pdir.mkdir(parents=True, exist_ok=True)
    (pdir / "Info.cfg").write_text(
        f"ED: {ed_frame}\nES: {es_frame}\nGroup: {group}\nHeight: 170.0\nNbFrame: 28\nWeight: 70.0\n"
    )
    nx, ny, nz = shape_xyz
    for frame in (ed_frame, es_frame):
        img = rng.uniform(0, 500, size=(nx, ny, nz)).astype(np.float32)
        ref = np.zeros((nx, ny, nz), dtype=np.uint8)
        cx, cy = nx // 2, ny // 2
        ref[cx - 4 : cx + 4, cy - 4 : cy + 4, 2:8] = 3
        ref[cx - 6 : cx - 4, cy - 6 : cy + 6, 2:8] = 2
        ref[cx + 4 : cx + 7, cy - 5 : cy + 5, 2:8] = 1
        if bad_label:
            ref[0, 0, 0] = 4
        nifti.write(pdir / f"{patient_id}_frame{frame:02d}.nii.gz", img, spacing)
        nifti.write(pdir / f"{patient_id}_frame{frame:02d}_gt.nii.gz", ref, spacing)
    return pdir


@pytest.fixture
def acdc_root(tmp_path):
    write_synthetic_patient(tmp_path)
    return tmp_path


MICRO_CONFIG = {
    "arch": "DRN",
    "loss": "cross_entropy",
    "mc_enabled": False,
    "T": 10,
    "umap_kind": "entropy",
    "folds": [0],
    "k": 2,
    "seed": 0,
    "eval_patients": "all",
    "detect_threshold": 0.5,
    "seg": {
        "iterations": 100,
        "batch_size": 4,
        "width_scale": 0.0625,
        "lr_schedule": {"kind": "step", "base_lr": 0.003, "decay": 0.1, "every": 25000},
    },
    "detector": {
        "iterations": 80,
        "batch_size": 8,
        "width_scale": 0.125,
        "lr_schedule": {"kind": "step", "base_lr": 0.002, "decay": 0.1, "every": 10000},
    },
}


@pytest.fixture(scope="session")
def micro_experiment(tmp_path_factory):
    """A tiny but complete experiment: 10 phantom patients, all stages run."""
    from cardiacuq.io.layout import ExperimentLayout
    from cardiacuq.phantom import generate_phantom_dataset
    from cardiacuq.pipeline import STAGE_ORDER, ExperimentConfig, run_pipeline

    root = tmp_path_factory.mktemp("micro")
    data_root = root / "data"
    generate_phantom_dataset(data_root, n_patients=10, seed=1, size=(96, 96))
    payload = dict(MICRO_CONFIG)
    payload["dataset_root"] = str(data_root)
    payload["output_root"] = str(root / "exp")
    config = ExperimentConfig.from_json(payload)
    run_pipeline(config, list(STAGE_ORDER))
    return config, ExperimentLayout(config.output_root)
