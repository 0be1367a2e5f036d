"""Build (once) and serve a small phantom experiment for integration tests.

Prints READY once the pipeline artifacts exist and the HTTP server is about
to start listening.
"""

import argparse
import sys
from pathlib import Path


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--root", required=True)
    parser.add_argument("--port", type=int, required=True)
    parser.add_argument("--patients", type=int, default=10)
    args = parser.parse_args()

    import uvicorn

    from cardiacuq.phantom import generate_phantom_dataset
    from cardiacuq.pipeline import STAGE_ORDER, ExperimentConfig, run_pipeline
    from cardiacuq.service.app import create_app

    root = Path(args.root)
    data_root = root / "data"
    if not data_root.exists():
        generate_phantom_dataset(data_root, n_patients=args.patients, seed=11, size=(96, 96))
    config = ExperimentConfig.from_json(
        {
            "dataset_root": str(data_root),
            "output_root": str(root / "exp"),
            "arch": "DRN",
            "loss": "cross_entropy",
            "umap_kind": "entropy",
            "folds": [0],
            "k": 2,
            "seed": 0,
            "eval_patients": "all",
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
    )
    run_pipeline(config, list(STAGE_ORDER))
    app = create_app(config, fold=0)
    print("READY", flush=True)
    sys.stdout.flush()
    uvicorn.run(app, host="127.0.0.1", port=args.port, log_level="warning")


if __name__ == "__main__":
    main()
