import json

import numpy as np
import pytest
from click.testing import CliRunner

from cardiacuq.cli import main as cli_main
from cardiacuq.errors import ConfigError, MissingDependencyError
from cardiacuq.io.layout import load_arrays, read_json
from cardiacuq.pipeline import (
    STAGE_ORDER,
    ExperimentConfig,
    run_ablation,
    run_pipeline,
)


class TestConfigValidation:
    def _payload(self, tmp_path, **over):
        payload = {
            "dataset_root": str(tmp_path),
            "output_root": str(tmp_path / "exp"),
        }
        payload.update(over)
        return payload

    def test_minimal_config(self, tmp_path):
        cfg = ExperimentConfig.from_json(self._payload(tmp_path))
        assert cfg.arch == "DRN" and cfg.patch_size == 8

    def test_unknown_key_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_json(self._payload(tmp_path, nonsense=1))

    def test_bad_enum_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_json(self._payload(tmp_path, arch="resnet"))

    def test_missing_dataset_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_json(
                {"dataset_root": str(tmp_path / "nope"), "output_root": str(tmp_path)}
            )

    def test_bayesian_requires_mc(self, tmp_path):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_json(self._payload(tmp_path, umap_kind="bayesian"))

    def test_twelve_paper_combinations_expressible(self, tmp_path):
        combos = []
        for arch, losses in (
            ("DN", ("brier", "soft_dice")),
            ("DRN", ("cross_entropy", "soft_dice")),
            ("U-net", ("cross_entropy", "soft_dice")),
        ):
            for loss in losses:
                for umap, mc in (("entropy", False), ("bayesian", True)):
                    combos.append(
                        ExperimentConfig.from_json(
                            self._payload(
                                tmp_path, arch=arch, loss=loss, umap_kind=umap, mc_enabled=mc
                            )
                        )
                    )
        assert len(combos) == 12


class TestStageGraph:
    def test_report_without_predictions(self, tmp_path):
        cfg = ExperimentConfig.from_json(
            {"dataset_root": str(tmp_path), "output_root": str(tmp_path / "exp")}
        )
        with pytest.raises(MissingDependencyError):
            run_pipeline(cfg, ["report"])

    def test_train_before_ingest(self, tmp_path):
        cfg = ExperimentConfig.from_json(
            {"dataset_root": str(tmp_path), "output_root": str(tmp_path / "exp")}
        )
        with pytest.raises(MissingDependencyError):
            run_pipeline(cfg, ["train-seg"])

    def test_unknown_stage(self, tmp_path):
        cfg = ExperimentConfig.from_json(
            {"dataset_root": str(tmp_path), "output_root": str(tmp_path / "exp")}
        )
        with pytest.raises(ConfigError):
            run_pipeline(cfg, ["deploy"])


class TestMicroPipeline:
    def test_all_artifacts_exist(self, micro_experiment):
        config, layout = micro_experiment
        assert layout.folds_path.exists()
        split = read_json(layout.folds_path)
        assert len(split["assignments"]) == 10
        for pid in sorted(split["assignments"]):
            for phase in ("ED", "ES"):
                for stage in ("pred_probs", "pred_labels", "umaps", "failure_sets", "detections"):
                    suffix = "_entropy" if stage == "umaps" else ""
                    path = layout.volume_path(0, stage, pid, phase, suffix=suffix)
                    assert path.exists(), f"{stage} missing for {pid}/{phase}"
                corrected = layout.volume_path(0, "pred_labels", pid, phase, suffix="_corrected")
                assert corrected.exists()
        report_path = layout.stage_dir(0, "reports") / "report.json"
        assert report_path.exists()
        assert (layout.stage_dir(0, "reports") / "dice.csv").exists()
        assert (layout.stage_dir(0, "reports") / "risk_coverage").is_dir()

    def test_report_contents(self, micro_experiment):
        config, layout = micro_experiment
        report = read_json(layout.stage_dir(0, "reports") / "report.json")
        assert set(report["structures"]) == {"RV", "LVM", "LV"}
        overall = report["overall"]
        assert 0.0 <= overall["auto_dice_mean"] <= 1.0
        assert overall["corrected_dice_mean"] >= overall["auto_dice_mean"] - 1e-9

    def test_correction_never_hurts_voxelwise(self, micro_experiment):
        config, layout = micro_experiment
        split = read_json(layout.folds_path)
        pid = sorted(split["assignments"])[0]
        before, _ = load_arrays(layout.volume_path(0, "pred_labels", pid, "ED"))
        after, _ = load_arrays(layout.volume_path(0, "pred_labels", pid, "ED", suffix="_corrected"))
        study = layout.load_study(pid)
        ref = study.phases["ED"].reference
        err_before = int((np.asarray(before["labels"]) != ref).sum())
        err_after = int((np.asarray(after["labels"]) != ref).sum())
        assert err_after <= err_before

    def test_stages_skip_when_completed(self, micro_experiment):
        config, layout = micro_experiment
        status = run_pipeline(config, ["train-seg", "infer"])
        assert status == {"train-seg": "skipped", "infer": "skipped"}

    def test_provenance_recorded(self, micro_experiment):
        config, layout = micro_experiment
        prov = read_json(layout.provenance_path(0))
        for stage in STAGE_ORDER[1:]:
            assert stage in prov
            assert prov[stage]["config_hash"] == config.config_hash()

    def test_umap_values_in_range(self, micro_experiment):
        config, layout = micro_experiment
        split = read_json(layout.folds_path)
        pid = sorted(split["assignments"])[0]
        arrays, attrs = load_arrays(layout.volume_path(0, "umaps", pid, "ED", suffix="_entropy"))
        v = np.asarray(arrays["values"])
        assert v.min() >= 0.0 and v.max() <= 1.0

    def test_forced_rerun_is_byte_identical(self, micro_experiment):
        # same config + seeds -> identical reports (timestamps live only in
        # provenance, never in report artifacts)
        config, layout = micro_experiment
        report_path = layout.stage_dir(0, "reports") / "report.json"
        dice_path = layout.stage_dir(0, "reports") / "dice.csv"
        before = (report_path.read_bytes(), dice_path.read_bytes())
        run_pipeline(config, [s for s in STAGE_ORDER if s != "ingest"], force=True)
        after = (report_path.read_bytes(), dice_path.read_bytes())
        assert before == after


class TestAblations:
    def test_tolerance_sweep_monotone(self, micro_experiment):
        config, layout = micro_experiment
        rows = run_ablation("tolerance", config, fold=0)
        fracs = [r["failure_fraction"] for r in rows]
        assert all(b <= a + 1e-12 for a, b in zip(fracs, fracs[1:]))
        assert (layout.stage_dir(0, "reports") / "ablation_tolerance.csv").exists()

    def test_mc_sweep_values(self, micro_experiment):
        config, layout = micro_experiment
        rows = run_ablation("mc_samples", config, fold=0, values=(1, 3))
        assert [r["T"] for r in rows] == [1, 3]
        assert all(0.0 <= r["dice_mean"] <= 1.0 for r in rows)

    def test_patch_size_sweep_restores_base_artifacts(self, micro_experiment):
        config, layout = micro_experiment
        rows = run_ablation("patch_size", config, fold=0, values=(16,))
        assert rows[0]["patch_size"] == 16
        assert (layout.stage_dir(0, "reports") / "ablation_patch_size.csv").exists()
        # base artifacts (patch size 8) must be back in place afterwards
        split = read_json(layout.folds_path)
        pid = sorted(split["assignments"])[0]
        _, attrs = load_arrays(layout.volume_path(0, "failure_sets", pid, "ED"))
        assert int(attrs["patch_size"]) == config.patch_size

    def test_default_sweeps_match_published_grids(self):
        from cardiacuq.pipeline import MC_SAMPLE_SWEEP, PATCH_SIZE_SWEEP

        assert MC_SAMPLE_SWEEP == (1, 3, 5, 7, 10, 20, 30, 60)
        assert PATCH_SIZE_SWEEP == (4, 8, 16)


class TestCli:
    def test_phantom_command(self, tmp_path):
        runner = CliRunner()
        result = runner.invoke(
            cli_main, ["phantom", "--out", str(tmp_path / "ph"), "--patients", "2", "--seed", "3"]
        )
        assert result.exit_code == 0
        assert (tmp_path / "ph" / "patient001" / "Info.cfg").exists()

    def test_config_error_exit_code_2(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"dataset_root": str(tmp_path / "missing")}))
        runner = CliRunner()
        result = runner.invoke(cli_main, ["ingest", "-c", str(bad)])
        assert result.exit_code == 2

    def test_missing_dependency_exit_code_3(self, tmp_path):
        (tmp_path / "data").mkdir()
        cfg = tmp_path / "cfg.json"
        cfg.write_text(
            json.dumps(
                {"dataset_root": str(tmp_path / "data"), "output_root": str(tmp_path / "exp")}
            )
        )
        runner = CliRunner()
        result = runner.invoke(cli_main, ["report", "-c", str(cfg)])
        assert result.exit_code == 3

    def test_ingest_runs(self, tmp_path):
        from cardiacuq.phantom import generate_phantom_dataset

        generate_phantom_dataset(tmp_path / "data", n_patients=10, seed=2, size=(96, 96))
        cfg = tmp_path / "cfg.json"
        cfg.write_text(
            json.dumps(
                {
                    "dataset_root": str(tmp_path / "data"),
                    "output_root": str(tmp_path / "exp"),
                    "k": 2,
                }
            )
        )
        runner = CliRunner()
        result = runner.invoke(cli_main, ["ingest", "-c", str(cfg)])
        assert result.exit_code == 0, result.output
        assert (tmp_path / "exp" / "folds.json").exists()

    def test_ablate_command(self, tmp_path, micro_experiment):
        config, layout = micro_experiment
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps(config.to_json()))
        runner = CliRunner()
        result = runner.invoke(
            cli_main, ["ablate", "-c", str(cfg), "--kind", "tolerance", "--fold", "0"]
        )
        assert result.exit_code == 0, result.output
        assert "failure_fraction" in result.output

    def test_dataset_root_env_override(self, tmp_path, monkeypatch):
        from cardiacuq.phantom import generate_phantom_dataset

        generate_phantom_dataset(tmp_path / "real", n_patients=10, seed=4, size=(96, 96))
        (tmp_path / "decoy").mkdir()
        cfg = tmp_path / "cfg.json"
        cfg.write_text(
            json.dumps(
                {
                    "dataset_root": str(tmp_path / "decoy"),
                    "output_root": str(tmp_path / "exp2"),
                    "k": 2,
                }
            )
        )
        monkeypatch.setenv("CARDIACUQ_DATASET_ROOT", str(tmp_path / "real"))
        runner = CliRunner()
        result = runner.invoke(cli_main, ["ingest", "-c", str(cfg)])
        assert result.exit_code == 0, result.output
        folds = json.loads((tmp_path / "exp2" / "folds.json").read_text())
        assert len(folds["assignments"]) == 10
