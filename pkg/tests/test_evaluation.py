import numpy as np
import pytest

from cardiacuq.errors import OutOfBoundsRegionError, UndefinedMetricError
from cardiacuq.evaluation import (
    agreement_stats,
    clinical_metrics,
    dice_3d,
    hausdorff_3d,
    mann_whitney_u,
    per_structure_metrics,
    simulate_correction,
    slice_detection_pr,
    volume_ml,
    voxel_sensitivity_vs_fp,
)
from oracles import brute_average_precision, brute_dice, brute_hausdorff


class TestDice:
    def test_identical(self):
        ref = np.zeros((3, 5, 5), dtype=np.uint8)
        ref[1, 1:4, 1:4] = 3
        assert dice_3d(ref, ref, 3) == 1.0

    def test_disjoint(self):
        a = np.zeros((1, 6, 6), dtype=np.uint8)
        b = a.copy()
        a[0, 0:2, 0:2] = 1
        b[0, 4:6, 4:6] = 1
        assert dice_3d(a, b, 1) == 0.0

    def test_shifted_square(self):
        a = np.zeros((1, 6, 6), dtype=np.uint8)
        b = a.copy()
        a[0, 1:3, 1:3] = 2
        b[0, 2:4, 1:3] = 2
        assert dice_3d(a, b, 2) == pytest.approx(0.5)

    def test_both_empty_is_one(self):
        z = np.zeros((1, 4, 4), dtype=np.uint8)
        assert dice_3d(z, z, 1) == 1.0

    def test_one_empty_is_zero(self):
        z = np.zeros((1, 4, 4), dtype=np.uint8)
        a = z.copy()
        a[0, 0, 0] = 1
        assert dice_3d(a, z, 1) == 0.0

    def test_permutation_invariance(self):
        rng = np.random.default_rng(0)
        a = rng.integers(0, 4, size=(2, 5, 5)).astype(np.uint8)
        b = rng.integers(0, 4, size=(2, 5, 5)).astype(np.uint8)
        perm = rng.permutation(a.size)
        ap = a.ravel()[perm].reshape(a.shape)
        bp = b.ravel()[perm].reshape(b.shape)
        for cls in range(4):
            assert dice_3d(a, b, cls) == pytest.approx(dice_3d(ap, bp, cls))


class TestHausdorff:
    def test_identical_zero(self):
        ref = np.zeros((3, 6, 6), dtype=np.uint8)
        ref[1, 2:5, 2:5] = 1
        assert hausdorff_3d(ref, ref, 1, (1.4, 1.4, 10.0)) == 0.0

    def test_single_voxels_spacing(self):
        a = np.zeros((2, 3, 3), dtype=np.uint8)
        b = a.copy()
        a[0, 0, 0] = 1
        b[1, 0, 0] = 1
        assert hausdorff_3d(a, b, 1, (1.4, 1.4, 10.0)) == pytest.approx(10.0)

    def test_symmetry(self):
        rng = np.random.default_rng(1)
        a = (rng.uniform(size=(3, 6, 6)) > 0.7).astype(np.uint8)
        b = (rng.uniform(size=(3, 6, 6)) > 0.7).astype(np.uint8)
        sp = (1.4, 1.4, 7.0)
        assert hausdorff_3d(a, b, 1, sp) == pytest.approx(hausdorff_3d(b, a, 1, sp))

    def test_empty_mask_raises(self):
        z = np.zeros((1, 4, 4), dtype=np.uint8)
        a = z.copy()
        a[0, 1, 1] = 1
        with pytest.raises(UndefinedMetricError):
            hausdorff_3d(a, z, 1, (1, 1, 1))

    def test_matches_brute_force(self):
        rng = np.random.default_rng(7)
        for trial in range(25):
            shape = tuple(rng.integers(2, 9, size=3))
            a = (rng.uniform(size=shape) > 0.6).astype(np.uint8)
            b = (rng.uniform(size=shape) > 0.6).astype(np.uint8)
            if not a.any() or not b.any():
                continue
            spacing = (float(rng.uniform(1, 2)), float(rng.uniform(1, 2)), float(rng.uniform(5, 10)))
            got = hausdorff_3d(a, b, 1, spacing)
            expected = brute_hausdorff(a, b, 1, spacing)
            assert got == pytest.approx(expected, abs=1e-9)


class TestClinical:
    def test_volume(self):
        labels = np.zeros((10, 20, 20), dtype=np.uint8)
        labels.ravel()[:1000] = 3
        assert volume_ml(labels, 3, (1.4, 1.4, 10.0)) == pytest.approx(19.6)

    def test_ef(self):
        ed = np.zeros((5, 20, 20), dtype=np.uint8)
        es = ed.copy()
        ed.ravel()[:1000] = 3
        es.ravel()[:400] = 3
        ed.ravel()[1000:1200] = 1
        es.ravel()[400:480] = 1
        m = clinical_metrics(ed, es, (10.0, 10.0, 10.0))
        assert m["LV_EF_pct"] == pytest.approx(60.0)
        assert m["RV_EF_pct"] == pytest.approx(60.0)

    def test_mass_density(self):
        ed = np.zeros((5, 20, 20), dtype=np.uint8)
        ed.ravel()[:100] = 2
        ed.ravel()[100:110] = 3
        ed.ravel()[110:120] = 1
        m = clinical_metrics(ed, ed, (10.0, 10.0, 10.0))
        assert m["LVM_mass_g"] == pytest.approx(100.0 * 1.05)

    def test_zero_edv_raises(self):
        z = np.zeros((1, 4, 4), dtype=np.uint8)
        with pytest.raises(UndefinedMetricError):
            clinical_metrics(z, z, (1.4, 1.4, 10.0))


class TestAgreement:
    def test_identical(self):
        s = agreement_stats([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        assert s.pearson_r == pytest.approx(1.0)
        assert s.bias == 0.0 and s.bias_sd == 0.0 and s.mae == 0.0

    def test_constant_offset(self):
        s = agreement_stats([3.0, 4.0, 5.0], [1.0, 2.0, 3.0])
        assert s.pearson_r == pytest.approx(1.0)
        assert s.bias == pytest.approx(2.0)
        assert s.bias_sd == pytest.approx(0.0)
        assert s.mae == pytest.approx(2.0)

    def test_anticorrelated(self):
        s = agreement_stats([3.0, 2.0, 1.0], [1.0, 2.0, 3.0])
        assert s.pearson_r == pytest.approx(-1.0)

    def test_zero_variance_raises(self):
        with pytest.raises(UndefinedMetricError):
            agreement_stats([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])


class TestMannWhitney:
    def test_identical_samples(self):
        a = list(range(10))
        assert mann_whitney_u(a, a) > 0.9

    def test_fully_separated(self):
        a = list(range(10))
        b = [x + 100 for x in range(10)]
        assert mann_whitney_u(a, b) < 0.001

    def test_symmetry(self):
        rng = np.random.default_rng(0)
        a = rng.normal(size=30)
        b = rng.normal(0.5, size=25)
        assert mann_whitney_u(a, b) == pytest.approx(mann_whitney_u(b, a))

    def test_large_samples_with_ties(self):
        rng = np.random.default_rng(1)
        a = rng.integers(0, 5, size=50).astype(float)
        b = rng.integers(2, 7, size=60).astype(float)
        p = mann_whitney_u(a, b)
        assert 0.0 < p < 0.05


def _correction_case(seed):
    rng = np.random.default_rng(seed)
    ref = np.zeros((3, 24, 24), dtype=np.uint8)
    for z in range(3):
        ref[z, 6:18, 6:18] = 3
        ref[z, 4:6, 4:20] = 2
    pred = ref.copy()
    noise = rng.uniform(size=ref.shape) > 0.85
    pred[noise] = rng.integers(0, 4, size=int(noise.sum()))
    n_regions = int(rng.integers(0, 12))
    regions = [
        (int(rng.integers(0, 3)), int(rng.integers(0, 3)) * 8, int(rng.integers(0, 3)) * 8)
        for _ in range(n_regions)
    ]
    return pred, ref, regions


class TestSimulateCorrection:
    def test_all_regions_restores_reference(self):
        pred, ref, _ = _correction_case(0)
        regions = [(z, r * 8, c * 8) for z in range(3) for r in range(3) for c in range(3)]
        corrected = simulate_correction(pred, ref, regions)
        np.testing.assert_array_equal(corrected, ref)
        for cls in (1, 2, 3):
            assert dice_3d(corrected, ref, cls) == 1.0
        m = per_structure_metrics(corrected, ref, (1.4, 1.4, 8.0))
        assert all(v["hausdorff_mm"] in (0.0, None) for v in m.values())

    def test_no_regions_identity(self):
        pred, ref, _ = _correction_case(1)
        np.testing.assert_array_equal(simulate_correction(pred, ref, []), pred)

    def test_dice_never_decreases(self):
        for seed in range(100):
            pred, ref, regions = _correction_case(seed)
            corrected = simulate_correction(pred, ref, regions)
            for cls in range(4):
                assert dice_3d(corrected, ref, cls) >= dice_3d(pred, ref, cls) - 1e-12

    def test_fn_region_strictly_improves(self):
        ref = np.zeros((1, 16, 16), dtype=np.uint8)
        ref[0, 4:12, 4:12] = 3
        pred = ref.copy()
        pred[0, 8:10, 8:11] = 0  # 3 FN voxels of LV inside region (1,1)
        before = dice_3d(pred, ref, 3)
        corrected = simulate_correction(pred, ref, [(0, 8, 8)])
        assert dice_3d(corrected, ref, 3) > before

    def test_out_of_bounds_raises(self):
        pred, ref, _ = _correction_case(2)
        with pytest.raises(OutOfBoundsRegionError):
            simulate_correction(pred, ref, [(0, 200, 0)])
        with pytest.raises(OutOfBoundsRegionError):
            simulate_correction(pred, ref, [(7, 0, 0)])

    def test_partial_window_clips(self):
        pred, ref, _ = _correction_case(3)
        corrected = simulate_correction(pred, ref, [(0, 20, 20)])
        np.testing.assert_array_equal(corrected[0, 20:, 20:], ref[0, 20:, 20:])


class TestSliceDetectionPr:
    def test_perfect_scores(self):
        labels = np.array([1, 0, 1, 0, 1], dtype=bool)
        curve = slice_detection_pr(labels.astype(float), labels)
        assert curve.average_precision == pytest.approx(1.0)

    def test_inverted_scores_balanced(self):
        labels = np.array([1] * 10 + [0] * 10, dtype=bool)
        scores = np.concatenate([np.linspace(0.0, 0.4, 10), np.linspace(0.6, 1.0, 10)])
        curve = slice_detection_pr(scores, labels)
        assert curve.average_precision == pytest.approx(
            brute_average_precision(scores, labels)
        )
        assert curve.average_precision == pytest.approx(0.5, abs=1e-9)

    def test_matches_brute_force_random(self):
        rng = np.random.default_rng(4)
        for _ in range(40):
            n = int(rng.integers(2, 13))
            labels = rng.uniform(size=n) > 0.5
            if not labels.any():
                labels[0] = True
            scores = rng.choice([0.1, 0.3, 0.5, 0.7, 0.9], size=n)
            curve = slice_detection_pr(scores, labels)
            assert curve.average_precision == pytest.approx(
                brute_average_precision(scores, labels), abs=1e-12
            )

    def test_no_positives_raises(self):
        with pytest.raises(UndefinedMetricError):
            slice_detection_pr(np.array([0.5, 0.2]), np.array([False, False]))


class TestSensitivityVsFp:
    def _volume(self):
        fmask = np.zeros((2, 16, 16), dtype=bool)
        fmask[0, 0:2, 0:2] = True  # failure inside region (0, 0, 0)
        regions = [
            (0, 0, 0, 0.9),   # true positive region
            (0, 8, 8, 0.8),   # false positive region
            (1, 0, 0, 0.3),   # false positive below default threshold sweep point
        ]
        return regions, fmask

    def test_all_flagged(self):
        thr, sens, fps = voxel_sensitivity_vs_fp([self._volume()], thresholds=[0.0])
        assert sens[0] == 1.0
        assert fps[0] == 2.0

    def test_none_flagged(self):
        thr, sens, fps = voxel_sensitivity_vs_fp([self._volume()], thresholds=[1.1])
        assert sens[0] == 0.0 and fps[0] == 0.0

    def test_oracle_detector_reaches_perfect_corner(self):
        regions, fmask = self._volume()
        oracle_regions = [(z, r, c, 1.0 if fmask[z, r : r + 8, c : c + 8].any() else 0.0)
                          for z, r, c, _ in regions]
        thr, sens, fps = voxel_sensitivity_vs_fp([(oracle_regions, fmask)], thresholds=[0.5])
        assert sens[0] == 1.0 and fps[0] == 0.0

    def test_empty_failure_set_raises(self):
        regions, fmask = self._volume()
        with pytest.raises(UndefinedMetricError):
            voxel_sensitivity_vs_fp([(regions, np.zeros_like(fmask))])

    def test_monotone_in_threshold(self):
        vols = [self._volume()]
        thr, sens, fps = voxel_sensitivity_vs_fp(vols)
        assert np.all(np.diff(sens) <= 0)
