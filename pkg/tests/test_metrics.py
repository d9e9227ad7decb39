import numpy as np
import pytest

from liddense.depth_io import DepthMap
from liddense.errors import (
    DimensionMismatchError,
    EmptyInputError,
    NonPositiveDepthError,
)
from liddense.metrics import (
    EvalReport,
    accumulate_pair,
    evaluate,
    evaluate_oracle,
    report_from_sums,
)

METRICS = ("rmse", "mae", "irmse", "imae", "sq_error_rel", "abs_error_rel")


def random_pair(rng, h=32, w=32, density=0.5):
    gt = np.where(rng.uniform(size=(h, w)) < density, rng.uniform(0.5, 80.0, (h, w)), 0.0)
    pred = rng.uniform(0.5, 80.0, size=(h, w))
    return DepthMap.from_array(pred), DepthMap.from_array(gt)


def rel_diff(a: float, b: float) -> float:
    return abs(a - b) / max(1e-300, abs(a), abs(b))


class TestEvaluate:
    def test_identical_maps_give_zero(self):
        m = DepthMap.from_array(np.full((4, 4), 7.5))
        report = evaluate(m, m)
        for name in METRICS:
            assert getattr(report, name) == 0.0
        assert report.n_valid == 16

    def test_single_pixel_hand_case(self):
        gt = DepthMap.from_array(np.array([[2.0]]))
        pred = DepthMap.from_array(np.array([[2.5]]))
        r = evaluate(pred, gt)
        assert abs(r.rmse - 500.0) <= 1e-12
        assert abs(r.mae - 500.0) <= 1e-12
        assert abs(r.irmse - 100.0) <= 1e-12
        assert abs(r.imae - 100.0) <= 1e-12
        assert abs(r.abs_error_rel - 25.0) <= 1e-12
        assert abs(r.sq_error_rel - 12.5) <= 1e-12

    def test_gt_mask_governs(self):
        gt = DepthMap.from_array(np.array([[2.0, 0.0]]))
        pred = DepthMap.from_array(np.array([[2.0, 50.0]]))  # wild where gt invalid
        r = evaluate(pred, gt)
        assert r.rmse == 0.0 and r.n_valid == 1

    def test_no_valid_gt_rejected(self):
        m = DepthMap.from_array(np.ones((2, 2)))
        with pytest.raises(EmptyInputError):
            evaluate(m, DepthMap.from_array(np.zeros((2, 2))))

    def test_nonpositive_pred_names_pixel(self):
        gt = DepthMap.from_array(np.full((2, 2), 3.0))
        pred = np.full((2, 2), 3.0)
        pred[1, 1] = 0.0
        with pytest.raises(NonPositiveDepthError, match=r"row=1, col=1"):
            evaluate(DepthMap.from_array(pred), gt)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            evaluate(
                DepthMap.from_array(np.ones((2, 3))),
                DepthMap.from_array(np.ones((3, 2))),
            )


class TestOracleAgreement:
    def test_random_maps_agree_to_1e9(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            pred, gt = random_pair(rng)
            fast, slow = evaluate(pred, gt), evaluate_oracle(pred, gt)
            for name in METRICS:
                assert rel_diff(getattr(fast, name), getattr(slow, name)) < 1e-9
            assert fast.n_valid == slow.n_valid

    def test_oracle_zero_case(self):
        m = DepthMap.from_array(np.full((3, 3), 4.0))
        r = evaluate_oracle(m, m)
        assert all(getattr(r, name) == 0.0 for name in METRICS)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(1)
        pred, gt = random_pair(rng, 8, 8, density=1.0)
        perm = rng.permutation(64)
        pred_p = DepthMap.from_array(pred.data.reshape(-1)[perm].reshape(8, 8))
        gt_p = DepthMap.from_array(gt.data.reshape(-1)[perm].reshape(8, 8))
        a, b = evaluate(pred, gt), evaluate(pred_p, gt_p)
        for name in METRICS:
            assert getattr(a, name) == pytest.approx(getattr(b, name), rel=1e-12)


class TestProperties:
    def test_power_mean_inequalities(self):
        rng = np.random.default_rng(2)
        for _ in range(30):
            pred, gt = random_pair(rng, 16, 16)
            r = evaluate(pred, gt)
            assert r.rmse >= r.mae >= 0.0
            assert r.irmse >= r.imae >= 0.0

    def test_scaling_law(self):
        rng = np.random.default_rng(3)
        pred, gt = random_pair(rng, 12, 12)
        c = 3.0
        r1 = evaluate(pred, gt)
        r2 = evaluate(
            DepthMap.from_array(pred.data * c), DepthMap.from_array(gt.data * c)
        )
        assert r2.rmse == pytest.approx(c * r1.rmse, rel=1e-12)
        assert r2.mae == pytest.approx(c * r1.mae, rel=1e-12)
        assert r2.irmse == pytest.approx(r1.irmse / c, rel=1e-12)
        assert r2.imae == pytest.approx(r1.imae / c, rel=1e-12)
        assert r2.abs_error_rel == pytest.approx(r1.abs_error_rel, rel=1e-12)
        assert r2.sq_error_rel == pytest.approx(c * r1.sq_error_rel, rel=1e-12)


def test_pooled_accumulation_matches_concatenated_map():
    rng = np.random.default_rng(4)
    pred_a, gt_a = random_pair(rng, 8, 8)
    pred_b, gt_b = random_pair(rng, 8, 8)
    sums = accumulate_pair(pred_a, gt_a)
    sums = accumulate_pair(pred_b, gt_b, sums)
    pooled = report_from_sums(sums)
    whole = evaluate(
        DepthMap.from_array(np.vstack([pred_a.data, pred_b.data])),
        DepthMap.from_array(np.vstack([gt_a.data, gt_b.data])),
    )
    for name in METRICS:
        assert getattr(pooled, name) == pytest.approx(getattr(whole, name), rel=1e-12)
    assert pooled.n_valid == whole.n_valid


def test_report_json_roundtrip():
    r = EvalReport(
        rmse=1.5, mae=1.0, irmse=0.5, imae=0.25, sq_error_rel=2.0,
        abs_error_rel=3.0, n_valid=42,
    )
    assert EvalReport.from_json(r.to_json()) == r
    assert '"format_version": 1' in r.to_json()
