import math

import numpy as np
import pytest

from conftest import oracle_temperature, reference_logprobs
from patchuq.calibration import (CalibrationBins, bin_confidences, calibration_report, ece,
                                 golden_section, mce, nll, rescale, temperature_scale)
from patchuq.segmetrics import UndefinedMetricError
from patchuq.tensors import ClassMap, ProbStack, argmax_prediction


class TestBins:
    def test_all_confident_correct(self):
        p = np.zeros((1, 2, 3, 3))
        p[0, 1] = 1.0
        bins = bin_confidences(p, ClassMap(np.ones((3, 3), int), 2))
        assert (bins.counts > 0).sum() == 1 and bins.counts[-1] == 9
        assert bins.accuracy[-1] == 1.0

    def test_bin_nine_of_fifteen(self):
        p = np.empty((1, 2, 2, 2))
        p[0, 0], p[0, 1] = 0.55, 0.45
        gt = ClassMap([[0, 1], [1, 0]], 2)
        bins = bin_confidences(p, gt, 15)
        assert bins.counts[8] == 4 and bins.total == 4
        assert bins.accuracy[8] == 0.5

    def test_all_ignored(self):
        gt = ClassMap(np.full((2, 2), 255), 2, ignore_id=255)
        bins = bin_confidences(np.full((1, 2, 2, 2), 0.5), gt)
        assert bins.total == 0
        with pytest.raises(UndefinedMetricError):
            ece(bins)
        with pytest.raises(UndefinedMetricError):
            mce(bins)

    def test_edges_go_to_lower_bin(self):
        bins = CalibrationBins.from_arrays([0.0, 0.2, 0.2000001, 1.0], [1, 1, 1, 1], 5)
        np.testing.assert_array_equal(bins.counts, [2, 1, 0, 0, 1])

    def test_mean_confidence_inside_interval(self, rng):
        conf = rng.random(5000)
        bins = CalibrationBins.from_arrays(conf, rng.random(5000) < 0.5, 15)
        occ = bins.counts > 0
        b = np.arange(15)[occ]
        assert np.all(bins.mean_confidence[occ] > b / 15)
        assert np.all(bins.mean_confidence[occ] <= (b + 1) / 15)
        assert bins.total == 5000

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            bin_confidences(np.full((1, 2, 2, 2), 0.5), ClassMap(np.zeros((2, 3), int), 2))


class TestEceMce:
    def test_calibrated_bin(self):
        bins = CalibrationBins.from_summary([10], [0.8], [0.8])
        assert ece(bins) == 0 and mce(bins) == 0

    def test_single_gap(self):
        bins = CalibrationBins.from_summary([4], [0.9], [0.5])
        assert ece(bins) == pytest.approx(0.4, abs=1e-12)
        assert mce(bins) == ece(bins)

    def test_two_bins(self):
        bins = CalibrationBins.from_summary([3, 1, 0], [0.6, 0.9, 0.0], [0.5, 0.6, 0.0])
        assert ece(bins) == pytest.approx(0.75 * 0.1 + 0.25 * 0.3, abs=1e-12)
        assert ece(bins) == pytest.approx(0.15, abs=1e-12)
        assert mce(bins) == pytest.approx(0.3, abs=1e-12)

    def test_class_permutation_invariance(self, rng):
        p = np.moveaxis(rng.dirichlet(np.ones(4), size=(1, 6, 6)), -1, 1)
        gt = ClassMap(rng.integers(0, 4, (6, 6)), 4)
        perm = rng.permutation(4)
        inv = np.argsort(perm)
        a = bin_confidences(p, gt)
        b = bin_confidences(p[:, perm], ClassMap(inv[gt.values], 4))
        assert ece(a) == pytest.approx(ece(b), abs=1e-15)
        assert mce(a) == pytest.approx(mce(b), abs=1e-15)
        assert mce(a) >= ece(a)


class TestTemperature:
    def test_golden_section_quadratic(self):
        assert golden_section(lambda x: (x - 1.234) ** 2, -5, 5, 1e-8) == pytest.approx(1.234)

    def test_identity_at_t1(self, rng):
        p = np.moveaxis(rng.dirichlet(np.ones(3), size=(1, 4, 4)), -1, 1)
        out = rescale(ProbStack(p), 1.0)
        np.testing.assert_allclose(out.values, p, atol=1e-12)

    def test_optimal_reference(self):
        x, gt = reference_logprobs(1)
        t, _ = temperature_scale(x, gt)
        assert abs(t - 1.0) <= 1e-2

    @pytest.mark.parametrize("k", [0.5, 2.0, 4.0])
    def test_recovers_scale(self, k):
        x, gt = reference_logprobs(2)
        t, scaled = temperature_scale(k * x, gt)
        assert abs(t - k) <= 0.05
        oracle = oracle_temperature(k * x, gt, k - 0.1, k + 0.1)
        assert abs(t - oracle) <= 2e-3
        np.testing.assert_array_equal(argmax_prediction(scaled).values,
                                      np.argmax(x, axis=0))
        assert nll(k * x, gt, t) <= nll(k * x, gt, 1.0)

    def test_shift_invariance(self, rng):
        x, gt = reference_logprobs(3, n_side=30)
        shifted = 2.0 * x + rng.normal(size=(1, 30, 30)) * 5
        t1, s1 = temperature_scale(2.0 * x, gt)
        t2, s2 = temperature_scale(shifted, gt)
        assert t1 == pytest.approx(t2, abs=1e-3)
        np.testing.assert_allclose(s1.values, rescale(shifted, t1).values, atol=1e-12)

    def test_accepts_probabilities(self):
        x, gt = reference_logprobs(4, n_side=30)
        t_log, _ = temperature_scale(x, gt)
        t_prob, _ = temperature_scale(ProbStack(np.exp(x)[np.newaxis]), gt)
        assert t_log == pytest.approx(t_prob, abs=1e-6)

    def test_no_scorable_pixels(self):
        gt = ClassMap(np.full((2, 2), 9), 2, ignore_id=9)
        with pytest.raises(ValueError):
            temperature_scale(np.zeros((2, 2, 2)), gt)


def test_report():
    x, gt = reference_logprobs(5, n_side=40)
    probs = np.exp(3.0 * x)
    probs /= probs.sum(axis=0, keepdims=True)
    raw = calibration_report(probs[np.newaxis], gt, scale=False)
    fitted = calibration_report(probs[np.newaxis], gt)
    assert raw.temperature == 1.0
    assert fitted.temperature == pytest.approx(3.0, abs=0.1)
    assert fitted.nll <= raw.nll
    assert fitted.ece < raw.ece
    assert raw.mce >= raw.ece and fitted.mce >= fitted.ece
    assert math.isfinite(fitted.nll)
