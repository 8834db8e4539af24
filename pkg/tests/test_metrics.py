import math

import numpy as np
import pytest

from masc.metrics import (QualityConfig, all_metrics, betainc, mae, mse, nmse, normalize, paired_t_test, psnr,
                          quality, ssim, ssim_map)


def _brute_ssim(x, y, win=11, sigma=1.5, c1=1e-4, c2=9e-4):
    """Direct per-window evaluation with an explicit 2D Gaussian."""
    r = np.arange(win) - win // 2
    g = np.exp(-(r ** 2) / (2 * sigma ** 2))
    g /= g.sum()
    w2 = np.outer(g, g)
    vals = []
    for i in range(x.shape[0] - win + 1):
        for j in range(x.shape[1] - win + 1):
            a, b = x[i:i + win, j:j + win], y[i:i + win, j:j + win]
            ma, mb = (w2 * a).sum(), (w2 * b).sum()
            va = (w2 * a * a).sum() - ma * ma
            vb = (w2 * b * b).sum() - mb * mb
            cov = (w2 * a * b).sum() - ma * mb
            vals.append((2 * ma * mb + c1) * (2 * cov + c2) / ((ma ** 2 + mb ** 2 + c1) * (va + vb + c2)))
    return float(np.mean(vals))


def test_ssim_identity():
    x = np.random.default_rng(0).random((32, 32))
    assert ssim(x, x) == pytest.approx(1.0, abs=1e-12)


def test_ssim_symmetric():
    rng = np.random.default_rng(1)
    x, y = rng.random((24, 24)), rng.random((24, 24))
    assert ssim(x, y) == ssim(y, x)


def test_ssim_inverted_binary_matches_brute_force():
    rng = np.random.default_rng(2)
    x = (rng.random((20, 20)) > 0.5).astype(float)
    got = ssim(x, 1 - x)
    assert got <= 0
    assert got == pytest.approx(_brute_ssim(x, 1 - x), abs=1e-12)


def test_ssim_random_matches_brute_force():
    rng = np.random.default_rng(3)
    x = rng.random((18, 22))
    y = np.clip(x + 0.2 * rng.standard_normal(x.shape), 0, 1)
    assert ssim(x, y) == pytest.approx(_brute_ssim(x, y), abs=1e-12)


def test_ssim_matches_skimage():
    skm = pytest.importorskip("skimage.metrics")
    rng = np.random.default_rng(4)
    x = rng.random((64, 64))
    y = np.clip(x + 0.1 * rng.standard_normal(x.shape), 0, 1)
    ref = skm.structural_similarity(x, y, gaussian_weights=True, sigma=1.5, use_sample_covariance=False,
                                    data_range=1.0, win_size=11)
    # skimage averages over the map cropped by (win-1)/2 which equals 'valid' placement
    assert ssim(x, y) == pytest.approx(ref, abs=1e-9)


def test_ssim_map_valid_shape():
    assert ssim_map(np.zeros((64, 64)), np.zeros((64, 64))).shape == (54, 54)


def test_identical_errors_are_zero():
    y = np.random.default_rng(5).random((16, 16)) + 0.1
    assert mse(y, y) == nmse(y, y) == mae(y, y) == 0.0
    assert math.isinf(psnr(y, y))


def test_offset_closed_form():
    y = np.random.default_rng(6).random((16, 16)) * 0.8
    assert mse(y + 0.1, y) == pytest.approx(0.01, abs=1e-12)
    assert psnr(y + 0.1, y) == pytest.approx(20.0, abs=1e-6)


def test_nmse_double():
    y = np.random.default_rng(7).random((8, 8)) + 0.1
    assert nmse(2 * y, y) == pytest.approx(1.0)


def test_nmse_zero_reference_rejected():
    with pytest.raises(ValueError):
        nmse(np.ones((4, 4)), np.zeros((4, 4)))


def test_quality_identity_and_arithmetic():
    y = np.random.default_rng(8).random((32, 32))
    assert quality(y, y) == pytest.approx(1.0, abs=1e-12)
    cfg = QualityConfig()
    assert cfg.w_ssim * 0.8 + cfg.w_nmse * (1 - 0.2) == pytest.approx(0.8)


def test_quality_drops_with_nmse():
    # a global rescale leaves SSIM nearly intact on structured images but raises NMSE
    y = np.random.default_rng(9).random((32, 32))
    a, b = quality(0.95 * y, y), quality(0.8 * y, y)
    assert b < a


def test_quality_weights_validated():
    with pytest.raises(ValueError):
        QualityConfig(w_ssim=0.6, w_nmse=0.6)
    with pytest.raises(ValueError):
        QualityConfig(window=10)


def test_normalize_by_reference_max():
    x, y = normalize(np.array([2.0, 4.0]), np.array([1.0, 8.0]))
    np.testing.assert_allclose(x, [0.25, 0.5])
    np.testing.assert_allclose(y, [0.125, 1.0])


def test_all_metrics_caps_psnr():
    y = np.random.default_rng(10).random((16, 16)) + 0.1
    assert all_metrics(y, y)["psnr"] == 99.0


def test_ttest_zero_variance_conventions():
    t, p = paired_t_test([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    assert math.isnan(t) and p == 1.0
    t, p = paired_t_test([2.0, 3, 4, 5], [1.0, 2, 3, 4])
    assert math.isinf(t) and t > 0 and p == 0.0


def test_ttest_worked_example():
    t, p = paired_t_test([1.0, 2, 3, 4, 5], [0.0] * 5)
    assert t == pytest.approx(4.2426, abs=1e-4)
    assert p == pytest.approx(0.0132, abs=1e-4)


def test_ttest_matches_scipy():
    stats = pytest.importorskip("scipy.stats")
    rng = np.random.default_rng(11)
    for n in (3, 10, 40):
        a, b = rng.random(n), rng.random(n)
        t, p = paired_t_test(a, b)
        ref = stats.ttest_rel(a, b)
        assert t == pytest.approx(ref.statistic, rel=1e-10)
        assert p == pytest.approx(ref.pvalue, rel=1e-8, abs=1e-14)


def test_betainc_edges():
    assert betainc(2.0, 3.0, 0.0) == 0.0
    assert betainc(2.0, 3.0, 1.0) == 1.0
    # I_x(1, 1) = x
    assert betainc(1.0, 1.0, 0.3) == pytest.approx(0.3, abs=1e-12)
