"""Image quality metrics, the composite quality score, and the paired t-test.

All metrics expect images already normalised by the clean reference maximum
(see :func:`normalize`), so the data range is 1.0 by default.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .diffcore.ops import gaussian_valid_matrix

PSNR_CAP = 99.0   # reported in tables in place of +inf for identical images


@dataclass(frozen=True)
class QualityConfig:
    w_ssim: float = 0.5
    w_nmse: float = 0.5
    window: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    data_range: float = 1.0

    def __post_init__(self):
        if abs(self.w_ssim + self.w_nmse - 1.0) > 1e-9:
            raise ValueError("quality weights must sum to 1")
        if self.window % 2 == 0:
            raise ValueError("SSIM window size must be odd")
        if self.data_range <= 0:
            raise ValueError("data range must be positive")


DEFAULT_QUALITY = QualityConfig()


def _pair(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    return x, y


def normalize(image, reference):
    """Divide both images by ``max(reference)``."""
    scale = float(np.max(reference))
    if scale <= 0:
        raise ValueError("reference image has no signal")
    return np.asarray(image) / scale, np.asarray(reference) / scale


def ssim_map(x, y, cfg: QualityConfig = DEFAULT_QUALITY) -> np.ndarray:
    """Local SSIM over all 'valid' Gaussian window placements of the last two axes."""
    x, y = _pair(x, y)
    rows = gaussian_valid_matrix(x.shape[-2], cfg.window, cfg.sigma)
    cols = gaussian_valid_matrix(x.shape[-1], cfg.window, cfg.sigma)

    def filt(a):
        return rows @ a @ cols.T

    c1 = (cfg.k1 * cfg.data_range) ** 2
    c2 = (cfg.k2 * cfg.data_range) ** 2
    mx, my = filt(x), filt(y)
    sxx = filt(x * x) - mx * mx
    syy = filt(y * y) - my * my
    sxy = filt(x * y) - mx * my
    num = (2 * mx * my + c1) * (2 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return num / den


def ssim(x, y, cfg: QualityConfig = DEFAULT_QUALITY) -> float:
    return float(ssim_map(x, y, cfg).mean())


def mse(x, y) -> float:
    x, y = _pair(x, y)
    return float(np.mean((x - y) ** 2))


def nmse(x, y) -> float:
    """``||x - y||^2 / ||y||^2`` with ``y`` the reference."""
    x, y = _pair(x, y)
    ref = float(np.sum(y * y))
    if ref == 0.0:
        raise ValueError("nmse: reference image is all zero")
    return float(np.sum((x - y) ** 2) / ref)


def mae(x, y) -> float:
    x, y = _pair(x, y)
    return float(np.mean(np.abs(x - y)))


def psnr(x, y, data_range: float = 1.0) -> float:
    err = mse(x, y)
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(data_range ** 2 / err)


def quality(x, reference, cfg: QualityConfig = DEFAULT_QUALITY) -> float:
    """``w_ssim * SSIM + w_nmse * (1 - NMSE)`` against ``reference``."""
    return cfg.w_ssim * ssim(x, reference, cfg) + cfg.w_nmse * (1.0 - nmse(x, reference))


def all_metrics(x, reference, cfg: QualityConfig = DEFAULT_QUALITY) -> dict:
    return {
        "ssim": ssim(x, reference, cfg),
        "psnr": min(psnr(x, reference, cfg.data_range), PSNR_CAP),
        "mse": mse(x, reference),
        "nmse": nmse(x, reference),
        "mae": mae(x, reference),
    }


# ---------------------------------------------------------------------------
# paired t-test
# ---------------------------------------------------------------------------
def _betacf(a: float, b: float, x: float, max_iter: int = 300, eps: float = 1e-15) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            break
    return h


def betainc(a: float, b: float, x: float) -> float:
    """Regularised incomplete beta ``I_x(a, b)``."""
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x in (0.0, 1.0):
        return x
    ln_front = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_two_sided_p(t: float, dof: float) -> float:
    if math.isinf(t):
        return 0.0
    return betainc(dof / 2.0, 0.5, dof / (dof + t * t))


def paired_t_test(a, b) -> tuple[float, float]:
    """Two-sided paired t-test on ``a - b``.

    With zero variance of the differences the statistic is undefined; by
    convention p = 0 when the mean difference is nonzero (t = +-inf) and p = 1
    otherwise (t = nan).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise ValueError("paired_t_test needs two equal-length vectors of length >= 2")
    d = a - b
    n = d.size
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        if mean == 0.0:
            return math.nan, 1.0
        return math.copysign(math.inf, mean), 0.0
    t = mean / (sd / math.sqrt(n))
    return t, t_two_sided_p(t, n - 1)
