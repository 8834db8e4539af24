"""Synthetic 2D multi-tissue phantoms and spin-echo signal synthesis."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fourier import is_pow2


@dataclass(frozen=True)
class Tissue:
    name: str
    pd: float       # proton density, 0..1
    t1: float       # ms
    t2: float       # ms
    chi: float      # susceptibility, ppm


AIR = 0
# 3T-typical relaxation values; exact numbers are configuration, not claims.
DEFAULT_TISSUES: dict[int, Tissue] = {
    AIR: Tissue("air", 0.0, 1.0, 1.0, 0.0),
    1: Tissue("fat", 0.90, 380.0, 110.0, -5.55),
    2: Tissue("muscle", 0.70, 1420.0, 32.0, -9.05),
    3: Tissue("bone", 0.05, 250.0, 1.0, -8.86),
    4: Tissue("marrow", 0.80, 370.0, 80.0, -5.55),
    5: Tissue("water", 1.00, 3000.0, 1500.0, -9.05),
}


@dataclass
class PhantomConfig:
    height: int = 64
    width: int = 64
    min_inner: int = 3
    max_inner: int = 6
    body_tissue: int = 2
    inner_tissues: tuple = (1, 2, 3, 4, 5)
    body_axes: tuple = (0.34, 0.46)     # semi-axis range, fraction of extent
    inner_axes: tuple = (0.05, 0.20)
    variant_jitter: float = 1.5         # pixels of centre jitter between slices
    tissues: dict = field(default_factory=lambda: dict(DEFAULT_TISSUES))

    def validate(self) -> None:
        if not (is_pow2(self.height) and is_pow2(self.width)):
            raise ValueError(f"phantom extents must be powers of two, got {self.height}x{self.width}")
        if not 1 <= self.min_inner <= self.max_inner:
            raise ValueError("need 1 <= min_inner <= max_inner")
        for label, t in self.tissues.items():
            if t.t1 <= 0 or t.t2 <= 0 or t.t1 < t.t2 or not 0 <= t.pd <= 1:
                raise ValueError(f"invalid tissue constants for label {label}: {t}")


@dataclass
class SequenceParams:
    tr_ms: float = 4050.0
    te_ms: float = 32.0
    readout_bw_hz: float = 710.0     # per pixel
    rf_bw_hz: float = 1000.0
    field_strength: str = "3T"

    def validate(self) -> None:
        if min(self.tr_ms, self.te_ms, self.readout_bw_hz, self.rf_bw_hz) <= 0:
            raise ValueError("sequence parameters must be positive")
        if self.te_ms >= self.tr_ms:
            raise ValueError("TE must be shorter than TR")


@dataclass
class TissueMaps:
    labels: np.ndarray
    pd: np.ndarray
    t1: np.ndarray
    t2: np.ndarray
    table: dict

    @property
    def shape(self) -> tuple:
        return self.labels.shape

    def susceptibility(self) -> np.ndarray:
        chi = np.zeros(self.labels.shape)
        for label, t in self.table.items():
            chi[self.labels == label] = t.chi
        return chi


def _ellipse(h, w, cy, cx, ay, ax, theta) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    dy, dx = yy - cy, xx - cx
    c, s = np.cos(theta), np.sin(theta)
    u = c * dx + s * dy
    v = -s * dx + c * dy
    return (u / ax) ** 2 + (v / ay) ** 2 <= 1.0


def generate_phantom(seed, cfg: PhantomConfig | None = None, variant: int = 0) -> TissueMaps:
    """Body ellipse holding 3-6 random tissue ellipses; later ellipses overwrite.

    ``variant`` > 0 jitters the geometry of the same subject slightly, standing
    in for neighbouring slices.
    """
    cfg = cfg or PhantomConfig()
    cfg.validate()
    h, w = cfg.height, cfg.width
    rng = np.random.default_rng(seed)
    jit = np.random.default_rng([*np.atleast_1d(seed).tolist(), 7919, variant]) if variant else None

    def jitter(v, scale):
        return v + (jit.uniform(-scale, scale) if jit is not None else 0.0)

    labels = np.zeros((h, w), dtype=np.uint8)
    while True:
        ay = rng.uniform(*cfg.body_axes) * h
        ax = rng.uniform(*cfg.body_axes) * w
        body = _ellipse(h, w, jitter((h - 1) / 2, cfg.variant_jitter), jitter((w - 1) / 2, cfg.variant_jitter),
                        ay, ax, rng.uniform(-0.2, 0.2))
        if body.any():
            break
    labels[body] = cfg.body_tissue
    n_inner = int(rng.integers(cfg.min_inner, cfg.max_inner + 1))
    placed = 0
    while placed < n_inner:
        r = np.sqrt(rng.uniform(0, 0.55))
        phi = rng.uniform(0, 2 * np.pi)
        cy = (h - 1) / 2 + r * ay * np.sin(phi)
        cx = (w - 1) / 2 + r * ax * np.cos(phi)
        ey = rng.uniform(*cfg.inner_axes) * h
        ex = rng.uniform(*cfg.inner_axes) * w
        theta = rng.uniform(0, np.pi)
        tissue = int(rng.choice(cfg.inner_tissues))
        shape = _ellipse(h, w, jitter(cy, cfg.variant_jitter), jitter(cx, cfg.variant_jitter),
                         ey, ex, theta) & body
        if not shape.any():
            continue  # degenerate after rasterisation; draw again
        labels[shape] = tissue
        placed += 1

    pd = np.zeros((h, w))
    t1 = np.ones((h, w))
    t2 = np.ones((h, w))
    for label, t in cfg.tissues.items():
        sel = labels == label
        pd[sel], t1[sel], t2[sel] = t.pd, t.t1, t.t2
    return TissueMaps(labels, pd, t1, t2, dict(cfg.tissues))


def spin_echo_signal(maps: TissueMaps, seq: SequenceParams | None = None) -> np.ndarray:
    """Single-echo spin-echo magnitude ``PD (1 - exp(-TR/T1)) exp(-TE/T2)``."""
    seq = seq or SequenceParams()
    seq.validate()
    s = maps.pd * (1.0 - np.exp(-seq.tr_ms / maps.t1)) * np.exp(-seq.te_ms / maps.t2)
    s[maps.pd == 0] = 0.0
    return s
