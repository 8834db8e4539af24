"""Residual U-Net for metal artifact reduction, ``g(I) = I + r(I)``, and its losses."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffcore import Tensor, nn, no_grad, ops
from .metrics import DEFAULT_QUALITY, QualityConfig


@dataclass
class MarConfig:
    depth: int = 3
    base_channels: int = 8
    norm: str = "instance"

    def validate(self) -> None:
        if self.depth < 1 or self.base_channels < 1:
            raise ValueError("MAR depth and base channels must be positive")
        if self.norm not in ("instance", "none"):
            raise ValueError(f"unknown norm {self.norm!r}")


FULL_SCALE_MAR = MarConfig(depth=4, base_channels=64)


class MarNet(nn.Module):
    """Encoder-decoder with skip connections. The final 1x1 conv is zero
    initialised, so a fresh network is exactly the identity map."""

    def __init__(self, cfg: MarConfig | None = None, rng: np.random.Generator | None = None):
        super().__init__()
        cfg = cfg or MarConfig()
        cfg.validate()
        rng = rng if rng is not None else np.random.default_rng(0)
        object.__setattr__(self, "cfg", cfg)
        object.__setattr__(self, "version", 0)
        c, d = cfg.base_channels, cfg.depth
        widths = [c * 2 ** i for i in range(d)]
        self.down = [nn.ConvBlock(1 if i == 0 else widths[i - 1], widths[i], rng, norm=cfg.norm) for i in range(d)]
        self.bottleneck = nn.ConvBlock(widths[-1], 2 * widths[-1], rng, norm=cfg.norm)
        up = []
        for i in reversed(range(d)):
            below = 2 * widths[i]
            up.append(nn.ConvBlock(below + widths[i], widths[i], rng, norm=cfg.norm))
        self.up = up
        self.head = nn.Conv2d(widths[0], 1, rng, kernel=1)
        self.head.weight.data[...] = 0.0

    def bump_version(self) -> None:
        """Mark the parameters as changed so cached corrections are recomputed."""
        object.__setattr__(self, "version", self.version + 1)

    def check_input(self, shape: tuple) -> None:
        step = 2 ** self.cfg.depth
        h, w = shape[-2:]
        if h % step or w % step:
            raise ValueError(f"image extent {h}x{w} not divisible by 2^{self.cfg.depth}")

    def residual(self, x: Tensor) -> Tensor:
        """r(I) for an NHWC batch with one channel."""
        skips = []
        for block in self.down:
            x = block(x)
            skips.append(x)
            x = ops.max_pool2d(x)
        x = self.bottleneck(x)
        for block, skip in zip(self.up, reversed(skips)):
            x = block(ops.concat([ops.upsample2x(x), skip], axis=-1))
        return self.head(x)

    def forward(self, images) -> Tensor:
        """Corrected images for a batch of shape (N, H, W)."""
        x = images if isinstance(images, Tensor) else Tensor(np.asarray(images, dtype=np.float32))
        if x.ndim != 3:
            raise ValueError(f"MarNet expects (N, H, W), got {x.shape}")
        self.check_input(x.shape)
        n, h, w = x.shape
        r = self.residual(ops.reshape(x, (n, h, w, 1)))
        return ops.add(x, ops.reshape(r, (n, h, w)))

    def correct(self, images: np.ndarray) -> np.ndarray:
        """Inference helper: numpy (N, H, W) or (H, W) in, numpy out, no tape."""
        arr = np.asarray(images, dtype=np.float32)
        single = arr.ndim == 2
        with no_grad():
            out = self.forward(arr[None] if single else arr).data
        return out[0] if single else out


def mar_forward(net: MarNet, image) -> Tensor:
    return net(image)


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------
@dataclass
class PretrainLossConfig:
    ssim_weight: float = 0.5

    def __post_init__(self):
        if self.ssim_weight < 0:
            raise ValueError("SSIM weight must be non-negative")


def _flat(t) -> Tensor:
    t = t if isinstance(t, Tensor) else Tensor(np.asarray(t, dtype=np.float32))
    if t.ndim == 4 and t.shape[-1] == 1:
        t = ops.reshape(t, t.shape[:3])
    return t


def ssim_tensor(x: Tensor, y: Tensor, cfg: QualityConfig = DEFAULT_QUALITY) -> Tensor:
    """Differentiable mean SSIM over all images of the batch."""
    if x.shape != y.shape:
        raise ValueError(f"ssim: shape mismatch {x.shape} vs {y.shape}")
    c1 = (cfg.k1 * cfg.data_range) ** 2
    c2 = (cfg.k2 * cfg.data_range) ** 2

    def lm(t):
        return ops.local_mean(t, cfg.window, cfg.sigma)

    mx, my = lm(x), lm(y)
    mxx, myy, mxy = ops.mul(mx, mx), ops.mul(my, my), ops.mul(mx, my)
    sxx = ops.sub(lm(ops.mul(x, x)), mxx)
    syy = ops.sub(lm(ops.mul(y, y)), myy)
    sxy = ops.sub(lm(ops.mul(x, y)), mxy)
    num = ops.mul(ops.add(ops.mul(mxy, 2.0), c1), ops.add(ops.mul(sxy, 2.0), c2))
    den = ops.mul(ops.add(ops.add(mxx, myy), c1), ops.add(ops.add(sxx, syy), c2))
    return ops.mean(ops.div(num, den))


def pretrain_loss(pred, target, cfg: PretrainLossConfig | None = None,
                  quality: QualityConfig = DEFAULT_QUALITY) -> Tensor:
    """L1 + w * (1 - SSIM)."""
    cfg = cfg or PretrainLossConfig()
    pred, target = _flat(pred), _flat(target)
    if pred.shape != target.shape:
        raise ValueError(f"pretrain_loss: shape mismatch {pred.shape} vs {target.shape}")
    l1 = ops.mean(ops.abs(ops.sub(pred, target)))
    if cfg.ssim_weight == 0:
        return l1
    s = ssim_tensor(pred, target, quality)
    return ops.add(l1, ops.mul(ops.add(ops.neg(s), 1.0), cfg.ssim_weight))


def finetune_loss(pred, target) -> Tensor:
    pred, target = _flat(pred), _flat(target)
    if pred.shape != target.shape:
        raise ValueError(f"finetune_loss: shape mismatch {pred.shape} vs {target.shape}")
    return ops.mean(ops.square(ops.sub(pred, target)))
