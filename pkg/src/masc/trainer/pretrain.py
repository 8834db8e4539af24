"""Stage 1: supervised MAR pretraining on fully sampled (metal, clean) pairs."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..diffcore import Adam, backward, no_grad
from ..io import Dataset
from ..marnet import MarConfig, MarNet, PretrainLossConfig, pretrain_loss
from ..metrics import DEFAULT_QUALITY, QualityConfig


@dataclass
class PretrainConfig:
    epochs: int = 100
    batch_size: int = 8
    lr: float = 1e-3
    ssim_weight: float = 0.5

    def validate(self) -> None:
        if self.epochs < 1 or self.batch_size < 1 or self.lr <= 0:
            raise ValueError("pretraining needs epochs >= 1, batch_size >= 1 and lr > 0")


@dataclass
class PretrainResult:
    net: MarNet
    best_epoch: int
    best_val_loss: float
    history: list          # (epoch, train loss, val loss, val L1)


def batched_loss(net: MarNet, inputs: np.ndarray, targets: np.ndarray, loss_cfg: PretrainLossConfig,
                 quality: QualityConfig = DEFAULT_QUALITY, batch: int = 32) -> float:
    """Sample-weighted mean pretraining loss without building a tape."""
    total = 0.0
    with no_grad():
        for s in range(0, len(inputs), batch):
            pred = net(inputs[s:s + batch])
            total += float(pretrain_loss(pred, targets[s:s + batch], loss_cfg, quality).data) * len(pred.data)
    return total / len(inputs)


def mean_l1(net: MarNet | None, inputs: np.ndarray, targets: np.ndarray, batch: int = 32) -> float:
    """Mean |g(x) - y|; ``net=None`` gives the identity baseline."""
    err = 0.0
    for s in range(0, len(inputs), batch):
        x = inputs[s:s + batch]
        out = x if net is None else net.correct(x)
        err += float(np.abs(out.astype(np.float64) - targets[s:s + batch]).sum())
    return err / targets.size


def pretrain_mar(train: Dataset, val: Dataset, cfg: PretrainConfig, mar_cfg: MarConfig | None = None,
                 seed: int = 0, quality: QualityConfig = DEFAULT_QUALITY,
                 on_epoch: Callable | None = None) -> PretrainResult:
    """Minimise L1 + w (1 - SSIM) from metal to clean images; keep the best-validation weights."""
    cfg.validate()
    if len(train) == 0:
        raise ValueError("training split is empty")
    if len(val) == 0:
        raise ValueError("validation split is empty")
    init_seq, shuffle_seq = np.random.SeedSequence(seed).spawn(2)
    net = MarNet(mar_cfg, np.random.default_rng(init_seq))
    rng = np.random.default_rng(shuffle_seq)
    opt = Adam(net.parameters(), lr=cfg.lr)
    loss_cfg = PretrainLossConfig(cfg.ssim_weight)
    x_tr, y_tr = train.normalized_pairs()
    x_va, y_va = val.normalized_pairs()
    best = (math.inf, -1, net.state_dict())
    history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(train))
        run = 0.0
        for s in range(0, len(order), cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            loss = pretrain_loss(net(x_tr[idx]), y_tr[idx], loss_cfg, quality)
            net.zero_grad()
            backward(loss)
            opt.step()
            run += float(loss.data) * len(idx)
        net.bump_version()
        val_loss = batched_loss(net, x_va, y_va, loss_cfg, quality)
        row = (epoch, run / len(train), val_loss, mean_l1(net, x_va, y_va))
        history.append(row)
        if on_epoch is not None:
            on_epoch(row)
        if val_loss < best[0]:
            best = (val_loss, epoch, net.state_dict())
    net.load_state_dict(best[2])
    net.bump_version()
    return PretrainResult(net, best[1], best[0], history)
