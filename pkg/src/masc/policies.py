"""Line-selection policies: conventional baselines, the PPO actor-critic and
the Q-network used by the DQN / double-DQN baselines."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import fourier
from .diffcore import Tensor, nn, no_grad, ops
from .env import center_order

BASELINES = ("center-out", "random", "random-lowbias", "equispaced")


def _unacquired(mask: np.ndarray) -> np.ndarray:
    free = np.flatnonzero(~np.asarray(mask, dtype=bool))
    if free.size == 0:
        raise ValueError("no unacquired line left")
    return free


def lowbias_weights(n_pe: int, sigma: float | None = None) -> np.ndarray:
    sigma = n_pe / 4.0 if sigma is None else sigma
    d = np.arange(n_pe) - fourier.dc_column(n_pe)
    return np.exp(-(d ** 2) / (2.0 * sigma ** 2))


def equispaced_order(n_pe: int, total_lines: int) -> np.ndarray:
    """``round(j * n_pe / total)`` for j < total, visited from DC outward."""
    if not 1 <= total_lines <= n_pe:
        raise ValueError(f"total_lines must lie in [1, {n_pe}]")
    lines = np.unique(np.floor(np.arange(total_lines) * n_pe / total_lines + 0.5).astype(np.int64) % n_pe)
    rank = {c: i for i, c in enumerate(center_order(n_pe))}
    return np.array(sorted(lines, key=rank.__getitem__), dtype=np.int64)


def baseline_next_line(kind: str, mask: np.ndarray, rng: np.random.Generator | None = None,
                       total_lines: int | None = None) -> int:
    mask = np.asarray(mask, dtype=bool)
    free = _unacquired(mask)
    n_pe = mask.shape[0]
    if kind == "center-out":
        for c in center_order(n_pe):
            if not mask[c]:
                return int(c)
    if kind == "random":
        return int(rng.choice(free))
    if kind == "random-lowbias":
        w = lowbias_weights(n_pe)[free]
        return int(free[_sample_index(w, rng)])
    if kind == "equispaced":
        if total_lines is None:
            raise ValueError("equispaced needs the episode's total line count")
        for c in equispaced_order(n_pe, total_lines):
            if not mask[c]:
                return int(c)
        return baseline_next_line("center-out", mask)   # grid exhausted
    raise ValueError(f"unknown baseline {kind!r}; choose from {BASELINES}")


def _sample_index(weights: np.ndarray, rng: np.random.Generator) -> int:
    """Inverse-CDF draw; zero-weight entries can never be returned."""
    cdf = np.cumsum(np.asarray(weights, dtype=np.float64))
    return int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))


# ---------------------------------------------------------------------------
# networks
# ---------------------------------------------------------------------------
@dataclass
class EncoderConfig:
    channels: tuple = (8, 16, 32)
    norm: str = "instance"


FULL_SCALE_ENCODER = EncoderConfig(channels=(16, 32, 64))


class Encoder(nn.Module):
    """Conv + norm + ReLU + 2x2 pool per stage, then flatten."""

    def __init__(self, in_ch: int, cfg: EncoderConfig, rng: np.random.Generator):
        super().__init__()
        blocks, prev = [], in_ch
        for c in cfg.channels:
            blocks.append(nn.ConvBlock(prev, c, rng, n_convs=1, norm=cfg.norm))
            prev = c
        self.blocks = blocks

    def features(self, h: int, w: int) -> int:
        s = 2 ** len(self.blocks)
        return (h // s) * (w // s) * self.blocks[-1].convs[-1].weight.shape[-1]

    def forward(self, x: Tensor) -> Tensor:
        for b in self.blocks:
            x = ops.max_pool2d(b(x))
        return ops.reshape(x, (x.shape[0], -1))


def _obs_tensor(obs) -> Tensor:
    if isinstance(obs, Tensor):
        return obs
    arr = np.asarray(obs, dtype=np.float32)
    return Tensor(arr[None] if arr.ndim == 3 else arr)


class PolicyNet(nn.Module):
    """Shared encoder with an actor head (N_pe logits) and a critic head."""

    def __init__(self, height: int, width: int, rng: np.random.Generator, cfg: EncoderConfig | None = None):
        super().__init__()
        cfg = cfg or EncoderConfig()
        object.__setattr__(self, "shape", (height, width))
        self.encoder = Encoder(2, cfg, rng)
        f = self.encoder.features(height, width)
        self.actor = nn.Linear(f, width, rng, scale=0.01)
        self.critic = nn.Linear(f, 1, rng)

    def forward(self, obs) -> tuple[Tensor, Tensor]:
        z = self.encoder(_obs_tensor(obs))
        return self.actor(z), ops.reshape(self.critic(z), (z.shape[0],))


def policy_forward(net: PolicyNet, obs, mask) -> tuple[Tensor, Tensor]:
    """Masked log-probabilities (acquired lines have probability exactly 0) and values."""
    logits, value = net(obs)
    valid = ~np.atleast_2d(np.asarray(mask, dtype=bool))
    if valid.shape != logits.shape:
        raise ValueError(f"mask shape {valid.shape} does not match logits {logits.shape}")
    if not valid.any(axis=-1).all():
        raise ValueError("all lines acquired; no valid action")
    return ops.log_softmax(logits, valid), value


def entropy(logp: np.ndarray) -> np.ndarray:
    p = np.exp(logp)
    return -(np.where(p > 0, p * logp, 0.0)).sum(axis=-1)


def sample_action(logp: np.ndarray, rng: np.random.Generator) -> int:
    return _sample_index(np.exp(np.asarray(logp, dtype=np.float64)), rng)


def act(net: PolicyNet, obs, mask, rng: np.random.Generator | None = None, greedy: bool = False):
    """Single-observation helper: returns (action, log-prob, value)."""
    with no_grad():
        logp, value = policy_forward(net, obs, mask)
    lp = logp.data[0]
    a = int(np.argmax(lp)) if greedy else sample_action(lp, rng)
    return a, float(lp[a]), float(value.data[0])


class QNet(nn.Module):
    """Encoder plus one linear head emitting a value per phase-encode line."""

    def __init__(self, height: int, width: int, rng: np.random.Generator, cfg: EncoderConfig | None = None):
        super().__init__()
        cfg = cfg or EncoderConfig()
        object.__setattr__(self, "shape", (height, width))
        self.encoder = Encoder(2, cfg, rng)
        self.head = nn.Linear(self.encoder.features(height, width), width, rng)

    def forward(self, obs) -> Tensor:
        return self.head(self.encoder(_obs_tensor(obs)))


class QAgent:
    """Online Q-network plus a target copy."""

    def __init__(self, height: int, width: int, rng: np.random.Generator, cfg: EncoderConfig | None = None):
        self.online = QNet(height, width, rng, cfg)
        self.target = QNet(height, width, np.random.default_rng(0), cfg)
        self.sync_target()

    def sync_target(self) -> None:
        self.target.load_state_dict(self.online.state_dict())


def masked_argmax(values: np.ndarray, mask: np.ndarray) -> int:
    """Argmax over unacquired lines; ``np.argmax`` already breaks ties low."""
    _unacquired(mask)
    v = np.where(np.asarray(mask, dtype=bool), -np.inf, np.asarray(values, dtype=np.float64))
    return int(np.argmax(v))


def q_forward(net: QNet, obs, mask, epsilon: float = 0.0, rng: np.random.Generator | None = None):
    """Returns (action, action values). Exploratory draws are uniform over unacquired lines."""
    free = _unacquired(mask)
    with no_grad():
        q = net(obs).data[0]
    if epsilon > 0 and rng.random() < epsilon:
        return int(rng.choice(free)), q
    return masked_argmax(q, mask), q


def max_entropy(mask) -> float:
    return math.log(int((~np.asarray(mask, dtype=bool)).sum()))
