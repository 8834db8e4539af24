"""PPO with GAE: rollout storage, advantage estimation and the clipped update."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..diffcore import Adam, backward, clip_grad_norm, ops
from ..policies import PolicyNet, policy_forward


@dataclass
class PPOConfig:
    rollout_length: int = 512
    epochs: int = 4
    clip: float = 0.2
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    lr: float = 3e-4
    mar_lr: float = 1e-5
    gamma: float = 0.99
    gae_lambda: float = 0.95
    minibatch: int = 64
    max_grad_norm: float = 0.5

    def validate(self) -> None:
        if not 0 < self.clip < 1:
            raise ValueError("clip range must lie in (0, 1)")
        if not (0 <= self.gamma <= 1 and 0 <= self.gae_lambda <= 1):
            raise ValueError("gamma and gae_lambda must lie in [0, 1]")
        if self.rollout_length < 1 or self.minibatch < 1 or self.rollout_length % self.minibatch:
            raise ValueError("rollout_length must be a positive multiple of minibatch")
        if self.epochs < 1 or self.lr < 0 or self.mar_lr < 0 or self.max_grad_norm <= 0:
            raise ValueError("invalid PPO optimisation settings")


class RolloutBuffer:
    """Fixed-length transition store. Alongside the PPO fields it keeps the raw
    reconstruction and sample index of every visited state for MAR fine-tuning."""

    def __init__(self, size: int, height: int, width: int):
        self.size = size
        self.obs = np.zeros((size, height, width, 2), np.float32)
        self.masks = np.zeros((size, width), bool)
        self.actions = np.zeros(size, np.int64)
        self.logp = np.zeros(size, np.float64)
        self.values = np.zeros(size, np.float64)
        self.rewards = np.zeros(size, np.float64)
        self.dones = np.zeros(size, bool)
        self.images = np.zeros((size, height, width), np.float32)
        self.sample_index = np.zeros(size, np.int64)
        self.advantages = np.zeros(size, np.float64)
        self.returns = np.zeros(size, np.float64)
        self.ptr = 0

    @property
    def full(self) -> bool:
        return self.ptr == self.size

    def add(self, obs, mask, action, logp, value, reward, done, image=None, sample_index=-1) -> None:
        if self.full:
            raise IndexError("rollout buffer is full")
        i = self.ptr
        self.obs[i] = obs
        self.masks[i] = mask
        self.actions[i] = action
        self.logp[i] = logp
        self.values[i] = value
        self.rewards[i] = reward
        self.dones[i] = done
        if image is not None:
            self.images[i] = image
        self.sample_index[i] = sample_index
        self.ptr += 1


def compute_gae(rewards, values, dones, last_value: float, gamma: float, lam: float):
    """Returns (advantages, returns). ``dones[t]`` marks that the transition at t
    ended an episode, so nothing bootstraps across it."""
    rewards = np.asarray(rewards, np.float64)
    values = np.asarray(values, np.float64)
    notdone = 1.0 - np.asarray(dones, np.float64)
    n = rewards.shape[0]
    adv = np.zeros(n, np.float64)
    next_value, next_adv = float(last_value), 0.0
    for t in range(n - 1, -1, -1):
        delta = rewards[t] + gamma * next_value * notdone[t] - values[t]
        next_adv = delta + gamma * lam * notdone[t] * next_adv
        adv[t] = next_adv
        next_value = values[t]
    return adv, adv + values


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    std = adv.std()
    return (adv - adv.mean()) / (std + 1e-8) if std > 0 else adv - adv.mean()


@dataclass
class UpdateStats:
    policy_loss: float = math.nan
    value_loss: float = math.nan
    entropy: float = math.nan
    clip_fraction: float = math.nan
    approx_kl: float = math.nan
    aborted: bool = False


def ppo_losses(net: PolicyNet, obs, masks, actions, old_logp, adv, returns, cfg: PPOConfig):
    """Differentiable total loss plus detached diagnostics for one minibatch."""
    logp_all, value = policy_forward(net, obs, masks)
    logp = ops.pick(logp_all, actions)
    dt = logp.dtype
    ratio = ops.exp(ops.sub(logp, old_logp.astype(dt)))
    adv_t = adv.astype(dt)
    surr1 = ops.mul(ratio, adv_t)
    surr2 = ops.mul(ops.clip(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip), adv_t)
    policy_loss = ops.neg(ops.mean(ops.minimum(surr1, surr2)))
    value_loss = ops.mean(ops.square(ops.sub(value, returns.astype(dt))))
    p = ops.exp(logp_all)
    ent = ops.neg(ops.mean(ops.sum(ops.mul(p, logp_all), axis=1)))
    total = ops.sub(ops.add(policy_loss, ops.mul(value_loss, cfg.value_coef)), ops.mul(ent, cfg.entropy_coef))
    r = ratio.data.astype(np.float64)
    diag = {
        "policy_loss": float(policy_loss.data), "value_loss": float(value_loss.data), "entropy": float(ent.data),
        "clip_fraction": float(np.mean(np.abs(r - 1.0) > cfg.clip)),
        "approx_kl": float(np.mean((r - 1.0) - np.log(r))),
    }
    return total, diag


def ppo_update(net: PolicyNet, opt: Adam, buf: RolloutBuffer, cfg: PPOConfig, rng: np.random.Generator) -> UpdateStats:
    """Clipped-surrogate update over ``cfg.epochs`` passes of shuffled minibatches."""
    if not buf.full:
        raise ValueError("rollout buffer must be full before an update")
    adv = normalize_advantages(buf.advantages)
    params = net.parameters()
    sums: dict[str, float] = {}
    count = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(buf.size)
        for start in range(0, buf.size, cfg.minibatch):
            idx = order[start:start + cfg.minibatch]
            total, diag = ppo_losses(net, buf.obs[idx], buf.masks[idx], buf.actions[idx], buf.logp[idx],
                                     adv[idx], buf.returns[idx], cfg)
            if not np.isfinite(total.data):
                return UpdateStats(aborted=True)
            net.zero_grad()
            backward(total)
            clip_grad_norm(params, cfg.max_grad_norm)
            opt.step()
            for k, v in diag.items():
                sums[k] = sums.get(k, 0.0) + v
            count += 1
    return UpdateStats(**{k: v / count for k, v in sums.items()})
