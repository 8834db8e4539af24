"""DQN and double-DQN baselines with a ring replay buffer.

Transitions store only (sample index, mask, action, reward, next mask, done);
observations are rebuilt from k-space when a minibatch is drawn, which keeps a
10^4-entry buffer small.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .. import fourier
from ..diffcore import Adam, Tensor, backward, clip_grad_norm, no_grad, ops
from ..env import EnvConfig, observation, reset, step
from ..io import Dataset
from ..policies import EncoderConfig, QAgent, q_forward


@dataclass
class DQNConfig:
    steps: int = 10240
    capacity: int = 10000
    batch: int = 64
    gamma: float = 0.99
    lr: float = 3e-4
    target_sync: int = 500
    eps_start: float = 1.0
    eps_end: float = 0.05
    train_every: int = 4
    max_grad_norm: float = 10.0
    double: bool = False
    log_every: int = 512
    env: EnvConfig = field(default_factory=EnvConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)

    def validate(self) -> None:
        if min(self.steps, self.capacity, self.batch, self.target_sync, self.train_every, self.log_every) < 1:
            raise ValueError("DQN counts must be positive")
        if not 0 <= self.gamma <= 1 or not 0 <= self.eps_end <= self.eps_start <= 1:
            raise ValueError("need gamma in [0, 1] and 0 <= eps_end <= eps_start <= 1")
        if self.env.reward_mode != "raw":
            raise ValueError("the DQN baselines use the raw reconstruction reward")

    def epsilon(self, t: int) -> float:
        """Linear anneal over the first half of training, then constant."""
        horizon = max(1, self.steps // 2)
        frac = min(1.0, t / horizon)
        return self.eps_start + frac * (self.eps_end - self.eps_start)


class ReplayBuffer:
    def __init__(self, capacity: int, n_pe: int):
        self.capacity = capacity
        self.sample_index = np.zeros(capacity, np.int64)
        self.mask = np.zeros((capacity, n_pe), bool)
        self.action = np.zeros(capacity, np.int64)
        self.reward = np.zeros(capacity, np.float64)
        self.next_mask = np.zeros((capacity, n_pe), bool)
        self.done = np.zeros(capacity, bool)
        self.size = 0
        self.ptr = 0

    def __len__(self) -> int:
        return self.size

    def add(self, sample_index, mask, action, reward, next_mask, done) -> None:
        i = self.ptr
        self.sample_index[i] = sample_index
        self.mask[i] = mask
        self.action[i] = action
        self.reward[i] = reward
        self.next_mask[i] = next_mask
        self.done[i] = done
        self.ptr = (self.ptr + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, rng: np.random.Generator, batch: int) -> np.ndarray:
        if self.size == 0:
            raise ValueError("replay buffer is empty")
        return rng.integers(self.size, size=batch)


def td_targets(rewards, dones, next_valid, q_next_target, q_next_online=None, gamma: float = 0.99) -> np.ndarray:
    """One-step targets. With ``q_next_online`` the action is chosen by the
    online network and evaluated by the target network (double DQN)."""
    q_t = np.where(next_valid, np.asarray(q_next_target, np.float64), -np.inf)
    if q_next_online is None:
        boot = q_t.max(axis=1)
    else:
        q_o = np.where(next_valid, np.asarray(q_next_online, np.float64), -np.inf)
        boot = np.asarray(q_next_target, np.float64)[np.arange(len(q_o)), q_o.argmax(axis=1)]
    notdone = ~np.asarray(dones, bool)
    boot = np.where(notdone, boot, 0.0)
    return np.asarray(rewards, np.float64) + gamma * boot


def huber(d: Tensor) -> Tensor:
    ad = ops.abs(d)
    m = ops.minimum(ad, Tensor(np.ones(ad.shape, ad.dtype)))
    return ops.mean(ops.add(ops.mul(ops.square(m), 0.5), ops.sub(ad, m)))


@dataclass
class DQNResult:
    agent: QAgent
    log_rows: list


def dqn_train(train: Dataset, cfg: DQNConfig, seed: int = 0, on_log: Callable | None = None) -> DQNResult:
    cfg.validate()
    if len(train) == 0:
        raise ValueError("training split is empty")
    h, w = train.height, train.width
    env_cfg = cfg.env
    env_cfg.validate(w)
    init_seq, env_seq = np.random.SeedSequence(seed).spawn(2)
    agent = QAgent(h, w, np.random.default_rng(init_seq), cfg.encoder)
    rng = np.random.default_rng(env_seq)
    opt = Adam(agent.online.parameters(), lr=cfg.lr)
    replay = ReplayBuffer(cfg.capacity, w)
    source = train.metal_k if env_cfg.source == "metal" else train.clean_k
    scale = train.clean_images.reshape(len(train), -1).max(axis=1)
    kspace = (source / scale[:, None, None]).astype(np.complex64)

    def obs_batch(idx, masks):
        out = np.empty((len(idx), h, w, 2), np.float32)
        for j, (i, m) in enumerate(zip(idx, masks)):
            out[j, ..., 0] = fourier.reconstruct(kspace[i], m)
            out[j, ..., 1] = m[None, :]
        return out

    def new_episode():
        i = int(rng.integers(len(train)))
        return reset(train.sample(i), env_cfg, sample_index=i)

    state = new_episode()
    ep_ret, returns, losses, rows = 0.0, [], [], []
    for t in range(cfg.steps):
        a, _ = q_forward(agent.online, observation(state), state.mask, cfg.epsilon(t), rng)
        nxt, r, done = step(state, a)
        replay.add(state.sample_index, state.mask, a, r, nxt.mask, done)
        ep_ret += r
        if done:
            returns.append(ep_ret)
            ep_ret = 0.0
            state = new_episode()
        else:
            state = nxt
        if len(replay) >= cfg.batch and t % cfg.train_every == 0:
            b = replay.sample(rng, cfg.batch)
            next_obs = obs_batch(replay.sample_index[b], replay.next_mask[b])
            with no_grad():
                q_next_t = agent.target(next_obs).data
                q_next_o = agent.online(next_obs).data if cfg.double else None
            targets = td_targets(replay.reward[b], replay.done[b], ~replay.next_mask[b], q_next_t, q_next_o, cfg.gamma)
            q = agent.online(obs_batch(replay.sample_index[b], replay.mask[b]))
            loss = huber(ops.sub(ops.pick(q, replay.action[b]), targets.astype(np.float32)))
            agent.online.zero_grad()
            backward(loss)
            clip_grad_norm(agent.online.parameters(), cfg.max_grad_norm)
            opt.step()
            losses.append(float(loss.data))
        if (t + 1) % cfg.target_sync == 0:
            agent.sync_target()
        if (t + 1) % cfg.log_every == 0 or t + 1 == cfg.steps:
            row = {"env_steps": t + 1, "episodes": len(returns),
                   "mean_episode_return": float(np.mean(returns)) if returns else math.nan,
                   "loss": float(np.mean(losses)) if losses else math.nan, "epsilon": cfg.epsilon(t)}
            rows.append(row)
            if on_log is not None:
                on_log(row)
            returns, losses = [], []
    return DQNResult(agent, rows)
