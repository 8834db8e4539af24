"""Stage 2: joint PPO and MAR training.

Each iteration collects one rollout with the MAR-processed reward, updates the
policy and critic, then fine-tunes the MAR network with MSE on reconstructions
visited during that rollout. The same loop with ``reward_mode="raw"`` and no
MAR is the plain PPO baseline.
"""
from __future__ import annotations

import csv
import io as _io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from ..diffcore import Adam, backward, no_grad
from ..env import EnvConfig, observation, refresh, reset, step
from ..io import Dataset
from ..marnet import MarNet, finetune_loss
from ..policies import EncoderConfig, PolicyNet, policy_forward, sample_action
from .ppo import PPOConfig, RolloutBuffer, compute_gae, ppo_update

LOG_FIELDS = ("rollout", "env_steps", "episodes", "mean_episode_return", "mean_final_quality",
              "policy_loss", "value_loss", "entropy", "clip_fraction", "approx_kl", "mar_loss")


@dataclass
class MascConfig:
    rollouts: int = 200
    ppo: PPOConfig = field(default_factory=PPOConfig)
    env: EnvConfig = field(default_factory=lambda: EnvConfig(reward_mode="mar"))
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    finetune_mar: bool = True           # False: never build the MAR optimiser
    mar_finetune_images: int = 64       # visited reconstructions used per rollout (<= rollout length)
    mar_finetune_batch: int = 16

    def validate(self) -> None:
        self.ppo.validate()
        if self.rollouts < 1:
            raise ValueError("need at least one rollout")
        if not 1 <= self.mar_finetune_images <= self.ppo.rollout_length or self.mar_finetune_batch < 1:
            raise ValueError("MAR fine-tune subset must lie in [1, rollout_length]")


@dataclass
class MascResult:
    policy: PolicyNet
    mar: MarNet | None
    log_rows: list


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ("nan" if math.isnan(v) else ("inf" if v > 0 else "-inf"))
    return str(v)


def log_csv_text(rows: list) -> str:
    out = _io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(LOG_FIELDS)
    for r in rows:
        w.writerow([_fmt(r[k]) for k in LOG_FIELDS])
    return out.getvalue()


def finetune_mar_pass(mar: MarNet, opt: Adam, buf: RolloutBuffer, references: np.ndarray,
                      count: int, batch: int, rng: np.random.Generator) -> float:
    """One epoch of MSE fine-tuning on ``count`` visited reconstructions."""
    pick = np.sort(rng.choice(buf.size, size=count, replace=False))
    total = 0.0
    for s in range(0, count, batch):
        idx = pick[s:s + batch]
        loss = finetune_loss(mar(buf.images[idx]), references[buf.sample_index[idx]])
        mar.zero_grad()
        backward(loss)
        opt.step()
        total += float(loss.data) * len(idx)
    mar.bump_version()
    return total / count


def masc_train(train: Dataset, cfg: MascConfig, mar: MarNet | None, seed: int = 0,
               log_path: str | Path | None = None, on_rollout: Callable | None = None) -> MascResult:
    """Run the joint loop. ``mar`` is required in MAR reward mode and is updated in place."""
    cfg.validate()
    env_cfg = cfg.env
    if env_cfg.reward_mode == "mar" and mar is None:
        raise ValueError("MAR reward mode needs a pretrained MAR network (run Stage 1 first)")
    if len(train) == 0:
        raise ValueError("training split is empty")
    h, w = train.height, train.width
    init_seq, env_seq, mar_seq = np.random.SeedSequence(seed).spawn(3)
    policy = PolicyNet(h, w, np.random.default_rng(init_seq), cfg.encoder)
    rng = np.random.default_rng(env_seq)      # episodes, actions, minibatch shuffles
    mar_rng = np.random.default_rng(mar_seq)  # fine-tune subsets only
    opt = Adam(policy.parameters(), lr=cfg.ppo.lr)
    use_mar = env_cfg.reward_mode == "mar"
    mar_opt = Adam(mar.parameters(), lr=cfg.ppo.mar_lr) if (use_mar and cfg.finetune_mar) else None
    _, references = train.normalized_pairs()
    references = references.astype(np.float32)
    env_mar = mar if use_mar else None

    def new_episode():
        i = int(rng.integers(len(train)))
        return reset(train.sample(i), env_cfg, env_mar, sample_index=i)

    state = new_episode()
    ep_return = 0.0
    rows = []
    n = cfg.ppo.rollout_length
    for r in range(cfg.rollouts):
        buf = RolloutBuffer(n, h, w)
        returns, finals = [], []
        for _ in range(n):
            state = refresh(state, env_mar)
            obs = observation(state, env_mar)
            with no_grad():
                logp, value = policy_forward(policy, obs, state.mask)
            lp = logp.data[0]
            a = sample_action(lp, rng)
            nxt, reward, done = step(state, a, env_mar)
            buf.add(obs, state.mask, a, float(lp[a]), float(value.data[0]), reward, done,
                    image=state.image, sample_index=state.sample_index)
            ep_return += reward
            if done:
                returns.append(ep_return)
                finals.append(nxt.quality)
                ep_return = 0.0
                state = new_episode()
            else:
                state = nxt
        if buf.dones[-1]:
            last_value = 0.0
        else:
            state = refresh(state, env_mar)
            with no_grad():
                _, v = policy_forward(policy, observation(state, env_mar), state.mask)
            last_value = float(v.data[0])
        buf.advantages, buf.returns = compute_gae(buf.rewards, buf.values, buf.dones, last_value,
                                                  cfg.ppo.gamma, cfg.ppo.gae_lambda)
        stats = ppo_update(policy, opt, buf, cfg.ppo, rng)
        mar_loss = math.nan
        if mar_opt is not None:
            mar_loss = finetune_mar_pass(mar, mar_opt, buf, references, cfg.mar_finetune_images,
                                         cfg.mar_finetune_batch, mar_rng)
        row = {
            "rollout": r, "env_steps": (r + 1) * n, "episodes": len(returns),
            "mean_episode_return": float(np.mean(returns)) if returns else math.nan,
            "mean_final_quality": float(np.mean(finals)) if finals else math.nan,
            "policy_loss": stats.policy_loss, "value_loss": stats.value_loss, "entropy": stats.entropy,
            "clip_fraction": stats.clip_fraction, "approx_kl": stats.approx_kl, "mar_loss": mar_loss,
        }
        rows.append(row)
        if log_path is not None:
            Path(log_path).write_text(log_csv_text(rows))
        if on_rollout is not None:
            on_rollout(row)
    return MascResult(policy, mar, rows)
