"""Flat ``key = value`` run configuration.

Every key has a default; unknown keys are rejected. ``#`` starts a comment.
A resolved snapshot (all keys, one per line) is written next to every run's
outputs and can be fed back through ``--config`` to repeat the run.
"""
from __future__ import annotations

from collections import OrderedDict
from pathlib import Path

from .data import DataConfig
from .env import ACCEL_PRESETS, EnvConfig
from .marnet import MarConfig
from .metalsim import ImplantConfig
from .metrics import QualityConfig
from .phantom import PhantomConfig, SequenceParams
from .policies import EncoderConfig
from .trainer import DQNConfig, MascConfig, PPOConfig, PretrainConfig


class ConfigError(ValueError):
    pass


DEFAULTS: "OrderedDict[str, object]" = OrderedDict([
    ("seed", 0),
    ("data_dir", "data"),
    # geometry and acceleration
    ("height", 64),
    ("width", 64),
    ("accel", "10x"),
    ("initial_lines", -1),          # -1: take from the acceleration preset
    ("budget", -1),
    # dataset
    ("n_train", 160),
    ("n_val", 20),
    ("n_test", 20),
    ("split_scale", 1.0),
    ("variants", 1),
    ("phantom_min_inner", 3),
    ("phantom_max_inner", 6),
    ("implant_shape", "capsule"),
    ("implant_half_length", 5.0),
    ("implant_radius", 2.5),
    ("chi_ppm", 900.0),
    ("peak_df_hz", 4000.0),
    ("rf_fwhm_hz", 2250.0),
    ("max_rotation_deg", 45.0),
    ("max_shift_frac", 0.25),
    ("noise_std", 0.0),
    ("tr_ms", 4050.0),
    ("te_ms", 32.0),
    ("readout_bw_hz", 710.0),
    ("rf_bw_hz", 1000.0),
    # quality and reward
    ("w_ssim", 0.5),
    ("w_nmse", 0.5),
    ("ssim_window", 11),
    ("ssim_sigma", 1.5),
    ("alpha", 100.0),
    ("kspace_source", "metal"),
    # MAR network
    ("mar_depth", 3),
    ("mar_channels", 8),
    ("mar_norm", "instance"),
    ("pretrain_epochs", 100),
    ("pretrain_batch", 8),
    ("pretrain_lr", 1e-3),
    ("pretrain_ssim_weight", 0.5),
    # policy networks
    ("encoder_channels", (8, 16, 32)),
    ("encoder_norm", "instance"),
    # PPO / joint training
    ("rollouts", 200),
    ("rollout_length", 512),
    ("ppo_epochs", 4),
    ("clip", 0.2),
    ("entropy_coef", 0.01),
    ("value_coef", 0.5),
    ("lr", 3e-4),
    ("mar_lr", 1e-5),
    ("gamma", 0.99),
    ("gae_lambda", 0.95),
    ("minibatch", 64),
    ("max_grad_norm", 0.5),
    ("mar_finetune_images", 64),
    ("mar_finetune_batch", 16),
    # DQN baselines
    ("dqn_steps", 10240),
    ("replay_capacity", 10000),
    ("dqn_batch", 64),
    ("target_sync", 500),
    ("eps_start", 1.0),
    ("eps_end", 0.05),
    ("dqn_lr", 3e-4),
    ("dqn_train_every", 4),
    ("dqn_max_grad_norm", 10.0),
    # evaluation
    ("reference_policy", "masc+mar"),
])


def _convert(key: str, raw: str):
    default = DEFAULTS[key]
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            if raw.lower() not in ("true", "false", "1", "0"):
                raise ValueError(raw)
            return raw.lower() in ("true", "1")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(int(v) for v in raw.split(",") if v.strip())
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {type(default).__name__}") from exc
    return raw


def _render(v) -> str:
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


class RunConfig:
    def __init__(self, values: dict | None = None):
        self.values = OrderedDict(DEFAULTS)
        for k, v in (values or {}).items():
            self.set(k, v)

    # -- access ---------------------------------------------------------
    def __getitem__(self, key: str):
        return self.values[key]

    def set(self, key: str, value) -> None:
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        self.values[key] = _convert(key, value) if isinstance(value, str) else value

    # -- text form ------------------------------------------------------
    @classmethod
    def parse(cls, text: str, origin: str = "<config>") -> "RunConfig":
        cfg = cls()
        seen = set()
        for n, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{origin}:{n}: expected key = value")
            key, raw = (s.strip() for s in line.split("=", 1))
            if key not in DEFAULTS:
                raise ConfigError(f"{origin}:{n}: unknown config key {key!r}")
            if key in seen:
                raise ConfigError(f"{origin}:{n}: duplicate key {key!r}")
            seen.add(key)
            cfg.values[key] = _convert(key, raw)
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.parse(Path(path).read_text(), str(path))

    def to_text(self) -> str:
        return "".join(f"{k} = {_render(v)}\n" for k, v in self.values.items())

    def write(self, path) -> None:
        Path(path).write_text(self.to_text())

    # -- module configs -------------------------------------------------
    def lines(self) -> tuple[int, int]:
        accel = self["accel"]
        if accel not in ACCEL_PRESETS:
            raise ConfigError(f"accel must be one of {sorted(ACCEL_PRESETS)}, got {accel!r}")
        init, budget = ACCEL_PRESETS[accel]
        if self["initial_lines"] >= 0:
            init = self["initial_lines"]
        if self["budget"] >= 0:
            budget = self["budget"]
        return init, budget

    def quality(self) -> QualityConfig:
        return QualityConfig(self["w_ssim"], self["w_nmse"], self["ssim_window"], self["ssim_sigma"])

    def env(self, reward_mode: str = "raw") -> EnvConfig:
        init, budget = self.lines()
        cfg = EnvConfig(init, budget, self["alpha"], self.quality(), reward_mode, self["kspace_source"])
        cfg.validate(self["width"])
        return cfg

    def data(self) -> DataConfig:
        phantom = PhantomConfig(height=self["height"], width=self["width"],
                                min_inner=self["phantom_min_inner"], max_inner=self["phantom_max_inner"])
        phantom.validate()
        implant = ImplantConfig(self["implant_shape"], self["implant_half_length"], self["implant_radius"],
                                self["chi_ppm"], self["peak_df_hz"], self["rf_fwhm_hz"], self["max_rotation_deg"],
                                self["max_shift_frac"], self["noise_std"])
        seq = SequenceParams(self["tr_ms"], self["te_ms"], self["readout_bw_hz"], self["rf_bw_hz"])
        seq.validate()
        return DataConfig(self["n_train"], self["n_val"], self["n_test"], self["split_scale"], self["variants"],
                          phantom, implant, seq)

    def mar(self) -> MarConfig:
        cfg = MarConfig(self["mar_depth"], self["mar_channels"], self["mar_norm"])
        cfg.validate()
        return cfg

    def pretrain(self) -> PretrainConfig:
        return PretrainConfig(self["pretrain_epochs"], self["pretrain_batch"], self["pretrain_lr"],
                              self["pretrain_ssim_weight"])

    def encoder(self) -> EncoderConfig:
        return EncoderConfig(tuple(self["encoder_channels"]), self["encoder_norm"])

    def ppo(self) -> PPOConfig:
        return PPOConfig(self["rollout_length"], self["ppo_epochs"], self["clip"], self["entropy_coef"],
                         self["value_coef"], self["lr"], self["mar_lr"], self["gamma"], self["gae_lambda"],
                         self["minibatch"], self["max_grad_norm"])

    def masc(self, reward_mode: str = "mar") -> MascConfig:
        return MascConfig(self["rollouts"], self.ppo(), self.env(reward_mode), self.encoder(),
                          True, self["mar_finetune_images"], self["mar_finetune_batch"])

    def dqn(self, double: bool = False) -> DQNConfig:
        return DQNConfig(self["dqn_steps"], self["replay_capacity"], self["dqn_batch"], self["gamma"],
                         self["dqn_lr"], self["target_sync"], self["eps_start"], self["eps_end"],
                         self["dqn_train_every"], self["dqn_max_grad_norm"], double,
                         env=self.env("raw"), encoder=self.encoder())
