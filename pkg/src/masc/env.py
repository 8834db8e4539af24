"""Sequential phase-encode line acquisition as an MDP over one paired sample.

Each episode works on a per-sample normalised copy of the data: k-space and the
clean reference are divided by ``max(I*)`` so reconstructions, observations and
metrics all share the data range 1.0. The state invariant
``I_t == reconstruct(K, M_t)`` refers to that normalised k-space.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import fourier
from .metrics import DEFAULT_QUALITY, QualityConfig, quality

ACCEL_PRESETS = {"10x": (1, 5), "5x": (3, 10)}   # (initial lines, budget) at N_pe = 64


@dataclass
class EnvConfig:
    initial_lines: int = 1
    budget: int = 5
    alpha: float = 100.0
    quality: QualityConfig = field(default_factory=lambda: DEFAULT_QUALITY)
    reward_mode: str = "raw"          # "raw": quality of I_t; "mar": quality of g(I_t)
    source: str = "metal"             # which k-space the agent acquires: "metal" or "clean"

    @classmethod
    def preset(cls, accel: str, **kw) -> "EnvConfig":
        if accel not in ACCEL_PRESETS:
            raise ValueError(f"unknown acceleration preset {accel!r}; choose from {sorted(ACCEL_PRESETS)}")
        init, budget = ACCEL_PRESETS[accel]
        return cls(initial_lines=init, budget=budget, **kw)

    @property
    def total_lines(self) -> int:
        return self.initial_lines + self.budget

    def validate(self, n_pe: int | None = None) -> None:
        if self.initial_lines < 0 or self.budget < 1:
            raise ValueError("need initial_lines >= 0 and budget >= 1")
        if self.alpha < 0:
            raise ValueError("reward scale alpha must be non-negative")
        if self.reward_mode not in ("raw", "mar"):
            raise ValueError(f"unknown reward mode {self.reward_mode!r}")
        if self.source not in ("metal", "clean"):
            raise ValueError(f"unknown k-space source {self.source!r}")
        if n_pe is not None and self.total_lines > n_pe:
            raise ValueError(f"initial_lines + budget = {self.total_lines} exceeds N_pe = {n_pe}")


@dataclass
class AcquisitionState:
    image: np.ndarray            # I_t
    mask: np.ndarray             # M_t, bool over phase-encode columns
    steps: int
    budget_remaining: int
    kspace: np.ndarray           # normalised, DC-centred
    reference: np.ndarray        # normalised I*
    cfg: EnvConfig
    processed: np.ndarray        # g(I_t) in MAR mode, else I_t
    quality: float               # Q(processed, I*)
    mar_version: int | None = None
    sample_index: int = -1

    @property
    def done(self) -> bool:
        return self.budget_remaining == 0

    @property
    def n_pe(self) -> int:
        return self.mask.shape[0]


def center_order(n_pe: int) -> np.ndarray:
    """Columns sorted by distance from DC, ties toward the lower index."""
    dc = fourier.dc_column(n_pe)
    idx = np.arange(n_pe)
    return idx[np.lexsort((idx, np.abs(idx - dc)))]


def initial_mask(n_pe: int, count: int) -> np.ndarray:
    m = np.zeros(n_pe, dtype=bool)
    m[center_order(n_pe)[:count]] = True
    return m


def _process(image: np.ndarray, cfg: EnvConfig, mar):
    if cfg.reward_mode == "mar" and mar is not None:
        return mar.correct(image), mar.version
    return image, None


def reset(sample, cfg: EnvConfig, mar=None, sample_index: int = -1) -> AcquisitionState:
    """Start an episode on ``sample`` with the initial lines nearest DC."""
    k = sample.metal_k if cfg.source == "metal" else sample.clean_k
    n_pe = k.shape[-1]
    cfg.validate(n_pe)
    if cfg.reward_mode == "mar" and mar is None:
        raise ValueError("reward mode 'mar' needs a MAR network")
    scale = float(np.max(sample.clean_image))
    if scale <= 0:
        raise ValueError("clean reference image has no signal")
    k = (k / np.float32(scale)).astype(np.complex64)
    ref = (sample.clean_image / np.float32(scale)).astype(np.float32)
    mask = initial_mask(n_pe, cfg.initial_lines)
    image = fourier.reconstruct(k, mask).astype(np.float32)
    processed, ver = _process(image, cfg, mar)
    return AcquisitionState(image, mask, 0, cfg.budget, k, ref, cfg, processed,
                            quality(processed, ref, cfg.quality), ver, sample_index)


def refresh(state: AcquisitionState, mar) -> AcquisitionState:
    """Recompute the cached g(I_t) if the MAR network changed since it was computed."""
    if state.cfg.reward_mode != "mar" or mar is None or state.mar_version == mar.version:
        return state
    processed = mar.correct(state.image)
    return replace(state, processed=processed, mar_version=mar.version,
                   quality=quality(processed, state.reference, state.cfg.quality))


def step(state: AcquisitionState, action: int, mar=None) -> tuple[AcquisitionState, float, bool]:
    """Acquire column ``action``; reward is ``alpha * (Q_{t+1} - Q_t)``."""
    if state.done:
        raise ValueError("episode budget exhausted")
    action = int(action)
    if not 0 <= action < state.n_pe:
        raise ValueError(f"line index {action} outside [0, {state.n_pe})")
    if state.mask[action]:
        raise ValueError(f"line {action} already acquired")
    cfg = state.cfg
    if cfg.reward_mode == "mar" and mar is None:
        raise ValueError("reward mode 'mar' needs a MAR network")
    state = refresh(state, mar)
    mask = state.mask.copy()
    mask[action] = True
    image = fourier.reconstruct(state.kspace, mask).astype(np.float32)
    processed, ver = _process(image, cfg, mar)
    q = quality(processed, state.reference, cfg.quality)
    reward = cfg.alpha * (q - state.quality)
    nxt = replace(state, image=image, mask=mask, steps=state.steps + 1,
                  budget_remaining=state.budget_remaining - 1, processed=processed,
                  quality=q, mar_version=ver)
    return nxt, float(reward), nxt.done


def observation(state: AcquisitionState, mar=None) -> np.ndarray:
    """(H, W, 2) float32: reconstruction (MAR-corrected in MAR mode) and the
    line mask broadcast down the readout axis."""
    state = refresh(state, mar)
    h, w = state.image.shape
    obs = np.empty((h, w, 2), dtype=np.float32)
    obs[..., 0] = state.processed
    obs[..., 1] = state.mask[None, :]
    return obs


class AcquisitionEnv:
    """Stateful convenience wrapper over :func:`reset` / :func:`step`."""

    def __init__(self, cfg: EnvConfig, mar=None):
        self.cfg = cfg
        self.mar = mar
        self.state: AcquisitionState | None = None

    def reset(self, sample, sample_index: int = -1) -> AcquisitionState:
        self.state = reset(sample, self.cfg, self.mar, sample_index)
        return self.state

    def step(self, action: int) -> tuple[AcquisitionState, float, bool]:
        if self.state is None:
            raise RuntimeError("call reset() first")
        self.state, r, done = step(self.state, action, self.mar)
        return self.state, r, done

    def observation(self) -> np.ndarray:
        if self.state is None:
            raise RuntimeError("call reset() first")
        self.state = refresh(self.state, self.mar)
        return observation(self.state, self.mar)
