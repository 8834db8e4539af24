from dataclasses import replace

import numpy as np
import pytest

from masc import fourier
from masc.env import (ACCEL_PRESETS, AcquisitionEnv, EnvConfig, center_order, initial_mask, observation, refresh,
                      reset, step)
from masc.marnet import MarNet
from masc.metalsim import make_paired_sample
from masc.metrics import quality


@pytest.fixture(scope="module")
def sample():
    return make_paired_sample(21)


def test_initial_lines_nearest_dc():
    assert set(np.flatnonzero(initial_mask(64, 2))) == {32, 31}
    assert list(center_order(8)[:3]) == [4, 3, 5]


def test_reset_contract(sample):
    cfg = EnvConfig(initial_lines=2, budget=5)
    s = reset(sample, cfg)
    scale = sample.clean_image.max()
    expected = fourier.reconstruct(sample.metal_k / scale, s.mask)
    np.testing.assert_allclose(s.image, expected, rtol=1e-5, atol=1e-6)
    assert s.budget_remaining == 5
    assert s.reference.max() == pytest.approx(1.0)


def test_zero_column_gives_zero_reward(sample):
    k = sample.metal_k.copy()
    k[:, 10] = 0
    s = reset(replace(sample, metal_k=k), EnvConfig())
    nxt, r, _ = step(s, 10)
    np.testing.assert_array_equal(nxt.image, s.image)
    assert r == 0.0


@pytest.mark.parametrize("mode", ["raw", "mar"])
def test_reward_telescopes(sample, mode):
    mar = MarNet(rng=np.random.default_rng(0))
    # give the MAR a non-trivial residual so the two modes differ
    mar.head.weight.data[:] = np.random.default_rng(1).normal(0, 0.05, mar.head.weight.shape)
    cfg = EnvConfig(initial_lines=1, budget=5, reward_mode=mode)
    rng = np.random.default_rng(2)
    for _ in range(5):
        s0 = s = reset(sample, cfg, mar if mode == "mar" else None)
        total, done = 0.0, False
        while not done:
            s, r, done = step(s, int(rng.choice(np.flatnonzero(~s.mask))), mar if mode == "mar" else None)
            total += r
        assert total == pytest.approx(cfg.alpha * (s.quality - s0.quality), abs=1e-9)
        proc = mar.correct(s.image) if mode == "mar" else s.image
        assert s.quality == pytest.approx(quality(proc, s.reference), abs=1e-12)


def test_episode_terminates_with_budget(sample):
    cfg = EnvConfig(initial_lines=3, budget=4)
    s, done, n = reset(sample, cfg), False, 0
    while not done:
        s, _, done = step(s, int(np.flatnonzero(~s.mask)[0]))
        n += 1
    assert n == 4 and s.mask.sum() == 7
    with pytest.raises(ValueError):
        step(s, int(np.flatnonzero(~s.mask)[0]))


def test_reacquire_rejected(sample):
    s = reset(sample, EnvConfig())
    with pytest.raises(ValueError):
        step(s, 32)
    with pytest.raises(ValueError):
        step(s, 64)


def test_observation_channels(sample):
    s = reset(sample, EnvConfig(initial_lines=3))
    obs = observation(s)
    assert obs.shape == (64, 64, 2) and obs.dtype == np.float32
    np.testing.assert_array_equal(obs[..., 0], s.image)
    for j in range(64):
        assert (obs[:, j, 1] == 1).all() == bool(s.mask[j])
        assert (obs[:, j, 1] == 0).all() == (not s.mask[j])


def test_identity_mar_equals_raw_mode(sample):
    mar = MarNet(rng=np.random.default_rng(0))     # zeroed head: g(I) = I
    raw = reset(sample, EnvConfig())
    with_mar = reset(sample, EnvConfig(reward_mode="mar"), mar)
    np.testing.assert_allclose(observation(with_mar, mar), observation(raw), atol=1e-6)
    a, ra, _ = step(raw, 10)
    b, rb, _ = step(with_mar, 10, mar)
    assert ra == pytest.approx(rb, abs=1e-4)


def test_refresh_tracks_mar_version(sample):
    mar = MarNet(rng=np.random.default_rng(0))
    s = reset(sample, EnvConfig(reward_mode="mar"), mar)
    assert refresh(s, mar) is s
    mar.head.weight.data[:] = 0.01
    mar.bump_version()
    s2 = refresh(s, mar)
    assert s2.mar_version == mar.version and s2.quality != s.quality


def test_mar_mode_requires_network(sample):
    with pytest.raises(ValueError):
        reset(sample, EnvConfig(reward_mode="mar"))


def test_presets_and_validation():
    assert EnvConfig.preset("5x").total_lines == sum(ACCEL_PRESETS["5x"])
    with pytest.raises(ValueError):
        EnvConfig.preset("3x")
    with pytest.raises(ValueError):
        EnvConfig(initial_lines=60, budget=10).validate(64)


def test_stateful_wrapper(sample):
    env = AcquisitionEnv(EnvConfig())
    with pytest.raises(RuntimeError):
        env.step(0)
    env.reset(sample)
    _, _, done = env.step(0)
    assert not done
    assert env.observation().shape == (64, 64, 2)
