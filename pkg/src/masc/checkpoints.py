"""Self-describing network checkpoints on top of the MASCCK01 container.

Architecture settings are stored as ``meta.*`` tensors next to the weights, so
a checkpoint can be loaded without the config that produced it.
"""
from __future__ import annotations

from collections import OrderedDict

import numpy as np

from .io import FormatError, load_checkpoint, save_checkpoint
from .marnet import MarConfig, MarNet
from .policies import EncoderConfig, PolicyNet, QAgent, QNet

_NORMS = ("instance", "none")
KINDS = {"mar": 0, "policy": 1, "qnet": 2}


def _meta(kind: str, **fields) -> "OrderedDict[str, np.ndarray]":
    out = OrderedDict([("meta.kind", np.array([KINDS[kind]], np.float32))])
    for k, v in fields.items():
        out[f"meta.{k}"] = np.atleast_1d(np.asarray(v, np.float32))
    return out


def _split(tensors: dict, kind: str):
    meta = {k[5:]: v for k, v in tensors.items() if k.startswith("meta.")}
    weights = OrderedDict((k, v) for k, v in tensors.items() if not k.startswith("meta."))
    if "kind" not in meta or int(meta["kind"][0]) != KINDS[kind]:
        raise FormatError(f"checkpoint does not hold a {kind} network")
    return meta, weights


def save_mar(path, net: MarNet) -> None:
    t = _meta("mar", depth=net.cfg.depth, base_channels=net.cfg.base_channels, norm=_NORMS.index(net.cfg.norm))
    t.update(net.state_dict())
    save_checkpoint(path, t)


def load_mar(path) -> MarNet:
    meta, weights = _split(load_checkpoint(path), "mar")
    cfg = MarConfig(int(meta["depth"][0]), int(meta["base_channels"][0]), _NORMS[int(meta["norm"][0])])
    net = MarNet(cfg)
    net.load_state_dict(weights)
    return net


def _encoder_meta(shape, cfg: EncoderConfig) -> dict:
    return {"height": shape[0], "width": shape[1], "channels": list(cfg.channels), "norm": _NORMS.index(cfg.norm)}


def _encoder_cfg(meta) -> tuple:
    cfg = EncoderConfig(tuple(int(c) for c in meta["channels"]), _NORMS[int(meta["norm"][0])])
    return int(meta["height"][0]), int(meta["width"][0]), cfg


def save_policy(path, net: PolicyNet, cfg: EncoderConfig) -> None:
    t = _meta("policy", **_encoder_meta(net.shape, cfg))
    t.update(net.state_dict())
    save_checkpoint(path, t)


def load_policy(path) -> PolicyNet:
    meta, weights = _split(load_checkpoint(path), "policy")
    h, w, cfg = _encoder_cfg(meta)
    net = PolicyNet(h, w, np.random.default_rng(0), cfg)
    net.load_state_dict(weights)
    return net


def save_qnet(path, agent: QAgent, cfg: EncoderConfig) -> None:
    t = _meta("qnet", **_encoder_meta(agent.online.shape, cfg))
    t.update(agent.online.state_dict())
    save_checkpoint(path, t)


def load_qnet(path) -> QNet:
    meta, weights = _split(load_checkpoint(path), "qnet")
    h, w, cfg = _encoder_cfg(meta)
    net = QNet(h, w, np.random.default_rng(0), cfg)
    net.load_state_dict(weights)
    return net
