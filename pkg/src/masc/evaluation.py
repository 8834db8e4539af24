"""Held-out evaluation: final-reconstruction metric tables, paired t-tests,
acquisition curves, and small SVG line charts."""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .env import EnvConfig, observation, reset, step
from .io import Dataset
from .marnet import MarNet
from .metrics import PSNR_CAP, QualityConfig, all_metrics, paired_t_test, quality, ssim, mse
from .policies import BASELINES, PolicyNet, QNet, act, baseline_next_line, q_forward

LEARNED = ("masc", "ppo-raw", "dqn", "ss-ddqn")
POLICY_NAMES = BASELINES + LEARNED
METRICS = ("ssim", "psnr", "mse", "nmse", "mae")
CURVE_METRICS = ("quality", "ssim", "mse")
TABLE_FIELDS = (("policy", "mar", "accel", "n") + tuple(f"{m}_{s}" for m in METRICS for s in ("mean", "std"))
                + tuple(f"p_{m}" for m in METRICS) + ("reference",))
CURVE_FIELDS = ("policy", "mar", "step", "lines") + tuple(f"{m}_{s}" for m in CURVE_METRICS for s in ("mean", "std"))


@dataclass
class EvalPolicy:
    name: str
    choose: Callable            # (state, obs or None, rng) -> line index
    needs_obs: bool = False
    obs_mar: MarNet | None = None   # MAR inside the observation (policies trained on corrected images)
    eval_mar: MarNet | None = None  # MAR applied for the "with MAR" rows


def baseline_policy(kind: str, total_lines: int, eval_mar: MarNet | None = None) -> EvalPolicy:
    if kind not in BASELINES:
        raise ValueError(f"unknown baseline {kind!r}")
    return EvalPolicy(kind, lambda s, o, rng: baseline_next_line(kind, s.mask, rng, total_lines), False, None, eval_mar)


def ppo_policy(name: str, net: PolicyNet, obs_mar: MarNet | None, eval_mar: MarNet | None) -> EvalPolicy:
    return EvalPolicy(name, lambda s, o, rng: act(net, o, s.mask, greedy=True)[0], True, obs_mar, eval_mar)


def q_policy(name: str, net: QNet, eval_mar: MarNet | None) -> EvalPolicy:
    return EvalPolicy(name, lambda s, o, rng: q_forward(net, o, s.mask, 0.0)[0], True, None, eval_mar)


@dataclass
class EvalResult:
    accel: str
    rows: list = field(default_factory=list)
    curves: list = field(default_factory=list)
    per_sample: dict = field(default_factory=dict)   # (policy, mar) -> {metric: array over samples}
    curve_samples: dict = field(default_factory=dict)  # (policy, mar) -> {metric: (samples, steps)}


def run_episode(sample, env_cfg: EnvConfig, policy: EvalPolicy, rng: np.random.Generator) -> tuple:
    """Returns (stack of I_0..I_T, normalised reference, final mask)."""
    mode = "mar" if policy.obs_mar is not None else "raw"
    cfg = EnvConfig(env_cfg.initial_lines, env_cfg.budget, env_cfg.alpha, env_cfg.quality, mode, env_cfg.source)
    state = reset(sample, cfg, policy.obs_mar)
    images = [state.image]
    done = False
    while not done:
        obs = observation(state, policy.obs_mar) if policy.needs_obs else None
        state, _, done = step(state, policy.choose(state, obs, rng), policy.obs_mar)
        images.append(state.image)
    return np.stack(images), state.reference, state.mask


def evaluate_policies(test: Dataset, policies: list[EvalPolicy], env_cfg: EnvConfig, accel: str = "",
                      with_mar: tuple = (False, True), seed: int = 0, reference: str = "masc+mar",
                      qcfg: QualityConfig | None = None) -> EvalResult:
    """Every policy is run once per test sample; metrics are reported on the raw
    reconstructions and, when requested, on MAR-corrected ones."""
    qcfg = qcfg or env_cfg.quality
    res = EvalResult(accel)
    for code, pol in enumerate(policies):
        flags = [f for f in with_mar if not f or pol.eval_mar is not None]
        if len(flags) < len(with_mar):
            warnings.warn(f"{pol.name}: no MAR network available, skipping the with-MAR row")
        if not flags:
            continue
        finals = {f: {m: [] for m in METRICS} for f in flags}
        curves = {f: {m: [] for m in CURVE_METRICS} for f in flags}
        for i in range(len(test)):
            rng = np.random.default_rng([seed, POLICY_NAMES.index(pol.name) if pol.name in POLICY_NAMES else 99, i])
            images, ref, _ = run_episode(test.sample(i), env_cfg, pol, rng)
            for f in flags:
                seq = pol.eval_mar.correct(images) if f else images
                for m, v in all_metrics(seq[-1], ref, qcfg).items():
                    finals[f][m].append(v)
                curves[f]["quality"].append([quality(x, ref, qcfg) for x in seq])
                curves[f]["ssim"].append([ssim(x, ref, qcfg) for x in seq])
                curves[f]["mse"].append([mse(x, ref) for x in seq])
        for f in flags:
            key = (pol.name, int(f))
            res.per_sample[key] = {m: np.asarray(v) for m, v in finals[f].items()}
            res.curve_samples[key] = {m: np.asarray(v) for m, v in curves[f].items()}
    _summarise(res, env_cfg, reference)
    return res


def _std(v: np.ndarray) -> float:
    return float(v.std(ddof=1)) if v.size > 1 else 0.0


def _summarise(res: EvalResult, env_cfg: EnvConfig, reference: str) -> None:
    name, _, flag = reference.partition("+")
    ref_key = (name, 1 if flag == "mar" else 0)
    ref = res.per_sample.get(ref_key)
    for key, vals in res.per_sample.items():
        row = {"policy": key[0], "mar": key[1], "accel": res.accel, "n": len(vals["ssim"]),
               "reference": reference if ref is not None else ""}
        for m in METRICS:
            row[f"{m}_mean"] = float(vals[m].mean())
            row[f"{m}_std"] = _std(vals[m])
            if ref is None or key == ref_key or len(vals[m]) < 2:
                row[f"p_{m}"] = math.nan
            else:
                row[f"p_{m}"] = paired_t_test(vals[m], ref[m])[1]
        res.rows.append(row)
    for key, curves in res.curve_samples.items():
        steps = next(iter(curves.values())).shape[1]
        for t in range(steps):
            row = {"policy": key[0], "mar": key[1], "step": t, "lines": env_cfg.initial_lines + t}
            for m in CURVE_METRICS:
                col = curves[m][:, t]
                row[f"{m}_mean"] = float(col.mean())
                row[f"{m}_std"] = _std(col)
            res.curves.append(row)


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------
def _cell(v) -> str:
    if isinstance(v, float):
        if math.isnan(v):
            return ""
        return repr(min(v, PSNR_CAP) if math.isinf(v) and v > 0 else v)
    return str(v)


def append_table(path, rows: list) -> None:
    path = Path(path)
    new = not path.exists() or path.stat().st_size == 0
    with path.open("a", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if new:
            w.writerow(TABLE_FIELDS)
        for r in rows:
            w.writerow([_cell(r[k]) for k in TABLE_FIELDS])


def write_curves(path, rows: list) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVE_FIELDS)
        for r in rows:
            w.writerow([_cell(r[k]) for k in CURVE_FIELDS])


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf")


def svg_chart(rows: list, metric: str, title: str = "") -> str:
    """Minimal SVG line chart of ``<metric>_mean`` against acquired lines."""
    series: dict = {}
    for r in rows:
        series.setdefault(f"{r['policy']}{'+MAR' if r['mar'] else ''}", []).append((r["lines"], r[f"{metric}_mean"]))
    if not series:
        return '<svg xmlns="http://www.w3.org/2000/svg" width="10" height="10"/>\n'
    xs = [x for s in series.values() for x, _ in s]
    ys = [y for s in series.values() for _, y in s]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1e-9
    width, height, left, right, top, bottom = 640, 400, 70, 170, 30, 50

    def px(x):
        return left + (x - x0) / (x1 - x0) * (width - left - right)

    def py(y):
        return top + (1 - (y - y0) / (y1 - y0)) * (height - top - bottom)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{width / 2:.1f}" y="18" text-anchor="middle">{title or metric}</text>',
           f'<line x1="{left}" y1="{height - bottom}" x2="{width - right}" y2="{height - bottom}" stroke="black"/>',
           f'<line x1="{left}" y1="{top}" x2="{left}" y2="{height - bottom}" stroke="black"/>']
    for x in sorted(set(xs)):
        out.append(f'<text x="{px(x):.1f}" y="{height - bottom + 16}" text-anchor="middle">{x}</text>')
    for j in range(5):
        y = y0 + (y1 - y0) * j / 4
        out.append(f'<text x="{left - 6}" y="{py(y) + 4:.1f}" text-anchor="end">{y:.4g}</text>')
    out.append(f'<text x="{(left + width - right) / 2:.1f}" y="{height - 12}" text-anchor="middle">acquired lines</text>')
    for k, (label, pts) in enumerate(series.items()):
        color = _PALETTE[k % len(_PALETTE)]
        coords = " ".join(f"{px(x):.1f},{py(y):.1f}" for x, y in sorted(pts))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{coords}"/>')
        ly = top + 16 * k
        out.append(f'<line x1="{width - right + 10}" y1="{ly}" x2="{width - right + 30}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{width - right + 35}" y="{ly + 4}">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_outputs(out_dir, res: EvalResult) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"table": out / "table.csv", "curves": out / "curves.csv"}
    append_table(paths["table"], res.rows)
    write_curves(paths["curves"], res.curves)
    for m in CURVE_METRICS:
        p = out / f"curve_{m}.svg"
        p.write_text(svg_chart(res.curves, m, f"{m} vs acquired lines ({res.accel})"))
        paths[f"svg_{m}"] = p
    return paths
