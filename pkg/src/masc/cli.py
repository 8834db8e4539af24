"""``masc`` command-line entry point."""
from __future__ import annotations

import argparse
import csv
import sys
import warnings
from pathlib import Path

from . import checkpoints as ck
from .config import ConfigError, RunConfig
from .data import generate_all
from .evaluation import (LEARNED, POLICY_NAMES, EvalPolicy, baseline_policy, evaluate_policies, ppo_policy,
                         q_policy, write_outputs)
from .io import FormatError, read_dataset, write_dataset
from .policies import BASELINES
from .trainer import dqn_train, log_csv_text, masc_train, pretrain_mar

SNAPSHOT = "config.txt"
MANIFEST_FIELDS = ("split", "sample_index", "subject", "variant", "center_row", "center_col", "rotation_deg")


class CliError(Exception):
    pass


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="flat key = value config file")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--accel", choices=("10x", "5x"), help="acceleration preset")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory")
    common.add_argument("--data", type=Path, help="dataset directory (overrides data_dir)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key")

    p = argparse.ArgumentParser(prog="masc", description="Metal-aware active k-space acquisition.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("gen-data", parents=[common], help="simulate paired clean/metal datasets")
    sub.add_parser("pretrain-mar", parents=[common], help="Stage 1: pretrain the MAR network")
    s = sub.add_parser("train-masc", parents=[common], help="Stage 2: joint policy/MAR training")
    s.add_argument("--mar-checkpoint", type=Path, help="pretrained MAR checkpoint (required)")
    sub.add_parser("train-ppo-raw", parents=[common], help="PPO on raw reconstructions, no MAR")
    s = sub.add_parser("train-dqn", parents=[common], help="DQN baseline (--double for DDQN)")
    s.add_argument("--double", action="store_true", help="double-DQN targets")
    s = sub.add_parser("evaluate", parents=[common], help="evaluate policies on the test split")
    s.add_argument("--mar-checkpoint", type=Path, help="MAR used for the with-MAR rows of non-MASC policies")
    s.add_argument("--policies", default=",".join(POLICY_NAMES), help="comma-separated policy names")
    s.add_argument("--checkpoint", action="append", default=[], metavar="NAME=PATH",
                   help="learned policy checkpoint or run directory, e.g. masc=runs/masc")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--with-mar", dest="with_mar", action="store_true", default=True)
    g.add_argument("--no-mar", dest="with_mar", action="store_false")
    return p


def _config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    for item in args.set:
        key, eq, value = item.partition("=")
        if not eq:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        cfg.set(key.strip(), value.strip())
    if args.seed is not None:
        cfg.set("seed", args.seed)
    if args.accel is not None:
        cfg.set("accel", args.accel)
    if args.data is not None:
        cfg.set("data_dir", str(args.data))
    cfg.lines()
    return cfg


def _out_dir(args, cfg: RunConfig) -> Path:
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    cfg.write(out / SNAPSHOT)
    return out


def _split(cfg: RunConfig, name: str):
    path = Path(cfg["data_dir"]) / f"{name}.masc"
    if not path.exists():
        raise CliError(f"dataset file {path} not found (run gen-data first)")
    return read_dataset(path)


def cmd_gen_data(args, cfg: RunConfig) -> None:
    out = _out_dir(args, cfg)
    splits = generate_all(cfg["seed"], cfg.data())
    rows = []
    for name, (ds, manifest) in splits.items():
        write_dataset(out / f"{name}.masc", ds)
        rows.extend({"split": name, **r} for r in manifest)
    with (out / "manifest.csv").open("w", newline="") as fh:
        w = csv.DictWriter(fh, MANIFEST_FIELDS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    print(", ".join(f"{n}: {len(ds)}" for n, (ds, _) in splits.items()) + f" samples written to {out}")


def cmd_pretrain_mar(args, cfg: RunConfig) -> None:
    train, val = _split(cfg, "train"), _split(cfg, "val")
    out = _out_dir(args, cfg)
    res = pretrain_mar(train, val, cfg.pretrain(), cfg.mar(), cfg["seed"], cfg.quality(),
                       on_epoch=lambda r: print(f"epoch {r[0]}: train {r[1]:.5f} val {r[2]:.5f} val-L1 {r[3]:.5f}"))
    with (out / "pretrain_log.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("epoch", "train_loss", "val_loss", "val_l1"))
        w.writerows([r[0], *(repr(float(v)) for v in r[1:])] for r in res.history)
    ck.save_mar(out / "mar.ck", res.net)
    print(f"best epoch {res.best_epoch}, val loss {res.best_val_loss:.5f}; wrote {out / 'mar.ck'}")


def _print_rollout(row) -> None:
    print(f"rollout {row['rollout']}: return {row['mean_episode_return']:.4f} "
          f"final Q {row['mean_final_quality']:.4f} entropy {row['entropy']:.3f}")


def cmd_train_masc(args, cfg: RunConfig) -> None:
    if args.mar_checkpoint is None:
        raise CliError("train-masc needs --mar-checkpoint (pretrain the MAR network with pretrain-mar first)")
    mar = ck.load_mar(args.mar_checkpoint)
    train = _split(cfg, "train")
    out = _out_dir(args, cfg)
    res = masc_train(train, cfg.masc("mar"), mar, cfg["seed"], out / "train_log.csv", _print_rollout)
    ck.save_policy(out / "policy.ck", res.policy, cfg.encoder())
    ck.save_mar(out / "mar.ck", res.mar)


def cmd_train_ppo_raw(args, cfg: RunConfig) -> None:
    train = _split(cfg, "train")
    out = _out_dir(args, cfg)
    res = masc_train(train, cfg.masc("raw"), None, cfg["seed"], out / "train_log.csv", _print_rollout)
    ck.save_policy(out / "policy.ck", res.policy, cfg.encoder())


def cmd_train_dqn(args, cfg: RunConfig) -> None:
    train = _split(cfg, "train")
    out = _out_dir(args, cfg)
    res = dqn_train(train, cfg.dqn(args.double), cfg["seed"],
                    on_log=lambda r: print(f"step {r['env_steps']}: return {r['mean_episode_return']:.4f} "
                                           f"loss {r['loss']:.5f} eps {r['epsilon']:.3f}"))
    fields = ("env_steps", "episodes", "mean_episode_return", "loss", "epsilon")
    with (out / "train_log.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        w.writerows([r["env_steps"], r["episodes"], *(repr(float(r[k])) for k in fields[2:])] for r in res.log_rows)
    ck.save_qnet(out / "qnet.ck", res.agent, cfg.encoder())


def _resolve(path: Path, names: tuple) -> Path | None:
    if path.is_dir():
        for n in names:
            if (path / n).exists():
                return path / n
        return None
    return path if path.exists() else None


def _learned_policy(name: str, path: Path, mar) -> EvalPolicy | None:
    if name in ("dqn", "ss-ddqn"):
        f = _resolve(path, ("qnet.ck",))
        return None if f is None else q_policy(name, ck.load_qnet(f), mar)
    f = _resolve(path, ("policy.ck",))
    if f is None:
        return None
    net = ck.load_policy(f)
    if name == "masc":
        own = f.parent / "mar.ck"
        if not own.exists():
            warnings.warn(f"masc: {own} (the jointly trained MAR) is missing")
            return None
        own_mar = ck.load_mar(own)
        return ppo_policy(name, net, own_mar, own_mar)
    return ppo_policy(name, net, None, mar)


def cmd_evaluate(args, cfg: RunConfig) -> None:
    names = [n.strip() for n in args.policies.split(",") if n.strip()]
    unknown = [n for n in names if n not in POLICY_NAMES]
    if unknown:
        raise CliError(f"unknown policies {unknown}; choose from {list(POLICY_NAMES)}")
    paths = {}
    for item in args.checkpoint:
        key, eq, value = item.partition("=")
        if not eq or key not in LEARNED:
            raise CliError(f"--checkpoint expects NAME=PATH with NAME in {list(LEARNED)}, got {item!r}")
        paths[key] = Path(value)
    test = _split(cfg, "test")
    env_cfg = cfg.env("raw")
    mar = None
    if args.with_mar and args.mar_checkpoint is not None:
        if args.mar_checkpoint.exists():
            mar = ck.load_mar(args.mar_checkpoint)
        else:
            warnings.warn(f"MAR checkpoint {args.mar_checkpoint} not found; with-MAR rows skipped")
    policies = []
    for name in names:
        if name in BASELINES:
            policies.append(baseline_policy(name, env_cfg.total_lines, mar))
            continue
        if name not in paths:
            warnings.warn(f"{name}: no --checkpoint given, skipped")
            continue
        pol = _learned_policy(name, paths[name], mar)
        if pol is None:
            warnings.warn(f"{name}: checkpoint {paths[name]} not found, skipped")
            continue
        policies.append(pol)
    if not policies:
        raise CliError("nothing to evaluate")
    flags = (False, True) if args.with_mar else (False,)
    res = evaluate_policies(test, policies, env_cfg, cfg["accel"], flags, cfg["seed"], cfg["reference_policy"])
    if not res.rows:
        raise CliError("nothing to evaluate")
    out = _out_dir(args, cfg)
    write_outputs(out, res)
    for r in res.rows:
        print(f"{r['policy']}{'+MAR' if r['mar'] else ''}: SSIM {r['ssim_mean']:.4f} ± {r['ssim_std']:.4f} "
              f"PSNR {r['psnr_mean']:.2f}")


COMMANDS = {
    "gen-data": cmd_gen_data,
    "pretrain-mar": cmd_pretrain_mar,
    "train-masc": cmd_train_masc,
    "train-ppo-raw": cmd_train_ppo_raw,
    "train-dqn": cmd_train_dqn,
    "evaluate": cmd_evaluate,
}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    with warnings.catch_warnings():
        warnings.simplefilter("always")
        warnings.showwarning = lambda msg, *a, **k: print(f"warning: {msg}", file=sys.stderr)
        try:
            cfg = _config(args)
            COMMANDS[args.command](args, cfg)
        except (CliError, ConfigError, FormatError, ValueError, OSError) as exc:
            print(f"masc {args.command}: error: {exc}", file=sys.stderr)
            return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
