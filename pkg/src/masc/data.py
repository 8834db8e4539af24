"""Deterministic dataset generation with subject-disjoint splits."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .io import Dataset
from .metalsim import ImplantConfig, make_paired_sample
from .phantom import PhantomConfig, SequenceParams

SPLITS = ("train", "val", "test")


@dataclass
class DataConfig:
    n_train: int = 160
    n_val: int = 20
    n_test: int = 20
    split_scale: float = 1.0        # multiplies all three subject counts
    variants: int = 1               # perturbed slices per subject
    phantom: PhantomConfig = field(default_factory=PhantomConfig)
    implant: ImplantConfig = field(default_factory=ImplantConfig)
    sequence: SequenceParams = field(default_factory=SequenceParams)

    def subject_counts(self) -> dict:
        counts = {s: int(round(n * self.split_scale)) for s, n in
                  zip(SPLITS, (self.n_train, self.n_val, self.n_test))}
        if min(counts.values()) < 1 or self.variants < 1:
            raise ValueError(f"every split needs at least one subject and variant, got {counts}")
        return counts

    def subject_ranges(self) -> dict:
        """Consecutive, disjoint subject-index ranges per split."""
        counts = self.subject_counts()
        out, start = {}, 0
        for s in SPLITS:
            out[s] = range(start, start + counts[s])
            start += counts[s]
        return out


def thread_count() -> int:
    raw = os.environ.get("MASC_THREADS", "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ValueError(f"MASC_THREADS must be an integer, got {raw!r}") from exc
    return max(1, n)


def generate_split(seed: int, subjects: range, cfg: DataConfig, threads: int | None = None):
    """Returns (Dataset, manifest rows). Each sample draws from its own stream
    keyed by (seed, subject, variant), so results do not depend on threading."""
    jobs = [(s, v) for s in subjects for v in range(cfg.variants)]

    def one(job):
        s, v = job
        return make_paired_sample([seed, s], cfg.phantom, cfg.implant, cfg.sequence, subject=s, variant=v)

    threads = threads or thread_count()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            samples = list(pool.map(one, jobs))
    else:
        samples = [one(j) for j in jobs]
    manifest = [
        {"sample_index": i, "subject": s.subject, "variant": v,
         "center_row": s.placement[0], "center_col": s.placement[1], "rotation_deg": s.placement[2]}
        for i, (s, (_, v)) in enumerate(zip(samples, jobs))
    ]
    return Dataset.from_samples(samples), manifest


def generate_all(seed: int, cfg: DataConfig, threads: int | None = None) -> dict:
    return {name: generate_split(seed, rng, cfg, threads) for name, rng in cfg.subject_ranges().items()}
