"""Multi-seed, multi-epsilon driver built on the command-line pipeline.

Every run goes through `run_command`, so the files on disk are exactly what the CLI produces.
"""

from __future__ import annotations

import json
import shutil
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cli import run_command
from .evaluation import read_distances

PIPELINE = (
    ("gen-data",), ("fit-disc",), ("gen-rewards",), ("pretrain-fre",),
    ("train", "--algorithm", "smodice"), ("train",), ("eval",), ("export",),
)
# inputs shared by every epsilon of one seed; only the diversity run depends on epsilon
SHARED = ("offline.json", "expert.json", "discriminator.json", "rewards.json", "fre.json", "fre_report.json",
          "metrics_smodice.csv", "train_smodice_summary.json")


def write_config(base: Path, dest: Path, **trainer) -> Path:
    doc = json.loads(Path(base).read_text())
    doc["trainer"].update(trainer)
    dest.parent.mkdir(parents=True, exist_ok=True)
    dest.write_text(json.dumps(doc, indent=2, sort_keys=True))
    return dest


def run_stages(stages, config: Path, out: Path, seed: int) -> dict:
    """Run CLI stages in order; returns wall-clock seconds per stage."""
    seconds = {}
    for stage in stages:
        t0 = time.perf_counter()
        code = run_command([*stage, "--config", str(config), "--out-dir", str(out), "--seed", str(seed)])
        if code != 0:
            raise RuntimeError(f"stage {' '.join(stage)} exited with {code} (out dir {out})")
        seconds[" ".join(stage)] = time.perf_counter() - t0
    return seconds


def run_pipeline(config: Path, out: Path, seed: int) -> dict:
    return run_stages(PIPELINE, config, out, seed)


def branch_epsilon(base_out: Path, config: Path, out: Path, seed: int, evaluate: bool = False) -> dict:
    """Reuse data, discriminator, FRE and the SMODICE baseline from `base_out`; retrain only the skills."""
    out.mkdir(parents=True, exist_ok=True)
    for name in SHARED:
        shutil.copy(base_out / name, out / name)
    shutil.copytree(base_out / "bank_smodice", out / "bank_smodice", dirs_exist_ok=True)
    stages = [("train",), ("eval",), ("export",)] if evaluate else [("train",), ("export",)]
    return run_stages(stages, config, out, seed)


def mean_pairwise_distance(out: Path) -> float:
    D = read_distances(out / "distances.csv")
    iu = np.triu_indices(len(D), 1)
    return float(D[iu].mean()) if iu[0].size else 0.0


@dataclass
class SweepResult:
    root: Path
    seeds: list
    epsilons: list
    default_epsilon: float
    runs: dict = field(default_factory=dict)  # (seed, epsilon) -> out dir
    seconds: dict = field(default_factory=dict)  # (seed, epsilon) -> per-stage wall clock

    def distance_table(self) -> np.ndarray:
        """[seed, epsilon] mean pairwise SF distance of the final slots."""
        return np.array([[mean_pairwise_distance(self.runs[s, e]) for e in self.epsilons] for s in self.seeds])


def epsilon_sweep(config: Path, root: Path, seeds, epsilons, default_epsilon: float = 1.0) -> SweepResult:
    """Full pipeline at `default_epsilon` per seed, then skills-only retrains for the other epsilons."""
    root = Path(root)
    res = SweepResult(root, list(seeds), list(epsilons), default_epsilon)
    for seed in res.seeds:
        base = root / f"seed{seed}" / f"eps{default_epsilon:g}"
        cfg = write_config(config, root / f"seed{seed}" / f"config_eps{default_epsilon:g}.json", epsilon=default_epsilon)
        res.seconds[seed, default_epsilon] = run_pipeline(cfg, base, seed)
        res.runs[seed, default_epsilon] = base
        for eps in res.epsilons:
            if eps == default_epsilon:
                continue
            cfg = write_config(config, root / f"seed{seed}" / f"config_eps{eps:g}.json", epsilon=eps)
            out = root / f"seed{seed}" / f"eps{eps:g}"
            res.seconds[seed, eps] = branch_epsilon(base, cfg, out, seed)
            res.runs[seed, eps] = out
    return res
