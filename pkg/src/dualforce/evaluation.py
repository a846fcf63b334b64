"""Rollout evaluation, successor-feature distances, acceptance filtering and metric export."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .diversity import pairwise_distances
from .mdp import TabularMdp, TabularPolicy, ValidationError, rollout_batch
from .skills import SkillBank, recall_skill

DEFAULT_EPISODES = 30
DEFAULT_THRESHOLD = 0.5


@dataclass
class RolloutResult:
    mean_return: float
    mean_sf: np.ndarray
    returns: np.ndarray

    @property
    def stderr(self) -> float:
        n = self.returns.size
        return float(self.returns.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0


def _table(policy) -> np.ndarray:
    if isinstance(policy, TabularPolicy):
        return policy.probs
    if hasattr(policy, "table"):
        return policy.table
    return np.asarray(policy, dtype=np.float64)


def rollout_eval(mdp: TabularMdp, policy, hidden_reward, episodes: int = DEFAULT_EPISODES,
                 horizon: int = 100, gamma: float | None = None, seed=0, features=None) -> RolloutResult:
    """Monte Carlo returns and successor features, both discount-normalized per episode.

    An episode's return is sum_t gamma^t r(s_t) / sum_t gamma^t over its horizon, which
    tends to the (1 - gamma)-normalized return as the horizon grows.
    """
    if episodes < 1:
        raise ValidationError("episodes must be >= 1")
    gamma = mdp.gamma if gamma is None else gamma
    rng = np.random.default_rng(seed)
    traj = rollout_batch(mdp, _table(policy), episodes, horizon, rng)
    disc = gamma ** np.arange(horizon)
    disc /= disc.sum()
    r = np.asarray(hidden_reward, dtype=np.float64)
    returns = (r[traj.states] * disc).sum(axis=1)
    if features is None:
        sf = np.zeros(0)
    else:
        table = features.table if hasattr(features, "table") else np.asarray(features)
        sf = np.einsum("et,etd->d", np.broadcast_to(disc, traj.states.shape), table[traj.states]) / episodes
    return RolloutResult(float(returns.mean()), sf, returns)


def sf_distance_matrix(psis) -> np.ndarray:
    psis = [np.atleast_1d(np.asarray(p, dtype=np.float64)) for p in psis]
    if not psis:
        raise ValidationError("need at least one skill")
    if len({p.shape for p in psis}) != 1:
        raise ValidationError("successor features must share one dimension")
    return pairwise_distances(np.stack(psis))


def accept_skills(evaluated, expert_return: float, threshold: float = DEFAULT_THRESHOLD) -> list:
    """Keep entries whose mean_return >= threshold * expert_return."""
    if not expert_return > 0:
        raise ValidationError("expert_return must be positive")
    return [e for e in evaluated if e["mean_return"] >= threshold * expert_return]


def evaluate_bank(bank: SkillBank, mdp: TabularMdp, hidden_reward, horizon: int, episodes: int = DEFAULT_EPISODES,
                  seed: int = 0, every: int = 50, start: int = 0, features=None) -> list:
    """Recall every `every`-th stored embedding from iteration `start` on and roll it out.

    Seeds are keyed by (seed, skill, iteration) so any entry can be re-evaluated in isolation.
    """
    out = []
    for i, slot in enumerate(bank.slots):
        for h in slot.history:
            if h.iteration < start or (h.iteration - start) % every:
                continue
            pi = recall_skill(bank, i, h.z)
            res = rollout_eval(mdp, pi, hidden_reward, episodes, horizon, seed=[seed, i, h.iteration], features=features)
            out.append({
                "skill": i,
                "iteration": int(h.iteration),
                "embedding": [float(x) for x in h.z],
                "mean_return": res.mean_return,
                "stderr": res.stderr,
                "phi": float(h.metrics["phi"]),
                "sf": [float(x) for x in res.mean_sf],
            })
    return out


# ----------------------------------------------------------------------------- export


def _num(x: float) -> str:
    return repr(float(x))


def pca_2d(points) -> np.ndarray:
    """Projection onto the top two principal axes; signs fixed so each axis' largest loading is positive."""
    X = np.atleast_2d(np.asarray(points, dtype=np.float64))
    Xc = X - X.mean(axis=0)
    _, _, Vt = np.linalg.svd(Xc, full_matrices=False)
    axes = np.zeros((2, X.shape[1]))
    k = min(2, Vt.shape[0])
    axes[:k] = Vt[:k]
    for a in axes:
        j = np.argmax(np.abs(a))
        if a[j] < 0:
            a *= -1.0
    return Xc @ axes.T


def projection_svg(points, labels, size: int = 320, margin: int = 30) -> str:
    P = pca_2d(points)
    lo, hi = P.min(axis=0), P.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    XY = margin + (P - lo) / span * (size - 2 * margin)
    colors = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">',
        f'<rect x="0" y="0" width="{size}" height="{size}" fill="white"/>',
        f'<text x="{margin}" y="18" font-size="12" font-family="sans-serif">skill successor features, first two principal components</text>',
    ]
    for (x, y), lab in zip(XY, labels):
        c = colors[int(lab) % len(colors)]
        lines.append(f'<circle cx="{x:.3f}" cy="{size - y:.3f}" r="4" fill="{c}"><title>skill {lab}</title></circle>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def export_metrics(log, bank: SkillBank, path, psis, accepted=None) -> dict:
    """Write metrics.csv, distances.csv, skills_projection.svg and accepted.json under `path`."""
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ValidationError(f"cannot write to {path}: {e}") from e
    files = {}
    files["metrics.csv"] = log.to_csv()
    D = sf_distance_matrix(psis)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["skill"] + [str(j) for j in range(len(D))])
    for i, row in enumerate(D):
        w.writerow([str(i)] + [_num(x) for x in row])
    files["distances.csv"] = buf.getvalue()
    files["skills_projection.svg"] = projection_svg(np.asarray(psis), list(range(len(psis))))
    keep = ("skill", "iteration", "embedding", "mean_return")
    acc = [{k: e[k] for k in keep} for e in (accepted or [])]
    files["accepted.json"] = json.dumps(acc, sort_keys=True, indent=1) + "\n"
    for name, text in files.items():
        (path / name).write_text(text)
    return {name: path / name for name in files}


def read_distances(path) -> np.ndarray:
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return np.array([[float(x) for x in r[1:]] for r in rows[1:]])
