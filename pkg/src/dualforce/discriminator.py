"""State discriminator c(s) separating expert states from offline states."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mdp import ExpertDataset, FeatureMap, OfflineDataset, ValidationError


@dataclass
class DiscriminatorConfig:
    mode: str = "exact-count"  # or "learned-logistic"
    clip: float = 1e-4
    gp_weight: float = 10.0
    input_scale: float = 10.0
    learning_rate: float = 0.05
    epochs: int = 3000


@dataclass
class Discriminator:
    mode: str
    c: np.ndarray  # per-state output, already clipped
    clip: float = 1e-4
    params: dict = field(default_factory=dict)
    history: list = field(default_factory=list)

    def log_odds_table(self) -> np.ndarray:
        return np.log(self.c) - np.log1p(-self.c)

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "clip": self.clip,
            "c": self.c.tolist(),
            "params": {k: np.asarray(v).tolist() for k, v in self.params.items()},
        }

    @classmethod
    def from_json(cls, doc: dict) -> "Discriminator":
        params = {k: np.asarray(v) for k, v in doc["params"].items()}
        return cls(doc["mode"], np.asarray(doc["c"], dtype=np.float64), doc["clip"], params)


def log_odds(disc: Discriminator, s) -> np.ndarray | float:
    """log(c / (1 - c)), bounded by +-log((1 - clip) / clip)."""
    c = disc.c[s]
    out = np.log(c) - np.log1p(-c)
    return float(out) if np.ndim(out) == 0 else out


def _state_frequencies(expert: ExpertDataset, offline: OfflineDataset, num_states: int):
    d_e = np.bincount(expert.states, minlength=num_states) / len(expert)
    d_o = np.bincount(offline.states, minlength=num_states) / len(offline)
    return d_e, d_o


def _logistic_objective(theta, b, X, d_e, d_o):
    f = X @ theta + b
    # log sigmoid(f) and log(1 - sigmoid(f)) in a stable form
    return float(d_e @ -np.logaddexp(0.0, -f) + d_o @ -np.logaddexp(0.0, f))


def fit_discriminator(
    expert: ExpertDataset,
    offline: OfflineDataset,
    config: DiscriminatorConfig | None = None,
    seed: int = 0,
    features: FeatureMap | None = None,
    num_states: int | None = None,
) -> Discriminator:
    config = config or DiscriminatorConfig()
    if len(expert) == 0 or len(offline) == 0:
        raise ValidationError("empty dataset")
    if num_states is None:
        num_states = offline.meta.get("num_states") or int(max(offline.states.max(), offline.next_states.max(), expert.states.max())) + 1
    d_e, d_o = _state_frequencies(expert, offline, num_states)
    lo, hi = config.clip, 1.0 - config.clip

    if config.mode == "exact-count":
        total = d_e + d_o
        with np.errstate(invalid="ignore", divide="ignore"):
            c = np.where(total > 0, d_e / np.where(total > 0, total, 1.0), lo)
        return Discriminator("exact-count", np.clip(c, lo, hi), config.clip)

    if config.mode != "learned-logistic":
        raise ValidationError(f"unknown discriminator mode {config.mode!r}")

    # linear logistic scorer f(x) = theta.x + b on scaled features, full-batch gradient ascent
    features = features or FeatureMap.one_hot(num_states)
    X = config.input_scale * features.table
    rng = np.random.default_rng(seed)
    theta = rng.normal(0.0, 0.01, X.shape[1])
    b = 0.0

    def penalty(theta):
        # gradient penalty (||grad_x f(x_hat)|| - 1)^2 at expert/offline interpolants x_hat;
        # grad_x f = theta everywhere for a linear scorer, so no sampling is needed
        return (np.linalg.norm(theta) - 1.0) ** 2

    history = []
    for _ in range(config.epochs):
        f = X @ theta + b
        sig = 1.0 / (1.0 + np.exp(-f))
        g_f = d_e * (1.0 - sig) - d_o * sig
        norm = np.linalg.norm(theta)
        g_theta = X.T @ g_f - config.gp_weight * 2.0 * (norm - 1.0) * theta / max(norm, 1e-12)
        g_b = g_f.sum()
        theta = theta + config.learning_rate * g_theta
        b = b + config.learning_rate * g_b
        history.append(_logistic_objective(theta, b, X, d_e, d_o) - config.gp_weight * penalty(theta))

    c = 1.0 / (1.0 + np.exp(-(X @ theta + b)))
    return Discriminator(
        "learned-logistic",
        np.clip(c, lo, hi),
        config.clip,
        {"theta": theta, "bias": np.asarray(b), "input_scale": np.asarray(config.input_scale)},
        history,
    )
