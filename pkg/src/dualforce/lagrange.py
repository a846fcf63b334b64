"""Bounded Lagrange multipliers sigma(mu) and the non-stationary reward they weight."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MU_CLIP = 10.0


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


@dataclass
class Multipliers:
    mu: np.ndarray
    mu_clip: float = MU_CLIP

    def __post_init__(self):
        self.mu = np.clip(np.asarray(self.mu, dtype=np.float64), -self.mu_clip, self.mu_clip)
        if not np.all(np.isfinite(self.mu)):
            raise ValueError("multipliers must be finite")

    @classmethod
    def zeros(cls, n: int, mu_clip: float = MU_CLIP) -> "Multipliers":
        return cls(np.zeros(n), mu_clip)

    @property
    def sigma(self) -> np.ndarray:
        return sigmoid(self.mu)


def combined_reward(beta, log_odds, mu):
    """(1 - sigma(mu)) beta + sigma(mu) log_odds."""
    s = sigmoid(mu)
    return (1.0 - s) * np.asarray(beta) + s * np.asarray(log_odds)


def multiplier_step(mult: Multipliers, phis, epsilon: float, learning_rate: float) -> Multipliers:
    """Gradient descent on sum_i sigma(mu_i)(eps - phi_i): mu rises while phi_i > eps."""
    s = mult.sigma
    grad = s * (1.0 - s) * (epsilon - np.asarray(phis, dtype=np.float64))
    return Multipliers(mult.mu - learning_rate * grad, mult.mu_clip)
