"""Offline DICE estimators: dual value objective, TD errors, softmax weights and the KL-constraint estimate."""

from __future__ import annotations

import numpy as np

from .mdp import OfflineDataset, TabularMdp, ValidationError
from .nets import Adam, Mlp

TD_CLIP = 50.0


class TabularValue:
    """Value vector over states; ignores the latent z. Plain gradient descent."""

    kind = "tabular-vector"

    def __init__(self, v: np.ndarray):
        self.v = np.asarray(v, dtype=np.float64).copy()

    @classmethod
    def zeros(cls, num_states: int) -> "TabularValue":
        return cls(np.zeros(num_states))

    def values(self, z=None) -> np.ndarray:
        return self.v

    def apply_grad(self, g_values: np.ndarray, z, lr: float) -> None:
        self.v -= lr * g_values

    def copy(self) -> "TabularValue":
        return TabularValue(self.v)

    def parameters(self):
        return [self.v]

    def to_json(self) -> dict:
        return {"kind": self.kind, "v": self.v.tolist()}


class NetValue:
    """V(s, z) = MLP([x_s, z]) evaluated on every state at once; Adam updates."""

    kind = "conditioned-approximator"

    def __init__(self, inputs: np.ndarray, latent_dim: int, hidden: int, rng: np.random.Generator):
        self.inputs = np.asarray(inputs, dtype=np.float64)
        self.latent_dim = latent_dim
        self.net = Mlp([self.inputs.shape[1] + latent_dim, hidden, hidden, 1], rng, out_scale=0.1)
        self.opt = Adam(self.net.params)

    def _x(self, z) -> np.ndarray:
        z = np.zeros(self.latent_dim) if z is None else np.asarray(z, dtype=np.float64)
        return np.concatenate([self.inputs, np.broadcast_to(z, (self.inputs.shape[0], self.latent_dim))], axis=1)

    def values(self, z=None) -> np.ndarray:
        return self.net(self._x(z))[:, 0]

    def apply_grad(self, g_values: np.ndarray, z, lr: float) -> None:
        _, acts = self.net.forward(self._x(z))
        grads, _ = self.net.backward(acts, g_values[:, None])
        self.opt.step(self.net.params, grads, lr)

    def copy(self) -> "NetValue":
        new = object.__new__(NetValue)
        new.inputs, new.latent_dim = self.inputs, self.latent_dim
        new.net, new.opt = self.net.copy(), self.opt.copy()
        return new

    def parameters(self):
        return self.net.params

    def to_json(self) -> dict:
        return {"kind": self.kind, "latent_dim": self.latent_dim, "net": self.net.to_json(), "adam": self.opt.to_json()}


def value_from_json(doc: dict, inputs: np.ndarray | None = None):
    if doc["kind"] == TabularValue.kind:
        return TabularValue(np.asarray(doc["v"]))
    new = object.__new__(NetValue)
    new.inputs, new.latent_dim = inputs, doc["latent_dim"]
    new.net, new.opt = Mlp.from_json(doc["net"]), Adam.from_json(doc["adam"])
    return new


# ----------------------------------------------------------------------------- estimators


def clip_td(delta: np.ndarray) -> tuple[np.ndarray, int]:
    """Clip TD errors into [-TD_CLIP, TD_CLIP]; returns the clipped vector and the clip count."""
    n = int(np.count_nonzero(np.abs(delta) > TD_CLIP))
    return (np.clip(delta, -TD_CLIP, TD_CLIP) if n else delta), n


def _next_values(v, dataset: OfflineDataset, mode: str, mdp: TabularMdp | None, idx=None):
    s = dataset.states if idx is None else dataset.states[idx]
    if mode == "sampled":
        nxt = dataset.next_states if idx is None else dataset.next_states[idx]
        return v[nxt]
    if mode == "exact":
        if mdp is None:
            raise ValidationError("exact TD mode needs the MDP")
        a = dataset.actions if idx is None else dataset.actions[idx]
        return mdp.transitions[s, a] @ v
    raise ValidationError(f"unknown TD mode {mode!r}")


def td_errors(V, rewards, dataset: OfflineDataset, gamma: float, z=None, mode: str = "sampled", mdp=None) -> np.ndarray:
    """delta_j = R_j + gamma * (T V)(s_j, a_j) - V(s_j) for every record j."""
    rewards = np.asarray(rewards, dtype=np.float64)
    if rewards.shape != (len(dataset),):
        raise ValidationError("rewards must be aligned with the dataset records")
    v = V.values(z)
    return rewards + gamma * _next_values(v, dataset, mode, mdp) - v[dataset.states]


def log_mean_exp(x: np.ndarray) -> float:
    m = x.max()
    return float(m + np.log(np.mean(np.exp(x - m))))


def dual_objective(V, rewards, dataset: OfflineDataset, gamma: float, z=None, mode: str = "sampled", mdp=None) -> float:
    """(1 - gamma) * mean_{initial} V + log mean_{records} exp(delta)."""
    init = dataset.initial_states
    if init.size == 0:
        raise ValidationError("dataset has no initial states")
    delta, _ = clip_td(td_errors(V, rewards, dataset, gamma, z, mode, mdp))
    return float((1.0 - gamma) * V.values(z)[init].mean() + log_mean_exp(delta))


def softmax_weights(delta: np.ndarray) -> np.ndarray:
    """exp(delta - max delta) normalized. No clipping here: callers clip (and count) beforehand."""
    delta = np.asarray(delta, dtype=np.float64)
    if delta.size == 0:
        raise ValidationError("empty TD vector")
    e = np.exp(delta - delta.max())
    return e / e.sum()


def importance_estimate(w: np.ndarray, f_values: np.ndarray) -> float:
    """E_{d_i}[f] estimated as sum_j w_j f_j."""
    w, f = np.asarray(w), np.asarray(f_values)
    if w.shape[0] != f.shape[0]:
        raise ValidationError("weights and values must be aligned")
    return float(w @ f) if f.ndim == 1 else w @ f


def kl_constraint_estimate(w: np.ndarray, log_odds_values: np.ndarray, dataset_size: int | None = None) -> float:
    """phi = log|D| + sum_j w_j (log w_j - log_odds_j), with 0 log 0 := 0."""
    w = np.asarray(w, dtype=np.float64)
    lo = np.asarray(log_odds_values, dtype=np.float64)
    if w.shape != lo.shape:
        raise ValidationError("weights and log-odds must be aligned")
    n = w.shape[0] if dataset_size is None else dataset_size
    pos = w > 0
    return float(np.log(n) + np.sum(w[pos] * np.log(w[pos])) - w @ lo)


def dual_gradient(V, rewards, dataset, gamma, z=None, batch=None, mode="sampled", mdp=None):
    """Gradient of the (batch) dual objective w.r.t. the per-state values, plus the clip count.

    The initial-state term always uses every initial record of the dataset.
    """
    v = V.values(z)
    S = v.shape[0]
    idx = None if (batch is None or mode == "exact") else np.asarray(batch)
    s = dataset.states if idx is None else dataset.states[idx]
    r = np.asarray(rewards) if idx is None else np.asarray(rewards)[idx]
    delta, n_clip = clip_td(r + gamma * _next_values(v, dataset, mode, mdp, idx) - v[s])
    w = np.exp(delta - delta.max())
    w /= w.sum()
    init = dataset.initial_states
    g = (1.0 - gamma) * np.bincount(init, minlength=S) / init.size
    g -= np.bincount(s, weights=w, minlength=S)
    if mode == "sampled":
        nxt = dataset.next_states if idx is None else dataset.next_states[idx]
        g += gamma * np.bincount(nxt, weights=w, minlength=S)
    else:
        a = dataset.actions if idx is None else dataset.actions[idx]
        g += gamma * (w @ mdp.transitions[s, a])
    return g, n_clip


def value_gradient_step(V, rewards, batch, gamma, z=None, learning_rate=3e-4, mode="sampled", dataset=None, mdp=None):
    """One descent step on the dual objective; returns an updated copy of V.

    In exact mode the full dataset is used regardless of `batch`.
    """
    if dataset is None:
        raise ValidationError("value_gradient_step needs the dataset")
    if learning_rate < 0:
        raise ValidationError("learning_rate must be >= 0")
    new = V.copy()
    g, _ = dual_gradient(new, rewards, dataset, gamma, z, batch, mode, mdp)
    new.apply_grad(g, z, learning_rate)
    return new
