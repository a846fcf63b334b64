"""Per-skill state: value and policy models, simplex weights, multipliers and embedding history."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dice import NetValue, TabularValue, value_from_json
from .lagrange import Multipliers
from .mdp import ValidationError
from .nets import Adam, Mlp, param_hash


def init_weights(dataset_size: int, seed) -> np.ndarray:
    """Uniform sample from the probability simplex (normalized exponential draws)."""
    if dataset_size < 1:
        raise ValidationError("dataset_size must be >= 1")
    e = np.random.default_rng(seed).exponential(size=dataset_size)
    return e / e.sum()


def polyak_update(w_old, w_new, alpha: float) -> np.ndarray:
    w_old = np.asarray(w_old, dtype=np.float64)
    w_new = np.asarray(w_new, dtype=np.float64)
    if w_old.shape != w_new.shape:
        raise ValidationError(f"length mismatch: {w_old.shape} vs {w_new.shape}")
    if not 0.0 <= alpha <= 1.0:
        raise ValidationError("alpha must lie in [0, 1]")
    return (1.0 - alpha) * w_old + alpha * w_new


def _softmax_rows(logits):
    e = np.exp(logits - logits.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


class TabularPolicyModel:
    """Logits table per (s, a); z is ignored. Adam on the logits."""

    kind = "tabular-logits"

    def __init__(self, logits):
        self.logits = np.asarray(logits, dtype=np.float64).copy()
        self.opt = Adam([self.logits])

    @classmethod
    def uniform(cls, num_states: int, num_actions: int):
        return cls(np.zeros((num_states, num_actions)))

    def probs(self, z=None) -> np.ndarray:
        return _softmax_rows(self.logits)

    def apply_grad(self, g_logits, z, lr: float) -> None:
        self.opt.step([self.logits], [g_logits], lr)

    def copy(self):
        new = object.__new__(TabularPolicyModel)
        new.logits, new.opt = self.logits.copy(), self.opt.copy()
        return new

    def parameters(self):
        return [self.logits]

    def to_json(self) -> dict:
        return {"kind": self.kind, "logits": self.logits.tolist(), "adam": self.opt.to_json()}


class NetPolicyModel:
    """Action logits = MLP([x_s, z]) for every state at once."""

    kind = "conditioned-approximator"

    def __init__(self, inputs, latent_dim: int, num_actions: int, hidden: int, rng):
        self.inputs = np.asarray(inputs, dtype=np.float64)
        self.latent_dim = latent_dim
        self.net = Mlp([self.inputs.shape[1] + latent_dim, hidden, hidden, num_actions], rng, out_scale=0.1)
        self.opt = Adam(self.net.params)

    def _x(self, z):
        z = np.zeros(self.latent_dim) if z is None else np.asarray(z, dtype=np.float64)
        if z.shape != (self.latent_dim,):
            raise ValidationError(f"z must have dimension {self.latent_dim}")
        return np.concatenate([self.inputs, np.broadcast_to(z, (self.inputs.shape[0], self.latent_dim))], axis=1)

    def probs(self, z=None) -> np.ndarray:
        return _softmax_rows(self.net(self._x(z)))

    def apply_grad(self, g_logits, z, lr: float) -> None:
        _, acts = self.net.forward(self._x(z))
        grads, _ = self.net.backward(acts, g_logits)
        self.opt.step(self.net.params, grads, lr)

    def copy(self):
        new = object.__new__(NetPolicyModel)
        new.inputs, new.latent_dim = self.inputs, self.latent_dim
        new.net, new.opt = self.net.copy(), self.opt.copy()
        return new

    def parameters(self):
        return self.net.params

    def to_json(self) -> dict:
        return {"kind": self.kind, "latent_dim": self.latent_dim, "net": self.net.to_json(), "adam": self.opt.to_json()}


def policy_from_json(doc: dict, inputs=None):
    if doc["kind"] == TabularPolicyModel.kind:
        new = object.__new__(TabularPolicyModel)
        new.logits = np.asarray(doc["logits"], dtype=np.float64)
        new.opt = Adam.from_json(doc["adam"])
        return new
    new = object.__new__(NetPolicyModel)
    new.inputs, new.latent_dim = inputs, doc["latent_dim"]
    new.net, new.opt = Mlp.from_json(doc["net"]), Adam.from_json(doc["adam"])
    return new


def bc_logit_gradient(probs, w, batch, dataset) -> np.ndarray:
    """Gradient of -(N/|B|) sum_B w_j log pi(a_j|s_j) w.r.t. the per-state logits."""
    batch = np.arange(len(dataset)) if batch is None else np.asarray(batch)
    N, B = len(dataset), batch.size
    coef = (N / B) * np.asarray(w)[batch]
    s, a = dataset.states[batch], dataset.actions[batch]
    S, A = probs.shape
    g = np.zeros((S, A))
    mass = np.bincount(s, weights=coef, minlength=S)
    g += mass[:, None] * probs
    np.add.at(g, (s, a), -coef)
    return g


def policy_bc_step(policy, w, batch, dataset, z=None, learning_rate: float = 3e-4):
    """One weighted behaviour-cloning step; returns an updated copy."""
    if learning_rate < 0:
        raise ValidationError("learning_rate must be >= 0")
    new = policy.copy()
    if learning_rate == 0:
        return new
    new.apply_grad(bc_logit_gradient(new.probs(z), w, batch, dataset), z, learning_rate)
    return new


def weighted_action_frequencies(w, dataset, num_states: int, num_actions: int, floor: float = 1e-8) -> np.ndarray:
    """Closed-form maximizer of sum_j w_j log pi(a_j|s_j); unvisited states get uniform rows."""
    counts = np.zeros((num_states, num_actions))
    np.add.at(counts, (dataset.states, dataset.actions), w)
    counts += floor
    return counts / counts.sum(axis=1, keepdims=True)


@dataclass
class HistoryEntry:
    iteration: int
    z: np.ndarray
    metrics: dict

    def to_json(self) -> dict:
        return {"iteration": self.iteration, "z": np.asarray(self.z).tolist(), "metrics": self.metrics}


@dataclass
class SkillSlot:
    value: object
    policy: object
    w: np.ndarray
    history: list = field(default_factory=list)


@dataclass
class SkillBank:
    slots: list
    multipliers: Multipliers
    config: dict
    latent_dim: int = 0

    @property
    def n(self) -> int:
        return len(self.slots)

    def record(self, i: int, k: int, z, metrics: dict) -> None:
        self.slots[i].history.append(HistoryEntry(k, np.array(z, dtype=np.float64), dict(metrics)))

    def slot_hash(self, i: int) -> str:
        s = self.slots[i]
        return param_hash(list(s.value.parameters()) + list(s.policy.parameters()) + [s.w])

    def save(self, path) -> None:
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        for i, s in enumerate(self.slots):
            doc = {"value": s.value.to_json(), "policy": s.policy.to_json(), "w": s.w.tolist()}
            (path / f"slot_{i}.json").write_text(json.dumps(doc, sort_keys=True))
        hist = {
            "latent_dim": self.latent_dim,
            "mu": self.multipliers.mu.tolist(),
            "config": self.config,
            "skills": [[h.to_json() for h in s.history] for s in self.slots],
        }
        (path / "embeddings.json").write_text(json.dumps(hist, sort_keys=True, indent=1))

    @classmethod
    def load(cls, path, inputs=None) -> "SkillBank":
        path = Path(path)
        hist = json.loads((path / "embeddings.json").read_text())
        slots = []
        for i, entries in enumerate(hist["skills"]):
            doc = json.loads((path / f"slot_{i}.json").read_text())
            slot = SkillSlot(value_from_json(doc["value"], inputs), policy_from_json(doc["policy"], inputs), np.asarray(doc["w"]))
            slot.history = [HistoryEntry(e["iteration"], np.asarray(e["z"], dtype=np.float64), e["metrics"]) for e in entries]
            slots.append(slot)
        return cls(slots, Multipliers(np.asarray(hist["mu"])), hist["config"], hist["latent_dim"])


def new_bank(n: int, dataset_size: int, num_states: int, num_actions: int, seed: int, config: dict,
             inputs=None, latent_dim: int = 0, hidden: int = 64, tabular: bool = False) -> SkillBank:
    """Fresh bank with independent per-slot parameters and simplex-initialized weights."""
    slots = []
    for i in range(n):
        rng = np.random.default_rng([seed, i, 0xB0])
        w = init_weights(dataset_size, [seed, i, 0x77])
        if tabular:
            value, policy = TabularValue.zeros(num_states), TabularPolicyModel.uniform(num_states, num_actions)
        else:
            value = NetValue(inputs, latent_dim, hidden, rng)
            policy = NetPolicyModel(inputs, latent_dim, num_actions, hidden, rng)
        slots.append(SkillSlot(value, policy, w))
    return SkillBank(slots, Multipliers.zeros(n), config, latent_dim if not tabular else 0)


def recall_skill(bank: SkillBank, i: int, z):
    """pi_i(.|s, z) as a closure over states; the tabular fallback ignores z."""
    if not 0 <= i < bank.n:
        raise ValidationError(f"unknown skill slot {i}")
    policy = bank.slots[i].policy
    z = None if z is None else np.asarray(z, dtype=np.float64)
    if z is not None and bank.latent_dim and z.shape != (bank.latent_dim,):
        raise ValidationError(f"z must have dimension {bank.latent_dim}")
    table = policy.probs(z if bank.latent_dim else None)

    def pi(s):
        return table[s]

    pi.table = table
    return pi
