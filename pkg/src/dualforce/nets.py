"""Small numpy MLPs with hand-written reverse-mode gradients, and an Adam optimizer."""

from __future__ import annotations

import hashlib

import numpy as np


class Mlp:
    """tanh hidden layers, linear output. Parameters live in a flat list [W1, b1, W2, b2, ...]."""

    def __init__(self, sizes, rng: np.random.Generator, out_scale: float = 1.0):
        self.sizes = tuple(int(s) for s in sizes)
        self.params = []
        for i, (fan_in, fan_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            scale = np.sqrt(1.0 / fan_in)
            if i == len(self.sizes) - 2:
                scale *= out_scale
            self.params.append(rng.normal(0.0, scale, size=(fan_in, fan_out)))
            self.params.append(np.zeros(fan_out))

    @property
    def num_layers(self) -> int:
        return len(self.params) // 2

    def forward(self, x: np.ndarray):
        """Returns (output, cache) where cache holds per-layer inputs/activations."""
        acts = [x]
        h = x
        for k in range(self.num_layers):
            W, b = self.params[2 * k], self.params[2 * k + 1]
            h = h @ W + b
            if k < self.num_layers - 1:
                h = np.tanh(h)
            acts.append(h)
        return h, acts

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, acts, grad_out: np.ndarray):
        """Gradients of sum(grad_out * output) w.r.t. parameters and the input."""
        grads = [None] * len(self.params)
        g = grad_out
        for k in reversed(range(self.num_layers)):
            if k < self.num_layers - 1:
                g = g * (1.0 - acts[k + 1] ** 2)
            grads[2 * k] = acts[k].T @ g
            grads[2 * k + 1] = g.sum(axis=0)
            g = g @ self.params[2 * k].T
        return grads, g

    def copy(self) -> "Mlp":
        new = object.__new__(Mlp)
        new.sizes = self.sizes
        new.params = [p.copy() for p in self.params]
        return new

    def to_json(self) -> dict:
        return {"sizes": list(self.sizes), "params": [p.tolist() for p in self.params]}

    @classmethod
    def from_json(cls, doc: dict) -> "Mlp":
        new = object.__new__(cls)
        new.sizes = tuple(doc["sizes"])
        new.params = [np.asarray(p, dtype=np.float64) for p in doc["params"]]
        return new


class Adam:
    def __init__(self, params, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads, lr: float) -> None:
        """In-place descent step; lr = 0 leaves params untouched."""
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            if lr:
                p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def copy(self) -> "Adam":
        new = object.__new__(Adam)
        new.beta1, new.beta2, new.eps, new.t = self.beta1, self.beta2, self.eps, self.t
        new.m = [x.copy() for x in self.m]
        new.v = [x.copy() for x in self.v]
        return new

    def to_json(self) -> dict:
        return {"t": self.t, "m": [x.tolist() for x in self.m], "v": [x.tolist() for x in self.v]}

    @classmethod
    def from_json(cls, doc: dict) -> "Adam":
        new = cls([])
        new.t = doc["t"]
        new.m = [np.asarray(x) for x in doc["m"]]
        new.v = [np.asarray(x) for x in doc["v"]]
        return new


def param_hash(params) -> str:
    h = hashlib.sha256()
    for p in params:
        h.update(np.ascontiguousarray(p, dtype=np.float64).tobytes())
    return h.hexdigest()
