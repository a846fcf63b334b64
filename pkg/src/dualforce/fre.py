"""Functional reward encoding: reward priors, a mean-pooled set VAE, and mean latent embeddings."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mdp import FeatureMap, ValidationError
from .nets import Adam, Mlp, param_hash

VAR_FLOOR = 1e-6
FAMILIES = ("linear", "mlp", "engineered")


@dataclass
class FreConfig:
    latent_dim: int = 8
    hidden: int = 64
    beta_kl: float = 1e-3
    subset_size: int = 64  # t
    num_subsets: int = 8  # m
    decode_size: int = 64
    steps: int = 3000
    batch_rewards: int = 16
    learning_rate: float = 1e-3
    counts: dict = field(default_factory=lambda: {"linear": 30, "mlp": 30, "engineered": 27})
    mlp_hidden: list = field(default_factory=lambda: [[16, 8], [16, 16], [32, 16], [32, 32], [64, 32], [64, 64]])


@dataclass
class RewardFunction:
    family: str
    params: dict
    table: np.ndarray  # value at every state

    def __call__(self, s):
        return self.table[s]

    def to_json(self) -> dict:
        return {
            "family": self.family,
            "params": {k: np.asarray(v).tolist() if not isinstance(v, str) else v for k, v in self.params.items()},
            "table": self.table.tolist(),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "RewardFunction":
        params = {k: (v if isinstance(v, str) else np.asarray(v)) for k, v in doc["params"].items()}
        return cls(doc["family"], params, np.asarray(doc["table"], dtype=np.float64))


# ----------------------------------------------------------------------------- reward prior


def _linear_reward(features, rng):
    w = rng.normal(size=features.dim)
    return RewardFunction("linear", {"weights": w}, features.table @ w)


def _mlp_reward(features, rng, hidden):
    h1, h2 = hidden
    W1 = rng.normal(size=(features.dim, h1)) * 2.0
    b1 = rng.normal(size=h1)
    W2 = rng.normal(size=(h1, h2)) / np.sqrt(h1)
    b2 = rng.normal(size=h2) * 0.5
    w3 = rng.normal(size=h2) / np.sqrt(h2)
    table = np.tanh(np.tanh(features.table @ W1 + b1) @ W2 + b2) @ w3
    return RewardFunction("mlp", {"hidden": np.array(hidden)}, table)


def _engineered_rewards(features, rng, count, grid_shape):
    """Goal indicators, corridor (row/column band) preferences and step-direction bonuses."""
    S = features.table.shape[0]
    out = []
    for k in range(count):
        kind = ("goal", "corridor", "direction")[k % 3]
        if kind == "goal":
            g = int(rng.integers(S))
            table = np.zeros(S)
            table[g] = 1.0
            params = {"kind": "goal", "state": np.array(g)}
        elif kind == "corridor" and grid_shape is not None:
            rows, cols = grid_shape
            axis = int(rng.integers(2))
            lo = int(rng.integers(grid_shape[axis] - 1))
            r, c = np.divmod(np.arange(S), cols)
            coord = (r, c)[axis]
            table = ((coord >= lo) & (coord <= lo + 1)).astype(np.float64)
            params = {"kind": "corridor", "axis": np.array(axis), "start": np.array(lo)}
        else:
            direction = rng.normal(size=features.dim)
            direction /= np.linalg.norm(direction)
            table = features.table @ direction
            params = {"kind": "direction", "direction": direction}
        out.append(RewardFunction("engineered", params, table))
    return out


def generate_reward_family(config: FreConfig, seed: int, features: FeatureMap, grid_shape=None) -> list:
    unknown = set(config.counts) - set(FAMILIES)
    if unknown:
        raise ValidationError(f"unknown reward family {sorted(unknown)}")
    rng = np.random.default_rng(seed)
    rewards = []
    for _ in range(config.counts.get("linear", 0)):
        rewards.append(_linear_reward(features, rng))
    for k in range(config.counts.get("mlp", 0)):
        rewards.append(_mlp_reward(features, rng, config.mlp_hidden[k % len(config.mlp_hidden)]))
    rewards.extend(_engineered_rewards(features, rng, config.counts.get("engineered", 0), grid_shape))
    return rewards


# ----------------------------------------------------------------------------- model


def standardize(values: np.ndarray) -> np.ndarray:
    """Zero mean, unit variance along the last axis, with a variance floor."""
    mean = values.mean(axis=-1, keepdims=True)
    var = values.var(axis=-1, keepdims=True)
    return (values - mean) / np.sqrt(np.maximum(var, VAR_FLOOR))


class FreModel:
    def __init__(self, features: np.ndarray, config: FreConfig, rng: np.random.Generator):
        self.features = np.asarray(features, dtype=np.float64)
        self.config = config
        F, H, dz = self.features.shape[1], config.hidden, config.latent_dim
        self.embedder = Mlp([F + 1, H, H], rng)
        self.head = Mlp([H, H, 2 * dz], rng, out_scale=0.1)
        self.decoder = Mlp([dz + F, H, H, 1], rng)
        self.loss_history: list = []

    @property
    def latent_dim(self) -> int:
        return self.config.latent_dim

    @property
    def parameters(self):
        return self.embedder.params + self.head.params + self.decoder.params

    def fingerprint(self) -> str:
        return param_hash(self.parameters)

    # -- inference ----------------------------------------------------------------

    def _encode_inputs(self, states, values):
        states = np.asarray(states)
        return np.concatenate([self.features[states], standardize(values)[..., None]], axis=-1)

    def _latent(self, states, values):
        """Batched forward pass: states/values are [B, t]; returns (mu, logvar, caches)."""
        B, t = states.shape
        x = self._encode_inputs(states, values).reshape(B * t, -1)
        h, emb_acts = self.embedder.forward(x)
        pooled = h.reshape(B, t, -1).mean(axis=1)
        out, head_acts = self.head.forward(pooled)
        dz = self.latent_dim
        return out[:, :dz], out[:, dz:], (emb_acts, head_acts, B, t)

    def encode_batch(self, states, values) -> np.ndarray:
        """Latent means for a batch of sample sets, each canonicalized by sorting on state."""
        states = np.atleast_2d(np.asarray(states))
        values = np.atleast_2d(np.asarray(values, dtype=np.float64))
        order = np.lexsort((values, states), axis=-1)
        states = np.take_along_axis(states, order, -1)
        values = np.take_along_axis(values, order, -1)
        mu, _, _ = self._latent(states, values)
        return mu

    def decode_many(self, z, states) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        states = np.atleast_1d(states)
        x = np.concatenate([np.broadcast_to(z, (states.shape[0], z.shape[-1])), self.features[states]], axis=1)
        return self.decoder(x)[:, 0]

    # -- serialization ------------------------------------------------------------

    def to_json(self) -> dict:
        cfg = dict(self.config.__dict__)
        return {
            "architecture": {
                "embedder": list(self.embedder.sizes),
                "head": list(self.head.sizes),
                "decoder": list(self.decoder.sizes),
                "pooling": "mean",
                "activation": "tanh",
            },
            "config": cfg,
            "features": self.features.tolist(),
            "embedder": self.embedder.to_json(),
            "head": self.head.to_json(),
            "decoder": self.decoder.to_json(),
            "loss_history": list(self.loss_history),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "FreModel":
        new = object.__new__(cls)
        new.features = np.asarray(doc["features"], dtype=np.float64)
        new.config = FreConfig(**doc["config"])
        new.embedder = Mlp.from_json(doc["embedder"])
        new.head = Mlp.from_json(doc["head"])
        new.decoder = Mlp.from_json(doc["decoder"])
        new.loss_history = list(doc["loss_history"])
        return new


def _unique_pairs(states, values):
    states = np.asarray(states).ravel()
    values = np.asarray(values, dtype=np.float64).ravel()
    pairs = np.unique(np.stack([states.astype(np.float64), values], axis=1), axis=0)
    return pairs[:, 0].astype(np.int64), pairs[:, 1]


def encode(fre: FreModel, states, values) -> np.ndarray:
    """Latent mean of a set of (state, reward) samples; duplicates and order are irrelevant."""
    if np.size(states) == 0:
        raise ValidationError("cannot encode an empty sample set")
    s, v = _unique_pairs(states, values)
    return fre.encode_batch(s[None], v[None])[0]


def decode(fre: FreModel, z, state) -> float | np.ndarray:
    out = fre.decode_many(z, state)
    return float(out[0]) if np.ndim(state) == 0 else out


def _reward_table(reward):
    return reward.table if isinstance(reward, RewardFunction) else np.asarray(reward, dtype=np.float64)


def sample_subsets(pool: np.ndarray, m: int, t: int, rng: np.random.Generator) -> np.ndarray:
    """m uniformly random size-t subsets of the pool, one per row."""
    if pool.size < t:
        raise ValidationError(f"state pool has {pool.size} states, fewer than t={t}")
    keys = rng.random((m, pool.size))
    return pool[np.argpartition(keys, t - 1, axis=1)[:, :t]]


def mean_embedding(fre: FreModel, reward, states_pool, m: int, t: int, seed) -> np.ndarray:
    """Mean latent over m random size-t subsets of the (distinct) pool states."""
    if m < 1 or t < 1:
        raise ValidationError("m and t must be >= 1")
    pool = np.unique(np.asarray(states_pool))
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    subsets = sample_subsets(pool, m, t, rng)
    table = _reward_table(reward)
    return fre.encode_batch(subsets, table[subsets]).mean(axis=0)


# ----------------------------------------------------------------------------- training


def _kl_to_prior(mu, logvar):
    return 0.5 * np.sum(mu**2 + np.exp(logvar) - logvar - 1.0, axis=1)


def fre_loss_and_grads(fre: FreModel, states, values, dec_states, dec_targets, noise, beta_kl):
    """Decode MSE + beta_kl * KL for one batch; returns (loss, grads aligned with fre.parameters)."""
    cfg = fre.config
    dz = cfg.latent_dim
    mu, logvar, (emb_acts, head_acts, B, t) = fre._latent(states, values)
    std = np.exp(0.5 * logvar)
    z = mu + std * noise
    td = dec_states.shape[1]
    x_dec = np.concatenate([np.repeat(z, td, axis=0), fre.features[dec_states.ravel()]], axis=1)
    pred, dec_acts = fre.decoder.forward(x_dec)
    err = pred[:, 0] - dec_targets.ravel()
    mse = np.mean(err**2)
    kl = np.mean(_kl_to_prior(mu, logvar))
    loss = mse + beta_kl * kl

    g_pred = (2.0 / err.size) * err[:, None]
    g_dec, g_xdec = fre.decoder.backward(dec_acts, g_pred)
    g_z = g_xdec[:, :dz].reshape(B, td, dz).sum(axis=1)
    g_mu = g_z + beta_kl * mu / B
    g_logvar = g_z * noise * 0.5 * std + beta_kl * 0.5 * (np.exp(logvar) - 1.0) / B
    g_head, g_pooled = fre.head.backward(head_acts, np.concatenate([g_mu, g_logvar], axis=1))
    g_h = np.repeat(g_pooled / t, t, axis=0)
    g_emb, _ = fre.embedder.backward(emb_acts, g_h)
    return loss, g_emb + g_head + g_dec


def pool_standardized(tables: np.ndarray, pool: np.ndarray) -> np.ndarray:
    """Decoder targets: each reward standardized over the whole state pool."""
    vals = tables[..., pool]
    mean = vals.mean(axis=-1, keepdims=True)
    sd = np.sqrt(np.maximum(vals.var(axis=-1, keepdims=True), VAR_FLOOR))
    return (tables - mean) / sd


def _training_batch(tables, targets, pool, idx, rng, t, td):
    B = len(idx)
    enc = sample_subsets(pool, B, t, rng)
    dec = sample_subsets(pool, B, td, rng)
    return enc, tables[idx[:, None], enc], dec, targets[idx[:, None], dec]


def pretrain_fre(states_pool, rewards, config: FreConfig, seed: int, features: FeatureMap) -> FreModel:
    """Minimize held-out decode error plus a KL bottleneck over random sample subsets."""
    if not rewards:
        raise ValidationError("need at least one reward function")
    pool = np.unique(np.asarray(states_pool))
    if pool.size == 0:
        raise ValidationError("empty state pool")
    t = min(config.subset_size, pool.size)
    td = min(config.decode_size, pool.size)
    rng = np.random.default_rng(seed)
    fre = FreModel(features.table, config, rng)
    opt = Adam(fre.parameters)
    tables = np.stack([_reward_table(r) for r in rewards])
    targets = pool_standardized(tables, pool)
    for _ in range(config.steps):
        idx = rng.integers(len(rewards), size=config.batch_rewards)
        enc, enc_vals, dec, dec_targets = _training_batch(tables, targets, pool, idx, rng, t, td)
        noise = rng.normal(size=(len(idx), config.latent_dim))
        loss, grads = fre_loss_and_grads(fre, enc, enc_vals, dec, dec_targets, noise, config.beta_kl)
        if not np.isfinite(loss):
            raise RuntimeError("FRE loss diverged")
        opt.step(fre.parameters, grads, config.learning_rate)
        fre.loss_history.append(float(loss))
    return fre


def heldout_decode_errors(fre: FreModel, rewards, states_pool, seed: int, t=None):
    """Per-reward (model MSE, constant-mean baseline MSE) on the pool states left out of the encode subset.

    Errors are in pool-standardized units; the baseline predicts the encode-subset mean.
    """
    pool = np.unique(np.asarray(states_pool))
    t = min(t or fre.config.subset_size, pool.size - 1)
    rng = np.random.default_rng(seed)
    out = []
    for r in rewards:
        table = _reward_table(r)
        target_table = pool_standardized(table, pool)
        perm = rng.permutation(pool)
        enc, dec = perm[:t], perm[t:]
        z = fre.encode_batch(enc[None], table[enc][None])[0]
        pred = fre.decode_many(z, dec)
        target = target_table[dec]
        baseline = target_table[enc].mean()
        out.append((float(np.mean((pred - target) ** 2)), float(np.mean((baseline - target) ** 2))))
    return out
