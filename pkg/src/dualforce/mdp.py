"""Finite MDPs, exact and Monte Carlo occupancies, rollouts and offline datasets."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

PROB_ATOL = 1e-9


class ValidationError(ValueError):
    """Raised when an input violates a documented precondition."""


@dataclass(frozen=True)
class TabularMdp:
    transitions: np.ndarray  # P[s, a, s']
    rho0: np.ndarray
    gamma: float

    def __post_init__(self):
        P = np.asarray(self.transitions, dtype=np.float64)
        rho0 = np.asarray(self.rho0, dtype=np.float64)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise ValidationError(f"transition tensor must be [S, A, S], got {P.shape}")
        if np.any(P < 0) or not np.allclose(P.sum(-1), 1.0, atol=PROB_ATOL, rtol=0):
            raise ValidationError("every P[s, a, :] must be a probability vector")
        if rho0.shape != (P.shape[0],):
            raise ValidationError("rho0 must have one entry per state")
        if np.any(rho0 < 0) or abs(rho0.sum() - 1.0) > PROB_ATOL:
            raise ValidationError("rho0 must be a probability vector")
        if not 0.0 < self.gamma < 1.0:
            raise ValidationError(f"gamma must lie in (0, 1), got {self.gamma}")
        P.setflags(write=False)
        rho0.setflags(write=False)
        object.__setattr__(self, "transitions", P)
        object.__setattr__(self, "rho0", rho0)
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def num_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transitions.shape[1]


@dataclass(frozen=True)
class TabularPolicy:
    probs: np.ndarray  # pi[s, a]

    def __post_init__(self):
        pi = np.asarray(self.probs, dtype=np.float64)
        if pi.ndim != 2:
            raise ValidationError("policy table must be [S, A]")
        if np.any(pi < 0) or not np.allclose(pi.sum(1), 1.0, atol=PROB_ATOL, rtol=0):
            raise ValidationError("each policy row must be a probability vector")
        pi.setflags(write=False)
        object.__setattr__(self, "probs", pi)

    @classmethod
    def uniform(cls, num_states: int, num_actions: int) -> "TabularPolicy":
        return cls(np.full((num_states, num_actions), 1.0 / num_actions))

    @classmethod
    def from_logits(cls, logits: np.ndarray) -> "TabularPolicy":
        z = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(z)
        return cls(e / e.sum(axis=1, keepdims=True))

    def smoothed(self, eps: float) -> "TabularPolicy":
        """Mix with the uniform policy so every action has mass >= eps / |A|."""
        A = self.probs.shape[1]
        return TabularPolicy((1.0 - eps) * self.probs + eps / A)


@dataclass(frozen=True)
class FeatureMap:
    table: np.ndarray  # [S, d]
    variant: str = "custom-table"

    def __post_init__(self):
        t = np.asarray(self.table, dtype=np.float64)
        if t.ndim != 2 or not np.all(np.isfinite(t)):
            raise ValidationError("feature table must be a finite [S, d] matrix")
        t.setflags(write=False)
        object.__setattr__(self, "table", t)

    @property
    def dim(self) -> int:
        return self.table.shape[1]

    def __call__(self, states) -> np.ndarray:
        return self.table[states]

    @classmethod
    def one_hot(cls, num_states: int) -> "FeatureMap":
        return cls(np.eye(num_states), "one-hot")

    @classmethod
    def grid_coordinates(cls, rows: int, cols: int) -> "FeatureMap":
        """(row, column) in cell units."""
        r, c = np.divmod(np.arange(rows * cols), cols)
        return cls(np.stack([r, c], axis=1).astype(np.float64), "coordinate")

    def normalized(self) -> "FeatureMap":
        """Each column min-max scaled into [0, 1]; constant columns map to 0."""
        lo, hi = self.table.min(axis=0), self.table.max(axis=0)
        span = np.where(hi > lo, hi - lo, 1.0)
        return FeatureMap((self.table - lo) / span, self.variant + "/normalized")


def state_action_matrix(mdp: TabularMdp, policy: TabularPolicy) -> np.ndarray:
    """Markov chain P_pi[s, s'] induced by following the policy."""
    return np.einsum("sa,sat->st", policy.probs, mdp.transitions)


def exact_occupancy(mdp: TabularMdp, policy: TabularPolicy) -> np.ndarray:
    """Discounted state-action occupancy d[s, a], normalized to sum to one."""
    if policy.probs.shape != (mdp.num_states, mdp.num_actions):
        raise ValidationError("policy shape does not match the MDP")
    P_pi = state_action_matrix(mdp, policy)
    A = np.eye(mdp.num_states) - mdp.gamma * P_pi.T
    try:
        d_s = np.linalg.solve(A, (1.0 - mdp.gamma) * mdp.rho0)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - gamma < 1 keeps A invertible
        raise RuntimeError("occupancy linear system is singular") from exc
    d_s = np.clip(d_s, 0.0, None)
    return d_s[:, None] * policy.probs


def bellman_flow_residual(mdp: TabularMdp, d: np.ndarray, rho0: np.ndarray | None = None) -> float:
    """max_s |sum_a d(s,a) - (1-g) rho0(s) - g sum_{s',a'} P[s',a',s] d(s',a')|."""
    rho0 = mdp.rho0 if rho0 is None else rho0
    inflow = np.einsum("sa,sat->t", d, mdp.transitions)
    resid = d.sum(1) - (1.0 - mdp.gamma) * rho0 - mdp.gamma * inflow
    return float(np.abs(resid).max())


# ----------------------------------------------------------------------------- rollouts


@dataclass
class Trajectory:
    """One or a batch of episodes; arrays are [H] or [E, H]."""

    states: np.ndarray
    actions: np.ndarray
    next_states: np.ndarray

    @property
    def horizon(self) -> int:
        return self.states.shape[-1]

    def records(self):
        """(s, a, s', is_initial) tuples of a single episode."""
        if self.states.ndim != 1:
            raise ValidationError("records() needs a single episode")
        return [
            (int(s), int(a), int(n), t == 0)
            for t, (s, a, n) in enumerate(zip(self.states, self.actions, self.next_states))
        ]


def _categorical(rng: np.random.Generator, probs: np.ndarray) -> np.ndarray:
    """Vectorized inverse-CDF sampling, one draw per row of probs."""
    cdf = np.cumsum(probs, axis=-1)
    u = rng.random(probs.shape[:-1] + (1,))
    idx = (u * cdf[..., -1:] > cdf).sum(-1)
    return np.minimum(idx, probs.shape[-1] - 1)


def rollout_batch(
    mdp: TabularMdp,
    policy_tables: np.ndarray,
    episodes: int,
    horizon: int,
    rng: np.random.Generator,
) -> Trajectory:
    """Sample episodes; policy_tables is [S, A] or per-episode [E, S, A]."""
    if horizon < 1 or episodes < 1:
        raise ValidationError("horizon and episodes must be >= 1")
    S = mdp.num_states
    states = np.empty((episodes, horizon), dtype=np.int64)
    actions = np.empty_like(states)
    nexts = np.empty_like(states)
    per_episode = policy_tables.ndim == 3
    rows = np.arange(episodes)
    s = _categorical(rng, np.broadcast_to(mdp.rho0, (episodes, S)))
    for t in range(horizon):
        pi_s = policy_tables[rows, s] if per_episode else policy_tables[s]
        a = _categorical(rng, pi_s)
        nxt = _categorical(rng, mdp.transitions[s, a])
        states[:, t], actions[:, t], nexts[:, t] = s, a, nxt
        s = nxt
    return Trajectory(states, actions, nexts)


def rollout(mdp: TabularMdp, policy: TabularPolicy, horizon: int, seed: int) -> Trajectory:
    """A single episode; t = 0 is the initial step."""
    batch = rollout_batch(mdp, policy.probs, 1, horizon, np.random.default_rng(seed))
    return Trajectory(batch.states[0], batch.actions[0], batch.next_states[0])


def empirical_occupancy(trajectories, gamma: float, num_states: int, num_actions: int) -> np.ndarray:
    """Discounted visitation estimate; each episode is normalized by its own sum of gamma^t."""
    if isinstance(trajectories, Trajectory):
        trajectories = [trajectories]
    if not trajectories:
        raise ValidationError("need at least one trajectory")
    d = np.zeros((num_states, num_actions))
    for traj in trajectories:
        S = np.atleast_2d(traj.states)
        A = np.atleast_2d(traj.actions)
        disc = gamma ** np.arange(S.shape[1])
        weights = np.broadcast_to(disc / disc.sum(), S.shape)
        np.add.at(d, (S.ravel(), A.ravel()), weights.ravel())
    # the accumulated mass is the episode count up to rounding; dividing by it keeps sum(d) = 1
    return d / d.sum()


# ----------------------------------------------------------------------------- datasets


@dataclass(frozen=True)
class OfflineDataset:
    states: np.ndarray
    actions: np.ndarray
    next_states: np.ndarray
    is_initial: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        arrays = [np.asarray(x, dtype=np.int64) for x in (self.states, self.actions, self.next_states, self.is_initial)]
        n = arrays[0].shape[0]
        if any(a.shape != (n,) for a in arrays):
            raise ValidationError("dataset columns must be aligned 1-D arrays")
        if n == 0:
            raise ValidationError("dataset is empty")
        S, A = self.meta.get("num_states"), self.meta.get("num_actions")
        if S is not None and (arrays[0].min() < 0 or arrays[0].max() >= S or arrays[2].min() < 0 or arrays[2].max() >= S):
            raise ValidationError("state index out of bounds")
        if A is not None and (arrays[1].min() < 0 or arrays[1].max() >= A):
            raise ValidationError("action index out of bounds")
        if not arrays[3].any():
            raise ValidationError("dataset has no initial-state records")
        for a in arrays:
            a.setflags(write=False)
        for name, a in zip(("states", "actions", "next_states", "is_initial"), arrays):
            object.__setattr__(self, name, a)

    def __len__(self) -> int:
        return self.states.shape[0]

    @property
    def initial_states(self) -> np.ndarray:
        return self.states[self.is_initial.astype(bool)]

    def state_counts(self, num_states: int) -> np.ndarray:
        return np.bincount(self.states, minlength=num_states)

    def to_json(self) -> dict:
        rows = np.stack([self.states, self.actions, self.next_states, self.is_initial], axis=1)
        return {"meta": dict(self.meta), "transitions": rows.tolist()}

    @classmethod
    def from_json(cls, doc: dict) -> "OfflineDataset":
        rows = np.asarray(doc["transitions"], dtype=np.int64).reshape(-1, 4)
        return cls(rows[:, 0], rows[:, 1], rows[:, 2], rows[:, 3], dict(doc["meta"]))


@dataclass(frozen=True)
class ExpertDataset:
    states: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        s = np.asarray(self.states, dtype=np.int64)
        if s.ndim != 1 or s.size == 0:
            raise ValidationError("expert dataset must be a non-empty list of states")
        s.setflags(write=False)
        object.__setattr__(self, "states", s)

    def __len__(self) -> int:
        return self.states.shape[0]

    def to_json(self) -> dict:
        return {"meta": dict(self.meta), "states": self.states.tolist()}

    @classmethod
    def from_json(cls, doc: dict) -> "ExpertDataset":
        return cls(np.asarray(doc["states"], dtype=np.int64), dict(doc["meta"]))


def check_expert_coverage(expert: ExpertDataset, offline: OfflineDataset) -> None:
    """Every expert state must also occur in the offline data (expert coverage assumption)."""
    missing = np.setdiff1d(np.unique(expert.states), np.unique(offline.states))
    if missing.size:
        raise ValidationError(f"expert states absent from the offline dataset: {missing.tolist()}")


def generate_offline_dataset(
    mdp: TabularMdp,
    behavior_policies: Sequence[tuple[TabularPolicy, float]],
    episodes: int,
    horizon: int,
    seed: int,
    generator: str = "mixture",
) -> OfflineDataset:
    """Concatenated rollouts; each episode draws its behavior policy from the mixture."""
    if not behavior_policies:
        raise ValidationError("need at least one behavior policy")
    weights = np.asarray([w for _, w in behavior_policies], dtype=np.float64)
    if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-9:
        raise ValidationError("mixture weights must form a distribution")
    rng = np.random.default_rng(seed)
    tables = np.stack([p.probs for p, _ in behavior_policies])
    which = _categorical(rng, np.broadcast_to(weights, (episodes, len(weights))))
    traj = rollout_batch(mdp, tables[which], episodes, horizon, rng)
    is_initial = np.zeros_like(traj.states)
    is_initial[:, 0] = 1
    meta = {
        "num_states": mdp.num_states,
        "num_actions": mdp.num_actions,
        "gamma": mdp.gamma,
        "seed": int(seed),
        "generator": generator,
    }
    return OfflineDataset(
        traj.states.ravel(), traj.actions.ravel(), traj.next_states.ravel(), is_initial.ravel(), meta
    )


def sample_expert_states(
    mdp: TabularMdp,
    policy: TabularPolicy,
    num_samples: int,
    horizon: int,
    seed: int,
) -> tuple[np.ndarray, Trajectory]:
    """Draw states from the (horizon-truncated) discounted occupancy of the expert.

    One episode per sample; the sampled step is geometric with parameter 1 - gamma,
    resampled within the horizon. The episodes themselves are returned too so the
    caller can mix them into the offline data.
    """
    rng = np.random.default_rng(seed)
    traj = rollout_batch(mdp, policy.probs, num_samples, horizon, rng)
    disc = mdp.gamma ** np.arange(horizon)
    t = _categorical(rng, np.broadcast_to(disc / disc.sum(), (num_samples, horizon)))
    return traj.states[np.arange(num_samples), t], traj


def merge_datasets(parts: Sequence[OfflineDataset], meta: dict) -> OfflineDataset:
    cat = lambda name: np.concatenate([getattr(p, name) for p in parts])  # noqa: E731
    return OfflineDataset(cat("states"), cat("actions"), cat("next_states"), cat("is_initial"), meta)


def trajectory_dataset(traj: Trajectory, meta: dict) -> OfflineDataset:
    is_initial = np.zeros_like(np.atleast_2d(traj.states))
    is_initial[:, 0] = 1
    return OfflineDataset(
        np.ravel(traj.states), np.ravel(traj.actions), np.ravel(traj.next_states), is_initial.ravel(), meta
    )


def write_json(path, doc: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, sort_keys=True) + "\n")


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def load_datasets(offline_path, expert_path) -> tuple[OfflineDataset, ExpertDataset]:
    """Load both datasets and enforce expert coverage."""
    offline = OfflineDataset.from_json(read_json(offline_path))
    expert = ExpertDataset.from_json(read_json(expert_path))
    check_expert_coverage(expert, offline)
    return offline, expert
