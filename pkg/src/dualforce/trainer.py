"""The alternating training loop: diversity phase, value/policy phase, multiplier phase."""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field

import numpy as np

from . import dice
from .discriminator import Discriminator
from .diversity import nearest_rivals, pairwise_distances, vdw_objective
from .fre import FreModel, mean_embedding
from .lagrange import combined_reward, multiplier_step
from .mdp import ExpertDataset, FeatureMap, OfflineDataset, TabularMdp, ValidationError
from .oracle import solve_dataset_dual
from .skills import SkillBank, new_bank, policy_bc_step, polyak_update, weighted_action_frequencies

METRIC_COLUMNS = ("k", "skill", "snapshot", "phi", "sigma_mu", "ell", "dual_obj", "vdw_obj", "embedding")


@dataclass
class TrainerConfig:
    n: int = 3
    ell0: float | None = None  # None: half the feature-space diameter of the dataset
    epsilon: float = 1.0
    alpha: float = 0.05
    value_lr: float = 3e-4
    policy_lr: float = 3e-4
    mu_lr: float = 0.05
    mu_init: float = 0.0
    m: int = 8
    t: int = 64
    max_iterations: int = 5000
    batch_size: int = 256
    hidden: int = 64
    tol: float = 1e-6
    patience: int = 50
    mode: str = "amortized"  # or "exact"
    td_mode: str = "sampled"  # or "exact" (needs the MDP)

    def validate(self) -> None:
        if self.n < 1:
            raise ValidationError("n must be >= 1")
        if self.ell0 is not None and self.ell0 <= 0:
            raise ValidationError("ell0 must be positive")
        if self.epsilon < 0:
            raise ValidationError("epsilon must be >= 0")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValidationError("alpha must lie in [0, 1]")
        if self.max_iterations < 0:
            raise ValidationError("max_iterations must be >= 0")
        if self.mode not in ("amortized", "exact"):
            raise ValidationError(f"unknown mode {self.mode!r}")
        if self.td_mode not in ("sampled", "exact"):
            raise ValidationError(f"unknown td_mode {self.td_mode!r}")
        for key in ("value_lr", "policy_lr", "mu_lr"):
            if getattr(self, key) < 0:
                raise ValidationError(f"{key} must be >= 0")


@dataclass
class MetricsLog:
    rows: list = field(default_factory=list)
    weight_deltas: list = field(default_factory=list)  # max_i ||w^{k+1} - w^k||_1 per iteration
    td_clips: int = 0
    stopped_early: bool = False

    def append(self, **row) -> None:
        self.rows.append(row)

    def column(self, name: str, skill: int | None = None) -> np.ndarray:
        return np.array([r[name] for r in self.rows if skill is None or r["skill"] == skill], dtype=np.float64)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(METRIC_COLUMNS)
        for r in self.rows:
            writer.writerow([_fmt(r[c]) for c in METRIC_COLUMNS])
        return buf.getvalue()


def _fmt(x):
    if isinstance(x, float):
        return "" if np.isnan(x) else repr(x)
    return x


def feature_diameter(features: FeatureMap, states) -> float:
    """Largest pairwise feature distance among the states present in the data."""
    X = features.table[np.unique(states)]
    return float(pairwise_distances(X).max()) if len(X) > 1 else 0.0


def _state_mass(w, states, num_states):
    return np.stack([np.bincount(states, weights=wi, minlength=num_states) for wi in w])


def dual_force_train(
    config: TrainerConfig,
    offline: OfflineDataset,
    expert: ExpertDataset,
    disc: Discriminator,
    fre: FreModel | None,
    seed: int,
    features: FeatureMap,
    inputs: np.ndarray | None = None,
    mdp: TabularMdp | None = None,
    fixed_sigma: bool = False,
    callback=None,
):
    """Run the alternating loop; returns (SkillBank, MetricsLog).

    `features` defines successor features; `inputs` (default one-hot) feed the approximators.
    With fixed_sigma the multiplier is frozen at sigma = 1 and the reward is the log-odds alone.
    """
    config.validate()
    if config.td_mode == "exact" and mdp is None:
        raise ValidationError("td_mode 'exact' needs the MDP")
    exact = config.mode == "exact"
    if not exact and fre is None:
        raise ValidationError("amortized mode needs a pretrained FRE model")
    S = int(offline.meta.get("num_states", features.table.shape[0]))
    A = int(offline.meta.get("num_actions", int(offline.actions.max()) + 1))
    gamma = float(offline.meta["gamma"])
    N = len(offline)
    states = offline.states
    inputs = np.eye(S) if inputs is None else np.asarray(inputs, dtype=np.float64)
    latent_dim = 0 if exact else fre.latent_dim
    fre_hash = None if exact else fre.fingerprint()

    ell0 = config.ell0
    if ell0 is None:
        ell0 = 0.5 * feature_diameter(features, states)
        if ell0 <= 0:
            raise ValidationError("dataset features are degenerate; set ell0 explicitly")
    resolved = asdict(config)
    resolved["ell0"] = ell0
    bank = new_bank(config.n, N, S, A, seed, resolved, inputs, latent_dim, config.hidden, tabular=exact)
    if fixed_sigma:
        bank.multipliers.mu[:] = bank.multipliers.mu_clip
    else:
        bank.multipliers.mu[:] = config.mu_init
    log = MetricsLog()

    lo_table = disc.log_odds_table()
    lo_rec = lo_table[states]
    Phi = features.table
    pool = np.unique(states)
    n = config.n
    W = np.stack([s.w for s in bank.slots])
    psi = _state_mass(W, states, S) @ Phi
    quiet = 0

    for k in range(config.max_iterations):
        # (1) snapshot phase: every beta_i^k comes from the same psi^k
        sigma = np.ones(n) if fixed_sigma else bank.multipliers.sigma
        if n >= 2:
            rival, ell = nearest_rivals(psi)
            coef = 1.0 - (ell / ell0) ** 3
            beta = coef[:, None] * ((psi - psi[rival]) @ Phi.T)
            vdw = vdw_objective(psi, ell0)
        else:
            ell = np.full(1, np.nan)
            beta = np.zeros((1, S))
            vdw = np.nan
        rewards = []
        latents = []
        for i in range(n):
            R = lo_table.copy() if fixed_sigma else combined_reward(beta[i], lo_table, bank.multipliers.mu[i])
            rewards.append(R)
            if exact:
                latents.append(np.zeros(0))
            else:
                latents.append(mean_embedding(fre, R, pool, config.m, min(config.t, pool.size), [seed, i, k, 1]))

        # (2) value / policy phase, independent per skill
        dual_objs = np.zeros(n)
        deltas = np.zeros(n)
        for i in range(n):
            slot = bank.slots[i]
            R_rec = rewards[i][states]
            z = latents[i] if not exact else None
            rng = np.random.default_rng([seed, i, k, 2])
            batch = rng.integers(N, size=min(config.batch_size, N))
            if exact:
                v, w_new, sol = solve_dataset_dual(
                    offline, R_rec, gamma, config.td_mode, mdp, v0=slot.value.v, num_states=S
                )
                slot.value = dice.TabularValue(v)
                dual_objs[i] = sol.dual_value
            else:
                slot.value = dice.value_gradient_step(
                    slot.value, R_rec, batch, gamma, z, config.value_lr, config.td_mode, offline, mdp
                )
                delta, clips = dice.clip_td(dice.td_errors(slot.value, R_rec, offline, gamma, z, config.td_mode, mdp))
                log.td_clips += clips
                w_new = dice.softmax_weights(delta)
                v_all = slot.value.values(z)
                dual_objs[i] = (1.0 - gamma) * v_all[offline.initial_states].mean() + dice.log_mean_exp(delta)
            w_next = polyak_update(slot.w, w_new, config.alpha)
            deltas[i] = np.abs(w_next - slot.w).sum()
            slot.w = w_next
            if exact:
                probs = weighted_action_frequencies(slot.w, offline, S, A)
                slot.policy.logits = np.log(probs)
            else:
                slot.policy = policy_bc_step(slot.policy, slot.w, batch, offline, z, config.policy_lr)

        # (3) multiplier phase
        phis = np.array([dice.kl_constraint_estimate(s.w, lo_rec, N) for s in bank.slots])
        if not fixed_sigma:
            bank.multipliers = multiplier_step(bank.multipliers, phis, config.epsilon, config.mu_lr)

        for i in range(n):
            metrics = {"phi": float(phis[i]), "sigma_mu": float(sigma[i]), "ell": float(ell[i])}
            bank.record(i, k, latents[i], metrics)
            log.append(
                k=k, skill=i, snapshot=k, phi=float(phis[i]), sigma_mu=float(sigma[i]), ell=float(ell[i]),
                dual_obj=float(dual_objs[i]), vdw_obj=float(vdw),
                embedding=f"embeddings.json#skills/{i}/{len(bank.slots[i].history) - 1}",
            )
        log.weight_deltas.append(float(deltas.max()))
        if callback is not None:
            callback(k, bank, log)

        W = np.stack([s.w for s in bank.slots])
        psi_next = _state_mass(W, states, S) @ Phi
        moved = float(np.linalg.norm(psi_next - psi, axis=1).max())
        psi = psi_next
        quiet = quiet + 1 if moved < config.tol else 0
        if quiet >= config.patience:
            log.stopped_early = True
            break

    if fre_hash is not None and fre.fingerprint() != fre_hash:
        raise RuntimeError("FRE parameters changed during training")
    return bank, log


def smodice_baseline_train(config: TrainerConfig, offline, expert, disc, seed, features, inputs=None, mdp=None, fre=None):
    """Single-skill imitation with sigma(mu) = 1: reward = log-odds, no diversity, no multiplier updates."""
    cfg = TrainerConfig(**{**asdict(config), "n": 1})
    return dual_force_train(cfg, offline, expert, disc, fre, seed, features, inputs, mdp, fixed_sigma=True)


def skill_successor_features(bank: SkillBank, offline: OfflineDataset, features: FeatureMap) -> np.ndarray:
    W = np.stack([s.w for s in bank.slots])
    return _state_mass(W, offline.states, features.table.shape[0]) @ features.table
