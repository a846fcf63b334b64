"""Brute-force ground truth: exact regularized solves, exact KL quantities, finite differences."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp import OfflineDataset, TabularMdp, ValidationError, bellman_flow_residual


@dataclass
class DualSolution:
    v: np.ndarray
    weights: np.ndarray  # softmax over the records / (s, a) pairs
    dual_value: float
    grad_norm: float
    iterations: int


def _lse(x):
    m = x.max()
    return m + np.log(np.exp(x - m).sum())


def solve_dual(c, log_p, r, A, tolerance=1e-8, max_iter=200, v0=None) -> DualSolution:
    """Minimize f(v) = c.v + log sum_j p_j exp(r_j + (A v)_j) by damped Newton steps.

    The objective is convex and invariant along the all-ones direction, so the Newton
    system is solved in the least-squares sense. Armijo backtracking guarantees descent.
    """
    v = np.zeros(A.shape[1]) if v0 is None else np.array(v0, dtype=np.float64)
    base = log_p + r

    def f_and_q(v):
        x = base + A @ v
        lse = _lse(x)
        return c @ v + lse, np.exp(x - lse)

    f, q = f_and_q(v)
    for it in range(max_iter):
        g = c + A.T @ q
        gnorm = float(np.abs(g).max())
        if gnorm <= tolerance:
            return DualSolution(v, q, float(f), gnorm, it)
        Aq = A.T @ q
        H = (A.T * q) @ A - np.outer(Aq, Aq)
        step = np.linalg.lstsq(H + 1e-12 * np.eye(H.shape[0]), -g, rcond=1e-12)[0]
        slope = g @ step
        if not slope < 0:  # fall back to steepest descent
            step, slope = -g, -(g @ g)
        t = 1.0
        while True:
            f_new, q_new = f_and_q(v + t * step)
            if f_new <= f + 1e-4 * t * slope or t < 1e-12:
                break
            t *= 0.5
        if t < 1e-12:
            break
        v, f, q = v + t * step, f_new, q_new
    g = c + A.T @ q
    return DualSolution(v, q, float(f), float(np.abs(g).max()), max_iter)


@dataclass
class RegularizedSolution:
    v: np.ndarray
    d: np.ndarray  # optimal occupancy [S, A]
    eta: np.ndarray  # d / d_O
    dual_value: float
    primal_value: float
    grad_norm: float


def exact_regularized_solve(mdp: TabularMdp, rewards: np.ndarray, d_O: np.ndarray, tolerance: float = 1e-8) -> RegularizedSolution:
    """max_d <d, R> - KL(d || d_O) over occupancies of the MDP, solved through its dual in V."""
    S, A = mdp.num_states, mdp.num_actions
    R = np.broadcast_to(np.asarray(rewards, dtype=np.float64).reshape(S, -1), (S, A)) if np.ndim(rewards) == 1 else np.asarray(rewards, dtype=np.float64)
    d_O = np.asarray(d_O, dtype=np.float64)
    if np.any(d_O <= 0):
        bad = np.argwhere(d_O <= 0)[0]
        raise ValidationError(f"d_O must have full support; zero at (s, a) = {tuple(int(x) for x in bad)}")
    d_O = d_O / d_O.sum()
    sel = np.repeat(np.eye(S), A, axis=0)  # row (s, a) -> e_s
    Amat = mdp.gamma * mdp.transitions.reshape(S * A, S) - sel
    sol = solve_dual((1.0 - mdp.gamma) * mdp.rho0, np.log(d_O.ravel()), R.ravel(), Amat, tolerance, max_iter=500)
    d = sol.weights.reshape(S, A)
    eta = d / d_O
    primal = float(np.sum(d * R) - exact_kl(d, d_O))
    return RegularizedSolution(sol.v, d, eta, sol.dual_value, primal, sol.grad_norm)


def exact_kl(d1, d2) -> float:
    """sum d1 log(d1 / d2) with 0 log 0 := 0."""
    d1 = np.ravel(np.asarray(d1, dtype=np.float64))
    d2 = np.ravel(np.asarray(d2, dtype=np.float64))
    bad = np.flatnonzero((d1 > 0) & (d2 <= 0))
    if bad.size:
        raise ValidationError(f"support of d1 not contained in support of d2 at index {int(bad[0])}")
    pos = d1 > 0
    return float(np.sum(d1[pos] * (np.log(d1[pos]) - np.log(d2[pos]))))


def relaxed_bound_exact(d_i, d_E, d_O) -> float:
    """-E_{d_i(s)}[log d_E(s)/d_O(s)] + KL(d_i(S,A) || d_O(S,A)); d_E is a state distribution."""
    d_i = np.asarray(d_i, dtype=np.float64)
    d_O = np.asarray(d_O, dtype=np.float64)
    d_E = np.ravel(np.asarray(d_E, dtype=np.float64))
    di_s, dO_s = d_i.sum(1), d_O.sum(1)
    pos = di_s > 0
    if np.any(pos & ((d_E <= 0) | (dO_s <= 0))):
        bad = int(np.flatnonzero(pos & ((d_E <= 0) | (dO_s <= 0)))[0])
        raise ValidationError(f"d_i visits state {bad} outside the support of d_E or d_O")
    log_ratio = np.log(d_E[pos]) - np.log(dO_s[pos])
    return float(-(di_s[pos] @ log_ratio) + exact_kl(d_i, d_O))


def finite_difference(f, x, h: float = 1e-5) -> np.ndarray:
    """Central differences (f(x + h e_j) - f(x - h e_j)) / 2h."""
    if h <= 0:
        raise ValidationError("h must be positive")
    x = np.asarray(x, dtype=np.float64)
    grad = np.empty_like(x)
    flat = x.ravel()
    g = grad.ravel()
    for j in range(flat.size):
        xp, xm = flat.copy(), flat.copy()
        xp[j] += h
        xm[j] -= h
        g[j] = (f(xp.reshape(x.shape)) - f(xm.reshape(x.shape))) / (2.0 * h)
    return grad


def flow_residual(mdp: TabularMdp, d) -> float:
    return bellman_flow_residual(mdp, d)


def dataset_dual_problem(dataset, rewards, gamma: float, mode: str = "sampled", mdp: TabularMdp | None = None, num_states: int | None = None):
    """Aggregate dataset records into the (c, log_p, r, A) form used by solve_dual."""
    S = num_states or dataset.meta.get("num_states")
    rewards = np.asarray(rewards, dtype=np.float64)
    if mode == "sampled":
        second = dataset.next_states
    elif mode == "exact":
        if mdp is None:
            raise ValidationError("exact TD mode needs the MDP")
        second = dataset.actions
    else:
        raise ValidationError(f"unknown TD mode {mode!r}")
    # records sharing (s, s') or (s, a) and the reward have identical TD errors
    _, reward_id = np.unique(rewards, return_inverse=True)
    keys = np.column_stack([dataset.states, second, reward_id.ravel()])
    _, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    J = inverse.max() + 1
    counts = np.bincount(inverse, minlength=J)
    first = np.zeros(J, dtype=np.int64)
    first[inverse[::-1]] = np.arange(len(dataset))[::-1]
    s = dataset.states[first]
    A = np.zeros((J, S))
    A[np.arange(J), s] -= 1.0
    if mode == "sampled":
        A[np.arange(J), dataset.next_states[first]] += gamma
    else:
        A += gamma * mdp.transitions[s, dataset.actions[first]]
    init = dataset.initial_states
    c = (1.0 - gamma) * np.bincount(init, minlength=S) / init.size
    return c, np.log(counts / len(dataset)), rewards[first], A, inverse


def solve_dataset_dual(dataset, rewards, gamma, mode="sampled", mdp=None, tolerance=1e-8, max_iter=100, v0=None, num_states=None):
    """Exact minimizer of the full-dataset dual; returns (v, per-record softmax weights)."""
    c, log_p, r, A, inverse = dataset_dual_problem(dataset, rewards, gamma, mode, mdp, num_states)
    sol = solve_dual(c, log_p, r, A, tolerance, max_iter, v0)
    counts = np.exp(log_p) * len(dataset)
    w = sol.weights[inverse] / counts[inverse]
    return sol.v, w / w.sum(), sol


def sample_occupancy_dataset(mdp: TabularMdp, d: np.ndarray, size: int, seed) -> OfflineDataset:
    """`size` i.i.d. records (s, a) ~ d, s' ~ P(.|s, a).

    Only the first record carries the initial flag; the estimators checked against the
    oracle never read it.
    """
    rng = np.random.default_rng(seed)
    S, A = mdp.num_states, mdp.num_actions
    flat = np.asarray(d, dtype=np.float64).ravel()
    idx = rng.choice(S * A, size=size, p=flat / flat.sum())
    s, a = np.divmod(idx, A)
    u = rng.random((size, 1))
    nxt = np.minimum((u > np.cumsum(mdp.transitions[s, a], axis=1)).sum(1), S - 1)
    init = np.zeros(size, dtype=np.int64)
    init[0] = 1
    meta = {"num_states": S, "num_actions": A, "gamma": mdp.gamma, "seed": int(np.ravel(seed)[0]), "generator": "iid-occupancy"}
    return OfflineDataset(s, a, nxt, init, meta)
