import numpy as np
import pytest

from dualforce.mdp import TabularMdp, TabularPolicy, exact_occupancy, generate_offline_dataset
from dualforce.scenarios import random_mdp, random_policy


def one_state_mdp(gamma=0.9):
    return TabularMdp(np.ones((1, 1, 1)), np.ones(1), gamma)


def chain_mdp(gamma=0.5):
    P = np.zeros((2, 1, 2))
    P[0, 0, 1] = 1.0
    P[1, 0, 1] = 1.0
    return TabularMdp(P, np.array([1.0, 0.0]), gamma)


def random_instance(seed, S=10, A=3, gamma=0.9):
    """Random MDP with an expert policy and an eps-smoothed behaviour policy (full-support d_O)."""
    rng = np.random.default_rng(seed)
    mdp = random_mdp(S, A, gamma, rng)
    behavior = random_policy(S, A, rng, smoothing=0.05)
    expert = random_policy(S, A, rng, smoothing=0.05)
    return mdp, behavior, expert


@pytest.fixture
def chain():
    return chain_mdp()


@pytest.fixture
def small_dataset():
    mdp, behavior, _ = random_instance(3, S=6, A=2)
    return mdp, generate_offline_dataset(mdp, [(behavior, 1.0)], episodes=40, horizon=20, seed=3)


def occupancy(mdp, policy):
    return exact_occupancy(mdp, policy if isinstance(policy, TabularPolicy) else TabularPolicy(policy))


def estimator_instance(seed, S=10, A=3):
    """Oracle-solved tabular instance: (mdp, d_O, d_E state marginal, d_star, V_star, R, f, features)."""
    from dualforce.oracle import exact_regularized_solve

    mdp, behavior, expert = random_instance(seed, S, A)
    rng = np.random.default_rng([seed, 77])
    d_O = exact_occupancy(mdp, behavior)
    d_E = exact_occupancy(mdp, expert).sum(1)
    R = rng.uniform(-1, 1, size=(S, A))
    sol = exact_regularized_solve(mdp, R, d_O, tolerance=1e-10)
    f = rng.uniform(0, 1, size=(S, A))
    features = rng.uniform(0, 1, size=(S, 2))
    return mdp, d_O, d_E, sol.d, sol.v, R, f, features


def estimator_errors(seed, size, sample_seed=0):
    """Absolute errors of (kl_constraint_estimate, importance_estimate, successor_features L-inf)
    computed from a dataset of `size` i.i.d. draws from d_O, against the oracle."""
    from dualforce.dice import TabularValue, kl_constraint_estimate, importance_estimate, softmax_weights, td_errors
    from dualforce.diversity import successor_features
    from dualforce.oracle import relaxed_bound_exact, sample_occupancy_dataset

    mdp, d_O, d_E, d_star, v_star, R, f, features = estimator_instance(seed)
    data = sample_occupancy_dataset(mdp, d_O, size, [seed, sample_seed, size])
    s, a = data.states, data.actions
    delta = td_errors(TabularValue(v_star), R[s, a], data, mdp.gamma, mode="exact", mdp=mdp)
    w = softmax_weights(delta)
    lo = np.log(d_E) - np.log(d_O.sum(1))
    phi_err = abs(kl_constraint_estimate(w, lo[s]) - relaxed_bound_exact(d_star, d_E, d_O))
    imp_err = abs(importance_estimate(w, f[s, a]) - float(np.sum(d_star * f)))
    sf_err = float(np.abs(successor_features(w, features[s]) - d_star.sum(1) @ features).max())
    return phi_err, imp_err, sf_err


# one line per acceptance criterion, printed after the run (see test_acceptance.py)
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
