import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import estimator_errors, occupancy, random_instance
from dualforce.dice import TabularValue, dual_objective, value_gradient_step
from dualforce.mdp import ValidationError, generate_offline_dataset
from dualforce.oracle import (
    exact_kl,
    exact_regularized_solve,
    finite_difference,
    flow_residual,
    relaxed_bound_exact,
    sample_occupancy_dataset,
    solve_dataset_dual,
)


@pytest.mark.parametrize("seed", range(5))
def test_strong_duality_and_feasibility(seed):
    mdp, behavior, _ = random_instance(seed)
    d_O = occupancy(mdp, behavior)
    R = np.random.default_rng(seed).uniform(-1, 1, size=(10, 3))
    sol = exact_regularized_solve(mdp, R, d_O, tolerance=1e-6)
    assert sol.grad_norm <= 1e-6
    assert abs(sol.dual_value - sol.primal_value) <= 1e-3
    assert flow_residual(mdp, sol.d) <= 1e-4
    assert abs(np.sum(d_O * sol.eta) - 1.0) <= 1e-6


def test_zero_reward_on_feasible_d_O_returns_d_O():
    mdp, behavior, _ = random_instance(7)
    d_O = occupancy(mdp, behavior)
    sol = exact_regularized_solve(mdp, np.zeros((10, 3)), d_O, tolerance=1e-10)
    np.testing.assert_allclose(sol.d, d_O, atol=1e-8)
    np.testing.assert_allclose(sol.eta, 1.0, atol=1e-6)
    assert exact_kl(sol.d, d_O) <= 1e-10


def test_state_rewards_broadcast_over_actions():
    mdp, behavior, _ = random_instance(8)
    d_O = occupancy(mdp, behavior)
    r = np.linspace(-1, 1, 10)
    a = exact_regularized_solve(mdp, r, d_O)
    b = exact_regularized_solve(mdp, np.repeat(r[:, None], 3, axis=1), d_O)
    np.testing.assert_allclose(a.d, b.d, atol=1e-12)


def test_solve_rejects_zero_support():
    mdp, behavior, _ = random_instance(0)
    d_O = occupancy(mdp, behavior)
    d_O[4, 1] = 0.0
    with pytest.raises(ValidationError, match=r"\(4, 1\)"):
        exact_regularized_solve(mdp, np.zeros((10, 3)), d_O)


def test_kl_examples():
    d = np.array([0.2, 0.3, 0.5])
    assert exact_kl(d, d) == 0.0
    assert exact_kl([1.0, 0.0], [0.5, 0.5]) == pytest.approx(np.log(2), abs=1e-15)
    with pytest.raises(ValidationError, match="index 1"):
        exact_kl([0.5, 0.5], [1.0, 0.0])


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_kl_chain_rule(seed):
    rng = np.random.default_rng(seed)
    d1, d2 = rng.dirichlet(np.ones(12)).reshape(4, 3), rng.dirichlet(np.ones(12)).reshape(4, 3)
    s1, s2 = d1.sum(1), d2.sum(1)
    pi1, pi2 = d1 / s1[:, None], d2 / s2[:, None]
    cond = sum(s1[s] * exact_kl(pi1[s], pi2[s]) for s in range(4))
    assert abs(exact_kl(d1, d2) - (exact_kl(s1, s2) + cond)) <= 1e-9


def test_relaxed_bound_vanishes_at_d_O():
    d_O = np.random.default_rng(0).dirichlet(np.ones(15)).reshape(5, 3)
    assert relaxed_bound_exact(d_O, d_O.sum(1), d_O) == pytest.approx(0.0, abs=1e-15)


def test_relaxed_bound_support_error():
    d_O = np.full((2, 2), 0.25)
    with pytest.raises(ValidationError, match="state 1"):
        relaxed_bound_exact(d_O, np.array([1.0, 0.0]), d_O)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 100_000))
def test_relaxed_bound_upper_bounds_state_kl(seed):
    rng = np.random.default_rng(seed)
    S, A = rng.integers(2, 8), rng.integers(1, 4)
    d_i = rng.dirichlet(np.ones(S * A)).reshape(S, A)
    d_O = rng.dirichlet(np.ones(S * A)).reshape(S, A)
    d_E = rng.dirichlet(np.ones(S))
    assert relaxed_bound_exact(d_i, d_E, d_O) >= exact_kl(d_i.sum(1), d_E) - 1e-9


def test_finite_difference_examples():
    x = np.array([0.3, -1.2, 2.0])
    np.testing.assert_allclose(finite_difference(lambda v: 0.5 * v @ v, x), x, atol=1e-8)
    np.testing.assert_array_equal(finite_difference(lambda v: 3.0, x), np.zeros(3))
    with pytest.raises(ValidationError):
        finite_difference(lambda v: 0.0, x, h=0.0)


@pytest.mark.parametrize("mode", ["sampled", "exact"])
def test_dataset_dual_solver_reaches_the_minimum(mode):
    mdp, behavior, _ = random_instance(9)
    data = generate_offline_dataset(mdp, [(behavior, 1.0)], 40, 20, seed=1)
    R = np.random.default_rng(2).uniform(-1, 1, len(data))
    v, w, sol = solve_dataset_dual(data, R, mdp.gamma, mode, mdp, tolerance=1e-10)
    assert sol.grad_norm <= 1e-10
    assert abs(w.sum() - 1.0) <= 1e-12 and len(w) == len(data)
    best = dual_objective(TabularValue(v), R, data, mdp.gamma, mode=mode, mdp=mdp)
    assert best == pytest.approx(sol.dual_value, abs=1e-10)
    # plain gradient descent from zero never undercuts the Newton optimum
    V = TabularValue.zeros(10)
    for _ in range(300):
        V = value_gradient_step(V, R, None, mdp.gamma, learning_rate=0.5, mode=mode, dataset=data, mdp=mdp)
    assert dual_objective(V, R, data, mdp.gamma, mode=mode, mdp=mdp) >= best - 1e-12


def test_iid_sampler_matches_occupancy():
    mdp, behavior, _ = random_instance(10)
    d_O = occupancy(mdp, behavior)
    data = sample_occupancy_dataset(mdp, d_O, 50_000, 0)
    freq = np.bincount(data.states * 3 + data.actions, minlength=30).reshape(10, 3) / len(data)
    assert np.abs(freq - d_O).sum() <= 0.03
    assert int(data.is_initial.sum()) == 1


def test_estimators_converge_in_median():
    sizes = (100, 1000, 10_000)
    med = np.array([np.median([estimator_errors(seed, n) for seed in range(5)], axis=0) for n in sizes])
    assert np.all(np.diff(med, axis=0) < 0)
