import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualforce.lagrange import MU_CLIP, Multipliers, combined_reward, multiplier_step, sigmoid


def test_combined_reward_examples():
    assert combined_reward(3.0, -2.0, 0.0) == pytest.approx(0.5)
    assert combined_reward(3.0, -2.0, 40.0) == pytest.approx(-2.0, abs=1e-12)
    for mu in (-10.0, -1.0, 0.0, 2.5, 10.0):
        assert combined_reward(0.7, 0.7, mu) == pytest.approx(0.7, abs=1e-15)


@settings(max_examples=50, deadline=None)
@given(mu=st.floats(-10, 10), b1=st.floats(-5, 5), b2=st.floats(-5, 5), lo=st.floats(-9, 9), a=st.floats(-3, 3))
def test_combined_reward_is_affine(mu, b1, b2, lo, a):
    lhs = combined_reward(a * b1 + b2, lo, mu)
    rhs = a * combined_reward(b1, lo, mu) + combined_reward(b2, lo, mu) - a * combined_reward(0.0, lo, mu)
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(a) * 10)


def test_multiplier_step_signs():
    m = Multipliers(np.array([0.3, 0.3, 0.3]))
    new = multiplier_step(m, np.array([1.0, 2.0, 0.0]), epsilon=1.0, learning_rate=0.1)
    assert new.mu[0] == m.mu[0]
    assert new.mu[1] > m.mu[1]
    assert new.mu[2] < m.mu[2]


def test_sigma_monotone_until_clip():
    m = Multipliers.zeros(1)
    up = [m.sigma[0]]
    for _ in range(5000):
        m = multiplier_step(m, [2.0], 1.0, 50.0)
        up.append(m.sigma[0])
        if m.mu[0] == MU_CLIP:
            break
    assert m.mu[0] == MU_CLIP
    assert np.all(np.diff(up) > 0)
    down = [m.sigma[0]]
    for _ in range(5000):
        m = multiplier_step(m, [0.0], 1.0, 50.0)
        down.append(m.sigma[0])
        if m.mu[0] == -MU_CLIP:
            break
    assert m.mu[0] == -MU_CLIP
    assert np.all(np.diff(down) < 0)


@settings(max_examples=50, deadline=None)
@given(mu=st.floats(-1e6, 1e6), phi=st.floats(-100, 100), lr=st.floats(0, 100))
def test_multipliers_stay_bounded(mu, phi, lr):
    m = multiplier_step(Multipliers(np.array([mu])), [phi], 1.0, lr)
    assert abs(m.mu[0]) <= MU_CLIP
    s = m.sigma[0]
    assert 0 < s < 1 and s * (1 - s) > 4.5e-5


def test_sigmoid_and_validation():
    assert sigmoid(0.0) == 0.5
    with pytest.raises(ValueError):
        Multipliers(np.array([np.nan]))
