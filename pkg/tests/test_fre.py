import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualforce.fre import (
    FreConfig,
    FreModel,
    RewardFunction,
    _training_batch,
    decode,
    encode,
    fre_loss_and_grads,
    generate_reward_family,
    heldout_decode_errors,
    mean_embedding,
    pool_standardized,
    pretrain_fre,
    sample_subsets,
)
from dualforce.mdp import FeatureMap, ValidationError

GRID = FeatureMap.grid_coordinates(8, 8).normalized()


@pytest.fixture(scope="module")
def trained():
    cfg = FreConfig(subset_size=24, decode_size=24, steps=800, counts={"linear": 8, "mlp": 8, "engineered": 6})
    rewards = generate_reward_family(cfg, 0, GRID, (8, 8))
    return pretrain_fre(np.arange(64), rewards, cfg, 0, GRID), rewards


def _model(seed=0, **kw):
    return FreModel(GRID.table, FreConfig(**kw), np.random.default_rng(seed))


def test_reward_family_examples():
    one = generate_reward_family(FreConfig(counts={"linear": 0, "mlp": 0, "engineered": 1}), 3, GRID, (8, 8))
    assert len(one) == 1 and one[0].family == "engineered"
    cfg = FreConfig(counts={"linear": 3, "mlp": 3, "engineered": 3})
    a, b = generate_reward_family(cfg, 5, GRID, (8, 8)), generate_reward_family(cfg, 5, GRID, (8, 8))
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.table, y.table)
    lin = generate_reward_family(FreConfig(counts={"linear": 2}), 0, FeatureMap.one_hot(6))
    for r in lin:
        np.testing.assert_array_equal(r.table, r.params["weights"])
    with pytest.raises(ValidationError):
        generate_reward_family(FreConfig(counts={"quadratic": 1}), 0, GRID)


def test_engineered_kinds_and_serialization():
    rewards = generate_reward_family(FreConfig(counts={"engineered": 6}), 1, GRID, (8, 8))
    assert [r.params["kind"] for r in rewards] == ["goal", "corridor", "direction"] * 2
    assert rewards[0].table.sum() == 1.0
    back = RewardFunction.from_json(json.loads(json.dumps(rewards[2].to_json())))
    np.testing.assert_array_equal(back.table, rewards[2].table)
    assert all(np.all(np.isfinite(r.table)) for r in rewards)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_encode_is_permutation_and_duplication_invariant(seed):
    fre = _model()
    rng = np.random.default_rng(seed)
    s = rng.choice(64, size=20, replace=False)
    v = rng.normal(size=20)
    z = encode(fre, s, v)
    perm = rng.permutation(20)
    np.testing.assert_array_equal(encode(fre, s[perm], v[perm]), z)
    np.testing.assert_array_equal(encode(fre, np.tile(s, 3), np.tile(v, 3)), z)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), a=st.floats(0.01, 100), b=st.floats(-50, 50))
def test_encode_ignores_affine_reward_changes(seed, a, b):
    fre = _model()
    rng = np.random.default_rng(seed)
    s = rng.choice(64, size=16, replace=False)
    v = rng.normal(size=16)
    np.testing.assert_allclose(encode(fre, s, a * v + b), encode(fre, s, v), atol=1e-9)


def test_encode_rejects_empty_set():
    with pytest.raises(ValidationError):
        encode(_model(), [], [])


def test_decode_is_deterministic_and_finite():
    fre = _model()
    z = np.random.default_rng(0).normal(size=8) * 10
    assert decode(fre, z, 5) == decode(fre, z, 5)
    assert np.all(np.isfinite(decode(fre, z, np.arange(64))))


def test_loss_gradients_match_finite_differences():
    cfg = FreConfig(latent_dim=4, hidden=8, subset_size=6, decode_size=5, batch_rewards=3)
    rng = np.random.default_rng(0)
    fre = FreModel(GRID.table, cfg, rng)
    rewards = generate_reward_family(FreConfig(counts={"linear": 2, "mlp": 2, "engineered": 3}), 0, GRID, (8, 8))
    tables = np.stack([r.table for r in rewards])
    pool = np.arange(64)
    batch = _training_batch(tables, pool_standardized(tables, pool), pool, np.array([0, 3, 5]), rng, 6, 5)
    noise = rng.normal(size=(3, 4))
    _, grads = fre_loss_and_grads(fre, *batch, noise, 0.1)
    for p, g in zip(fre.parameters, grads):
        for k in range(min(p.size, 5)):
            i = np.unravel_index(k, p.shape)
            old = p[i]
            p[i] = old + 1e-6
            lp, _ = fre_loss_and_grads(fre, *batch, noise, 0.1)
            p[i] = old - 1e-6
            lm, _ = fre_loss_and_grads(fre, *batch, noise, 0.1)
            p[i] = old
            fd = (lp - lm) / 2e-6
            assert abs(fd - g[i]) <= 1e-5 * max(1.0, abs(fd))


def test_pretrain_errors_and_finite_loss():
    with pytest.raises(ValidationError):
        pretrain_fre(np.arange(64), [], FreConfig(), 0, GRID)
    rewards = generate_reward_family(FreConfig(counts={"linear": 2}), 0, GRID)
    fre = pretrain_fre(np.arange(64), rewards, FreConfig(steps=20, subset_size=8, decode_size=8), 0, GRID)
    assert len(fre.loss_history) == 20 and np.all(np.isfinite(fre.loss_history))


def test_pretrain_is_seed_deterministic():
    rewards = generate_reward_family(FreConfig(counts={"linear": 2, "mlp": 1}), 0, GRID)
    cfg = FreConfig(steps=30, subset_size=8, decode_size=8, hidden=16)
    a = pretrain_fre(np.arange(64), rewards, cfg, 4, GRID)
    b = pretrain_fre(np.arange(64), rewards, cfg, 4, GRID)
    assert a.fingerprint() == b.fingerprint()
    back = FreModel.from_json(json.loads(json.dumps(a.to_json())))
    assert back.fingerprint() == a.fingerprint()


def test_single_reward_overfit_without_bottleneck():
    # a pre-standardized reward, so decoded values are directly comparable to the raw table
    feats = FeatureMap.grid_coordinates(4, 4).normalized()
    table = np.sin(3 * feats.table[:, 0]) + feats.table[:, 1] ** 2
    table = (table - table.mean()) / table.std()
    reward = RewardFunction("engineered", {"kind": "fixed"}, table)
    cfg = FreConfig(beta_kl=0.0, subset_size=16, decode_size=16, steps=3000, hidden=32, batch_rewards=4, learning_rate=3e-3)
    fre = pretrain_fre(np.arange(16), [reward], cfg, 0, feats)
    z = encode(fre, np.arange(16), table)
    pred = decode(fre, z, np.arange(16))
    assert np.mean((pred - table) ** 2) < 1e-3
    assert np.abs(pred - table).max() <= 0.05


def test_trained_model_separates_engineered_rewards(trained):
    fre, _ = trained
    a, b = generate_reward_family(FreConfig(counts={"engineered": 2}), 9, GRID, (8, 8))
    za = mean_embedding(fre, a, np.arange(64), 8, 24, 0)
    zb = mean_embedding(fre, b, np.arange(64), 8, 24, 0)
    assert np.linalg.norm(za - zb) >= 1e-3


def test_trained_model_beats_mean_baseline_on_training_family(trained):
    fre, rewards = trained
    errs = heldout_decode_errors(fre, rewards, np.arange(64), seed=3)
    assert np.mean([m < b for m, b in errs]) >= 0.9


def test_mean_embedding_contract(trained):
    fre, rewards = trained
    pool = np.arange(64)
    z1 = mean_embedding(fre, rewards[0], pool, 1, 24, 7)
    subset = sample_subsets(pool, 1, 24, np.random.default_rng(7))[0]
    np.testing.assert_allclose(z1, encode(fre, subset, rewards[0].table[subset]), atol=1e-12)
    np.testing.assert_array_equal(mean_embedding(fre, rewards[1], pool, 8, 24, 3), mean_embedding(fre, rewards[1], pool, 8, 24, 3))
    with pytest.raises(ValidationError):
        mean_embedding(fre, rewards[0], np.arange(10), 2, 24, 0)
    with pytest.raises(ValidationError):
        mean_embedding(fre, rewards[0], pool, 0, 24, 0)


def test_mean_embedding_variance_shrinks_with_m(trained):
    fre, rewards = trained
    pool = np.arange(64)

    def var(m):
        zs = np.stack([mean_embedding(fre, rewards[4], pool, m, 24, s) for s in range(50)])
        return zs.var(axis=0).mean()

    assert var(16) < var(1)
