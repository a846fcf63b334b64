import numpy as np
import pytest

from conftest import random_instance
from dualforce import dice
from dualforce.discriminator import fit_discriminator
from dualforce.fre import FreConfig, generate_reward_family, pretrain_fre
from dualforce.mdp import ExpertDataset, FeatureMap, ValidationError, generate_offline_dataset, sample_expert_states
from dualforce.oracle import solve_dataset_dual
from dualforce.scenarios import build_scenario
from dualforce.skills import new_bank
from dualforce.trainer import METRIC_COLUMNS, TrainerConfig, dual_force_train, feature_diameter, smodice_baseline_train


@pytest.fixture(scope="module")
def tabular():
    mdp, behavior, expert = random_instance(0)
    off = generate_offline_dataset(mdp, [(behavior, 0.8), (expert, 0.2)], 60, 20, seed=0)
    states, _ = sample_expert_states(mdp, expert, 500, 20, seed=1)
    exp = ExpertDataset(states)
    return mdp, off, exp, fit_discriminator(exp, off), FeatureMap.one_hot(10)


@pytest.fixture(scope="module")
def grid():
    sc = build_scenario("grid8-corridors")
    off, exp = sc.generate(60, 300, 0)
    unit = sc.features.normalized()
    cfg = FreConfig(subset_size=16, decode_size=16, steps=150, hidden=16, counts={"linear": 4, "mlp": 4, "engineered": 3})
    fre = pretrain_fre(off.states, generate_reward_family(cfg, 0, unit, sc.grid_shape), cfg, 0, unit)
    return sc, off, exp, fit_discriminator(exp, off), fre


def _amortized(grid, **kw):
    sc, off, exp, disc, fre = grid
    cfg = TrainerConfig(**{"n": 3, "t": 16, "m": 2, "hidden": 16, "batch_size": 64, "max_iterations": 30, **kw})
    return dual_force_train(cfg, off, exp, disc, fre, 0, sc.features)


def test_config_validation(tabular):
    mdp, off, exp, disc, feats = tabular
    for bad in ({"n": 0}, {"ell0": 0.0}, {"epsilon": -0.5}, {"alpha": 2.0}, {"mode": "fast"}, {"mu_lr": -1.0}):
        with pytest.raises(ValidationError):
            dual_force_train(TrainerConfig(**{"mode": "exact", **bad}), off, exp, disc, None, 0, feats, mdp=mdp)
    with pytest.raises(ValidationError):
        dual_force_train(TrainerConfig(max_iterations=1), off, exp, disc, None, 0, feats)
    with pytest.raises(ValidationError):
        dual_force_train(TrainerConfig(mode="exact", td_mode="exact"), off, exp, disc, None, 0, feats)


def test_zero_iterations_returns_initial_bank(tabular):
    mdp, off, exp, disc, feats = tabular
    bank, log = dual_force_train(TrainerConfig(mode="exact", max_iterations=0), off, exp, disc, None, 3, feats, mdp=mdp)
    fresh = new_bank(3, len(off), 10, 3, 3, {}, tabular=True)
    assert [bank.slot_hash(i) for i in range(3)] == [fresh.slot_hash(i) for i in range(3)]
    assert log.rows == [] and log.to_csv() == ",".join(METRIC_COLUMNS) + "\n"
    assert all(s.history == [] for s in bank.slots)


def test_single_skill_has_no_diversity_term(tabular):
    mdp, off, exp, disc, feats = tabular
    bank, log = dual_force_train(TrainerConfig(n=1, mode="exact", max_iterations=5), off, exp, disc, None, 0, feats, mdp=mdp)
    assert np.all(np.isnan(log.column("vdw_obj"))) and np.all(np.isnan(log.column("ell")))
    assert ",," in log.to_csv().splitlines()[1]


def test_exact_mode_weights_converge_with_fixed_sigma(tabular):
    mdp, off, exp, disc, feats = tabular
    sizes = []
    cfg = TrainerConfig(n=2, mode="exact", td_mode="exact", max_iterations=500, tol=0.0)
    bank, log = dual_force_train(cfg, off, exp, disc, None, 0, feats, mdp=mdp, fixed_sigma=True,
                                 callback=lambda k, b, lg: sizes.append({len(s.w) for s in b.slots}))
    assert sizes == [{len(off)}] * 500
    deltas = np.asarray(log.weight_deltas)
    assert deltas[-1] < 1e-3
    first = int(np.argmax(deltas < 1e-3))
    assert np.all(deltas[first:] < 1e-3)
    # the fixed point is the imitation-only dual solution
    _, w_star, _ = solve_dataset_dual(off, disc.log_odds_table()[off.states], mdp.gamma, "exact", mdp)
    for s in bank.slots:
        assert np.abs(s.w - w_star).sum() < 1e-3


def test_weights_stay_on_simplex(tabular):
    mdp, off, exp, disc, feats = tabular

    def check(k, bank, log):
        for s in bank.slots:
            assert s.w.shape == (len(off),)
            assert np.all(s.w >= 0) and abs(s.w.sum() - 1) <= 1e-8

    dual_force_train(TrainerConfig(mode="exact", max_iterations=40), off, exp, disc, None, 1, feats, mdp=mdp, callback=check)


def test_snapshot_and_log_layout(tabular):
    mdp, off, exp, disc, feats = tabular
    bank, log = dual_force_train(TrainerConfig(mode="exact", max_iterations=7), off, exp, disc, None, 0, feats, mdp=mdp)
    assert len(log.rows) == 7 * 3
    np.testing.assert_array_equal(log.column("snapshot"), log.column("k"))
    assert [len(s.history) for s in bank.slots] == [7, 7, 7]
    # one VdW value per iteration, shared by all skills
    vdw = log.column("vdw_obj").reshape(7, 3)
    assert np.all(vdw == vdw[:, :1])


def test_stopping_rule(tabular):
    mdp, off, exp, disc, feats = tabular
    cfg = TrainerConfig(n=1, mode="exact", max_iterations=3000, tol=1e-6, patience=50)
    _, log = smodice_baseline_train(cfg, off, exp, disc, 0, feats, mdp=mdp)
    assert log.stopped_early and len(log.rows) < 3000


def test_smodice_value_phase_sees_log_odds(grid, monkeypatch):
    sc, off, exp, disc, fre = grid
    seen = []
    real = dice.value_gradient_step

    def spy(V, rewards, *args, **kw):
        seen.append(np.array(rewards))
        return real(V, rewards, *args, **kw)

    monkeypatch.setattr(dice, "value_gradient_step", spy)
    cfg = TrainerConfig(t=16, m=2, hidden=16, batch_size=64, max_iterations=5)
    bank, log = smodice_baseline_train(cfg, off, exp, disc, 0, sc.features, fre=fre)
    lo = disc.log_odds_table()[off.states]
    assert len(seen) == 5 and all(np.array_equal(r, lo) for r in seen)
    assert bank.n == 1 and np.all(log.column("sigma_mu") == 1.0)


def test_amortized_run_is_deterministic(grid):
    a_bank, a_log = _amortized(grid)
    b_bank, b_log = _amortized(grid)
    assert a_log.to_csv() == b_log.to_csv()
    assert [a_bank.slot_hash(i) for i in range(3)] == [b_bank.slot_hash(i) for i in range(3)]
    c_bank, _ = _amortized(grid, mu_lr=0.5)
    assert c_bank.slot_hash(0) != a_bank.slot_hash(0)


def test_amortized_run_records_embeddings_and_freezes_fre(grid):
    sc, off, exp, disc, fre = grid
    before = fre.fingerprint()
    bank, log = _amortized(grid)
    assert fre.fingerprint() == before
    z = [h.z for h in bank.slots[0].history]
    assert len(z) == 30 and all(v.shape == (fre.latent_dim,) for v in z)
    assert np.all(np.isfinite(log.column("phi")))
    assert feature_diameter(sc.features, off.states) > 0

