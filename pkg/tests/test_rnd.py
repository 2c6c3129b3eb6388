"""Random-distillation reward: input layout, reward formula, training."""

import numpy as np
import pytest

from lepus import rnd
from lepus.nets import Layer, Mlp, ShapeError
from lepus.rnd import (RndModel, build_rnd, calibrate_v, disagreement,
                       combined_reward, fit_normalization, load_rnd,
                       rd_joint_reward, save_rnd, train_distillation)


def constant_net(in_dim, value):
    return Mlp([Layer(np.zeros((1, in_dim)), np.array([float(value)]),
                      "identity")])


def identity_stats(model):
    model.norm_mean = np.zeros(model.input_dim)
    model.norm_std = np.ones(model.input_dim)


# ---------------------------------------------------------------------------
# construction and input layout


def test_input_dim_three_agents():
    model = build_rnd(3, 65)
    assert model.input_dim == 3 * (65 + 3) == 204
    assert model.random_net.in_dim == 204
    assert model.distill_net.in_dim == 204


def test_joint_input_interleaves_agents():
    model = build_rnd(2, 4, seed=0)
    S = np.array([[1, 2, 3, 4], [5, 6, 7, 8]], dtype=float)
    A = np.array([[9, 10, 11], [12, 13, 14]], dtype=float)
    x = rnd._joint_input(model, S, A)
    assert np.array_equal(x, [1, 2, 3, 4, 9, 10, 11, 5, 6, 7, 8, 12, 13, 14])


def test_joint_input_rejects_wrong_shape():
    model = build_rnd(2, 4)
    with pytest.raises(ShapeError):
        rnd._joint_input(model, np.zeros((3, 4)), np.zeros((3, 3)))


def test_build_rnd_validates_args():
    for bad in ((0, 65, 1.0), (3, 0, 1.0), (3, 65, 0.0)):
        with pytest.raises(ValueError):
            build_rnd(*bad)


def test_build_rnd_seeded_determinism():
    a, b = build_rnd(3, 65, seed=5), build_rnd(3, 65, seed=5)
    c = build_rnd(3, 65, seed=6)
    assert a.random_net.digest() == b.random_net.digest()
    assert a.distill_net.digest() == b.distill_net.digest()
    assert a.random_net.digest() != c.random_net.digest()


# ---------------------------------------------------------------------------
# reward formula fixtures


def test_reward_is_one_when_networks_coincide():
    net = constant_net(2 * 7, 3.0)
    model = RndModel(net, net.copy(), v=250000.0, n_agents=2, obs_dim=4)
    identity_stats(model)
    S, A = np.ones((2, 4)), np.ones((2, 3))
    assert rd_joint_reward(model, S, A) == 1.0


def test_reward_half_fixture():
    # random outputs 0, distill outputs 1 -> d=1; v=ln 2 gives exp(-ln2)=0.5
    model = RndModel(constant_net(14, 0.0), constant_net(14, 1.0),
                     v=float(np.log(2.0)), n_agents=2, obs_dim=4)
    identity_stats(model)
    S, A = np.zeros((2, 4)), np.zeros((2, 3))
    assert disagreement(model, S, A)[0] == pytest.approx(1.0)
    assert rd_joint_reward(model, S, A) == pytest.approx(0.5)


def test_reward_monotone_in_disagreement():
    rs = []
    for c in (0.0, 0.5, 1.0, 2.0):
        model = RndModel(constant_net(14, 0.0), constant_net(14, c),
                         v=1.0, n_agents=2, obs_dim=4)
        identity_stats(model)
        rs.append(rd_joint_reward(model, np.zeros((2, 4)), np.zeros((2, 3))))
    assert rs[0] == 1.0
    assert rs == sorted(rs, reverse=True)
    assert all(0 < r <= 1 for r in rs)


def test_reward_sign_symmetric_in_disagreement():
    m_pos = RndModel(constant_net(14, 0.0), constant_net(14, 2.0),
                     v=1.0, n_agents=2, obs_dim=4)
    m_neg = RndModel(constant_net(14, 0.0), constant_net(14, -2.0),
                     v=1.0, n_agents=2, obs_dim=4)
    identity_stats(m_pos)
    identity_stats(m_neg)
    S, A = np.zeros((2, 4)), np.zeros((2, 3))
    assert rd_joint_reward(m_pos, S, A) == rd_joint_reward(m_neg, S, A)


def test_combined_reward_is_product():
    g = np.array([10.0, -5.0, 0.0])
    assert combined_reward(g, 0.5) == pytest.approx([5.0, -2.5, 0.0])


def test_reward_requires_fitted_normalization():
    model = build_rnd(2, 4)
    with pytest.raises(RuntimeError):
        rd_joint_reward(model, np.zeros((2, 4)), np.zeros((2, 3)))


# ---------------------------------------------------------------------------
# training


def test_distillation_reduces_loss(small_dataset):
    model = build_rnd(3, 65, seed=1)
    curve = train_distillation(model, small_dataset, iters=150, minibatch=128,
                               lr=1e-3, seed=2)
    assert len(curve) == 150
    assert np.mean(curve[-10:]) < 0.2 * np.mean(curve[:10])


def test_random_net_frozen_during_training(small_dataset):
    model = build_rnd(3, 65, seed=1)
    before = model.random_net.digest()
    train_distillation(model, small_dataset, iters=20, seed=0)
    assert model.random_net.digest() == before
    # but the distillation net moved
    assert model.distill_net.digest() != build_rnd(3, 65, seed=1).distill_net.digest()


def test_training_rejects_mismatched_dataset(small_dataset):
    model = build_rnd(4, 65)
    with pytest.raises(ShapeError):
        train_distillation(model, small_dataset, iters=1)


def test_normalization_stats_shape_and_floor(small_dataset):
    model = build_rnd(3, 65)
    fit_normalization(model, small_dataset)
    assert model.norm_mean.shape == (204,)
    assert np.all(model.norm_std >= 1e-6)     # padded dims have zero variance


def test_calibrate_v_hits_target_median(small_dataset):
    model = build_rnd(3, 65, seed=3)
    train_distillation(model, small_dataset, iters=100, seed=4)
    calibrate_v(model, small_dataset, target_median_reward=0.9)
    r = rd_joint_reward(model, small_dataset.states, small_dataset.actions)
    assert np.median(r) == pytest.approx(0.9, abs=1e-6)


def test_training_seed_determinism(small_dataset):
    def run():
        model = build_rnd(3, 65, seed=1)
        train_distillation(model, small_dataset, iters=15, seed=7)
        return model.distill_net.digest()

    assert run() == run()


# ---------------------------------------------------------------------------
# persistence


def test_rnd_save_load_round_trip(tmp_path, small_dataset):
    model = build_rnd(3, 65, seed=1)
    train_distillation(model, small_dataset, iters=10, seed=0)
    p = tmp_path / "rnd.lep"
    save_rnd(p, model)
    loaded = load_rnd(p)
    assert loaded.v == model.v
    assert loaded.random_net.digest() == model.random_net.digest()
    assert loaded.distill_net.digest() == model.distill_net.digest()
    r1 = rd_joint_reward(model, small_dataset.states[:5], small_dataset.actions[:5])
    r2 = rd_joint_reward(loaded, small_dataset.states[:5], small_dataset.actions[:5])
    assert np.array_equal(r1, r2)


def test_rnd_load_without_stats(tmp_path):
    model = build_rnd(2, 30, seed=0)
    p = tmp_path / "rnd.lep"
    save_rnd(p, model)
    loaded = load_rnd(p)
    assert loaded.norm_mean is None
