import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from uavtrack.config import EnvConfig
from uavtrack.rl import checkpoint
from uavtrack.rl.cotrain import cotrain, write_curve_csv
from uavtrack.rl.nets import Adam, PolicyNetwork, gaussian_log_prob, make_actor, sample_action
from uavtrack.rl.ppo import (
    PpoConfig, PpoLearner, TrainingDivergenceError, clip_global_norm, compute_gae, normalize_advantages,
    ppo_loss_and_grads, ppo_update,
)

from conftest import rel_err


def fd_grad(f, params, h=1e-6):
    g = np.zeros_like(params)
    for i in range(params.size):
        old = params[i]
        params[i] = old + h
        fp = f()
        params[i] = old - h
        fm = f()
        params[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def assert_grad_close(analytic, numeric, tol=1e-4):
    scale = max(np.max(np.abs(numeric)), 1e-6)
    assert np.max(np.abs(analytic - numeric)) / scale < tol


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([(2, 4, 1), (3, 5, 4, 2), (6, 8, 8, 1)]))
def test_network_parameter_gradient(seed, sizes):
    rng = np.random.default_rng(seed)
    net = PolicyNetwork(sizes, rng=rng)
    net.params[:] += 0.3 * rng.normal(size=net.n_params)
    x = rng.normal(size=(5, sizes[0]))
    w = rng.normal(size=(5, sizes[-1]))
    out, cache = net.forward_cache(x)
    grad, d_in = net.backward(cache, w)
    assert_grad_close(grad, fd_grad(lambda: float(np.sum(w * net.forward(x))), net.params))
    flat = x.copy()
    num_in = np.zeros_like(flat)
    for i in np.ndindex(flat.shape):
        old = flat[i]
        flat[i] = old + 1e-6
        fp = np.sum(w * net.forward(flat))
        flat[i] = old - 1e-6
        fm = np.sum(w * net.forward(flat))
        flat[i] = old
        num_in[i] = (fp - fm) / 2e-6
    assert_grad_close(d_in, num_in)


def test_zero_network_outputs_zero():
    net = make_actor(6, (8, 8), rng=None)
    assert np.all(net.forward(np.random.default_rng(0).normal(size=(10, 6))) == 0.0)


def test_linear_layer_identity():
    net = PolicyNetwork((3, 1))
    net.weights[0][:, 0] = [1.0, 0.0, 0.0]
    x = np.random.default_rng(0).normal(size=(4, 3))
    np.testing.assert_array_equal(net.forward(x)[:, 0], x[:, 0])


def test_log_prob_normalized():
    val, _ = integrate.quad(lambda a: math.exp(gaussian_log_prob(a, 0.3, -0.7)), -np.inf, np.inf)
    assert val == pytest.approx(1.0, abs=1e-8)


def test_sample_degenerate_std_returns_mean():
    a, _ = sample_action(0.42, -60.0, np.random.default_rng(0))
    assert a == pytest.approx(0.42, abs=1e-20)


def test_orthogonal_init_rows():
    net = make_actor(6, (64, 64), np.random.default_rng(0))
    W = net.weights[1]
    np.testing.assert_allclose(W.T @ W, 2.0 * np.eye(64), atol=1e-10)


def test_gae_example():
    adv, ret = compute_gae([1.0, 1.0], [0.0, 0.0], [0.0, 1.0], 0.0, 0.99, 0.95)
    np.testing.assert_allclose(adv, [1.9405, 1.0], atol=1e-12)
    np.testing.assert_allclose(ret, adv)


@settings(max_examples=50)
@given(st.lists(st.floats(-2, 2), min_size=1, max_size=30), st.floats(0.5, 1.0), st.floats(-5, 5))
def test_gae_lambda_one_is_discounted_return(rewards, gamma, last_value):
    n = len(rewards)
    values = np.linspace(-1, 1, n)
    adv, ret = compute_gae(rewards, values, np.zeros(n), last_value, gamma, 1.0)
    brute = [sum(gamma**(k - t) * rewards[k] for k in range(t, n)) + gamma**(n - t) * last_value
             for t in range(n)]
    np.testing.assert_allclose(ret, brute, rtol=1e-9, atol=1e-9)


def test_gae_does_not_cross_episode_boundary():
    adv, _ = compute_gae([0.0, 0.0, 100.0], [0.0, 0.0, 0.0], [0.0, 1.0, 0.0], 0.0, 0.99, 0.95)
    assert adv[0] == 0.0 and adv[1] == 0.0


def tiny_batch(seed, n=16, dim=2):
    rng = np.random.default_rng(seed)
    actor = PolicyNetwork((dim, 4, 1), gaussian=True, rng=rng, log_std_init=-0.3)
    critic = PolicyNetwork((dim, 4, 1), rng=rng)
    obs = rng.normal(size=(n, dim))
    mean = actor.forward(obs)[:, 0]
    actions = mean + 0.5 * rng.normal(size=n)
    old_lp = gaussian_log_prob(actions, mean, -0.3) + rng.uniform(-0.1, 0.1, n)
    return actor, critic, obs, actions, old_lp, rng.normal(size=n), rng.normal(size=n)


@pytest.mark.parametrize("seed", range(5))
def test_ppo_loss_gradient(seed):
    actor, critic, obs, actions, old_lp, adv, ret = tiny_batch(seed)
    cfg = PpoConfig(entropy_coeff=0.01, clip_ratio=0.2)
    _, g_a, g_c = ppo_loss_and_grads(actor, critic, obs, actions, old_lp, adv, ret, cfg)

    def loss():
        return ppo_loss_and_grads(actor, critic, obs, actions, old_lp, adv, ret, cfg)[0]["loss"]

    assert_grad_close(g_a, fd_grad(loss, actor.params))
    assert_grad_close(g_c, fd_grad(loss, critic.params))


def test_ratio_one_surrogate_zero():
    actor, critic, obs, actions, _, adv, ret = tiny_batch(0)
    lp = gaussian_log_prob(actions, actor.forward(obs)[:, 0], actor.log_std[0])
    stats, _, _ = ppo_loss_and_grads(actor, critic, obs, actions, lp, normalize_advantages(adv), ret,
                                     PpoConfig())
    assert stats["policy_loss"] == pytest.approx(0.0, abs=1e-12)


def test_clip_region_has_zero_policy_gradient():
    actor, critic, obs, actions, _, _, ret = tiny_batch(1, n=1)
    eps = 0.2
    lp = gaussian_log_prob(actions, actor.forward(obs)[:, 0], actor.log_std[0])
    old_lp = lp - math.log(1.0 + 2.0 * eps)
    _, g_a, _ = ppo_loss_and_grads(actor, critic, obs, actions, old_lp, np.array([1.0]), ret,
                                   PpoConfig(clip_ratio=eps))
    assert np.all(g_a == 0.0)


def test_clip_global_norm():
    g, norm = clip_global_norm([np.array([3.0]), np.array([4.0])], 1.0)
    assert norm == 5.0
    assert math.hypot(g[0][0], g[1][0]) == pytest.approx(1.0)


def test_adam_minimizes_quadratic():
    x = np.array([5.0, -3.0])
    opt = Adam(2, lr=0.1)
    for _ in range(500):
        opt.step(x, 2 * x)
    assert np.all(np.abs(x) < 1e-2)


def test_divergent_update_restores_params():
    actor, critic, obs, actions, old_lp, adv, ret = tiny_batch(2)
    learner = PpoLearner(actor, critic, PpoConfig(minibatch_size=8, epochs_per_batch=1))
    before = (actor.params.copy(), critic.params.copy())
    ret = ret.copy()
    ret[0] = np.nan
    batch = dict(obs=obs, actions=actions, log_probs=old_lp, advantages=adv, returns=ret)
    with pytest.raises(TrainingDivergenceError):
        ppo_update(learner, batch, np.random.default_rng(0))
    np.testing.assert_array_equal(actor.params, before[0])
    np.testing.assert_array_equal(critic.params, before[1])


@pytest.mark.parametrize("text", [False, True])
def test_checkpoint_roundtrip(tmp_path, text):
    net = make_actor(6, (8, 8), np.random.default_rng(0))
    net.log_std[:] = -0.37
    path = tmp_path / "a.ckpt"
    checkpoint.save_checkpoint(net, path, env_hash="abc", text=text)
    back = checkpoint.load_checkpoint(path, env_hash="abc")
    x = np.random.default_rng(1).normal(size=(5, 6))
    assert np.array_equal(back.forward(x), net.forward(x))
    assert np.array_equal(back.params, net.params)
    assert back.sizes == net.sizes and back.log_std[0] == -0.37


def test_checkpoint_hash_mismatch_warns(tmp_path):
    path = tmp_path / "a.ckpt"
    checkpoint.save_checkpoint(make_actor(6, (4,)), path, env_hash="abc")
    with pytest.warns(UserWarning):
        checkpoint.load_checkpoint(path, env_hash="xyz")


@pytest.mark.parametrize("text", [False, True])
def test_checkpoint_truncation_fuzz(tmp_path, text):
    path = tmp_path / "a.ckpt"
    checkpoint.save_checkpoint(make_actor(6, (4,), np.random.default_rng(0)), path, text=text)
    blob = path.read_bytes()
    bad = tmp_path / "bad.ckpt"
    # dropping only trailing whitespace leaves a complete document
    end = len(blob.rstrip())
    for cut in range(0, end, max(1, end // 60)):
        bad.write_bytes(blob[:cut])
        with pytest.raises(checkpoint.CheckpointError):
            checkpoint.read_checkpoint(bad)


def test_checkpoint_garbage(tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(bytes(range(256)))
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.read_checkpoint(bad)
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.read_checkpoint(tmp_path / "missing.ckpt")


SMALL = PpoConfig(total_steps=1200, rollout_batch_steps=400, minibatch_size=100, epochs_per_batch=2,
                  hidden=(8, 8), checkpoint_every=1)


def test_cotrain_deterministic(tmp_path):
    a = cotrain(EnvConfig(), SMALL, seed=3)
    b = cotrain(EnvConfig(), SMALL, seed=3)
    write_curve_csv(a.curve, tmp_path / "a.csv")
    write_curve_csv(b.curve, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert np.array_equal(a.observer_actor.params, b.observer_actor.params)
    assert len(a.curve) == 3
    for row in a.curve:
        if row["episodes"]:
            assert row["mean_return_observer"] + row["mean_return_target"] == 0.0


def test_cotrain_writes_checkpoints(tmp_path):
    res = cotrain(EnvConfig(), SMALL, seed=4, out_dir=tmp_path)
    names = {"observer_actor", "observer_critic", "target_actor", "target_critic"}
    assert set(res.checkpoints) == names
    for name in names:
        assert (tmp_path / f"{name}.ckpt").exists()
        assert (tmp_path / f"{name}_latest.ckpt").exists()
    net = checkpoint.load_checkpoint(res.checkpoints["observer_actor"], EnvConfig().digest())
    assert np.array_equal(net.params, res.observer_actor.params)


def test_cotrain_parallel_workers_run():
    res = cotrain(EnvConfig(), PpoConfig(total_steps=400, rollout_batch_steps=400, minibatch_size=100,
                                         epochs_per_batch=1, hidden=(8,)), seed=1, workers=2)
    assert len(res.curve) == 1


def test_ppo_config_unknown_key():
    with pytest.raises(ValueError):
        PpoConfig.from_dict({"gama": 0.9})
