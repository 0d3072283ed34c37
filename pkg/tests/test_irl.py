import math

import numpy as np
import pytest

from mmirl.envs import BanditExpert, BioreactorEnv, BioreactorParams, ContextualBandit, CstrEnv
from mmirl.evaluation import context_to_mode, mapped_accuracy
from mmirl.experts import DemoConfig, generate_demos
from mmirl.io.config import default_config, irl_estimator, make_env
from mmirl.irl import (
    ContextPrior,
    Discriminator,
    InferenceNet,
    MultiTaskAIRL,
    TrainingDiverged,
    binary_class_loss,
    categorical_entropy,
    discriminator_prob,
    four_state_mdp,
    hard_value_iteration,
    info_objective,
    irl_reward_from_prob,
    occupancy,
    sample_categorical,
    soft_value_iteration,
)
from mmirl.numeric import Var, backward

from frozen import TABULAR_GREEDY
from oracles import central_differences, class_loss_per_sample, exp_ratio_probability, greedy_policy, soft_q_iteration


def small_airl(env, M=2, **kw):
    base = dict(env=env, n_contexts=M, hidden=(8,), disc_hidden=(8,), inference_hidden=(8,), inference_features=4,
                n_gen_episodes=6, n_disc_demos=6, minibatch_size=32, ppo_epochs=2, seed=0)
    return MultiTaskAIRL(**{**base, **kw})


def bio_demos(n=8, seed=0):
    rng = np.random.default_rng(seed)
    return rng.uniform(0, 1, (n, 20, 2)), rng.uniform(0, 5, (n, 20, 2))


def test_discriminator_half_at_log_pi():
    r = np.array([-3.2, 0.0, 1.7])
    assert np.all(discriminator_prob(r, r) == 0.5)
    assert discriminator_prob(np.log(3.0) + 0.4, 0.4) == pytest.approx(0.75, abs=1e-15)


def test_discriminator_matches_exp_ratio():
    rng = np.random.default_rng(0)
    r, lp = rng.uniform(-30, 30, 1000), rng.uniform(-30, 30, 1000)
    np.testing.assert_allclose(discriminator_prob(r, lp), exp_ratio_probability(r, lp), rtol=0, atol=1e-12)


def test_reward_from_probability():
    assert irl_reward_from_prob(0.5) == 0.0
    assert irl_reward_from_prob(discriminator_prob(2.0, 0.0)) == pytest.approx(2.0, abs=1e-12)
    d = Discriminator(2, 2, 2, [0, 0], [5, 5], hidden=(4,), rng=np.random.default_rng(0))
    obs, act, lp = np.ones((3, 2)), np.ones((3, 2)), np.array([0.1, -0.2, 0.3])
    np.testing.assert_allclose(d.irl_reward(obs, act, 1, lp), d.reward(obs, act, 1) - lp)
    np.testing.assert_allclose(irl_reward_from_prob(d.prob(obs, act, 1, lp)), d.irl_reward(obs, act, 1, lp),
                               atol=1e-12)


def test_class_loss_cases():
    assert binary_class_loss(np.zeros(3), np.zeros(5)) == pytest.approx(2 * math.log(2), abs=1e-15)
    assert binary_class_loss(np.full(2, 50.0), np.full(2, -50.0)) < 1e-20
    rng = np.random.default_rng(3)
    de, ge = rng.normal(size=4), rng.normal(size=7)
    expected = class_loss_per_sample(1 / (1 + np.exp(-de)), 1 / (1 + np.exp(-ge)))
    assert binary_class_loss(de, ge) == pytest.approx(expected, abs=1e-13)
    with pytest.raises(ValueError):
        binary_class_loss(np.zeros(0), np.zeros(2))


def test_taped_class_loss_gradient():
    rng = np.random.default_rng(1)
    x0 = rng.normal(size=5)
    grad = np.zeros(5)
    v = Var(x0, requires_grad=True, sink=grad)
    backward(binary_class_loss(v[:2], v[2:]))
    assert float(binary_class_loss(Var(x0)[:2], Var(x0)[2:]).value) == pytest.approx(binary_class_loss(x0[:2], x0[2:]))
    num = central_differences(lambda x: binary_class_loss(x[:2], x[2:]), x0, 1e-6)
    np.testing.assert_allclose(grad, num, atol=1e-9)


def test_inference_uniform_with_zero_head():
    net = InferenceNet(2, 2, 3, [0, 0], [5, 5], hidden=(4,), features=3, rng=np.random.default_rng(0))
    net.head.block.tensor(net.head.first)[:] = 0.0
    p = net.proba(*bio_demos(4))
    np.testing.assert_allclose(p, 1 / 3, atol=1e-15)


def test_inference_time_permutation_invariant():
    net = InferenceNet(2, 2, 2, [0, 0], [5, 5], rng=np.random.default_rng(0))
    obs, act = bio_demos(1)
    perm = np.random.default_rng(1).permutation(20)
    np.testing.assert_allclose(net.proba(obs[0], act[0]), net.proba(obs[0, perm], act[0, perm]), atol=1e-15)
    np.testing.assert_allclose(net.proba(obs, act).sum(-1), 1.0)
    with pytest.raises(ValueError):
        net.proba(np.zeros((1, 0, 2)), np.zeros((1, 0, 2)))


def test_taped_inference_matches_untaped():
    net = InferenceNet(2, 2, 2, [0, 0], [5, 5], hidden=(4,), features=3, rng=np.random.default_rng(0))
    obs, act = bio_demos(3)
    np.testing.assert_allclose(net.taped_log_proba(net.step_features(obs, act)).value, net.log_proba(obs, act),
                               atol=1e-14)


def test_info_objective_cases():
    prior = ContextPrior(2)
    uniform = np.log(np.full((4, 2), 0.5))
    assert info_objective(uniform, [0, 1, 1, 0], prior) == 0.0
    perfect = np.log(np.array([[1.0, 1e-300], [1e-300, 1.0]]))
    assert info_objective(perfect, [0, 1], prior) == pytest.approx(math.log(2), abs=1e-15)
    q = np.array([[0.8, 0.2], [0.3, 0.7]])
    expected = 0.5 * ((math.log(0.8) - math.log(0.5)) + (math.log(0.7) - math.log(0.5)))
    assert info_objective(np.log(q), [0, 1], prior) == pytest.approx(expected, abs=1e-15)


def test_prior_validation_and_entropy():
    assert ContextPrior(4).entropy() == pytest.approx(math.log(4))
    with pytest.raises(ValueError):
        ContextPrior(2, [0.7, 0.7])
    with pytest.raises(ValueError):
        ContextPrior(0)
    assert categorical_entropy(np.log([[0.5, 0.5]]))[0] == pytest.approx(math.log(2))


def test_sample_categorical_frequencies():
    log_p = np.log(np.tile([0.2, 0.5, 0.3], (20000, 1)))
    z = sample_categorical(log_p, np.random.default_rng(0))
    np.testing.assert_allclose(np.bincount(z, minlength=3) / z.size, [0.2, 0.5, 0.3], atol=0.015)


def test_one_iteration_changes_every_block():
    est = small_airl(BioreactorEnv(seed=0)).partial_fit(bio_demos(), 0)
    before = {k: b.values.copy() for k, b in est.blocks.items()}
    est.partial_fit(bio_demos(), 1)
    for name, block in est.blocks.items():
        assert not np.array_equal(block.values, before[name]), name
    rec = est.history_[-1]
    for key in ("iteration", "disc_loss", "disc_accuracy", "L_I", "gen_return_est", "inference_entropy", "wall_time"):
        assert key in rec


def test_single_context_reduces_to_plain_adversarial_irl():
    env = BioreactorEnv(BioreactorParams(k_values=(0.5,)), seed=0)
    est = small_airl(env, M=1, rollout_modes="context")
    est.partial_fit(bio_demos(), 3)
    assert all(r["L_I"] == 0.0 and r["inference_entropy"] == 0.0 for r in est.history_)
    assert np.all(est.predict_mode(bio_demos()) == 0)
    # the context channel is a constant 1 for every input
    f = est.discriminator_.features(np.zeros((3, 2)), np.zeros((3, 2)), 0)
    np.testing.assert_array_equal(f[:, -1], 1.0)


def test_rollout_mode_validation():
    with pytest.raises(ValueError, match="rollout_modes"):
        small_airl(BioreactorEnv(), rollout_modes="sideways").partial_fit(bio_demos(), 0)
    with pytest.raises(ValueError, match="n_contexts"):
        small_airl(BioreactorEnv(), M=3, rollout_modes="context").partial_fit(bio_demos(), 0)
    with pytest.raises(ValueError):
        small_airl(BioreactorEnv(), rollout_modes="demo").partial_fit(bio_demos(), 0)
    with pytest.raises(ValueError):
        MultiTaskAIRL().partial_fit(bio_demos(), 0)


def test_demo_rollout_modes_read_the_setpoint_channel():
    env = CstrEnv(seed=0)
    d = generate_demos(env, BanditExpertLike(), DemoConfig(2))
    est = small_airl(CstrEnv(seed=1), rollout_modes="demo").partial_fit((d.states(), d.actions()), 0)
    np.testing.assert_array_equal(est.demo_modes_, d.labels())


class BanditExpertLike:
    kind = "constant"

    def reset(self, env):
        pass

    def act(self, env, rng):
        return np.full((env.n_envs, 1), 50.0)


def test_demo_shape_errors():
    est = small_airl(BioreactorEnv())
    with pytest.raises(ValueError):
        est.partial_fit((np.ones((2, 20, 3)), np.ones((2, 20, 2))), 0)
    with pytest.raises(ValueError):
        est.partial_fit((np.full((2, 20, 2), np.nan), np.ones((2, 20, 2))), 0)
    with pytest.raises(ValueError):
        est.partial_fit([], 0)


def test_non_finite_iteration_rolled_back_then_aborted(monkeypatch):
    est = small_airl(BioreactorEnv(seed=0)).partial_fit(bio_demos(), 1)
    snapshot = {k: b.values.copy() for k, b in est.blocks.items()}
    lrs = [o.lr for o in est.optimizers.values()]
    calls = []

    def broken():
        calls.append(1)
        est.discriminator_.block.values[0] = np.nan
        return {"disc_loss": float("nan")}

    monkeypatch.setattr(est, "_train_step", broken)
    with pytest.raises(TrainingDiverged):
        est.train_step()
    assert len(calls) == 2
    assert [o.lr for o in est.optimizers.values()] == [lr / 2 for lr in lrs]
    for k, b in est.blocks.items():
        assert np.array_equal(b.values, snapshot[k])
    assert est.iteration_ == 1


def test_generated_contexts_fixed_per_episode():
    est = small_airl(BioreactorEnv(seed=0), rollout_modes="context").partial_fit(bio_demos(), 0)
    from mmirl.rl import collect_rollouts

    b = collect_rollouts(est.agent_.policy, est.env, np.array([0, 1, 1]), n_episodes=3,
                         rng=np.random.default_rng(0), env_modes=np.array([0, 1, 1]), n_contexts=2)
    assert np.all(b.z_per_step() == b.z[:, None])
    np.testing.assert_array_equal(b.env_modes, b.z)


def test_repeat_and_resume_are_exact():
    demos = bio_demos()
    a = small_airl(BioreactorEnv(seed=0)).partial_fit(demos, 3)
    b = small_airl(BioreactorEnv(seed=0)).partial_fit(demos, 2)
    blocks, vectors, meta = b.get_state()
    blocks = {k: v.copy() for k, v in blocks.items()}
    c = small_airl(BioreactorEnv(seed=0))
    c.set_state(blocks, vectors, meta)
    c.partial_fit(demos, 1)
    strip = lambda r: {k: v for k, v in r.items() if k != "wall_time"}  # noqa: E731
    assert strip(a.history_[2]) == strip(c.history_[0])
    for k in a.blocks:
        assert np.array_equal(a.blocks[k].values, c.blocks[k].values)


@pytest.mark.slow
def test_synthetic_bandit_recovers_both_modes():
    cfg = default_config("bandit")
    d = generate_demos(make_env(cfg, seed=0), BanditExpert(), DemoConfig(50))
    est = irl_estimator(cfg, make_env(cfg, seed=1))
    assert est.n_iterations == 200
    est.fit((d.states(), d.actions()))
    pred = est.predict_mode((d.states(), d.actions()))
    mapping = context_to_mode(pred, d.labels(), 2, 2)
    assert mapped_accuracy(pred, d.labels(), mapping) >= 0.95
    u = est.predict(np.ones((2, 1)), np.array([0, 1]))[:, 0]
    targets = np.array(ContextualBandit().params.targets)[mapping]
    assert np.all(np.sign(u) == np.sign(targets))


def test_tabular_value_iterations_match_oracle():
    mdp = four_state_mdp()
    Q, V, pi = soft_value_iteration(mdp, mdp.reward)
    np.testing.assert_allclose(Q, soft_q_iteration(mdp.P, mdp.reward, mdp.gamma, 2000), atol=1e-9)
    np.testing.assert_allclose(pi.sum(1), 1.0)
    _, _, greedy = hard_value_iteration(mdp, mdp.reward)
    np.testing.assert_array_equal(greedy, greedy_policy(mdp.P, mdp.reward, mdp.gamma))
    assert tuple(greedy) == TABULAR_GREEDY


def test_occupancy_is_normalised():
    mdp = four_state_mdp()
    rho = occupancy(mdp, np.full((4, 2), 0.5))
    assert rho.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(rho > 0)
