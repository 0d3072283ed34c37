"""Context-conditional multi-task adversarial IRL.

One outer iteration of :meth:`MultiTaskAIRL.train_step`:

1. draw two demonstration batches ``tau_E`` and ``tau'_E``;
2. sample a context per demonstration in ``tau_E`` from ``q(z | tau_E)``;
3. roll the policy out once per sampled context, keeping ``z`` fixed per episode;
4. ascend the information objective in the inference network on those rollouts;
5. pass the same objective to the reward side as an end-of-episode bonus;
6. descend the binary classification loss of the discriminator, with
   ``tau'_E`` (contexts sampled from ``q``) labelled as expert;
7. update the policy on ``r(x, u, z) - log pi(u | x, z)`` plus the bonus.
"""

from __future__ import annotations

import logging
import time

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .._state import jsonable_params, load_blocks, pack_optimizers, rng_state, set_rng_state, unpack_optimizers
from ..numeric import Adam, backward
from ..numeric.autodiff import exp, log
from ..rl.policy import augment
from ..rl.ppo import PolicyAgent, compute_advantages, policy_update
from ..rl.rollout import collect_rollouts
from ..validation import check_demos
from .networks import (
    ContextPrior,
    Discriminator,
    InferenceNet,
    binary_class_loss,
    categorical_entropy,
    info_terms,
)

log_ = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


def sample_categorical(log_p, rng):
    p = np.exp(np.asarray(log_p, dtype=float))
    cdf = np.cumsum(p, axis=-1)
    u = rng.random(p.shape[0])[:, None] * cdf[:, -1:]
    return np.minimum((u > cdf).sum(axis=-1), p.shape[-1] - 1)


class MultiTaskAIRL(BaseEstimator):
    """Learns a context-conditioned reward, policy and mode-inference network
    from unlabelled trajectories of a multi-mode process.

    Parameters
    ----------
    env : ProcessEnv
        Simulator the generator interacts with.
    n_contexts : int
        Number of latent modes M believed to be present in the data.
    rollout_modes : {"random", "context", "demo"}
        How the simulator's operating mode is chosen for each generator
        episode. ``"random"`` draws it uniformly; ``"context"`` runs context
        ``z`` in simulator mode ``z`` (needs ``n_contexts`` equal to the
        simulator's mode count); ``"demo"`` re-creates the operating
        condition recorded in the demonstration the context was inferred
        from (only for environments that expose
        ``operating_mode_from_observation``).
    info_weight, inference_weight : float
        Weights of the information objective on the reward side and on the
        inference network (both 1 by default).
    cluster_weight : float
        Weight of the mutual information between demonstrations and their
        inferred contexts, ``H(mean_b q(. | tau_b)) - mean_b H(q(. | tau_b))``
        over the demonstration batch, added to the inference network's
        objective. It needs no labels and keeps the posterior from
        collapsing onto one context.
    """

    def __init__(self, env=None, n_contexts=2, hidden=(64, 64), disc_hidden=(64, 64),
                 inference_hidden=(64,), inference_features=32, n_iterations=300, n_gen_episodes=64,
                 n_disc_demos=64, policy_lr=3e-4, value_lr=1e-3, disc_lr=1e-3, inference_lr=1e-3,
                 gamma=0.99, gae_lambda=0.95, clip_ratio=0.2, ppo_epochs=10, minibatch_size=256,
                 target_kl=0.02, ent_coef=0.0, log_std_init=-0.5, disc_epochs=1, disc_minibatch_size=64,
                 inference_steps=1, info_weight=1.0, inference_weight=1.0, cluster_weight=1.0,
                 disc_weight_decay=0.0, rollout_modes="random", seed=0):
        self.env = env
        self.n_contexts = n_contexts
        self.hidden = hidden
        self.disc_hidden = disc_hidden
        self.inference_hidden = inference_hidden
        self.inference_features = inference_features
        self.n_iterations = n_iterations
        self.n_gen_episodes = n_gen_episodes
        self.n_disc_demos = n_disc_demos
        self.policy_lr = policy_lr
        self.value_lr = value_lr
        self.disc_lr = disc_lr
        self.inference_lr = inference_lr
        self.gamma = gamma
        self.gae_lambda = gae_lambda
        self.clip_ratio = clip_ratio
        self.ppo_epochs = ppo_epochs
        self.minibatch_size = minibatch_size
        self.target_kl = target_kl
        self.ent_coef = ent_coef
        self.log_std_init = log_std_init
        self.disc_epochs = disc_epochs
        self.disc_minibatch_size = disc_minibatch_size
        self.inference_steps = inference_steps
        self.info_weight = info_weight
        self.inference_weight = inference_weight
        self.cluster_weight = cluster_weight
        self.disc_weight_decay = disc_weight_decay
        self.rollout_modes = rollout_modes
        self.seed = seed

    # -- construction -------------------------------------------------------
    def _init_state(self):
        env = self.env
        if env is None:
            raise ValueError("MultiTaskAIRL needs an environment")
        if self.rollout_modes not in ("random", "context", "demo"):
            raise ValueError(f"rollout_modes must be 'random', 'context' or 'demo', got {self.rollout_modes!r}")
        if self.rollout_modes == "context" and int(self.n_contexts) != env.spec.n_modes:
            raise ValueError(f"rollout_modes='context' needs n_contexts == {env.spec.n_modes}")
        if self.rollout_modes == "demo" and not hasattr(env, "operating_mode_from_observation"):
            raise ValueError(f"{env.env_id} cannot recover operating modes from observations")
        spec = env.spec
        M = int(self.n_contexts)
        self.rng_ = np.random.default_rng([int(self.seed), 1])
        env.seed(self.seed, worker=2)
        self.agent_ = PolicyAgent(
            spec.state_dim, M, spec.low, spec.high, hidden=tuple(self.hidden), lr=self.policy_lr,
            value_lr=self.value_lr, gamma=self.gamma, gae_lambda=self.gae_lambda,
            clip_ratio=self.clip_ratio, ent_coef=self.ent_coef, epochs=self.ppo_epochs,
            minibatch_size=self.minibatch_size, target_kl=self.target_kl,
            log_std_init=self.log_std_init, seed=[int(self.seed), 3],
        )
        self.discriminator_ = Discriminator(spec.state_dim, spec.action_dim, M, spec.low, spec.high,
                                            hidden=tuple(self.disc_hidden), rng=self.rng_)
        self.inference_ = InferenceNet(spec.state_dim, spec.action_dim, M, spec.low, spec.high,
                                       hidden=tuple(self.inference_hidden), features=self.inference_features,
                                       rng=self.rng_)
        self.prior_ = ContextPrior(M)
        self.disc_opt_ = Adam(self.discriminator_.block, lr=self.disc_lr, max_grad_norm=10.0)
        self.inference_opt_ = Adam(self.inference_.block, lr=self.inference_lr, max_grad_norm=10.0)
        self.iteration_ = 0
        self.history_ = []
        self.n_rollbacks_ = 0

    @property
    def blocks(self):
        check_is_fitted(self, "agent_")
        return {
            "policy": self.agent_.policy.block,
            "value": self.agent_.value.block,
            "discriminator": self.discriminator_.block,
            "inference": self.inference_.block,
        }

    @property
    def optimizers(self):
        return {
            "policy": self.agent_.policy_opt,
            "value": self.agent_.value_opt,
            "discriminator": self.disc_opt_,
            "inference": self.inference_opt_,
        }

    # -- public API -----------------------------------------------------------
    def fit(self, demos, callback=None):
        """Run ``n_iterations`` outer iterations from a fresh initialisation."""
        self._init_state()
        return self.partial_fit(demos, self.n_iterations, callback=callback)

    def partial_fit(self, demos, n_iterations=1, callback=None):
        if not hasattr(self, "agent_"):
            self._init_state()
        self._set_demos(demos)
        for _ in range(int(n_iterations)):
            rec = self.train_step()
            if callback is not None:
                callback(rec)
        return self

    def _set_demos(self, demos):
        obs, actions = check_demos(demos, self.env)
        self.demo_obs_ = self.env.normalizer.normalize(obs)
        self.demo_actions_ = actions
        if self.rollout_modes == "demo":
            self.demo_modes_ = self.env.operating_mode_from_observation(obs[:, 0])

    def predict(self, obs, z):
        """Deterministic action of the context-conditioned policy (raw observations)."""
        check_is_fitted(self, "agent_")
        obs = self.env.normalizer.normalize(np.atleast_2d(obs))
        return self.agent_.act(obs, z, deterministic=True)

    def predict_mode_proba(self, demos):
        check_is_fitted(self, "agent_")
        obs, actions = check_demos(demos, self.env)
        return self.inference_.proba(self.env.normalizer.normalize(obs), actions)

    def predict_mode(self, demos):
        return np.argmax(self.predict_mode_proba(demos), axis=-1)

    def reward(self, obs, actions, z):
        """Learned r_theta(x, u, z) on raw observations."""
        check_is_fitted(self, "agent_")
        return self.discriminator_.reward(self.env.normalizer.normalize(obs), actions, z)

    # -- one outer iteration ------------------------------------------------
    def _rngs(self):
        return {"trainer": self.rng_, "agent": self.agent_.rng, "env": self.env.rng}

    def _snapshot(self):
        return {
            "values": {k: b.values.copy() for k, b in self.blocks.items()},
            "opt": {k: o.state.copy() for k, o in self.optimizers.items()},
            "rng": {k: rng_state(g) for k, g in self._rngs().items()},
        }

    def _restore(self, snap):
        for k, b in self.blocks.items():
            b.values[:] = snap["values"][k]
        for k, o in self.optimizers.items():
            o.state = snap["opt"][k].copy()
        for k, g in self._rngs().items():
            set_rng_state(g, snap["rng"][k])

    def get_state(self):
        check_is_fitted(self, "agent_")
        vectors, opt_meta = pack_optimizers(self.optimizers)
        meta = {
            "estimator": "MultiTaskAIRL",
            "params": jsonable_params(self.get_params()),
            "env_id": self.env.env_id,
            "iteration": self.iteration_,
            "n_rollbacks": self.n_rollbacks_,
            "optimizers": opt_meta,
            "rng": {k: rng_state(g) for k, g in self._rngs().items()},
        }
        return self.blocks, vectors, meta

    def set_state(self, blocks, vectors, meta):
        if meta.get("estimator") != "MultiTaskAIRL":
            raise ValueError(f"checkpoint holds a {meta.get('estimator')!r}, not a MultiTaskAIRL")
        self._init_state()
        load_blocks(self.blocks, blocks)
        unpack_optimizers(self.optimizers, vectors, meta["optimizers"])
        for k, g in self._rngs().items():
            set_rng_state(g, meta["rng"][k])
        self.iteration_ = int(meta["iteration"])
        self.n_rollbacks_ = int(meta.get("n_rollbacks", 0))
        return self

    def train_step(self):
        check_is_fitted(self, "demo_obs_")
        snap = self._snapshot()
        rec = self._train_step()
        finite = all(np.isfinite(v) for v in rec.values() if isinstance(v, float))
        finite = finite and all(np.all(np.isfinite(b.values)) for b in self.blocks.values())
        if not finite:
            self._restore(snap)
            self.n_rollbacks_ += 1
            if self.n_rollbacks_ > 1:
                raise TrainingDiverged(f"non-finite loss again at iteration {self.iteration_ + 1}; aborting")
            log_.warning("non-finite loss at iteration %d; rolled back and halved learning rates",
                         self.iteration_ + 1)
            for o in self.optimizers.values():
                o.lr *= 0.5
            return self.train_step()
        self.iteration_ += 1
        rec = {"iteration": self.iteration_, **rec}
        self.history_.append(rec)
        return rec

    def _infer(self, idx):
        return self.inference_.log_proba(self.demo_obs_[idx], self.demo_actions_[idx])

    def _train_step(self):
        t0 = time.perf_counter()
        env, agent, rng = self.env, self.agent_, self.rng_
        M = int(self.n_contexts)
        N, T = self.demo_obs_.shape[:2]

        # 1-2: two demonstration batches, contexts for the first from q(z | tau_E)
        idx = rng.integers(N, size=int(self.n_gen_episodes))
        idx_disc = rng.integers(N, size=int(self.n_disc_demos))
        log_q_demo = self._infer(idx)
        z = sample_categorical(log_q_demo, rng)

        # 3: generator rollouts, one fixed z per episode
        env_modes = None
        if self.rollout_modes == "context":
            env_modes = z
        elif self.rollout_modes == "demo":
            env_modes = self.demo_modes_[idx]
        batch = collect_rollouts(agent.policy, env, z, n_episodes=z.size, rng=agent.rng,
                                 env_modes=env_modes, n_contexts=M)
        z = batch.z
        true_returns = batch.episode_returns()

        # 4: inference network ascends the information objective on D
        inf = self.inference_
        gen_feats = inf.step_features(batch.obs, batch.actions)
        demo_feats = inf.step_features(self.demo_obs_[idx], self.demo_actions_[idx])
        onehot = np.eye(M)[z]
        for _ in range(int(self.inference_steps)):
            inf.block.zero_grads()
            logq = inf.taped_log_proba(gen_feats)
            loss = -(logq * onehot).sum(axis=-1).mean() * self.inference_weight
            if self.cluster_weight and M > 1:
                logq_demo = inf.taped_log_proba(demo_feats)
                q_demo = exp(logq_demo)
                q_bar = q_demo.mean(axis=0)
                marginal = -(q_bar * log(q_bar + 1e-12)).sum()
                conditional = -(q_demo * logq_demo).sum(axis=-1).mean()
                loss = loss - (marginal - conditional) * self.cluster_weight
            backward(loss)
            self.inference_opt_.step()
        log_q_gen = inf.log_proba(batch.obs, batch.actions)
        info = info_terms(log_q_gen, z, self.prior_)
        L_I = float(info.mean())
        L_I_se = float(info.std(ddof=1) / np.sqrt(info.size)) if info.size > 1 else 0.0

        # 5: information objective reaches the reward side as an end-of-episode bonus
        bonus = np.zeros_like(batch.rewards)
        bonus[:, -1] = self.info_weight * info

        # 6: discriminator step, expert contexts drawn from q(z | tau'_E) (no gradient into q)
        z_exp = sample_categorical(self._infer(idx_disc), rng)
        e_obs = self.demo_obs_[idx_disc].reshape(-1, self.demo_obs_.shape[-1])
        e_act = self.demo_actions_[idx_disc].reshape(-1, self.demo_actions_.shape[-1])
        e_z = np.repeat(z_exp, T)
        e_logp = agent.policy.log_prob(augment(e_obs, e_z, M), e_act)
        g_obs = batch.obs.reshape(-1, batch.obs.shape[-1])
        g_act = batch.actions.reshape(-1, batch.actions.shape[-1])
        g_z = batch.z_per_step().reshape(-1)
        g_logp = batch.log_probs.reshape(-1)
        disc = self.discriminator_
        e_feat = disc.features(e_obs, e_act, e_z)
        g_feat = disc.features(g_obs, g_act, g_z)
        disc_losses = []
        mb = int(self.disc_minibatch_size)
        for _ in range(int(self.disc_epochs)):
            pe, pg = rng.permutation(len(e_feat)), rng.permutation(len(g_feat))
            n_mb = max(1, int(np.ceil(max(len(pe), len(pg)) / mb)))
            for i in range(n_mb):
                ie = pe[(i * mb) % len(pe):][:mb]
                ig = pg[(i * mb) % len(pg):][:mb]
                disc.block.zero_grads()
                loss = binary_class_loss(disc.taped_reward(e_feat[ie]) - e_logp[ie],
                                         disc.taped_reward(g_feat[ig]) - g_logp[ig])
                backward(loss)
                if self.disc_weight_decay:
                    disc.block.grads += self.disc_weight_decay * disc.block.values
                self.disc_opt_.step()
                disc_losses.append(float(loss.value))
        e_logit = disc.net.predict(e_feat).reshape(-1) - e_logp
        g_logit = disc.net.predict(g_feat).reshape(-1) - g_logp
        disc_loss = binary_class_loss(e_logit, g_logit)
        disc_acc = 0.5 * (np.mean(e_logit > 0) + np.mean(g_logit < 0))

        # 7: forward RL on r - log pi (+ bonus)
        r = disc.net.predict(g_feat).reshape(batch.rewards.shape) - batch.log_probs
        batch.rewards = r + bonus
        compute_advantages(agent, batch)
        ppo = policy_update(agent, batch)

        return {
            "disc_loss": float(disc_loss),
            "disc_accuracy": float(disc_acc),
            "L_I": L_I,
            "L_I_se": L_I_se,
            "gen_return_est": float(batch.rewards.sum(axis=1).mean()),
            "inference_entropy": float(categorical_entropy(log_q_demo).mean()),
            "true_return": float(true_returns.mean()),
            "terminal_metric": float(np.mean(batch.terminal_metric)),
            "policy_entropy": float(ppo["entropy"]),
            "kl": float(ppo["kl"]),
            "wall_time": time.perf_counter() - t0,
        }
