"""Aggregation, federated training loop, method equivalences."""
import dataclasses

import numpy as np
import pytest

from rifrl.env import ScenarioConfig, V2XEnv
from rifrl.federation import (Method, NanDivergenceError, StackedPolicy,
                              TrainSettings, _identity, _sample_rows,
                              aggregate, run_episode, run_training)
from rifrl.policy import (MlpParams, OptimizerState, forward, init_params,
                          sample_action)
from oracles import random_net

TINY = ScenarioConfig(n_v2i=2, n_v2v=3, slots_per_episode=15)
FAST = TrainSettings(episodes=10, aggregation_interval=5,
                     hidden_sizes=(10, 6), moving_average_window=5)


def _weights_equal(a: MlpParams, b: MlpParams) -> bool:
    return all(np.array_equal(x, y) for x, y in zip(a.weights, b.weights)) \
        and all(np.array_equal(x, y) for x, y in zip(a.biases, b.biases))


class TestMethod:
    def test_parse(self):
        assert Method.parse("rifrl") is Method.RIFRL
        assert Method.parse(" FRL ") is Method.FRL
        with pytest.raises(ValueError):
            Method.parse("fedavg")

    def test_flags(self):
        assert Method.RIFRL.aggregates and Method.FRL.aggregates
        assert not Method.INDEPENDENT_PG.aggregates
        assert not Method.RANDOM.aggregates
        assert Method.RANDOM.learns is False
        assert all(m.learns for m in (Method.RIFRL, Method.FRL,
                                      Method.INDEPENDENT_PG))


class TestTrainSettings:
    @pytest.mark.parametrize("kwargs", [
        {"episodes": -1},
        {"aggregation_interval": 0},
        {"learning_rate": -0.1},
        {"rmsprop_decay": 1.0},
        {"rmsprop_eps": 0.0},
        {"hidden_sizes": ()},
        {"hidden_sizes": (8, 0)},
        {"seed": -3},
        {"moving_average_window": 0},
        {"checkpoint_interval": -1},
    ])
    def test_validation(self, kwargs):
        with pytest.raises(ValueError):
            TrainSettings(**kwargs)

    def test_per_method_learning_rate(self):
        s = TrainSettings(learning_rate=0.5, independent_learning_rate=0.25)
        assert s.learning_rate_for(Method.RIFRL) == 0.5
        assert s.learning_rate_for(Method.FRL) == 0.5
        assert s.learning_rate_for(Method.INDEPENDENT_PG) == 0.25


class TestAggregate:
    def test_single_model_unchanged(self, rng):
        m = random_net(rng)
        out = aggregate([m])
        assert _weights_equal(out, m)

    def test_two_scalar_models_average(self):
        def scalar_net(v):
            return MlpParams(weights=[np.array([[v]]), np.array([[v]])],
                             biases=[np.array([v]), np.array([v])],
                             activation="relu")
        out = aggregate([scalar_net(2.0), scalar_net(4.0)])
        assert out.weights[0][0, 0] == 3.0
        assert out.biases[1][0] == 3.0

    def test_permutation_invariant_within_float_noise(self):
        nets = [init_params([5, 7, 4], seed=i) for i in range(5)]
        fwd = aggregate(nets)
        rev = aggregate(nets[::-1])
        for a, b in zip(fwd.weights, rev.weights):
            np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)

    def test_inputs_not_mutated(self):
        nets = [init_params([4, 5, 3], seed=i) for i in range(3)]
        snap = [m.copy() for m in nets]
        aggregate(nets)
        for m, s in zip(nets, snap):
            assert _weights_equal(m, s)

    def test_shape_mismatch_rejected(self):
        a = init_params([4, 5, 3], seed=0)
        b = init_params([4, 6, 3], seed=0)
        with pytest.raises(ValueError):
            aggregate([a, b])

    def test_activation_mismatch_rejected(self):
        a = init_params([4, 5, 3], seed=0)
        b = init_params([4, 5, 3], seed=0, activation="leaky_relu")
        with pytest.raises(ValueError):
            aggregate([a, b])

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            aggregate([])


class TestStackedPolicy:
    def test_matches_per_model_forward(self, rng):
        models = [init_params([6, 9, 4], seed=i) for i in range(3)]
        policy = StackedPolicy(models)
        obs = rng.standard_normal((3, 6))
        got = policy.probs(obs)
        for i in range(3):
            np.testing.assert_allclose(got[i], forward(models[i], obs[i]),
                                       rtol=1e-12, atol=1e-15)

    def test_row_sampling_matches_scalar_sampler(self):
        probs = np.array([[0.1, 0.6, 0.3], [0.5, 0.25, 0.25]])
        rngs_a = [np.random.default_rng(s) for s in (11, 22)]
        rngs_b = [np.random.default_rng(s) for s in (11, 22)]
        rows = _sample_rows(probs, rngs_a)
        singles = [sample_action(probs[i], rngs_b[i]) for i in range(2)]
        assert list(rows) == singles


class TestRunEpisode:
    def _setup(self, method):
        env = V2XEnv(TINY)
        env.reset(0)
        sizes = [TINY.observation_dim, 8, TINY.n_actions]
        models = [init_params(sizes, seed=i) for i in range(TINY.n_v2v)]
        opts = [OptimizerState.zeros_like(m, 1e-3) for m in models]
        rngs = [np.random.default_rng(100 + i) for i in range(TINY.n_v2v)]
        return env, models, opts, rngs

    def test_learner_returns_fresh_models(self):
        env, models, opts, rngs = self._setup(Method.FRL)
        snap = [m.copy() for m in models]
        new_models, new_opts, trajs, ret = run_episode(
            env, models, opts, rngs, Method.FRL)
        for m, s in zip(models, snap):
            assert _weights_equal(m, s)
        assert len(trajs) == TINY.n_v2v
        t = TINY.slots_per_episode
        assert trajs[0].observations.shape == (t, TINY.observation_dim)
        assert trajs[0].actions.shape == (t,)
        assert trajs[0].rewards.shape == (t,)
        assert ret == pytest.approx(float(trajs[0].rewards.sum()))
        assert not _weights_equal(new_models[0], models[0])

    def test_random_method_keeps_models(self):
        env, models, opts, rngs = self._setup(Method.RANDOM)
        new_models, new_opts, _, _ = run_episode(
            env, models, opts, rngs, Method.RANDOM)
        assert new_models is models
        assert new_opts is opts

    def test_shared_reward_is_common_to_agents(self):
        env, models, opts, rngs = self._setup(Method.FRL)
        _, _, trajs, _ = run_episode(env, models, opts, rngs, Method.FRL)
        for t in trajs[1:]:
            np.testing.assert_array_equal(t.rewards, trajs[0].rewards)


class TestRunTraining:
    def test_deterministic_bitwise(self):
        a = run_training(TINY, FAST, Method.RIFRL)
        b = run_training(TINY, FAST, Method.RIFRL)
        ra = [e.episode_return for e in a.metrics.episodes]
        rb = [e.episode_return for e in b.metrics.episodes]
        assert ra == rb
        assert _weights_equal(a.global_model, b.global_model)

    def test_episode_count_and_indices(self):
        res = run_training(TINY, FAST, Method.RANDOM)
        eps = [e.episode for e in res.metrics.episodes]
        assert eps == list(range(FAST.episodes + 1))

    def test_aggregation_schedule_and_uploads(self):
        res = run_training(TINY, FAST, Method.FRL)
        assert res.aggregation_episodes == [0, 5, 10]
        assert res.uploads == TINY.n_v2v * 3
        solo = run_training(TINY, FAST, Method.INDEPENDENT_PG)
        assert solo.uploads == 0
        assert solo.aggregation_episodes == []
        assert solo.global_model is None

    def test_local_models_synced_after_final_broadcast(self):
        res = run_training(TINY, FAST, Method.FRL)
        assert FAST.episodes % FAST.aggregation_interval == 0
        for m in res.local_models:
            assert _weights_equal(m, res.global_model)

    def test_models_for_eval_shapes(self):
        assert run_training(TINY, FAST, Method.RANDOM).models_for_eval() \
            is None
        frl = run_training(TINY, FAST, Method.FRL).models_for_eval()
        assert isinstance(frl, MlpParams)
        solo = run_training(TINY, FAST,
                            Method.INDEPENDENT_PG).models_for_eval()
        assert isinstance(solo, list) and len(solo) == TINY.n_v2v

    def test_identity_rescale_reduces_to_plain_averaging(self):
        rifrl = run_training(TINY, FAST, Method.RIFRL, rescale_fn=_identity)
        frl = run_training(TINY, FAST, Method.FRL)
        ra = [e.episode_return for e in rifrl.metrics.episodes]
        rb = [e.episode_return for e in frl.metrics.episodes]
        assert ra == rb
        assert _weights_equal(rifrl.global_model, frl.global_model)

    def test_rescaling_changes_the_run(self):
        rifrl = run_training(TINY, FAST, Method.RIFRL)
        frl = run_training(TINY, FAST, Method.FRL)
        assert not _weights_equal(rifrl.global_model, frl.global_model)

    def test_single_agent_federation_equals_independent(self):
        solo_cfg = dataclasses.replace(TINY, n_v2v=1)
        settings = dataclasses.replace(FAST, independent_learning_rate=
                                       FAST.learning_rate)
        frl = run_training(solo_cfg, settings, Method.FRL)
        ind = run_training(solo_cfg, settings, Method.INDEPENDENT_PG)
        ra = [e.episode_return for e in frl.metrics.episodes]
        rb = [e.episode_return for e in ind.metrics.episodes]
        assert ra == rb
        assert _weights_equal(frl.global_model, ind.local_models[0])

    def test_zero_learning_rate_freezes_weights(self):
        settings = dataclasses.replace(FAST, learning_rate=0.0,
                                       independent_learning_rate=0.0)
        res = run_training(TINY, settings, Method.INDEPENDENT_PG)
        ref = init_params([TINY.observation_dim, *settings.hidden_sizes,
                           TINY.n_actions],
                          np.random.SeedSequence([settings.seed, 0]))
        for m in res.local_models:
            assert _weights_equal(m, ref)

    def test_seed_changes_run(self):
        a = run_training(TINY, FAST, Method.FRL)
        b = run_training(TINY, dataclasses.replace(FAST, seed=1), Method.FRL)
        ra = [e.episode_return for e in a.metrics.episodes]
        rb = [e.episode_return for e in b.metrics.episodes]
        assert ra != rb

    def test_non_finite_model_aborts(self):
        def poison(params):
            bad = params.copy()
            bad.weights[0][0, 0] = np.nan
            return bad
        with pytest.raises(NanDivergenceError):
            run_training(TINY, FAST, Method.RIFRL, rescale_fn=poison)

    def test_message_log_accounting(self):
        settings = dataclasses.replace(FAST, episodes=5, log_messages=True)
        res = run_training(TINY, settings, Method.FRL)
        log = res.message_log
        n_params = res.global_model.n_parameters
        uploads = [m for m in log if m["event"] == "upload"]
        broadcasts = [m for m in log if m["event"] == "broadcast"]
        assert len(uploads) == TINY.n_v2v * 2      # rounds at episodes 0, 5
        assert len(broadcasts) == 2
        assert all(m["bytes"] == 8 * n_params for m in uploads)
        assert all(m["bytes"] == 8 * n_params * TINY.n_v2v
                   for m in broadcasts)

    def test_checkpoint_files_on_schedule(self, tmp_path):
        settings = dataclasses.replace(FAST, episodes=4,
                                       checkpoint_interval=2)
        run_training(TINY, settings, Method.FRL, checkpoint_dir=tmp_path)
        assert sorted(p.name for p in tmp_path.iterdir()) \
            == ["ep0.ckpt", "ep2.ckpt", "ep4.ckpt"]

    def test_final_checkpoint_always_written(self, tmp_path):
        settings = dataclasses.replace(FAST, episodes=3)
        run_training(TINY, settings, Method.INDEPENDENT_PG,
                     checkpoint_dir=tmp_path)
        assert [p.name for p in tmp_path.iterdir()] == ["ep3.ckpt"]

    def test_progress_callback_sees_every_episode(self):
        seen = []
        run_training(TINY, dataclasses.replace(FAST, episodes=3),
                     Method.RANDOM, progress=lambda j, r: seen.append(j))
        assert seen == [0, 1, 2, 3]

    def test_method_accepts_string(self):
        res = run_training(TINY, dataclasses.replace(FAST, episodes=2),
                           "random")
        assert res.method is Method.RANDOM

    def test_unshared_init_gives_distinct_locals(self):
        settings = dataclasses.replace(FAST, episodes=0, shared_init=False,
                                       learning_rate=0.0,
                                       independent_learning_rate=0.0)
        res = run_training(TINY, settings, Method.INDEPENDENT_PG)
        assert not _weights_equal(res.local_models[0], res.local_models[1])

    def test_baseline_changes_learning(self):
        with_b = run_training(TINY, dataclasses.replace(
            FAST, use_reward_baseline=True), Method.FRL)
        without = run_training(TINY, FAST, Method.FRL)
        assert not _weights_equal(with_b.global_model, without.global_model)

    def test_baseline_window_changes_learning(self):
        short = run_training(TINY, dataclasses.replace(
            FAST, use_reward_baseline=True, baseline_window=2), Method.FRL)
        long = run_training(TINY, dataclasses.replace(
            FAST, use_reward_baseline=True, baseline_window=0), Method.FRL)
        assert not _weights_equal(short.global_model, long.global_model)

    def test_training_world_persists_across_episodes(self):
        # training drives one world forward; only the first episode of a
        # run may open with a fresh drop
        calls = []
        orig_reset, orig_next = V2XEnv.reset, V2XEnv.next_episode
        try:
            V2XEnv.reset = lambda self, seed=None: (
                calls.append("reset"), orig_reset(self, seed))[1]
            V2XEnv.next_episode = lambda self: (
                calls.append("next"), orig_next(self))[1]
            run_training(TINY, FAST, Method.RANDOM)
        finally:
            V2XEnv.reset, V2XEnv.next_episode = orig_reset, orig_next
        assert calls == ["reset"] + ["next"] * FAST.episodes
