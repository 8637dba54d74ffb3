import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from srmrl.core import CapacityError, TransitionDataset, reindex_dataset
from srmrl.domains import rollout_episodes, toy1d_spec
from srmrl.mfmc import (
    DistanceWeights,
    LipschitzConstants,
    build_artificial_episodes,
    default_n_tilde,
    horizon_coeff,
    mfmc_evaluate,
    transition_distance,
)
from srmrl.policies import Policy, RbfPolicyClass

UNIT_W = DistanceWeights([1.0], [1.0])


def pool(entries):
    """Dataset from raw (s, a, s_next) triples (1D)."""
    arr = np.asarray(entries, dtype=float)
    n = arr.shape[0]
    return TransitionDataset(
        s=arr[:, 0:1], a=arr[:, 1:2], s_next=arr[:, 2:3],
        reward=np.zeros(n), episode_id=np.zeros(n, dtype=int),
        step=np.arange(n), n_episodes=1, horizon=n,
    )


SPEC_POOL = pool([(0.0, 0.0, 1.0), (1.0, 1.0, 2.0), (0.9, 1.0, 1.9)])


def brute_force_stitch(data, start, T, n_tilde, act, w):
    """Independent exhaustive per-step minimizer (first index on ties)."""
    available = list(range(len(data)))
    episodes = []
    for _ in range(n_tilde):
        s = np.atleast_1d(np.asarray(start, dtype=float))
        idxs, deltas, states = [], [], [s]
        for _t in range(T):
            a = np.atleast_1d(np.asarray(act(s), dtype=float))
            best_i, best_d = None, None
            for i in available:
                d = transition_distance((data.s[i], data.a[i]), (s, a), w)
                if best_d is None or d < best_d:
                    best_i, best_d = i, d
            available.remove(best_i)
            idxs.append(best_i)
            deltas.append(best_d)
            s = data.s_next[best_i]
            states.append(s)
        episodes.append((idxs, deltas, np.concatenate(states)))
    return episodes


class TestTransitionDistance:
    def test_identity(self):
        assert transition_distance(([0.3], [0.1]), ([0.3], [0.1]), UNIT_W) == 0.0

    def test_1d_sum_of_components(self):
        d = transition_distance(([0.0], [0.0]), ([1.0], [0.5]), UNIT_W)
        assert d == pytest.approx(1.5, abs=1e-15)

    def test_state_scaling(self):
        w = DistanceWeights([2.0], [1.0])
        assert transition_distance(([0.0], [0.0]), ([1.0], [0.0]), w) == pytest.approx(2.0)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            transition_distance(([0.0, 0.0], [0.0]), ([1.0], [0.0]), UNIT_W)

    @given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3))
    @settings(max_examples=50, deadline=None)
    def test_symmetry_and_nonnegativity(self, s1, a1, s2, a2):
        d12 = transition_distance(([s1], [a1]), ([s2], [a2]), UNIT_W)
        d21 = transition_distance(([s2], [a2]), ([s1], [a1]), UNIT_W)
        assert d12 == d21 >= 0.0


class TestHorizonCoeff:
    def test_q_one(self):
        assert horizon_coeff(2, 5, LipschitzConstants(1.0, 1.0, 0.0)) == 3.0

    def test_memoryless_dynamics(self):
        L = LipschitzConstants(0.0, 2.0, 0.7)
        for t in range(4):
            assert horizon_coeff(t, 4, L) == 2.0

    def test_q_one_from_product(self):
        # l_m = 0.5, l_pi = 1 gives q = 1 exactly
        assert horizon_coeff(0, 3, LipschitzConstants(0.5, 1.0, 1.0)) == 3.0

    def test_matches_term_by_term_sum(self):
        L = LipschitzConstants(1.3, 2.5, 0.4)
        q = 1.3 * 1.4
        for T in (1, 3, 7):
            for t in range(T):
                direct = 2.5 * sum(q**i for i in range(T - t))
                assert horizon_coeff(t, T, L) == pytest.approx(direct, rel=1e-12)

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            horizon_coeff(5, 5, LipschitzConstants(1, 1, 0))

    @given(st.floats(0, 2), st.floats(0, 3), st.floats(0, 2), st.integers(2, 10))
    @settings(max_examples=50, deadline=None)
    def test_nonincreasing_in_t(self, lm, lr, lp, T):
        L = LipschitzConstants(lm, lr, lp)
        vals = [horizon_coeff(t, T, L) for t in range(T)]
        assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))


class TestStitching:
    def test_worked_example(self):
        eps = build_artificial_episodes(
            lambda s: 1.0, SPEC_POOL, 1, UNIT_W, start_state=[0.0], horizon=2
        )
        e = eps[0]
        np.testing.assert_array_equal(e.used_transitions, [2, 1])
        np.testing.assert_allclose(e.states.ravel(), [0.0, 1.9, 2.0], atol=1e-15)
        np.testing.assert_allclose(e.deltas, [0.9, 0.9], atol=1e-15)

    def test_capacity_error(self):
        with pytest.raises(CapacityError, match="4"):
            build_artificial_episodes(lambda s: 1.0, SPEC_POOL, 2, UNIT_W,
                                      start_state=[0.0], horizon=2)

    def test_exact_match_reconstruction(self):
        spec = toy1d_spec(noise_scale=0.0)
        cls = RbfPolicyClass(
            centers=np.linspace(-1, 1, 4)[:, None], width=1.0, limit=0.5,
            action_low=spec.action_low, action_high=spec.action_high,
            state_scale=[0.5], action_scale=[1.0],
        )
        pi = Policy(cls, np.full((4, 1), 0.2))
        episode = rollout_episodes(spec, pi, 1, seed=0)[0]
        ds = reindex_dataset([episode])
        stitched = build_artificial_episodes(pi, ds, 1, spec.default_weights(),
                                             start_state=spec.start_state)[0]
        np.testing.assert_array_equal(stitched.states, episode.states)
        np.testing.assert_array_equal(stitched.deltas, np.zeros(spec.horizon))

    def test_duplicated_pool_changes_nothing(self):
        entries = [(0.0, 0.0, 1.0), (1.0, 1.0, 2.0), (0.9, 1.0, 1.9)]
        dup = pool(entries + entries)
        res1 = mfmc_evaluate(lambda s: 1.0, SPEC_POOL, 1, UNIT_W,
                             LipschitzConstants(0.0, 1.0, 0.0), lambda s: s[..., 0],
                             start_state=[0.0], horizon=2)
        res2 = mfmc_evaluate(lambda s: 1.0, dup, 1, UNIT_W,
                             LipschitzConstants(0.0, 1.0, 0.0), lambda s: s[..., 0],
                             start_state=[0.0], horizon=2)
        assert res1.v_mfmc == res2.v_mfmc
        assert res1.discrepancy_d == res2.discrepancy_d

    def test_superset_with_far_transitions_keeps_d(self):
        far = pool([(0.0, 0.0, 1.0), (1.0, 1.0, 2.0), (0.9, 1.0, 1.9),
                    (50.0, 9.0, 50.0), (-40.0, -9.0, -40.0)])
        res1 = mfmc_evaluate(lambda s: 1.0, SPEC_POOL, 1, UNIT_W,
                             LipschitzConstants(0.0, 1.0, 0.0), lambda s: s[..., 0],
                             start_state=[0.0], horizon=2)
        res2 = mfmc_evaluate(lambda s: 1.0, far, 1, UNIT_W,
                             LipschitzConstants(0.0, 1.0, 0.0), lambda s: s[..., 0],
                             start_state=[0.0], horizon=2)
        assert res2.discrepancy_d == res1.discrepancy_d

    def test_without_replacement_across_episodes(self):
        rng = np.random.default_rng(7)
        entries = [(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)) for _ in range(30)]
        ds = pool(entries)
        eps = build_artificial_episodes(lambda s: 0.3 * s[0], ds, 3, UNIT_W,
                                        start_state=[0.1], horizon=5)
        used = np.concatenate([e.used_transitions for e in eps])
        assert len(set(used.tolist())) == used.size

    def test_greedy_matches_brute_force_on_random_pools(self):
        rng = np.random.default_rng(11)
        for trial in range(25):
            n = int(rng.integers(4, 20))
            T = int(rng.integers(1, 4))
            ds = pool(rng.uniform(-1, 1, (n, 3)))
            coef = rng.uniform(-1, 1)
            act = lambda s, c=coef: c * s[0]
            got = build_artificial_episodes(act, ds, 1, UNIT_W, start_state=[0.0], horizon=T)[0]
            want_idx, want_deltas, want_states = brute_force_stitch(
                ds, [0.0], T, 1, act, UNIT_W)[0]
            np.testing.assert_array_equal(got.used_transitions, want_idx)
            np.testing.assert_array_equal(got.deltas, want_deltas)
            np.testing.assert_array_equal(got.states.ravel(), want_states)


class TestMfmcEvaluate:
    def test_worked_example_value_and_penalty(self):
        res = mfmc_evaluate(lambda s: 1.0, SPEC_POOL, 1, UNIT_W,
                            LipschitzConstants(0.0, 1.0, 0.0), lambda s: s[..., 0],
                            start_state=[0.0], horizon=2)
        assert res.v_mfmc == pytest.approx(1.9, abs=1e-15)
        assert res.discrepancy_d == pytest.approx(1.8, abs=1e-15)

    def test_zero_delta_zero_penalty(self):
        spec = toy1d_spec(noise_scale=0.0)
        cls = RbfPolicyClass(
            centers=np.linspace(-1, 1, 4)[:, None], width=2.0, limit=0.5,
            action_low=spec.action_low, action_high=spec.action_high,
            state_scale=[0.5], action_scale=[1.0],
        )
        pi = Policy(cls, np.full((4, 1), -0.15))
        episodes = rollout_episodes(spec, pi, 2, seed=3)
        ds = reindex_dataset(episodes)
        res = mfmc_evaluate(pi, ds, 2, spec.default_weights(), spec.lipschitz,
                            spec.reward, start_state=spec.start_state)
        assert res.discrepancy_d == 0.0
        assert res.delta_pool_gap == 0.0
        returns = [float(e.rewards.sum()) for e in episodes]
        assert res.v_mfmc == pytest.approx(np.mean(returns), abs=1e-12)

    def test_kernel_path_equals_python_path(self):
        # same policy through the numba stitcher and the numpy fallback
        spec = toy1d_spec()
        from srmrl.domains import collect_random_dataset
        ds = reindex_dataset(collect_random_dataset(spec, 12, seed=5),
                             return_range=spec.return_range)
        cls = RbfPolicyClass(
            centers=np.linspace(-1, 1, 4)[:, None], width=6.0, limit=0.5,
            action_low=spec.action_low, action_high=spec.action_high,
            state_scale=[0.5], action_scale=[1.0],
        )
        rng = np.random.default_rng(9)
        for _ in range(5):
            pi = Policy(cls, rng.uniform(-0.5, 0.5, (4, 1)))

            class NoKernel:
                start_state = spec.start_state

                def __call__(self, s, _pi=pi):
                    return _pi.act1(s)

            fast = build_artificial_episodes(pi, ds, 1, spec.default_weights(),
                                             start_state=spec.start_state)[0]
            slow = build_artificial_episodes(NoKernel(), ds, 1, spec.default_weights())[0]
            np.testing.assert_array_equal(fast.used_transitions, slow.used_transitions)
            np.testing.assert_array_equal(fast.deltas, slow.deltas)
            np.testing.assert_array_equal(fast.states, slow.states)


def test_default_n_tilde():
    assert default_n_tilde(5) == 1
    assert default_n_tilde(10) == 1
    assert default_n_tilde(20) == 2
    assert default_n_tilde(100) == 10


class TestStitchedExport:
    def test_round_trip_with_header_flag(self, tmp_path):
        from srmrl.core import ReturnRange, dataset_header, read_dataset, write_dataset
        from srmrl.mfmc import stitched_to_dataset

        res_eps = build_artificial_episodes(lambda s: 1.0, SPEC_POOL, 1, UNIT_W,
                                            start_state=[0.0], horizon=2)
        ds = stitched_to_dataset(res_eps, lambda s: s[..., 0], ReturnRange(-5.0, 5.0))
        assert len(ds) == 2
        path = tmp_path / "stitched.csv"
        write_dataset(ds, path, stitched=True)
        assert dataset_header(path).get("stitched") == "true"
        back = read_dataset(path)
        np.testing.assert_array_equal(back.s.ravel(), [0.0, 1.9])
        np.testing.assert_array_equal(back.reward, [0.0, 1.9])


def test_disturbance_stream_reproducible():
    from srmrl.core import DisturbanceStream

    a = DisturbanceStream(31).uniform(-1, 1, (4, 3))
    b = DisturbanceStream(31).uniform(-1, 1, (4, 3))
    np.testing.assert_array_equal(a, b)
    c = DisturbanceStream(32).uniform(-1, 1, (4, 3))
    assert not np.array_equal(a, c)


def test_validate_episode_rewards():
    from srmrl.core import validate_episode_rewards
    from srmrl.domains import collect_random_dataset

    spec = toy1d_spec()
    ep = collect_random_dataset(spec, 1, seed=0)[0]
    validate_episode_rewards(ep, spec.reward)
    bad = type(ep)(states=ep.states, actions=ep.actions, rewards=ep.rewards + 0.5)
    with pytest.raises(ValueError):
        validate_episode_rewards(bad, spec.reward)
