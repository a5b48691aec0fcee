import math

import numpy as np
import pytest

from vmsr import nn
from vmsr.hrl import (A2CConfig, FlatPolicy, GOAL_FEATURE_DIM, LearningCurve,
                      TaskSpec, compare_sample_efficiency,
                      init_hierarchical_policy, make_task,
                      meta_policy_gradient, train_a2c, train_flat_rl)
from vmsr.maze import LABEL_TARGET, MazeSpec, generate_maze
from vmsr.models import (AffordanceModel, InverseModel, ModelBundle,
                         SubroutinePolicy, TrajectoryEncoder)
from vmsr.sim import AgentConfig, world_to_cell

CFG = AgentConfig()


@pytest.fixture(scope="module")
def task_map():
    return generate_maze(95, MazeSpec(48, 48, 4, door_width=7), map_id="task")


@pytest.fixture(scope="module")
def area_map():
    return generate_maze(61, MazeSpec(80, 80, 5, door_width=7), map_id="area")


@pytest.fixture(scope="module")
def bundle():
    return ModelBundle(
        inverse=InverseModel.create(CFG.ray_count, seed=3),
        encoder=TrajectoryEncoder.create(4, seed=3),
        policy=SubroutinePolicy.create(CFG.ray_count, 4, seed=3),
        affordance=AffordanceModel.create(CFG.ray_count, 4, seed=3),
    )


def test_pointgoal_distance_band(task_map):
    env = make_task("pointgoal", "sparse", task_map, CFG, seed=1)
    rng = np.random.default_rng(0)
    lo = 10 * CFG.step_size
    hi = 17 * CFG.step_size
    for _ in range(25):
        obs, feats, done, _ = env.reset(rng)
        assert not done
        d = env._dist(env._pose)
        assert lo - 1e-9 <= d <= hi + 1e-9
        assert feats.shape == (GOAL_FEATURE_DIM,)
        assert feats[0] > 0


def test_areagoal_band_and_features(area_map):
    env = make_task("areagoal", "sparse", area_map, CFG, seed=2)
    rng = np.random.default_rng(0)
    lo = 10 * CFG.step_size
    hi = 23 * CFG.step_size
    for _ in range(10):
        obs, feats, done, _ = env.reset(rng)
        assert not done
        assert lo - 1e-9 <= env._dist(env._pose) <= hi + 1e-9
        assert np.array_equal(feats, np.zeros(GOAL_FEATURE_DIM, np.float32))


def test_start_at_goal_terminates_immediately(task_map):
    env = make_task("pointgoal", "sparse", task_map, CFG, seed=3,
                    point_step_range=(0, 0))
    rng = np.random.default_rng(0)
    obs, feats, done, reward = env.reset(rng)
    assert done and reward == 1.0
    assert env.episode_log[-1]["success"] and env.episode_log[-1]["steps"] == 0


def test_episode_cap(task_map):
    env = make_task("pointgoal", "sparse", task_map, CFG, seed=4)
    rng = np.random.default_rng(1)
    env.reset(rng)
    done = False
    steps = 0
    while not done:
        _, _, r, done, info = env.step_action(0)  # Stay forever
        steps += 1
    assert steps == 60
    assert not env.episode_log[-1]["success"]


def test_dense_telescoping_identity(task_map):
    env = make_task("pointgoal", "dense", task_map, CFG, seed=5)
    rng = np.random.default_rng(2)
    for _ in range(8):
        env.reset(rng)
        done = False
        while not done:
            a = int(rng.integers(1, 4))
            _, _, r, done, _ = env.step_action(a)
        ep = env.episode_log[-1]
        assert abs(ep["shaping_sum"] - (ep["d0"] - ep["d_final"])) < 1e-5


def test_bad_task_args(task_map):
    with pytest.raises(ValueError):
        make_task("flygoal", "sparse", task_map, CFG, seed=0)
    with pytest.raises(ValueError):
        make_task("pointgoal", "fancy", task_map, CFG, seed=0)


# ----------------------------------------------------------- initialization

def test_vmsr_init_copies_parameters(bundle):
    pol = init_hierarchical_policy("vmsr", bundle, CFG.ray_count, 4, seed=0)
    aff = bundle.affordance.store.params
    meta = pol.meta_store.params
    assert np.array_equal(meta["meta.trunk.w"][:CFG.ray_count], aff["affordance.l0.w"])
    assert np.array_equal(meta["meta.pi.w"], aff["affordance.l1.w"])
    for name, p in bundle.policy.store.params.items():
        assert np.array_equal(pol.subs.store.params[name], p)


def test_vmsr_init_zero_goal_features_matches_affordance(bundle):
    pol = init_hierarchical_policy("vmsr", bundle, CFG.ray_count, 4, seed=0)
    rng = np.random.default_rng(0)
    obs = rng.random((6, CFG.ray_count)).astype(np.float32)
    state = np.concatenate([obs, np.zeros((6, GOAL_FEATURE_DIM), np.float32)], axis=1)
    logits, value, _ = pol.meta_forward(state)
    assert np.allclose(logits, bundle.affordance.logits(obs), atol=1e-6)


def test_vmsr_init_greedy_rollouts_identical(bundle, task_map):
    from vmsr.pipeline import rollout_subroutine
    from vmsr.sim import sample_free_pose
    pol = init_hierarchical_policy("vmsr", bundle, CFG.ray_count, 4, seed=0)
    rng = np.random.default_rng(4)
    pose = sample_free_pose(task_map, rng, CFG.body_radius)
    a = rollout_subroutine(bundle.policy, 1, task_map, pose, CFG, k=8, mode="greedy")
    b = rollout_subroutine(pol.subs, 1, task_map, pose, CFG, k=8, mode="greedy")
    assert np.array_equal(a.poses, b.poses)
    assert np.array_equal(a.actions, b.actions)


def test_random_init_reproducible(bundle):
    a = init_hierarchical_policy("random", None, CFG.ray_count, 4, seed=9)
    b = init_hierarchical_policy("random", None, CFG.ray_count, 4, seed=9)
    for name in a.meta_store.params:
        assert np.array_equal(a.meta_store.params[name], b.meta_store.params[name])


def test_encoder_features_copies_trunk_only(bundle):
    pol = init_hierarchical_policy("encoder_features", bundle, CFG.ray_count, 4, seed=0)
    inv = bundle.inverse.store.params
    meta = pol.meta_store.params
    assert np.array_equal(meta["meta.trunk.w"][:CFG.ray_count],
                          inv["inverse.l0.w"][:CFG.ray_count])
    assert np.allclose(meta["meta.pi.w"], 0.0)  # head stays fresh (zero)
    hs = pol.subs.gru.hidden_size
    assert np.array_equal(pol.subs.store.params["policy.gru.wx"][:CFG.ray_count, 2 * hs:],
                          inv["inverse.l0.w"][:CFG.ray_count])
    assert not np.array_equal(pol.subs.store.params["policy.gru.wh"],
                              bundle.policy.store.params["policy.gru.wh"])


def test_unknown_scheme_and_missing_bundle(bundle):
    with pytest.raises(ValueError):
        init_hierarchical_policy("imagenet", bundle, CFG.ray_count, 4)
    with pytest.raises(ValueError):
        init_hierarchical_policy("vmsr", None, CFG.ray_count, 4)


# ---------------------------------------------------------------- learning

def test_policy_gradient_directional():
    # deterministic 2-armed task with a perfect baseline: the update must
    # move probability toward the higher-return arm
    pol = init_hierarchical_policy("random", None, CFG.ray_count, 2, seed=1)
    state = np.concatenate([np.full(CFG.ray_count, 0.5, np.float32),
                            np.zeros(GOAL_FEATURE_DIM, np.float32)])[None]
    cfg = A2CConfig(entropy_coef=0.0)
    rewards = {0: 1.0, 1: 0.0}
    baseline = 0.5
    for _ in range(30):
        pol.meta_store.zero_grads()
        logits, value, cache = pol.meta_forward(state)
        probs = nn.softmax(logits[0].astype(np.float64))
        for z in (0, 1):
            adv = rewards[z] - baseline
            meta_policy_gradient(pol, cache, z, adv * probs[z], rewards[z],
                                 float(value[0]), probs, cfg, 0.5)
        nn.adam_step(pol.meta_store, lr=0.05)
    logits, _, _ = pol.meta_forward(state)
    p = nn.softmax(logits[0])
    assert p[0] > 0.7


def test_compare_sample_efficiency_table():
    def curve(scheme, seed, crossing):
        c = LearningCurve(scheme=scheme, seed=seed)
        c.steps = [1000, 2000, 3000, 4000]
        c.success = [0.0, 0.5, 0.85 if crossing <= 3000 else 0.0,
                     0.9 if crossing <= 4000 else 0.0]
        c.reward = [0.0] * 4
        return c

    curves = {
        "vmsr": [curve("vmsr", s, 3000) for s in range(3)],
        "random": [curve("random", s, 10 ** 9) for s in range(3)],
        "same": [curve("same", s, 3000) for s in range(3)],
    }
    table = compare_sample_efficiency(curves, 0.8, reference="vmsr")
    assert table["vmsr"]["ratio_vs_reference"] == 1.0
    assert table["same"]["ratio_vs_reference"] == 1.0
    assert not table["random"]["reached"]
    assert table["random"]["label"] == "not reached"
    assert table["random"]["median_steps"] is None


def test_train_a2c_smoke_and_deterministic(bundle, task_map):
    env1 = make_task("pointgoal", "sparse", task_map, CFG, seed=7)
    pol1 = init_hierarchical_policy("vmsr", bundle, CFG.ray_count, 4, seed=11,
                                    meta_interval=5)
    c1 = train_a2c(pol1, env1, budget_steps=4000,
                   cfg=A2CConfig(record_every=1000), seed=11)
    env2 = make_task("pointgoal", "sparse", task_map, CFG, seed=7)
    pol2 = init_hierarchical_policy("vmsr", bundle, CFG.ray_count, 4, seed=11,
                                    meta_interval=5)
    c2 = train_a2c(pol2, env2, budget_steps=4000,
                   cfg=A2CConfig(record_every=1000), seed=11)
    assert c1.steps == c2.steps
    assert c1.reward == c2.reward
    assert c1.success == c2.success
    assert len(c1.steps) == 4
    for name in pol1.meta_store.params:
        assert np.array_equal(pol1.meta_store.params[name],
                              pol2.meta_store.params[name])
    smoothed = c1.smoothed_reward()
    assert all(b >= a for a, b in zip(smoothed, smoothed[1:]))


def test_frozen_subs_flag(bundle, task_map):
    env = make_task("pointgoal", "sparse", task_map, CFG, seed=8)
    pol = init_hierarchical_policy("vmsr", bundle, CFG.ray_count, 4, seed=12,
                                   fine_tune_subs=False)
    before = {k: v.copy() for k, v in pol.subs.store.params.items()}
    train_a2c(pol, env, budget_steps=2000, cfg=A2CConfig(record_every=1000), seed=12)
    for name, p in pol.subs.store.params.items():
        assert np.array_equal(p, before[name])


# -------------------------------------------------------------------- flat

def test_flat_fold_matches_single_subroutine():
    single = SubroutinePolicy.create(CFG.ray_count, 1, seed=5)
    rng = np.random.default_rng(0)
    for p in single.store.params.values():
        p += rng.normal(scale=0.1, size=p.shape).astype(np.float32)
    flat = FlatPolicy.from_single_subroutine(single, seed=0)
    assert flat.gru.input_size == CFG.ray_count  # no z input
    obs = rng.random(CFG.ray_count).astype(np.float32)
    h = np.zeros((1, 64), np.float32)
    z = nn.one_hot(np.array([0]), 1)
    logits_single, h_single = single.step(obs[None], z, h)
    logits_flat, _, h_flat, _ = flat.step_train(obs, h)
    assert np.allclose(logits_flat, logits_single[0], atol=1e-6)
    assert np.allclose(h_flat, h_single, atol=1e-6)


def test_flat_fold_requires_single():
    multi = SubroutinePolicy.create(CFG.ray_count, 4, seed=5)
    with pytest.raises(ValueError):
        FlatPolicy.from_single_subroutine(multi)


def test_train_flat_rl_smoke(area_map):
    env = make_task("areagoal", "dense", area_map, CFG, seed=9)
    flat = FlatPolicy.create(CFG.ray_count, seed=2)
    curve = train_flat_rl(flat, env, budget_steps=3000,
                          cfg=A2CConfig(record_every=1000), seed=2)
    assert len(curve.steps) == 3
    for ep in env.episode_log:
        assert abs(ep["shaping_sum"] - (ep["d0"] - ep["d_final"])) < 1e-5
