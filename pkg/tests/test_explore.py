import heapq
import math

import numpy as np
import pytest

from vmsr.explore import (FORWARD_BIAS_PROBS, AblationContext, compute_adt,
                          compute_collision_rate, compute_max_distance,
                          coverage_cells, explore_vmsr, make_baseline_method,
                          make_vmsr_method, paired_bootstrap_ci, run_ablation,
                          run_baseline, run_exploration_benchmark,
                          subroutine_iou_analysis, trajectory_cells,
                          trajectory_iou)
from vmsr.geodesic import geodesic_field
from vmsr.maze import MazeSpec, generate_maze
from vmsr.models import AffordanceModel, SubroutinePolicy
from vmsr.pipeline import Trajectory
from vmsr.sim import Action, AgentConfig, Pose, sample_free_pose, world_to_cell

CFG = AgentConfig()


@pytest.fixture(scope="module")
def test_map():
    return generate_maze(90, MazeSpec(64, 64, 4, door_width=9), map_id="t")


@pytest.fixture(scope="module")
def fresh_models():
    policy = SubroutinePolicy.create(CFG.ray_count, 4, seed=1)
    affordance = AffordanceModel.create(CFG.ray_count, 4, seed=1)
    return affordance, policy


def make_traj(map_, poses, actions=None, collisions=None):
    poses = np.asarray(poses, dtype=np.float64)
    n = len(poses) - 1
    return Trajectory(
        poses=poses,
        actions=np.asarray(actions if actions is not None else [3] * n, np.int8),
        collisions=np.asarray(collisions if collisions is not None else [False] * n, bool),
    )


def test_explore_vmsr_episode_shape(test_map, fresh_models):
    aff, pol = fresh_models
    rng = np.random.default_rng(0)
    start = sample_free_pose(test_map, rng, CFG.body_radius)
    traj = explore_vmsr(aff, pol, test_map, start, CFG, episode_length=408, rng=rng)
    assert traj.n_steps == 408
    assert traj.subroutine_ids is not None
    # z resampled every 10 steps, final window truncated to 8
    changes = (traj.subroutine_ids[1:] != traj.subroutine_ids[:-1]).sum()
    boundaries = np.arange(0, 408, 10)
    assert len(boundaries) == 41  # affordance queries
    off_boundary = [i for i in range(1, 408)
                    if traj.subroutine_ids[i] != traj.subroutine_ids[i - 1]
                    and i % 10 != 0]
    assert off_boundary == []
    assert changes <= 40


def test_explore_short_episode(test_map, fresh_models):
    aff, pol = fresh_models
    rng = np.random.default_rng(1)
    start = sample_free_pose(test_map, rng, CFG.body_radius)
    traj = explore_vmsr(aff, pol, test_map, start, CFG, episode_length=13, rng=rng)
    assert traj.n_steps == 13


def test_forward_bias_probabilities():
    assert FORWARD_BIAS_PROBS[0] == 0.0
    assert sum(FORWARD_BIAS_PROBS) == 1.0
    assert FORWARD_BIAS_PROBS[1] == FORWARD_BIAS_PROBS[2] == 0.17


def test_forward_bias_frequencies(test_map):
    rng = np.random.default_rng(2)
    start = sample_free_pose(test_map, rng, CFG.body_radius)
    counts = np.zeros(4)
    n_eps = 25
    for _ in range(n_eps):
        traj = run_baseline("forward_bias", test_map, start, CFG,
                            episode_length=4000, rng=rng)
        counts += np.bincount(traj.actions, minlength=4)
    n = n_eps * 4000
    expected = np.array(FORWARD_BIAS_PROBS) * n
    sigma = np.sqrt(n * np.array(FORWARD_BIAS_PROBS) * (1 - np.array(FORWARD_BIAS_PROBS)))
    assert counts[0] == 0  # never Stay
    for a in (1, 2, 3):
        assert abs(counts[a] - expected[a]) < 3 * sigma[a]


def test_random_baseline_includes_stay(test_map):
    rng = np.random.default_rng(3)
    start = sample_free_pose(test_map, rng, CFG.body_radius)
    traj = run_baseline("random", test_map, start, CFG, episode_length=500, rng=rng)
    assert (traj.actions == int(Action.STAY)).sum() > 0
    assert traj.n_steps == 500


def test_forward_rotate_structure(test_map):
    rng = np.random.default_rng(4)
    start = sample_free_pose(test_map, rng, CFG.body_radius)
    traj = run_baseline("forward_rotate_on_collision", test_map, start, CFG,
                        episode_length=600, rng=rng)
    assert traj.n_steps == 600
    acts = traj.actions
    colls = traj.collisions
    assert (acts != int(Action.STAY)).all()
    # between two collisions all intermediate actions are Forward: a rotation
    # may only follow a forward that collided (or another rotation)
    for i in range(1, len(acts)):
        if acts[i] != int(Action.FORWARD) and acts[i - 1] == int(Action.FORWARD):
            assert colls[i - 1], f"rotation at {i} without preceding collision"


def test_unknown_baseline_rejected(test_map):
    with pytest.raises(ValueError):
        run_baseline("nope", test_map, Pose(1, 1, 0), CFG, rng=np.random.default_rng(0))


# ------------------------------------------------------------------ metrics

def test_adt_full_coverage_zero(test_map):
    cells = test_map.free_cells()
    cs = test_map.cell_size
    poses = [((c + 0.5) * cs, (r + 0.5) * cs, 0.0) for r, c in cells]
    traj = make_traj(test_map, poses)
    assert compute_adt(test_map, traj) == 0.0


def test_adt_stationary_matches_single_source(test_map):
    rng = np.random.default_rng(5)
    start = sample_free_pose(test_map, rng, CFG.body_radius)
    traj = make_traj(test_map, [(start.x, start.y, 0.0)] * 3,
                     actions=[0, 0], collisions=[False, False])
    adt = compute_adt(test_map, traj)
    fld = geodesic_field(test_map, [world_to_cell(test_map, start.x, start.y)])
    expected = fld[np.isfinite(fld)].mean()
    assert adt == pytest.approx(expected, abs=1e-9)


def test_max_distance_stationary_zero(test_map):
    rng = np.random.default_rng(6)
    start = sample_free_pose(test_map, rng, CFG.body_radius)
    traj = make_traj(test_map, [(start.x, start.y, 0.0)] * 2, actions=[0],
                     collisions=[False])
    assert compute_max_distance(test_map, traj) == 0.0


def test_max_distance_straight_walk():
    m = generate_maze(91, MazeSpec(64, 64, 2, door_width=9), map_id="s")
    # walk 10 cells straight inside open space
    cells = m.free_cells()
    for r, c in cells:
        if c + 10 < m.width and not m.occupancy[r, c:c + 11].any():
            break
    cs = m.cell_size
    poses = [((c + 0.5 + k) * cs, (r + 0.5) * cs, 0.0) for k in range(11)]
    traj = make_traj(m, poses)
    d = compute_max_distance(m, traj)
    assert abs(d - 10 * cs) <= cs * math.sqrt(2) + 1e-9


def test_collision_rate_edges():
    poses = np.zeros((4, 3))
    t_rot = Trajectory(poses=poses, actions=np.array([1, 2, 1], np.int8),
                       collisions=np.zeros(3, bool))
    assert compute_collision_rate(t_rot) == 0.0
    t_all = Trajectory(poses=poses, actions=np.array([3, 3, 3], np.int8),
                       collisions=np.ones(3, bool))
    assert compute_collision_rate(t_all) == 1.0
    t_mixed = Trajectory(poses=poses, actions=np.array([3, 1, 3], np.int8),
                         collisions=np.array([True, False, False]))
    assert t_mixed.collisions[1] == False  # rotations never collide
    assert compute_collision_rate(t_mixed) == 0.5


def brute_force_field(map_, src):
    """Plain-dict Dijkstra, written independently of the geodesic module."""
    occ = map_.occupancy
    cs = map_.cell_size
    dist = {src: 0.0}
    heap = [(0.0, src)]
    while heap:
        d, (r, c) = heapq.heappop(heap)
        if d > dist[(r, c)]:
            continue
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                if dr == 0 and dc == 0:
                    continue
                rr, cc = r + dr, c + dc
                if 0 <= rr < map_.height and 0 <= cc < map_.width and not occ[rr, cc]:
                    nd = d + (cs * math.sqrt(2) if dr and dc else cs)
                    if nd < dist.get((rr, cc), math.inf) - 1e-15:
                        dist[(rr, cc)] = nd
                        heapq.heappush(heap, (nd, (rr, cc)))
    return dist


@pytest.mark.parametrize("seed", [0, 1])
def test_metrics_match_brute_force(seed):
    m = generate_maze(seed + 200, MazeSpec(28, 28, 2, door_width=3), map_id="o")
    rng = np.random.default_rng(seed)
    cells = m.free_cells()
    cs = m.cell_size
    picks = cells[rng.choice(len(cells), size=5, replace=False)]
    poses = [((c + 0.5) * cs, (r + 0.5) * cs, 0.0) for r, c in picks]
    traj = make_traj(m, poses)
    # ADT against brute force: min over per-source single-source fields
    per_source = [brute_force_field(m, tuple(p)) for p in picks]
    free = [tuple(rc) for rc in cells]
    reachable = [rc for rc in free if any(rc in f for f in per_source)]
    expected_adt = np.mean([min(f.get(rc, math.inf) for f in per_source)
                            for rc in reachable])
    assert compute_adt(m, traj) == pytest.approx(expected_adt, abs=1e-6)
    start_field = brute_force_field(m, tuple(picks[0]))
    expected_md = max(start_field.get(tuple(p), 0.0) for p in picks)
    got = compute_max_distance(m, traj)
    assert got == pytest.approx(expected_md, abs=1e-6)


def test_adt_max_distance_monotone(test_map):
    rng = np.random.default_rng(7)
    cells = test_map.free_cells()
    cs = test_map.cell_size
    picks = cells[rng.choice(len(cells), size=8, replace=False)]
    poses = [((c + 0.5) * cs, (r + 0.5) * cs, 0.0) for r, c in picks]
    short = make_traj(test_map, poses[:4])
    long_ = make_traj(test_map, poses)
    assert compute_adt(test_map, long_) <= compute_adt(test_map, short) + 1e-12
    f = geodesic_field(test_map, [world_to_cell(test_map, poses[0][0], poses[0][1])])
    assert (compute_max_distance(test_map, long_, f)
            >= compute_max_distance(test_map, short, f) - 1e-12)


def test_trajectory_iou_edges(test_map):
    rng = np.random.default_rng(8)
    start = sample_free_pose(test_map, rng, CFG.body_radius)
    traj = make_traj(test_map, [(start.x, start.y, 0.0)] * 2, actions=[0],
                     collisions=[False])
    cov = coverage_cells(test_map, traj)
    assert trajectory_iou(cov, cov) == 1.0
    empty = np.zeros_like(cov)
    assert trajectory_iou(cov, empty) == 0.0
    assert cov.sum() > 0
    assert not cov[test_map.occupancy].any()


def test_benchmark_fairness_and_report(test_map, fresh_models):
    aff, pol = fresh_models
    starts_seen = {}

    def recording(kind):
        inner = make_baseline_method(kind, CFG, 40)

        def run(map_, start, rng):
            starts_seen.setdefault(kind, []).append((start.x, start.y, start.heading))
            return inner(map_, start, rng)
        return run

    methods = {"random": recording("random"), "forward_bias": recording("forward_bias")}
    reports = run_exploration_benchmark(methods, [test_map], CFG, n_starts=4,
                                        runs_per_start=2, episode_length=40, seed=3,
                                        n_samples_used={"random": 0})
    assert starts_seen["random"] == starts_seen["forward_bias"]
    for rep in reports.values():
        assert 0.0 <= rep.collision_rate <= 1.0
        assert len(rep.per_start["adt"]) == 4
        rows = rep.rows()
        assert {r[1] for r in rows} == {"n_samples", "adt", "max_distance",
                                        "collision_rate"}


def test_paired_bootstrap_ci():
    rng = np.random.default_rng(0)
    diffs = rng.normal(loc=-0.5, scale=0.1, size=100)
    lo, hi = paired_bootstrap_ci(diffs, seed=1)
    assert lo < hi < 0
    lo2, hi2 = paired_bootstrap_ci(diffs, seed=1)
    assert (lo, hi) == (lo2, hi2)


def test_iou_analysis_structure(test_map, fresh_models):
    aff, pol = fresh_models
    result = subroutine_iou_analysis(aff, pol, [test_map], CFG, n_starts=2,
                                     rollouts=2, windows=1, seed=0)
    assert 0.0 <= result["cross_mean"] <= 1.0
    assert 0.0 <= result["same_mean"] <= 1.0
    kinds = {(r["z_a"], r["z_b"]) for r in result["rows"]}
    assert (0, 0) in kinds and (0, 1) in kinds


def test_ablation_affordance_vs_random(test_map, fresh_models):
    aff, pol = fresh_models
    from vmsr.models import ModelBundle, InverseModel, TrajectoryEncoder
    bundle = ModelBundle(inverse=InverseModel.create(CFG.ray_count),
                         encoder=TrajectoryEncoder.create(4),
                         policy=pol, affordance=aff)
    ctx = AblationContext(
        einv_maps=[test_map], etest_maps=[test_map], agent_cfg=CFG, seed=0,
        collect_steps=30, inverse_hidden=(64, 64), inverse_epochs=1,
        subr_cfg=None, clip_len=10, stride=5, episode_len=40,
        explore_starts=2, explore_runs=1, bundle=bundle)
    rows = run_ablation("affordance_vs_random", [0, 1], ctx)
    assert [r["value"] for r in rows] == ["affordance", "uniform"]
    for r in rows:
        assert 0.0 <= r["collision_rate"] <= 1.0
