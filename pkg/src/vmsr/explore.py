"""Zero-shot exploration benchmark: subroutine-driven exploration against
hand-crafted baselines, coverage metrics on the geodesic field, subroutine
consistency/diversity IoU, and the ablation grid."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geodesic import geodesic_field
from .maze import MazeMap
from .models import AffordanceModel, SubroutinePolicy
from .pipeline import (SubroutineTrainConfig, Trajectory,
                       collect_interaction_data, pseudo_label,
                       rollout_subroutine, slice_clips, train_inverse_model,
                       train_subroutines)
from .sim import (Action, AgentConfig, N_ACTIONS, Pose, observe,
                  sample_free_pose, step, world_to_cell)
from .util import substream

# stay, left, right, forward; forward takes the residual so the sum is exact
FORWARD_BIAS_PROBS = (0.0, 0.17, 0.17, 1.0 - 0.17 - 0.17)

BASELINE_KINDS = ("random", "forward_bias", "forward_rotate_on_collision")


@dataclass
class ExplorationReport:
    method: str
    n_samples_used: int
    adt: float
    max_distance: float
    collision_rate: float
    per_start: dict[str, np.ndarray] = field(default_factory=dict)

    def rows(self) -> list[tuple[str, str, float]]:
        return [(self.method, "n_samples", float(self.n_samples_used)),
                (self.method, "adt", self.adt),
                (self.method, "max_distance", self.max_distance),
                (self.method, "collision_rate", self.collision_rate)]


# ---------------------------------------------------------------------------
# policies

def explore_vmsr(affordance: AffordanceModel, policy: SubroutinePolicy,
                 map_: MazeMap, start: Pose, cfg: AgentConfig,
                 episode_length: int = 408, window: int = 10,
                 rng: np.random.Generator | None = None,
                 uniform_z: bool = False) -> Trajectory:
    """Repeatedly sample a subroutine from the affordance model and run it.

    The last window is truncated so the episode has exactly episode_length
    actions. uniform_z swaps the affordance sampling for a uniform draw
    (the ablation arm).
    """
    if rng is None:
        raise ValueError("explore_vmsr needs an rng")
    pose = start
    parts: list[Trajectory] = []
    remaining = episode_length
    while remaining > 0:
        obs = observe(pose, cfg, map_)
        if uniform_z:
            z = int(rng.integers(policy.n_subroutines))
        else:
            p = affordance.probs(obs).astype(np.float64)
            z = int(rng.choice(policy.n_subroutines, p=p / p.sum()))
        k = min(window, remaining)
        part = rollout_subroutine(policy, z, map_, pose, cfg, k=k, mode="sample",
                                  rng=rng, first_obs=obs)
        parts.append(part)
        pose = Pose(*part.poses[-1])
        remaining -= k
    return Trajectory.concat(parts)


def run_baseline(kind: str, map_: MazeMap, start: Pose, cfg: AgentConfig,
                 episode_length: int = 408,
                 rng: np.random.Generator | None = None) -> Trajectory:
    """Hand-crafted exploration baselines; no learning, no observations."""
    if rng is None:
        raise ValueError("run_baseline needs an rng")
    pose = start
    poses = [(pose.x, pose.y, pose.heading)]
    actions: list[int] = []
    collisions: list[bool] = []

    def do(action: int) -> bool:
        nonlocal pose
        pose, collided = step(pose, Action(action), cfg, map_)
        actions.append(action)
        collisions.append(collided)
        poses.append((pose.x, pose.y, pose.heading))
        return collided

    if kind == "random":
        while len(actions) < episode_length:
            do(int(rng.integers(N_ACTIONS)))
    elif kind == "forward_bias":
        probs = np.array(FORWARD_BIAS_PROBS)
        while len(actions) < episode_length:
            do(int(rng.choice(N_ACTIONS, p=probs)))
    elif kind == "forward_rotate_on_collision":
        # rotate by a random angle in (-pi, pi] realized as rotation actions,
        # then move straight until a collision, repeat
        max_turns = int(round(math.pi / cfg.rotation_angle))
        while len(actions) < episode_length:
            k = int(rng.integers(-max_turns, max_turns + 1))
            turn = Action.ROTATE_LEFT if k >= 0 else Action.ROTATE_RIGHT
            for _ in range(min(abs(k), episode_length - len(actions))):
                do(int(turn))
            while len(actions) < episode_length:
                if do(int(Action.FORWARD)):
                    break
    else:
        raise ValueError(f"unknown baseline {kind!r}")
    return Trajectory(poses=np.array(poses), actions=np.array(actions, np.int8),
                      collisions=np.array(collisions, bool))


# ---------------------------------------------------------------------------
# metrics

def trajectory_cells(map_: MazeMap, traj: Trajectory) -> list[tuple[int, int]]:
    cells = {world_to_cell(map_, x, y) for x, y, _ in traj.poses}
    return sorted(cells)


def coverage_cells(map_: MazeMap, traj: Trajectory, radius: float = 0.5) -> np.ndarray:
    """Boolean mask of free cells within radius of any pose center."""
    cs = map_.cell_size
    mask = np.zeros((map_.height, map_.width), dtype=bool)
    span = int(math.ceil(radius / cs)) + 1
    rr, cc = np.meshgrid(np.arange(-span, span + 1), np.arange(-span, span + 1),
                         indexing="ij")
    for x, y, _ in traj.poses:
        r0, c0 = world_to_cell(map_, x, y)
        rows = r0 + rr
        cols = c0 + cc
        centers_x = (cols + 0.5) * cs
        centers_y = (rows + 0.5) * cs
        near = (centers_x - x) ** 2 + (centers_y - y) ** 2 <= radius * radius
        ok = near & (rows >= 0) & (rows < map_.height) & (cols >= 0) & (cols < map_.width)
        mask[rows[ok], cols[ok]] = True
    mask &= ~map_.occupancy
    return mask


def compute_adt(map_: MazeMap, trajectories) -> float:
    """Mean geodesic distance from each reachable free cell to the trajectory.

    Accepts one trajectory or a sequence; for a sequence the per-trajectory
    values are averaged (per-run ADT, then mean).
    """
    if isinstance(trajectories, Trajectory):
        trajectories = [trajectories]
    values = []
    for traj in trajectories:
        field_ = geodesic_field(map_, trajectory_cells(map_, traj))
        finite = np.isfinite(field_)
        values.append(float(field_[finite].mean()))
    return float(np.mean(values))


def compute_max_distance(map_: MazeMap, traj: Trajectory,
                         start_field: np.ndarray | None = None) -> float:
    """Max geodesic distance from the start to any point on the trajectory."""
    if start_field is None:
        start_field = geodesic_field(map_, [world_to_cell(map_, traj.poses[0, 0],
                                                          traj.poses[0, 1])])
    vals = [start_field[world_to_cell(map_, x, y)] for x, y, _ in traj.poses]
    vals = [v for v in vals if math.isfinite(v)]
    return float(max(vals)) if vals else 0.0


def compute_collision_rate(traj: Trajectory) -> float:
    """Fraction of forward actions that collide; 0 when nothing moved forward."""
    forward = traj.actions == int(Action.FORWARD)
    n_forward = int(forward.sum())
    if n_forward == 0:
        return 0.0
    return float(traj.collisions[forward].sum() / n_forward)


def trajectory_iou(cov_a: np.ndarray, cov_b: np.ndarray) -> float:
    """Intersection over union of two coverage masks."""
    union = (cov_a | cov_b).sum()
    if union == 0:
        return 0.0
    return float((cov_a & cov_b).sum() / union)


# ---------------------------------------------------------------------------
# benchmark

def run_exploration_benchmark(methods: dict, maps: list[MazeMap],
                              cfg: AgentConfig, n_starts: int = 100,
                              runs_per_start: int = 5, episode_length: int = 408,
                              seed: int = 0,
                              n_samples_used: dict[str, int] | None = None
                              ) -> dict[str, ExplorationReport]:
    """Run every method over identical (map, start, orientation) tuples.

    methods maps a name to a callable (map_, start, rng) -> Trajectory.
    Per-start metrics are kept for paired significance tests.
    """
    n_samples_used = n_samples_used or {}
    names = list(methods)
    per = {name: {"adt": [], "max_distance": [], "collision_rate": [],
                  "map": [], "start": [], "run": []} for name in names}
    trajectories: dict[str, list[Trajectory]] = {name: [] for name in names}

    for mi, map_ in enumerate(maps):
        start_rng = substream(seed, 301, mi)
        starts = [sample_free_pose(map_, start_rng, cfg.body_radius)
                  for _ in range(n_starts)]
        for si, start in enumerate(starts):
            orient_rng = substream(seed, 302, mi, si)
            headings = orient_rng.uniform(0.0, 2.0 * math.pi, size=runs_per_start)
            start_field = geodesic_field(map_, [world_to_cell(map_, start.x, start.y)])
            for name_i, name in enumerate(names):
                adts, maxds, colls = [], [], []
                for run in range(runs_per_start):
                    ep_rng = substream(seed, 303, mi, si, run, name_i)
                    pose = Pose(start.x, start.y, float(headings[run]))
                    traj = methods[name](map_, pose, ep_rng)
                    adts.append(compute_adt(map_, traj))
                    maxds.append(compute_max_distance(map_, traj, start_field))
                    colls.append(compute_collision_rate(traj))
                    if run == 0 and si < 3:
                        trajectories[name].append(traj)
                rec = per[name]
                rec["adt"].append(float(np.mean(adts)))
                rec["max_distance"].append(float(np.mean(maxds)))
                rec["collision_rate"].append(float(np.mean(colls)))
                rec["map"].append(mi)
                rec["start"].append(si)
                rec["run"].append(runs_per_start)

    reports = {}
    for name in names:
        rec = {k: np.asarray(v) for k, v in per[name].items()}
        reports[name] = ExplorationReport(
            method=name,
            n_samples_used=int(n_samples_used.get(name, 0)),
            adt=float(rec["adt"].mean()),
            max_distance=float(rec["max_distance"].mean()),
            collision_rate=float(rec["collision_rate"].mean()),
            per_start=rec,
        )
        reports[name].sample_trajectories = trajectories[name]  # type: ignore[attr-defined]
    return reports


def make_vmsr_method(affordance: AffordanceModel, policy: SubroutinePolicy,
                     cfg: AgentConfig, episode_length: int, window: int = 10,
                     uniform_z: bool = False):
    def run(map_, start, rng):
        return explore_vmsr(affordance, policy, map_, start, cfg,
                            episode_length=episode_length, window=window,
                            rng=rng, uniform_z=uniform_z)
    return run


def make_baseline_method(kind: str, cfg: AgentConfig, episode_length: int):
    def run(map_, start, rng):
        return run_baseline(kind, map_, start, cfg, episode_length=episode_length, rng=rng)
    return run


def paired_bootstrap_ci(diffs: np.ndarray, n_boot: int = 10000, seed: int = 0,
                        alpha: float = 0.05) -> tuple[float, float]:
    """Percentile CI for the mean of paired per-start differences."""
    rng = substream(seed, 401)
    diffs = np.asarray(diffs, dtype=np.float64)
    idx = rng.integers(len(diffs), size=(n_boot, len(diffs)))
    means = diffs[idx].mean(axis=1)
    lo, hi = np.quantile(means, [alpha / 2, 1.0 - alpha / 2])
    return float(lo), float(hi)


# ---------------------------------------------------------------------------
# consistency / diversity analysis

def subroutine_iou_analysis(affordance: AffordanceModel, policy: SubroutinePolicy,
                            maps: list[MazeMap], cfg: AgentConfig,
                            n_starts: int = 6, rollouts: int = 8,
                            windows: int = 3, seed: int = 0) -> dict:
    """Coverage IoU within and across subroutines unrolled from shared starts.

    Each rollout executes the same subroutine for several 10-step windows
    (hidden state reset per window, like deployment). Returns mean IoU of
    same-subroutine pairs and cross-subroutine pairs plus the raw pair table.
    """
    n_sub = policy.n_subroutines
    rows = []
    same, cross = [], []
    for mi, map_ in enumerate(maps):
        rng = substream(seed, 501, mi)
        for si in range(n_starts):
            start = sample_free_pose(map_, rng, cfg.body_radius)
            covs: dict[int, list[np.ndarray]] = {z: [] for z in range(n_sub)}
            for z in range(n_sub):
                for j in range(rollouts):
                    ep_rng = substream(seed, 502, mi, si, z, j)
                    parts = []
                    pose = start
                    for _ in range(windows):
                        part = rollout_subroutine(policy, z, map_, pose, cfg,
                                                  k=policy.horizon, mode="sample",
                                                  rng=ep_rng)
                        parts.append(part)
                        pose = Pose(*part.poses[-1])
                    traj = Trajectory.concat(parts)
                    covs[z].append(coverage_cells(map_, traj))
            for za in range(n_sub):
                for zb in range(za, n_sub):
                    pairs = []
                    if za == zb:
                        group = covs[za]
                        for i in range(len(group)):
                            for j in range(i + 1, len(group)):
                                pairs.append(trajectory_iou(group[i], group[j]))
                    else:
                        for ca in covs[za]:
                            for cb in covs[zb]:
                                pairs.append(trajectory_iou(ca, cb))
                    value = float(np.mean(pairs))
                    rows.append({"map": mi, "start": si, "z_a": za, "z_b": zb,
                                 "iou": value})
                    (same if za == zb else cross).append(value)
    return {"same_mean": float(np.mean(same)), "cross_mean": float(np.mean(cross)),
            "rows": rows}


# ---------------------------------------------------------------------------
# ablations

@dataclass
class AblationContext:
    """Everything a one-axis sweep needs; downstream stages of the varied
    knob are recomputed, the rest is shared."""

    einv_maps: list[MazeMap]
    etest_maps: list[MazeMap]
    agent_cfg: AgentConfig
    seed: int
    collect_steps: int
    inverse_hidden: tuple[int, ...]
    inverse_epochs: int
    subr_cfg: SubroutineTrainConfig
    clip_len: int
    stride: int
    episode_len: int
    explore_starts: int
    explore_runs: int
    bundle: object = None
    videos: object = None


def _eval_exploration(affordance, policy, ctx: AblationContext, window: int,
                      uniform_z: bool = False) -> dict:
    method = make_vmsr_method(affordance, policy, ctx.agent_cfg, ctx.episode_len,
                              window=window, uniform_z=uniform_z)
    reports = run_exploration_benchmark({"m": method}, ctx.etest_maps, ctx.agent_cfg,
                                        n_starts=ctx.explore_starts,
                                        runs_per_start=ctx.explore_runs,
                                        episode_length=ctx.episode_len,
                                        seed=ctx.seed)
    rep = reports["m"]
    return {"adt": rep.adt, "max_distance": rep.max_distance,
            "collision_rate": rep.collision_rate,
            "per_start_max_distance": rep.per_start["max_distance"]}


def _clips_for(videos, inverse, clip_len: int, stride: int):
    clips = []
    for vi, clip in enumerate(videos.clips):
        labels = pseudo_label(inverse, clip)
        clips.extend(slice_clips(clip.observations, labels, clip_len, stride,
                                 source=vi))
    return clips


def run_ablation(axis: str, grid, ctx: AblationContext) -> list[dict]:
    """Sweep one axis, holding everything else at the context defaults.

    Axes: n_interaction_samples (inverse-model budget), clip_length,
    n_subroutines, affordance_vs_random (z sampling during exploration).
    """
    rows = []
    if axis == "affordance_vs_random":
        if ctx.bundle is None:
            raise ValueError("affordance_vs_random needs a trained bundle")
        for uniform, label in ((False, "affordance"), (True, "uniform")):
            res = _eval_exploration(ctx.bundle.affordance, ctx.bundle.policy, ctx,
                                    window=ctx.bundle.policy.horizon,
                                    uniform_z=uniform)
            res["value"] = label
            rows.append(res)
        return rows

    if ctx.videos is None:
        raise ValueError(f"axis {axis!r} needs expert videos in the context")

    if axis == "n_interaction_samples":
        for budget in grid:
            n_starts = max(1, int(math.ceil(budget / ctx.collect_steps)))
            data = collect_interaction_data(ctx.einv_maps, n_starts=n_starts,
                                            steps_per_start=ctx.collect_steps,
                                            cfg=ctx.agent_cfg, seed=ctx.seed)
            inverse, _ = train_inverse_model(data, ctx.agent_cfg.ray_count,
                                             hidden=ctx.inverse_hidden,
                                             epochs=ctx.inverse_epochs, seed=ctx.seed)
            clips = _clips_for(ctx.videos, inverse, ctx.clip_len, ctx.stride)
            _, policy, affordance, _ = train_subroutines(clips, ctx.agent_cfg.ray_count,
                                                         ctx.subr_cfg)
            res = _eval_exploration(affordance, policy, ctx, window=ctx.clip_len)
            res["value"] = budget
            rows.append(res)
        return rows

    # the remaining axes share one default-budget inverse model
    data = collect_interaction_data(ctx.einv_maps, n_starts=1500,
                                    steps_per_start=ctx.collect_steps,
                                    cfg=ctx.agent_cfg, seed=ctx.seed)
    inverse, _ = train_inverse_model(data, ctx.agent_cfg.ray_count,
                                     hidden=ctx.inverse_hidden,
                                     epochs=ctx.inverse_epochs, seed=ctx.seed)
    if axis == "clip_length":
        for clip_len in grid:
            clips = _clips_for(ctx.videos, inverse, clip_len, ctx.stride)
            _, policy, affordance, _ = train_subroutines(clips, ctx.agent_cfg.ray_count,
                                                         ctx.subr_cfg)
            # each subroutine runs for its own trained horizon
            res = _eval_exploration(affordance, policy, ctx, window=clip_len)
            res["value"] = clip_len
            rows.append(res)
        return rows
    if axis == "n_subroutines":
        clips = _clips_for(ctx.videos, inverse, ctx.clip_len, ctx.stride)
        for n_sub in grid:
            sub_cfg = replace(ctx.subr_cfg, n_subroutines=n_sub)
            _, policy, affordance, _ = train_subroutines(clips, ctx.agent_cfg.ray_count,
                                                         sub_cfg)
            res = _eval_exploration(affordance, policy, ctx, window=ctx.clip_len)
            res["value"] = n_sub
            rows.append(res)
        return rows
    raise ValueError(f"unknown ablation axis {axis!r}")
