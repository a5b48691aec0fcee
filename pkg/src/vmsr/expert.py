"""Action-free expert videos: an analytic shortest-path navigator with its own
kinematics walks between sampled points while only the robot's ray sensor
records frames.

The expert follows the exact geodesic field toward the goal greedily: at each
decision it probes a forward move along every heading reachable by rotations,
picks the free probe with the lowest remaining distance, emits the rotations,
and takes the step.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import PlanError, VmsrError
from .geodesic import geodesic_field
from .maze import MazeMap
from .sim import (AgentConfig, Pose, disc_free, observe_many, poses_to_array,
                  segment_free, world_to_cell)
from .util import substream, wrap_angle

EXPERT_STEP_SIZES = (0.30, 0.60, 0.90)
EXPERT_ROTATION_ANGLES = tuple(math.radians(a) for a in (40.0, 30.0, 24.0, 20.0))


@dataclass(frozen=True)
class ExpertConfig:
    step_size: float
    rotation_angle: float


def sample_expert_config(rng: np.random.Generator) -> ExpertConfig:
    return ExpertConfig(
        step_size=float(rng.choice(EXPERT_STEP_SIZES)),
        rotation_angle=float(rng.choice(EXPERT_ROTATION_ANGLES)),
    )


@dataclass
class VideoClip:
    """Frames only; there is deliberately no action field."""

    observations: np.ndarray  # (frames, ray_count) float32
    map_id: str = ""
    start_pose: tuple[float, float, float] = (0.0, 0.0, 0.0)
    goal_cell: tuple[int, int] = (0, 0)

    @property
    def length(self) -> int:
        return int(self.observations.shape[0])


@dataclass
class VideoDataset:
    clips: list[VideoClip]
    seed: int
    map_ids: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.clips)


def _field_value(field_grid: np.ndarray, map_: MazeMap, x: float, y: float) -> float:
    r, c = world_to_cell(map_, x, y)
    if not (0 <= r < map_.height and 0 <= c < map_.width):
        return math.inf
    return float(field_grid[r, c])


def plan_expert_path(map_: MazeMap, start: Pose, goal_cell: tuple[int, int],
                     cfg: ExpertConfig, body_radius: float = 0.15,
                     max_steps: int | None = None,
                     goal_field: np.ndarray | None = None) -> list[Pose]:
    """Pose sequence from start to within one expert step of the goal cell.

    Consecutive poses differ by exactly one expert action. Raises PlanError
    when the goal is unreachable or greedy descent stalls.
    """
    if goal_field is None:
        goal_field = geodesic_field(map_, [goal_cell])
    d0 = _field_value(goal_field, map_, start.x, start.y)
    if not math.isfinite(d0):
        raise PlanError(f"goal {goal_cell} unreachable from {start}")
    if max_steps is None:
        max_steps = max(300, int(8.0 * d0 / cfg.step_size) + 160)

    step_len = cfg.step_size
    # stop close enough that an aligned forward move always cleared the margin;
    # 0.65 = (1 + progress margin) / 2
    done_dist = 0.65 * step_len
    # headings reachable by rotations form a closed lattice (the published
    # angles all divide a full turn); probe exactly those directions
    n_headings = int(round(2.0 * math.pi / cfg.rotation_angle))

    poses = [start]
    pose = start
    for _ in range(max_steps):
        d = _field_value(goal_field, map_, pose.x, pose.y)
        if d <= done_dist:
            return poses
        if len(poses) > max_steps:
            break

        best = None  # (field value, |k|, k)
        for k in range(-(n_headings // 2), n_headings - n_headings // 2):
            a = pose.heading + k * cfg.rotation_angle
            px = pose.x + step_len * math.cos(a)
            py = pose.y + step_len * math.sin(a)
            val = _field_value(goal_field, map_, px, py)
            if val >= d - 0.05 * step_len:
                continue
            key = (val, abs(k), k)
            if (best is None or key < best) and segment_free(
                    map_, pose.x, pose.y, px, py, body_radius):
                best = key
        if best is None:
            raise PlanError(f"expert stuck at {pose} (d={d:.2f} m)")
        _, _, k = best
        turn = 1 if k > 0 else -1
        for _ in range(abs(k)):
            pose = Pose(pose.x, pose.y,
                        wrap_angle(pose.heading + turn * cfg.rotation_angle))
            poses.append(pose)
        fx = pose.x + step_len * math.cos(pose.heading)
        fy = pose.y + step_len * math.sin(pose.heading)
        pose = Pose(fx, fy, pose.heading)
        poses.append(pose)
    raise PlanError(f"expert exceeded {max_steps} actions toward {goal_cell}")


def render_video(path: list[Pose], map_: MazeMap, view_cfg: AgentConfig,
                 clip_length: int = 40) -> VideoClip:
    """Observations along a pose path via the robot's own sensor model.

    The clip is truncated to clip_length frames; the remainder is dropped.
    """
    if len(path) < 2:
        raise ValueError("render_video needs a path of at least 2 poses")
    kept = path[:clip_length]
    obs = observe_many(poses_to_array(kept), view_cfg, map_)
    start = kept[0]
    return VideoClip(observations=obs, map_id=map_.map_id,
                     start_pose=(start.x, start.y, start.heading))


def _generate_one_video(maps: list[MazeMap], view_cfg: AgentConfig, seed: int,
                        index: int, clip_length: int, min_goal_steps: int,
                        body_radius: float, max_tries: int = 60) -> VideoClip:
    rng = substream(seed, 31, index)
    for _ in range(max_tries):
        map_ = maps[int(rng.integers(len(maps)))]
        cfg = sample_expert_config(rng)
        free = map_.free_cells()
        goal_r, goal_c = free[int(rng.integers(len(free)))]
        goal = (int(goal_r), int(goal_c))
        goal_field = geodesic_field(map_, [goal])
        # a clip needs ~clip_length actions of which roughly 30% are turns,
        # so require enough straight-line budget on top of the spec minimum
        min_steps = max(min_goal_steps, int(round(0.7 * clip_length)))
        min_dist = min_steps * cfg.step_size
        qualifying = np.argwhere(np.isfinite(goal_field) & (goal_field >= min_dist))
        if len(qualifying) == 0:
            continue
        start = None
        cs = map_.cell_size
        for _ in range(30):
            r, c = qualifying[int(rng.integers(len(qualifying)))]
            x = (c + 0.5 + rng.uniform(-0.4, 0.4)) * cs
            y = (r + 0.5 + rng.uniform(-0.4, 0.4)) * cs
            if disc_free(map_, x, y, body_radius):
                start = Pose(x, y, float(rng.uniform(0.0, 2.0 * math.pi)))
                break
        if start is None:
            continue
        try:
            path = plan_expert_path(map_, start, goal, cfg,
                                    body_radius=body_radius, goal_field=goal_field)
        except PlanError:
            continue
        if len(path) < clip_length:
            continue  # short walks are discarded, clips are fixed length
        clip = render_video(path, map_, view_cfg, clip_length)
        clip.goal_cell = goal
        return clip
    raise VmsrError(f"video {index}: no viable start/goal pair after {max_tries} tries")


_WORKER_STATE: dict = {}


def _init_worker(maps, view_cfg, seed, clip_length, min_goal_steps, body_radius):
    _WORKER_STATE.update(maps=maps, view_cfg=view_cfg, seed=seed,
                         clip_length=clip_length, min_goal_steps=min_goal_steps,
                         body_radius=body_radius)


def _worker_video(index: int) -> VideoClip:
    s = _WORKER_STATE
    return _generate_one_video(s["maps"], s["view_cfg"], s["seed"], index,
                               s["clip_length"], s["min_goal_steps"], s["body_radius"])


def generate_video_dataset(maps: list[MazeMap], n_videos: int,
                           view_cfg: AgentConfig, seed: int,
                           clip_length: int = 40, min_goal_steps: int = 20,
                           jobs: int = 1) -> VideoDataset:
    """Expert walk dataset; deterministic in seed and identical for any jobs value."""
    if n_videos < 1:
        raise ValueError("n_videos must be >= 1")
    body_radius = view_cfg.body_radius
    if jobs > 1:
        with ProcessPoolExecutor(
                max_workers=jobs, initializer=_init_worker,
                initargs=(maps, view_cfg, seed, clip_length, min_goal_steps, body_radius),
        ) as pool:
            clips = list(pool.map(_worker_video, range(n_videos), chunksize=16))
    else:
        clips = [
            _generate_one_video(maps, view_cfg, seed, i, clip_length,
                                min_goal_steps, body_radius)
            for i in range(n_videos)
        ]
    return VideoDataset(clips=clips, seed=seed, map_ids=[m.map_id for m in maps])
