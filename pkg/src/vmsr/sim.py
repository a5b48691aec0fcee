"""Agent dynamics and egocentric ray-cast sensing on occupancy grids.

The agent is a disc of body_radius with four discrete actions. Observations
are normalized depths of rays fanned across a field of view centered on the
heading. All functions are pure; poses are immutable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from typing import NamedTuple

import numpy as np

from .maze import MazeMap
from .util import wrap_angle


class Action(IntEnum):
    STAY = 0
    ROTATE_LEFT = 1
    ROTATE_RIGHT = 2
    FORWARD = 3


N_ACTIONS = 4
MOVE_ACTIONS = (Action.ROTATE_LEFT, Action.ROTATE_RIGHT, Action.FORWARD)


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    heading: float


@dataclass(frozen=True)
class AgentConfig:
    step_size: float = 0.40
    rotation_angle: float = math.radians(30.0)
    body_radius: float = 0.15
    ray_count: int = 32
    fov: float = math.radians(120.0)
    max_range: float = 4.0

    def __post_init__(self) -> None:
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if not (0 < self.rotation_angle < math.pi):
            raise ValueError("rotation_angle must be in (0, pi)")
        if self.ray_count < 4:
            raise ValueError("ray_count must be >= 4")


class StepResult(NamedTuple):
    pose: Pose
    collided: bool


def world_to_cell(map_: MazeMap, x: float, y: float) -> tuple[int, int]:
    cs = map_.cell_size
    return int(y // cs), int(x // cs)


def cell_center(map_: MazeMap, row: int, col: int) -> tuple[float, float]:
    cs = map_.cell_size
    return (col + 0.5) * cs, (row + 0.5) * cs


def pose_valid(pose: Pose, map_: MazeMap) -> bool:
    """The cell containing (x, y) is inside the grid and free."""
    r, c = world_to_cell(map_, pose.x, pose.y)
    if not (0 <= r < map_.height and 0 <= c < map_.width):
        return False
    return not map_.occupancy[r, c]


def _require_valid(pose: Pose, map_: MazeMap) -> None:
    if not pose_valid(pose, map_):
        raise ValueError(f"invalid pose {pose} on map {map_.map_id}")


def disc_free(map_: MazeMap, x: float, y: float, radius: float) -> bool:
    """True when no obstacle cell comes strictly closer than radius to (x, y)."""
    cs = map_.cell_size
    r0 = max(0, int((y - radius) // cs))
    r1 = min(map_.height - 1, int((y + radius) // cs))
    c0 = max(0, int((x - radius) // cs))
    c1 = min(map_.width - 1, int((x + radius) // cs))
    if not (0 <= int(y // cs) <= map_.height - 1 and 0 <= int(x // cs) <= map_.width - 1):
        return False
    if map_.occupancy[int(y // cs), int(x // cs)]:
        return False
    sub = map_.occupancy[r0:r1 + 1, c0:c1 + 1]
    if not sub.any():
        return True
    rows, cols = np.nonzero(sub)
    rows = rows + r0
    cols = cols + c0
    # distance from point to each obstacle cell rectangle
    dx = np.maximum(np.maximum(cols * cs - x, x - (cols + 1) * cs), 0.0)
    dy = np.maximum(np.maximum(rows * cs - y, y - (rows + 1) * cs), 0.0)
    return not bool((dx * dx + dy * dy < radius * radius).any())


def segment_free(map_: MazeMap, x0: float, y0: float, x1: float, y1: float,
                 radius: float, samples: int = 8) -> bool:
    """Swept-disc test along a segment, sampled at `samples` points including the end."""
    for k in range(1, samples + 1):
        t = k / samples
        if not disc_free(map_, x0 + (x1 - x0) * t, y0 + (y1 - y0) * t, radius):
            return False
    return True


def step(pose: Pose, action: Action, cfg: AgentConfig, map_: MazeMap) -> StepResult:
    """Apply one action. Rotations never collide; a blocked Forward keeps the pose."""
    _require_valid(pose, map_)
    if action == Action.STAY:
        return StepResult(pose, False)
    if action == Action.ROTATE_LEFT:
        return StepResult(Pose(pose.x, pose.y, wrap_angle(pose.heading + cfg.rotation_angle)), False)
    if action == Action.ROTATE_RIGHT:
        return StepResult(Pose(pose.x, pose.y, wrap_angle(pose.heading - cfg.rotation_angle)), False)
    if action == Action.FORWARD:
        nx = pose.x + cfg.step_size * math.cos(pose.heading)
        ny = pose.y + cfg.step_size * math.sin(pose.heading)
        if segment_free(map_, pose.x, pose.y, nx, ny, cfg.body_radius):
            return StepResult(Pose(nx, ny, pose.heading), False)
        return StepResult(pose, True)
    raise ValueError(f"unknown action {action!r}")


def ray_angles(cfg: AgentConfig) -> np.ndarray:
    """Ray directions relative to the heading, evenly spanning the fov."""
    return np.linspace(-cfg.fov / 2.0, cfg.fov / 2.0, cfg.ray_count)


def cast_rays(map_: MazeMap, ox, oy, angles, max_range: float) -> np.ndarray:
    """Exact first-hit distances of rays against the occupancy grid.

    ox, oy and angles broadcast together; returns distances in meters clamped
    to max_range. Uses the full set of grid-line crossings per ray, so depths
    are exact (no sampling artifacts).
    """
    cs = map_.cell_size
    occ = map_.occupancy
    h, w = occ.shape
    ox, oy, ang = np.broadcast_arrays(np.asarray(ox, dtype=np.float64),
                                      np.asarray(oy, dtype=np.float64),
                                      np.asarray(angles, dtype=np.float64))
    shape = ang.shape
    ox = ox.ravel()
    oy = oy.ravel()
    ang = ang.ravel()
    n = ang.size
    dx = np.cos(ang)
    dy = np.sin(ang)

    k_max = int(math.ceil(max_range / cs)) + 1
    ks = np.arange(k_max, dtype=np.float64)
    crossing_blocks = []
    for o, d in ((ox, dx), (oy, dy)):
        safe = np.abs(d) > 1e-12
        d_safe = np.where(safe, d, 1.0)
        step_t = np.where(safe, cs / np.abs(d_safe), 0.0)  # unsafe rays get t0=inf below
        first_line = np.where(d > 0, (np.floor(o / cs) + 1.0) * cs, np.floor(o / cs) * cs)
        t0 = np.where(safe, (first_line - o) / d_safe, np.inf)
        t0 = np.where(t0 < 0, t0 + step_t, t0)  # fp guard when origin sits on a line
        crossing_blocks.append(t0[:, None] + step_t[:, None] * ks[None, :])
    ts = np.concatenate(crossing_blocks + [np.full((n, 1), max_range)], axis=1)
    ts[ts > max_range] = np.inf
    ts.sort(axis=1)

    b0 = np.concatenate([np.zeros((n, 1)), ts[:, :-1]], axis=1)
    b1 = ts
    valid = np.isfinite(b1)
    mid = np.where(valid, 0.5 * (b0 + b1), 0.0)
    px = ox[:, None] + dx[:, None] * mid
    py = oy[:, None] + dy[:, None] * mid
    col = np.floor(px / cs).astype(np.int64)
    row = np.floor(py / cs).astype(np.int64)
    inside = (row >= 0) & (row < h) & (col >= 0) & (col < w)
    hit = occ[row.clip(0, h - 1), col.clip(0, w - 1)] | ~inside
    hit &= valid
    any_hit = hit.any(axis=1)
    first = hit.argmax(axis=1)
    depth = np.where(any_hit, b0[np.arange(n), first], max_range)
    return depth.reshape(shape)


def observe(pose: Pose, cfg: AgentConfig, map_: MazeMap) -> np.ndarray:
    """Normalized depth vector in [0, 1], one entry per ray."""
    _require_valid(pose, map_)
    angles = pose.heading + ray_angles(cfg)
    depths = cast_rays(map_, pose.x, pose.y, angles, cfg.max_range)
    return np.clip(depths / cfg.max_range, 0.0, 1.0).astype(np.float32)


def observe_many(poses: np.ndarray, cfg: AgentConfig, map_: MazeMap) -> np.ndarray:
    """Batched observe for an (n, 3) pose array; one ray batch per call."""
    rel = ray_angles(cfg)
    ang = poses[:, 2:3] + rel[None, :]
    depths = cast_rays(map_, poses[:, 0:1], poses[:, 1:2], ang, cfg.max_range)
    return np.clip(depths / cfg.max_range, 0.0, 1.0).astype(np.float32)


def sample_free_pose(map_: MazeMap, rng: np.random.Generator, body_radius: float,
                     max_tries: int = 2000) -> Pose:
    """Uniform pose over positions whose body disc fits in free space."""
    xmax, ymax = map_.extent
    for _ in range(max_tries):
        x = float(rng.uniform(0.0, xmax))
        y = float(rng.uniform(0.0, ymax))
        if disc_free(map_, x, y, body_radius):
            return Pose(x, y, float(rng.uniform(0.0, 2.0 * math.pi)))
    raise RuntimeError(f"could not sample a free pose on map {map_.map_id}")


def sample_free_cell(map_: MazeMap, rng: np.random.Generator) -> tuple[int, int]:
    cells = map_.free_cells()
    idx = int(rng.integers(len(cells)))
    return int(cells[idx, 0]), int(cells[idx, 1])


def poses_to_array(poses: list[Pose]) -> np.ndarray:
    return np.array([[p.x, p.y, p.heading] for p in poses], dtype=np.float64)
