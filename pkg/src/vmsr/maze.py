"""Procedural indoor maps: rooms joined by corridors on an occupancy grid.

Cells are indexed as (row, col) with world coordinates x along columns and
y along rows; cell (r, c) spans [c*cell_size, (c+1)*cell_size) in x.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import MazeGenerationError
from .util import substream

LABEL_NONE = -1
LABEL_TARGET = -2

DEFAULT_CELL_SIZE = 0.1


@dataclass(frozen=True)
class MazeSpec:
    width: int
    height: int
    room_count: int
    door_width: int = 7
    target_room_count: int = 1


@dataclass(frozen=True, eq=False)
class MazeMap:
    """Occupancy grid plus per-cell room labels.

    occupancy[r, c] is True for obstacles. room_labels holds LABEL_NONE for
    corridor/unassigned free cells, LABEL_TARGET for target-room cells and a
    non-negative room id otherwise. Instances are immutable; identity-based
    equality lets them key caches.
    """

    width: int
    height: int
    cell_size: float
    seed: int
    occupancy: np.ndarray
    room_labels: np.ndarray
    map_id: str = ""

    def __post_init__(self) -> None:
        self.occupancy.setflags(write=False)
        self.room_labels.setflags(write=False)

    @property
    def extent(self) -> tuple[float, float]:
        """World size (x_max, y_max) in meters."""
        return self.width * self.cell_size, self.height * self.cell_size

    def free_cells(self) -> np.ndarray:
        """(n, 2) array of free (row, col) pairs in row-major order."""
        rows, cols = np.nonzero(~self.occupancy)
        return np.stack([rows, cols], axis=1)

    def target_cells(self) -> np.ndarray:
        rows, cols = np.nonzero(self.room_labels == LABEL_TARGET)
        return np.stack([rows, cols], axis=1)


def _carve(occ: np.ndarray, r0: int, r1: int, c0: int, c1: int) -> None:
    h, w = occ.shape
    r0 = max(1, r0)
    c0 = max(1, c0)
    r1 = min(h - 1, r1)
    c1 = min(w - 1, c1)
    if r0 < r1 and c0 < c1:
        occ[r0:r1, c0:c1] = False


def _carve_corridor(occ: np.ndarray, a: tuple[int, int], b: tuple[int, int],
                    width: int, horizontal_first: bool) -> None:
    half = width // 2
    (ra, ca), (rb, cb) = a, b
    if horizontal_first:
        elbow_r, elbow_c = ra, cb
    else:
        elbow_r, elbow_c = rb, ca
    for (r0, c0), (r1, c1) in (((ra, ca), (elbow_r, elbow_c)),
                               ((elbow_r, elbow_c), (rb, cb))):
        rlo, rhi = sorted((r0, r1))
        clo, chi = sorted((c0, c1))
        _carve(occ,
               rlo - half, rhi - half + width,
               clo - half, chi - half + width)


def _flood_free(occ: np.ndarray, start: tuple[int, int]) -> int:
    """Count of free cells 4-connected to start."""
    h, w = occ.shape
    seen = np.zeros_like(occ, dtype=bool)
    queue: deque[tuple[int, int]] = deque([start])
    seen[start] = True
    count = 0
    while queue:
        r, c = queue.popleft()
        count += 1
        for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            rr, cc = r + dr, c + dc
            if 0 <= rr < h and 0 <= cc < w and not occ[rr, cc] and not seen[rr, cc]:
                seen[rr, cc] = True
                queue.append((rr, cc))
    return count


def room_regions(map_: MazeMap) -> list[np.ndarray]:
    """Connected components (4-connected) of room-labeled cells."""
    labeled = map_.room_labels != LABEL_NONE
    labeled &= ~map_.occupancy
    seen = np.zeros_like(labeled)
    regions = []
    h, w = labeled.shape
    for r0, c0 in zip(*np.nonzero(labeled)):
        if seen[r0, c0]:
            continue
        queue = deque([(int(r0), int(c0))])
        seen[r0, c0] = True
        cells = []
        while queue:
            r, c = queue.popleft()
            cells.append((r, c))
            for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                rr, cc = r + dr, c + dc
                if 0 <= rr < h and 0 <= cc < w and labeled[rr, cc] and not seen[rr, cc]:
                    seen[rr, cc] = True
                    queue.append((rr, cc))
        regions.append(np.array(cells, dtype=np.int32))
    return regions


def generate_maze(seed: int, spec: MazeSpec, map_id: str = "") -> MazeMap:
    """Generate an indoor layout: axis-aligned rooms, L-shaped corridors, doors.

    Pure function of (seed, spec). Raises MazeGenerationError when the spec
    cannot be satisfied after bounded retries; never returns a map with
    disconnected free space.
    """
    if spec.width < 20 or spec.height < 20:
        raise ValueError(f"map dimensions must be >= 20x20 cells, got {spec.width}x{spec.height}")
    if spec.room_count < 2:
        raise ValueError(f"room_count must be >= 2, got {spec.room_count}")
    if not (1 <= spec.target_room_count <= spec.room_count):
        raise ValueError("target_room_count must be in [1, room_count]")
    if spec.door_width < 1:
        raise ValueError("door_width must be >= 1")

    for attempt in range(24):
        rng = substream(seed & 0xFFFFFFFFFFFFFFFF, 11, attempt)
        result = _generate_attempt(rng, spec)
        if result is None:
            continue
        occ, labels = result
        return MazeMap(
            width=spec.width,
            height=spec.height,
            cell_size=DEFAULT_CELL_SIZE,
            seed=seed,
            occupancy=occ,
            room_labels=labels,
            map_id=map_id or f"maze-{seed}",
        )
    raise MazeGenerationError(f"could not generate a valid map for seed={seed} spec={spec}")


def _generate_attempt(rng: np.random.Generator, spec: MazeSpec):
    w, h = spec.width, spec.height
    occ = np.ones((h, w), dtype=bool)
    labels = np.full((h, w), LABEL_NONE, dtype=np.int16)

    room_min = max(4, spec.door_width + 2)
    room_max = max(room_min, min(w, h) // 4)

    rooms: list[tuple[int, int, int, int]] = []  # (r0, c0, rh, cw)
    tries = 0
    while len(rooms) < spec.room_count and tries < spec.room_count * 150:
        tries += 1
        cw = int(rng.integers(room_min, room_max + 1))
        rh = int(rng.integers(room_min, room_max + 1))
        if w - cw - 2 <= 2 or h - rh - 2 <= 2:
            continue
        c0 = int(rng.integers(2, w - cw - 1))
        r0 = int(rng.integers(2, h - rh - 1))
        ok = True
        for (pr, pc, ph, pw) in rooms:
            # keep a >= 2 cell wall between rooms so regions never merge
            if not (r0 + rh + 2 <= pr or pr + ph + 2 <= r0
                    or c0 + cw + 2 <= pc or pc + pw + 2 <= c0):
                ok = False
                break
        if ok:
            rooms.append((r0, c0, rh, cw))
    if len(rooms) < spec.room_count:
        return None

    for idx, (r0, c0, rh, cw) in enumerate(rooms):
        occ[r0:r0 + rh, c0:c0 + cw] = False
        labels[r0:r0 + rh, c0:c0 + cw] = idx

    centers = [(r0 + rh // 2, c0 + cw // 2) for (r0, c0, rh, cw) in rooms]
    order = rng.permutation(len(rooms))
    for i in range(len(order) - 1):
        _carve_corridor(occ, centers[order[i]], centers[order[i + 1]],
                        spec.door_width, horizontal_first=bool(rng.integers(2)))
    # a few extra connections create loops, like real floor plans
    for _ in range(max(1, spec.room_count // 3)):
        i, j = rng.choice(len(rooms), size=2, replace=False)
        _carve_corridor(occ, centers[i], centers[j],
                        spec.door_width, horizontal_first=bool(rng.integers(2)))

    occ[0, :] = occ[-1, :] = True
    occ[:, 0] = occ[:, -1] = True

    target_ids = rng.choice(len(rooms), size=spec.target_room_count, replace=False)
    for tid in target_ids:
        labels[(labels == tid) & ~occ] = LABEL_TARGET
    labels[occ] = LABEL_NONE

    free = np.argwhere(~occ)
    if len(free) == 0:
        return None
    if _flood_free(occ, tuple(free[0])) != len(free):
        return None
    if not (labels == LABEL_TARGET).any():
        return None
    return occ, labels


# ---------------------------------------------------------------------------
# Text serialization: header line then one character row per grid row.
#   '#' obstacle, '.' unlabeled free, 'T' target-room free, digit = room id % 10

def maze_to_text(map_: MazeMap) -> str:
    lines = [f"MAZE v1 {map_.width} {map_.height} {map_.cell_size!r} {map_.seed}"]
    for r in range(map_.height):
        chars = []
        for c in range(map_.width):
            if map_.occupancy[r, c]:
                chars.append("#")
            elif map_.room_labels[r, c] == LABEL_TARGET:
                chars.append("T")
            elif map_.room_labels[r, c] >= 0:
                chars.append(str(int(map_.room_labels[r, c]) % 10))
            else:
                chars.append(".")
        lines.append("".join(chars))
    return "\n".join(lines) + "\n"


def maze_from_text(text: str, map_id: str = "") -> MazeMap:
    lines = text.strip("\n").split("\n")
    header = lines[0].split()
    if len(header) != 6 or header[0] != "MAZE" or header[1] != "v1":
        raise ValueError(f"bad maze header: {lines[0]!r}")
    width, height = int(header[2]), int(header[3])
    cell_size, seed = float(header[4]), int(header[5])
    if len(lines) != height + 1:
        raise ValueError(f"expected {height} rows, got {len(lines) - 1}")
    occ = np.ones((height, width), dtype=bool)
    labels = np.full((height, width), LABEL_NONE, dtype=np.int16)
    for r, line in enumerate(lines[1:]):
        if len(line) != width:
            raise ValueError(f"row {r} has length {len(line)}, expected {width}")
        for c, ch in enumerate(line):
            if ch == "#":
                continue
            occ[r, c] = False
            if ch == "T":
                labels[r, c] = LABEL_TARGET
            elif ch != ".":
                labels[r, c] = int(ch)
    return MazeMap(width=width, height=height, cell_size=cell_size, seed=seed,
                   occupancy=occ, room_labels=labels, map_id=map_id)


def save_maze(map_: MazeMap, path: str | Path) -> None:
    Path(path).write_text(maze_to_text(map_), encoding="utf-8")


def load_maze(path: str | Path) -> MazeMap:
    p = Path(path)
    return maze_from_text(p.read_text(encoding="utf-8"), map_id=p.stem)
