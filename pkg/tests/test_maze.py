from collections import deque

import numpy as np
import pytest

from vmsr.maze import (LABEL_NONE, LABEL_TARGET, MazeSpec, generate_maze,
                       load_maze, maze_from_text, maze_to_text, room_regions,
                       save_maze)

SPEC = MazeSpec(width=40, height=40, room_count=4, door_width=5)


def bfs_reachable(occ, start):
    """Independent flood-fill oracle (4-connected)."""
    h, w = occ.shape
    seen = {start}
    queue = deque([start])
    while queue:
        r, c = queue.popleft()
        for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            rr, cc = r + dr, c + dc
            if 0 <= rr < h and 0 <= cc < w and not occ[rr, cc] and (rr, cc) not in seen:
                seen.add((rr, cc))
                queue.append((rr, cc))
    return seen


def test_determinism_bit_identical():
    a = generate_maze(123, SPEC)
    b = generate_maze(123, SPEC)
    assert np.array_equal(a.occupancy, b.occupancy)
    assert np.array_equal(a.room_labels, b.room_labels)


def test_different_seeds_differ():
    a = generate_maze(1, SPEC)
    b = generate_maze(2, SPEC)
    assert not np.array_equal(a.occupancy, b.occupancy)


@pytest.mark.parametrize("seed", range(8))
def test_free_space_connected(seed):
    m = generate_maze(seed, SPEC)
    free = np.argwhere(~m.occupancy)
    reached = bfs_reachable(m.occupancy, tuple(free[0]))
    assert len(reached) == len(free)


@pytest.mark.parametrize("seed", range(8))
def test_borders_are_obstacles(seed):
    m = generate_maze(seed, SPEC)
    assert m.occupancy[0, :].all() and m.occupancy[-1, :].all()
    assert m.occupancy[:, 0].all() and m.occupancy[:, -1].all()


def test_has_target_cells():
    m = generate_maze(5, SPEC)
    assert (m.room_labels == LABEL_TARGET).sum() > 0


def test_two_rooms_and_corridor_on_20x20():
    m = generate_maze(9, MazeSpec(width=20, height=20, room_count=2, door_width=3))
    regions = room_regions(m)
    assert len(regions) == 2
    corridor = (~m.occupancy) & (m.room_labels == LABEL_NONE)
    assert corridor.sum() >= 1


def test_degenerate_spec_rejected():
    with pytest.raises(ValueError):
        generate_maze(0, MazeSpec(width=10, height=10, room_count=2))
    with pytest.raises(ValueError):
        generate_maze(0, MazeSpec(width=30, height=30, room_count=1))
    with pytest.raises(ValueError):
        generate_maze(0, MazeSpec(width=30, height=30, room_count=2, target_room_count=3))


def test_text_round_trip(tmp_path):
    m = generate_maze(42, SPEC)
    text = maze_to_text(m)
    m2 = maze_from_text(text)
    assert np.array_equal(m.occupancy, m2.occupancy)
    assert np.array_equal(m.room_labels, m2.room_labels)
    assert (m2.width, m2.height, m2.cell_size, m2.seed) == (m.width, m.height, m.cell_size, m.seed)
    assert maze_to_text(m2) == text

    path = tmp_path / "a.maze"
    save_maze(m, path)
    m3 = load_maze(path)
    assert np.array_equal(m.occupancy, m3.occupancy)
    assert m3.map_id == "a"


def test_header_format():
    m = generate_maze(7, SPEC)
    header = maze_to_text(m).split("\n")[0]
    assert header == f"MAZE v1 {m.width} {m.height} {m.cell_size!r} {m.seed}"


def test_maps_immutable():
    m = generate_maze(3, SPEC)
    with pytest.raises(ValueError):
        m.occupancy[0, 0] = False
