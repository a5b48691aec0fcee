import heapq
import math

import numpy as np
import pytest

from vmsr.geodesic import geodesic_field
from vmsr.maze import MazeMap, MazeSpec, generate_maze, LABEL_NONE

SQRT2 = math.sqrt(2.0)


def dijkstra_oracle(map_, source):
    """Hand-written single-source Dijkstra, independent of the module under test."""
    occ = map_.occupancy
    h, w = occ.shape
    cs = map_.cell_size
    dist = {source: 0.0}
    heap = [(0.0, source)]
    while heap:
        d, (r, c) = heapq.heappop(heap)
        if d > dist.get((r, c), math.inf):
            continue
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                if dr == 0 and dc == 0:
                    continue
                rr, cc = r + dr, c + dc
                if not (0 <= rr < h and 0 <= cc < w) or occ[rr, cc]:
                    continue
                nd = d + (cs * SQRT2 if dr and dc else cs)
                if nd < dist.get((rr, cc), math.inf) - 1e-15:
                    dist[(rr, cc)] = nd
                    heapq.heappush(heap, (nd, (rr, cc)))
    return dist


def corridor_map(length=20, cell_size=0.1):
    """L-shaped corridor one cell wide inside a walled box."""
    n = length + 4
    occ = np.ones((n, n), dtype=bool)
    occ[2, 2:2 + length] = False         # horizontal leg
    occ[2:2 + length, 2 + length - 1] = False  # vertical leg
    labels = np.full((n, n), LABEL_NONE, dtype=np.int16)
    return MazeMap(width=n, height=n, cell_size=cell_size, seed=0,
                   occupancy=occ, room_labels=labels, map_id="corridor")


def test_source_distance_zero():
    m = generate_maze(1, MazeSpec(30, 30, 2, door_width=3))
    src = tuple(m.free_cells()[0])
    f = geodesic_field(m, [src])
    assert f[src] == 0.0


def test_adjacent_cell_cost():
    m = corridor_map()
    f = geodesic_field(m, [(2, 2)])
    assert f[2, 3] == pytest.approx(m.cell_size)


def test_l_corridor_distance():
    m = corridor_map(length=20)
    f = geodesic_field(m, [(2, 2)])
    far = (2 + 20 - 1, 2 + 20 - 1)
    expected = (19 + 19) * m.cell_size
    assert abs(f[far] - expected) <= m.cell_size * SQRT2 + 1e-9


def test_empty_sources_error():
    m = corridor_map()
    with pytest.raises(ValueError):
        geodesic_field(m, [])


def test_obstacle_source_error():
    m = corridor_map()
    with pytest.raises(ValueError):
        geodesic_field(m, [(0, 0)])


def test_obstacles_unreachable():
    m = corridor_map()
    f = geodesic_field(m, [(2, 2)])
    assert np.isinf(f[m.occupancy]).all()


@pytest.mark.parametrize("seed", range(6))
def test_matches_dijkstra_oracle(seed):
    m = generate_maze(seed, MazeSpec(30, 30, 2, door_width=3))
    rng = np.random.default_rng(seed)
    cells = m.free_cells()
    src = tuple(cells[rng.integers(len(cells))])
    f = geodesic_field(m, [src])
    oracle = dijkstra_oracle(m, src)
    for (r, c), d in oracle.items():
        assert f[r, c] == pytest.approx(d, abs=1e-9)
    finite = np.argwhere(np.isfinite(f))
    assert len(finite) == len(oracle)


def test_multi_source_is_min_of_singles():
    m = generate_maze(4, MazeSpec(30, 30, 3, door_width=3))
    cells = m.free_cells()
    rng = np.random.default_rng(0)
    picks = [tuple(cells[i]) for i in rng.choice(len(cells), size=3, replace=False)]
    multi = geodesic_field(m, picks)
    singles = np.min([geodesic_field(m, [p]) for p in picks], axis=0)
    assert np.allclose(np.nan_to_num(multi, posinf=1e18),
                       np.nan_to_num(singles, posinf=1e18))


def test_triangle_inequality_sampled():
    m = generate_maze(8, MazeSpec(30, 30, 3, door_width=3))
    cells = m.free_cells()
    rng = np.random.default_rng(1)
    for _ in range(30):
        a, b, c = (tuple(cells[i]) for i in rng.choice(len(cells), size=3, replace=False))
        fa = geodesic_field(m, [a])
        fb = geodesic_field(m, [b])
        assert fa[c] <= fa[b] + fb[c] + 1e-9
