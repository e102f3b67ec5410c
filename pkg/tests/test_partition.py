import numpy as np
import pytest

from rodsim import state as st
from rodsim.partition import (block_ranges, partition_blocks, partition_world)
from rodsim.world import World


def test_exact_multiple_split():
    assert partition_blocks(3072, 512) == [512] * 6


def test_tiny_rod_single_block():
    assert partition_blocks(5, 512) == [5]


def test_near_balanced_split():
    assert partition_blocks(1030, 512) == [344, 343, 343]


def test_sizes_never_exceed_cap_and_cover():
    rng = np.random.default_rng(7)
    for _ in range(100):
        n = int(rng.integers(1, 5000))
        cap = int(rng.integers(2, 700))
        sizes = partition_blocks(n, cap)
        assert sum(sizes) == n
        assert max(sizes) <= cap
        assert max(sizes) - min(sizes) <= 1


def test_invalid_args_rejected():
    with pytest.raises(ValueError):
        partition_blocks(0)
    with pytest.raises(ValueError):
        partition_blocks(10, cap=1)


def _world(points_per_rod):
    w = World()
    for n in points_per_rod:
        w.add_rod(st.init_rod(n, 0.1 * n), st.RodParams())
    return w.finalize()


def test_partition_world_respects_rod_boundaries():
    w = _world([100, 50])
    part = partition_world(w, cap=40)
    assert [(b.rod, b.size) for b in part.blocks] == [
        (0, 34), (0, 33), (0, 33), (1, 25), (1, 25)]
    # block spans tile each rod's point range
    assert part.blocks[0].start == 0
    assert part.blocks[2].end == 100
    assert part.blocks[3].start == 100
    assert part.blocks[4].end == 150


def test_partition_world_max_blocks_resplit():
    w = _world([100])
    part = partition_world(w, cap=10, max_blocks=3)
    assert part.block_count == 3
    assert sum(b.size for b in part.blocks) == 100


def test_boundary_pairs_only_within_rods():
    w = _world([10, 10])
    part = partition_world(w, cap=5)
    # two blocks per rod: one boundary pair inside each rod, none across
    assert part.boundary_pairs() == [(4, 5), (14, 15)]


def test_block_ranges_arrays():
    w = _world([10])
    part = partition_world(w, cap=4)
    starts, ends = block_ranges(part)
    assert starts.dtype == np.int64
    assert list(starts) == [0, 4, 7]
    assert list(ends) == [4, 7, 10]
