"""Assignment of contiguous element spans to worker blocks."""

from dataclasses import dataclass

import numpy as np

DEFAULT_BLOCK_CAP = 512


@dataclass
class Block:
    rod: int
    start: int   # global point index, inclusive
    end: int     # global point index, exclusive

    @property
    def size(self):
        return self.end - self.start


@dataclass
class BlockPartition:
    blocks: list
    cap: int

    @property
    def block_count(self):
        return len(self.blocks)

    def boundary_pairs(self):
        """(last element of block k, first element of block k+1) per rod."""
        pairs = []
        for a, b in zip(self.blocks, self.blocks[1:]):
            if a.rod == b.rod:
                pairs.append((a.end - 1, b.start))
        return pairs


def partition_blocks(n, cap=DEFAULT_BLOCK_CAP):
    """Balanced split of n elements into ceil(n/cap) blocks.

    Block sizes differ by at most one and never exceed the cap.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if cap < 2:
        raise ValueError("cap must be >= 2")
    b = -(-n // cap)
    base = n // b
    rem = n % b
    return [base + 1 if k < rem else base for k in range(b)]


def partition_world(world, cap=DEFAULT_BLOCK_CAP, max_blocks=None):
    """Per-rod block partition over mass points, concatenated across rods."""
    blocks = []
    for info in world.rod_infos:
        sizes = partition_blocks(info.num_points, cap)
        if max_blocks is not None and len(sizes) > max_blocks:
            # Re-split with a larger cap so the block count fits.
            cap_r = -(-info.num_points // max_blocks)
            sizes = partition_blocks(info.num_points, max(cap_r, 2))
        start = info.point_offset
        for s in sizes:
            blocks.append(Block(info.index, start, start + s))
            start += s
    return BlockPartition(blocks, cap)


def block_ranges(partition):
    """(start, end) point spans as arrays for the compiled kernels."""
    starts = np.array([b.start for b in partition.blocks], dtype=np.int64)
    ends = np.array([b.end for b in partition.blocks], dtype=np.int64)
    return starts, ends
