"""
Block Pipeline Module

Cuts clouds into xy-grid blocks, resamples each block to exactly 4096 rows,
builds the 9-column features and maps per-row predictions back onto the
original points.

Feature columns of a block:
    0-2  xyz minus the block centroid
    3-5  rgb / 255
    6-8  original xyz
"""

import logging
import math
from typing import List, Optional, Sequence

import numpy as np

from src.autodiff.rng import RngStream
from src.core.errors import ContractError, CoverageError, DimensionError
from src.data.models import BLOCK_POINTS, Block, PointCloud
from src.inference.sampling import SampleStack

# Default logger - will be replaced by the configured logger
logger = logging.getLogger(__name__)


def _window_starts(low: float, high: float, block_size: float, stride: float) -> np.ndarray:
    origin = math.floor(low / stride) * stride
    count = int(math.ceil(max(high - origin - block_size, 0.0) / stride)) + 1
    return origin + stride * np.arange(count)


def _axis_membership(values: np.ndarray, starts: np.ndarray, block_size: float,
                     stride: float) -> List[np.ndarray]:
    # Own cell by integer index; float edges (start + size) can leave gaps between cells
    cells = np.clip(np.floor((values - starts[0]) / stride).astype(np.int64), 0, starts.size - 1)
    masks = []
    for i, start in enumerate(starts):
        member = cells == i
        if stride < block_size:
            member |= (values >= start) & (values <= start + block_size)
        masks.append(member)
    return masks


def split_blocks(cloud: PointCloud, block_size: float = 1.0, stride: float = 1.0) -> List[np.ndarray]:
    """
    Partition a cloud into axis-aligned xy cells of full height.

    Cells start on multiples of the stride. Every point is assigned to the
    cell given by its integer cell index, so with stride == block_size each
    point lands in exactly one cell. Overlapping windows (stride < block_size)
    also take every point within their span. Empty cells are skipped.

    Args:
        cloud: Source cloud
        block_size: Cell edge length in meters
        stride: Distance between cell origins in meters

    Returns:
        List of index arrays into the cloud
    """
    if block_size <= 0:
        raise ContractError(f"block_size must be positive, got {block_size}")
    if not 0 < stride <= block_size:
        raise ContractError(f"stride must lie in (0, block_size], got {stride}")
    if len(cloud) == 0:
        return []

    x, y = cloud.xyz[:, 0], cloud.xyz[:, 1]
    in_xs = _axis_membership(x, _window_starts(x.min(), x.max(), block_size, stride), block_size, stride)
    in_ys = _axis_membership(y, _window_starts(y.min(), y.max(), block_size, stride), block_size, stride)

    blocks = []
    for in_x in in_xs:
        if not in_x.any():
            continue
        for in_y in in_ys:
            members = np.flatnonzero(in_x & in_y)
            if members.size:
                blocks.append(members)
    return blocks


def resample_to_4096(indices: np.ndarray, rng: RngStream) -> np.ndarray:
    """
    Bring a block to exactly 4096 rows.

    More than 4096 points: uniform sample without replacement. Fewer: every
    point once, topped up by uniform draws with replacement.
    """
    indices = np.asarray(indices, dtype=np.int64)
    n = indices.size
    if n == 0:
        raise ContractError("Cannot resample an empty block")
    if n == BLOCK_POINTS:
        return indices.copy()
    if n > BLOCK_POINTS:
        return indices[rng.choice(n, BLOCK_POINTS, replace=False)]
    extra = indices[rng.choice(n, BLOCK_POINTS - n, replace=True)]
    return np.concatenate([indices, extra])


def chunk_for_evaluation(indices: np.ndarray, rng: RngStream) -> List[np.ndarray]:
    """
    Cover every point of a block with 4096-row chunks.

    The points are shuffled and cut into ceil(n / 4096) chunks; the last
    chunk is padded with repeated points of the block.
    """
    indices = np.asarray(indices, dtype=np.int64)
    n = indices.size
    if n == 0:
        raise ContractError("Cannot chunk an empty block")
    shuffled = indices[rng.permutation(n)]
    chunks = []
    for start in range(0, n, BLOCK_POINTS):
        chunk = shuffled[start:start + BLOCK_POINTS]
        if chunk.size < BLOCK_POINTS:
            chunk = np.concatenate([chunk, indices[rng.choice(n, BLOCK_POINTS - chunk.size, replace=True)]])
        chunks.append(chunk)
    return chunks


def featurize(cloud: PointCloud, indices: np.ndarray) -> Block:
    """Build the 4096×9 feature matrix for the given rows of a cloud."""
    indices = np.asarray(indices, dtype=np.int64)
    if indices.size and (indices.min() < 0 or indices.max() >= len(cloud)):
        raise ContractError(f"Block indices out of range for a cloud of {len(cloud)} points")
    xyz = cloud.xyz[indices]
    centered = xyz - xyz.mean(axis=0)
    colors = cloud.rgb[indices].astype(np.float64) / 255.0
    features = np.concatenate([centered, colors, xyz], axis=1)
    labels = None if cloud.labels is None else cloud.labels[indices]
    return Block(indices, features, labels)


def training_blocks(cloud: PointCloud, rng: RngStream, block_size: float = 1.0,
                    stride: float = 1.0) -> List[Block]:
    """One resampled block per non-empty cell; cell i draws from rng.split(i)."""
    return [featurize(cloud, resample_to_4096(cell, rng.split(i)))
            for i, cell in enumerate(split_blocks(cloud, block_size, stride))]


def evaluation_blocks(cloud: PointCloud, rng: RngStream, block_size: float = 1.0) -> List[Block]:
    """Blocks covering every point of the cloud at least once."""
    blocks = []
    for i, cell in enumerate(split_blocks(cloud, block_size, block_size)):
        blocks.extend(featurize(cloud, chunk) for chunk in chunk_for_evaluation(cell, rng.split(i)))
    return blocks


def assemble_predictions(cloud: PointCloud, blocks: Sequence[Block],
                         stacks: Sequence[SampleStack]) -> SampleStack:
    """
    Map per-row samples back to the original points.

    Rows that hit the same point (duplicates or overlapping blocks) are
    averaged per sample index, then every row is renormalized.

    Raises:
        CoverageError: If some original point received no prediction
    """
    if len(blocks) != len(stacks):
        raise DimensionError(f"{len(blocks)} blocks but {len(stacks)} sample stacks")
    if not stacks:
        raise CoverageError(f"No predictions for cloud {cloud.source_id}")
    K, m = stacks[0].K, stacks[0].m
    n = len(cloud)
    totals = np.zeros((K, n, m))
    hits = np.zeros(n, dtype=np.int64)
    for block, stack in zip(blocks, stacks):
        if stack.K != K or stack.m != m or stack.P != block.indices.size:
            raise DimensionError(
                f"Stack {stack.values.shape} does not match block of {block.indices.size} rows, K={K}, m={m}")
        np.add.at(totals, (slice(None), block.indices), stack.values)
        hits += np.bincount(block.indices, minlength=n)

    uncovered = np.flatnonzero(hits == 0)
    if uncovered.size:
        raise CoverageError(
            f"{uncovered.size} points of cloud {cloud.source_id or '<unnamed>'} received no prediction "
            f"(first index {uncovered[0]})")

    averaged = totals / hits[None, :, None]
    averaged /= averaged.sum(axis=-1, keepdims=True)
    return SampleStack(averaged, stacks[0].regime)


def block_labels(blocks: Sequence[Block]) -> Optional[np.ndarray]:
    """Stack per-block labels into an n×4096 array (None if unlabeled)."""
    if not blocks or blocks[0].labels is None:
        return None
    return np.stack([block.labels for block in blocks])
