"""
Checkpoint Storage Module

Binary formats for trained networks and raw sample stacks.

Checkpoint layout (all integers little-endian):
    b"UQCPNT1\\0"
    uint64   length of the metadata
    bytes    UTF-8 JSON metadata (regime, class count, network config, ...)
    repeated, in sorted name order:
        uint32  name length, name bytes (UTF-8)
        uint32  rank, rank × uint32 extents
        float32 values, row-major

Sample stack layout:
    uint32 K, uint32 P, uint32 m, then K·P·m float32 values.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from src.autodiff.rng import RngStream
from src.core.errors import CloudFormatError, DimensionError
from src.inference.sampling import SampleStack
from src.model.arch import NetConfig, SegNet, init_params
from src.storage.atomic import AtomicFile

# Default logger - will be replaced by the configured logger
logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

MAGIC = b"UQCPNT1\0"
FORMAT_VERSION = 1


def _u32(value: int) -> bytes:
    return np.array([value], dtype='<u4').tobytes()


class _Cursor:
    """Sequential reader over a byte buffer with bounds checks."""

    def __init__(self, payload: bytes, source: str):
        self.payload = payload
        self.source = source
        self.offset = 0

    def take(self, size: int) -> bytes:
        if self.offset + size > len(self.payload):
            raise CloudFormatError(f"{self.source}: truncated at byte {self.offset}")
        chunk = self.payload[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def u32(self) -> int:
        return int(np.frombuffer(self.take(4), dtype='<u4')[0])

    def u64(self) -> int:
        return int(np.frombuffer(self.take(8), dtype='<u8')[0])

    @property
    def exhausted(self) -> bool:
        return self.offset == len(self.payload)


def encode_checkpoint(net: SegNet, extra: Optional[Dict[str, Any]] = None) -> bytes:
    """Serialize a network; equal parameters and metadata give equal bytes."""
    metadata = {
        'format': FORMAT_VERSION,
        'regime': net.cfg.regime,
        'num_classes': net.cfg.num_classes,
        'net_config': net.cfg.to_dict(),
    }
    if extra:
        metadata.update(extra)
    meta_bytes = json.dumps(metadata, sort_keys=True, separators=(',', ':')).encode('utf-8')

    tensors = {name: t.data for name, t in net.named_parameters().items()}
    tensors.update(net.named_buffers())

    parts = [MAGIC, np.array([len(meta_bytes)], dtype='<u8').tobytes(), meta_bytes]
    for name in sorted(tensors):
        array = np.asarray(tensors[name], dtype='<f4', order='C')
        encoded = name.encode('utf-8')
        parts.append(_u32(len(encoded)))
        parts.append(encoded)
        parts.append(_u32(array.ndim))
        parts.extend(_u32(extent) for extent in array.shape)
        parts.append(array.tobytes())
    return b"".join(parts)


def decode_checkpoint(payload: bytes, source: str = "<checkpoint>") -> Tuple[SegNet, Dict[str, Any]]:
    """Rebuild a network and its metadata from checkpoint bytes."""
    cursor = _Cursor(payload, source)
    if cursor.take(len(MAGIC)) != MAGIC:
        raise CloudFormatError(f"{source}: not a checkpoint (bad magic)")
    try:
        metadata = json.loads(cursor.take(cursor.u64()).decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CloudFormatError(f"{source}: unreadable metadata ({e})")

    tensors: Dict[str, np.ndarray] = {}
    while not cursor.exhausted:
        name = cursor.take(cursor.u32()).decode('utf-8')
        rank = cursor.u32()
        shape = tuple(cursor.u32() for _ in range(rank))
        count = int(np.prod(shape)) if shape else 1
        tensors[name] = np.frombuffer(cursor.take(4 * count), dtype='<f4').reshape(shape)

    cfg = NetConfig.from_dict(metadata['net_config'])
    net = init_params(cfg, RngStream(0))
    load_tensors(net, tensors, source)
    return net, metadata


def load_tensors(net: SegNet, tensors: Dict[str, np.ndarray], source: str = "<checkpoint>"):
    """Copy named arrays into a network's parameters and buffers in place."""
    params = net.named_parameters()
    buffers = net.named_buffers()
    expected = set(params) | set(buffers)
    missing = sorted(expected - set(tensors))
    unexpected = sorted(set(tensors) - expected)
    if missing or unexpected:
        raise CloudFormatError(f"{source}: tensor names differ (missing {missing[:3]}, unexpected {unexpected[:3]})")
    for name, array in tensors.items():
        target = params[name].data if name in params else buffers[name]
        if target.shape != array.shape:
            raise DimensionError(f"{source}: tensor {name} has shape {array.shape}, expected {target.shape}")
        target[...] = array


def save_checkpoint(path: PathLike, net: SegNet, extra: Optional[Dict[str, Any]] = None) -> Path:
    path = AtomicFile().atomic_bytes_update(path, encode_checkpoint(net, extra))
    logger.info(f"✅ Saved {net.cfg.regime} checkpoint to {path}")
    return path


def load_checkpoint(path: PathLike) -> Tuple[SegNet, Dict[str, Any]]:
    path = Path(path)
    net, metadata = decode_checkpoint(path.read_bytes(), str(path))
    logger.debug(f"🔍 Loaded {net.cfg.regime} checkpoint from {path}")
    return net, metadata


def encode_stack(stack: SampleStack) -> bytes:
    header = np.array([stack.K, stack.P, stack.m], dtype='<u4').tobytes()
    return header + np.ascontiguousarray(stack.values, dtype='<f4').tobytes()


def decode_stack(payload: bytes, source: str = "<stack>") -> SampleStack:
    cursor = _Cursor(payload, source)
    K, P, m = cursor.u32(), cursor.u32(), cursor.u32()
    values = np.frombuffer(cursor.take(4 * K * P * m), dtype='<f4').reshape(K, P, m)
    if not cursor.exhausted:
        raise CloudFormatError(f"{source}: trailing bytes after {K}×{P}×{m} values")
    return SampleStack(values.astype(np.float64), regime="unknown")


def save_stack(path: PathLike, stack: SampleStack) -> Path:
    return AtomicFile().atomic_bytes_update(path, encode_stack(stack))


def load_stack(path: PathLike) -> SampleStack:
    path = Path(path)
    return decode_stack(path.read_bytes(), str(path))
