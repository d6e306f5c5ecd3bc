"""
Cloud I/O Module

Reads and writes point clouds in two formats:

- ASCII: one point per line, `x y z r g b [label]`, whitespace separated.
- PLY: binary little-endian, one `vertex` element with float x, y, z,
  uchar red, green, blue and an optional int label.

The format is detected from the file content, not the extension.
"""

import io
import logging
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from src.core.errors import CloudFormatError
from src.data.models import PointCloud
from src.storage.atomic import AtomicFile

# Default logger - will be replaced by the configured logger
logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

PLY_MAGIC = b"ply"
PLY_TYPES = {
    'float': '<f4', 'float32': '<f4',
    'uchar': 'u1', 'uint8': 'u1',
    'int': '<i4', 'int32': '<i4',
}
PLY_PROPERTIES = {
    'x': ('float', 'float32'), 'y': ('float', 'float32'), 'z': ('float', 'float32'),
    'red': ('uchar', 'uint8'), 'green': ('uchar', 'uint8'), 'blue': ('uchar', 'uint8'),
    'label': ('int', 'int32'),
}
REQUIRED_PROPERTIES = ('x', 'y', 'z', 'red', 'green', 'blue')


class CloudReader:
    """Parses ASCII and PLY clouds into PointCloud objects."""

    def set_logger(self, custom_logger):
        """Set a custom logger for the reader."""
        global logger
        logger = custom_logger

    def load(self, path: PathLike) -> PointCloud:
        path = Path(path)
        with open(path, 'rb') as f:
            head = f.read(len(PLY_MAGIC) + 1)
        if head.rstrip(b"\r\n") == PLY_MAGIC:
            cloud = self._read_ply(path)
        else:
            cloud = self._read_ascii(path)
        logger.debug(f"🔍 Loaded {len(cloud)} points from {path}")
        return cloud

    # ASCII

    def _read_ascii(self, path: Path) -> PointCloud:
        try:
            frame = pd.read_csv(path, sep=r"\s+", header=None, dtype=str,
                                skip_blank_lines=False)
        except pd.errors.EmptyDataError:
            raise CloudFormatError(f"{path}: file contains no points")
        except pd.errors.ParserError as e:
            raise CloudFormatError(f"{path}: {e}")

        # Index i is line i + 1
        frame.index = frame.index + 1
        frame = frame.dropna(how="all")
        if frame.empty:
            raise CloudFormatError(f"{path}: file contains no points")

        widths = frame.notna().sum(axis=1)
        short = widths[(widths < 6) | (widths > 7)]
        if not short.empty:
            raise CloudFormatError(
                f"{path}, line {short.index[0]}: expected 6 or 7 fields, got {short.iloc[0]}")
        width = int(widths.iloc[0])
        mixed = widths[widths != width]
        if not mixed.empty:
            raise CloudFormatError(
                f"{path}, line {mixed.index[0]}: expected {width} fields like line {widths.index[0]}, "
                f"got {mixed.iloc[0]}")

        numeric = frame.iloc[:, :width].apply(pd.to_numeric, errors="coerce")
        bad = numeric.index[numeric.isna().any(axis=1)]
        if len(bad):
            raise CloudFormatError(f"{path}, line {bad[0]}: non-numeric value")

        values = numeric.to_numpy(dtype=np.float64)
        colors = values[:, 3:6]
        bad_color = (colors < 0) | (colors > 255) | (colors != np.round(colors))
        if bad_color.any():
            line = numeric.index[bad_color.any(axis=1)][0]
            raise CloudFormatError(f"{path}, line {line}: colors must be integers in [0, 255]")
        labels = None
        if width == 7:
            raw = values[:, 6]
            bad_label = (raw < 0) | (raw != np.round(raw))
            if bad_label.any():
                line = numeric.index[bad_label][0]
                raise CloudFormatError(f"{path}, line {line}: label must be a non-negative integer")
            labels = raw.astype(np.int32)
        if not np.all(np.isfinite(values[:, :3])):
            line = numeric.index[~np.isfinite(values[:, :3]).all(axis=1)][0]
            raise CloudFormatError(f"{path}, line {line}: non-finite coordinate")

        return PointCloud(values[:, :3], colors.astype(np.uint8), labels, source_id=path.stem)

    # PLY

    def _read_header(self, path: Path, f) -> Tuple[int, List[Tuple[str, str]]]:
        count: Optional[int] = None
        properties: List[Tuple[str, str]] = []
        line_no = 0
        while True:
            raw = f.readline()
            line_no += 1
            if not raw:
                raise CloudFormatError(f"{path}: PLY header has no end_header")
            line = raw.decode('ascii', errors='replace').strip()
            if line_no == 1:
                continue
            if not line or line.startswith(('comment', 'obj_info')):
                continue
            tokens = line.split()
            if tokens[0] == 'end_header':
                break
            if tokens[0] == 'format':
                if tokens[1:] != ['binary_little_endian', '1.0']:
                    raise CloudFormatError(f"{path}, line {line_no}: unsupported PLY format '{' '.join(tokens[1:])}'")
            elif tokens[0] == 'element':
                if len(tokens) != 3 or tokens[1] != 'vertex' or count is not None:
                    raise CloudFormatError(f"{path}, line {line_no}: only a single 'vertex' element is supported")
                if not tokens[2].isdigit():
                    raise CloudFormatError(f"{path}, line {line_no}: invalid vertex count {tokens[2]!r}")
                count = int(tokens[2])
            elif tokens[0] == 'property':
                if len(tokens) != 3:
                    raise CloudFormatError(f"{path}, line {line_no}: malformed property '{line}'")
                kind, name = tokens[1], tokens[2]
                if name not in PLY_PROPERTIES:
                    raise CloudFormatError(f"{path}, line {line_no}: unknown PLY property '{name}'")
                if kind not in PLY_PROPERTIES[name]:
                    raise CloudFormatError(f"{path}, line {line_no}: property '{name}' has unsupported type '{kind}'")
                properties.append((name, kind))
            else:
                raise CloudFormatError(f"{path}, line {line_no}: unexpected header line '{line}'")
        if count is None:
            raise CloudFormatError(f"{path}: PLY header declares no vertex element")
        missing = [name for name in REQUIRED_PROPERTIES if name not in dict(properties)]
        if missing:
            raise CloudFormatError(f"{path}: PLY vertex lacks properties {missing}")
        return count, properties

    def _read_ply(self, path: Path) -> PointCloud:
        with open(path, 'rb') as f:
            count, properties = self._read_header(path, f)
            payload = f.read()
        dtype = np.dtype([(name, PLY_TYPES[kind]) for name, kind in properties])
        expected = count * dtype.itemsize
        if len(payload) < expected:
            raise CloudFormatError(f"{path}: PLY body holds {len(payload)} bytes, expected {expected}")
        records = np.frombuffer(payload, dtype=dtype, count=count)
        xyz = np.stack([records['x'], records['y'], records['z']], axis=1).astype(np.float64)
        rgb = np.stack([records['red'], records['green'], records['blue']], axis=1)
        labels = records['label'].astype(np.int32) if 'label' in dtype.names else None
        return PointCloud(xyz, rgb, labels, source_id=path.stem)


def ply_bytes(xyz: np.ndarray, rgb: np.ndarray, labels: Optional[np.ndarray] = None) -> bytes:
    """Encode points as a binary little-endian PLY file."""
    fields = [('x', '<f4'), ('y', '<f4'), ('z', '<f4'), ('red', 'u1'), ('green', 'u1'), ('blue', 'u1')]
    if labels is not None:
        fields.append(('label', '<i4'))
    records = np.empty(len(xyz), dtype=np.dtype(fields))
    for axis, name in enumerate(('x', 'y', 'z')):
        records[name] = xyz[:, axis]
    for channel, name in enumerate(('red', 'green', 'blue')):
        records[name] = rgb[:, channel]
    if labels is not None:
        records['label'] = labels

    header = io.StringIO()
    header.write("ply\n")
    header.write("format binary_little_endian 1.0\n")
    header.write(f"element vertex {len(xyz)}\n")
    for name, kind in fields:
        ply_kind = {'<f4': 'float', 'u1': 'uchar', '<i4': 'int'}[kind]
        header.write(f"property {ply_kind} {name}\n")
    header.write("end_header\n")
    return header.getvalue().encode('ascii') + records.tobytes()


def write_ply(path: PathLike, xyz: np.ndarray, rgb: np.ndarray, labels: Optional[np.ndarray] = None) -> Path:
    return AtomicFile().atomic_bytes_update(path, ply_bytes(xyz, rgb, labels))


def write_ascii(path: PathLike, cloud: PointCloud) -> Path:
    frame = cloud.to_frame()
    return AtomicFile().atomic_csv_update(path, frame, sep=" ", header=False, float_format="%.9g")


def load_cloud(path: PathLike) -> PointCloud:
    """
    Load an ASCII or binary PLY point cloud.

    Raises:
        CloudFormatError: On malformed lines (with line number) or unknown PLY properties
    """
    return CloudReader().load(path)


def write_cloud(cloud: PointCloud, path: PathLike, fmt: Optional[str] = None) -> Path:
    """
    Write a cloud as PLY or ASCII.

    Args:
        cloud: Cloud to write
        path: Output path
        fmt: 'ply' or 'ascii'; by default chosen from the suffix (.ply -> PLY)
    """
    path = Path(path)
    fmt = fmt or ('ply' if path.suffix.lower() == '.ply' else 'ascii')
    if fmt == 'ply':
        return write_ply(path, cloud.xyz, cloud.rgb, cloud.labels)
    if fmt == 'ascii':
        return write_ascii(path, cloud)
    raise CloudFormatError(f"Unknown cloud format '{fmt}'")


def list_clouds(directory: PathLike) -> List[Path]:
    """Cloud files (.ply, .txt, .xyz, .pts) in a directory, sorted by name."""
    directory = Path(directory)
    suffixes = {'.ply', '.txt', '.xyz', '.pts'}
    return sorted(p for p in directory.iterdir() if p.is_file() and p.suffix.lower() in suffixes)
