"""
Synthetic Scene Generator

Deterministic labeled indoor scenes built from planar primitives: floor,
ceiling, four walls, interior columns, boxes standing on the floor and
small clutter blobs. Each class is sampled uniformly over its surfaces,
colored from a per-class base color plus Gaussian noise, and may lose
rectangular patches (occlusion holes) on every planar face.

Floor points lie exactly on z == 0, ceiling points on z == height and wall
points exactly on the boundary planes.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.autodiff.rng import RngStream
from src.core.errors import ContractError
from src.data.models import PointCloud

# Default logger - will be replaced by the configured logger
logger = logging.getLogger(__name__)

DEFAULT_CLASSES = ("floor", "ceiling", "wall", "column", "box", "clutter")
DEFAULT_RATIOS = (1.0, 2.0, 1.0, 0.5, 1.0, 0.75)

BASE_COLORS: Dict[str, Tuple[int, int, int]] = {
    "floor": (120, 100, 80),
    "ceiling": (230, 230, 225),
    "wall": (190, 180, 160),
    "column": (150, 150, 155),
    "box": (170, 120, 60),
    "clutter": (60, 90, 160),
}

COLUMN_SIDE = 0.3
CLUTTER_RADIUS = 0.15
HOLE_FRACTION = (0.2, 0.4)
MIN_FOOTPRINT = 1.0
MIN_HEIGHT = 0.5


@dataclass
class SceneSpec:
    """Parameters of one synthetic room."""
    extents: Tuple[float, float, float] = (6.0, 4.0, 3.0)
    classes: Tuple[str, ...] = DEFAULT_CLASSES
    points_per_class: int = 3000
    ratios: Tuple[float, ...] = DEFAULT_RATIOS
    hole_probability: float = 0.3
    color_noise_std: float = 8.0
    seed: int = 0
    columns: int = 2
    boxes: int = 3
    clutter_blobs: int = 5

    def __post_init__(self):
        self.extents = tuple(float(v) for v in self.extents)
        self.classes = tuple(self.classes)
        self.ratios = tuple(float(v) for v in self.ratios)
        if len(self.extents) != 3 or min(self.extents) <= 0:
            raise ContractError(f"Room extents must be three positive lengths, got {self.extents}")
        if min(self.extents[:2]) <= MIN_FOOTPRINT or self.extents[2] <= MIN_HEIGHT:
            raise ContractError(f"Room extents {self.extents} are too small for interior objects")
        if len(self.classes) < 2:
            raise ContractError(f"A scene needs at least 2 classes, got {len(self.classes)}")
        unknown = [c for c in self.classes if c not in BASE_COLORS]
        if unknown:
            raise ContractError(f"Unknown classes {unknown}; choose from {sorted(BASE_COLORS)}")
        if len(set(self.classes)) != len(self.classes):
            raise ContractError(f"Duplicate classes in {self.classes}")
        if len(self.ratios) != len(self.classes):
            raise ContractError(f"{len(self.ratios)} ratios for {len(self.classes)} classes")
        if min(self.ratios) <= 0:
            raise ContractError(f"Class ratios must be positive, got {self.ratios}")
        if not 0.0 <= self.hole_probability <= 1.0:
            raise ContractError(f"hole_probability must lie in [0, 1], got {self.hole_probability}")
        if self.points_per_class < 1 or self.color_noise_std < 0:
            raise ContractError("points_per_class must be >= 1 and color_noise_std >= 0")
        if min(self.columns, self.boxes, self.clutter_blobs) < 1:
            raise ContractError("columns, boxes and clutter_blobs must each be >= 1")

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    def class_count(self, index: int) -> int:
        return int(round(self.points_per_class * self.ratios[index]))

    @classmethod
    def from_dict(cls, values: Dict[str, str]) -> 'SceneSpec':
        """
        Create a SceneSpec from flat string values (as read from a key = value file).

        Lists are comma separated; keys that do not name a field are ignored.
        """
        def floats(text: str) -> Tuple[float, ...]:
            return tuple(float(v) for v in str(text).split(',') if v.strip())

        parsers = {
            'extents': floats,
            'classes': lambda text: tuple(v.strip() for v in str(text).split(',') if v.strip()),
            'points_per_class': int,
            'ratios': floats,
            'hole_probability': float,
            'color_noise_std': float,
            'seed': int,
            'columns': int,
            'boxes': int,
            'clutter_blobs': int,
        }
        settings = {}
        for key, raw in values.items():
            name = key.strip().lower().replace('-', '_')
            if name in parsers and raw is not None and str(raw).strip() != "":
                try:
                    settings[name] = parsers[name](raw)
                except ValueError as e:
                    raise ContractError(f"Invalid value for '{key}': {raw!r} ({e})")
        if 'classes' in settings and 'ratios' not in settings:
            settings['ratios'] = tuple(1.0 for _ in settings['classes'])
        return cls(**settings)


@dataclass
class Face:
    """Planar rectangle origin + s*u + t*v with s in [0, u_len], t in [0, v_len]."""
    origin: np.ndarray
    u: np.ndarray
    v: np.ndarray
    u_len: float
    v_len: float
    hole: Optional[Tuple[float, float, float, float]] = None

    @property
    def area(self) -> float:
        return self.u_len * self.v_len


def _face(origin, u, v, u_len, v_len) -> Face:
    return Face(np.asarray(origin, dtype=np.float64), np.asarray(u, dtype=np.float64),
                np.asarray(v, dtype=np.float64), float(u_len), float(v_len))


def _room_faces(spec: SceneSpec, name: str, rng: RngStream) -> List[Face]:
    W, D, H = spec.extents
    ex, ey, ez = np.eye(3)
    if name == "floor":
        return [_face((0, 0, 0), ex, ey, W, D)]
    if name == "ceiling":
        return [_face((0, 0, H), ex, ey, W, D)]
    if name == "wall":
        return [
            _face((0, 0, 0), ey, ez, D, H),
            _face((W, 0, 0), ey, ez, D, H),
            _face((0, 0, 0), ex, ez, W, H),
            _face((0, D, 0), ex, ez, W, H),
        ]
    if name == "column":
        faces = []
        for _ in range(spec.columns):
            x0 = rng.uniform(COLUMN_SIDE, W - 2 * COLUMN_SIDE)
            y0 = rng.uniform(COLUMN_SIDE, D - 2 * COLUMN_SIDE)
            faces.extend(_prism_sides(x0, y0, COLUMN_SIDE, COLUMN_SIDE, H))
        return faces
    if name == "box":
        faces = []
        for _ in range(spec.boxes):
            sx, sy = rng.uniform(0.4, 0.8), rng.uniform(0.4, 0.8)
            height = min(rng.uniform(0.5, 1.0), H * 0.9)
            x0 = rng.uniform(0.1, max(W - sx - 0.1, 0.1))
            y0 = rng.uniform(0.1, max(D - sy - 0.1, 0.1))
            faces.extend(_prism_sides(x0, y0, sx, sy, height))
            faces.append(_face((x0, y0, height), ex, ey, sx, sy))
        return faces
    return []


def _prism_sides(x0: float, y0: float, sx: float, sy: float, height: float) -> List[Face]:
    ex, ey, ez = np.eye(3)
    return [
        _face((x0, y0, 0), ex, ez, sx, height),
        _face((x0, y0 + sy, 0), ex, ez, sx, height),
        _face((x0, y0, 0), ey, ez, sy, height),
        _face((x0 + sx, y0, 0), ey, ez, sy, height),
    ]


def _cut_holes(faces: List[Face], probability: float, rng: RngStream):
    for face in faces:
        if rng.random(()) < probability:
            hu = face.u_len * rng.uniform(*HOLE_FRACTION)
            hv = face.v_len * rng.uniform(*HOLE_FRACTION)
            s0 = rng.uniform(0.0, face.u_len - hu)
            t0 = rng.uniform(0.0, face.v_len - hv)
            face.hole = (s0, s0 + hu, t0, t0 + hv)


def _sample_faces(faces: List[Face], count: int, rng: RngStream) -> np.ndarray:
    """Uniform samples over the union of faces, outside their holes."""
    areas = np.array([face.area for face in faces])
    # Expected kept fraction per face; holes never exceed 16% of a face
    weights = areas * np.array([1.0 if face.hole is None else
                                1.0 - (face.hole[1] - face.hole[0]) * (face.hole[3] - face.hole[2]) / face.area
                                for face in faces])
    chosen = rng.choice(len(faces), count, replace=True, p=weights / weights.sum())
    points = np.empty((count, 3))
    for index, face in enumerate(faces):
        slots = np.flatnonzero(chosen == index)
        filled = 0
        while filled < slots.size:
            need = slots.size - filled
            s = rng.uniform(0.0, face.u_len, 2 * need + 8)
            t = rng.uniform(0.0, face.v_len, 2 * need + 8)
            if face.hole is not None:
                s0, s1, t0, t1 = face.hole
                keep = ~((s >= s0) & (s <= s1) & (t >= t0) & (t <= t1))
                s, t = s[keep], t[keep]
            s, t = s[:need], t[:need]
            points[slots[filled:filled + s.size]] = face.origin + np.outer(s, face.u) + np.outer(t, face.v)
            filled += s.size
    return points


def _sample_clutter(spec: SceneSpec, count: int, rng: RngStream) -> np.ndarray:
    W, D, H = spec.extents
    blobs = max(spec.clutter_blobs, 1)
    margin = CLUTTER_RADIUS + 0.05
    centers = np.stack([
        rng.uniform(margin, W - margin, blobs),
        rng.uniform(margin, D - margin, blobs),
        rng.uniform(margin, min(1.5, H - margin), blobs),
    ], axis=1)
    owner = rng.integers(0, blobs, count)
    directions = rng.normal((count, 3))
    directions /= np.maximum(np.linalg.norm(directions, axis=1, keepdims=True), 1e-12)
    return centers[owner] + CLUTTER_RADIUS * directions


def _colors(name: str, count: int, noise_std: float, rng: RngStream) -> np.ndarray:
    base = np.asarray(BASE_COLORS[name], dtype=np.float64)
    noisy = base + noise_std * rng.normal((count, 3))
    return np.clip(np.round(noisy), 0, 255).astype(np.uint8)


def generate_scene(spec: SceneSpec, source_id: Optional[str] = None) -> PointCloud:
    """
    Generate one labeled scene; equal specs give bit-identical clouds.

    Class c receives round(points_per_class * ratios[c]) points, so the
    class proportions follow the ratios exactly whatever the hole layout.
    """
    rng = RngStream(spec.seed)
    xyz_parts, rgb_parts, label_parts = [], [], []
    for label, name in enumerate(spec.classes):
        stream = rng.split(label)
        count = spec.class_count(label)
        if name == "clutter":
            xyz = _sample_clutter(spec, count, stream)
        else:
            faces = _room_faces(spec, name, stream)
            _cut_holes(faces, spec.hole_probability, stream)
            xyz = _sample_faces(faces, count, stream)
        xyz_parts.append(xyz)
        rgb_parts.append(_colors(name, count, spec.color_noise_std, stream))
        label_parts.append(np.full(count, label, dtype=np.int32))

    cloud = PointCloud(np.concatenate(xyz_parts), np.concatenate(rgb_parts), np.concatenate(label_parts),
                       source_id=source_id or f"scene_{spec.seed:04d}")
    logger.debug(f"🔍 Generated {cloud.source_id}: {len(cloud)} points, {spec.num_classes} classes")
    return cloud


def generate_scenes(spec: SceneSpec, count: int) -> List[PointCloud]:
    """`count` scenes with seeds spec.seed, spec.seed + 1, ..."""
    return [generate_scene(replace(spec, seed=spec.seed + i)) for i in range(count)]


def train_test_split(scenes: Sequence, fraction: float, seed: int = 0) -> Tuple[list, list]:
    """
    Hold out whole scenes for testing.

    Args:
        scenes: Scenes (or any items) to split
        fraction: Share of scenes for the test side
        seed: Seed of the shuffle

    Returns:
        Tuple of (train items, test items), each in input order

    Raises:
        ContractError: If either side would be empty
    """
    n = len(scenes)
    if n < 2:
        raise ContractError(f"Splitting needs at least 2 scenes, got {n}")
    n_test = int(math.floor(n * fraction + 0.5))
    if n_test < 1 or n_test >= n:
        raise ContractError(f"Test fraction {fraction} leaves an empty side for {n} scenes")
    test_positions = set(int(i) for i in RngStream(seed).permutation(n)[:n_test])
    train = [scene for i, scene in enumerate(scenes) if i not in test_positions]
    test = [scene for i, scene in enumerate(scenes) if i in test_positions]
    return train, test
