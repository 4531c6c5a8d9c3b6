"""Core geometric types, the spatial grid index, and characteristic scales.

Two scales drive the whole pipeline: the median nearest-neighbor distance
between detection points in a frame (the natural length unit, used as the
clustering cutoff and the temporal linking radius) and the median cluster
diameter (the typical target size, which sets where repulsion starts).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels

# all medians in the pipeline take the lower central element for even counts,
# so values are exactly reproducible
def median_low(values) -> float:
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("median of empty set")
    return float(np.sort(values)[(values.size - 1) // 2])


def as_points(points) -> np.ndarray:
    pts = np.ascontiguousarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"expected (N, 3) points, got shape {pts.shape}")
    if not np.isfinite(pts).all():
        raise ValueError("points contain non-finite coordinates")
    return pts


@dataclass(frozen=True)
class FrameCloud:
    """All 3D points detected at one time step; row order is the stable
    per-frame point index."""

    frame: int
    points: np.ndarray  # (N, 3) float64, meters

    def __post_init__(self):
        if self.frame < 0:
            raise ValueError("frame index must be non-negative")
        object.__setattr__(self, "points", as_points(self.points))

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class ScaleStats:
    """Characteristic lengths of one frame (or of a whole sequence)."""

    r1: float  # median nearest-neighbor distance
    r0: float  # median cluster diameter

    def __post_init__(self):
        if not (self.r1 > 0 and self.r0 > 0):
            raise ValueError("scales must be positive")


def compute_r1(cloud: FrameCloud) -> float:
    """Median over points of the distance to the nearest other point."""
    pts = cloud.points
    n = len(pts)
    if n < 2:
        raise ValueError("insufficient points for scale")
    nn2 = np.empty(n)
    block = 512
    for lo in range(0, n, block):
        chunk = pts[lo : lo + block]
        d2 = ((chunk[:, None, :] - pts[None, :, :]) ** 2).sum(-1)
        rows = np.arange(len(chunk))
        d2[rows, lo + rows] = np.inf
        nn2[lo : lo + block] = d2.min(axis=1)
    return float(np.sqrt(median_low(nn2)))


def cluster_diameter(points: np.ndarray) -> float:
    """Max pairwise distance; 0 for a single point."""
    pts = np.asarray(points, dtype=np.float64)
    if len(pts) < 2:
        return 0.0
    d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1)
    return float(np.sqrt(d2.max()))


def compute_r0(clusters) -> float:
    """Median cluster size, where size is the diameter of the member points.

    Accepts any iterable of objects with a `points` attribute or raw point
    arrays.
    """
    diams = []
    for c in clusters:
        pts = getattr(c, "points", c)
        diams.append(cluster_diameter(pts))
    if not diams:
        raise ValueError("no clusters for scale")
    return median_low(diams)


@dataclass
class GridIndex:
    """Uniform hash grid over one frame's points.

    Neighbor queries are exact for radii up to the cell size (the query
    visits the 27 cells around the probe).
    """

    cell: float
    points: np.ndarray
    cells: dict = field(default_factory=dict)  # (cx,cy,cz) -> int64 index array


def grid_build(cloud: FrameCloud, cell: float) -> GridIndex:
    if cell <= 0:
        raise ValueError("grid cell size must be positive")
    pts = cloud.points
    index = GridIndex(cell=cell, points=pts)
    if len(pts) == 0:
        return index
    g = np.floor(pts / cell).astype(np.int64)
    for i, key in enumerate(map(tuple, g)):
        index.cells.setdefault(key, []).append(i)
    index.cells = {k: np.asarray(v, dtype=np.int64) for k, v in index.cells.items()}
    return index


def grid_neighbors(index: GridIndex, p, radius: float, exclude: int | None = None) -> np.ndarray:
    """Indices of points within `radius` of `p` (inclusive), sorted.

    When `exclude` is None, points exactly coincident with `p` are dropped
    (so querying at an indexed point does not return the point itself).
    """
    if radius > index.cell:
        raise ValueError("radius exceeds grid guarantee")
    p = np.asarray(p, dtype=np.float64).reshape(3)
    cx, cy, cz = np.floor(p / index.cell).astype(np.int64)
    found = []
    for dx in (-1, 0, 1):
        for dy in (-1, 0, 1):
            for dz in (-1, 0, 1):
                members = index.cells.get((cx + dx, cy + dy, cz + dz))
                if members is None:
                    continue
                d2 = ((index.points[members] - p) ** 2).sum(-1)
                keep = d2 <= radius * radius
                if exclude is None:
                    keep &= ~(index.points[members] == p).all(axis=1)
                found.append(members[keep])
    if not found:
        return np.empty(0, dtype=np.int64)
    out = np.sort(np.concatenate(found))
    if exclude is not None:
        out = out[out != exclude]
    return out


def frame_scales(clouds, clusters_by_frame=None) -> dict[int, float]:
    """Per-frame r1 for every frame with at least 2 points."""
    return {c.frame: compute_r1(c) for c in clouds if len(c) >= 2}


# re-exported so callers can batch neighbor searches without touching the
# backend module directly
radius_pairs = kernels.radius_pairs
