"""Static clustering: partition each frame's points by single linkage.

Two points end up in the same cluster iff a chain of point pairs, each at
distance strictly below the cutoff, connects them. The grid-backed kernel
makes this expected O(M) per frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .geometry import FrameCloud


@dataclass
class Cluster:
    """A connected dense subset of one frame's points."""

    cid: int
    frame: int
    indices: np.ndarray  # sorted rows into the frame's cloud
    baricenter: np.ndarray  # (3,) mean of member coordinates

    @property
    def size(self) -> int:
        return len(self.indices)

    def points(self, cloud: FrameCloud) -> np.ndarray:
        return cloud.points[self.indices]


def make_cluster(cid: int, cloud: FrameCloud, indices: np.ndarray) -> Cluster:
    indices = np.sort(np.asarray(indices, dtype=np.int64))
    if len(indices) == 0:
        raise ValueError("cluster cannot be empty")
    return Cluster(
        cid=cid,
        frame=cloud.frame,
        indices=indices,
        baricenter=cloud.points[indices].mean(axis=0),
    )


def cluster_frame(cloud: FrameCloud, threshold: float, id_start: int = 0) -> list[Cluster]:
    """Single-linkage partition of one frame at the given cutoff.

    Cluster ids are assigned in order of the smallest member point index,
    starting from `id_start`, so numbering is deterministic across runs.
    """
    if threshold <= 0:
        raise ValueError("clustering threshold must be positive")
    if len(cloud) == 0:
        return []
    labels = kernels.cluster_labels(cloud.points, threshold)
    clusters = []
    # labels are numbered by first occurrence, which is min-point-index order
    for k in range(labels.max() + 1):
        members = np.flatnonzero(labels == k)
        clusters.append(make_cluster(id_start + k, cloud, members))
    return clusters


def cluster_sequence(clouds, threshold_for_frame, id_start: int = 0) -> dict[int, list[Cluster]]:
    """Cluster every frame; `threshold_for_frame` maps frame -> cutoff."""
    out: dict[int, list[Cluster]] = {}
    next_id = id_start
    for cloud in clouds:
        cs = cluster_frame(cloud, threshold_for_frame(cloud.frame), id_start=next_id)
        next_id += len(cs)
        out[cloud.frame] = cs
    return out
