"""From resolved chain components to identity-stable trajectories.

Includes the two ghost-handling steps: cutting the wrong link of a Y-shaped
merge (a short spurious branch joining a real track) and dropping any
trajectory shorter than the minimum life span.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .components import Classification, Component
from .linking import ClusterGraph


@dataclass
class Trajectory:
    """Time sequence of baricenters with a persistent identity."""

    identity: int
    frames: np.ndarray  # (T,) strictly increasing, contiguous
    positions: np.ndarray  # (T, 3)
    provenance: list[int]  # contributing cluster ids, in time order

    @property
    def span(self) -> int:
        return int(self.frames[-1] - self.frames[0] + 1)

    def __len__(self) -> int:
        return len(self.frames)


@dataclass
class YCut:
    """Record of one removed spurious merge link."""

    src: int  # tail of the ghost branch
    dst: int  # merge node of the real track
    frame: int  # frame of the merge node
    ghost_ids: list[int]
    removed_component: bool = False


def cut_y_shape(cls: Classification, graph: ClusterGraph, ghost_min: int) -> YCut | None:
    """Remove the wrong dynamic link of a Y-shaped component.

    The short inbound branch loses its link into the merge node and becomes
    an isolated short component for ghost removal to delete; the long chain
    continues through the merge untouched. When both branches are below the
    ghost threshold the whole component is spurious: every cluster of it is
    removed. When both are long the component is not a ghost merge and no
    cut is made (the caller reclassifies it as complex).
    """
    lens = [len(b) for b in cls.in_branches]
    if min(lens) >= ghost_min:
        return None
    src, dst = cls.merge_link
    frame = graph.clusters[dst].frame
    if max(lens) < ghost_min:
        ghosts = [cid for b in cls.in_branches for cid in b]
        for cid in ghosts + [dst] + [cid for cid in cls.out_branches[0]]:
            graph.remove_cluster(cid)
        return YCut(src=src, dst=dst, frame=frame, ghost_ids=ghosts, removed_component=True)
    graph.remove_link(src, dst)
    return YCut(src=src, dst=dst, frame=frame, ghost_ids=list(cls.short_branch))


def build_trajectories(
    chains: list[Component], graph: ClusterGraph, id_start: int = 0
) -> list[Trajectory]:
    """One trajectory per chain component; samples are cluster baricenters."""
    trajectories = []
    for comp in sorted(
        chains, key=lambda c: (graph.clusters[c.cluster_ids[0]].frame, c.cluster_ids[0])
    ):
        ids = comp.cluster_ids
        frames = np.array([graph.clusters[c].frame for c in ids], dtype=np.int64)
        if len(np.unique(frames)) != len(frames):
            raise RuntimeError("chain component with duplicate frames")
        positions = np.array([graph.clusters[c].baricenter for c in ids])
        trajectories.append(
            Trajectory(
                identity=id_start + len(trajectories),
                frames=frames,
                positions=positions,
                provenance=list(ids),
            )
        )
    return trajectories


def remove_ghosts(trajectories: list[Trajectory], min_length: int) -> tuple[list[Trajectory], int]:
    """Drop trajectories with a life span below `min_length` frames
    (inclusive span: a trajectory spanning exactly min_length frames stays)."""
    if min_length < 1:
        raise ValueError("min_length must be >= 1")
    kept = [t for t in trajectories if t.span >= min_length]
    return kept, len(trajectories) - len(kept)
