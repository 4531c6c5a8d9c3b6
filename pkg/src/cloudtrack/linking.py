"""Temporal linking: build the cluster graph across consecutive frames.

The first consecutive frame pair is matched cluster-to-cluster by minimum
total baricenter distance (there is no motion information yet). Every later
pair is linked point-to-point under a constant-velocity prediction, the point
links are lifted to cluster links labeled with sub-cluster velocities, and
clusters left over on both sides fall back to the assignment matcher.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import kernels
from .clustering import Cluster
from .geometry import FrameCloud

_FORBIDDEN = 1e12


@dataclass
class ClusterLink:
    """Directed time edge between clusters of consecutive frames.

    `velocity` is the displacement (m/frame) used to predict the motion of
    points downstream of this link; `src_sub_baricenter` is the baricenter of
    the source points that realized the link (equal to the source cluster
    baricenter for assignment-created links, which carry support 0).
    """

    src: int
    dst: int
    velocity: np.ndarray
    support: int
    src_sub_baricenter: np.ndarray


class ClusterGraph:
    """Clusters over all frames plus directed time links."""

    def __init__(self):
        self.clusters: dict[int, Cluster] = {}
        self._out: dict[int, dict[int, ClusterLink]] = {}
        self._in: dict[int, dict[int, ClusterLink]] = {}
        self._next_id = 0

    def add_cluster(self, cluster: Cluster) -> None:
        if cluster.cid in self.clusters:
            raise ValueError(f"duplicate cluster id {cluster.cid}")
        self.clusters[cluster.cid] = cluster
        self._out[cluster.cid] = {}
        self._in[cluster.cid] = {}
        self._next_id = max(self._next_id, cluster.cid + 1)

    def new_id(self) -> int:
        cid = self._next_id
        self._next_id += 1
        return cid

    def add_link(self, link: ClusterLink) -> None:
        fa = self.clusters[link.src].frame
        fb = self.clusters[link.dst].frame
        if fb != fa + 1:
            raise ValueError("links must connect consecutive frames")
        if link.dst in self._out[link.src]:
            raise ValueError("duplicate link")
        self._out[link.src][link.dst] = link
        self._in[link.dst][link.src] = link

    def remove_link(self, src: int, dst: int) -> ClusterLink:
        link = self._out[src].pop(dst)
        self._in[dst].pop(src)
        return link

    def remove_cluster(self, cid: int) -> None:
        for dst in list(self._out[cid]):
            self.remove_link(cid, dst)
        for src in list(self._in[cid]):
            self.remove_link(src, cid)
        del self._out[cid]
        del self._in[cid]
        del self.clusters[cid]

    def out_links(self, cid: int) -> list[ClusterLink]:
        return [self._out[cid][k] for k in sorted(self._out[cid])]

    def in_links(self, cid: int) -> list[ClusterLink]:
        return [self._in[cid][k] for k in sorted(self._in[cid])]

    def out_degree(self, cid: int) -> int:
        return len(self._out[cid])

    def in_degree(self, cid: int) -> int:
        return len(self._in[cid])

    def links(self):
        for src in sorted(self._out):
            for dst in sorted(self._out[src]):
                yield self._out[src][dst]

    def n_links(self) -> int:
        return sum(len(d) for d in self._out.values())


def assignment_links(
    clusters_a: list[Cluster], clusters_b: list[Cluster], gate: float
) -> list[ClusterLink]:
    """One-to-one Munkres match on baricenter distance; pairs beyond the gate
    are rejected and left unmatched."""
    if not clusters_a or not clusters_b:
        return []
    ba = np.array([c.baricenter for c in clusters_a])
    bb = np.array([c.baricenter for c in clusters_b])
    dist = np.sqrt(((ba[:, None, :] - bb[None, :, :]) ** 2).sum(-1))
    cost = np.where(dist <= gate, dist, _FORBIDDEN)
    rows, cols = linear_sum_assignment(cost)
    links = []
    for i, j in zip(rows, cols):
        if dist[i, j] > gate:
            continue
        a, b = clusters_a[i], clusters_b[j]
        links.append(
            ClusterLink(
                src=a.cid,
                dst=b.cid,
                velocity=b.baricenter - a.baricenter,
                support=0,
                src_sub_baricenter=a.baricenter.copy(),
            )
        )
    return links


def bootstrap_links(
    clusters_t1: list[Cluster], clusters_t2: list[Cluster], gate: float
) -> list[ClusterLink]:
    """Initial frame pair: no dynamics available, match baricenters only."""
    return assignment_links(clusters_t1, clusters_t2, gate)


def predict_points(points: np.ndarray, velocity: np.ndarray) -> np.ndarray:
    """Constant-velocity extrapolation over one frame."""
    return np.asarray(points, dtype=np.float64) + np.asarray(velocity, dtype=np.float64)


def point_velocities(points: np.ndarray, in_links: list[ClusterLink]) -> np.ndarray:
    """Per-point prediction velocity for a cluster.

    One inbound link: all points share its velocity. Several (occlusion
    onset): each point takes the velocity of the inbound link whose source
    sub-cluster baricenter is nearest, which keeps per-branch motion alive
    through a merge. No inbound link: zero velocity.
    """
    n = len(points)
    if not in_links:
        return np.zeros((n, 3))
    if len(in_links) == 1:
        return np.tile(in_links[0].velocity, (n, 1))
    anchors = np.array([l.src_sub_baricenter for l in in_links])
    vels = np.array([l.velocity for l in in_links])
    d2 = ((np.asarray(points)[:, None, :] - anchors[None, :, :]) ** 2).sum(-1)
    return vels[np.argmin(d2, axis=1)]


def link_points(predicted: np.ndarray, next_points: np.ndarray, radius: float) -> np.ndarray:
    """Multi-link every predicted position to all next-frame points within
    `radius` (inclusive). Rows of the result are (predicted row, next row)."""
    if radius <= 0:
        raise ValueError("link radius must be positive")
    return kernels.radius_pairs(predicted, next_points, radius)


def lift_links(
    pairs: np.ndarray,
    src_owner: np.ndarray,
    src_points: np.ndarray,
    dst_owner: np.ndarray,
    dst_points: np.ndarray,
) -> list[ClusterLink]:
    """Lift point links to cluster links.

    One link per (source cluster, target cluster) pair with at least one
    point link. The link velocity is the displacement between the baricenters
    of the two participating sub-clusters (the unique points of the pair on
    each side); support counts the point links.
    """
    by_pair: dict[tuple[int, int], list[int]] = {}
    for row, (i, j) in enumerate(pairs):
        key = (int(src_owner[i]), int(dst_owner[j]))
        by_pair.setdefault(key, []).append(row)
    links = []
    for (src, dst) in sorted(by_pair):
        rows = by_pair[(src, dst)]
        sub_src = np.unique(pairs[rows, 0])
        sub_dst = np.unique(pairs[rows, 1])
        b_src = src_points[sub_src].mean(axis=0)
        b_dst = dst_points[sub_dst].mean(axis=0)
        links.append(
            ClusterLink(
                src=src,
                dst=dst,
                velocity=b_dst - b_src,
                support=len(rows),
                src_sub_baricenter=b_src,
            )
        )
    return links


def match_unlinked(
    graph: ClusterGraph,
    clusters_a: list[Cluster],
    clusters_b: list[Cluster],
    gate: float,
) -> list[ClusterLink]:
    """Assignment fallback after lifting: source clusters with no link at all
    vs. next-frame clusters that received nothing."""
    orphans_a = [
        c for c in clusters_a if graph.in_degree(c.cid) == 0 and graph.out_degree(c.cid) == 0
    ]
    orphans_b = [c for c in clusters_b if graph.in_degree(c.cid) == 0]
    return assignment_links(orphans_a, orphans_b, gate)


def build_graph(
    clouds: list[FrameCloud],
    clusters_by_frame: dict[int, list[Cluster]],
    link_radius: float,
    gate: float,
) -> ClusterGraph:
    """Assemble the full cluster graph for a clustered sequence.

    Links are only created between frames whose indices differ by exactly 1;
    a gap in the cloud sequence simply interrupts the affected tracks.
    """
    graph = ClusterGraph()
    for frame in sorted(clusters_by_frame):
        for c in clusters_by_frame[frame]:
            graph.add_cluster(c)
    cloud_of = {c.frame: c for c in clouds}
    frames = sorted(clusters_by_frame)
    bootstrapped = False
    for fa, fb in zip(frames, frames[1:]):
        if fb != fa + 1:
            continue
        ca, cb = clusters_by_frame[fa], clusters_by_frame[fb]
        if not bootstrapped:
            for link in bootstrap_links(ca, cb, gate):
                graph.add_link(link)
            bootstrapped = True
            continue
        if ca and cb:
            preds, owners, origs = [], [], []
            for cluster in ca:
                pts = cluster.points(cloud_of[fa])
                vels = point_velocities(pts, graph.in_links(cluster.cid))
                preds.append(pts + vels)
                origs.append(pts)
                owners.append(np.full(len(pts), cluster.cid, dtype=np.int64))
            dst_owner = np.empty(len(cloud_of[fb]), dtype=np.int64)
            for cluster in cb:
                dst_owner[cluster.indices] = cluster.cid
            pairs = link_points(np.concatenate(preds), cloud_of[fb].points, link_radius)
            lifted = lift_links(
                pairs,
                np.concatenate(owners),
                np.concatenate(origs),
                dst_owner,
                cloud_of[fb].points,
            )
            for link in lifted:
                graph.add_link(link)
        for link in match_unlinked(graph, ca, cb, gate):
            graph.add_link(link)
    return graph
