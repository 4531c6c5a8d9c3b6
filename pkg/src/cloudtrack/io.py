"""Text formats shared across the pipeline.

Clouds: `frame,x,y,z` per point, `#` comments, frames sorted.
Trajectories: `identity,frame,x,y,z` sorted by (identity, frame); the same
schema serves as ground truth for evaluation. Floats are written with repr
so files round-trip exactly and repeated runs are byte-identical.
"""

from __future__ import annotations

import numpy as np

from .geometry import FrameCloud
from .trajectories import Trajectory


class ParseError(ValueError):
    def __init__(self, path, line_no, message):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = path
        self.line_no = line_no


def _data_lines(path):
    with open(path) as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            yield line_no, line


def load_clouds(path) -> list[FrameCloud]:
    """Read the point-cloud CSV; frames must appear in sorted order."""
    frames: list[int] = []
    points: list[list[float]] = []
    order: list[int] = []
    for line_no, line in _data_lines(path):
        parts = line.split(",")
        if len(parts) != 4:
            raise ParseError(path, line_no, f"expected frame,x,y,z got {line!r}")
        try:
            frame = int(parts[0])
            xyz = [float(v) for v in parts[1:]]
        except ValueError as exc:
            raise ParseError(path, line_no, str(exc)) from None
        if frame < 0:
            raise ParseError(path, line_no, "negative frame index")
        if order and frame < order[-1]:
            raise ParseError(path, line_no, "frames out of order")
        order.append(frame)
        frames.append(frame)
        points.append(xyz)
    clouds = []
    frames_arr = np.asarray(frames, dtype=np.int64)
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    for frame in sorted(set(frames)):
        clouds.append(FrameCloud(frame=frame, points=pts[frames_arr == frame]))
    return clouds


def save_clouds(clouds, path) -> None:
    with open(path, "w") as fh:
        fh.write("# frame,x,y,z\n")
        for cloud in clouds:
            for x, y, z in cloud.points:
                fh.write(f"{cloud.frame},{x!r},{y!r},{z!r}\n")


def load_trajectories(path) -> list[Trajectory]:
    rows: dict[int, list[tuple[int, float, float, float]]] = {}
    for line_no, line in _data_lines(path):
        parts = line.split(",")
        if len(parts) != 5:
            raise ParseError(path, line_no, f"expected identity,frame,x,y,z got {line!r}")
        try:
            ident = int(parts[0])
            frame = int(parts[1])
            xyz = tuple(float(v) for v in parts[2:])
        except ValueError as exc:
            raise ParseError(path, line_no, str(exc)) from None
        rows.setdefault(ident, []).append((frame, *xyz))
    out = []
    for ident in sorted(rows):
        samples = sorted(rows[ident])
        frames = np.array([s[0] for s in samples], dtype=np.int64)
        if len(np.unique(frames)) != len(frames):
            raise ParseError(path, 0, f"identity {ident} has duplicate frames")
        positions = np.array([s[1:] for s in samples], dtype=np.float64)
        out.append(Trajectory(identity=ident, frames=frames, positions=positions, provenance=[]))
    return out


def save_trajectories(trajectories, path) -> None:
    with open(path, "w") as fh:
        fh.write("# identity,frame,x,y,z\n")
        for traj in sorted(trajectories, key=lambda t: t.identity):
            for frame, (x, y, z) in zip(traj.frames, traj.positions):
                fh.write(f"{traj.identity},{frame},{x!r},{y!r},{z!r}\n")


def dump_clusters(clusters_by_frame, path) -> None:
    """Debug dump: frame,cluster_id,point_index."""
    with open(path, "w") as fh:
        fh.write("# frame,cluster_id,point_index\n")
        for frame in sorted(clusters_by_frame):
            for cluster in clusters_by_frame[frame]:
                for idx in cluster.indices:
                    fh.write(f"{frame},{cluster.cid},{idx}\n")


def dump_graph(graph, path) -> None:
    """Debug dump: frame,source_cluster,target_cluster,vx,vy,vz,support."""
    with open(path, "w") as fh:
        fh.write("# frame,source_cluster,target_cluster,vx,vy,vz,support\n")
        for link in graph.links():
            frame = graph.clusters[link.src].frame
            vx, vy, vz = link.velocity
            fh.write(f"{frame},{link.src},{link.dst},{vx!r},{vy!r},{vz!r},{link.support}\n")


def dump_components(components, classifications, graph, path) -> None:
    """Report: component_id,classification,first_frame,last_frame,n_clusters."""
    with open(path, "w") as fh:
        fh.write("# component_id,classification,first_frame,last_frame,n_clusters\n")
        for comp, cls in zip(components, classifications):
            lo, hi = comp.frame_span(graph)
            fh.write(f"{comp.comp_id},{cls.kind},{lo},{hi},{len(comp.cluster_ids)}\n")
