"""cloudtrack: multi-target 3D tracking of point-cloud detections.

Targets are tracked as dense clouds of points. Each frame is clustered by
single linkage at the nearest-neighbor scale, clusters are linked in time
under a constant-velocity model, and ambiguous connected components
(occlusions) are split by minimizing a frustrated attractive/repulsive
energy over the spatio-temporal point graph. Ships with a synthetic scene
generator, a three-camera reconstruction front-end, and CLEAR-MOT metrics.
"""

from .clustering import Cluster, cluster_frame
from .config import PipelineConfig, load_config
from .geometry import FrameCloud, GridIndex, ScaleStats, compute_r0, compute_r1, grid_build, grid_neighbors
from .kernels import BACKEND
from .linking import ClusterGraph, ClusterLink, build_graph
from .metrics import MotReport, evaluate
from .partition import (
    PartitionProblem,
    PartitionSolution,
    build_problem,
    dynamic_weight,
    energy,
    solve_exact,
    solve_sdp,
    static_weight,
)
from .pipeline import TrackResult, track
from .synth import Scene, SceneConfig, generate
from .trajectories import Trajectory

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Cluster",
    "ClusterGraph",
    "ClusterLink",
    "FrameCloud",
    "GridIndex",
    "MotReport",
    "PartitionProblem",
    "PartitionSolution",
    "PipelineConfig",
    "Scene",
    "SceneConfig",
    "ScaleStats",
    "TrackResult",
    "Trajectory",
    "build_graph",
    "build_problem",
    "cluster_frame",
    "compute_r0",
    "compute_r1",
    "dynamic_weight",
    "energy",
    "evaluate",
    "generate",
    "grid_build",
    "grid_neighbors",
    "load_config",
    "solve_exact",
    "solve_sdp",
    "static_weight",
    "track",
]
