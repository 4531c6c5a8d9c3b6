"""End-to-end tracking: clustering, linking, occlusion solving, trajectories.

The solve loop repeatedly extracts connected components, cuts Y-shaped ghost
merges, and splits X-shaped (and decomposed complex) occlusions until the
graph stops changing. Components that cannot be resolved are flagged, never
silently split; at the end they are fragmented into their maximal simple
chains so ambiguity surfaces as fragmentation, not as invented identities.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from . import partition as part_mod
from .clustering import Cluster, cluster_frame
from .components import (
    CHAIN,
    COMPLEX,
    MULTIWAY,
    X_SHAPE,
    Y_SHAPE,
    Classification,
    classify,
    connected_components,
    decompose_complex,
    occlusion_window,
)
from .config import PipelineConfig
from .geometry import FrameCloud, cluster_diameter, compute_r1, median_low
from .linking import ClusterGraph, build_graph
from .metrics import MotReport, evaluate
from .trajectories import Trajectory, YCut, build_trajectories, cut_y_shape, remove_ghosts


@dataclass
class TrackReport:
    n_frames: int = 0
    n_points: int = 0
    n_clusters: int = 0
    n_links: int = 0
    r1: float = 0.0
    r0: float = 0.0
    cluster_threshold: float = 0.0
    assign_gate: float = 0.0
    components_by_kind: dict = field(default_factory=dict)
    occlusions_solved: int = 0
    occlusions_flagged: dict = field(default_factory=dict)
    solver_exact: int = 0
    solver_sdp: int = 0
    solver_nonconverged: int = 0
    y_cuts: list = field(default_factory=list)
    ghost_components_removed: int = 0
    short_trajectories_removed: int = 0
    fragmented_components: int = 0
    n_trajectories: int = 0
    timings: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    def lines(self, config: PipelineConfig) -> list[str]:
        out = [
            f"n_frames: {self.n_frames}",
            f"n_points: {self.n_points}",
            f"n_clusters: {self.n_clusters}",
            f"n_links: {self.n_links}",
            f"r1: {self.r1!r}",
            f"r0: {self.r0!r}",
            f"cluster_threshold: {self.cluster_threshold!r}",
            f"assign_gate: {self.assign_gate!r}",
        ]
        for kind in (CHAIN, X_SHAPE, Y_SHAPE, COMPLEX):
            out.append(f"components_{kind.replace('-', '_')}: {self.components_by_kind.get(kind, 0)}")
        out.append(f"occlusions_solved: {self.occlusions_solved}")
        for flag in sorted(self.occlusions_flagged):
            out.append(f"flag_{flag.replace('-', '_')}: {self.occlusions_flagged[flag]}")
        out += [
            f"solver_exact: {self.solver_exact}",
            f"solver_sdp: {self.solver_sdp}",
            f"solver_nonconverged: {self.solver_nonconverged}",
            f"y_cuts: {len(self.y_cuts)}",
            f"ghost_components_removed: {self.ghost_components_removed}",
            f"short_trajectories_removed: {self.short_trajectories_removed}",
            f"fragmented_components: {self.fragmented_components}",
            f"n_trajectories: {self.n_trajectories}",
            f"warnings: {len(self.warnings)}",
        ]
        for stage in sorted(self.timings):
            out.append(f"time_{stage}_s: {self.timings[stage]:.3f}")
        out.append("# thresholds in effect")
        out += [f"config_{line}" for line in _config_echo(config)]
        return out


def _config_echo(config: PipelineConfig) -> list[str]:
    from .config import config_lines

    return config_lines(config)


@dataclass
class TrackResult:
    trajectories: list[Trajectory]
    graph: ClusterGraph
    clusters_by_frame: dict[int, list[Cluster]]
    report: TrackReport
    config: PipelineConfig


def _flag(report: TrackReport, name: str) -> None:
    report.occlusions_flagged[name] = report.occlusions_flagged.get(name, 0) + 1


def _fragment_into_chains(graph: ClusterGraph, cluster_ids: list[int]) -> int:
    """Cut every multi-link of an unresolved component so only simple chains
    remain. Returns the number of removed links."""
    removed = 0
    for cid in cluster_ids:
        if graph.in_degree(cid) >= 2:
            for link in graph.in_links(cid):
                graph.remove_link(link.src, link.dst)
                removed += 1
        if graph.out_degree(cid) >= 2:
            for link in graph.out_links(cid):
                graph.remove_link(link.src, link.dst)
                removed += 1
    return removed


def track(clouds: list[FrameCloud], config: PipelineConfig) -> TrackResult:
    config.validate()
    report = TrackReport()
    report.n_frames = len(clouds)
    report.n_points = int(sum(len(c) for c in clouds))
    if not clouds:
        return TrackResult([], ClusterGraph(), {}, report, config)
    frames = [c.frame for c in clouds]
    if sorted(frames) != frames or len(set(frames)) != len(frames):
        raise ValueError("cloud frames must be strictly increasing")

    # characteristic scales
    t0 = time.perf_counter()
    r1_by_frame = {c.frame: compute_r1(c) for c in clouds if len(c) >= 2}
    r1_global = median_low(list(r1_by_frame.values())) if r1_by_frame else 1.0
    if config.r1_mode == "per_frame":
        thresholds = {
            c.frame: config.alpha * r1_by_frame.get(c.frame, r1_global) for c in clouds
        }
    else:
        thresholds = {c.frame: config.alpha * r1_global for c in clouds}
    report.r1 = r1_global
    report.cluster_threshold = config.alpha * r1_global
    report.timings["scales"] = time.perf_counter() - t0

    # static clustering (frames are independent; order-preserving map keeps
    # output identical for any thread count)
    t0 = time.perf_counter()
    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            per_frame = list(
                pool.map(lambda c: cluster_frame(c, thresholds[c.frame]), clouds)
            )
    else:
        per_frame = [cluster_frame(c, thresholds[c.frame]) for c in clouds]
    clusters_by_frame: dict[int, list[Cluster]] = {}
    next_id = 0
    for cloud, clusters in zip(clouds, per_frame):
        for c in clusters:
            c.cid = next_id
            next_id += 1
        clusters_by_frame[cloud.frame] = clusters
    report.n_clusters = next_id
    report.timings["clustering"] = time.perf_counter() - t0

    # r0 per frame and globally (median cluster diameter)
    cloud_of = {c.frame: c for c in clouds}
    r0_by_frame = {}
    for frame, clusters in clusters_by_frame.items():
        if clusters:
            r0_by_frame[frame] = median_low(
                [cluster_diameter(c.points(cloud_of[frame])) for c in clusters]
            )
    r0_global = median_low(list(r0_by_frame.values())) if r0_by_frame else r1_global
    if r0_global <= 0:
        r0_global = r1_global  # all-singleton degenerate data
    report.r0 = r0_global
    gate = config.assign_gate_r0 * r0_global
    report.assign_gate = gate

    # temporal linking
    t0 = time.perf_counter()
    graph = build_graph(clouds, clusters_by_frame, config.link_radius_r1 * r1_global, gate)
    report.n_links = graph.n_links()
    report.timings["linking"] = time.perf_counter() - t0

    # occlusion solving loop
    t0 = time.perf_counter()
    bounds = (clouds[0].frame, clouds[-1].frame)
    flagged: set[frozenset] = set()

    def window_r0(window) -> float:
        vals = [r0_by_frame[f] for f in window.frames if r0_by_frame.get(f, 0) > 0]
        return median_low(vals) if vals else r0_global

    def solve_and_apply(cls: Classification) -> bool:
        window = occlusion_window(cls, graph, config.pad, bounds)
        if window.unresolvable:
            _flag(report, "unresolvable-window")
            return False
        problem = part_mod.build_problem(
            window,
            graph,
            cloud_of,
            r1_global,
            window_r0(window),
            config.beta,
            config.static_pad_r1,
            config.dynamic_max_r1,
        )
        if problem.n <= config.exact_max_nodes:
            solution = part_mod.solve_exact(problem)
            report.solver_exact += 1
        else:
            solution = part_mod.solve_sdp(
                problem,
                rank=config.sdp_rank,
                iterations=config.sdp_iterations,
                tol=config.sdp_tol,
                seed=config.seed,
            )
            report.solver_sdp += 1
            if not solution.converged:
                report.solver_nonconverged += 1
        outcome = part_mod.apply_partition(cls, window, problem, solution, graph, cloud_of)
        if outcome.status == "split":
            report.occlusions_solved += 1
            return True
        _flag(report, outcome.status)
        return False

    first_pass = True
    for _ in range(1000):
        comps = connected_components(graph)
        classifications = [classify(c, graph, config.ghost_min) for c in comps]
        if first_pass:
            for cls in classifications:
                kind = cls.kind
                report.components_by_kind[kind] = report.components_by_kind.get(kind, 0) + 1
            first_pass = False
        edits = 0
        for comp, cls in zip(comps, classifications):
            sig = frozenset(comp.cluster_ids)
            if cls.kind == CHAIN or sig in flagged:
                continue
            if cls.kind == Y_SHAPE:
                cut = cut_y_shape(cls, graph, config.ghost_min)
                if cut is not None:
                    report.y_cuts.append(cut)
                    if cut.removed_component:
                        report.ghost_components_removed += 1
                    edits += 1
                else:
                    flagged.add(sig)
                continue
            if cls.kind == X_SHAPE:
                if solve_and_apply(cls):
                    edits += 1
                else:
                    flagged.add(sig)
                continue
            # complex: take the first workable sub-problem, then re-extract
            subs, irreducible = decompose_complex(comp, graph)
            progressed = False
            for sub in subs:
                if sub.kind == MULTIWAY and len(sub.core) == 1:
                    # a ghost merge buried in a complex component: cut it
                    merge = sub.core[0]
                    if (
                        graph.in_degree(merge) == 2
                        and graph.out_degree(merge) == 1
                        and len(sub.in_branches) == 2
                    ):
                        lens = sorted(len(b) for b in sub.in_branches)
                        if lens[0] < config.ghost_min <= lens[1]:
                            short = min(sub.in_branches, key=len)
                            ycls = Classification(
                                Y_SHAPE,
                                merge_link=(short[-1], merge),
                                short_branch=short,
                                in_branches=sub.in_branches,
                                out_branches=sub.out_branches,
                            )
                            cut = cut_y_shape(ycls, graph, config.ghost_min)
                            if cut is not None:
                                report.y_cuts.append(cut)
                                progressed = True
                                break
                if solve_and_apply(sub):
                    progressed = True
                    break
            if progressed:
                edits += 1
            else:
                if irreducible:
                    _flag(report, "irreducible")
                flagged.add(sig)
        if edits == 0:
            break
    report.timings["solving"] = time.perf_counter() - t0

    # leftovers: fragment anything still ambiguous into simple chains
    t0 = time.perf_counter()
    comps = connected_components(graph)
    for comp in comps:
        cls = classify(comp, graph, config.ghost_min)
        if cls.kind != CHAIN:
            _fragment_into_chains(graph, comp.cluster_ids)
            report.fragmented_components += 1
    comps = connected_components(graph)
    trajectories = build_trajectories(comps, graph)
    trajectories, removed = remove_ghosts(trajectories, config.ghost_min)
    report.short_trajectories_removed = removed
    # renumber surviving identities densely and deterministically
    for new_id, traj in enumerate(trajectories):
        traj.identity = new_id
    report.n_trajectories = len(trajectories)
    report.timings["trajectories"] = time.perf_counter() - t0
    return TrackResult(trajectories, graph, clusters_by_frame, report, config)


def evaluate_files(gt_trajectories, hyp_trajectories, gate: float) -> MotReport:
    return evaluate(gt_trajectories, hyp_trajectories, gate)
