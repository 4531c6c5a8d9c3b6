"""Connected components of the cluster graph and their shape taxonomy.

A component with only one-to-one links is a finished trajectory (chain).
Two trajectories sharing clusters during an occlusion form an X: two inbound
branches, a run of shared clusters, two outbound branches. A real track
joined by a short spurious branch through one wrong link forms a Y. Anything
else is complex and gets decomposed into pairwise sub-problems.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .linking import ClusterGraph

CHAIN = "chain"
X_SHAPE = "x-shape"
Y_SHAPE = "y-shape"
COMPLEX = "complex"
MULTIWAY = "multiway"  # decomposed run needing recursive bipartition


@dataclass
class Component:
    comp_id: int
    cluster_ids: list[int]  # sorted by (frame, cid)

    def frame_span(self, graph: ClusterGraph) -> tuple[int, int]:
        frames = [graph.clusters[c].frame for c in self.cluster_ids]
        return min(frames), max(frames)


@dataclass
class Classification:
    kind: str
    core: list[int] = field(default_factory=list)  # shared run, time order
    span: tuple[int, int] | None = None  # frames of the shared run
    in_branches: list[list[int]] = field(default_factory=list)  # time order
    out_branches: list[list[int]] = field(default_factory=list)
    merge_link: tuple[int, int] | None = None  # y: (branch tail, merge node)
    short_branch: list[int] = field(default_factory=list)  # y: ghost branch


def connected_components(graph: ClusterGraph) -> list[Component]:
    """Equivalence classes of undirected reachability over time links,
    found by breadth-first search from unvisited clusters in id order."""
    seen: set[int] = set()
    components = []
    for seed in sorted(graph.clusters):
        if seed in seen:
            continue
        queue = deque([seed])
        seen.add(seed)
        members = []
        while queue:
            cid = queue.popleft()
            members.append(cid)
            for link in graph.out_links(cid):
                if link.dst not in seen:
                    seen.add(link.dst)
                    queue.append(link.dst)
            for link in graph.in_links(cid):
                if link.src not in seen:
                    seen.add(link.src)
                    queue.append(link.src)
        members.sort(key=lambda c: (graph.clusters[c].frame, c))
        components.append(Component(comp_id=len(components), cluster_ids=members))
    return components


def _is_simple(graph: ClusterGraph, cid: int) -> bool:
    return graph.in_degree(cid) <= 1 and graph.out_degree(cid) <= 1


def _walk_back(graph: ClusterGraph, start: int, stop: set[int]) -> list[int] | None:
    """Chain of simple nodes ending at `start`, time ascending. None if a
    non-simple node is encountered."""
    if not _is_simple(graph, start):
        return None
    chain = deque([start])
    cur = start
    while True:
        preds = graph.in_links(cur)
        if not preds:
            return list(chain)
        prev = preds[0].src
        if prev in stop:
            return list(chain)
        if not _is_simple(graph, prev):
            return None
        chain.appendleft(prev)
        cur = prev


def _walk_forward(graph: ClusterGraph, start: int, stop: set[int]) -> list[int] | None:
    if not _is_simple(graph, start):
        return None
    chain = [start]
    cur = start
    while True:
        succs = graph.out_links(cur)
        if not succs:
            return chain
        nxt = succs[0].dst
        if nxt in stop:
            return chain
        if not _is_simple(graph, nxt):
            return None
        chain.append(nxt)
        cur = nxt


def _shared_runs(graph: ClusterGraph, cluster_ids: list[int]) -> list[list[int]]:
    """Maximal runs of shared clusters: multi-degree nodes plus the simple
    nodes lying on a merge-to-split path between them."""
    idset = set(cluster_ids)
    merges = {c for c in cluster_ids if graph.in_degree(c) >= 2}
    splits = {c for c in cluster_ids if graph.out_degree(c) >= 2}
    hubs = merges | splits
    if not hubs:
        return []

    def closure(seeds: set[int], forward: bool) -> set[int]:
        found: set[int] = set()
        stack = sorted(seeds)
        while stack:
            cid = stack.pop()
            links = graph.out_links(cid) if forward else graph.in_links(cid)
            for link in links:
                nxt = link.dst if forward else link.src
                if nxt in hubs or nxt in found or nxt not in idset:
                    continue
                if _is_simple(graph, nxt):
                    found.add(nxt)
                    stack.append(nxt)
        return found

    shared = hubs | (closure(merges, True) & closure(splits, False))

    runs = []
    seen: set[int] = set()
    for seed in sorted(shared):
        if seed in seen:
            continue
        queue = deque([seed])
        seen.add(seed)
        run = []
        while queue:
            cid = queue.popleft()
            run.append(cid)
            for link in graph.out_links(cid):
                if link.dst in shared and link.dst not in seen:
                    seen.add(link.dst)
                    queue.append(link.dst)
            for link in graph.in_links(cid):
                if link.src in shared and link.src not in seen:
                    seen.add(link.src)
                    queue.append(link.src)
        run.sort(key=lambda c: (graph.clusters[c].frame, c))
        runs.append(run)
    runs.sort(key=lambda r: graph.clusters[r[0]].frame)
    return runs


def _run_branches(graph: ClusterGraph, run: list[int]):
    """External branch chains entering and leaving a shared run.

    Returns (in_branches, out_branches) or None when a branch is not a
    simple chain.
    """
    run_set = set(run)
    in_branches, out_branches = [], []
    for cid in run:
        for link in graph.in_links(cid):
            if link.src in run_set:
                continue
            chain = _walk_back(graph, link.src, run_set)
            if chain is None:
                return None
            in_branches.append(chain)
        for link in graph.out_links(cid):
            if link.dst in run_set:
                continue
            chain = _walk_forward(graph, link.dst, run_set)
            if chain is None:
                return None
            out_branches.append(chain)
    in_branches.sort(key=lambda b: b[-1])
    out_branches.sort(key=lambda b: b[0])
    return in_branches, out_branches


def _run_is_time_path(graph: ClusterGraph, run: list[int]) -> bool:
    """One cluster per frame over a contiguous span, internally linked."""
    frames = [graph.clusters[c].frame for c in run]
    if len(set(frames)) != len(frames):
        return False
    if frames != list(range(frames[0], frames[-1] + 1)):
        return False
    for a, b in zip(run, run[1:]):
        if all(link.dst != b for link in graph.out_links(a)):
            return False
    return True


def classify(component: Component, graph: ClusterGraph, ghost_min: int) -> Classification:
    ids = component.cluster_ids
    idset = set(ids)
    hubs = [c for c in ids if not _is_simple(graph, c)]
    if not hubs:
        return Classification(CHAIN)

    # Y takes precedence: one merge node, a single continuation, and a short
    # inbound branch is handled by link removal, not by the energy solver.
    if len(hubs) == 1:
        h = hubs[0]
        if graph.in_degree(h) == 2 and graph.out_degree(h) == 1:
            tails = sorted(link.src for link in graph.in_links(h))
            branches = [_walk_back(graph, t, {h}) for t in tails]
            cont = _walk_forward(graph, graph.out_links(h)[0].dst, {h})
            if None not in branches and cont is not None:
                covered = {h, *branches[0], *branches[1], *cont}
                lens = [len(b) for b in branches]
                if covered == idset and min(lens) < ghost_min:
                    short = branches[0] if lens[0] <= lens[1] else branches[1]
                    return Classification(
                        Y_SHAPE,
                        merge_link=(short[-1], h),
                        short_branch=short,
                        in_branches=branches,
                        out_branches=[cont],
                    )

    runs = _shared_runs(graph, ids)
    if len(runs) == 1:
        run = runs[0]
        branches = _run_branches(graph, run)
        if branches is not None and _run_is_time_path(graph, run):
            in_b, out_b = branches
            covered = set(run)
            for b in in_b + out_b:
                covered.update(b)
            if len(in_b) == 2 and len(out_b) == 2 and covered == idset:
                span = (graph.clusters[run[0]].frame, graph.clusters[run[-1]].frame)
                return Classification(
                    X_SHAPE, core=run, span=span, in_branches=in_b, out_branches=out_b
                )
    return Classification(COMPLEX)


def decompose_complex(
    component: Component, graph: ClusterGraph
) -> tuple[list[Classification], int]:
    """Split a complex component into per-run pairwise sub-problems.

    Runs with a clean 2-in/2-out structure become x-shape sub-problems; runs
    with more branches are emitted for recursive bipartition. Returns the
    sub-problems plus a count of irreducible runs that were left alone.
    """
    subs: list[Classification] = []
    irreducible = 0
    for run in _shared_runs(graph, component.cluster_ids):
        branches = _run_branches(graph, run)
        if branches is None or not _run_is_time_path(graph, run):
            irreducible += 1
            continue
        in_b, out_b = branches
        span = (graph.clusters[run[0]].frame, graph.clusters[run[-1]].frame)
        if len(in_b) == 2 and len(out_b) == 2:
            subs.append(
                Classification(X_SHAPE, core=run, span=span, in_branches=in_b, out_branches=out_b)
            )
        elif len(in_b) >= 1 and len(out_b) >= 1 and len(in_b) + len(out_b) >= 3:
            subs.append(
                Classification(MULTIWAY, core=run, span=span, in_branches=in_b, out_branches=out_b)
            )
        else:
            irreducible += 1
    return subs, irreducible


@dataclass
class OcclusionWindow:
    """Clusters of one component restricted to a padded occlusion span."""

    span: tuple[int, int]
    frames: list[int]
    core_ids: list[int]
    branch_of: dict[int, int]  # cluster id -> branch index (in first, then out)
    n_in: int
    cluster_ids: list[int]  # all window clusters, (frame, cid) order
    unresolvable: bool


def occlusion_window(
    cls: Classification, graph: ClusterGraph, pad: int, bounds: tuple[int, int]
) -> OcclusionWindow:
    """Clip the component to [ta - pad, tb + pad] around the shared run.

    Flags the window unresolvable when no branch frame survives on one side
    (an occlusion touching the sequence boundary cannot be anchored there).
    """
    ta, tb = cls.span
    lo = max(bounds[0], ta - pad)
    hi = min(bounds[1], tb + pad)
    branch_of: dict[int, int] = {}
    cluster_ids = list(cls.core)
    branches = list(cls.in_branches) + list(cls.out_branches)
    for bi, branch in enumerate(branches):
        for cid in branch:
            if lo <= graph.clusters[cid].frame <= hi:
                branch_of[cid] = bi
                cluster_ids.append(cid)
    cluster_ids.sort(key=lambda c: (graph.clusters[c].frame, c))
    frames = sorted({graph.clusters[c].frame for c in cluster_ids})
    has_pre = any(graph.clusters[c].frame < ta for c in branch_of)
    has_post = any(graph.clusters[c].frame > tb for c in branch_of)
    return OcclusionWindow(
        span=(ta, tb),
        frames=frames,
        core_ids=list(cls.core),
        branch_of=branch_of,
        n_in=len(cls.in_branches),
        cluster_ids=cluster_ids,
        unresolvable=not (has_pre and has_post),
    )
