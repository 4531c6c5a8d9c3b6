"""Occlusion resolution: frustrated-energy bipartitioning of point graphs.

Points of an ambiguous component are connected by mixed-sign weights: a
sharp positive attraction below the nearest-neighbor scale, a quadratic
repulsion beyond the typical cluster size, and a positive time link between a
point's constant-velocity prediction and nearby next-frame points. The label
assignment x in {-1,+1}^n minimizing

    H(x) = - sum_{i<j} w_ij x_i x_j

splits the occluded clusters into the two targets. Small instances are solved
exactly by enumeration; production instances by a low-rank semidefinite
relaxation (unit vectors on a sphere, projected gradient with backtracking),
rounded along the principal direction and polished by single-flip descent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import kernels
from .clustering import Cluster, make_cluster
from .components import MULTIWAY, Classification, OcclusionWindow, X_SHAPE
from .geometry import FrameCloud
from .linking import ClusterGraph, ClusterLink, point_velocities

STATIC = 0
DYNAMIC = 1


def static_weight(d, r1: float, r0: float, beta: float):
    """Same-frame coupling as a function of point distance.

    exp(-(d/r1)^beta) - ((d-r0)/r1)^2 * step(d-r0), with step(0) = 0: strong
    attraction below r1, non-committal near zero between r1 and r0, repulsion
    beyond r0. Accepts scalars or arrays.
    """
    if r1 <= 0 or r0 <= 0:
        raise ValueError("scales must be positive")
    d = np.asarray(d, dtype=np.float64)
    if np.any(d < 0):
        raise ValueError("distance must be non-negative")
    w = np.exp(-((d / r1) ** beta))
    rep = ((d - r0) / r1) ** 2
    w = w - np.where(d > r0, rep, 0.0)
    return float(w) if w.ndim == 0 else w


def dynamic_weight(prediction_error, r1: float):
    """Consecutive-frame coupling: exp(-D/r1) for prediction distance D."""
    if r1 <= 0:
        raise ValueError("scales must be positive")
    D = np.asarray(prediction_error, dtype=np.float64)
    w = np.exp(-D / r1)
    return float(w) if w.ndim == 0 else w


@dataclass
class PartitionProblem:
    """Sparse mixed-sign weighted graph over the points of a window."""

    coords: np.ndarray  # (n, 3)
    frames: np.ndarray  # (n,)
    point_index: np.ndarray  # (n,) rows into the owning frame's cloud
    cluster_ids: np.ndarray  # (n,)
    branch: np.ndarray  # (n,) branch index, -1 for shared-core points
    pairs: np.ndarray  # (K, 2) int64, i < j
    weights: np.ndarray  # (K,)
    kind: np.ndarray  # (K,) uint8, STATIC or DYNAMIC
    r1: float
    r0: float
    beta: float

    @property
    def n(self) -> int:
        return len(self.coords)

    def matrix(self) -> sp.csr_matrix:
        i, j = self.pairs[:, 0], self.pairs[:, 1]
        w = self.weights
        m = sp.coo_matrix(
            (np.concatenate([w, w]), (np.concatenate([i, j]), np.concatenate([j, i]))),
            shape=(self.n, self.n),
        )
        return m.tocsr()


@dataclass
class PartitionSolution:
    labels: np.ndarray  # (n,) values in {-1, +1}
    energy: float
    solver: str  # "exact" | "sdp"
    converged: bool


def build_problem(
    window: OcclusionWindow,
    graph: ClusterGraph,
    clouds_by_frame: dict[int, FrameCloud],
    r1: float,
    r0: float,
    beta: float,
    static_pad_r1: float = 3.0,
    dynamic_max_r1: float = 5.0,
) -> PartitionProblem:
    """Assemble the weighted point graph for one occlusion window.

    Static weights connect all same-frame pairs out to 2*d_max with
    d_max = r0 + static_pad_r1*r1; beyond d_max the repulsion is held at its
    d_max value so far pairs contribute a bounded constant. Dynamic weights
    connect a point's prediction to next-frame points within
    dynamic_max_r1*r1 (farther pairs are negligible and dropped).
    """
    if len(window.frames) < 2:
        raise ValueError("window too short")
    coords, frames, point_index, cluster_ids, branch = [], [], [], [], []
    cluster_rows: dict[int, slice] = {}
    row = 0
    for cid in window.cluster_ids:
        cluster = graph.clusters[cid]
        pts = cluster.points(clouds_by_frame[cluster.frame])
        k = len(pts)
        coords.append(pts)
        frames.append(np.full(k, cluster.frame, dtype=np.int64))
        point_index.append(cluster.indices)
        cluster_ids.append(np.full(k, cid, dtype=np.int64))
        branch.append(np.full(k, window.branch_of.get(cid, -1), dtype=np.int64))
        cluster_rows[cid] = slice(row, row + k)
        row += k
    coords = np.concatenate(coords)
    frames = np.concatenate(frames)
    point_index = np.concatenate(point_index)
    cluster_ids = np.concatenate(cluster_ids)
    branch = np.concatenate(branch)

    d_max = r0 + static_pad_r1 * r1
    cap = ((d_max - r0) / r1) ** 2
    rows_of_frame = {f: np.flatnonzero(frames == f) for f in window.frames}

    pi, pj, pw, pk = [], [], [], []
    for f in window.frames:
        rows = rows_of_frame[f]
        pts = coords[rows]
        hits = kernels.radius_pairs(pts, pts, 2.0 * d_max)
        keep = hits[:, 0] < hits[:, 1]
        a, b = hits[keep, 0], hits[keep, 1]
        d = np.sqrt(((pts[a] - pts[b]) ** 2).sum(-1))
        w = np.where(d <= d_max, static_weight(d, r1, r0, beta), -cap)
        pi.append(rows[a])
        pj.append(rows[b])
        pw.append(w)
        pk.append(np.zeros(len(w), dtype=np.uint8))

    # Dynamic pairs by forward extrapolation: every node predicts one frame
    # ahead with its own velocity and connects to nearby next-frame nodes.
    # A node's velocity is the displacement from the source whose prediction
    # landed nearest to it (its motion hypothesis survives the frames where
    # occluded clouds interpenetrate); nodes the induction does not reach
    # fall back to their cluster's inbound link velocity.
    velocities = np.empty_like(coords)
    for cid in window.cluster_ids:
        rows = cluster_rows[cid]
        velocities[rows] = point_velocities(coords[rows], graph.in_links(cid))
    for fa, fb in zip(window.frames, window.frames[1:]):
        if fb != fa + 1:
            continue
        rows_a = rows_of_frame[fa]
        rows_b = rows_of_frame[fb]
        pred = coords[rows_a] + velocities[rows_a]
        next_pts = coords[rows_b]
        hits = kernels.radius_pairs(pred, next_pts, dynamic_max_r1 * r1)
        if not len(hits):
            continue
        D = np.sqrt(((pred[hits[:, 0]] - next_pts[hits[:, 1]]) ** 2).sum(-1))
        pi.append(rows_a[hits[:, 0]])
        pj.append(rows_b[hits[:, 1]])
        pw.append(dynamic_weight(D, r1))
        pk.append(np.ones(len(D), dtype=np.uint8))
        best = np.full(len(rows_b), np.inf)
        np.minimum.at(best, hits[:, 1], D)
        close = D <= best[hits[:, 1]]
        for row in range(len(hits) - 1, -1, -1):  # ties: smallest source row
            if close[row]:
                j = hits[row, 1]
                velocities[rows_b[j]] = next_pts[j] - coords[rows_a[hits[row, 0]]]

    if pi:
        pairs = np.column_stack([np.concatenate(pi), np.concatenate(pj)])
        weights = np.concatenate(pw)
        kind = np.concatenate(pk)
    else:
        pairs = np.empty((0, 2), dtype=np.int64)
        weights = np.empty(0)
        kind = np.empty(0, dtype=np.uint8)
    return PartitionProblem(
        coords=coords,
        frames=frames,
        point_index=point_index,
        cluster_ids=cluster_ids,
        branch=branch,
        pairs=pairs,
        weights=weights,
        kind=kind,
        r1=r1,
        r0=r0,
        beta=beta,
    )


def energy(problem: PartitionProblem, labels) -> float:
    """H = - sum over unordered pairs i<j of w_ij x_i x_j."""
    x = np.asarray(labels)
    if len(x) != problem.n:
        raise ValueError("labels must cover all nodes")
    if not np.isin(x, (-1, 1)).all():
        raise ValueError("labels must be +1 or -1")
    if not len(problem.pairs):
        return 0.0
    x = x.astype(np.float64)
    return float(-(problem.weights * x[problem.pairs[:, 0]] * x[problem.pairs[:, 1]]).sum())


def solve_exact(problem: PartitionProblem) -> PartitionSolution:
    """Global minimum by enumeration of 2^(n-1) sign patterns (node 0 fixed
    to +1; the energy is symmetric under a global flip). Ties resolve to the
    lexicographically smallest label vector (-1 before +1)."""
    n = problem.n
    if n > 20:
        raise ValueError("exact solver size limit")
    if n == 0:
        raise ValueError("empty problem")
    if n == 1 or not len(problem.pairs):
        labels = np.ones(n, dtype=np.int8)
        if n > 1:
            labels[1:] = -1  # lex-smallest among the all-tied optima
        return PartitionSolution(labels, energy(problem, labels), "exact", True)
    ii, jj = problem.pairs[:, 0], problem.pairs[:, 1]
    ww = problem.weights
    total = 1 << (n - 1)
    block = 1 << 16
    best_e = np.inf
    best_idx = 0
    shifts = np.array([n - 1 - k for k in range(1, n)], dtype=np.uint64)
    for lo in range(0, total, block):
        idx = np.arange(lo, min(lo + block, total), dtype=np.uint64)
        X = np.empty((len(idx), n), dtype=np.int8)
        X[:, 0] = 1
        X[:, 1:] = (2 * ((idx[:, None] >> shifts[None, :]) & 1) - 1).astype(np.int8)
        e = -(X[:, ii] * X[:, jj]).astype(np.float64) @ ww
        k = int(np.argmin(e))
        if e[k] < best_e:
            best_e = float(e[k])
            best_idx = lo + k
    bits = (np.uint64(best_idx) >> shifts) & np.uint64(1)
    labels = np.ones(n, dtype=np.int8)
    labels[1:] = (2 * bits.astype(np.int64) - 1).astype(np.int8)
    return PartitionSolution(labels, energy(problem, labels), "exact", True)


def _round_principal(V: np.ndarray) -> np.ndarray:
    """Sign of the projection onto the leading principal direction of the
    relaxed vectors; zero projections round to +1."""
    cov = V.T @ V
    _, vecs = np.linalg.eigh(cov)
    scores = V @ vecs[:, -1]
    return np.where(scores >= 0, 1, -1).astype(np.int8)


def _local_descent(labels: np.ndarray, W: sp.csr_matrix) -> np.ndarray:
    """Greedy single-flip descent: flip the best node while any flip lowers H."""
    x = labels.astype(np.float64)
    s = W @ x
    scale = max(1.0, float(np.abs(W.data).max()) if W.nnz else 1.0)
    eps = 1e-12 * scale
    for _ in range(10 * len(x)):
        gains = 2.0 * x * s  # energy change of flipping each node
        i = int(np.argmin(gains))
        if gains[i] >= -eps:
            break
        x[i] = -x[i]
        cols = W.indices[W.indptr[i] : W.indptr[i + 1]]
        vals = W.data[W.indptr[i] : W.indptr[i + 1]]
        s[cols] += 2.0 * x[i] * vals
    return x.astype(np.int8)


def solve_sdp(
    problem: PartitionProblem,
    rank: int | None = None,
    iterations: int = 500,
    tol: float = 1e-7,
    seed: int = 0,
) -> PartitionSolution:
    """Low-rank relaxation of the label problem.

    Labels are relaxed to unit vectors on the (m-1)-sphere and
    -sum w_ij v_i.v_j is minimized by projected gradient descent with
    per-node renormalization and a backtracking step. The relaxed solution is
    rounded along its principal direction and polished by single-flip
    descent; the better of that and the (descended) uniform labeling is
    returned, so the result is never worse than either uniform labeling.
    Deterministic given the seed.
    """
    n = problem.n
    if n == 0:
        raise ValueError("empty problem")
    m = min(n, 8) if rank is None else max(2, min(rank, n))
    if n == 1:
        return PartitionSolution(np.ones(1, dtype=np.int8), 0.0, "sdp", True)
    W = problem.matrix()
    rng = np.random.default_rng(seed)
    V = rng.standard_normal((n, m))
    V /= np.maximum(np.linalg.norm(V, axis=1, keepdims=True), 1e-12)

    def obj(V):
        return -0.5 * float(np.sum(V * (W @ V)))

    e = obj(V)
    wmax = float(np.abs(W).sum(axis=1).max()) if W.nnz else 0.0
    eta = 1.0 / max(wmax, 1e-12)
    converged = False
    for _ in range(iterations):
        G = W @ V  # ascent direction of the (negated) objective
        improved = False
        for _ in range(40):
            trial = V + eta * G
            norms = np.linalg.norm(trial, axis=1, keepdims=True)
            trial = np.where(norms > 1e-12, trial / np.maximum(norms, 1e-300), V)
            e_trial = obj(trial)
            if e_trial < e:
                improved = True
                break
            eta *= 0.5
        if not improved:
            converged = True  # stationary at float resolution
            break
        delta = e - e_trial
        V, e = trial, e_trial
        eta *= 1.3
        if delta <= tol * max(1.0, abs(e)):
            converged = True
            break

    labels = _local_descent(_round_principal(V), W)
    uniform = _local_descent(np.ones(n, dtype=np.int8), W)
    e_lab = energy(problem, labels)
    e_uni = energy(problem, uniform)
    if e_uni < e_lab:
        labels, e_lab = uniform, e_uni
    return PartitionSolution(labels, e_lab, "sdp", converged)


@dataclass
class ApplyOutcome:
    status: str  # "split" | "degenerate" | "identity-ambiguity"
    new_cluster_ids: list[int] = field(default_factory=list)
    branch_side: dict[int, int] = field(default_factory=dict)  # branch idx -> +1/-1


def apply_partition(
    cls: Classification,
    window: OcclusionWindow,
    problem: PartitionProblem,
    solution: PartitionSolution,
    graph: ClusterGraph,
    clouds_by_frame: dict[int, FrameCloud],
) -> ApplyOutcome:
    """Split the shared run of an occlusion component along the solved labels.

    Every shared cluster becomes two sub-clusters; branches attach to the
    side given by the majority vote of their window labels. The component is
    left untouched (and flagged) when a vote ties, when the two inbound or
    the two outbound branches of an X land on the same side, or when one
    side goes empty in some occlusion frame.
    """
    labels = solution.labels
    core_rows = {cid: np.flatnonzero(problem.cluster_ids == cid) for cid in cls.core}
    for cid in cls.core:
        rows = core_rows[cid]
        if not len(rows) or abs(int(labels[rows].sum())) == len(rows):
            return ApplyOutcome("degenerate")

    n_branches = len(cls.in_branches) + len(cls.out_branches)
    votes: dict[int, int] = {}
    for bi in range(n_branches):
        rows = np.flatnonzero(problem.branch == bi)
        tally = int(labels[rows].sum()) if len(rows) else 0
        if tally == 0:
            return ApplyOutcome("identity-ambiguity")
        votes[bi] = 1 if tally > 0 else -1
    n_in = len(cls.in_branches)
    if cls.kind == X_SHAPE:
        if votes[0] == votes[1] or votes[n_in] == votes[n_in + 1]:
            return ApplyOutcome("identity-ambiguity")
    elif cls.kind == MULTIWAY:
        if len(set(votes.values())) < 2:
            return ApplyOutcome("identity-ambiguity")

    # split shared clusters, one pair of sub-clusters per side, in time order
    sides = (1, -1)
    sub: dict[tuple[int, int], Cluster] = {}
    new_ids = []
    for cid in cls.core:
        cluster = graph.clusters[cid]
        rows = core_rows[cid]
        for side in sides:
            members = problem.point_index[rows[labels[rows] == side]]
            piece = make_cluster(graph.new_id(), clouds_by_frame[cluster.frame], members)
            sub[(cid, side)] = piece
            new_ids.append(piece.cid)

    # count dynamic point links supporting each rewired edge
    dyn = problem.pairs[problem.kind == DYNAMIC]

    def dyn_support(cid_a: int, cid_b: int, side: int | None) -> int:
        if not len(dyn):
            return 0
        mask = (problem.cluster_ids[dyn[:, 0]] == cid_a) & (
            problem.cluster_ids[dyn[:, 1]] == cid_b
        )
        if side is not None:
            mask &= (labels[dyn[:, 0]] == side) & (labels[dyn[:, 1]] == side)
        return int(mask.sum())

    in_tail_link = {}
    for branch in cls.in_branches:
        tail = branch[-1]
        entry = [l.dst for l in graph.out_links(tail) if l.dst in set(cls.core)]
        in_tail_link[tail] = entry[0]
    out_head_link = {}
    for branch in cls.out_branches:
        head = branch[0]
        exit_ = [l.src for l in graph.in_links(head) if l.src in set(cls.core)]
        out_head_link[head] = exit_[0]

    for cid in cls.core:
        graph.remove_cluster(cid)
    for piece in (sub[(cid, side)] for cid in cls.core for side in sides):
        graph.add_cluster(piece)

    for side in sides:
        for cid_a, cid_b in zip(cls.core, cls.core[1:]):
            a, b = sub[(cid_a, side)], sub[(cid_b, side)]
            graph.add_link(
                ClusterLink(
                    src=a.cid,
                    dst=b.cid,
                    velocity=b.baricenter - a.baricenter,
                    support=dyn_support(cid_a, cid_b, side),
                    src_sub_baricenter=a.baricenter.copy(),
                )
            )

    for bi, branch in enumerate(cls.in_branches):
        tail = branch[-1]
        side = votes[bi]
        target = sub[(in_tail_link[tail], side)]
        tail_cluster = graph.clusters[tail]
        graph.add_link(
            ClusterLink(
                src=tail,
                dst=target.cid,
                velocity=target.baricenter - tail_cluster.baricenter,
                support=dyn_support(tail, in_tail_link[tail], side),
                src_sub_baricenter=tail_cluster.baricenter.copy(),
            )
        )
    for bo, branch in enumerate(cls.out_branches):
        head = branch[0]
        side = votes[n_in + bo]
        source = sub[(out_head_link[head], side)]
        head_cluster = graph.clusters[head]
        graph.add_link(
            ClusterLink(
                src=source.cid,
                dst=head,
                velocity=head_cluster.baricenter - source.baricenter,
                support=dyn_support(out_head_link[head], head, side),
                src_sub_baricenter=source.baricenter.copy(),
            )
        )
    return ApplyOutcome("split", new_cluster_ids=new_ids, branch_side=votes)


def dump_problem(problem: PartitionProblem, path) -> None:
    """Debug/replay dump: header, weight triplets, node tags."""
    with open(path, "w") as fh:
        fh.write(f"{problem.n} {problem.r1!r} {problem.r0!r} {problem.beta!r}\n")
        for (i, j), w, k in zip(problem.pairs, problem.weights, problem.kind):
            fh.write(f"{i} {j} {w!r}\n")
        for i in range(problem.n):
            fh.write(
                f"{i} {problem.frames[i]} {problem.point_index[i]} "
                f"{problem.cluster_ids[i]} {problem.branch[i]}\n"
            )


def dump_solution(solution: PartitionSolution, path) -> None:
    with open(path, "w") as fh:
        for i, lab in enumerate(solution.labels):
            fh.write(f"{i} {int(lab)}\n")
