"""Pure NumPy fallback for the compiled spatial kernels.

Same contracts as cloudtrack._native: single-linkage component labels with a
strict `<` merge predicate, and fixed-radius neighbor pairs with an inclusive
`<=` predicate. Distances are compared squared in both backends so the two
implementations agree bit for bit.
"""

from __future__ import annotations

import numpy as np

# half neighborhood: each unordered cell pair is visited exactly once
_HALF_OFFSETS = [
    (dx, dy, dz)
    for dx in (-1, 0, 1)
    for dy in (-1, 0, 1)
    for dz in (-1, 0, 1)
    if (dx, dy, dz) > (0, 0, 0)
]

_ALL_OFFSETS = [
    (dx, dy, dz) for dx in (-1, 0, 1) for dy in (-1, 0, 1) for dz in (-1, 0, 1)
]


def _cell_map(coords: np.ndarray, cell: float) -> dict[tuple[int, int, int], np.ndarray]:
    g = np.floor(coords / cell).astype(np.int64)
    cells: dict[tuple[int, int, int], list[int]] = {}
    for i, key in enumerate(map(tuple, g)):
        cells.setdefault(key, []).append(i)
    return {k: np.asarray(v, dtype=np.int64) for k, v in cells.items()}


class _UnionFind:
    def __init__(self, n: int):
        self.parent = np.arange(n, dtype=np.int64)

    def find(self, i: int) -> int:
        p = self.parent
        root = i
        while p[root] != root:
            root = p[root]
        while p[i] != root:  # path compression
            p[i], i = root, p[i]
        return root

    def union(self, i: int, j: int) -> None:
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            self.parent[max(ri, rj)] = min(ri, rj)


def _canonical_labels(uf: _UnionFind, n: int) -> np.ndarray:
    labels = np.empty(n, dtype=np.int64)
    remap: dict[int, int] = {}
    for i in range(n):
        root = uf.find(i)
        if root not in remap:
            remap[root] = len(remap)
        labels[i] = remap[root]
    return labels


def cluster_labels(coords: np.ndarray, threshold: float) -> np.ndarray:
    """Single-linkage component labels: chains of point pairs at distance
    strictly below `threshold` merge. Labels are numbered by first occurrence
    in point order."""
    coords = np.ascontiguousarray(coords, dtype=np.float64)
    n = len(coords)
    if n == 0:
        return np.empty(0, dtype=np.int64)
    thr2 = threshold * threshold
    cells = _cell_map(coords, threshold)
    uf = _UnionFind(n)
    for (cx, cy, cz), members in cells.items():
        pts = coords[members]
        if len(members) > 1:
            d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1)
            ii, jj = np.nonzero(np.triu(d2 < thr2, k=1))
            for a, b in zip(members[ii], members[jj]):
                uf.union(int(a), int(b))
        for dx, dy, dz in _HALF_OFFSETS:
            other = cells.get((cx + dx, cy + dy, cz + dz))
            if other is None:
                continue
            d2 = ((pts[:, None, :] - coords[other][None, :, :]) ** 2).sum(-1)
            ii, jj = np.nonzero(d2 < thr2)
            for a, b in zip(members[ii], other[jj]):
                uf.union(int(a), int(b))
    return _canonical_labels(uf, n)


def radius_pairs(queries: np.ndarray, points: np.ndarray, radius: float) -> np.ndarray:
    """All (query index, point index) pairs at Euclidean distance <= radius.

    Returns an (L, 2) int64 array sorted by (query, point).
    """
    queries = np.ascontiguousarray(queries, dtype=np.float64)
    points = np.ascontiguousarray(points, dtype=np.float64)
    if len(queries) == 0 or len(points) == 0:
        return np.empty((0, 2), dtype=np.int64)
    r2 = radius * radius
    cells = _cell_map(points, radius)
    qcells = np.floor(queries / radius).astype(np.int64)
    out_q: list[np.ndarray] = []
    out_p: list[np.ndarray] = []
    for qi in range(len(queries)):
        cx, cy, cz = qcells[qi]
        cand: list[np.ndarray] = []
        for dx, dy, dz in _ALL_OFFSETS:
            members = cells.get((cx + dx, cy + dy, cz + dz))
            if members is not None:
                cand.append(members)
        if not cand:
            continue
        idx = np.concatenate(cand)
        d2 = ((points[idx] - queries[qi]) ** 2).sum(-1)
        hit = idx[d2 <= r2]
        if len(hit):
            out_q.append(np.full(len(hit), qi, dtype=np.int64))
            out_p.append(hit)
    if not out_q:
        return np.empty((0, 2), dtype=np.int64)
    pairs = np.column_stack([np.concatenate(out_q), np.concatenate(out_p)])
    order = np.lexsort((pairs[:, 1], pairs[:, 0]))
    return pairs[order]
