# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled spatial kernels: single-linkage labels and fixed-radius pairs.

Semantics match cloudtrack._pure exactly (strict `<` merges, inclusive `<=`
pairs, squared-distance comparisons, first-occurrence label numbering).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()


cdef inline Py_ssize_t _find(cnp.int64_t* parent, Py_ssize_t i) noexcept nogil:
    cdef Py_ssize_t root = i, nxt
    while parent[root] != root:
        root = parent[root]
    while parent[i] != root:
        nxt = parent[i]
        parent[i] = root
        i = nxt
    return root


cdef inline void _union(cnp.int64_t* parent, Py_ssize_t i, Py_ssize_t j) noexcept nogil:
    cdef Py_ssize_t ri = _find(parent, i)
    cdef Py_ssize_t rj = _find(parent, j)
    if ri == rj:
        return
    if ri < rj:
        parent[rj] = ri
    else:
        parent[ri] = rj


cdef inline Py_ssize_t _bisect(cnp.int64_t[::1] keys, cnp.int64_t target) noexcept nogil:
    # index of target in sorted keys, or -1
    cdef Py_ssize_t lo = 0, hi = keys.shape[0], mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if keys[mid] < target:
            lo = mid + 1
        else:
            hi = mid
    if lo < keys.shape[0] and keys[lo] == target:
        return lo
    return -1


cdef inline double _dist2(double[:, ::1] a, Py_ssize_t i, double[:, ::1] b, Py_ssize_t j) noexcept nogil:
    cdef double dx = a[i, 0] - b[j, 0]
    cdef double dy = a[i, 1] - b[j, 1]
    cdef double dz = a[i, 2] - b[j, 2]
    return dx * dx + dy * dy + dz * dz


cdef _build_grid(double[:, ::1] coords, double cell):
    """Sort points into grid cells of size `cell`.

    Returns (order, starts, ukeys, gx, gy, gz, dims) where order[starts[c]:
    starts[c+1]] are the point indices of unique cell c with packed key
    ukeys[c].
    """
    cdef Py_ssize_t n = coords.shape[0]
    g = np.empty((n, 3), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] gv = g
    cdef Py_ssize_t i
    for i in range(n):
        gv[i, 0] = <cnp.int64_t>floor(coords[i, 0] / cell)
        gv[i, 1] = <cnp.int64_t>floor(coords[i, 1] / cell)
        gv[i, 2] = <cnp.int64_t>floor(coords[i, 2] / cell)
    lo = g.min(axis=0)
    g -= lo
    dims = g.max(axis=0) + 1
    if float(dims[0]) * float(dims[1]) * float(dims[2]) >= 2.0 ** 62:
        raise OverflowError("grid extent too large for packed cell keys")
    keys = (g[:, 0] * dims[1] + g[:, 1]) * dims[2] + g[:, 2]
    order = np.argsort(keys, kind="stable")
    skeys = keys[order]
    if n:
        boundaries = np.flatnonzero(np.diff(skeys)) + 1
        starts = np.concatenate(([0], boundaries, [n])).astype(np.int64)
        ukeys = skeys[starts[:-1]]
    else:
        starts = np.zeros(1, dtype=np.int64)
        ukeys = np.empty(0, dtype=np.int64)
    return order.astype(np.int64), starts, ukeys, g, dims


def cluster_labels(coords, double threshold):
    """Single-linkage component labels with strict `< threshold` merges."""
    cdef double[:, ::1] c = np.ascontiguousarray(coords, dtype=np.float64)
    cdef Py_ssize_t n = c.shape[0]
    labels_arr = np.empty(n, dtype=np.int64)
    if n == 0:
        return labels_arr
    order_arr, starts_arr, ukeys_arr, g_arr, dims = _build_grid(c, threshold)
    cdef cnp.int64_t[::1] order = order_arr
    cdef cnp.int64_t[::1] starts = starts_arr
    cdef cnp.int64_t[::1] ukeys = ukeys_arr
    cdef cnp.int64_t[:, ::1] g = g_arr
    cdef cnp.int64_t dy = dims[1], dz = dims[2]
    cdef cnp.int64_t rx = dims[0], ry = dims[1], rz = dims[2]

    parent_arr = np.arange(n, dtype=np.int64)
    cdef cnp.int64_t[::1] parent = parent_arr
    cdef double thr2 = threshold * threshold

    # half neighborhood: unordered cell pairs visited once
    cdef cnp.int64_t[13][3] offs
    cdef int noff = 0, ox, oy, oz
    for ox in range(-1, 2):
        for oy in range(-1, 2):
            for oz in range(-1, 2):
                if (ox, oy, oz) > (0, 0, 0):
                    offs[noff][0] = ox
                    offs[noff][1] = oy
                    offs[noff][2] = oz
                    noff += 1

    cdef Py_ssize_t ncells = ukeys.shape[0]
    cdef Py_ssize_t ci, a, b, oi, hit
    cdef cnp.int64_t cx, cy, cz, nx, ny, nz, nkey
    cdef Py_ssize_t i0, i1, j0, j1
    with nogil:
        for ci in range(ncells):
            i0 = starts[ci]
            i1 = starts[ci + 1]
            cx = g[order[i0], 0]
            cy = g[order[i0], 1]
            cz = g[order[i0], 2]
            for a in range(i0, i1):
                for b in range(a + 1, i1):
                    if _dist2(c, order[a], c, order[b]) < thr2:
                        _union(&parent[0], order[a], order[b])
            for oi in range(13):
                nx = cx + offs[oi][0]
                ny = cy + offs[oi][1]
                nz = cz + offs[oi][2]
                if nx < 0 or nx >= rx or ny < 0 or ny >= ry or nz < 0 or nz >= rz:
                    continue
                nkey = (nx * dy + ny) * dz + nz
                hit = _bisect(ukeys, nkey)
                if hit < 0:
                    continue
                j0 = starts[hit]
                j1 = starts[hit + 1]
                for a in range(i0, i1):
                    for b in range(j0, j1):
                        if _dist2(c, order[a], c, order[b]) < thr2:
                            _union(&parent[0], order[a], order[b])

    # first-occurrence renumbering
    cdef cnp.int64_t[::1] labels = labels_arr
    remap_arr = np.full(n, -1, dtype=np.int64)
    cdef cnp.int64_t[::1] remap = remap_arr
    cdef Py_ssize_t root
    cdef cnp.int64_t nlab = 0
    cdef Py_ssize_t k
    for k in range(n):
        root = _find(&parent[0], k)
        if remap[root] < 0:
            remap[root] = nlab
            nlab += 1
        labels[k] = remap[root]
    return labels_arr


def radius_pairs(queries, points, double radius):
    """All (query, point) index pairs with distance <= radius, sorted."""
    cdef double[:, ::1] q = np.ascontiguousarray(queries, dtype=np.float64)
    cdef double[:, ::1] p = np.ascontiguousarray(points, dtype=np.float64)
    cdef Py_ssize_t nq = q.shape[0], np_ = p.shape[0]
    if nq == 0 or np_ == 0:
        return np.empty((0, 2), dtype=np.int64)
    order_arr, starts_arr, ukeys_arr, g_arr, dims = _build_grid(p, radius)
    cdef cnp.int64_t[::1] order = order_arr
    cdef cnp.int64_t[::1] starts = starts_arr
    cdef cnp.int64_t[::1] ukeys = ukeys_arr
    cdef cnp.int64_t dy = dims[1], dz = dims[2]
    cdef cnp.int64_t rx = dims[0], ry = dims[1], rz = dims[2]
    # offsets applied when binning points; queries use the same origin
    glo = np.floor(np.asarray(points, dtype=np.float64) / radius).astype(np.int64).min(axis=0)
    cdef cnp.int64_t lox = glo[0], loy = glo[1], loz = glo[2]

    cdef double r2 = radius * radius
    cdef Py_ssize_t cap = max(64, nq)
    out_arr = np.empty((cap, 2), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] out = out_arr
    cdef Py_ssize_t count = 0

    cdef Py_ssize_t qi, a, hit
    cdef cnp.int64_t qx, qy, qz, nx, ny, nz, nkey
    cdef int ox, oy, oz
    cdef Py_ssize_t j0, j1
    for qi in range(nq):
        qx = <cnp.int64_t>floor(q[qi, 0] / radius) - lox
        qy = <cnp.int64_t>floor(q[qi, 1] / radius) - loy
        qz = <cnp.int64_t>floor(q[qi, 2] / radius) - loz
        for ox in range(-1, 2):
            nx = qx + ox
            if nx < 0 or nx >= rx:
                continue
            for oy in range(-1, 2):
                ny = qy + oy
                if ny < 0 or ny >= ry:
                    continue
                for oz in range(-1, 2):
                    nz = qz + oz
                    if nz < 0 or nz >= rz:
                        continue
                    nkey = (nx * dy + ny) * dz + nz
                    hit = _bisect(ukeys, nkey)
                    if hit < 0:
                        continue
                    j0 = starts[hit]
                    j1 = starts[hit + 1]
                    for a in range(j0, j1):
                        if _dist2(q, qi, p, order[a]) <= r2:
                            if count == cap:
                                cap *= 2
                                new_arr = np.empty((cap, 2), dtype=np.int64)
                                new_arr[:count] = out_arr[:count]
                                out_arr = new_arr
                                out = out_arr
                            out[count, 0] = qi
                            out[count, 1] = order[a]
                            count += 1
    pairs = out_arr[:count]
    sorter = np.lexsort((pairs[:, 1], pairs[:, 0]))
    return np.ascontiguousarray(pairs[sorter])
