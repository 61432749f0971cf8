# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled graph kernels: mirrors purepy.py operation for operation.

Keep the augmentation arithmetic in the same order as the fallback so both
backends produce bit-identical flows.
"""

import numpy as np

cimport numpy as cnp


cdef bint _bfs(int n,
               const cnp.int32_t[::1] adj_start,
               const cnp.int32_t[::1] adj_arc,
               const cnp.int32_t[::1] adj_other,
               const cnp.uint8_t[::1] adj_fwd,
               const double[::1] cap_fwd,
               const double[::1] cap_rev,
               int src, int dst, double floor,
               cnp.int64_t[::1] parent_entry,
               cnp.uint8_t[::1] seen,
               cnp.int32_t[::1] queue) nogil:
    cdef int head = 0, tail = 0, u, v, e, a
    cdef double res
    cdef int i
    for i in range(n):
        parent_entry[i] = -1
        seen[i] = 0
    seen[src] = 1
    queue[tail] = src
    tail += 1
    while head < tail:
        u = queue[head]
        head += 1
        for e in range(adj_start[u], adj_start[u + 1]):
            v = adj_other[e]
            if seen[v]:
                continue
            a = adj_arc[e]
            if adj_fwd[e]:
                res = cap_fwd[a]
            else:
                res = cap_rev[a]
            if res <= floor:
                continue
            seen[v] = 1
            parent_entry[v] = e
            if v == dst:
                return True
            queue[tail] = v
            tail += 1
    return dst >= 0 and seen[dst] != 0


def bfs_parents(n, adj_start, adj_arc, adj_other, adj_fwd, cap_fwd, cap_rev,
                src, dst, floor, parent_entry):
    seen = np.zeros(int(n), dtype=np.uint8)
    queue = np.empty(int(n), dtype=np.int32)
    return _bfs(int(n), adj_start, adj_arc, adj_other, adj_fwd, cap_fwd, cap_rev,
                int(src), int(dst), float(floor), parent_entry, seen, queue)


def max_flow(n, adj_start, adj_arc, adj_other, adj_fwd, adj_src,
             cap_fwd, cap_rev, src, dst, limit, floor, flow_delta):
    cdef int nn = int(n), isrc = int(src), idst = int(dst)
    cdef double dlimit = float(limit), dfloor = float(floor)
    cdef cnp.int64_t[::1] parent_entry = np.empty(nn, dtype=np.int64)
    cdef cnp.uint8_t[::1] seen = np.zeros(nn, dtype=np.uint8)
    cdef cnp.int32_t[::1] queue = np.empty(nn, dtype=np.int32)
    cdef const cnp.int32_t[::1] c_start = adj_start
    cdef const cnp.int32_t[::1] c_arc = adj_arc
    cdef const cnp.int32_t[::1] c_other = adj_other
    cdef const cnp.uint8_t[::1] c_fwd = adj_fwd
    cdef const cnp.int32_t[::1] c_src = adj_src
    cdef double[::1] c_cap_fwd = cap_fwd
    cdef double[::1] c_cap_rev = cap_rev
    cdef double[::1] c_delta = flow_delta
    cdef double value = 0.0, push, res
    cdef int v, a
    cdef cnp.int64_t e
    with nogil:
        while dlimit - value > dfloor:
            if not _bfs(nn, c_start, c_arc, c_other, c_fwd, c_cap_fwd, c_cap_rev,
                        isrc, idst, dfloor, parent_entry, seen, queue):
                break
            # bottleneck along the parent chain
            push = dlimit - value
            v = idst
            while v != isrc:
                e = parent_entry[v]
                a = c_arc[e]
                if c_fwd[e]:
                    res = c_cap_fwd[a]
                else:
                    res = c_cap_rev[a]
                if res < push:
                    push = res
                v = c_src[e]
            if push <= dfloor:
                break
            v = idst
            while v != isrc:
                e = parent_entry[v]
                a = c_arc[e]
                if c_fwd[e]:
                    c_cap_fwd[a] -= push
                    c_cap_rev[a] += push
                    c_delta[a] += push
                else:
                    c_cap_rev[a] -= push
                    c_cap_fwd[a] += push
                    c_delta[a] -= push
                v = c_src[e]
            value += push
    return value


def reachable(n, adj_start, adj_arc, adj_other, adj_fwd, cap_fwd, cap_rev,
              src, floor):
    parent_entry = np.empty(int(n), dtype=np.int64)
    seen = np.zeros(int(n), dtype=np.uint8)
    queue = np.empty(int(n), dtype=np.int32)
    _bfs(int(n), adj_start, adj_arc, adj_other, adj_fwd, cap_fwd, cap_rev,
         int(src), -1, float(floor), parent_entry, seen, queue)
    mask = np.asarray(seen, dtype=bool).copy()
    mask[int(src)] = True
    return mask
