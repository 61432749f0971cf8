"""Pure-Python graph kernels (fallback when the compiled extension is absent).

The three routines operate on a CSR-style adjacency over directed arc
*entries*: entry ``e`` sits in bus ``u``'s slice ``adj_start[u]:adj_start[u+1]``
and records the arc index (``adj_arc``), the neighbouring bus (``adj_other``)
and whether traversal runs with the arc's forward orientation (``adj_fwd``).
Residual headroom lives in ``cap_fwd``/``cap_rev`` per arc; traversing an
entry consumes one of them and refunds the other, which is exactly the
latent-capacity update c_fwd = limit - flow, c_rev = limit + flow.

Entries are pre-sorted by (bus, neighbour, arc), and the BFS dequeues FIFO,
so discovered parents - hence augmenting paths, hence resulting flows - are
fully deterministic. The compiled kernel mirrors this file operation for
operation so both backends produce bit-identical numbers.
"""

from __future__ import annotations

import numpy as np


def bfs_parents(n, adj_start, adj_arc, adj_other, adj_fwd, cap_fwd, cap_rev,
                src, dst, floor, parent_entry):
    """Shortest unsaturated path search from ``src``.

    Fills ``parent_entry[v]`` with the adjacency-entry index used to first
    reach bus ``v`` (-1 where unreached) and returns True once ``dst`` is
    discovered. ``dst`` may be -1 to explore the whole reachable set.
    """
    parent_entry[:] = -1
    seen = np.zeros(n, dtype=bool)
    seen[src] = True
    queue = [src]
    head = 0
    while head < len(queue):
        u = queue[head]
        head += 1
        for e in range(adj_start[u], adj_start[u + 1]):
            v = adj_other[e]
            if seen[v]:
                continue
            a = adj_arc[e]
            res = cap_fwd[a] if adj_fwd[e] else cap_rev[a]
            if res <= floor:
                continue
            seen[v] = True
            parent_entry[v] = e
            if v == dst:
                return True
            queue.append(v)
    return dst >= 0 and bool(seen[dst])


def _trace(adj_arc, adj_other, adj_fwd, adj_src, parent_entry, src, dst):
    """Walk parent entries back from dst; returns entry list src->dst order."""
    entries = []
    v = dst
    while v != src:
        e = parent_entry[v]
        entries.append(e)
        v = adj_src[e]
    entries.reverse()
    return entries


def max_flow(n, adj_start, adj_arc, adj_other, adj_fwd, adj_src,
             cap_fwd, cap_rev, src, dst, limit, floor, flow_delta):
    """Shortest-augmenting-path max-flow from ``src`` to ``dst``.

    Mutates the capacity arrays in place, accumulates the signed flow pushed
    per arc into ``flow_delta`` (positive = forward orientation) and returns
    the total value. The search stops once ``limit`` has been routed.
    """
    parent_entry = np.empty(n, dtype=np.int64)
    value = 0.0
    while limit - value > floor:
        if not bfs_parents(n, adj_start, adj_arc, adj_other, adj_fwd,
                           cap_fwd, cap_rev, src, dst, floor, parent_entry):
            break
        entries = _trace(adj_arc, adj_other, adj_fwd, adj_src, parent_entry, src, dst)
        push = limit - value
        for e in entries:
            a = adj_arc[e]
            res = cap_fwd[a] if adj_fwd[e] else cap_rev[a]
            if res < push:
                push = res
        if push <= floor:
            break
        for e in entries:
            a = adj_arc[e]
            if adj_fwd[e]:
                cap_fwd[a] -= push
                cap_rev[a] += push
                flow_delta[a] += push
            else:
                cap_rev[a] -= push
                cap_fwd[a] += push
                flow_delta[a] -= push
        value += push
    return value


def reachable(n, adj_start, adj_arc, adj_other, adj_fwd, cap_fwd, cap_rev,
              src, floor):
    """Residual reachability mask from ``src`` (min-cut extraction)."""
    parent_entry = np.empty(n, dtype=np.int64)
    bfs_parents(n, adj_start, adj_arc, adj_other, adj_fwd, cap_fwd, cap_rev,
                src, -1, floor, parent_entry)
    mask = parent_entry >= 0
    mask[src] = True
    return mask
