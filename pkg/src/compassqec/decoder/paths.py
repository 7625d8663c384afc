"""Shortest paths on the matching graph (CSR adjacency, per-edge weights)."""

from __future__ import annotations

import heapq

import numpy as np
from numba import njit

__all__ = ["dijkstra_row", "walk_back"]


@njit(cache=True)
def _dijkstra(indptr, nbr, eid, w, src, is_target, ntargets, radius):
    n = len(indptr) - 1
    dist = np.full(n, np.inf)
    done = np.zeros(n, np.bool_)
    dist[src] = 0.0
    heap = [(0.0, src)]
    left = ntargets
    horizon = radius
    while heap:
        d, x = heapq.heappop(heap)
        if done[x] or d > dist[x]:
            continue
        if d > horizon:
            break
        done[x] = True
        if is_target[x]:
            left -= 1
            if left == 0 and d < horizon:
                horizon = d  # settle everything at this distance, then stop
        for k in range(indptr[x], indptr[x + 1]):
            y = nbr[k]
            nd = d + w[eid[k]]
            if nd < dist[y]:
                dist[y] = nd
                heapq.heappush(heap, (nd, y))
    for x in range(n):
        if not done[x]:
            dist[x] = np.inf
    return dist


def dijkstra_row(indptr, nbr, eid, w, src: int, targets=None, radius: float = np.inf) -> np.ndarray:
    """Distances from ``src``.  The search stops once every node in
    ``targets`` is settled or the frontier passes ``radius``; nodes left
    unsettled read ``inf``."""
    n = len(indptr) - 1
    is_t = np.zeros(n, np.bool_)
    cnt = -1  # never reaches zero: no target-based stop
    if targets is not None:
        is_t[np.asarray(targets, dtype=np.int64)] = True
        is_t[src] = False
        if is_t.any():
            cnt = int(is_t.sum())
    return _dijkstra(indptr, nbr, eid, np.asarray(w, dtype=np.float64), int(src), is_t, cnt, float(radius))


@njit(cache=True)
def _walk(indptr, nbr, eid, masks, w, dist, start, goal, eps):
    n = len(indptr) - 1
    node = np.empty(n, np.int64)
    slot = np.empty(n, np.int64)
    acc = np.empty(n, np.int64)
    onpath = np.zeros(n, np.bool_)
    top = 0
    node[0] = start
    slot[0] = indptr[start]
    acc[0] = 0
    onpath[start] = True
    while top >= 0:
        x = node[top]
        if x == goal:
            return acc[top]
        moved = False
        while slot[top] < indptr[x + 1]:
            k = slot[top]
            slot[top] += 1
            y = nbr[k]
            e = eid[k]
            if not onpath[y] and abs(dist[y] + w[e] - dist[x]) <= eps:
                top += 1
                node[top] = y
                slot[top] = indptr[y]
                acc[top] = acc[top - 1] ^ masks[e]
                onpath[y] = True
                moved = True
                break
        if not moved:
            onpath[x] = False
            top -= 1
    return -1


def walk_back(indptr, nbr, eid, masks, w, dist, start: int, goal: int, tol: float) -> int:
    """Observable mask of the shortest ``goal``-``start`` path, built from
    ``start`` by always taking the lowest edge id that stays on a shortest
    path (``dist`` is measured from ``goal``; neighbour lists must be in
    edge-id order).  Backtracks if zero-weight edges lead into a dead end."""
    eps = tol * max(1.0, abs(float(dist[start])))
    out = _walk(indptr, nbr, eid, masks, np.asarray(w, dtype=np.float64), dist, int(start), int(goal), eps)
    if out < 0:
        raise RuntimeError(f"shortest-path recovery failed between {goal} and {start}")
    return int(out)
