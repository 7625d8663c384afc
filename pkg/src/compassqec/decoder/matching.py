"""Minimum-weight perfect matching on detection events.

Events may pair with each other or with the boundary.  With ``k`` events the
problem reduces to a perfect matching on the events alone with pair cost
``min(d(u, v), b(u) + b(v))`` (two events sent to the boundary cost the same
as one pair routed through it), plus a single boundary vertex of cost
``b(u)`` when ``k`` is odd.  The reduced problem is solved exactly with the
blossom algorithm, one connected component of useful pairs at a time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .blossom import max_weight_matching
from .graph import MatchingGraph
from .paths import dijkstra_row, walk_back

__all__ = ["InfeasibleSyndrome", "DecodeResult", "Decoder", "min_weight_pairing", "exhaustive_min_weight"]


class InfeasibleSyndrome(ValueError):
    pass


@dataclass
class DecodeResult:
    prediction: np.ndarray | None
    matched: list[tuple[int, int]] = field(default_factory=list)
    weight: float = 0.0
    status: str = "accepted"
    abort: tuple[int, float] | None = None

    def __post_init__(self):
        if self.status not in ("accepted", "aborted"):
            raise ValueError(f"bad status {self.status!r}")
        if self.status == "aborted" and self.prediction is not None:
            raise ValueError("aborted results carry no prediction")


def min_weight_pairing(D: np.ndarray, b: np.ndarray) -> tuple[list[tuple[int, int]], float]:
    """Exact minimum-weight matching of ``k`` events with boundary option.

    ``D`` is the (k, k) event distance matrix and ``b`` the boundary
    distances; infinite entries are forbidden.  Returns pairs ``(i, j)`` with
    ``j == -1`` meaning "matched to the boundary", and the total weight.

    The boundary takes any number of events, so a pair with
    ``D[i, j] >= b[i] + b[j]`` is never better than sending both to the
    boundary.  Components of the remaining "useful pair" graph are therefore
    independent and are solved one at a time.
    """
    D = np.asarray(D, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    k = len(b)
    if k == 0:
        return [], 0.0
    useful = D < b[:, None] + b[None, :]
    np.fill_diagonal(useful, False)
    pairs: list[tuple[int, int]] = []
    total = 0.0
    for idx in _components(useful):
        sub, w = _pair_component(D[np.ix_(idx, idx)], b[idx])
        total += w
        pairs += [(int(idx[i]), -1 if j < 0 else int(idx[j])) for i, j in sub]
    return sorted(pairs), float(total)


def _components(adj: np.ndarray) -> list[np.ndarray]:
    seen = np.zeros(len(adj), dtype=bool)
    out = []
    for s in range(len(adj)):
        if seen[s]:
            continue
        seen[s] = True
        front = [s]
        comp = [s]
        while front:
            nxt = np.nonzero(adj[front].any(axis=0) & ~seen)[0]
            seen[nxt] = True
            front = nxt.tolist()
            comp += front
        out.append(np.array(sorted(comp)))
    return out


def _pair_component(direct: np.ndarray, b: np.ndarray) -> tuple[list[tuple[int, int]], float]:
    k = len(b)
    if k == 1:
        if not np.isfinite(b[0]):
            raise InfeasibleSyndrome("a lone detection event cannot reach the boundary")
        return [(0, -1)], float(b[0])
    via = b[:, None] + b[None, :]
    if k == 2:
        if direct[0, 1] <= via[0, 1]:
            return [(0, 1)], float(direct[0, 1])
        if np.isfinite(via[0, 1]):
            return [(0, -1), (1, -1)], float(via[0, 1])
        raise InfeasibleSyndrome("two detection events with no connecting path")
    cost = np.minimum(direct, via)
    iu, ju = np.triu_indices(k, 1)
    ok = np.isfinite(cost[iu, ju])
    ei, ej, c = iu[ok], ju[ok], cost[iu, ju][ok]
    if k % 2:
        fb = np.nonzero(np.isfinite(b))[0]
        ei = np.concatenate([ei, fb])
        ej = np.concatenate([ej, np.full(len(fb), k)])
        c = np.concatenate([c, b[fb]])
    # max-weight max-cardinality matching on (big - cost) is min-cost perfect matching
    big = 1.0 + 2.0 * float(c.sum())
    nv = k + (k % 2)
    mate = max_weight_matching(nv, ei, ej, big - c, maxcardinality=True)
    if np.any(mate < 0):
        raise InfeasibleSyndrome(f"no perfect matching for {k} detection events")
    pairs: list[tuple[int, int]] = []
    total = 0.0
    for u in range(k):
        v = int(mate[u])
        if v < u:
            continue
        if v == k:
            pairs.append((u, -1))
            total += b[u]
        elif direct[u, v] <= via[u, v]:
            pairs.append((u, v))
            total += direct[u, v]
        else:
            pairs += [(u, -1), (v, -1)]
            total += via[u, v]
    return pairs, float(total)


def exhaustive_min_weight(D: np.ndarray, b: np.ndarray) -> float:
    """Minimum over all matchings (pairs or boundary) by direct recursion; oracle only."""
    k = len(b)
    D = np.asarray(D, dtype=np.float64)

    @lru_cache(maxsize=None)
    def best(mask: int) -> float:
        if mask == 0:
            return 0.0
        i = (mask & -mask).bit_length() - 1
        rest = mask & ~(1 << i)
        out = b[i] + best(rest)
        r = rest
        while r:
            j = (r & -r).bit_length() - 1
            r &= r - 1
            out = min(out, D[i, j] + best(rest & ~(1 << j)))
        return out

    return float(best((1 << k) - 1))


class Decoder:
    """Matching decoder over a :class:`MatchingGraph`.

    Static-weight decoding caches full single-source distance rows per
    node.  With per-shot weights one search from the boundary gives every
    boundary distance, then each event searches only as far as the later
    events it could usefully pair with (a pair farther apart than
    ``b(u) + max b`` never beats sending both to the boundary).

    Paths are recovered by walking from an endpoint toward the other one,
    taking the lowest edge id that stays on a shortest path at every step:
    from the later event of a pair, and from the event for boundary matches.
    """

    def __init__(self, graph: MatchingGraph, tol: float = 1e-9):
        self.graph = graph
        self.tol = tol
        self._csr = (graph.adj_indptr, graph.adj_nbr, graph.adj_eid)
        self._cache: dict[int, np.ndarray] = {}

    def _static_row(self, u: int) -> np.ndarray:
        row = self._cache.get(u)
        if row is None:
            row = self._cache[u] = dijkstra_row(*self._csr, self.graph.base_weights, u)
        return row

    def _rows(self, ev: list[int], weights: np.ndarray | None):
        B = self.graph.boundary
        if weights is None:
            return [self._static_row(u) for u in ev], self._static_row(B), self.graph.base_weights
        rb = dijkstra_row(*self._csr, weights, B, ev)
        b = rb[ev]
        fin = b[np.isfinite(b)]
        bmax = fin.max() if len(fin) else np.inf
        rows = []
        for i, u in enumerate(ev):
            later = ev[i + 1 :]
            radius = b[i] + bmax
            radius = radius * (1 + 4 * self.tol) if np.isfinite(radius) else np.inf
            rows.append(dijkstra_row(*self._csr, weights, u, later, radius) if later else None)
        return rows, rb, weights

    def decode(self, events, weights: np.ndarray | None = None) -> DecodeResult:
        ev = sorted({int(e) for e in np.asarray(events).ravel()})
        nobs = self.graph.num_observables
        if not ev:
            return DecodeResult(np.zeros(nobs, dtype=np.uint8), [], 0.0)
        B = self.graph.boundary
        rows, rb, w = self._rows(ev, weights)
        k = len(ev)
        D = np.full((k, k), np.inf)
        for i in range(k - 1):
            D[i, i + 1 :] = rows[i][ev[i + 1 :]]
        D = np.minimum(D, D.T)
        b = rb[ev]
        pairs, total = min_weight_pairing(D, b)
        masks = self.graph.obs_masks
        mask = 0
        matched = []
        for i, j in pairs:
            if j < 0:
                mask ^= walk_back(*self._csr, masks, w, rb, ev[i], B, self.tol)
                matched.append((ev[i], B))
            else:
                mask ^= walk_back(*self._csr, masks, w, rows[i], ev[j], ev[i], self.tol)
                matched.append((ev[i], ev[j]))
        pred = np.array([(mask >> o) & 1 for o in range(nobs)], dtype=np.uint8)
        return DecodeResult(pred, matched, total)
