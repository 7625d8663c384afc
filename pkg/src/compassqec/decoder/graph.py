"""Matching graph built from an edge-decomposed detector error model.

Every DEM mechanism contributes its probability to each edge of its
decomposition.  Edge probabilities combine as independent flips,
``1 - 2 p_edge = prod(1 - 2 p_i)``, which is evaluated as a sparse
matrix-vector product in log space so that per-shot mechanism rates can be
turned into edge weights cheaply.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..detectors import DetectorErrorModel, Mechanism, decompose_edges, merge_prob

__all__ = ["MatchingGraph", "MechanismTable", "edge_weight"]


def edge_weight(p):
    """ln((1 - p) / p); 0 at p = 1/2 and +inf at p = 0."""
    p = np.asarray(p, dtype=np.float64)
    with np.errstate(divide="ignore"):
        return np.log1p(-p) - np.log(p)


@dataclass
class MechanismTable:
    """Flat view of the mechanisms feeding a graph.

    ``kind`` is "" for circuit noise or one of "classical", "pre", "post" for
    mechanisms attached to measurement ``meas``.
    """

    p: np.ndarray
    kind: list[str]
    meas: np.ndarray  # -1 when not measurement-attached
    source: list[str]

    def __len__(self):
        return len(self.p)

    def index(self, kind: str) -> dict[int, int]:
        """measurement index -> mechanism row for one kind."""
        return {int(m): j for j, (k, m) in enumerate(zip(self.kind, self.meas)) if k == kind}


class MatchingGraph:
    def __init__(self, num_detectors: int, edges: np.ndarray, obs_masks: np.ndarray,
                 contrib: sp.csr_matrix, table: MechanismTable, num_observables: int,
                 checks: sp.csr_matrix | None = None):
        self.num_detectors = num_detectors
        self.boundary = num_detectors
        self.num_nodes = num_detectors + 1
        self.edges = edges  # (E, 2), u < v, boundary = num_detectors
        self.obs_masks = obs_masks  # (E,) int64 bit masks
        self.contrib = contrib  # (E, mechanisms)
        self.table = table
        self.num_observables = num_observables
        self.checks = checks  # (detectors, mechanisms) incidence, for belief propagation
        self.edge_id = {(int(u), int(v)): k for k, (u, v) in enumerate(edges)}
        n = self.num_nodes
        ne = len(edges)
        rows = np.concatenate([edges[:, 0], edges[:, 1]])
        cols = np.concatenate([edges[:, 1], edges[:, 0]])
        eids = np.concatenate([np.arange(ne), np.arange(ne)])
        # per-node neighbour lists in edge-id order: path recovery depends on it
        order = np.lexsort((eids, rows))
        self.adj_indptr = np.searchsorted(rows[order], np.arange(n + 1)).astype(np.int64)
        self.adj_nbr = cols[order].astype(np.int64)
        self.adj_eid = eids[order].astype(np.int64)
        self.base_weights = self.weights()

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def edge_probs(self, mech_p: np.ndarray | None = None) -> np.ndarray:
        p = self.table.p if mech_p is None else np.asarray(mech_p, dtype=np.float64)
        p = np.clip(p, 0.0, 0.5)
        with np.errstate(divide="ignore"):
            lg = np.log1p(-2 * p)
        if np.isneginf(lg).any():
            # any contributor at exactly 1/2 makes the edge a coin flip
            half = np.asarray(self.contrib[:, np.isneginf(lg)].sum(axis=1)).ravel() > 0
            lg = np.where(np.isneginf(lg), 0.0, lg)
            out = -0.5 * np.expm1(self.contrib @ lg)
            out[half] = 0.5
            return out
        return -0.5 * np.expm1(self.contrib @ lg)

    def weights(self, mech_p: np.ndarray | None = None) -> np.ndarray:
        return edge_weight(self.edge_probs(mech_p))

    def csgraph(self, weights: np.ndarray) -> sp.csr_matrix:
        data = np.asarray(weights, dtype=np.float64)[self.adj_eid]
        return sp.csr_matrix((data, self.adj_nbr, self.adj_indptr), shape=(self.num_nodes, self.num_nodes))

    @classmethod
    def from_dem(cls, dem: DetectorErrorModel, *, readout_slots: bool = True, strict: bool = False) -> "MatchingGraph":
        """Build the graph; ``readout_slots`` adds a zero-rate classical
        mechanism for every measurement lacking one, so per-shot soft rates
        always have an edge to act on."""
        mechs = list(dem.mechanisms)
        if readout_slots:
            mechs += _readout_slots(dem)
        ddem = decompose_edges(
            DetectorErrorModel(mechs, dem.detectors, dem.num_observables, dem.dropped, list(dem.observables)),
            strict=strict,
        )
        nd = dem.num_detectors
        B = nd
        keys: dict[tuple[int, int], int] = {}
        mask_p: list[dict[int, float]] = []
        r, c = [], []
        kinds, meas, srcs, ps = [], [], [], []
        for j, m in enumerate(ddem.mechanisms):
            parts = m.decomposition if m.decomposition is not None else ((m.detectors, m.observables),)
            for dets, obs in parts:
                if not dets:
                    continue
                key = (dets[0], dets[1]) if len(dets) == 2 else (dets[0], B)
                key = (min(key), max(key))
                e = keys.get(key)
                if e is None:
                    e = keys[key] = len(keys)
                    mask_p.append({})
                mask = 0
                for o in obs:
                    mask ^= 1 << o
                mp = mask_p[e]
                mp[mask] = merge_prob(mp.get(mask, 0.0), m.p)
                r.append(e)
                c.append(j)
            mk = m.measurement
            kinds.append(mk[0] if mk else "")
            meas.append(mk[1] if mk else -1)
            srcs.append(m.source)
            ps.append(m.p)
        edges = np.array(sorted(keys, key=keys.get), dtype=np.int64).reshape(-1, 2)
        # re-number edges in sorted (u, v) order so edge ids are canonical
        order = np.lexsort((edges[:, 1], edges[:, 0]))
        remap = np.empty(len(order), dtype=np.int64)
        remap[order] = np.arange(len(order))
        edges = edges[order]
        masks = np.zeros(len(edges), dtype=np.int64)
        for e_old, mp in enumerate(mask_p):
            # parallel contributions with different observable masks: keep the likeliest
            best = max(sorted(mp), key=lambda k: mp[k])
            masks[remap[e_old]] = best
        contrib = sp.csr_matrix(
            (np.ones(len(r)), (remap[np.array(r, dtype=np.int64)], np.array(c, dtype=np.int64))),
            shape=(len(edges), len(ddem.mechanisms)),
        )
        table = MechanismTable(np.array(ps, dtype=np.float64), kinds, np.array(meas, dtype=np.int64), srcs)
        hr = [d for m in ddem.mechanisms for d in m.detectors]
        hc = [j for j, m in enumerate(ddem.mechanisms) for _ in m.detectors]
        checks = sp.csr_matrix((np.ones(len(hr), dtype=np.int8), (hr, hc)), shape=(nd, len(ddem.mechanisms)))
        return cls(nd, edges, masks, contrib, table, dem.num_observables, checks)


def _readout_slots(dem: DetectorErrorModel) -> list[Mechanism]:
    have = set()
    for m in dem.mechanisms:
        mk = m.measurement
        if mk and mk[0] == "classical":
            have.add(mk[1])
    touch: dict[int, tuple[list[int], list[int]]] = {}
    for d in dem.detectors:
        for m in d.measurements:
            touch.setdefault(m, ([], []))[0].append(d.id)
    for k, o in enumerate(dem.observables):
        for m in o:
            touch.setdefault(m, ([], []))[1].append(k)
    out = []
    for m in sorted(touch):
        if m in have:
            continue
        ds, os_ = touch[m]
        if ds:
            out.append(Mechanism(0.0, tuple(sorted(ds)), tuple(sorted(os_)), f"classical:M{m}"))
    return out
