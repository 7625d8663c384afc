"""Exact maximum-likelihood decoding for small detector error models.

The joint distribution of (syndrome, observable flips) is built by
convolving one mechanism at a time over the reachable states, which visits
at most ``2^m`` states for ``m`` mechanisms.  A direct enumeration of all
error patterns is kept as an independent cross-check.
"""

from __future__ import annotations

import itertools

import numpy as np

from ..detectors import DetectorErrorModel

__all__ = [
    "MAX_MECHANISMS",
    "TooManyMechanisms",
    "JointTable",
    "joint_table",
    "joint_table_enumerated",
    "ml_oracle",
    "failure_rate",
]

MAX_MECHANISMS = 24
TIE_RTOL = 1e-12


class TooManyMechanisms(ValueError):
    pass


def _masks(dem: DetectorErrorModel) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    dm = np.zeros(len(dem.mechanisms), dtype=np.int64)
    om = np.zeros(len(dem.mechanisms), dtype=np.int64)
    for j, m in enumerate(dem.mechanisms):
        for d in m.detectors:
            dm[j] ^= 1 << d
        for o in m.observables:
            om[j] ^= 1 << o
    return dm, om, np.array([m.p for m in dem.mechanisms], dtype=np.float64)


def _check(dem: DetectorErrorModel, limit: int):
    if len(dem.mechanisms) > limit:
        raise TooManyMechanisms(f"{len(dem.mechanisms)} mechanisms exceeds the limit of {limit}")
    if dem.num_detectors + dem.num_observables > 62:
        raise TooManyMechanisms("too many detectors and observables for 64-bit state keys")


class JointTable:
    """P(syndrome, observable mask) over reachable syndromes.

    ``syndromes`` holds detector bit masks (bit ``i`` = detector ``i``);
    ``probs[k, L]`` is the probability of syndrome ``k`` with observable mask
    ``L``.
    """

    def __init__(self, syndromes: np.ndarray, probs: np.ndarray, num_detectors: int, num_observables: int):
        self.syndromes = syndromes
        self.probs = probs
        self.num_detectors = num_detectors
        self.num_observables = num_observables
        self._row = {int(s): k for k, s in enumerate(syndromes)}

    def row(self, events) -> np.ndarray:
        key = 0
        for e in np.asarray(events, dtype=np.int64).ravel():
            key ^= 1 << int(e)
        k = self._row.get(key)
        return np.zeros(1 << self.num_observables) if k is None else self.probs[k]

    def best_mask(self, row: np.ndarray) -> int:
        """Most likely observable mask; near-ties go to the lexicographically
        smaller bit tuple (observable 0 compared first)."""
        top = row.max()
        cands = [L for L in range(len(row)) if row[L] >= top * (1 - TIE_RTOL)]
        return min(cands, key=lambda L: tuple((L >> o) & 1 for o in range(self.num_observables)))


def joint_table(dem: DetectorErrorModel, max_mechanisms: int = MAX_MECHANISMS) -> JointTable:
    _check(dem, max_mechanisms)
    nd, no = dem.num_detectors, dem.num_observables
    dm, om, p = _masks(dem)
    keys = np.zeros(1, dtype=np.int64)
    prob = np.ones(1)
    for f, q in zip(dm | (om << nd), p):
        k2 = np.concatenate([keys, keys ^ f])
        p2 = np.concatenate([prob * (1 - q), prob * q])
        keys, inv = np.unique(k2, return_inverse=True)
        prob = np.bincount(inv.ravel(), p2, minlength=len(keys))
    syn = keys & ((1 << nd) - 1)
    obs = keys >> nd
    us, row = np.unique(syn, return_inverse=True)
    table = np.zeros((len(us), 1 << no))
    np.add.at(table, (row.ravel(), obs), prob)
    return JointTable(us, table, nd, no)


def joint_table_enumerated(dem: DetectorErrorModel, max_mechanisms: int = 16) -> JointTable:
    """Same table by summing every one of the 2^m error patterns explicitly."""
    _check(dem, max_mechanisms)
    nd, no = dem.num_detectors, dem.num_observables
    dm, om, p = _masks(dem)
    acc: dict[int, np.ndarray] = {}
    for pattern in itertools.product((0, 1), repeat=len(p)):
        s = o = 0
        pr = 1.0
        for j, bit in enumerate(pattern):
            if bit:
                s ^= int(dm[j])
                o ^= int(om[j])
                pr *= p[j]
            else:
                pr *= 1 - p[j]
        acc.setdefault(s, np.zeros(1 << no))[o] += pr
    us = np.array(sorted(acc), dtype=np.int64)
    return JointTable(us, np.array([acc[int(s)] for s in us]).reshape(len(us), 1 << no), nd, no)


def ml_oracle(dem: DetectorErrorModel, events, table: JointTable | None = None) -> np.ndarray:
    """Most likely observable flip vector for the given detection events."""
    t = joint_table(dem) if table is None else table
    L = t.best_mask(t.row(events))
    return np.array([(L >> o) & 1 for o in range(t.num_observables)], dtype=np.uint8)


def failure_rate(table: JointTable, predict) -> float:
    """Exact logical failure probability of ``predict(events) -> flips``,
    summing over every reachable syndrome."""
    total = 0.0
    for k, s in enumerate(table.syndromes):
        events = [i for i in range(table.num_detectors) if (int(s) >> i) & 1]
        pred = np.asarray(predict(events), dtype=np.int64)
        L = int(sum(int(b) << o for o, b in enumerate(pred)))
        row = table.probs[k]
        total += row.sum() - row[L]
    return float(total)
