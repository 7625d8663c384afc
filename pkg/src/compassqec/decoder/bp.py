"""Syndrome-conditioned belief propagation over the DEM factor graph.

Variables are mechanisms (prior ``p_j``), factors are detectors (parity of
incident mechanisms must equal the observed event bit).  Sum-product in the
log-likelihood-ratio domain; check updates use the tanh rule with products
taken as sums of logs so that leave-one-out products need no division.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from ..detectors import DetectorErrorModel

__all__ = ["BPResult", "bp_marginals", "bp_reweight", "incidence"]

_PMIN = 1e-300
_TMAX = 1.0 - 1e-16


@dataclass
class BPResult:
    posteriors: np.ndarray  # P(mechanism fired | syndrome)
    iterations: int
    converged: bool

    def capped(self) -> np.ndarray:
        """Posteriors limited to 1/2, usable as matching priors."""
        return np.minimum(self.posteriors, 0.5)


def incidence(dem: DetectorErrorModel) -> sp.csr_matrix:
    """Detector-by-mechanism 0/1 matrix."""
    rows, cols = [], []
    for j, m in enumerate(dem.mechanisms):
        rows += list(m.detectors)
        cols += [j] * len(m.detectors)
    return sp.csr_matrix(
        (np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(dem.num_detectors, len(dem.mechanisms))
    )


def bp_marginals(H: sp.spmatrix, priors, syndrome, iterations: int, tol: float = 1e-12) -> BPResult:
    if iterations < 1:
        raise ValueError(f"iterations must be >= 1, got {iterations}")
    H = sp.coo_matrix(H)
    r, c = H.row.astype(np.int64), H.col.astype(np.int64)
    nd, M = H.shape
    p = np.asarray(priors, dtype=np.float64)
    s = np.asarray(syndrome, dtype=np.int64).ravel()
    if len(p) != M or len(s) != nd:
        raise ValueError("priors / syndrome do not match the check matrix")
    zero = p <= 0
    pc = np.clip(p, _PMIN, 0.5)
    lam = np.log1p(-pc) - np.log(pc)
    q = lam[c]
    L = lam.copy()
    converged = False
    it = 0
    for it in range(1, iterations + 1):
        t = np.tanh(q / 2)
        neg = t < 0
        la = np.log(np.clip(np.abs(t), _PMIN, None))
        rowsum = np.bincount(r, la, minlength=nd)
        parity = np.bincount(r, neg, minlength=nd).astype(np.int64) & 1
        mag = np.minimum(np.exp(rowsum[r] - la), _TMAX)
        sign = 1 - 2 * ((s[r] + parity[r] + neg) & 1)
        m = sign * 2 * np.arctanh(mag)
        newL = lam + np.bincount(c, m, minlength=M)
        q = newL[c] - m
        delta = np.max(np.abs(newL - L)) if M else 0.0
        L = newL
        if delta < tol:
            converged = True
            break
    post = expit(-L)
    post[zero] = 0.0
    return BPResult(post, it, converged)


def bp_reweight(dem: DetectorErrorModel, events, iterations: int, *, H: sp.spmatrix | None = None) -> BPResult:
    """Posterior mechanism probabilities given the detection events."""
    syn = np.zeros(dem.num_detectors, dtype=np.int64)
    syn[np.asarray(events, dtype=np.int64)] = 1
    return bp_marginals(incidence(dem) if H is None else H, [m.p for m in dem.mechanisms], syn, iterations)
