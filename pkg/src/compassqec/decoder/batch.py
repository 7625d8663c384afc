"""Decoding whole shot batches: posteriors, post-selection, per-shot weights, reports."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from ..circuit import M, CircuitProgram
from ..gmm import GMMSet
from .bp import bp_marginals
from .graph import MatchingGraph
from .matching import Decoder
from .soft import SoftConfig, abort_scan, mechanism_rates

__all__ = ["DecodeReport", "decode_batch", "measurement_posteriors", "data_measurements"]


def data_measurements(program: CircuitProgram) -> np.ndarray:
    """Boolean mask of the final-layer (data readout) measurements."""
    mask = np.zeros(program.num_measurements, dtype=bool)
    for ins in program.layers[-1]:
        if ins.op == M:
            mask[ins.meas] = True
    return mask


def measurement_posteriors(program: CircuitProgram, gmms: GMMSet, iq: np.ndarray) -> np.ndarray:
    """(p0, p1, p2) for every shot and measurement, shape (shots, measurements, 3)."""
    iq = np.asarray(iq, dtype=np.float64)
    n, nm, _ = iq.shape
    out = np.empty((n, nm, 3))
    groups: dict[tuple[int, str], list[int]] = {}
    for ins in program.measurements():
        groups.setdefault((ins.qubits[0], ins.pulse), []).append(ins.meas)
    for key, idx in groups.items():
        g = gmms[key]
        out[:, idx, :] = g.posterior(iq[:, idx, :].reshape(-1, 2)).reshape(n, len(idx), 3)
    return out


@dataclass
class DecodeReport:
    variant: str
    cutoff: float | None
    aborted: np.ndarray  # (n,) bool
    abort_meas: np.ndarray  # (n,) int, -1 if accepted
    abort_p2: np.ndarray  # (n,) float, nan if accepted
    predicted: np.ndarray  # (n, nobs) uint8; rows of aborted shots are zero and meaningless
    true: np.ndarray | None  # (n, nobs) uint8
    weight: np.ndarray  # (n,) float
    flagged: np.ndarray  # (n,) bool: some targeted measurement had p0 + p1 == 0
    meta: dict = field(default_factory=dict)

    @property
    def shots(self) -> int:
        return len(self.aborted)

    @property
    def accepted(self) -> int:
        return int((~self.aborted).sum())

    @property
    def failures(self) -> int:
        if self.true is None:
            raise ValueError("no true observable flips recorded")
        wrong = (self.predicted != self.true).any(axis=1)
        return int((wrong & ~self.aborted).sum())

    @property
    def logical_error_rate(self) -> float:
        """Failures over accepted shots (nan when nothing was accepted)."""
        return self.failures / self.accepted if self.accepted else float("nan")

    def to_csv(self, header: dict | None = None) -> str:
        buf = io.StringIO()
        for k, v in (header or {}).items():
            buf.write(f"# {k}: {v}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["shot", "status", "abort_measurement", "abort_p2", "predicted", "true", "weight", "flagged"])
        for i in range(self.shots):
            ab = bool(self.aborted[i])
            w.writerow([
                i,
                "aborted" if ab else "accepted",
                int(self.abort_meas[i]) if ab else "",
                f"{self.abort_p2[i]:.6g}" if ab else "",
                "" if ab else "".join(map(str, self.predicted[i])),
                "" if self.true is None else "".join(map(str, self.true[i])),
                "" if ab else f"{self.weight[i]:.10g}",
                int(self.flagged[i]),
            ])
        return buf.getvalue()


def decode_batch(
    graph: MatchingGraph,
    events: np.ndarray,
    true_obs: np.ndarray | None = None,
    *,
    config: SoftConfig = SoftConfig(),
    posteriors: np.ndarray | None = None,
    data_mask: np.ndarray | None = None,
    bp_iters: int | None = None,
    decoder: Decoder | None = None,
    chunk: int = 2048,
) -> DecodeReport:
    """Decode every shot; static weights for ``hard`` without BP, otherwise
    per-shot weights from the soft rates (and BP posteriors if requested)."""
    events = np.asarray(events, dtype=np.uint8)
    n = len(events)
    nobs = graph.num_observables
    dec = decoder or Decoder(graph)
    needs_post = config.variant != "hard" or config.cutoff is not None
    if needs_post and posteriors is None:
        raise ValueError(f"{config.name} needs per-measurement posteriors")
    if bp_iters is not None and bp_iters < 1:
        raise ValueError("bp_iters must be >= 1")
    aborted = np.zeros(n, dtype=bool)
    first = np.full(n, -1, dtype=np.int64)
    p2 = np.full(n, np.nan)
    if config.cutoff is not None:
        aborted, first, p2 = abort_scan(posteriors, config.cutoff)
    pred = np.zeros((n, nobs), dtype=np.uint8)
    weight = np.zeros(n)
    flagged = np.zeros(n, dtype=bool)
    static = config.variant == "hard" and bp_iters is None
    cache: dict[bytes, tuple[np.ndarray, float]] = {}
    todo = np.nonzero(~aborted)[0]
    for lo in range(0, len(todo), chunk):
        idx = todo[lo : lo + chunk]
        rates = None
        if not static:
            if config.variant == "hard":
                rates = np.repeat(graph.table.p[None], len(idx), axis=0)
            else:
                rates, fl = mechanism_rates(graph.table, posteriors[idx], config, data_mask)
                flagged[idx] = fl
        for r, i in enumerate(idx):
            ev = np.nonzero(events[i])[0]
            if static:
                key = ev.tobytes()
                hit = cache.get(key)
                if hit is None:
                    res = dec.decode(ev)
                    hit = cache[key] = (res.prediction, res.weight)
                pred[i], weight[i] = hit
                continue
            mp = rates[r]
            if bp_iters is not None:
                mp = np.minimum(bp_marginals(graph.checks, mp, events[i], bp_iters).posteriors, 0.5)
            res = dec.decode(ev, graph.weights(mp))
            pred[i], weight[i] = res.prediction, res.weight
    true = None if true_obs is None else np.asarray(true_obs, dtype=np.uint8).reshape(n, nobs)
    meta = {"bp_iters": bp_iters}
    return DecodeReport(config.variant, config.cutoff, aborted, first, p2, pred, true, weight, flagged, meta)
