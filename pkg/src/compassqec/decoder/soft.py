"""Per-shot soft reweighting of measurement mechanisms and leakage post-selection."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..detectors import DetectorErrorModel
from .graph import MatchingGraph, MechanismTable, _readout_slots

__all__ = [
    "VARIANTS",
    "SoftConfig",
    "soft_rate",
    "mechanism_rates",
    "reweight_shot",
    "postselect",
    "abort_scan",
]

VARIANTS = ("hard", "soft", "soft-LM", "soft-synd", "soft-data", "soft-pre", "soft-post")


@dataclass(frozen=True)
class SoftConfig:
    variant: str = "hard"
    cutoff: float | None = None  # leakage post-selection threshold on p2; None disables

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        if self.cutoff is not None and not (0 < self.cutoff <= 1):
            raise ValueError(f"cutoff must lie in (0, 1], got {self.cutoff}")

    @property
    def name(self) -> str:
        return self.variant + ("" if self.cutoff is None else f"+ps{self.cutoff:g}")


def soft_rate(post: np.ndarray, rule: str = "soft") -> tuple[np.ndarray, np.ndarray]:
    """Shot-dependent flip rate from (p0, p1, p2) and a flag for p0 + p1 == 0.

    ``soft``: min(p0, p1) / (p0 + p1), set to 1/2 when p0 + p1 == 0.
    ``LM``: min(p0, p1) + p2 / 2.
    """
    post = np.asarray(post, dtype=np.float64)
    p0, p1, p2 = post[..., 0], post[..., 1], post[..., 2]
    lo = np.minimum(p0, p1)
    tot = p0 + p1
    dead = tot == 0
    if rule == "LM":
        return np.minimum(lo + p2 / 2, 0.5), dead
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(dead, 0.5, lo / np.where(dead, 1.0, tot))
    return r, dead


def _targets(variant: str, nm: int, data_mask: np.ndarray | None) -> np.ndarray:
    if variant in ("soft-synd", "soft-data"):
        if data_mask is None:
            raise ValueError(f"variant {variant} needs to know which measurements are final data readouts")
        dm = np.asarray(data_mask, dtype=bool)
        return dm if variant == "soft-data" else ~dm
    return np.ones(nm, dtype=bool)


def mechanism_rates(
    table: MechanismTable,
    posteriors: np.ndarray,
    config: SoftConfig,
    data_mask: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-shot mechanism probabilities, shape (shots, mechanisms), and a
    per-shot flag for fully ambiguous (p0 + p1 == 0) targeted measurements."""
    post = np.asarray(posteriors, dtype=np.float64)
    single = post.ndim == 2
    if single:
        post = post[None]
    n, nm, _ = post.shape
    out = np.repeat(table.p[None, :], n, axis=0)
    flagged = np.zeros(n, dtype=bool)
    v = config.variant
    if v == "hard":
        return (out[0], flagged[0]) if single else (out, flagged)
    rate, dead = soft_rate(post, "LM" if v == "soft-LM" else "soft")
    tgt = _targets(v, nm, data_mask)
    flagged = (dead & tgt[None, :]).any(axis=1)
    cls = table.index("classical")
    pre = table.index("pre")
    postm = table.index("post")
    ms = np.array([m for m in sorted(cls) if m < nm and tgt[m]], dtype=np.int64)
    if len(ms):
        rows = np.array([cls[m] for m in ms])
        new = rate[:, ms]
        if v == "soft-pre":
            c = table.p[rows]
            pr = np.array([table.p[pre[m]] if m in pre else 0.0 for m in ms])
            tot = c + pr
            share = np.where(tot > 0, c / np.where(tot > 0, tot, 1.0), 1.0)
            out[:, rows] = new * share[None, :]
            has = np.array([m in pre for m in ms])
            if has.any():
                prow = np.array([pre[m] for m in ms[has]])
                out[:, prow] = new[:, has] * (1 - share[has])[None, :]
        else:
            out[:, rows] = new
    if v == "soft-post":
        mp = np.array([m for m in sorted(postm) if m < nm and tgt[m]], dtype=np.int64)
        if len(mp):
            rows = np.array([postm[m] for m in mp])
            base = table.p[rows]
            p0, p1 = post[:, mp, 0], post[:, mp, 1]
            tot = p0 + p1
            with np.errstate(invalid="ignore", divide="ignore"):
                upd = np.where(tot > 0, 2 * p1 * base[None, :] / np.where(tot > 0, tot, 1.0), base[None, :])
            out[:, rows] = np.minimum(upd, 0.5)
    out = np.clip(out, 0.0, 0.5)
    return (out[0], flagged[0]) if single else (out, flagged)


def reweight_shot(
    dem: DetectorErrorModel,
    posteriors: np.ndarray,
    config: SoftConfig,
    data_mask: np.ndarray | None = None,
) -> DetectorErrorModel:
    """Shot-specific DEM: only measurement-attached mechanisms change."""
    mechs = list(dem.mechanisms) + _readout_slots(dem)
    kinds, meas = [], []
    for m in mechs:
        mk = m.measurement
        kinds.append(mk[0] if mk else "")
        meas.append(mk[1] if mk else -1)
    table = MechanismTable(np.array([m.p for m in mechs]), kinds, np.array(meas), [m.source for m in mechs])
    p, _ = mechanism_rates(table, posteriors, config, data_mask)
    out = [replace(m, p=float(q)) for m, q in zip(mechs, p) if q > 0]
    return DetectorErrorModel(out, dem.detectors, dem.num_observables, dem.dropped, list(dem.observables))


def postselect(posteriors: np.ndarray, cutoff: float) -> tuple[bool, int | None, float | None]:
    """(accepted, first offending measurement, its p2) for one shot."""
    if not (0 < cutoff <= 1):
        raise ValueError(f"cutoff must lie in (0, 1], got {cutoff}")
    p2 = np.asarray(posteriors, dtype=np.float64)[:, 2]
    bad = np.nonzero(p2 > cutoff)[0]
    if len(bad):
        return False, int(bad[0]), float(p2[bad[0]])
    return True, None, None


def abort_scan(posteriors: np.ndarray, cutoff: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised :func:`postselect` over shots: (aborted, first measurement or -1, p2 there)."""
    if not (0 < cutoff <= 1):
        raise ValueError(f"cutoff must lie in (0, 1], got {cutoff}")
    p2 = np.asarray(posteriors)[..., 2]
    bad = p2 > cutoff
    aborted = bad.any(axis=1)
    first = np.where(aborted, bad.argmax(axis=1), -1)
    val = np.where(aborted, p2[np.arange(len(p2)), np.maximum(first, 0)], np.nan)
    return aborted, first, val


def graph_rates(graph: MatchingGraph, posteriors, config: SoftConfig, data_mask=None):
    return mechanism_rates(graph.table, posteriors, config, data_mask)
