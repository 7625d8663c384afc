"""Per-round logical error and abort rates from memory experiments.

The survival ``eta(T) = 1 - 2 p_L(T)`` of a memory with independent
per-round logical flips decays as ``(1 - 2 eps)^T``, so ``log eta`` is
linear in ``T`` with slope ``G`` and ``eps = (1 - e^G) / 2``.  Likewise
``log p_acc(T)`` has slope ``c`` and the per-round abort rate is
``1 - e^c``.  Confidence intervals come from a nonparametric bootstrap over
shots (resampling a point's shots with replacement is a multinomial draw
over its accepted-correct / accepted-wrong / aborted counts).
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

__all__ = [
    "FitError",
    "CurvePoint",
    "MemoryCurve",
    "FitResult",
    "TradeoffRow",
    "survival",
    "fit_logical",
    "fit_abort",
    "per_round",
    "per_round_sigma",
    "synthetic_curve",
    "sweep_cutoff",
    "improvement",
    "PointOutcomes",
    "CutoffSweep",
    "curves_to_csv",
    "tradeoff_to_csv",
]

HEADLINE_CUTOFF = 0.5


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class CurvePoint:
    T: int
    shots: float
    accepted: float
    failures: float

    def __post_init__(self):
        if not (0 <= self.failures <= self.accepted <= self.shots):
            raise ValueError(f"need failures <= accepted <= shots, got {self}")
        if self.shots <= 0:
            raise ValueError("a curve point needs at least one shot")


@dataclass
class MemoryCurve:
    """Counts per round number for one basis; ``states`` holds one list of
    points per prepared state (the two are averaged before fitting)."""

    basis: str
    states: dict[str, list[CurvePoint]] = field(default_factory=dict)

    def __post_init__(self):
        Ts = None
        for s, pts in self.states.items():
            t = [p.T for p in pts]
            if any(b <= a for a, b in zip(t, t[1:])):
                raise ValueError(f"T values must be strictly increasing (state {s})")
            if Ts is not None and t != Ts:
                raise ValueError("all prepared states need the same T grid")
            Ts = t

    @classmethod
    def single(cls, basis: str, points: list[CurvePoint], state: str = "0") -> "MemoryCurve":
        return cls(basis, {state: list(points)})

    @property
    def T(self) -> np.ndarray:
        pts = next(iter(self.states.values()))
        return np.array([p.T for p in pts], dtype=np.float64)

    def _counts(self) -> np.ndarray:
        """(states, points, 3): shots, accepted, failures."""
        return np.array([[[p.shots, p.accepted, p.failures] for p in pts] for pts in self.states.values()])

    @staticmethod
    def _rates(c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        with np.errstate(invalid="ignore", divide="ignore"):
            pl = np.where(c[..., 1] > 0, c[..., 2] / c[..., 1], np.nan)
            pacc = c[..., 1] / c[..., 0]
        return np.nanmean(pl, axis=0) if len(pl) else pl, pacc.mean(axis=0)

    @property
    def p_L(self) -> np.ndarray:
        return self._rates(self._counts())[0]

    @property
    def p_acc(self) -> np.ndarray:
        return self._rates(self._counts())[1]


def survival(p_L):
    """eta = 1 - 2 p_L."""
    p = np.asarray(p_L, dtype=np.float64)
    eta = 1 - 2 * p
    assert np.all((p != 0) | (eta == 1)) and np.all((p != 0.5) | (eta == 0))
    return eta


@dataclass
class FitResult:
    slope: float
    intercept: float
    rate: float
    ci: tuple[float, float] | None
    used: list[int]
    excluded: list[int]
    level: float = 0.95
    method: str = "ols"
    interval: str = "bootstrap-percentile"

    def to_dict(self) -> dict:
        return asdict(self)


def _line(T, y, w=None) -> tuple[float, float]:
    if w is None:
        G, b = np.polyfit(T, y, 1)
    else:
        # np.polyfit squares its weights, so pass sqrt(w) for weights w
        G, b = np.polyfit(T, y, 1, w=np.sqrt(w))
    return float(G), float(b)


def _logical_from(T, pl, acc, weighted):
    eta = survival(pl)
    ok = np.isfinite(eta) & (eta > 0)
    if ok.sum() < 2:
        return None
    G, b = _line(T[ok], np.log(eta[ok]), acc[ok] if weighted else None)
    return G, b, ok


def _abort_from(T, pacc, shots, weighted):
    ok = pacc > 0
    if ok.sum() < 2:
        return None
    c, b = _line(T[ok], np.log(pacc[ok]), shots[ok] if weighted else None)
    return c, b, ok


def _bootstrap(curve: MemoryCurve, stat, n: int, seed, level: float):
    c = curve._counts()
    if n <= 0 or not np.all(np.equal(np.mod(c, 1), 0)):
        return None  # expected (non-integer) counts have nothing to resample
    rng = np.random.default_rng(seed)
    shots = c[..., 0].astype(np.int64)
    probs = np.stack([c[..., 2], c[..., 1] - c[..., 2], c[..., 0] - c[..., 1]], axis=-1) / c[..., :1]
    out = []
    for _ in range(n):
        draw = np.empty_like(c)
        for s in range(c.shape[0]):
            for k in range(c.shape[1]):
                f, ok, ab = rng.multinomial(shots[s, k], probs[s, k])
                draw[s, k] = (shots[s, k], f + ok, f)
        v = stat(draw)
        if v is not None and np.isfinite(v):
            out.append(v)
    if not out:
        return None
    a = (1 - level) / 2
    lo, hi = np.quantile(out, [a, 1 - a])
    return float(lo), float(hi)


def fit_logical(
    curve: MemoryCurve, *, weighted: bool = False, bootstrap: int = 1000, seed=0, level: float = 0.95
) -> FitResult:
    """Per-round logical error rate from the slope of log(1 - 2 p_L) vs T."""
    T = curve.T
    c = curve._counts()
    pl, _ = MemoryCurve._rates(c)
    acc = c[..., 1].sum(axis=0)
    r = _logical_from(T, pl, acc, weighted)
    if r is None:
        raise FitError("fewer than two points with p_L < 1/2")
    G, b, ok = r

    def stat(draw):
        p, _ = MemoryCurve._rates(draw)
        rr = _logical_from(T, p, draw[..., 1].sum(axis=0), weighted)
        return None if rr is None else min(max((1 - math.exp(rr[0])) / 2, 0.0), 0.5)

    rate = min(max((1 - math.exp(G)) / 2, 0.0), 0.5)
    ci = _bootstrap(curve, stat, bootstrap, seed, level)
    return FitResult(
        G, b, rate, ci, [int(t) for t in T[ok]], [int(t) for t in T[~ok]], level,
        "weighted-ls" if weighted else "ols",
    )


def fit_abort(
    curve: MemoryCurve, *, weighted: bool = False, bootstrap: int = 1000, seed=0, level: float = 0.95
) -> FitResult:
    """Per-round abort rate from the slope of log p_acc vs T."""
    T = curve.T
    c = curve._counts()
    _, pacc = MemoryCurve._rates(c)
    shots = c[..., 0].sum(axis=0)
    r = _abort_from(T, pacc, shots, weighted)
    if r is None:
        raise FitError("fewer than two points with p_acc > 0")
    cs, b, ok = r

    def stat(draw):
        _, pa = MemoryCurve._rates(draw)
        rr = _abort_from(T, pa, draw[..., 0].sum(axis=0), weighted)
        return None if rr is None else min(max(1 - math.exp(rr[0]), 0.0), 1.0)

    rate = min(max(1 - math.exp(cs), 0.0), 1.0)
    ci = _bootstrap(curve, stat, bootstrap, seed, level)
    return FitResult(
        cs, b, rate, ci, [int(t) for t in T[ok]], [int(t) for t in T[~ok]], level,
        "weighted-ls" if weighted else "ols",
    )


def per_round(p_L: float, T: int) -> float:
    """Per-round rate from a single memory length: (1 - (1 - 2 p_L)^(1/T)) / 2."""
    if T < 1:
        raise ValueError("T must be >= 1")
    eta = 1 - 2 * p_L
    if eta <= 0:
        return 0.5
    return (1 - eta ** (1 / T)) / 2


def per_round_sigma(p_L: float, n: float, T: int) -> float:
    """Delta-method standard error of :func:`per_round` for a binomial p_L from n shots."""
    eta = 1 - 2 * p_L
    if eta <= 0 or n <= 0:
        return float("nan")
    sd = math.sqrt(max(p_L * (1 - p_L), 0.0) / n)
    return eta ** (1 / T - 1) / T * sd


def synthetic_curve(eps_L: float, eps_abort: float, Ts, shots: float = 1e6, basis: str = "Z") -> MemoryCurve:
    """Expected (non-integer) counts for exact per-round rates."""
    pts = []
    for T in Ts:
        acc = shots * (1 - eps_abort) ** T
        pl = (1 - (1 - 2 * eps_L) ** T) / 2
        pts.append(CurvePoint(int(T), shots, acc, acc * pl))
    return MemoryCurve.single(basis, pts)


@dataclass
class TradeoffRow:
    cutoff: float | None
    eps_L: float | None
    eps_abort: float | None
    eps_L_ci: tuple[float, float] | None = None
    eps_abort_ci: tuple[float, float] | None = None
    headline: bool = False
    defined: bool = True


@dataclass
class PointOutcomes:
    """Per-shot outcomes at one memory length: the largest leakage
    probability among the shot's measurements and whether decoding failed."""

    T: int
    score: np.ndarray
    wrong: np.ndarray

    def __post_init__(self):
        self.score = np.asarray(self.score, dtype=np.float64).ravel()
        self.wrong = np.asarray(self.wrong, dtype=bool).ravel()
        if self.score.shape != self.wrong.shape:
            raise ValueError("score and wrong need one entry per shot")
        if not len(self.score):
            raise ValueError("a point needs at least one shot")


@dataclass
class CutoffSweep:
    rows: list[TradeoffRow]  # no cutoff first, then cutoffs in decreasing order
    boot_eps_L: np.ndarray  # (resamples, rows), nan where a fit was impossible
    boot_eps_abort: np.ndarray

    def step_sigma(self, i: int, j: int) -> float:
        """Paired bootstrap spread of eps_L(row i) - eps_L(row j)."""
        d = self.boot_eps_L[:, i] - self.boot_eps_L[:, j]
        d = d[np.isfinite(d)]
        return float(np.std(d, ddof=1)) if len(d) > 1 else float("nan")

    def row(self, cutoff) -> int:
        for k, r in enumerate(self.rows):
            if r.cutoff is None or cutoff is None:
                if r.cutoff is cutoff:
                    return k
            elif abs(r.cutoff - cutoff) < 1e-12:
                return k
        raise KeyError(cutoff)


def _sweep_rates(cells: np.ndarray, T: np.ndarray):
    # cells[s, k, b, w]: shots whose score exceeds exactly b cutoffs; row r keeps bins < nb - r
    nb = cells.shape[2]
    shots = cells.sum(axis=(2, 3))
    eL = np.full(nb, np.nan)
    eA = np.full(nb, np.nan)
    for r in range(nb):
        keep = cells[:, :, : nb - r]
        acc = keep.sum(axis=(2, 3))
        if np.any(acc <= 0):
            continue
        pl = (keep[..., 1].sum(-1) / acc).mean(0)
        ra = _logical_from(T, pl, acc.sum(0), False)
        rb = _abort_from(T, (acc / shots).mean(0), shots.sum(0), False)
        if ra is not None:
            eL[r] = min(max((1 - math.exp(ra[0])) / 2, 0.0), 0.5)
        if rb is not None:
            eA[r] = min(max(1 - math.exp(rb[0]), 0.0), 1.0)
    return eL, eA


def sweep_cutoff(
    points: dict[str, list[PointOutcomes]], cutoffs, *, bootstrap: int = 1000, seed=0, level: float = 0.95
) -> CutoffSweep:
    """Per-round (eps_L, eps_abort) for every leakage cutoff plus a row
    without post-selection.  A shot is aborted at cutoff ``c`` when its
    score exceeds ``c``.  All rows share one bootstrap over shots, so
    differences between rows get paired error bars."""
    cuts = np.array(sorted({float(c) for c in cutoffs}))
    if np.any((cuts <= 0) | (cuts > 1)):
        raise ValueError("cutoffs must lie in (0, 1]")
    states = list(points)
    Ts = [p.T for p in points[states[0]]]
    if any([p.T for p in points[s]] != Ts for s in states):
        raise ValueError("all prepared states need the same T grid")
    if any(b <= a for a, b in zip(Ts, Ts[1:])):
        raise ValueError("T values must be strictly increasing")
    T = np.asarray(Ts, dtype=np.float64)
    nb = len(cuts) + 1
    cells = np.zeros((len(states), len(Ts), nb, 2), dtype=np.int64)
    for i, s in enumerate(states):
        for k, p in enumerate(points[s]):
            b = np.searchsorted(cuts, p.score, side="left")  # cutoffs strictly below the score
            np.add.at(cells[i, k], (b, p.wrong.astype(np.int64)), 1)
    eL, eA = _sweep_rates(cells, T)
    rng = np.random.default_rng(seed)
    flat = cells.reshape(len(states), len(Ts), -1)
    bl = np.full((bootstrap, nb), np.nan)
    ba = np.full((bootstrap, nb), np.nan)
    for t in range(bootstrap):
        draw = np.empty_like(flat)
        for i in range(flat.shape[0]):
            for k in range(flat.shape[1]):
                n = flat[i, k].sum()
                draw[i, k] = rng.multinomial(n, flat[i, k] / n)
        bl[t], ba[t] = _sweep_rates(draw.reshape(cells.shape), T)
    a = (1 - level) / 2

    def ci(v):
        v = v[np.isfinite(v)]
        return tuple(float(x) for x in np.quantile(v, [a, 1 - a])) if len(v) > 1 else None

    rows = []
    for r in range(nb):
        cut = None if r == 0 else float(cuts[nb - 1 - r])
        head = cut is not None and abs(cut - HEADLINE_CUTOFF) < 1e-12
        if not np.isfinite(eL[r]):
            rows.append(TradeoffRow(cut, None, None, headline=head, defined=False))
        else:
            rows.append(TradeoffRow(cut, float(eL[r]), float(eA[r]), ci(bl[:, r]), ci(ba[:, r]), head))
    return CutoffSweep(rows, bl, ba)


def improvement(baseline: float, value: float) -> float:
    """Relative decrease in percent."""
    if baseline <= 0:
        return float("nan")
    return 100.0 * (baseline - value) / baseline


def curves_to_csv(curves: dict[str, MemoryCurve], header: dict | None = None) -> str:
    buf = io.StringIO()
    for k, v in (header or {}).items():
        buf.write(f"# {k}: {v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["name", "basis", "state", "T", "shots", "accepted", "failures"])
    for name, cv in curves.items():
        for s, pts in cv.states.items():
            for p in pts:
                w.writerow([name, cv.basis, s, p.T, _num(p.shots), _num(p.accepted), _num(p.failures)])
    return buf.getvalue()


def tradeoff_to_csv(rows: list[TradeoffRow], header: dict | None = None) -> str:
    buf = io.StringIO()
    for k, v in (header or {}).items():
        buf.write(f"# {k}: {v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["cutoff", "eps_L", "eps_abort", "eps_L_lo", "eps_L_hi", "eps_abort_lo", "eps_abort_hi", "headline", "defined"])
    for r in rows:
        lc = r.eps_L_ci or ("", "")
        ac = r.eps_abort_ci or ("", "")
        w.writerow([
            "none" if r.cutoff is None else r.cutoff, _fmt(r.eps_L), _fmt(r.eps_abort),
            *map(_fmt, lc), *map(_fmt, ac), int(r.headline), int(r.defined),
        ])
    return buf.getvalue()


def _num(x):
    return int(x) if float(x).is_integer() else repr(float(x))


def _fmt(x):
    return "" if x is None or x == "" else f"{x:.8g}"


def summary_json(obj) -> str:
    def default(o):
        if isinstance(o, np.generic):
            return o.item()
        if isinstance(o, np.ndarray):
            return o.tolist()
        raise TypeError(type(o))

    return json.dumps(obj, indent=1, sort_keys=True, default=default)
