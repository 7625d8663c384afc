"""Three-component diagonal Gaussian mixtures for IQ readout data.

Component 0, 1 and 2 describe the |0>, |1> and |2> blobs of one qubit for
one pulse class.  Densities are evaluated in log space throughout, so very
well separated blobs never underflow.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

__all__ = [
    "GaussianMixture",
    "GMMSet",
    "FitError",
    "ReweightError",
    "fit",
    "reweight",
    "posterior",
    "synthetic_truth",
    "assignment_error",
]

LOG2PI = math.log(2 * math.pi)


class FitError(ValueError):
    pass


class ReweightError(RuntimeError):
    pass


@dataclass(frozen=True)
class GaussianMixture:
    weights: np.ndarray  # (3,)
    means: np.ndarray  # (3, 2)
    variances: np.ndarray  # (3, 2)
    qubit: int | None = None
    pulse: str | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64).reshape(3)
        mu = np.asarray(self.means, dtype=np.float64).reshape(3, 2)
        var = np.asarray(self.variances, dtype=np.float64).reshape(3, 2)
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"mixture weights must be non-negative and sum to 1, got {w}")
        if np.any(~(var > 0)):
            raise ValueError("variances must be positive")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "variances", var)

    def component_logpdf(self, iq: np.ndarray) -> np.ndarray:
        """log N_i(x) for every point and component, shape (n, 3)."""
        x = np.asarray(iq, dtype=np.float64).reshape(-1, 2)
        d = x[:, None, :] - self.means[None, :, :]
        q = (d * d / self.variances[None]).sum(-1)
        return -0.5 * (q + np.log(self.variances).sum(-1)[None] + 2 * LOG2PI)

    def log_joint(self, iq: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return self.component_logpdf(iq) + np.log(self.weights)[None]

    def loglik(self, iq: np.ndarray) -> float:
        return float(logsumexp(self.log_joint(iq), axis=1).sum())

    def posterior(self, iq: np.ndarray) -> np.ndarray:
        lj = self.log_joint(iq)
        return np.exp(lj - logsumexp(lj, axis=1, keepdims=True))

    def classify(self, iq: np.ndarray) -> np.ndarray:
        return np.argmax(self.log_joint(iq), axis=1)

    def sample(self, states: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """One IQ point per entry of ``states`` drawn from that state's blob."""
        s = np.asarray(states, dtype=np.intp)
        z = rng.standard_normal(s.shape + (2,))
        return self.means[s] + z * np.sqrt(self.variances[s])

    def with_weights(self, w) -> "GaussianMixture":
        w = np.asarray(w, dtype=np.float64)
        return GaussianMixture(w / w.sum(), self.means, self.variances, self.qubit, self.pulse, dict(self.meta))

    def scaled(self, factor: float) -> "GaussianMixture":
        return GaussianMixture(
            self.weights, self.means * factor, self.variances * factor**2, self.qubit, self.pulse, dict(self.meta)
        )

    def to_dict(self) -> dict:
        return {
            "qubit": self.qubit,
            "pulse": self.pulse,
            "components": [
                {"weight": float(self.weights[i]), "mean": self.means[i].tolist(), "variance": self.variances[i].tolist()}
                for i in range(3)
            ],
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GaussianMixture":
        comps = d["components"]
        if len(comps) != 3:
            raise ValueError("a mixture needs exactly three components")
        return cls(
            np.array([c["weight"] for c in comps]),
            np.array([c["mean"] for c in comps]),
            np.array([c["variance"] for c in comps]),
            d.get("qubit"),
            d.get("pulse"),
            dict(d.get("meta", {})),
        )


def posterior(gmm: GaussianMixture, I, Q) -> np.ndarray:
    """(p0, p1, p2) for scalar or array-valued I, Q."""
    I = np.asarray(I, dtype=np.float64)
    Q = np.asarray(Q, dtype=np.float64)
    out = gmm.posterior(np.stack([I.ravel(), Q.ravel()], axis=1))
    return out.reshape(I.shape + (3,))


def fit(
    iq: np.ndarray,
    labels: np.ndarray,
    *,
    tol: float = 1e-8,
    max_iter: int = 500,
    qubit: int | None = None,
    pulse: str | None = None,
) -> GaussianMixture:
    """EM fit of a diagonal 3-component mixture, initialised from labelled moments."""
    x = np.asarray(iq, dtype=np.float64).reshape(-1, 2)
    lab = np.asarray(labels).reshape(-1)
    if len(lab) != len(x):
        raise FitError("one label per point required")
    n = len(x)
    span = float(np.ptp(x, axis=0).max()) if n else 0.0
    floor = 1e-12 * max(span, 1e-300) ** 2
    w = np.zeros(3)
    mu = np.zeros((3, 2))
    var = np.zeros((3, 2))
    for i in range(3):
        xi = x[lab == i]
        if len(xi) < 3:
            raise FitError(f"component {i} needs at least 3 labelled points, got {len(xi)}")
        w[i] = len(xi) / n
        mu[i] = xi.mean(0)
        var[i] = xi.var(0)
    if np.any(var <= floor) or span == 0:
        raise FitError("degenerate variance: labelled points are (nearly) identical")
    g = GaussianMixture(w, mu, var, qubit, pulse)
    prev = g.loglik(x)
    it = 0
    for it in range(1, max_iter + 1):
        lj = g.log_joint(x)
        resp = np.exp(lj - logsumexp(lj, axis=1, keepdims=True))
        nk = resp.sum(0)
        if np.any(nk <= 0):
            raise FitError("a component lost all responsibility")
        mu = (resp.T @ x) / nk[:, None]
        var = (resp.T @ (x * x)) / nk[:, None] - mu * mu
        if np.any(var <= floor):
            raise FitError("degenerate variance during EM")
        g = GaussianMixture(nk / nk.sum(), mu, var, qubit, pulse)
        cur = g.loglik(x)
        # EM never decreases the likelihood; allow round-off only
        assert cur >= prev - 1e-9 * max(1.0, abs(prev)), "EM log-likelihood decreased"
        done = cur - prev < tol * n
        prev = cur
        if done:
            break
    return GaussianMixture(g.weights, g.means, g.variances, qubit, pulse, {"iterations": it, "loglik": prev})


def reweight(gmm: GaussianMixture, iq: np.ndarray, *, tol: float = 1e-6, max_iter: int = 200) -> GaussianMixture:
    """Re-estimate weights only: classify by argmax posterior, set w to class fractions, repeat."""
    x = np.asarray(iq, dtype=np.float64).reshape(-1, 2)
    if not len(x):
        raise ReweightError("no data to reweight against")
    logpdf = gmm.component_logpdf(x)
    w = gmm.weights.copy()
    delta = float("inf")
    for it in range(1, max_iter + 1):
        with np.errstate(divide="ignore"):
            cls = np.argmax(logpdf + np.log(w)[None], axis=1)
        new = np.bincount(cls, minlength=3) / len(x)
        delta = float(np.abs(new - w).max())
        w = new
        if delta < tol:
            meta = dict(gmm.meta, reweight_iterations=it)
            return GaussianMixture(w, gmm.means, gmm.variances, gmm.qubit, gmm.pulse, meta)
    raise ReweightError(f"weights did not converge in {max_iter} iterations (last change {delta:.3g})")


def assignment_error(gmm: GaussianMixture, state: int, n: int = 200_000, seed: int = 0) -> np.ndarray:
    """Monte-Carlo estimate of P(argmax class = j | true state) for j = 0, 1, 2."""
    rng = np.random.default_rng(seed)
    pts = gmm.sample(np.full(n, state), rng)
    return np.bincount(gmm.classify(pts), minlength=3) / n


class GMMSet:
    """Mixtures keyed by (qubit, pulse class)."""

    def __init__(self, mixtures: dict[tuple[int, str], GaussianMixture] | None = None, tag: str = ""):
        self.mixtures = dict(mixtures or {})
        self.tag = tag

    def __getitem__(self, key: tuple[int, str]) -> GaussianMixture:
        try:
            return self.mixtures[key]
        except KeyError:
            raise KeyError(f"no mixture for qubit {key[0]} pulse {key[1]!r}") from None

    def __contains__(self, key) -> bool:
        return key in self.mixtures

    def __len__(self):
        return len(self.mixtures)

    def items(self):
        return self.mixtures.items()

    def to_json(self) -> str:
        return json.dumps(
            {"tag": self.tag, "mixtures": [g.to_dict() for _, g in sorted(self.mixtures.items())]}, indent=1
        )

    @classmethod
    def from_json(cls, text: str) -> "GMMSet":
        o = json.loads(text)
        mix = {}
        for d in o["mixtures"]:
            g = GaussianMixture.from_dict(d)
            mix[(int(g.qubit), str(g.pulse))] = g
        return cls(mix, o.get("tag", ""))


def synthetic_truth(
    qubits,
    pulses=("long", "short"),
    *,
    separation: float = 6.0,
    leak_offset: float = 1.0,
    sigma: float = 1.0,
    jitter: float = 0.05,
    leak_weight: float = 0.01,
    geometry: str = "lifted",
    seed: int = 0,
) -> GMMSet:
    """Ground-truth IQ blobs: |0> at the origin, |1> at ``separation`` sigmas
    along I, |2> further along and lifted in Q (the usual readout geometry).

    ``geometry="equilateral"`` instead puts |2> at the apex of an
    equilateral triangle over |0>-|1>, so both computational states sit
    equally far from it (``leak_offset`` is then ignored)."""
    if geometry not in ("lifted", "equilateral"):
        raise ValueError(f"unknown geometry {geometry!r}")
    rng = np.random.default_rng(seed)
    mix = {}
    for q in qubits:
        for pulse in pulses:
            s = sigma * (1 + jitter * rng.standard_normal())
            theta = rng.uniform(0, 2 * np.pi)
            rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
            if geometry == "lifted":
                apex = [separation * (1 + leak_offset / 2), separation * leak_offset]
            else:
                apex = [separation / 2, separation * np.sqrt(3) / 2]
            base = np.array([[0.0, 0.0], [separation, 0.0], apex]) * sigma
            means = base @ rot.T + rng.normal(0, 10 * sigma, size=2)
            w = np.array([(1 - leak_weight) / 2, (1 - leak_weight) / 2, leak_weight])
            mix[(int(q), pulse)] = GaussianMixture(w, means, np.full((3, 2), s * s), int(q), pulse, {"synthetic": True})
    return GMMSet(mix, f"synthetic(sep={separation})")
