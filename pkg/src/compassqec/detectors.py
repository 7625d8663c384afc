"""Detector discovery, detector-error-model compilation and decomposition.

Detectors are found by symbolic Pauli-frame propagation.  Each random event
(a reset, a measurement, or a deliberately scrambled qubit) gets a fresh
GF(2) variable; a measurement's flip is an XOR of variables, and a set of
measurements is deterministic iff its flips cancel.  For every measurement
layer we first look for new deterministic parities that hold even when all
qubits are scrambled just after the previous measurement layer, then widen
the window one measurement layer at a time.  Windowed parities compare
nearby outcomes instead of referring back to the initial state, which keeps
every error's footprint local in time.

The DEM compiler propagates detector/observable sensitivities backwards
through the resolved program, so every noise location is visited once.
"""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .circuit import CX, H, M, PREP_X, PREP_Z, R, CircuitError, CircuitProgram
from .gf2 import EchelonBasis, Eliminator, bits, reduce_weight
from .noise import NoiseModel, resolve
from .tableau import reference_sample

__all__ = [
    "Detector",
    "DetectorSet",
    "Mechanism",
    "DetectorErrorModel",
    "DecompositionError",
    "discover_detectors",
    "symbolic_flips",
    "compile_dem",
    "decompose_edges",
    "dem_to_text",
    "dem_from_text",
    "sample_dem",
    "merge_prob",
]


class DecompositionError(ValueError):
    pass


def merge_prob(p1: float, p2: float) -> float:
    return p1 * (1 - p2) + p2 * (1 - p1)


@dataclass(frozen=True)
class Detector:
    id: int
    measurements: tuple[int, ...]
    t: int
    check: str
    constant: int = 0


@dataclass
class DetectorSet:
    detectors: list[Detector]
    observables: list[tuple[int, ...]]
    observable_constants: list[int]
    reference: np.ndarray

    def __len__(self):
        return len(self.detectors)

    def matrix(self, num_measurements: int) -> sp.csr_matrix:
        """Sparse (detectors x measurements) incidence."""
        rows, cols = [], []
        for d in self.detectors:
            rows += [d.id] * len(d.measurements)
            cols += list(d.measurements)
        data = np.ones(len(rows), dtype=np.uint8)
        return sp.csr_matrix((data, (rows, cols)), shape=(len(self.detectors), num_measurements))

    def observable_matrix(self, num_measurements: int) -> sp.csr_matrix:
        rows, cols = [], []
        for k, o in enumerate(self.observables):
            rows += [k] * len(o)
            cols += list(o)
        data = np.ones(len(rows), dtype=np.uint8)
        return sp.csr_matrix((data, (rows, cols)), shape=(len(self.observables), num_measurements))

    def evaluate(self, records: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Detector and observable flip bits for hard records (shots x measurements)."""
        rec = np.asarray(records, dtype=np.int32)
        nm = rec.shape[1]
        det = (rec @ self.matrix(nm).T.astype(np.int32)) % 2
        det ^= np.array([d.constant for d in self.detectors], dtype=np.int32)[None, :]
        obs = (rec @ self.observable_matrix(nm).T.astype(np.int32)) % 2
        obs ^= np.array(self.observable_constants, dtype=np.int32)[None, :]
        return det.astype(np.uint8), obs.astype(np.uint8)


class _Frames:
    """Symbolic frame propagation starting at a given layer."""

    def __init__(self, program: CircuitProgram, start_layer: int, scramble: bool):
        self.layers = program.layers
        self.pos = start_layer
        self.nv = 0
        qs = program.qubits
        self.x = dict.fromkeys(qs, 0)
        self.z = dict.fromkeys(qs, 0)
        if scramble:
            # reset qubits untouched since are in a known state and stay so;
            # qubits read out at the very end carry the encoded state and never do
            final = {q for ins in program.layers[-1] for q in ins.qubits}
            fresh: dict[int, str | None] = dict.fromkeys(qs, None)
            for layer in program.layers[:start_layer]:
                for ins in layer:
                    for q in ins.qubits:
                        fresh[q] = "X" if ins.op == PREP_X else "Z" if ins.op in (R, PREP_Z) else None
            for q in qs:
                if fresh[q] == "Z" and q not in final:
                    self.z[q] = self._var()
                elif fresh[q] == "X" and q not in final:
                    self.x[q] = self._var()
                else:
                    self.x[q] = self._var()
                    self.z[q] = self._var()

    def _var(self) -> int:
        self.nv += 1
        return 1 << (self.nv - 1)

    def advance_to(self, layer_index: int) -> dict[int, int]:
        """Run through ``layer_index`` (inclusive); return measurement flips seen."""
        x, z = self.x, self.z
        rows: dict[int, int] = {}
        while self.pos <= layer_index:
            for ins in self.layers[self.pos]:
                op, qs = ins.op, ins.qubits
                if op == CX:
                    c, t = qs
                    x[t] ^= x[c]
                    z[c] ^= z[t]
                elif op == H:
                    q = qs[0]
                    x[q], z[q] = z[q], x[q]
                elif op == M:
                    q = qs[0]
                    rows[ins.meas] = x[q]
                    z[q] ^= self._var()
                elif op in (R, PREP_Z):
                    x[qs[0]] = 0
                    z[qs[0]] = self._var()
                elif op == PREP_X:
                    z[qs[0]] = 0
                    x[qs[0]] = self._var()
            self.pos += 1
        return rows


def symbolic_flips(program: CircuitProgram) -> dict[int, int]:
    """Variable dependence of every measurement for the full program."""
    fr = _Frames(program, 0, scramble=False)
    return fr.advance_to(len(program.layers) - 1)


def _labels(program: CircuitProgram) -> tuple[list[str], list[str], list[int]]:
    labels, pulses, layer_of = [], [], []
    for k, layer in enumerate(program.layers):
        for ins in layer:
            if ins.op == M:
                labels.append(ins.label or f"q{ins.qubits[0]}")
                pulses.append(ins.pulse)
                layer_of.append(k)
    return labels, pulses, layer_of


def discover_detectors(program: CircuitProgram) -> DetectorSet:
    """Basis of all noiselessly deterministic measurement parities."""
    mlayers = program.measurement_layers()
    by_layer: list[list[int]] = [
        [i.meas for i in program.layers[k] if i.op == M] for k in mlayers
    ]
    labels, pulses, _ = _labels(program)
    lpr = max(1, int(program.meta.get("layers_per_round", 1) or 1))

    # full-history elimination gives the number of new detectors per layer
    full = _Frames(program, 0, scramble=False)
    full_elim = Eliminator()
    full_rows: dict[int, int] = {}
    new_counts = []
    for li, k in enumerate(mlayers):
        rows = full.advance_to(k)
        full_rows.update(rows)
        cnt = 0
        for m in by_layer[li]:
            if full_elim.add(rows[m], 1 << m) is not None:
                cnt += 1
        new_counts.append(cnt)

    windows: dict[int, tuple[_Frames, Eliminator, int]] = {}

    def window_candidates(s: int, li: int) -> list[int]:
        """New null vectors at measurement layer ``li`` for window ``s``.

        Window ``s >= 1`` forgets the state after measurement layer ``s - 1``,
        window 0 forgets the prepared data state, window -1 remembers everything.
        """
        if s not in windows:
            start = 0 if s < 0 else 1 if s == 0 else mlayers[s - 1] + 1
            windows[s] = (_Frames(program, start, scramble=s >= 0), Eliminator(), max(s, 0))
        fr, el, upto = windows[s]
        found: list[int] = []
        for lj in range(upto, li + 1):
            rows = fr.advance_to(mlayers[lj])
            for m in by_layer[lj]:
                comb = el.add(rows[m], 1 << m)
                if comb is not None and lj == li:
                    found.append(comb)
        windows[s] = (fr, el, li + 1)
        return found

    # observables are deterministic too but must not be reported as detectors
    chosen = EchelonBasis()
    meas_layer = {m: li for li, ms in enumerate(by_layer) for m in ms}
    for obs in program.observables:
        v = 0
        for m in obs:
            v ^= 1 << m
        if v and chosen.add(v):
            new_counts[max(meas_layer[m] for m in obs)] -= 1
    dets: list[int] = []
    det_layer: list[int] = []
    for li in range(len(mlayers)):
        need = new_counts[li]
        got = 0
        s = li
        while got < need:
            if s < -1:
                raise CircuitError("detector discovery failed to span the deterministic space")
            cands = reduce_weight(window_candidates(s, li))
            cands.sort(key=lambda v: (v.bit_count(), bits(v)))
            for v in cands:
                if got >= need:
                    break
                if chosen.add(v):
                    dets.append(v)
                    det_layer.append(li)
                    got += 1
            s -= 1
        # windows that started too early will not be needed again soon
        for key in [k for k in windows if 0 < k < li - 6]:
            del windows[key]

    ref = reference_sample(program)
    detectors = []
    final_li = len(mlayers) - 1
    rounds = program.meta.get("rounds")
    for k, (v, li) in enumerate(zip(dets, det_layer)):
        ms = tuple(bits(v))
        const = int(np.bitwise_xor.reduce(ref[list(ms)])) if ms else 0
        short = [m for m in ms if pulses[m] == "short"]
        if short:
            check = labels[max(short)]
        else:
            check = labels[ms[0]]
        if rounds is not None and li == final_li and not short:
            t = int(rounds)
        elif rounds is not None and pulses[ms[-1]] == "long":
            t = int(rounds)
        else:
            t = li // lpr
        detectors.append(Detector(k, ms, t, check, const))

    obs_consts = []
    for obs, val in zip(program.observables, program.observable_values):
        acc = 0
        for m in obs:
            acc ^= full_rows[m]
        if acc:
            raise CircuitError("logical observable is not deterministic in the noiseless circuit")
        const = int(np.bitwise_xor.reduce(ref[list(obs)])) if obs else 0
        if const != val:
            raise CircuitError(
                f"noiseless observable parity {const} differs from the prepared eigenvalue {val}"
            )
        obs_consts.append(val)
    return DetectorSet(detectors, [tuple(o) for o in program.observables], obs_consts, ref)


# ---------------------------------------------------------------------------
# detector error model


@dataclass
class Mechanism:
    p: float
    detectors: tuple[int, ...]
    observables: tuple[int, ...] = ()
    source: str = ""
    decomposition: tuple[tuple[tuple[int, ...], tuple[int, ...]], ...] | None = None

    @property
    def measurement(self) -> tuple[str, int] | None:
        """(kind, index) for measurement-attached mechanisms, e.g. ("classical", 7)."""
        m = _MEAS_SRC.match(self.source)
        return (m.group(1), int(m.group(2))) if m else None


_MEAS_SRC = re.compile(r"^(classical|pre|post):M(\d+)$")


@dataclass
class DetectorErrorModel:
    mechanisms: list[Mechanism]
    detectors: list[Detector]
    num_observables: int
    dropped: int = 0
    # measurement support of every observable (needed to add readout mechanisms)
    observables: list[tuple[int, ...]] = field(default_factory=list)

    @property
    def num_detectors(self) -> int:
        return len(self.detectors)

    def check_matrices(self) -> tuple[sp.csr_matrix, sp.csr_matrix, np.ndarray]:
        """(mechanisms x detectors), (mechanisms x observables), priors."""
        nm = len(self.mechanisms)
        r, c, ro, co = [], [], [], []
        for k, mech in enumerate(self.mechanisms):
            r += [k] * len(mech.detectors)
            c += list(mech.detectors)
            ro += [k] * len(mech.observables)
            co += list(mech.observables)
        hd = sp.csr_matrix((np.ones(len(r), np.uint8), (r, c)), shape=(nm, self.num_detectors))
        ho = sp.csr_matrix((np.ones(len(ro), np.uint8), (ro, co)), shape=(nm, self.num_observables))
        return hd, ho, np.array([m.p for m in self.mechanisms], dtype=np.float64)


def compile_dem(
    program: CircuitProgram,
    noise: NoiseModel,
    detectors: DetectorSet | None = None,
    *,
    warn: bool = True,
) -> DetectorErrorModel:
    """Propagate every noise component to the detectors and observables it flips."""
    dset = discover_detectors(program) if detectors is None else detectors
    nd = len(dset.detectors)
    nobs = len(dset.observables)
    meas_mask = [0] * program.num_measurements
    for d in dset.detectors:
        for m in d.measurements:
            meas_mask[m] ^= 1 << d.id
    for k, o in enumerate(dset.observables):
        for m in o:
            meas_mask[m] ^= 1 << (nd + k)
    steps = resolve(program, noise)
    nq = len(program.qubits)
    sx = [0] * nq
    sz = [0] * nq
    found: dict[tuple[int, str], list] = {}
    dropped = 0

    def record(mask: int, p: float, tag: str):
        nonlocal dropped
        if p <= 0:
            return
        if mask == 0:
            dropped += 1
            return
        key = (mask, tag if _MEAS_SRC.match(tag) else "")
        cur = found.get(key)
        if cur is None:
            found[key] = [p, tag, 1]
        else:
            cur[0] = merge_prob(cur[0], p)
            cur[2] += 1

    for st in reversed(steps):
        kind = st.kind
        if kind == "PAULI":
            probs = st.probs
            if st.arity == 1:
                for j, q in enumerate(st.a):
                    xm, zm = sz[q], sx[q]
                    pr = probs[j]
                    tag = st.tags[j]
                    record(xm, pr[0], tag)
                    record(xm ^ zm, pr[1], tag)
                    record(zm, pr[2], tag)
            else:
                for j in range(len(st.a)):
                    qa, qb = st.a[j], st.b[j]
                    ma = (0, sz[qa], sz[qa] ^ sx[qa], sx[qa])
                    mb = (0, sz[qb], sz[qb] ^ sx[qb], sx[qb])
                    pr = probs[j]
                    tag = st.tags[j]
                    for c in range(15):
                        if pr[c] > 0:
                            ia, ib = divmod(c + 1, 4)
                            record(ma[ia] ^ mb[ib], pr[c], tag)
        elif kind == "CLASSICAL":
            for j in range(len(st.a)):
                record(meas_mask[st.meas[j]], st.probs[j], st.tags[j])
        elif kind == M:
            for q, m in zip(st.a, st.meas):
                sz[q] ^= meas_mask[m]
        elif kind in ("RZ", "RX"):
            for q in st.a:
                sx[q] = 0
                sz[q] = 0
        elif kind == H:
            for q in st.a:
                sx[q], sz[q] = sz[q], sx[q]
        elif kind == CX:
            for c, t in zip(st.a, st.b):
                sx[t] ^= sx[c]
                sz[c] ^= sz[t]

    det_bits = (1 << nd) - 1
    mechs = []
    for (mask, _), (p, tag, count) in found.items():
        if p > 0.5:
            raise AssertionError(f"mechanism probability {p} > 1/2 from {tag}")
        ds = tuple(bits(mask & det_bits))
        os_ = tuple(b - nd for b in bits(mask >> nd << nd))
        src = tag if count == 1 or _MEAS_SRC.match(tag) else f"{tag}+{count - 1}"
        mechs.append(Mechanism(float(p), ds, os_, src))
    mechs.sort(key=lambda m: (m.detectors, m.observables, m.source))
    if dropped and warn:
        warnings.warn(f"{dropped} noise components flip no detector or observable and were dropped", stacklevel=2)
    return DetectorErrorModel(mechs, list(dset.detectors), nobs, dropped, [tuple(o) for o in dset.observables])


def decompose_edges(dem: DetectorErrorModel, strict: bool = True) -> DetectorErrorModel:
    """Annotate every >2-detector mechanism with an edge decomposition.

    Components are taken from the edge-like mechanisms already in the model.
    With ``strict=False`` a mechanism that has no such decomposition may use
    one extra component that is not yet an edge (a flag hook, typically);
    the matching graph then gains that edge.
    """
    edges: dict[tuple[int, ...], set[tuple[int, ...]]] = {}
    for m in dem.mechanisms:
        if 1 <= len(m.detectors) <= 2:
            edges.setdefault(m.detectors, set()).add(m.observables)

    def obs_xor(a: tuple[int, ...], b: tuple[int, ...]) -> tuple[int, ...]:
        return tuple(sorted(set(a) ^ set(b)))

    def search(rest: tuple[int, ...], want: tuple[int, ...], budget: int):
        if not rest:
            return [] if not want else None
        d0 = rest[0]
        options = [(d0, d) for d in rest[1:]] + [(d0,)]
        for part in options:
            remaining = tuple(x for x in rest if x not in part)
            for o in sorted(edges.get(part, ())):
                sub = search(remaining, obs_xor(want, o), budget)
                if sub is not None:
                    return [(part, o)] + sub
        if budget:
            for part in options:
                if part in edges:
                    continue
                remaining = tuple(x for x in rest if x not in part)
                for o in sorted({(), want}):
                    sub = search(remaining, obs_xor(want, o), budget - 1)
                    if sub is not None:
                        return [(part, o)] + sub
        return None

    out = []
    for m in dem.mechanisms:
        if len(m.detectors) <= 2:
            out.append(replace(m, decomposition=None))
            continue
        dec = search(m.detectors, m.observables, 0)
        if dec is None and not strict:
            dec = search(m.detectors, m.observables, 1)
        if dec is None:
            raise DecompositionError(
                f"no edge decomposition for mechanism on detectors {list(m.detectors)} "
                f"observables {list(m.observables)} (source {m.source})"
            )
        out.append(replace(m, decomposition=tuple((tuple(p), tuple(o)) for p, o in dec)))
    return DetectorErrorModel(out, dem.detectors, dem.num_observables, dem.dropped, list(dem.observables))


def dem_to_text(dem: DetectorErrorModel) -> str:
    lines = [f"observables {dem.num_observables}"]
    for k, o in enumerate(dem.observables):
        lines.append(f"observable L{k} m={','.join(map(str, o))}")
    for d in dem.detectors:
        ms = ",".join(map(str, d.measurements))
        lines.append(f"detector D{d.id} t={d.t} c={d.check} m={ms} k={d.constant}")
    for m in dem.mechanisms:
        toks = [f"error({float(m.p)!r})"] + [f"D{d}" for d in m.detectors] + [f"L{o}" for o in m.observables]
        line = " ".join(toks) + f" # src={m.source}"
        if m.decomposition is not None:
            parts = [",".join([f"D{d}" for d in p] + [f"L{o}" for o in ob]) for p, ob in m.decomposition]
            line += " decomp=" + "|".join(parts)
        lines.append(line)
    return "\n".join(lines) + "\n"


_ERR = re.compile(r"^error\(([^)]+)\)(.*?)(?:\s+#\s*(.*))?$")


def dem_from_text(text: str) -> DetectorErrorModel:
    dets: list[Detector] = []
    mechs: list[Mechanism] = []
    nobs = 0
    supports: list[tuple[int, ...]] = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            if line.startswith("observables"):
                nobs = int(line.split()[1])
            elif line.startswith("observable "):
                tok = line.split()
                if int(tok[1][1:]) != len(supports):
                    raise ValueError("observable lines out of order")
                supports.append(tuple(int(x) for x in tok[2][2:].split(",") if x))
            elif line.startswith("detector"):
                tok = line.split()
                kv = dict(t.split("=", 1) for t in tok[2:])
                ms = tuple(int(x) for x in kv.get("m", "").split(",") if x)
                dets.append(Detector(int(tok[1][1:]), ms, int(kv["t"]), kv["c"], int(kv.get("k", 0))))
            elif line.startswith("error"):
                mt = _ERR.match(line)
                if mt is None:
                    raise ValueError("malformed error line")
                p = float(mt.group(1))
                targets = mt.group(2).split()
                ds = tuple(int(t[1:]) for t in targets if t.startswith("D"))
                os_ = tuple(int(t[1:]) for t in targets if t.startswith("L"))
                src, dec = "", None
                if mt.group(3):
                    for part in mt.group(3).split():
                        if part.startswith("src="):
                            src = part[4:]
                        elif part.startswith("decomp="):
                            dec = []
                            for comp in part[7:].split("|"):
                                items = comp.split(",")
                                dec.append(
                                    (
                                        tuple(int(x[1:]) for x in items if x.startswith("D")),
                                        tuple(int(x[1:]) for x in items if x.startswith("L")),
                                    )
                                )
                            dec = tuple(dec)
                mechs.append(Mechanism(p, ds, os_, src, dec))
            else:
                raise ValueError("unknown line type")
        except (ValueError, KeyError, IndexError) as exc:
            raise ValueError(f"DEM line {lineno}: {exc}: {line!r}") from exc
        if mechs and not (0 < mechs[-1].p <= 0.5):
            raise ValueError(f"DEM line {lineno}: probability outside (0, 1/2]")
    return DetectorErrorModel(mechs, dets, nobs, 0, supports)


def sample_dem(dem: DetectorErrorModel, n: int, seed=None, chunk: int = 8192) -> tuple[np.ndarray, np.ndarray]:
    """Sample detector and observable flips directly from the DEM."""
    rng = np.random.default_rng(seed)
    hd, ho, p = dem.check_matrices()
    hd = hd.astype(np.float32).tocsc()
    ho = ho.astype(np.float32).tocsc()
    det = np.zeros((n, dem.num_detectors), dtype=np.uint8)
    obs = np.zeros((n, dem.num_observables), dtype=np.uint8)
    for s0 in range(0, n, chunk):
        s1 = min(n, s0 + chunk)
        e = (rng.random((s1 - s0, len(p))) < p[None, :]).astype(np.float32)
        det[s0:s1] = (np.asarray(e @ hd) % 2).astype(np.uint8)
        obs[s0:s1] = (np.asarray(e @ ho) % 2).astype(np.uint8)
    return det, obs
