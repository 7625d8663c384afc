"""Pauli-frame Monte-Carlo sampling with leakage flags and IQ synthesis.

Frames are bit-packed along the shot axis (64 shots per word).  Noise is
sampled sparsely: for each noise location the number of affected shots is
drawn from a binomial and the shots themselves uniformly without
replacement, which is exact and costs time proportional to the number of
error events instead of locations x shots.

Shots are simulated in fixed-size blocks; block ``k`` draws from its own
``SeedSequence(seed, spawn_key=(k,))`` stream, so a given (seed, shot index)
always produces the same record no matter how many shots are requested.
"""

from __future__ import annotations

import hashlib
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .circuit import CX, H, M, CircuitProgram
from .gmm import GMMSet
from .noise import NoiseModel, resolve
from .tableau import reference_sample

__all__ = ["ShotBatch", "sample", "generate_calibration", "BLOCK"]

BLOCK = 4096
_MAGIC = b"CQSHOTS1"


@dataclass
class ShotBatch:
    hard: np.ndarray  # (n, nm) uint8
    truth: np.ndarray  # (n, nm) uint8, 0/1/2
    iq: np.ndarray | None  # (n, nm, 2) float32
    obs_flips: np.ndarray  # (n, nobs) uint8
    seed: int | None = None
    program_digest: str = ""
    noise_tag: str = ""
    gmm_tag: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n, nm = self.hard.shape
        if self.truth.shape != (n, nm):
            raise ValueError("truth and hard records differ in shape")
        if self.iq is not None and self.iq.shape != (n, nm, 2):
            raise ValueError("IQ array must be (shots, measurements, 2)")
        if self.obs_flips.shape[0] != n:
            raise ValueError("one observable row per shot required")

    @property
    def shots(self) -> int:
        return self.hard.shape[0]

    @property
    def num_measurements(self) -> int:
        return self.hard.shape[1]

    def select(self, idx) -> "ShotBatch":
        return ShotBatch(
            self.hard[idx], self.truth[idx], None if self.iq is None else self.iq[idx], self.obs_flips[idx],
            self.seed, self.program_digest, self.noise_tag, self.gmm_tag, dict(self.meta),
        )

    @classmethod
    def concat(cls, batches: list["ShotBatch"]) -> "ShotBatch":
        b0 = batches[0]
        iq = None if b0.iq is None else np.concatenate([b.iq for b in batches])
        return cls(
            np.concatenate([b.hard for b in batches]), np.concatenate([b.truth for b in batches]), iq,
            np.concatenate([b.obs_flips for b in batches]), b0.seed, b0.program_digest, b0.noise_tag,
            b0.gmm_tag, dict(b0.meta),
        )

    def save(self, path: str) -> None:
        """Header line of JSON, then per shot and measurement: bit, truth, I, Q (float32)."""
        n, nm = self.hard.shape
        header = {
            "program": self.program_digest,
            "shots": n,
            "measurements": nm,
            "observables": int(self.obs_flips.shape[1]),
            "seed": self.seed,
            "noise": self.noise_tag,
            "gmm": self.gmm_tag,
            "iq": self.iq is not None,
            "meta": self.meta,
        }
        rec = np.zeros((n, nm), dtype=[("bit", "u1"), ("truth", "u1"), ("i", "<f4"), ("q", "<f4")])
        rec["bit"] = self.hard
        rec["truth"] = self.truth
        if self.iq is not None:
            rec["i"] = self.iq[..., 0]
            rec["q"] = self.iq[..., 1]
        with open(path, "wb") as fh:
            fh.write(_MAGIC + json.dumps(header).encode() + b"\n")
            fh.write(np.ascontiguousarray(self.obs_flips, dtype=np.uint8).tobytes())
            fh.write(rec.tobytes())

    @classmethod
    def load(cls, path: str) -> "ShotBatch":
        with open(path, "rb") as fh:
            if fh.read(len(_MAGIC)) != _MAGIC:
                raise ValueError(f"{path}: not a shot file")
            h = json.loads(fh.readline())
            n, nm, no = h["shots"], h["measurements"], h["observables"]
            obs = np.frombuffer(fh.read(n * no), dtype=np.uint8).reshape(n, no).copy()
            dt = np.dtype([("bit", "u1"), ("truth", "u1"), ("i", "<f4"), ("q", "<f4")])
            rec = np.frombuffer(fh.read(n * nm * dt.itemsize), dtype=dt).reshape(n, nm)
        iq = np.stack([rec["i"], rec["q"]], axis=-1) if h["iq"] else None
        return cls(rec["bit"].copy(), rec["truth"].copy(), iq, obs, h["seed"], h["program"], h["noise"], h["gmm"], h["meta"])

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("shot,measurement,bit,truth,I,Q\n")
        for s in range(self.shots):
            for m in range(self.num_measurements):
                i, q = (self.iq[s, m] if self.iq is not None else ("", ""))
                buf.write(f"{s},{m},{self.hard[s, m]},{self.truth[s, m]},{i},{q}\n")
        return buf.getvalue()


def _distinct_shots(rng: np.random.Generator, loc: np.ndarray, nshots: int) -> np.ndarray:
    """Uniform shot index per event, distinct within each location."""
    shot = rng.integers(0, nshots, size=len(loc))
    while True:
        key = loc * nshots + shot
        _, first = np.unique(key, return_index=True)
        if len(first) == len(key):
            return shot
        dup = np.ones(len(key), dtype=bool)
        dup[first] = False
        shot[dup] = rng.integers(0, nshots, size=int(dup.sum()))


def _events(rng: np.random.Generator, probs: np.ndarray, nshots: int):
    """Sample (location, shot, component) triples for independent channels."""
    ptot = probs.sum(axis=1)
    counts = rng.binomial(nshots, np.minimum(ptot, 1.0))
    k = int(counts.sum())
    if k == 0:
        return None
    loc = np.repeat(np.arange(len(ptot)), counts)
    shot = _distinct_shots(rng, loc, nshots)
    cum = np.cumsum(probs, axis=1)[loc]
    u = rng.random(k) * ptot[loc]
    comp = np.minimum((u[:, None] >= cum).sum(axis=1), probs.shape[1] - 1)
    return loc, shot, comp


_PX = np.array([0, 1, 1, 0], dtype=np.uint8)  # I X Y Z
_PZ = np.array([0, 0, 1, 1], dtype=np.uint8)


class _Block:
    def __init__(self, nq: int, nshots: int, rng: np.random.Generator, leakage):
        self.S = nshots
        self.W = (nshots + 63) // 64
        self.x = np.zeros((nq, self.W), dtype=np.uint64)
        self.z = np.zeros((nq, self.W), dtype=np.uint64)
        self.rng = rng
        self.leak = np.zeros((nq, nshots), dtype=bool) if leakage.active else None

    def flip(self, arr: np.ndarray, q: np.ndarray, shot: np.ndarray) -> None:
        bit = np.left_shift(np.uint64(1), (shot & 63).astype(np.uint64))
        np.bitwise_xor.at(arr, (q, shot >> 6), bit)

    def random_words(self, nrows: int) -> np.ndarray:
        return self.rng.integers(0, 2**64, size=(nrows, self.W), dtype=np.uint64, endpoint=False)

    def bits(self, rows: np.ndarray) -> np.ndarray:
        """Unpack frame rows to (len(rows), S) uint8."""
        b = np.unpackbits(np.ascontiguousarray(rows).view(np.uint8), axis=1, bitorder="little")
        return b[:, : self.S]

    def pack(self, bits: np.ndarray) -> np.ndarray:
        pad = self.W * 64 - bits.shape[1]
        if pad:
            bits = np.pad(bits, ((0, 0), (0, pad)))
        return np.packbits(bits.astype(np.uint8), axis=1, bitorder="little").view(np.uint64)


def _leak_events(blk: _Block, qubits: np.ndarray, p: float) -> None:
    if p <= 0 or not len(qubits):
        return
    ev = _events(blk.rng, np.full((len(qubits), 1), p), blk.S)
    if ev is not None:
        loc, shot, _ = ev
        blk.leak[qubits[loc], shot] = True


def _simulate_block(program, steps, ref, noise: NoiseModel, nshots: int, rng):
    nq = len(program.qubits)
    nm = program.num_measurements
    lk = noise.leakage
    blk = _Block(nq, nshots, rng, lk)
    flips = np.zeros((nm, nshots), dtype=np.uint8)
    leaked = np.zeros((nm, nshots), dtype=bool)
    classical = np.zeros((nm, nshots), dtype=np.uint8)
    for st in steps:
        kind = st.kind
        if kind == "PAULI":
            ev = _events(rng, st.probs, nshots)
            if ev is None:
                continue
            loc, shot, comp = ev
            if st.arity == 1:
                p = comp + 1
                q = st.a[loc]
                mx, mz = _PX[p].astype(bool), _PZ[p].astype(bool)
                blk.flip(blk.x, q[mx], shot[mx])
                blk.flip(blk.z, q[mz], shot[mz])
            else:
                pa, pb = np.divmod(comp + 1, 4)
                for q, p in ((st.a[loc], pa), (st.b[loc], pb)):
                    mx, mz = _PX[p].astype(bool), _PZ[p].astype(bool)
                    blk.flip(blk.x, q[mx], shot[mx])
                    blk.flip(blk.z, q[mz], shot[mz])
        elif kind == CX:
            c, t = st.a, st.b
            blk.x[t] ^= blk.x[c]
            blk.z[c] ^= blk.z[t]
            if blk.leak is not None:
                if lk.per_gate > 0:
                    _leak_events(blk, c, lk.per_gate)
                    _leak_events(blk, t, lk.per_gate)
                if lk.depolarize_partner:
                    for a, b in ((c, t), (t, c)):
                        hit = blk.leak[a] & ~blk.leak[b]
                        if hit.any():
                            rows, shots = np.nonzero(hit)
                            p = rng.integers(0, 4, size=len(rows))
                            mx, mz = _PX[p].astype(bool), _PZ[p].astype(bool)
                            blk.flip(blk.x, b[rows][mx], shots[mx])
                            blk.flip(blk.z, b[rows][mz], shots[mz])
        elif kind == H:
            a = st.a
            blk.x[a], blk.z[a] = blk.z[a].copy(), blk.x[a].copy()
        elif kind == "RZ":
            blk.x[st.a] = 0
            blk.z[st.a] = blk.random_words(len(st.a))
            if blk.leak is not None:
                blk.leak[st.a] = False
        elif kind == "RX":
            blk.z[st.a] = 0
            blk.x[st.a] = blk.random_words(len(st.a))
            if blk.leak is not None:
                blk.leak[st.a] = False
        elif kind == M:
            q, ms = st.a, st.meas
            if blk.leak is not None:
                _leak_events(blk, q, lk.per_measurement)
                leaked[ms] = blk.leak[q]
            flips[ms] = blk.bits(blk.x[q])
            blk.z[q] ^= blk.random_words(len(q))
            if blk.leak is not None and lk.seepage > 0:
                # leaked qubits anywhere may return, in a random computational state
                back = blk.leak & (rng.random(blk.leak.shape) < lk.seepage)
                if back.any():
                    blk.leak &= ~back
                    rows, shots = np.nonzero(back)
                    p = rng.integers(0, 4, size=len(rows))
                    mx = _PX[p].astype(bool)
                    blk.flip(blk.x, rows[mx], shots[mx])
        elif kind == "CLASSICAL":
            ev = _events(rng, st.probs[:, None], nshots)
            if ev is not None:
                loc, shot, _ = ev
                classical[st.meas[loc], shot] ^= 1
    truth = (flips ^ ref[:, None]).astype(np.uint8)
    truth[leaked] = 2
    return truth.T.copy(), classical.T.copy()


def _synthesize_iq(program: CircuitProgram, truth_gmm: GMMSet, truth: np.ndarray, rng) -> tuple[np.ndarray, np.ndarray]:
    """IQ points from the truth blobs and the argmax class under those blobs."""
    n, nm = truth.shape
    iq = np.empty((n, nm, 2), dtype=np.float32)
    cls = np.empty((n, nm), dtype=np.uint8)
    groups: dict[tuple[int, str], list[int]] = {}
    for ins in program.measurements():
        groups.setdefault((ins.qubits[0], ins.pulse), []).append(ins.meas)
    for key in sorted(groups):
        ms = np.array(groups[key])
        g = truth_gmm[key]
        pts = g.sample(truth[:, ms], rng)
        iq[:, ms] = pts
        cls[:, ms] = g.classify(pts.reshape(-1, 2)).reshape(n, len(ms))
    return iq, cls


def sample(
    program: CircuitProgram,
    noise: NoiseModel,
    truth_gmm: GMMSet | None,
    n: int,
    seed: int,
    *,
    start_block: int = 0,
) -> ShotBatch:
    """Sample ``n`` noisy shots of ``program``.

    The hard bit of a measurement is the IQ classification under the truth
    blobs (or the true level when no blobs are given), with a random bit for
    level 2, XOR any classical readout flip.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    steps = resolve(program, noise)
    ref = reference_sample(program).astype(np.uint8)
    nb = (n + BLOCK - 1) // BLOCK
    hards, truths, iqs = [], [], []
    for b in range(start_block, start_block + nb):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(b,)))
        truth, classical = _simulate_block(program, steps, ref, noise, BLOCK, rng)
        if truth_gmm is not None:
            iq, cls = _synthesize_iq(program, truth_gmm, truth, rng)
            iqs.append(iq)
        else:
            cls = truth
        rand = rng.integers(0, 2, size=cls.shape, dtype=np.uint8)
        hard = np.where(cls == 2, rand, cls).astype(np.uint8) ^ classical
        hards.append(hard)
        truths.append(truth)
    hard = np.concatenate(hards)[:n]
    truth = np.concatenate(truths)[:n]
    iq = np.concatenate(iqs)[:n] if iqs else None
    obs = np.zeros((n, len(program.observables)), dtype=np.uint8)
    for k, (o, v) in enumerate(zip(program.observables, program.observable_values)):
        obs[:, k] = (np.bitwise_xor.reduce(hard[:, list(o)], axis=1) if o else 0) ^ v
    return ShotBatch(
        hard, truth, iq, obs, seed, program.digest(), noise.label,
        truth_gmm.tag if truth_gmm is not None else "", {"start_block": start_block},
    )


def generate_calibration(qubits, pulse: str, truth_gmm: GMMSet, shots_per_state: int, seed: int):
    """Labelled IQ points per qubit: all |0> shots first, then |1>, then |2>."""
    if shots_per_state < 1:
        raise ValueError("shots_per_state must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(hash_str(pulse),)))
    out = {}
    labels = np.repeat(np.arange(3, dtype=np.uint8), shots_per_state)
    for q in qubits:
        g = truth_gmm[(int(q), pulse)]
        out[int(q)] = (g.sample(labels, rng), labels.copy())
    return out


def hash_str(s: str) -> int:
    return int.from_bytes(hashlib.sha256(s.encode()).digest()[:4], "little")
