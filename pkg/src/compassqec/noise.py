"""Noise models and their resolution over circuit programs.

A :class:`NoiseModel` stores Pauli channels under keys ``(layer, op, qubits)``
where ``layer`` and ``qubits`` may be ``None`` to mean "any".  Lookup goes from
the most specific key to the least specific one, so a single model can mix
global defaults, per-qubit rates and per-layer characterised channels.
Instructions that match nothing are ideal.

``resolve`` flattens a program and a model into a list of :class:`Step`
objects (gates interleaved with explicit noise locations) shared by the
frame sampler and the detector-error-model compiler.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .circuit import CX, H, M, PREP_X, PREP_Z, R, CircuitProgram

__all__ = [
    "PAULI1",
    "PAULI2",
    "NoiseError",
    "PauliChannel",
    "MeasurementNoise",
    "LeakageParams",
    "NoiseModel",
    "CalibrationSnapshot",
    "Step",
    "uniform_model",
    "from_snapshot",
    "load_characterised",
    "save_characterised",
    "model_to_json",
    "model_from_json",
    "resolve",
    "MEASURE_IDLE_RATIO",
    "with_readout_error",
    "inhomogeneous_model",
    "snapshot_from_model",
]

PAULI1 = ("X", "Y", "Z")
PAULI2 = tuple(a + b for a in "IXYZ" for b in "IXYZ")[1:]
_XZ = {"I": (0, 0), "X": (1, 0), "Y": (1, 1), "Z": (0, 1)}
IDLE, IDLE_MEAS = "IDLE", "IDLE_MEAS"
MEASURE_IDLE_RATIO = 2600.0 / 88.0


class NoiseError(ValueError):
    pass


def _check_prob(p: float, what: str, hi: float = 1.0) -> float:
    p = float(p)
    if not (0.0 <= p <= hi) or math.isnan(p):
        raise NoiseError(f"{what} must lie in [0, {hi}], got {p}")
    return p


@dataclass(frozen=True)
class PauliChannel:
    arity: int
    probs: tuple[float, ...]

    def __post_init__(self):
        if self.arity not in (1, 2):
            raise NoiseError(f"arity must be 1 or 2, got {self.arity}")
        want = 3 if self.arity == 1 else 15
        if len(self.probs) != want:
            raise NoiseError(f"arity-{self.arity} channel needs {want} probabilities")
        for p in self.probs:
            _check_prob(p, "Pauli probability")
        if sum(self.probs) > 1.0 + 1e-12:
            raise NoiseError(f"channel probabilities sum to {sum(self.probs)} > 1")

    @classmethod
    def depolarizing(cls, arity: int, p: float) -> "PauliChannel":
        _check_prob(p, "depolarising strength")
        k = 3 if arity == 1 else 15
        return cls(arity, (p / k,) * k)

    @classmethod
    def from_dict(cls, d: dict[str, float]) -> "PauliChannel":
        if not d:
            raise NoiseError("empty channel")
        arity = len(next(iter(d)))
        labels = PAULI1 if arity == 1 else PAULI2
        unknown = set(d) - set(labels)
        if unknown:
            raise NoiseError(f"unknown Pauli labels {sorted(unknown)}")
        return cls(arity, tuple(float(d.get(lab, 0.0)) for lab in labels))

    def to_dict(self) -> dict[str, float]:
        labels = PAULI1 if self.arity == 1 else PAULI2
        return {lab: p for lab, p in zip(labels, self.probs) if p}

    @property
    def total(self) -> float:
        return float(sum(self.probs))

    def scaled(self, factor: float) -> "PauliChannel":
        probs = tuple(p * factor for p in self.probs)
        s = sum(probs)
        if s > 1:
            probs = tuple(p / s for p in probs)
        return PauliChannel(self.arity, probs)

    def components(self) -> list[tuple[float, tuple[tuple[int, int], ...]]]:
        """(probability, per-qubit (x, z) bits) for every non-zero Pauli term."""
        labels = PAULI1 if self.arity == 1 else PAULI2
        return [(p, tuple(_XZ[c] for c in lab)) for lab, p in zip(labels, self.probs) if p > 0]


@dataclass(frozen=True)
class MeasurementNoise:
    pre: float = 0.0
    classical: float = 0.0
    post: float = 0.0

    def __post_init__(self):
        for name in ("pre", "classical", "post"):
            _check_prob(getattr(self, name), f"measurement {name}-flip", 0.5)


@dataclass(frozen=True)
class LeakageParams:
    per_measurement: float = 0.0
    per_gate: float = 0.0
    seepage: float = 0.0
    depolarize_partner: bool = True

    def __post_init__(self):
        for name in ("per_measurement", "per_gate", "seepage"):
            _check_prob(getattr(self, name), f"leakage {name}")

    @property
    def active(self) -> bool:
        return self.per_measurement > 0 or self.per_gate > 0


Key = tuple  # (layer | None, op, qubits | None)


@dataclass(frozen=True)
class NoiseModel:
    granularity: str
    channels: dict[Key, PauliChannel] = field(default_factory=dict)
    # ("m", index) | ("q", qubit, pulse) | ("pulse", pulse) | ("any",)
    measurement: dict[tuple, MeasurementNoise] = field(default_factory=dict)
    gate_position: str = "before"
    idle_measure_scale: float = 1.0
    leakage: LeakageParams = field(default_factory=LeakageParams)
    label: str = ""

    def __post_init__(self):
        if self.granularity not in ("global", "per-qubit", "per-instruction-per-layer"):
            raise NoiseError(f"unknown granularity {self.granularity!r}")
        if self.gate_position not in ("before", "after"):
            raise NoiseError("gate_position must be 'before' or 'after'")

    def channel(self, layer: int, op: str, qubits: tuple[int, ...]) -> PauliChannel | None:
        ch = self.channels
        for key in ((layer, op, qubits), (None, op, qubits), (None, op, tuple(sorted(qubits))), (None, op, None)):
            c = ch.get(key)
            if c is not None:
                return c
        return None

    def idle_channel(self, layer: int, q: int, measure_layer: bool) -> PauliChannel | None:
        if measure_layer:
            c = self.channel(layer, IDLE_MEAS, (q,))
            if c is not None:
                return c
            c = self.channel(layer, IDLE, (q,))
            if c is not None and self.idle_measure_scale != 1.0:
                c = c.scaled(self.idle_measure_scale)
            return c
        return self.channel(layer, IDLE, (q,))

    def measurement_noise(self, m: int, q: int, pulse: str) -> MeasurementNoise:
        mm = self.measurement
        for key in (("m", m), ("q", q, pulse), ("pulse", pulse), ("any",)):
            v = mm.get(key)
            if v is not None:
                return v
        return MeasurementNoise()

    def with_leakage(self, leakage: LeakageParams) -> "NoiseModel":
        return NoiseModel(
            self.granularity, self.channels, self.measurement, self.gate_position,
            self.idle_measure_scale, leakage, self.label,
        )


def uniform_model(p: float, *, idle_measure_scale: float = 1.0) -> NoiseModel:
    """Circuit-level depolarising noise of strength ``p`` everywhere."""
    _check_prob(p, "p")
    if p > 0.5:
        raise NoiseError("uniform p above 1/2 is not a valid flip probability")
    ch = {
        (None, H, None): PauliChannel.depolarizing(1, p),
        (None, CX, None): PauliChannel.depolarizing(2, p),
        (None, IDLE, None): PauliChannel.depolarizing(1, p),
        (None, R, None): PauliChannel(1, (p, 0.0, 0.0)),
        (None, PREP_Z, None): PauliChannel(1, (p, 0.0, 0.0)),
        (None, PREP_X, None): PauliChannel(1, (0.0, 0.0, p)),
    }
    meas = {("any",): MeasurementNoise(pre=p)}
    return NoiseModel("global", ch, meas, "before", idle_measure_scale, LeakageParams(), f"uniform(p={p})")


@dataclass(frozen=True)
class CalibrationSnapshot:
    qubits: dict[int, dict[str, float]]
    bonds: dict[tuple[int, int], dict[str, float]]
    date: str = ""

    @classmethod
    def from_json(cls, text: str) -> "CalibrationSnapshot":
        o = json.loads(text)
        qs = {}
        for k, v in o.get("qubits", {}).items():
            qs[int(k)] = {kk: _check_prob(vv, f"qubits/{k}/{kk}") for kk, vv in v.items() if vv is not None}
        bonds = {}
        for k, v in o.get("bonds", {}).items():
            a, b = (int(x) for x in k.split("-"))
            bonds[(min(a, b), max(a, b))] = {
                kk: _check_prob(vv, f"bonds/{k}/{kk}") for kk, vv in v.items() if vv is not None
            }
        return cls(qs, bonds, str(o.get("date", "")))

    def to_json(self) -> str:
        return json.dumps(
            {
                "qubits": {str(q): v for q, v in sorted(self.qubits.items())},
                "bonds": {f"{a}-{b}": v for (a, b), v in sorted(self.bonds.items())},
                "date": self.date,
            },
            indent=1,
        )


def _mean(vals: list[float]) -> float | None:
    return float(np.mean(vals)) if vals else None


def from_snapshot(snap: CalibrationSnapshot, mode: str = "global") -> NoiseModel:
    """Baseline model built from reported per-qubit and per-bond error rates."""
    if mode not in ("global", "per-qubit"):
        raise NoiseError(f"unknown snapshot mode {mode!r}")
    if not snap.qubits and not snap.bonds:
        raise NoiseError("empty calibration snapshot")

    def col(key):
        return [v[key] for v in snap.qubits.values() if key in v]

    avg = {k: _mean(col(k)) for k in ("MEASURE", "MEASURE_2", "ID", "RX")}
    avg["CZ"] = _mean([v["CZ"] for v in snap.bonds.values() if "CZ" in v])
    ch: dict[Key, PauliChannel] = {}
    meas: dict[tuple, MeasurementNoise] = {}
    if avg["RX"] is not None:
        ch[(None, H, None)] = PauliChannel.depolarizing(1, avg["RX"])
    if avg["ID"] is not None:
        ch[(None, IDLE, None)] = PauliChannel.depolarizing(1, avg["ID"])
    if avg["CZ"] is not None:
        ch[(None, CX, None)] = PauliChannel.depolarizing(2, avg["CZ"])
    for key, pulse in (("MEASURE", "long"), ("MEASURE_2", "short")):
        if avg[key] is not None:
            meas[("pulse", pulse)] = MeasurementNoise(pre=min(avg[key], 0.5))
    if mode == "per-qubit":
        for q, v in snap.qubits.items():
            if avg["RX"] is not None:
                ch[(None, H, (q,))] = PauliChannel.depolarizing(1, v.get("RX", avg["RX"]))
            if avg["ID"] is not None:
                ch[(None, IDLE, (q,))] = PauliChannel.depolarizing(1, v.get("ID", avg["ID"]))
            for key, pulse in (("MEASURE", "long"), ("MEASURE_2", "short")):
                if avg[key] is not None:
                    meas[("q", q, pulse)] = MeasurementNoise(pre=min(v.get(key, avg[key]), 0.5))
        for (a, b), v in snap.bonds.items():
            if avg["CZ"] is not None:
                ch[(None, CX, (a, b))] = PauliChannel.depolarizing(2, v.get("CZ", avg["CZ"]))
    label = f"snapshot-{mode}" + (f"({snap.date})" if snap.date else "")
    return NoiseModel(mode, ch, meas, "after", 1.0, LeakageParams(), label)


def with_readout_error(model: NoiseModel, program: CircuitProgram, rates: dict) -> NoiseModel:
    """Fold extra classical readout flips (keyed by (qubit, pulse)) into ``model``.

    Every measurement of ``program`` gets an explicit per-measurement entry
    whose classical rate combines the model's own rate with the extra one.
    """
    meas = dict(model.measurement)
    for ins in program.measurements():
        q = ins.qubits[0]
        extra = float(rates.get((q, ins.pulse), 0.0))
        mn = model.measurement_noise(ins.meas, q, ins.pulse)
        c = mn.classical * (1 - extra) + extra * (1 - mn.classical)
        meas[("m", ins.meas)] = MeasurementNoise(mn.pre, min(c, 0.5), mn.post)
    return NoiseModel(
        model.granularity, model.channels, meas, model.gate_position,
        model.idle_measure_scale, model.leakage, model.label + "+readout",
    )


def inhomogeneous_model(
    program: CircuitProgram,
    p: float,
    *,
    spread: float = 0.5,
    bad_fraction: float = 0.1,
    bad_factor: float = 5.0,
    z_bias: float = 0.8,
    seed: int = 0,
) -> NoiseModel:
    """A context-dependent "true" model with one channel per instruction.

    Each qubit gets a log-normal quality factor (a ``bad_fraction`` of them
    ``bad_factor`` times worse), every gate instance a further log-normal
    jitter, and a ``z_bias`` share of each channel sits on the dephasing
    (I/Z-only) Paulis.  Meant as ground truth for decoder-mismatch studies.
    """
    rng = np.random.default_rng(seed)
    qs = program.qubits
    fq = dict(zip(qs, rng.lognormal(0.0, spread, len(qs))))
    ro = dict(zip(qs, rng.lognormal(0.0, spread, len(qs))))
    for q in rng.choice(len(qs), int(round(bad_fraction * len(qs))), replace=False):
        fq[qs[q]] *= bad_factor

    def biased(arity: int, strength: float) -> PauliChannel:
        labels = PAULI1 if arity == 1 else PAULI2
        zonly = np.array([set(lab) <= {"I", "Z"} for lab in labels])
        w = rng.dirichlet(np.ones(len(labels)))
        w = np.where(zonly, z_bias * w / w[zonly].sum(), (1 - z_bias) * w / w[~zonly].sum())
        return PauliChannel(arity, tuple(float(x) for x in min(strength, 0.5) * w))

    ch: dict[Key, PauliChannel] = {}
    meas: dict[tuple, MeasurementNoise] = {}
    for k, layer in enumerate(program.layers):
        is_meas = any(i.op == M for i in layer)
        used = set()
        for ins in layer:
            used.update(ins.qubits)
            jit = rng.lognormal(0.0, spread / 2)
            if ins.op == CX:
                a, b = ins.qubits
                ch[(k, CX, ins.qubits)] = biased(2, p * math.sqrt(fq[a] * fq[b]) * jit)
            elif ins.op == H:
                ch[(k, H, ins.qubits)] = biased(1, 0.1 * p * fq[ins.qubits[0]] * jit)
            elif ins.op in (R, PREP_Z, PREP_X):
                flip = (1.0, 0.0, 0.0) if ins.op != PREP_X else (0.0, 0.0, 1.0)
                ch[(k, ins.op, ins.qubits)] = PauliChannel(1, tuple(min(p * fq[ins.qubits[0]] * jit, 0.5) * f for f in flip))
            elif ins.op == M:
                meas[("m", ins.meas)] = MeasurementNoise(pre=min(p * ro[ins.qubits[0]] * jit, 0.5))
        for q in qs:
            if q not in used:
                ch[(k, IDLE, (q,))] = biased(1, (3.0 if is_meas else 0.5) * p * fq[q] * rng.lognormal(0.0, spread / 2))
    return NoiseModel("per-instruction-per-layer", ch, meas, "after", 1.0, LeakageParams(), f"inhomogeneous(p={p},seed={seed})")


def snapshot_from_model(model: NoiseModel, program: CircuitProgram, date: str = "") -> CalibrationSnapshot:
    """What a vendor calibration report would show for ``model``: per-qubit
    readout, idle and single-qubit gate error and per-bond two-qubit error,
    each averaged over every instance in ``program``."""
    acc: dict[tuple, list[float]] = {}

    def add(key, v):
        acc.setdefault(key, []).append(float(v))

    for k, layer in enumerate(program.layers):
        is_meas = any(i.op == M for i in layer)
        used = set()
        for ins in layer:
            used.update(ins.qubits)
            if ins.op in (CX, H):
                c = model.channel(k, ins.op, ins.qubits)
                total = 0.0 if c is None else c.total
                if ins.op == CX:
                    a, b = ins.qubits
                    add(("bond", min(a, b), max(a, b)), total)
                else:
                    add((ins.qubits[0], "RX"), total)
            elif ins.op == M:
                mn = model.measurement_noise(ins.meas, ins.qubits[0], ins.pulse)
                flip = mn.pre + mn.classical - 2 * mn.pre * mn.classical
                add((ins.qubits[0], "MEASURE" if ins.pulse == "long" else "MEASURE_2"), flip)
        for q in program.qubits:
            if q not in used and not is_meas:
                c = model.idle_channel(k, q, False)
                add((q, "ID"), 0.0 if c is None else c.total)
    qubits: dict[int, dict[str, float]] = {}
    bonds: dict[tuple[int, int], dict[str, float]] = {}
    for key, vals in sorted(acc.items(), key=lambda kv: str(kv[0])):
        if key[0] == "bond":
            bonds[(key[1], key[2])] = {"CZ": float(np.mean(vals))}
        else:
            qubits.setdefault(key[0], {})[key[1]] = float(np.mean(vals))
    return CalibrationSnapshot(qubits, bonds, date)


def model_to_json(model: NoiseModel) -> str:
    """Characterised-model JSON (array of entries); fallbacks use null fields."""
    out: list[dict[str, Any]] = [
        {"setting": "gate_position", "value": model.gate_position},
        {"setting": "granularity", "value": model.granularity},
        {"setting": "idle_measure_scale", "value": model.idle_measure_scale},
        {"setting": "label", "value": model.label},
    ]
    lk = model.leakage
    if lk != LeakageParams():
        out.append({"setting": "leakage", "value": lk.__dict__.copy()})
    for (layer, op, qs), c in model.channels.items():
        out.append(
            {"layer": layer, "op": op, "qubits": None if qs is None else list(qs), "channel": c.to_dict()}
        )
    for key, mn in model.measurement.items():
        e: dict[str, Any] = {"pre": mn.pre, "classical": mn.classical, "post": mn.post}
        if key[0] == "m":
            e["measurement"] = key[1]
        elif key[0] == "q":
            e["qubit"], e["pulse"] = key[1], key[2]
        elif key[0] == "pulse":
            e["pulse"] = key[1]
        out.append(e)
    return json.dumps(out, indent=1)


def model_from_json(text: str, *, default_granularity: str = "per-instruction-per-layer") -> NoiseModel:
    try:
        entries = json.loads(text)
    except json.JSONDecodeError as exc:
        raise NoiseError(f"$: invalid JSON ({exc})") from exc
    if not isinstance(entries, list):
        raise NoiseError("$: expected a JSON array of entries")
    settings: dict[str, Any] = {
        "gate_position": "after",
        "granularity": default_granularity,
        "idle_measure_scale": 1.0,
        "label": "characterised",
    }
    ch: dict[Key, PauliChannel] = {}
    meas: dict[tuple, MeasurementNoise] = {}
    leakage = LeakageParams()
    for k, e in enumerate(entries):
        path = f"$[{k}]"
        if not isinstance(e, dict):
            raise NoiseError(f"{path}: expected an object")
        try:
            if "setting" in e:
                if e["setting"] == "leakage":
                    leakage = LeakageParams(**e["value"])
                else:
                    settings[e["setting"]] = e["value"]
            elif "channel" in e:
                op = e["op"]
                if not isinstance(op, str):
                    raise NoiseError(f"{path}.op: expected a string")
                qs = e.get("qubits")
                qs = None if qs is None else tuple(int(q) for q in qs)
                layer = e.get("layer")
                layer = None if layer is None else int(layer)
                if not isinstance(e["channel"], dict):
                    raise NoiseError(f"{path}.channel: expected an object")
                c = PauliChannel.from_dict(e["channel"])
                if qs is not None and len(qs) != c.arity:
                    raise NoiseError(f"{path}.qubits: arity mismatch with channel")
                ch[(layer, op, qs)] = c
            elif "measurement" in e or "pulse" in e or "qubit" in e or "pre" in e:
                mn = MeasurementNoise(
                    float(e.get("pre", 0.0)), float(e.get("classical", 0.0)), float(e.get("post", 0.0))
                )
                if "measurement" in e:
                    meas[("m", int(e["measurement"]))] = mn
                elif "qubit" in e:
                    meas[("q", int(e["qubit"]), e["pulse"])] = mn
                elif "pulse" in e:
                    meas[("pulse", e["pulse"])] = mn
                else:
                    meas[("any",)] = mn
            else:
                raise NoiseError(f"{path}: unrecognised entry keys {sorted(e)}")
        except NoiseError as exc:
            msg = str(exc)
            raise NoiseError(msg if msg.startswith("$") else f"{path}: {msg}") from exc
        except (KeyError, TypeError, ValueError) as exc:
            raise NoiseError(f"{path}: {exc!r}") from exc
    return NoiseModel(
        settings["granularity"], ch, meas, settings["gate_position"],
        float(settings["idle_measure_scale"]), leakage, str(settings["label"]),
    )


def load_characterised(path_or_text: str) -> NoiseModel:
    text = path_or_text
    if not path_or_text.lstrip().startswith("["):
        with open(path_or_text) as fh:
            text = fh.read()
    return model_from_json(text)


def save_characterised(model: NoiseModel, path: str) -> None:
    with open(path, "w") as fh:
        fh.write(model_to_json(model))


# ---------------------------------------------------------------------------
# resolution


@dataclass
class Step:
    """One vectorised operation of a resolved program.

    kind is one of ``PAULI`` (noise), ``CX``, ``H``, ``RZ`` (reset / prepare
    in Z), ``RX`` (prepare in X), ``M`` (measure) or ``CLASSICAL`` (readout
    record flips).  ``a`` / ``b`` hold qubit indices (positions into
    ``program.qubits``), ``meas`` measurement indices, ``probs`` per-location
    probabilities and ``tags`` per-location source annotations.
    """

    kind: str
    a: np.ndarray
    b: np.ndarray | None = None
    meas: np.ndarray | None = None
    probs: np.ndarray | None = None
    arity: int = 1
    tags: list[str] | None = None
    layer: int = -1


def _pauli_step(locs, arity, layer) -> Step | None:
    if not locs:
        return None
    qa = np.array([l[0][0] for l in locs], dtype=np.int64)
    qb = np.array([l[0][1] for l in locs], dtype=np.int64) if arity == 2 else None
    probs = np.array([l[1].probs for l in locs], dtype=np.float64)
    return Step("PAULI", qa, qb, None, probs, arity, [l[2] for l in locs], layer)


def resolve(program: CircuitProgram, model: NoiseModel) -> list[Step]:
    """Flatten ``program`` with the noise of ``model`` into vectorised steps."""
    qubits = program.qubits
    idx = {q: k for k, q in enumerate(qubits)}
    steps: list[Step] = []
    for k, layer in enumerate(program.layers):
        is_meas = any(i.op == M for i in layer)
        used = set()
        before1, before2, after1, after2, pre, post, resets = [], [], [], [], [], [], []
        ops: dict[str, list] = {CX: [], H: [], "RZ": [], "RX": [], M: []}
        classical = []
        for ins in layer:
            used.update(ins.qubits)
            qs = tuple(idx[q] for q in ins.qubits)
            if ins.op in (H, CX):
                c = model.channel(k, ins.op, ins.qubits)
                if c is not None and c.total > 0:
                    if c.arity != len(qs):
                        raise NoiseError(f"layer {k}: {ins.op} on {ins.qubits} resolved to arity-{c.arity} channel")
                    tag = f"L{k}:{ins.op}:" + "-".join(map(str, ins.qubits))
                    tgt = (before1, before2) if model.gate_position == "before" else (after1, after2)
                    tgt[len(qs) - 1].append((qs, c, tag))
                ops[ins.op].append(qs)
            elif ins.op in (R, PREP_Z, PREP_X):
                ops["RX" if ins.op == PREP_X else "RZ"].append(qs)
                c = model.channel(k, ins.op, ins.qubits)
                if c is not None and c.total > 0:
                    resets.append((qs, c, f"L{k}:{ins.op}:{ins.qubits[0]}"))
            elif ins.op == M:
                ops[M].append((qs[0], ins.meas))
                mn = model.measurement_noise(ins.meas, ins.qubits[0], ins.pulse)
                if mn.pre > 0:
                    pre.append(((qs[0],), PauliChannel(1, (mn.pre, 0.0, 0.0)), f"pre:M{ins.meas}"))
                if mn.post > 0:
                    post.append(((qs[0],), PauliChannel(1, (mn.post, 0.0, 0.0)), f"post:M{ins.meas}"))
                if mn.classical > 0:
                    classical.append((qs[0], ins.meas, mn.classical))
        idle = []
        for q in qubits:
            if q not in used:
                c = model.idle_channel(k, q, is_meas)
                if c is not None and c.total > 0:
                    idle.append(((idx[q],), c, f"L{k}:IDLE:{q}"))
        for s in (_pauli_step(before1, 1, k), _pauli_step(before2, 2, k), _pauli_step(pre, 1, k)):
            if s is not None:
                steps.append(s)
        for kind in ("RZ", "RX"):
            if ops[kind]:
                steps.append(Step(kind, np.array([q[0] for q in ops[kind]], dtype=np.int64), layer=k))
        if ops[H]:
            steps.append(Step(H, np.array([q[0] for q in ops[H]], dtype=np.int64), layer=k))
        if ops[CX]:
            arr = np.array(ops[CX], dtype=np.int64)
            steps.append(Step(CX, arr[:, 0].copy(), arr[:, 1].copy(), layer=k))
        if ops[M]:
            arr = np.array(ops[M], dtype=np.int64)
            steps.append(Step(M, arr[:, 0].copy(), meas=arr[:, 1].copy(), layer=k))
        if classical:
            steps.append(
                Step(
                    "CLASSICAL",
                    np.array([c[0] for c in classical], dtype=np.int64),
                    meas=np.array([c[1] for c in classical], dtype=np.int64),
                    probs=np.array([c[2] for c in classical], dtype=np.float64),
                    tags=[f"classical:M{c[1]}" for c in classical],
                    layer=k,
                )
            )
        for s in (
            _pauli_step(after1, 1, k),
            _pauli_step(after2, 2, k),
            _pauli_step(resets, 1, k),
            _pauli_step(post, 1, k),
            _pauli_step(idle, 1, k),
        ):
            if s is not None:
                steps.append(s)
    return steps
