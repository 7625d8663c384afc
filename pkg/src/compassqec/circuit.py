"""Layered syndrome-extraction and memory-experiment circuits."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .layout import CodePatch, MeasurementSchedule, XCheck, ZCheck

__all__ = [
    "OPCODES",
    "Instruction",
    "CircuitProgram",
    "CircuitError",
    "build_check_gadget",
    "build_memory_circuit",
    "program_to_text",
    "program_from_text",
]

PREP_Z, PREP_X, H, CX, M, R = "PREP_Z", "PREP_X", "H", "CX", "M", "R"
OPCODES = (PREP_Z, PREP_X, H, CX, M, R)
SHORT, LONG = "short", "long"

STATES = {"0": ("Z", 0), "1": ("Z", 1), "+": ("X", 0), "-": ("X", 1), "−": ("X", 1)}


class CircuitError(ValueError):
    pass


@dataclass(frozen=True)
class Instruction:
    op: str
    qubits: tuple[int, ...]
    meas: int | None = None
    pulse: str | None = None
    value: int = 0  # eigenvalue bit for preparations
    label: str = ""  # check roles of a measurement, e.g. "X3:f+Z5"

    def __post_init__(self):
        if self.op not in OPCODES:
            raise CircuitError(f"unknown opcode {self.op!r}")
        n = 2 if self.op == CX else 1
        if len(self.qubits) != n:
            raise CircuitError(f"{self.op} takes {n} qubit(s), got {self.qubits}")
        if self.op == CX and self.qubits[0] == self.qubits[1]:
            raise CircuitError("CX operands must differ")
        if self.op == M and (self.meas is None or self.pulse not in (SHORT, LONG)):
            raise CircuitError("measurements need an index and a pulse class")

    @property
    def basis(self) -> str | None:
        return "Z" if self.op == M else None


@dataclass(frozen=True)
class CircuitProgram:
    layers: tuple[tuple[Instruction, ...], ...]
    observables: tuple[tuple[int, ...], ...] = ()
    observable_values: tuple[int, ...] = ()
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        seen = -1
        for k, layer in enumerate(self.layers):
            used: set[int] = set()
            for ins in layer:
                for q in ins.qubits:
                    if q in used:
                        raise CircuitError(f"qubit {q} appears twice in layer {k}")
                    used.add(q)
                if ins.op == M:
                    if ins.meas != seen + 1:
                        raise CircuitError(f"measurement index {ins.meas} out of order in layer {k}")
                    seen = ins.meas
        object.__setattr__(self, "_nmeas", seen + 1)
        if len(self.observable_values) != len(self.observables):
            raise CircuitError("one eigenvalue bit per observable required")

    @property
    def num_measurements(self) -> int:
        return self._nmeas

    @property
    def qubits(self) -> tuple[int, ...]:
        return tuple(sorted({q for layer in self.layers for ins in layer for q in ins.qubits}))

    def measurements(self) -> list[Instruction]:
        return [ins for layer in self.layers for ins in layer if ins.op == M]

    def measurement_layers(self) -> list[int]:
        """Layer index of every measurement-bearing layer, in order."""
        return [k for k, layer in enumerate(self.layers) if any(i.op == M for i in layer)]

    def text(self) -> str:
        return program_to_text(self)

    def digest(self) -> str:
        return hashlib.sha256(self.text().encode()).hexdigest()[:16]


def _asap(gates: Iterable[tuple[str, tuple[int, ...]]]) -> list[list[Instruction]]:
    """Pack gates into layers as early as possible, keeping per-qubit order."""
    layers: list[list[Instruction]] = []
    free: dict[int, int] = {}
    for op, qs in gates:
        t = max(free.get(q, 0) for q in qs)
        while len(layers) <= t:
            layers.append([])
        layers[t].append(Instruction(op, qs))
        for q in qs:
            free[q] = t + 1
    return layers


def _x_steps(c: XCheck) -> list[list[tuple[int, int]]]:
    """CX pairs of an X gadget grouped by gadget step, both sides interleaved."""
    (ft, top), (fb, bot) = c.flags
    s = c.syndrome
    steps: list[list[tuple[int, int]]] = [[(s, ft)], [(s, fb)]]
    for k in range(max(len(top), len(bot))):
        steps.append([(ft, top[k])] if k < len(top) else [])
        steps.append([(fb, bot[k])] if k < len(bot) else [])
    steps += [[(s, ft)], [(s, fb)]]
    return steps


def _block_gates(x_checks: Sequence[XCheck], z_checks: Sequence[ZCheck]) -> list[tuple[str, tuple[int, ...]]]:
    gates: list[tuple[str, tuple[int, ...]]] = [(H, (c.syndrome,)) for c in x_checks]
    xs = [_x_steps(c) for c in x_checks]
    nsteps = max((len(s) for s in xs), default=0)
    for k in range(nsteps):
        for st in xs:
            if k < len(st):
                gates += [(CX, pair) for pair in st[k]]
    gates += [(H, (c.syndrome,)) for c in x_checks]
    for k in range(2):
        gates += [(CX, (c.data[k], c.ancilla)) for c in z_checks]
    return gates


def _measured(x_checks: Sequence[XCheck], z_checks: Sequence[ZCheck]) -> dict[int, list[str]]:
    roles: dict[int, list[str]] = {}
    for c in x_checks:
        roles.setdefault(c.syndrome, []).append(f"{c.id}:s")
        for f, _ in c.flags:
            roles.setdefault(f, []).append(f"{c.id}:f")
    for c in z_checks:
        roles.setdefault(c.ancilla, []).append(c.id)
    return roles


def build_check_gadget(check: XCheck | ZCheck, kind: str | None = None) -> tuple[tuple[Instruction, ...], ...]:
    """Stand-alone layered gadget measuring one check (measurement indices from 0)."""
    kind = kind or ("X" if isinstance(check, XCheck) else "Z")
    if kind == "X":
        if not isinstance(check, XCheck):
            raise CircuitError("X gadget needs an X check")
        flags = [f for f, _ in check.flags]
        prep = [Instruction(PREP_X, (check.syndrome,))] + [Instruction(PREP_Z, (f,)) for f in flags]
        gates = [(CX, pair) for st in _x_steps(check) for pair in st] + [(H, (check.syndrome,))]
        measured = [check.syndrome] + flags
    elif kind == "Z":
        if not isinstance(check, ZCheck):
            raise CircuitError("Z gadget needs a Z check")
        prep = [Instruction(PREP_Z, (check.ancilla,))]
        gates = [(CX, (check.data[0], check.ancilla)), (CX, (check.data[1], check.ancilla))]
        measured = [check.ancilla]
    else:
        raise CircuitError(f"unknown gadget kind {kind!r}")
    layers = [prep] + _asap(gates)
    layers.append([Instruction(M, (q,), k, SHORT, label=check.id) for k, q in enumerate(measured)])
    layers.append([Instruction(R, (q,)) for q in measured])
    return tuple(tuple(L) for L in layers)


def build_memory_circuit(
    patch: CodePatch,
    schedule: MeasurementSchedule,
    basis: str,
    state: str,
    T: int,
    *,
    reset_ancillas: bool = True,
) -> CircuitProgram:
    """Memory experiment: transversal preparation, ``T`` rounds, transversal readout."""
    if T < 0:
        raise CircuitError(f"T must be >= 0, got {T}")
    if state not in STATES:
        raise CircuitError(f"unknown state {state!r}")
    sbasis, value = STATES[state]
    if basis not in ("X", "Z") or sbasis != basis:
        raise CircuitError(f"state {state!r} is not a {basis}-basis eigenstate")
    data = patch.data_qubits
    ancillas = [q for q in patch.qubits if q not in set(data)]
    prep_op = PREP_Z if basis == "Z" else PREP_X
    layers: list[list[Instruction]] = [
        [Instruction(prep_op, (q,), value=value) for q in data] + [Instruction(PREP_Z, (q,)) for q in ancillas]
    ]
    mcount = 0
    block_checks = []
    for block in schedule.blocks:
        xs: list[XCheck] = []
        zs: list[ZCheck] = []
        for si in block:
            for cid in schedule.steps[si]:
                c = patch.check(cid)
                target = xs if isinstance(c, XCheck) else zs
                if c in target:
                    raise CircuitError(f"check {cid} measured twice in one measurement layer")
                target.append(c)
        block_checks.append((xs, zs))
    for _ in range(T):
        for xs, zs in block_checks:
            layers += _asap(_block_gates(xs, zs))
            roles = _measured(xs, zs)
            mlayer = []
            for q in sorted(roles):
                mlayer.append(Instruction(M, (q,), mcount, SHORT, label="+".join(roles[q])))
                mcount += 1
            layers.append(mlayer)
            if reset_ancillas:
                layers.append([Instruction(R, (q,)) for q in sorted(roles)])
    if basis == "X":
        layers.append([Instruction(H, (q,)) for q in data])
    final: dict[int, int] = {}
    mlayer = []
    for q in data:
        final[q] = mcount
        mlayer.append(Instruction(M, (q,), mcount, LONG, label=f"D{q}"))
        mcount += 1
    layers.append(mlayer)
    support = patch.logical_z if basis == "Z" else patch.logical_x
    obs = (tuple(sorted(final[q] for q in support)),)
    meta = {
        "kind": patch.kind,
        "d": patch.distance,
        "anchor": patch.anchor,
        "basis": basis,
        "state": "-" if state == "−" else state,
        "rounds": T,
        "layers_per_round": schedule.layers_per_round,
        "reset_ancillas": reset_ancillas,
    }
    return CircuitProgram(tuple(tuple(L) for L in layers if L), obs, (value,), meta)


def program_to_text(p: CircuitProgram) -> str:
    out = []
    for k, v in sorted(p.meta.items()):
        out.append(f"META {k}={v}")
    for layer in p.layers:
        out.append("LAYER")
        for ins in layer:
            parts = [ins.op] + [str(q) for q in ins.qubits]
            if ins.op == M:
                parts += [f"M{ins.meas}", f"pulse={ins.pulse}"]
                if ins.label:
                    parts.append(f"label={ins.label}")
            if ins.value:
                parts.append(f"value={ins.value}")
            out.append(" ".join(parts))
    for obs, val in zip(p.observables, p.observable_values):
        out.append("OBS parity " + " ".join(f"M{m}" for m in obs) + f" xor={val}")
    return "\n".join(out) + "\n"


def _meta_value(v: str):
    if v in ("True", "False"):
        return v == "True"
    try:
        return int(v)
    except ValueError:
        return v


def program_from_text(text: str) -> CircuitProgram:
    layers: list[list[Instruction]] = []
    obs, vals, meta = [], [], {}
    for lineno, line in enumerate(text.splitlines(), 1):
        tok = line.split()
        if not tok or tok[0].startswith("#"):
            continue
        head = tok[0]
        try:
            if head == "META":
                k, v = tok[1].split("=", 1)
                meta[k] = _meta_value(v)
            elif head == "LAYER":
                layers.append([])
            elif head == "OBS":
                if tok[1] != "parity":
                    raise CircuitError("expected 'OBS parity'")
                ms, val = [], 0
                for t in tok[2:]:
                    if t.startswith("xor="):
                        val = int(t[4:])
                    else:
                        ms.append(int(t[1:]))
                obs.append(tuple(ms))
                vals.append(val)
            else:
                qs, kw, meas = [], {}, None
                for t in tok[1:]:
                    if "=" in t:
                        k, v = t.split("=", 1)
                        kw[k] = v
                    elif t.startswith("M"):
                        meas = int(t[1:])
                    else:
                        qs.append(int(t))
                layers[-1].append(
                    Instruction(
                        head,
                        tuple(qs),
                        meas,
                        kw.get("pulse"),
                        int(kw.get("value", 0)),
                        kw.get("label", ""),
                    )
                )
        except (IndexError, ValueError) as exc:
            raise CircuitError(f"line {lineno}: cannot parse {line!r}: {exc}") from exc
    return CircuitProgram(tuple(tuple(L) for L in layers), tuple(obs), tuple(vals), meta)
