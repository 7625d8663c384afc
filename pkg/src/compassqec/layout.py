"""Heavy-hex lattice, code patches and measurement schedules.

Lattice coordinates are ``(row, col)`` with long rows on even ``row`` values
and bridge (edge-midpoint) qubits on odd ``row`` values.  Qubits are numbered
row-major: a long row followed by the bridge qubits hanging below it, which is
the numbering used by IBM Heron devices.

A distance-``d`` patch places data qubit ``(i, j)`` at long row ``r0 + i`` and
column ``c0 + 2j``.  The in-row qubit between two horizontally adjacent data
qubits is the ancilla of a weight-two ZZ gauge.  A bridge qubit at column
``c0 + 2j + 1`` between long rows ``r0 + i`` and ``r0 + i + 1`` is the syndrome
qubit of the weight-four X gauge on plaquette ``(i, j)``; the two in-row
qubits it touches act as flags.  Because bridges only exist on every other
plaquette, X plaquettes form a checkerboard and the remaining plaquettes are
Z stabilisers (products of two ZZ gauges).  The left and right boundaries
carry weight-two X gauges ``X(i, 0) X(i+1, 0)`` (resp. column ``d-1``) measured
through the bridge outside the data columns and two extra flag qubits.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

__all__ = [
    "CODE_KINDS",
    "LayoutError",
    "PlacementError",
    "HeavyHexLattice",
    "XCheck",
    "ZCheck",
    "CodePatch",
    "MeasurementSchedule",
    "DEFAULT_SCHEDULES",
    "build_lattice",
    "heron_lattice",
    "build_patch",
    "build_schedule",
    "patch_to_json",
    "patch_from_json",
    "schedule_to_json",
    "schedule_from_json",
]

DYNAMIC_COMPASS = "dynamic-compass"
HEAVY_HEX = "heavy-hex"
CODE_KINDS = (DYNAMIC_COMPASS, HEAVY_HEX)

HERON_ROWS = 7
HERON_COLS = 3


class LayoutError(ValueError):
    """Invalid argument to a layout builder."""


class PlacementError(LayoutError):
    """A patch does not fit on the lattice."""


@dataclass(frozen=True)
class HeavyHexLattice:
    qubits: tuple[int, ...]
    edges: frozenset[tuple[int, int]]
    coords: dict[int, tuple[int, int]] = field(compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_by_coord", {rc: q for q, rc in self.coords.items()})
        adj: dict[int, set[int]] = {q: set() for q in self.qubits}
        for a, b in self.edges:
            if a == b:
                raise LayoutError(f"self loop on qubit {a}")
            adj[a].add(b)
            adj[b].add(a)
        object.__setattr__(self, "_adj", {q: frozenset(v) for q, v in adj.items()})

    @property
    def num_qubits(self) -> int:
        return len(self.qubits)

    @property
    def degree(self) -> dict[int, int]:
        return {q: len(n) for q, n in self._adj.items()}

    def neighbors(self, q: int) -> frozenset[int]:
        return self._adj[q]

    def has_edge(self, a: int, b: int) -> bool:
        return b in self._adj.get(a, ())

    def at(self, row: int, col: int) -> int | None:
        """Qubit at lattice coordinate ``(row, col)`` or ``None``."""
        return self._by_coord.get((row, col))

    @property
    def n_long_rows(self) -> int:
        return max(r for r, _ in self.coords.values()) // 2 + 1


def _brick_lattice(rows: int, cols: int, stub: int) -> HeavyHexLattice:
    if rows == 1:
        width, phases = 4 * cols + 1, [0]
    else:
        width = 4 * cols + 3
        phases = [2 if r % 2 == 0 else 0 for r in range(rows)]
    width += stub
    coords: dict[int, tuple[int, int]] = {}
    edges: set[tuple[int, int]] = set()
    q = 0
    long_ids: list[list[int]] = []
    for r in range(rows + 1):
        row_ids = []
        for c in range(width):
            coords[q] = (2 * r, c)
            row_ids.append(q)
            if c > 0:
                edges.add((q - 1, q))
            q += 1
        long_ids.append(row_ids)
        if r < rows:
            for k in range(cols + 1):
                coords[q] = (2 * r + 1, stub + phases[r] + 4 * k)
                q += 1
    for b, (rr, c) in coords.items():
        if rr % 2 == 1:
            top = long_ids[rr // 2][c]
            bot = long_ids[rr // 2 + 1][c]
            edges.add((min(top, b), max(top, b)))
            edges.add((min(bot, b), max(bot, b)))
    return HeavyHexLattice(tuple(range(q)), frozenset(edges), coords)


def build_lattice(rows: int | None = None, cols: int | None = None) -> HeavyHexLattice:
    """Heavy-hex lattice with ``rows`` rows of ``cols`` hexagons.

    Called without arguments this returns the 156-qubit Heron layout, which is
    the 7 x 3 brick lattice with one extra stub column on the left.
    """
    if rows is None and cols is None:
        return heron_lattice()
    if rows is None or cols is None:
        raise LayoutError("rows and cols must be given together")
    if rows < 1 or cols < 1:
        raise LayoutError(f"lattice dimensions must be >= 1, got {rows}x{cols}")
    return _brick_lattice(int(rows), int(cols), stub=0)


def heron_lattice() -> HeavyHexLattice:
    return _brick_lattice(HERON_ROWS, HERON_COLS, stub=1)


@dataclass(frozen=True)
class XCheck:
    id: str
    position: tuple[int, int]
    data: tuple[int, ...]
    syndrome: int
    # (flag qubit, data qubits it couples to, in gate order)
    flags: tuple[tuple[int, tuple[int, ...]], ...]

    @property
    def qubits(self) -> tuple[int, ...]:
        return (self.syndrome,) + tuple(f for f, _ in self.flags)

    @property
    def is_boundary(self) -> bool:
        return len(self.data) < 4


@dataclass(frozen=True)
class ZCheck:
    id: str
    position: tuple[int, int]
    data: tuple[int, int]
    ancilla: int


@dataclass(frozen=True)
class CodePatch:
    kind: str
    distance: int
    anchor: int
    data_grid: tuple[tuple[int, ...], ...]
    x_checks: tuple[XCheck, ...]
    z_checks: tuple[ZCheck, ...]
    logical_x: frozenset[int]
    logical_z: frozenset[int]
    # Z-colored plaquettes as tuples of Z-check ids (bulk: two gauges, edge: one)
    z_stabilizers: tuple[tuple[str, ...], ...] = ()

    @property
    def data_qubits(self) -> tuple[int, ...]:
        return tuple(q for row in self.data_grid for q in row)

    @property
    def qubits(self) -> tuple[int, ...]:
        qs = set(self.data_qubits)
        for c in self.x_checks:
            qs.update(c.qubits)
        for c in self.z_checks:
            qs.add(c.ancilla)
        return tuple(sorted(qs))

    def check(self, cid: str) -> XCheck | ZCheck:
        for c in self.x_checks:
            if c.id == cid:
                return c
        for c in self.z_checks:
            if c.id == cid:
                return c
        raise KeyError(cid)


def _need(lat: HeavyHexLattice, row: int, col: int, what: str) -> int:
    q = lat.at(row, col)
    if q is None:
        raise PlacementError(f"missing qubit for {what} at lattice coordinate ({row}, {col})")
    return q


def _need_edge(lat: HeavyHexLattice, a: int, b: int) -> None:
    if not lat.has_edge(a, b):
        raise PlacementError(f"missing coupling edge {a}-{b}")


def build_patch(kind: str, d: int, anchor: int, lattice: HeavyHexLattice | None = None) -> CodePatch:
    """Place a distance-``d`` patch whose lowest-index qubit is ``anchor``."""
    if kind not in CODE_KINDS:
        raise LayoutError(f"unknown code kind {kind!r}")
    if d < 1 or d % 2 == 0:
        raise LayoutError(f"distance must be odd and >= 1, got {d}")
    lat = heron_lattice() if lattice is None else lattice
    if anchor not in lat.coords:
        raise PlacementError(f"anchor qubit {anchor} is not on the lattice")
    row, col = lat.coords[anchor]
    if row % 2:
        raise PlacementError(f"anchor qubit {anchor} is a bridge qubit, expected a long-row qubit")
    r0 = row // 2
    # bridge columns share a parity across the lattice; data sits on the other
    bridge_cols = {c for (rr, c) in lat.coords.values() if rr % 2}
    bridge_parity = next(iter(bridge_cols)) % 2 if bridge_cols else 1
    c0 = col if col % 2 != bridge_parity else col + 1

    def lr(i: int) -> int:  # long-row coordinate of patch row i
        return 2 * (r0 + i)

    grid = tuple(
        tuple(_need(lat, lr(i), c0 + 2 * j, f"data ({i},{j})") for j in range(d)) for i in range(d)
    )

    z_checks: list[ZCheck] = []
    zid: dict[tuple[int, int], str] = {}
    for i in range(d):
        for j in range(d - 1):
            a = _need(lat, lr(i), c0 + 2 * j + 1, f"Z ancilla ({i},{j})")
            _need_edge(lat, grid[i][j], a)
            _need_edge(lat, grid[i][j + 1], a)
            cid = f"Z{len(z_checks)}"
            zid[(i, j)] = cid
            z_checks.append(ZCheck(cid, (i, j), (grid[i][j], grid[i][j + 1]), a))

    def has_bridge(i: int, j: int) -> bool:
        return lat.at(lr(i) + 1, c0 + 2 * j + 1) is not None

    x_checks: list[XCheck] = []
    z_stabs: list[tuple[str, ...]] = []
    for i in range(d - 1):
        for j in range(-1, d):
            bridge_here = has_bridge(i, j)
            if 0 <= j < d - 1 and not bridge_here:
                z_stabs.append((zid[(i, j)], zid[(i + 1, j)]))
                continue
            if not (0 <= j < d - 1):
                # boundary column: X gauge iff the neighbouring bulk plaquette is Z colored
                if has_bridge(i, 0 if j == -1 else d - 2):
                    continue
            s = _need(lat, lr(i) + 1, c0 + 2 * j + 1, f"X syndrome ({i},{j})")
            ft = _need(lat, lr(i), c0 + 2 * j + 1, f"X flag ({i},{j})")
            fb = _need(lat, lr(i + 1), c0 + 2 * j + 1, f"X flag ({i},{j})")
            _need_edge(lat, s, ft)
            _need_edge(lat, s, fb)
            if 0 <= j < d - 1:
                top = (grid[i][j], grid[i][j + 1])
                bot = (grid[i + 1][j + 1], grid[i + 1][j])  # bottom flags act right-first
                data = (grid[i][j], grid[i][j + 1], grid[i + 1][j], grid[i + 1][j + 1])
            else:
                jj = 0 if j == -1 else d - 1
                top, bot = (grid[i][jj],), (grid[i + 1][jj],)
                data = (grid[i][jj], grid[i + 1][jj])
            for f, ds in ((ft, top), (fb, bot)):
                for q in ds:
                    _need_edge(lat, f, q)
            x_checks.append(XCheck(f"X{len(x_checks)}", (i, j), data, s, ((ft, top), (fb, bot))))

    # half plaquettes on the top and bottom edges
    for j in range(d - 1):
        if has_bridge(0, j):
            z_stabs.append((zid[(0, j)],))
        if has_bridge(d - 2, j):
            z_stabs.append((zid[(d - 1, j)],))

    logical_x = frozenset(grid[0])
    logical_z = frozenset(grid[i][0] for i in range(d))
    patch = CodePatch(
        kind, d, anchor, grid, tuple(x_checks), tuple(z_checks), logical_x, logical_z, tuple(z_stabs)
    )
    if anchor not in patch.qubits:
        raise PlacementError(
            f"anchor {anchor} is not part of the patch placed from it; pick the top-left qubit"
        )
    if min(patch.qubits) != anchor:
        raise PlacementError(
            f"anchor {anchor} is not the lowest-index qubit of its patch (found {min(patch.qubits)})"
        )
    return patch


@dataclass(frozen=True)
class MeasurementSchedule:
    """Sub-steps of one round plus their grouping into measurement layers."""

    kind: str
    steps: tuple[tuple[str, ...], ...]
    # sub-step indices merged into a single gate+measure layer block
    blocks: tuple[tuple[int, ...], ...]

    @property
    def cycle_length(self) -> int:
        return len(self.steps)

    @property
    def layers_per_round(self) -> int:
        return len(self.blocks)


# Selector table for the default schedules.  ("Z", "even") selects the ZZ
# gauges whose column index j is even, i.e. the gauges composing the Z
# plaquettes of even column.  Sub-steps listed together in ``blocks`` share a
# measurement layer.
DEFAULT_SCHEDULES = {
    DYNAMIC_COMPASS: {
        "steps": [("X", "all"), ("Z", "even"), ("X", "all"), ("Z", "odd")],
        "blocks": [[0, 1], [2, 3]],
    },
    HEAVY_HEX: {
        "steps": [("X", "all"), ("Z", "all")],
        "blocks": [[0, 1]],
    },
}


def _select(patch: CodePatch, typ: str, sel) -> tuple[str, ...]:
    if not isinstance(sel, str):
        return tuple(sel)
    if typ == "X":
        if sel != "all":
            raise LayoutError(f"unsupported X selector {sel!r}")
        return tuple(c.id for c in patch.x_checks)
    if sel == "all":
        return tuple(c.id for c in patch.z_checks)
    parity = {"even": 0, "odd": 1}.get(sel)
    if parity is None:
        raise LayoutError(f"unsupported Z selector {sel!r}")
    return tuple(c.id for c in patch.z_checks if c.position[1] % 2 == parity)


def build_schedule(kind: str, patch: CodePatch, table: dict | None = None) -> MeasurementSchedule:
    if kind not in CODE_KINDS:
        raise LayoutError(f"unknown code kind {kind!r}")
    if patch.distance == 1:
        return MeasurementSchedule(kind, (), ())
    spec = DEFAULT_SCHEDULES[kind] if table is None else table
    steps = tuple(_select(patch, typ, sel) for typ, sel in spec["steps"])
    blocks = tuple(tuple(b) for b in spec["blocks"])
    covered = sorted(i for b in blocks for i in b)
    if covered != list(range(len(steps))):
        raise LayoutError("schedule blocks must cover every sub-step exactly once")
    known = {c.id for c in patch.x_checks} | {c.id for c in patch.z_checks}
    for st in steps:
        for cid in st:
            if cid not in known:
                raise LayoutError(f"schedule references unknown check {cid}")
    return MeasurementSchedule(kind, steps, blocks)


def patch_to_json(patch: CodePatch) -> str:
    obj = {
        "kind": patch.kind,
        "distance": patch.distance,
        "anchor": patch.anchor,
        "data_grid": [list(r) for r in patch.data_grid],
        "x_checks": [
            {
                "id": c.id,
                "position": list(c.position),
                "data": list(c.data),
                "syndrome": c.syndrome,
                "flags": [[f, list(ds)] for f, ds in c.flags],
            }
            for c in patch.x_checks
        ],
        "z_checks": [
            {"id": c.id, "position": list(c.position), "data": list(c.data), "ancilla": c.ancilla}
            for c in patch.z_checks
        ],
        "logical_x": sorted(patch.logical_x),
        "logical_z": sorted(patch.logical_z),
        "z_stabilizers": [list(s) for s in patch.z_stabilizers],
    }
    return json.dumps(obj, indent=1)


def patch_from_json(text: str) -> CodePatch:
    o = json.loads(text)
    return CodePatch(
        o["kind"],
        int(o["distance"]),
        int(o["anchor"]),
        tuple(tuple(int(q) for q in r) for r in o["data_grid"]),
        tuple(
            XCheck(
                c["id"],
                tuple(c["position"]),
                tuple(c["data"]),
                int(c["syndrome"]),
                tuple((int(f), tuple(ds)) for f, ds in c["flags"]),
            )
            for c in o["x_checks"]
        ),
        tuple(ZCheck(c["id"], tuple(c["position"]), tuple(c["data"]), int(c["ancilla"])) for c in o["z_checks"]),
        frozenset(o["logical_x"]),
        frozenset(o["logical_z"]),
        tuple(tuple(s) for s in o.get("z_stabilizers", [])),
    )


def schedule_to_json(schedule: MeasurementSchedule) -> str:
    return json.dumps(
        {"kind": schedule.kind, "steps": [list(s) for s in schedule.steps], "blocks": [list(b) for b in schedule.blocks]}
    )


def schedule_from_json(text: str) -> MeasurementSchedule:
    o = json.loads(text)
    return MeasurementSchedule(o["kind"], tuple(tuple(s) for s in o["steps"]), tuple(tuple(b) for b in o["blocks"]))


def lattice_edges_used(patch: CodePatch) -> Iterable[tuple[int, int]]:
    """Every (coupler) pair touched by the patch's gadgets."""
    for c in patch.x_checks:
        for f, ds in c.flags:
            yield (c.syndrome, f)
            for q in ds:
                yield (f, q)
    for c in patch.z_checks:
        for q in c.data:
            yield (q, c.ancilla)
