import pytest

from compassqec.circuit import (
    CX,
    LONG,
    SHORT,
    CircuitError,
    CircuitProgram,
    Instruction,
    M,
    build_check_gadget,
    build_memory_circuit,
    program_from_text,
    program_to_text,
)
from compassqec.layout import CODE_KINDS

from conftest import lattice, memory, patch_and_schedule


def _count(layers, op):
    return sum(ins.op == op for layer in layers for ins in layer)


def test_z_gadget_census():
    patch, _ = patch_and_schedule()
    g = build_check_gadget(patch.z_checks[0])
    assert _count(g, CX) == 2
    assert _count(g, M) == 1


def test_bulk_x_gadget_census():
    patch, _ = patch_and_schedule("dynamic-compass", 5)
    bulk = [c for c in patch.x_checks if not c.is_boundary]
    assert bulk
    for c in bulk:
        g = build_check_gadget(c, "X")
        assert _count(g, CX) == 8
        assert _count(g, M) == 3


def test_boundary_x_gadget_bridges_each_data_once():
    # weight-2 boundary checks pair data in adjacent long rows, so each side
    # of the bridge touches one data qubit: s->f, f->d, s->f per side
    patch, _ = patch_and_schedule("dynamic-compass", 5)
    boundary = [c for c in patch.x_checks if len(c.data) == 2]
    assert len(boundary) == 4
    for c in boundary:
        assert all(len(touched) == 1 for _, touched in c.flags)
        g = build_check_gadget(c)
        assert _count(g, CX) == 6
        assert _count(g, M) == 3


def test_gadget_kind_mismatch():
    patch, _ = patch_and_schedule()
    with pytest.raises(CircuitError):
        build_check_gadget(patch.z_checks[0], "X")
    with pytest.raises(CircuitError):
        build_check_gadget(patch.x_checks[0], "Z")


@pytest.mark.parametrize("kind", CODE_KINDS)
@pytest.mark.parametrize("basis,state", [("Z", "0"), ("X", "-")])
def test_t_zero_has_only_final_readout(kind, basis, state):
    prog, _ = memory(kind, 3, basis, state, 0)
    ms = list(prog.measurements())
    assert len(ms) == 9
    assert all(ins.pulse == LONG for ins in ms)
    assert len(prog.measurement_layers()) == 1


def test_one_round_census_matches_gadgets():
    patch, sched = patch_and_schedule("dynamic-compass", 5)
    prog, _ = memory("dynamic-compass", 5, "Z", "0", 1)
    expected = 0
    for block in sched.blocks:
        measured = set()
        for si in block:
            for cid in sched.steps[si]:
                g = build_check_gadget(patch.check(cid))
                measured |= {ins.qubits[0] for ins in g[-2] if ins.op == M}
        expected += len(measured)
    mid = [ins for ins in prog.measurements() if ins.pulse == SHORT]
    assert len(mid) == expected
    assert len(prog.measurement_layers()) == 3  # two per round plus the final readout


@pytest.mark.parametrize("kind", CODE_KINDS)
@pytest.mark.parametrize("d", [1, 3, 5])
@pytest.mark.parametrize("T", [0, 1, 3])
def test_program_invariants(kind, d, T):
    prog, _ = memory(kind, d, "Z", "1", T)
    lat = lattice()
    final = set(ins.meas for ins in prog.layers[-1] if ins.op == M)
    last = -1
    for layer in prog.layers:
        qs = [q for ins in layer for q in ins.qubits]
        assert len(qs) == len(set(qs))
        for ins in layer:
            if ins.op == CX:
                assert lat.has_edge(*ins.qubits)
            if ins.op == M:
                assert ins.meas == last + 1
                last = ins.meas
                assert ins.pulse == (LONG if ins.meas in final else SHORT)
    assert prog.num_measurements == last + 1
    per_round = patch_and_schedule(kind, d)[1].layers_per_round
    assert len(prog.measurement_layers()) == 1 + per_round * T


def test_dynamic_round_has_two_measurement_layers():
    one, _ = memory("dynamic-compass", 3, "Z", "0", 1)
    two, _ = memory("dynamic-compass", 3, "Z", "0", 2)
    assert len(two.measurement_layers()) - len(one.measurement_layers()) == 2


@pytest.mark.parametrize("basis,state", [("Z", "+"), ("Z", "-"), ("X", "0"), ("X", "1"), ("Y", "0")])
def test_basis_state_mismatch(basis, state):
    patch, sched = patch_and_schedule()
    with pytest.raises(CircuitError):
        build_memory_circuit(patch, sched, basis, state, 1)


def test_negative_rounds():
    patch, sched = patch_and_schedule()
    with pytest.raises(CircuitError):
        build_memory_circuit(patch, sched, "Z", "0", -1)


@pytest.mark.parametrize("kind", CODE_KINDS)
@pytest.mark.parametrize("basis,state", [("Z", "1"), ("X", "+")])
def test_text_round_trip(kind, basis, state):
    prog, _ = memory(kind, 3, basis, state, 2)
    text = program_to_text(prog)
    back = program_from_text(text)
    assert back.layers == prog.layers
    assert back.observables == prog.observables
    assert back.observable_values == prog.observable_values
    assert program_to_text(back) == text
    assert back.digest() == prog.digest()
    assert program_from_text("# comment line\n" + text).layers == prog.layers


def test_overlapping_layer_rejected():
    with pytest.raises(CircuitError):
        CircuitProgram(((Instruction(CX, (1, 2)), Instruction(M, (2,), 0, SHORT)),))


def test_out_of_order_measurements_rejected():
    with pytest.raises(CircuitError):
        CircuitProgram(((Instruction(M, (1,), 1, SHORT),), (Instruction(M, (2,), 0, SHORT),)))
