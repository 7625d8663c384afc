import json

import pytest

from compassqec.layout import (
    CODE_KINDS,
    LayoutError,
    PlacementError,
    build_lattice,
    build_patch,
    build_schedule,
    patch_from_json,
    patch_to_json,
    schedule_from_json,
    schedule_to_json,
)

from conftest import lattice, patch_and_schedule


def test_default_device_has_156_qubits():
    assert lattice().num_qubits == 156


def test_single_cell_is_one_heavy_hexagon():
    lat = build_lattice(1, 1)
    assert lat.num_qubits == 12
    assert all(deg == 2 for deg in lat.degree.values())


@pytest.mark.parametrize("shape", [(None, None), (1, 1), (2, 3), (4, 2)])
def test_degree_at_most_three_and_symmetric(shape):
    lat = build_lattice(*shape)
    assert max(lat.degree.values()) <= 3
    for a, b in lat.edges:
        assert a != b
        assert lat.has_edge(a, b) and lat.has_edge(b, a)
        assert b in lat.neighbors(a) and a in lat.neighbors(b)


@pytest.mark.parametrize("shape", [(0, 1), (1, 0), (-2, 3)])
def test_bad_dimensions(shape):
    with pytest.raises(LayoutError):
        build_lattice(*shape)


@pytest.mark.parametrize("kind", CODE_KINDS)
def test_distance_one_is_bare_qubit(kind):
    patch, sched = patch_and_schedule(kind, 1)
    assert len(patch.data_qubits) == 1
    assert patch.x_checks == () and patch.z_checks == ()
    assert sched.steps == ()


@pytest.mark.parametrize("kind", CODE_KINDS)
@pytest.mark.parametrize("d", [3, 5])
def test_patch_invariants(kind, d):
    lat = lattice()
    patch, _ = patch_and_schedule(kind, d)
    assert len(patch.data_qubits) == d * d
    data = set(patch.data_qubits)
    for xc in patch.x_checks:
        assert len(xc.data) <= 4 and set(xc.data) <= data
        if not xc.is_boundary:
            assert len(xc.data) == 4
        for flag, touched in xc.flags:
            assert lat.has_edge(xc.syndrome, flag)
            for q in touched:
                assert lat.has_edge(flag, q)
    for zc in patch.z_checks:
        assert len(zc.data) == 2
        for q in zc.data:
            assert lat.has_edge(zc.ancilla, q)
    assert set(patch.qubits) <= set(lat.qubits)
    assert len(patch.logical_x & patch.logical_z) % 2 == 1


@pytest.mark.parametrize("kind", CODE_KINDS)
@pytest.mark.parametrize("d", [3, 5])
def test_stabilisers_commute_with_checks_and_logicals(kind, d):
    patch, _ = patch_and_schedule(kind, d)
    z_stabs = [
        set.symmetric_difference(*[set(patch.check(c).data) for c in group]) if len(group) > 1
        else set(patch.check(group[0]).data)
        for group in patch.z_stabilizers
    ]
    for s in z_stabs:
        for xc in patch.x_checks:
            assert len(s & set(xc.data)) % 2 == 0
        assert len(s & patch.logical_x) % 2 == 0
    for xc in patch.x_checks:
        assert len(set(xc.data) & patch.logical_z) % 2 == 0


@pytest.mark.parametrize("d", [1, 3, 5])
def test_kinds_share_footprint(d):
    a, _ = patch_and_schedule("dynamic-compass", d)
    b, _ = patch_and_schedule("heavy-hex", d)
    assert set(a.data_qubits) == set(b.data_qubits)
    assert set(a.qubits) == set(b.qubits)


def test_alternative_anchor():
    a = build_patch("dynamic-compass", 5, 46, lattice())
    b = build_patch("dynamic-compass", 5, 65, lattice())
    assert set(a.qubits) != set(b.qubits)
    assert len(a.qubits) == len(b.qubits)


def test_patch_outside_lattice():
    with pytest.raises(PlacementError, match="missing"):
        build_patch("dynamic-compass", 5, 0, build_lattice(2, 2))


@pytest.mark.parametrize("d", [0, 2, 4, -1])
def test_even_distance_rejected(d):
    with pytest.raises(LayoutError):
        build_patch("dynamic-compass", d, 46, lattice())


def test_unknown_kind():
    patch, _ = patch_and_schedule()
    with pytest.raises(LayoutError):
        build_patch("surface", 3, 46, lattice())
    with pytest.raises(LayoutError):
        build_schedule("surface", patch)


@pytest.mark.parametrize("d", [3, 5])
def test_dynamic_schedule_structure(d):
    patch, sched = patch_and_schedule("dynamic-compass", d)
    xs = {c.id for c in patch.x_checks}
    zs = {c.id for c in patch.z_checks}
    assert len(sched.steps) == 4
    assert set(sched.steps[0]) == xs and set(sched.steps[2]) == xs
    z2, z4 = set(sched.steps[1]), set(sched.steps[3])
    assert z2.isdisjoint(z4) and z2 | z4 == zs
    assert sched.layers_per_round == 2


def test_static_schedule_measures_everything_each_round():
    patch, sched = patch_and_schedule("heavy-hex", 3)
    measured = set().union(*map(set, sched.steps))
    assert measured == {c.id for c in patch.x_checks} | {c.id for c in patch.z_checks}
    assert sched.layers_per_round == 1


@pytest.mark.parametrize("kind", CODE_KINDS)
def test_json_round_trip(kind):
    patch, sched = patch_and_schedule(kind, 5)
    assert patch_from_json(patch_to_json(patch)) == patch
    assert schedule_from_json(schedule_to_json(sched)) == sched
    json.loads(patch_to_json(patch))
