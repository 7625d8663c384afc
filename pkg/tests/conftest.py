import functools

import numpy as np
import pytest

from compassqec.circuit import build_memory_circuit
from compassqec.detectors import discover_detectors
from compassqec.layout import build_lattice, build_patch, build_schedule


@functools.lru_cache(maxsize=None)
def lattice():
    return build_lattice()


@functools.lru_cache(maxsize=None)
def patch_and_schedule(kind="dynamic-compass", d=3, anchor=46):
    patch = build_patch(kind, d, anchor, lattice())
    return patch, build_schedule(kind, patch)


@functools.lru_cache(maxsize=None)
def memory(kind="dynamic-compass", d=3, basis="Z", state="0", T=2):
    patch, sched = patch_and_schedule(kind, d)
    prog = build_memory_circuit(patch, sched, basis, state, T)
    return prog, discover_detectors(prog)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
