"""Stabilizer tableau with symbolic (affine GF(2)) signs.

Every random measurement or reset introduces a fresh boolean variable; signs
and outcomes are affine functions of these variables stored as Python ints
(bit 0 is the constant term, bit ``k`` the ``k``-th variable).  Setting every
variable to zero yields one valid noiseless measurement record, the
*reference sample*.  The variable part of each outcome tells which outcomes
are random and how they are correlated.
"""

from __future__ import annotations

import numpy as np

from .circuit import CX, H, M, PREP_X, PREP_Z, R, CircuitProgram

__all__ = ["AffineTableau", "simulate_affine", "reference_sample"]


class AffineTableau:
    def __init__(self, n: int):
        self.n = n
        self.x = np.zeros((2 * n, n), dtype=np.uint8)
        self.z = np.zeros((2 * n, n), dtype=np.uint8)
        for i in range(n):
            self.x[i, i] = 1
            self.z[n + i, i] = 1
        self.r = [0] * (2 * n)
        self.nvars = 0

    def _new_var(self) -> int:
        self.nvars += 1
        return 1 << self.nvars

    def h(self, q: int) -> None:
        flip = np.nonzero(self.x[:, q] & self.z[:, q])[0]
        for i in flip:
            self.r[i] ^= 1
        self.x[:, q], self.z[:, q] = self.z[:, q].copy(), self.x[:, q].copy()

    def cx(self, c: int, t: int) -> None:
        x, z = self.x, self.z
        flip = np.nonzero(x[:, c] & z[:, t] & (x[:, t] ^ z[:, c] ^ 1))[0]
        for i in flip:
            self.r[i] ^= 1
        x[:, t] ^= x[:, c]
        z[:, c] ^= z[:, t]

    def pauli_x(self, q: int, sign: int) -> None:
        """Apply X on ``q`` conditioned on the affine bit ``sign``."""
        for i in np.nonzero(self.z[:, q])[0]:
            self.r[i] ^= sign

    def pauli_z(self, q: int, sign: int) -> None:
        for i in np.nonzero(self.x[:, q])[0]:
            self.r[i] ^= sign

    @staticmethod
    def _g_sum(x1, z1, x2, z2) -> int:
        # exponent of i picked up when multiplying Pauli rows, summed over qubits
        x1 = x1.astype(np.int64)
        z1 = z1.astype(np.int64)
        x2 = x2.astype(np.int64)
        z2 = z2.astype(np.int64)
        g = np.where(
            (x1 == 1) & (z1 == 1),
            z2 - x2,
            np.where((x1 == 1) & (z1 == 0), z2 * (2 * x2 - 1), np.where((x1 == 0) & (z1 == 1), x2 * (1 - 2 * z2), 0)),
        )
        return int(g.sum(axis=-1)) if g.ndim == 1 else g.sum(axis=-1)

    def _rowmul(self, hx, hz, hr, i):
        """Left-multiply row (hx, hz, hr) by tableau row i, returning the product."""
        s = self._g_sum(self.x[i], self.z[i], hx, hz) % 4
        if s not in (0, 2):
            raise AssertionError("non-Hermitian row product")
        return hx ^ self.x[i], hz ^ self.z[i], hr ^ self.r[i] ^ (s >> 1)

    def measure(self, q: int) -> int:
        n = self.n
        stab_hits = np.nonzero(self.x[n:, q])[0]
        if len(stab_hits):
            p = n + int(stab_hits[0])
            for i in np.nonzero(self.x[:, q])[0]:
                if i != p:
                    self.x[i], self.z[i], self.r[i] = self._rowmul(self.x[i], self.z[i], self.r[i], p)
            self.x[p - n], self.z[p - n], self.r[p - n] = self.x[p].copy(), self.z[p].copy(), self.r[p]
            self.x[p] = 0
            self.z[p] = 0
            self.z[p, q] = 1
            v = self._new_var()
            self.r[p] = v
            return v
        hx = np.zeros(n, dtype=np.uint8)
        hz = np.zeros(n, dtype=np.uint8)
        hr = 0
        for i in np.nonzero(self.x[:n, q])[0]:
            hx, hz, hr = self._rowmul(hx, hz, hr, n + i)
        return hr

    def reset(self, q: int) -> None:
        self.pauli_x(q, self.measure(q))


def simulate_affine(program: CircuitProgram) -> tuple[list[int], int]:
    """Affine outcome of every measurement, plus the number of variables."""
    qubits = program.qubits
    idx = {q: k for k, q in enumerate(qubits)}
    tab = AffineTableau(len(qubits))
    out: list[int] = [0] * program.num_measurements
    for layer in program.layers:
        for ins in layer:
            qs = [idx[q] for q in ins.qubits]
            if ins.op == CX:
                tab.cx(*qs)
            elif ins.op == H:
                tab.h(qs[0])
            elif ins.op == M:
                out[ins.meas] = tab.measure(qs[0])
            elif ins.op == R:
                tab.reset(qs[0])
            elif ins.op == PREP_Z:
                tab.reset(qs[0])
                if ins.value:
                    tab.pauli_x(qs[0], 1)
            elif ins.op == PREP_X:
                tab.reset(qs[0])
                tab.h(qs[0])
                if ins.value:
                    tab.pauli_z(qs[0], 1)
    return out, tab.nvars


def reference_sample(program: CircuitProgram) -> np.ndarray:
    affine, _ = simulate_affine(program)
    return np.array([a & 1 for a in affine], dtype=np.uint8)
