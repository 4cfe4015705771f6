"""Small dense GF(2) linear-algebra helpers."""

from __future__ import annotations

import numpy as np


def row_reduce(matrix) -> tuple[np.ndarray, list[int]]:
    """Reduced row-echelon form over GF(2).

    Returns the reduced matrix (zero rows dropped) and its pivot columns.
    """
    a = np.array(matrix, dtype=np.uint8) & 1
    if a.ndim != 2:
        raise ValueError("expected a 2D matrix")
    pivots: list[int] = []
    r = 0
    for col in range(a.shape[1]):
        if r == a.shape[0]:
            break
        nz = np.flatnonzero(a[r:, col])
        if nz.size == 0:
            continue
        p = r + nz[0]
        if p != r:
            a[[r, p]] = a[[p, r]]
        hits = np.flatnonzero(a[:, col])
        hits = hits[hits != r]
        a[hits] ^= a[r]
        pivots.append(col)
        r += 1
    return a[:r], pivots


def rank(matrix) -> int:
    return len(row_reduce(matrix)[1])


class RowSpace:
    """Membership tests against the row space of a fixed matrix."""

    def __init__(self, matrix):
        self.basis, self.pivots = row_reduce(matrix)

    def reduce(self, vectors) -> np.ndarray:
        """Remainder of each row of ``vectors`` after eliminating the basis."""
        v = np.array(vectors, dtype=np.uint8) & 1
        single = v.ndim == 1
        v = np.atleast_2d(v)
        for row, col in zip(self.basis, self.pivots):
            hit = v[:, col].astype(bool)
            v[hit] ^= row
        return v[0] if single else v

    def contains(self, vectors) -> np.ndarray | bool:
        rem = self.reduce(vectors)
        if rem.ndim == 1:
            return not rem.any()
        return ~rem.any(axis=1)
