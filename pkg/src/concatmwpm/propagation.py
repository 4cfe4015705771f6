"""Backward Pauli sensitivity sweep over a sliced Clifford circuit.

For every detector and observable (the *targets*) the sweep tracks a Pauli
operator ``S`` such that a Pauli fault ``E`` inserted at the current point
flips the target exactly when ``E`` anticommutes with ``S``.  ``S`` is stored
as two boolean matrices ``x`` and ``z`` of shape ``(n_targets, n_qubits)``.

Walking backwards through a slice:

* ``CX(c, t)`` conjugates ``S``: ``x[t] ^= x[c]`` and ``z[c] ^= z[t]``;
* a Z measurement of ``q`` whose result enters a target toggles ``z[q]``
  (an X fault just before it flips the result) and clears ``x[q]``;
* a reset clears both components (earlier faults are erased).

The same sweep certifies determinism: the noiseless value of a target is
fixed iff ``S`` never anticommutes with a measured or prepared basis.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .circuit import MEASUREMENTS, Circuit


def target_matrix(circuit: Circuit) -> np.ndarray:
    """Boolean ``(n_detectors + n_observables, n_measurements)`` inclusion matrix."""
    m = np.zeros((circuit.num_detectors + circuit.num_observables, circuit.num_measurements), dtype=bool)
    for i, det in enumerate(circuit.detectors):
        m[i, list(det.measurements)] ^= True
    for j, obs in enumerate(circuit.observables):
        m[circuit.num_detectors + j, list(obs)] ^= True
    return m


def measurement_offsets(circuit: Circuit) -> list[list[int]]:
    """First measurement index of each instruction (``-1`` for non-measurements)."""
    out = []
    k = 0
    for sl in circuit.slices:
        row = []
        for ins in sl:
            if ins.name in MEASUREMENTS:
                row.append(k)
                k += len(ins.targets)
            else:
                row.append(-1)
        out.append(row)
    return out


def target_names(circuit: Circuit) -> list[str]:
    return [f"D{i}" for i in range(circuit.num_detectors)] + [f"L{j}" for j in range(circuit.num_observables)]


def backward_sweep(circuit: Circuit, on_slice: Callable | None = None, stop: int = 0) -> list[str]:
    """Walk the circuit from the end down to slice ``stop``.

    ``on_slice(s, x, z)`` is called for ``s = last .. stop`` with the
    sensitivity at the end of slice ``s`` (the point where that slice's noise
    acts), before slice ``s`` is undone.  The arrays are reused; copy them if
    they must outlive the call.

    Returns
    -------
    list of str
        Determinism violations (empty for a well-formed circuit).  Only
        complete when ``stop == 0``.
    """
    M = target_matrix(circuit)
    names = target_names(circuit)
    offsets = measurement_offsets(circuit)
    nt = M.shape[0]
    x = np.zeros((nt, circuit.num_qubits), dtype=bool)
    z = np.zeros((nt, circuit.num_qubits), dtype=bool)
    problems: list[str] = []

    def report(mask, qs, what, s):
        for t, j in zip(*np.nonzero(mask)):
            problems.append(f"{names[t]} anticommutes with the {what} of qubit {qs[j]} in slice {s}")

    for s in range(len(circuit.slices) - 1, stop - 1, -1):
        if on_slice is not None:
            on_slice(s, x, z)
        for ins, off in zip(circuit.slices[s], offsets[s]):
            name = ins.name
            if name == "I" or ins.is_noise:
                continue
            if name == "CX":
                pr = ins.pairs()
                c, t = pr[:, 0], pr[:, 1]
                x[:, t] ^= x[:, c]
                z[:, c] ^= z[:, t]
                continue
            qs = np.asarray(ins.targets, dtype=np.int64)
            z_basis = name in ("RZ", "MZ", "MRZ")
            # the component anticommuting with the measured/prepared basis
            wrong = x if z_basis else z
            right = z if z_basis else x
            if name in ("RZ", "RX", "MRZ", "MRX"):
                if wrong[:, qs].any():
                    report(wrong[:, qs], qs, "preparation", s)
                x[:, qs] = False
                z[:, qs] = False
            if name in MEASUREMENTS:
                if wrong[:, qs].any():
                    report(wrong[:, qs], qs, "measurement", s)
                wrong[:, qs] = False
                right[:, qs] ^= M[:, off : off + len(qs)]
    if stop == 0:
        for t, q in zip(*np.nonzero(x | z)):
            problems.append(f"{names[t]} depends on unprepared qubit {q}")
    return problems
