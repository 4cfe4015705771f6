"""Syndrome-extraction memory circuits for the triangular color code.

Qubit numbering: data qubits ``0 .. n-1`` (lattice vertex ids), then one
Z-check ancilla per face, then one X-check ancilla per face.

A circuit is a sequence of time slices.  Each slice holds gate, reset and
measurement instructions on disjoint qubits, explicit ``I`` instructions on
every other qubit, and (after :func:`apply_noise`) noise instructions that
act at the end of the slice.  Measurement results are numbered in the order
they occur; detectors and the observable are parity groups of them.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from functools import cached_property, lru_cache

import numpy as np

from .lattice import Color, ColorLattice, build_triangular

__all__ = [
    "CnotSchedule",
    "Instruction",
    "Detector",
    "Circuit",
    "ScheduleError",
    "ScheduleReport",
    "OPTIMAL_SCHEDULE",
    "build_memory_circuit",
    "apply_noise",
    "validate_schedule",
    "enumerate_schedules",
    "reduce_by_symmetry",
    "swap_schedule_parts",
    "rotate_schedule",
    "check_determinism",
]

GATES = ("RZ", "RX", "MZ", "MX", "MRZ", "MRX", "CX", "I")
NOISE = ("X_ERROR", "Z_ERROR", "DEPOLARIZE1", "DEPOLARIZE2")
MEASUREMENTS = ("MZ", "MX", "MRZ", "MRX")


class ScheduleError(ValueError):
    """Malformed or unusable CNOT schedule."""


@dataclass(frozen=True, order=True)
class CnotSchedule:
    """Time-slice labels of the twelve CNOTs of one face.

    ``z[k]`` is the slice of the CNOT between the data qubit at hexagon
    position ``k`` and the Z-check ancilla (data is the control), ``x[k]`` the
    slice of the CNOT between the X-check ancilla (control) and that qubit.
    """

    values: tuple[int, ...]

    def __post_init__(self):
        vals = tuple(int(v) for v in self.values)
        object.__setattr__(self, "values", vals)
        if len(vals) != 12:
            raise ScheduleError("a schedule has exactly twelve entries")
        if min(vals) < 1:
            raise ScheduleError("schedule entries must be positive")
        if set(vals) != set(range(1, max(vals) + 1)):
            raise ScheduleError("schedule must use every slice from 1 to its length")

    @classmethod
    def parse(cls, text: str) -> "CnotSchedule":
        """Parse ``"a,b,c,d,e,f;g,h,i,j,k,l"`` (brackets and spaces allowed)."""
        body = text.strip().strip("[]()").replace(" ", "")
        parts = body.split(";")
        if len(parts) != 2:
            raise ScheduleError(f"expected 'a,b,c,d,e,f;g,h,i,j,k,l', got {text!r}")
        try:
            vals = [int(v) for part in parts for v in part.split(",")]
        except ValueError as exc:
            raise ScheduleError(f"non-integer schedule entry in {text!r}") from exc
        if any(len(part.split(",")) != 6 for part in parts):
            raise ScheduleError("each half of a schedule has six entries")
        return cls(tuple(vals))

    @property
    def z(self) -> tuple[int, ...]:
        return self.values[:6]

    @property
    def x(self) -> tuple[int, ...]:
        return self.values[6:]

    @property
    def length(self) -> int:
        return max(self.values)

    def __str__(self) -> str:
        return ",".join(map(str, self.z)) + ";" + ",".join(map(str, self.x))


OPTIMAL_SCHEDULE = CnotSchedule((2, 3, 6, 5, 4, 1, 3, 4, 7, 6, 5, 2))


def swap_schedule_parts(schedule: CnotSchedule) -> CnotSchedule:
    """Exchange the Z and X halves.

    A Z-basis memory run with the swapped schedule gives the X-basis
    failure rate of the original schedule.
    """
    return CnotSchedule(schedule.x + schedule.z)


def rotate_schedule(schedule: CnotSchedule, steps: int = 2) -> CnotSchedule:
    """Relabel hexagon positions ``k -> k - steps`` in both halves.

    ``steps = 2`` is a rotation by 120 degrees, which maps the color
    pattern of the hexagonal lattice onto itself.
    """
    z, x = schedule.z, schedule.x
    return CnotSchedule(tuple(z[(k + steps) % 6] for k in range(6)) + tuple(x[(k + steps) % 6] for k in range(6)))


# -- circuits -----------------------------------------------------------------


@dataclass(frozen=True)
class Instruction:
    """One operation type applied to several qubits.

    ``CX`` and ``DEPOLARIZE2`` targets are flattened (control, target) pairs.
    ``arg`` is the result-flip probability for measurements and the channel
    strength for noise instructions.
    """

    name: str
    targets: tuple[int, ...]
    arg: float = 0.0

    def __post_init__(self):
        if self.name not in GATES + NOISE:
            raise ValueError(f"unknown instruction {self.name!r}")
        if self.name in ("CX", "DEPOLARIZE2") and len(self.targets) % 2:
            raise ValueError(f"{self.name} needs an even number of targets")

    @property
    def is_noise(self) -> bool:
        return self.name in NOISE

    def pairs(self) -> np.ndarray:
        return np.asarray(self.targets, dtype=np.int64).reshape(-1, 2)

    def __str__(self) -> str:
        arg = f"({self.arg:.17g})" if self.arg else ""
        return f"{self.name}{arg} " + " ".join(map(str, self.targets))


@dataclass(frozen=True)
class Detector:
    """Parity of a set of measurement results, attached to a face check."""

    measurements: tuple[int, ...]
    face: int
    pauli: str
    round: int
    color: Color


@dataclass(frozen=True, eq=False)
class Circuit:
    """Immutable time-sliced circuit with detector and observable annotations."""

    num_qubits: int
    slices: tuple[tuple[Instruction, ...], ...]
    detectors: tuple[Detector, ...]
    observables: tuple[tuple[int, ...], ...]
    lattice: ColorLattice | None = field(default=None, repr=False)
    schedule: CnotSchedule | None = None
    rounds: int = 0
    layout: str = "fused"
    noise: float = 0.0

    @cached_property
    def measurement_qubits(self) -> tuple[int, ...]:
        out = []
        for sl in self.slices:
            for ins in sl:
                if ins.name in MEASUREMENTS:
                    out.extend(ins.targets)
        return tuple(out)

    @property
    def num_measurements(self) -> int:
        return len(self.measurement_qubits)

    @property
    def num_detectors(self) -> int:
        return len(self.detectors)

    @property
    def num_observables(self) -> int:
        return len(self.observables)

    def count(self, name: str) -> int:
        """Total number of single-qubit (or pair) applications of ``name``."""
        k = 2 if name in ("CX", "DEPOLARIZE2") else 1
        return sum(len(ins.targets) // k for sl in self.slices for ins in sl if ins.name == name)

    def to_text(self) -> str:
        """Human-readable slice listing."""
        lines = []
        for i, sl in enumerate(self.slices):
            lines.append(f"# slice {i}")
            lines.extend(str(ins) for ins in sl)
        for j, det in enumerate(self.detectors):
            recs = " ".join(f"m{m}" for m in det.measurements)
            lines.append(
                f"DETECTOR D{j} face={det.face} pauli={det.pauli} round={det.round} color={det.color.letter} {recs}"
            )
        for j, obs in enumerate(self.observables):
            lines.append(f"OBSERVABLE L{j} " + " ".join(f"m{m}" for m in obs))
        return "\n".join(lines) + "\n"


def _cnot_slices(lattice: ColorLattice, schedule: CnotSchedule, z_anc: np.ndarray, x_anc: np.ndarray):
    """Flattened CX target lists per schedule slice, plus conflict reports."""
    pos = lattice.face_positions
    slices: list[list[int]] = [[] for _ in range(schedule.length)]
    conflicts: list[str] = []
    for k in range(6):
        faces = np.flatnonzero(pos[:, k] >= 0)
        data = pos[faces, k]
        tz, tx = schedule.z[k] - 1, schedule.x[k] - 1
        for f, q in zip(faces, data):
            slices[tz].extend((int(q), int(z_anc[f])))
            slices[tx].extend((int(x_anc[f]), int(q)))
    for t, tg in enumerate(slices):
        vals, counts = np.unique(tg, return_counts=True)
        for q in vals[counts > 1]:
            conflicts.append(f"qubit {int(q)} is in more than one CNOT in slice {t + 1}")
    return slices, conflicts


def build_memory_circuit(d, T: int, schedule: CnotSchedule | str = OPTIMAL_SCHEDULE, layout: str = "fused") -> Circuit:
    """Noiseless Z-basis memory experiment.

    Parameters
    ----------
    d : int or ColorLattice
        Code distance (or a prebuilt lattice).
    T : int
        Number of syndrome-extraction rounds, at least 1.
    schedule : CnotSchedule or str
    layout : {"separate", "fused"}
        ``"separate"``: data preparation, then per round an ancilla
        preparation slice, the CNOT slices and an ancilla measurement
        slice, then data measurement.  ``"fused"``: data and first ancilla
        preparation share the first slice and each round ends with a
        combined measure-and-reset slice.

    Raises
    ------
    ScheduleError
        If the schedule makes a qubit take part in two CNOTs in one slice.
    """
    lattice = d if isinstance(d, ColorLattice) else build_triangular(int(d))
    if isinstance(schedule, str):
        schedule = CnotSchedule.parse(schedule)
    if int(T) != T or T < 1:
        raise ValueError("T must be a positive integer")
    if layout not in ("separate", "fused"):
        raise ValueError(f"unknown layout {layout!r}")
    T = int(T)
    n, F = lattice.num_vertices, lattice.num_faces
    data = np.arange(n)
    z_anc = n + np.arange(F)
    x_anc = n + F + np.arange(F)
    nq = n + 2 * F
    cx_slices, conflicts = _cnot_slices(lattice, schedule, z_anc, x_anc)
    if conflicts:
        raise ScheduleError("; ".join(conflicts[:5]))

    slices: list[tuple[Instruction, ...]] = []
    meas_count = 0
    mz: dict[tuple[int, int], int] = {}
    mx: dict[tuple[int, int], int] = {}

    def add(ops: list[Instruction]):
        busy = {q for op in ops for q in op.targets}
        idle = tuple(q for q in range(nq) if q not in busy)
        if idle:
            ops = ops + [Instruction("I", idle)]
        slices.append(tuple(ops))

    def measure_ancillas(t: int, reset: bool):
        nonlocal meas_count
        zname, xname = ("MRZ", "MRX") if reset else ("MZ", "MX")
        for f in range(F):
            mz[f, t] = meas_count + f
        for f in range(F):
            mx[f, t] = meas_count + F + f
        meas_count += 2 * F
        return [Instruction(zname, tuple(z_anc)), Instruction(xname, tuple(x_anc))]

    anc_prep = [Instruction("RZ", tuple(z_anc)), Instruction("RX", tuple(x_anc))]
    if layout == "separate":
        add([Instruction("RZ", tuple(data))])
    else:
        add([Instruction("RZ", tuple(data))] + anc_prep)
    for t in range(1, T + 1):
        if layout == "separate":
            add(list(anc_prep))
        for tg in cx_slices:
            add([Instruction("CX", tuple(tg))])
        add(measure_ancillas(t, reset=(layout == "fused" and t < T)))
    data_meas = {int(q): meas_count + i for i, q in enumerate(data)}
    meas_count += n
    add([Instruction("MZ", tuple(data))])

    detectors: list[Detector] = []
    # Detectors are ordered by round; within a round Z before X, faces ascending.
    for t in range(1, T + 2):
        for f in range(F):
            color = lattice.face_colors[f]
            if t == 1:
                recs = (mz[f, 1],)
            elif t <= T:
                recs = (mz[f, t - 1], mz[f, t])
            else:
                recs = (mz[f, T],) + tuple(sorted(data_meas[v] for v in lattice.faces[f]))
            detectors.append(Detector(tuple(sorted(recs)), f, "Z", t, color))
        if 2 <= t <= T:
            for f in range(F):
                detectors.append(Detector((mx[f, t - 1], mx[f, t]), f, "X", t, lattice.face_colors[f]))
    observable = tuple(sorted(data_meas[v] for v in lattice.boundaries[Color.R]))
    return Circuit(
        num_qubits=nq,
        slices=tuple(slices),
        detectors=tuple(detectors),
        observables=(observable,),
        lattice=lattice,
        schedule=schedule,
        rounds=T,
        layout=layout,
    )


def apply_noise(circuit: Circuit, p: float) -> Circuit:
    """Insert the uniform circuit-level noise model with strength ``p``.

    Every measurement result flips with probability ``p``; every
    preparation is followed by a flip of probability ``p``; every idle is
    followed by single-qubit depolarizing noise and every CNOT by two-qubit
    depolarizing noise of strength ``p``.
    """
    p = float(p)
    if not 0 <= p < 0.5:
        raise ValueError("p must lie in [0, 0.5)")
    new_slices = []
    for sl in circuit.slices:
        ops, noise = [], []
        for ins in sl:
            if ins.is_noise:
                continue
            if ins.name in MEASUREMENTS:
                ins = replace(ins, arg=p)
            ops.append(ins)
            if p == 0:
                continue
            if ins.name in ("RZ", "MRZ"):
                noise.append(Instruction("X_ERROR", ins.targets, p))
            elif ins.name in ("RX", "MRX"):
                noise.append(Instruction("Z_ERROR", ins.targets, p))
            elif ins.name == "I":
                noise.append(Instruction("DEPOLARIZE1", ins.targets, p))
            elif ins.name == "CX":
                noise.append(Instruction("DEPOLARIZE2", ins.targets, p))
        new_slices.append(tuple(ops + noise))
    return replace(circuit, slices=tuple(new_slices), noise=p)


# -- determinism --------------------------------------------------------------


def check_determinism(circuit: Circuit) -> list[str]:
    """Detectors or observables whose noiseless value is not fixed.

    Returns a list of diagnostics (empty when every detector and the
    observable are deterministic).
    """
    from .propagation import backward_sweep

    return backward_sweep(circuit)


# -- schedule validation and enumeration -----------------------------------------


@dataclass(frozen=True)
class ScheduleReport:
    valid: bool
    conflicts: tuple[str, ...] = ()
    nondeterministic: tuple[str, ...] = ()

    def __bool__(self) -> bool:
        return self.valid


_REFERENCE_DISTANCE = 7


def validate_schedule(schedule: CnotSchedule | str, d: int = _REFERENCE_DISTANCE, T: int = 2) -> ScheduleReport:
    """Check a schedule on a reference patch.

    Valid means: no qubit takes part in two CNOTs in one slice, and all
    detectors of the noiseless ``T``-round circuit are deterministic
    (so Z- and X-type checks do not disturb each other).  The default
    distance-7 patch contains every bulk and boundary face arrangement.
    """
    if isinstance(schedule, str):
        schedule = CnotSchedule.parse(schedule)
    lattice = _lattice(d)
    n, F = lattice.num_vertices, lattice.num_faces
    _, conflicts = _cnot_slices(lattice, schedule, n + np.arange(F), n + F + np.arange(F))
    if conflicts:
        return ScheduleReport(False, conflicts=tuple(conflicts))
    bad = check_determinism(build_memory_circuit(lattice, T, schedule))
    return ScheduleReport(not bad, nondeterministic=tuple(bad))


@lru_cache(maxsize=None)
def _lattice(d: int) -> ColorLattice:
    return build_triangular(d)


@lru_cache(maxsize=None)
def _overlap_patterns(d: int):
    """Hexagon-position patterns realised on a patch.

    Returns the position sets seen by a single data qubit and, for every
    ordered pair of faces sharing qubits, the list of (position in first,
    position in second) for the shared qubits.
    """
    lattice = _lattice(d)
    pos = lattice.face_positions
    where = [{int(v): k for k, v in enumerate(row) if v >= 0} for row in pos]
    qubit_sets = set()
    for v in range(lattice.num_vertices):
        qubit_sets.add(tuple(sorted(where[f][v] for f in lattice.vertex_faces[v])))
    pairs = set()
    for a in range(lattice.num_faces):
        for b in range(lattice.num_faces):
            shared = where[a].keys() & where[b].keys()
            if shared:
                pairs.add(tuple(sorted((where[a][q], where[b][q]) for q in shared)))
    return sorted(qubit_sets), sorted(pairs)


def _candidates(length: int, d: int):
    """Schedules passing the per-qubit slot and commutation-parity screens.

    Both screens are necessary conditions for validity: a data qubit must
    see distinct slots for all of its CNOTs, and a Z-check ancilla must pick
    up an even number of X-ancilla kicks from every overlapping X check.
    """
    perms = np.array(list(itertools.permutations(range(1, length + 1), 6)), dtype=np.int8)
    if len(perms) == 0:
        return []
    qubit_sets, pairs = _overlap_patterns(d)
    out = []
    X = perms
    for Z in perms:
        ok = np.ones(len(X), dtype=bool)
        for qs in qubit_sets:
            qs = list(qs)
            vals = np.concatenate([np.broadcast_to(Z[qs], (len(X), len(qs))), X[:, qs]], axis=1)
            ok &= (np.diff(np.sort(vals, axis=1), axis=1) != 0).all(axis=1)
        for pat in pairs:
            cnt = np.zeros(len(X), dtype=np.int64)
            for pa, pb in pat:
                cnt += X[:, pb] < Z[pa]
            ok &= cnt % 2 == 0
        used = np.concatenate([np.broadcast_to(Z, (len(X), 6)), X], axis=1)
        for t in range(1, length + 1):
            ok &= (used == t).any(axis=1)
        out.extend(tuple(int(v) for v in Z) + tuple(int(v) for v in x) for x in X[ok])
    return out


def enumerate_schedules(length: int = 7, d: int = _REFERENCE_DISTANCE, confirm: bool = True) -> list[CnotSchedule]:
    """All valid schedules of exactly ``length`` slices, sorted.

    Z and X halves each use distinct slots (a check ancilla takes part in
    one CNOT per slice), which is enforced by enumerating permutations.
    Candidates that pass the fast screens are confirmed with
    :func:`validate_schedule` when ``confirm`` is true.
    """
    if length < 1:
        raise ValueError("length must be positive")
    found = sorted(CnotSchedule(v) for v in _candidates(length, d))
    if confirm:
        found = [s for s in found if validate_schedule(s, d=d)]
    return found


def reduce_by_symmetry(schedules) -> list[CnotSchedule]:
    """One representative per orbit of the 120-degree rotation group.

    The representative is the smallest schedule (lexicographic order) in its
    orbit; the output is sorted.
    """
    reps = set()
    for s in schedules:
        orbit = [s, rotate_schedule(s, 2), rotate_schedule(s, 4)]
        reps.add(min(orbit))
    return sorted(reps)
