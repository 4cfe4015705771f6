"""Detector error models: extraction, compression, per-color decomposition, text I/O.

A detector error model (DEM) lists independent error mechanisms
``(q, detectors, observables)``.  Mechanisms are extracted from a noisy
:class:`~concatmwpm.circuit.Circuit` by backward Pauli propagation, with each
depolarizing channel split into independent single-Pauli channels.

For the concatenated decoder each DEM is split per color ``c`` into

* a *restricted* DEM over the detectors not of color ``c`` (observables
  dropped), one virtual detector per mechanism, and
* an *only* DEM over ``c`` detectors and those virtual detectors.

Only edge-like mechanisms (at most two detectors) survive the split.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Union

import numpy as np
import scipy.sparse as sp

from .circuit import MEASUREMENTS, Circuit
from .lattice import Color
from .matching import MatchGraph, weight_from_probability
from .propagation import backward_sweep, measurement_offsets, target_matrix

__all__ = [
    "ErrorMechanism",
    "DetectorInfo",
    "VirtualDetector",
    "DetectorErrorModel",
    "DecomposedDEM",
    "q1",
    "q2",
    "xor_merge",
    "propagate_fault",
    "measurement_flip",
    "extract_dem",
    "compress",
    "separate_pauli_types",
    "decompose",
    "to_match_graph",
    "parse_dem",
    "serialize_dem",
]


def q1(p):
    """Per-Pauli probability of the three-channel split of single-qubit depolarizing noise."""
    return (1 - np.sqrt(1 - 4 * np.asarray(p, dtype=float) / 3)) / 2


def q2(p):
    """Per-Pauli probability of the fifteen-channel split of two-qubit depolarizing noise."""
    return (1 - (1 - 16 * np.asarray(p, dtype=float) / 15) ** (1 / 8)) / 2


def xor_merge(qa: float, qb: float) -> float:
    """Probability that exactly one of two independent events fires."""
    return qa + qb - 2 * qa * qb


@dataclass(frozen=True, order=True)
class ErrorMechanism:
    q: float
    detectors: tuple[int, ...]
    observables: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "detectors", tuple(sorted(int(d) for d in self.detectors)))
        object.__setattr__(self, "observables", tuple(sorted(int(o) for o in self.observables)))
        if not 0 < self.q <= 0.5:
            raise ValueError(f"mechanism probability {self.q} outside (0, 0.5]")
        if len(set(self.detectors)) != len(self.detectors) or len(set(self.observables)) != len(self.observables):
            raise ValueError("repeated target in a mechanism")

    @property
    def key(self) -> tuple[tuple[int, ...], tuple[int, ...]]:
        return self.detectors, self.observables


@dataclass(frozen=True)
class DetectorInfo:
    face: int
    pauli: str
    round: int
    color: Color


@dataclass(frozen=True)
class VirtualDetector:
    """Stands for restricted-DEM mechanism ``source`` of color ``color``."""

    source: int
    color: Color


Metadata = Union[DetectorInfo, VirtualDetector]


@dataclass(frozen=True, eq=False)
class DetectorErrorModel:
    mechanisms: tuple[ErrorMechanism, ...]
    detectors: tuple[Metadata, ...]
    observable_paulis: tuple[str, ...] = ("Z",)

    def __post_init__(self):
        n = len(self.detectors)
        for m in self.mechanisms:
            if m.detectors and m.detectors[-1] >= n:
                raise ValueError(f"mechanism refers to detector {m.detectors[-1]} >= {n}")
            if m.observables and m.observables[-1] >= len(self.observable_paulis):
                raise ValueError("mechanism refers to an unknown observable")

    @property
    def num_detectors(self) -> int:
        return len(self.detectors)

    @property
    def num_observables(self) -> int:
        return len(self.observable_paulis)

    def __len__(self) -> int:
        return len(self.mechanisms)

    def __eq__(self, other) -> bool:
        if not isinstance(other, DetectorErrorModel):
            return NotImplemented
        return (
            self.mechanisms == other.mechanisms
            and self.detectors == other.detectors
            and self.observable_paulis == other.observable_paulis
        )

    __hash__ = object.__hash__

    @cached_property
    def probabilities(self) -> np.ndarray:
        return np.array([m.q for m in self.mechanisms], dtype=float)

    @cached_property
    def detector_matrix(self) -> sp.csr_matrix:
        """Sparse ``(n_mechanisms, n_detectors)`` incidence (uint8)."""
        return _incidence([m.detectors for m in self.mechanisms], self.num_detectors)

    @cached_property
    def observable_matrix(self) -> sp.csr_matrix:
        return _incidence([m.observables for m in self.mechanisms], self.num_observables)

    def detector_colors(self) -> np.ndarray:
        return np.array([int(d.color) for d in self.detectors], dtype=np.int64)

    def detector_paulis(self) -> np.ndarray:
        return np.array([getattr(d, "pauli", "V") for d in self.detectors])


def _incidence(rows, ncols) -> sp.csr_matrix:
    indptr = np.zeros(len(rows) + 1, dtype=np.int64)
    indptr[1:] = np.cumsum([len(r) for r in rows])
    indices = np.fromiter((i for r in rows for i in r), dtype=np.int64, count=int(indptr[-1]))
    data = np.ones(len(indices), dtype=np.uint8)
    return sp.csr_matrix((data, indices, indptr), shape=(len(rows), ncols))


# -- fault propagation ------------------------------------------------------------

_PAULI_BITS = {"X": (True, False), "Y": (True, True), "Z": (False, True)}


def _split_targets(circuit: Circuit, flipped) -> tuple[frozenset[int], frozenset[int]]:
    nd = circuit.num_detectors
    dets = frozenset(int(t) for t in flipped if t < nd)
    obs = frozenset(int(t) - nd for t in flipped if t >= nd)
    return dets, obs


def propagate_fault(circuit: Circuit, location: int, pauli: Mapping[int, str]):
    """Detectors and observables flipped by a Pauli fault.

    Parameters
    ----------
    location : int
        Slice index; the fault acts right after that slice's operations.
    pauli : mapping qubit -> "X" | "Y" | "Z"

    Returns
    -------
    (frozenset, frozenset)
        Flipped detector ids and observable ids.
    """
    if not 0 <= location < len(circuit.slices):
        raise IndexError(f"slice {location} out of range")
    result = {}

    def grab(s, x, z):
        if s == location:
            flip = np.zeros(x.shape[0], dtype=bool)
            for q, P in pauli.items():
                if not 0 <= q < circuit.num_qubits:
                    raise IndexError(f"qubit {q} out of range")
                has_x, has_z = _PAULI_BITS[P.upper()]
                if has_x:
                    flip ^= z[:, q]
                if has_z:
                    flip ^= x[:, q]
            result["flip"] = np.flatnonzero(flip)

    backward_sweep(circuit, grab, stop=location)
    return _split_targets(circuit, result["flip"])


def measurement_flip(circuit: Circuit, index: int):
    """Detectors and observables containing measurement result ``index``."""
    if not 0 <= index < circuit.num_measurements:
        raise IndexError(f"measurement {index} out of range")
    return _split_targets(circuit, np.flatnonzero(target_matrix(circuit)[:, index]))


# -- extraction ---------------------------------------------------------------------

# Two-qubit Pauli components in the fixed order IX, IY, ..., ZZ (first factor on control).
_TWO_QUBIT_PAULIS = [(a, b) for a in "IXYZ" for b in "IXYZ" if (a, b) != ("I", "I")]


class _Accumulator:
    """Merges flip rows with identical targets using the XOR rule (in log space)."""

    def __init__(self, width: int):
        self.width = width
        self.log1m2q: dict[bytes, float] = {}

    def add(self, rows: np.ndarray, q):
        if rows.size == 0:
            return
        q = np.broadcast_to(np.asarray(q, dtype=float), (rows.shape[0],))
        keep = rows.any(axis=1) & (q > 0)
        rows, q = rows[keep], q[keep]
        if not len(rows):
            return
        packed = np.packbits(rows, axis=1)
        view = np.ascontiguousarray(packed).view(np.dtype((np.void, packed.shape[1]))).ravel()
        uniq, inv = np.unique(view, return_inverse=True)
        sums = np.zeros(len(uniq))
        np.add.at(sums, inv.ravel(), np.log1p(-2 * q))
        for key, val in zip(uniq, sums):
            kb = key.tobytes()
            self.log1m2q[kb] = self.log1m2q.get(kb, 0.0) + val

    def items(self):
        for kb, val in self.log1m2q.items():
            bits = np.unpackbits(np.frombuffer(kb, dtype=np.uint8))[: self.width]
            q = -math.expm1(val) / 2 if math.isfinite(val) else 0.5
            yield q, np.flatnonzero(bits)


def _flip(x, z, qs, P):
    has_x, has_z = _PAULI_BITS[P]
    out = np.zeros((len(qs), x.shape[0]), dtype=bool)
    if has_x:
        out ^= z[:, qs].T
    if has_z:
        out ^= x[:, qs].T
    return out


def extract_dem(circuit: Circuit) -> DetectorErrorModel:
    """Detector error model of a noisy circuit.

    Mechanisms with identical targets are merged and mechanisms that flip
    nothing are dropped.  The result is sorted by targets.
    """
    M = target_matrix(circuit)
    acc = _Accumulator(M.shape[0])
    offsets = measurement_offsets(circuit)

    def collect(s, x, z):
        for ins, off in zip(circuit.slices[s], offsets[s]):
            if ins.name in MEASUREMENTS and ins.arg > 0:
                acc.add(M[:, off : off + len(ins.targets)].T, ins.arg)
            if not ins.is_noise or ins.arg <= 0:
                continue
            if ins.name == "X_ERROR":
                acc.add(_flip(x, z, list(ins.targets), "X"), ins.arg)
            elif ins.name == "Z_ERROR":
                acc.add(_flip(x, z, list(ins.targets), "Z"), ins.arg)
            elif ins.name == "DEPOLARIZE1":
                qs = list(ins.targets)
                for P in "XYZ":
                    acc.add(_flip(x, z, qs, P), q1(ins.arg))
            elif ins.name == "DEPOLARIZE2":
                pr = ins.pairs()
                a, b = list(pr[:, 0]), list(pr[:, 1])
                zero = np.zeros((len(a), x.shape[0]), dtype=bool)
                for Pa, Pb in _TWO_QUBIT_PAULIS:
                    fa = zero if Pa == "I" else _flip(x, z, a, Pa)
                    fb = zero if Pb == "I" else _flip(x, z, b, Pb)
                    acc.add(fa ^ fb, q2(ins.arg))

    problems = backward_sweep(circuit, collect)
    if problems:
        raise ValueError("circuit has non-deterministic detectors: " + problems[0])
    nd = circuit.num_detectors
    mechs = []
    for q, targets in acc.items():
        if q <= 0:
            continue
        mechs.append(ErrorMechanism(q, targets[targets < nd], targets[targets >= nd] - nd))
    mechs.sort(key=lambda m: m.key)
    meta = tuple(DetectorInfo(d.face, d.pauli, d.round, d.color) for d in circuit.detectors)
    return DetectorErrorModel(tuple(mechs), meta, ("Z",) * circuit.num_observables)


# -- Algorithm: compression and per-color decomposition -------------------------------


def _merged(mechanisms) -> list[ErrorMechanism]:
    groups: dict[tuple, float] = {}
    for m in mechanisms:
        k = m.key
        groups[k] = xor_merge(groups[k], m.q) if k in groups else m.q
    return [ErrorMechanism(q, *k) for k, q in sorted(groups.items()) if q > 0]


def compress(dem: DetectorErrorModel) -> DetectorErrorModel:
    """Merge mechanisms with identical targets; output sorted by targets."""
    return DetectorErrorModel(tuple(_merged(dem.mechanisms)), dem.detectors, dem.observable_paulis)


def separate_pauli_types(dem: DetectorErrorModel) -> DetectorErrorModel:
    """Split each mechanism into its Z-type and X-type parts, then compress.

    An observable joins the part of its own Pauli type.  Parts without
    detectors are discarded.
    """
    paulis = dem.detector_paulis()
    out = []
    for m in dem.mechanisms:
        for P in ("Z", "X"):
            dets = [d for d in m.detectors if paulis[d] == P]
            if dets:
                obs = [o for o in m.observables if dem.observable_paulis[o] == P]
                out.append(ErrorMechanism(m.q, dets, obs))
    return DetectorErrorModel(tuple(_merged(out)), dem.detectors, dem.observable_paulis)


@dataclass(frozen=True, eq=False)
class DecomposedDEM:
    """Result of splitting a DEM for one color.

    ``virtual[j]`` is the detector set of restricted mechanism ``j``; its
    virtual detector id is ``virtual_offset + j`` in ``only``.
    """

    color: Color
    restricted: DetectorErrorModel
    only: DetectorErrorModel
    virtual_offset: int
    virtual: tuple[tuple[int, ...], ...]
    dropped: dict = field(default_factory=dict)


def decompose(dem: DetectorErrorModel, c) -> DecomposedDEM:
    """Restricted and only DEMs for color ``c``.

    Steps: separate Pauli types and compress; keep each mechanism's
    non-``c`` detectors when there are one or two of them (observables
    dropped) and compress to form the restricted DEM, one virtual detector
    per mechanism; form the only DEM from mechanisms touching at most two
    ``c`` detectors and no others, or one or two non-``c`` detectors (replaced
    by their virtual detector) plus at most one ``c`` detector.
    """
    c = Color.parse(c)
    mzx = separate_pauli_types(dem)
    colors = np.array([int(d.color) for d in dem.detectors], dtype=np.int64)
    dropped: Counter = Counter()

    restricted = []
    for m in mzx.mechanisms:
        other = [d for d in m.detectors if colors[d] != c]
        if 0 < len(other) <= 2:
            restricted.append(ErrorMechanism(m.q, other, ()))
        elif len(other) > 2:
            dropped["restricted: more than two non-c detectors"] += 1
    restricted = _merged(restricted)
    offset = dem.num_detectors
    virtual_id = {m.detectors: offset + j for j, m in enumerate(restricted)}

    only = []
    for m in mzx.mechanisms:
        other = [d for d in m.detectors if colors[d] != c]
        own = [d for d in m.detectors if colors[d] == c]
        if not other:
            if len(m.detectors) <= 2:
                only.append(ErrorMechanism(m.q, m.detectors, m.observables))
            else:
                dropped["only: more than two c detectors"] += 1
        elif len(other) <= 2 and len(own) <= 1:
            only.append(ErrorMechanism(m.q, own + [virtual_id[tuple(other)]], m.observables))
        else:
            dropped["only: mixed mechanism too large"] += 1

    vmeta = tuple(VirtualDetector(j, c) for j in range(len(restricted)))
    rdem = DetectorErrorModel(tuple(restricted), dem.detectors, dem.observable_paulis)
    # parallel copies with identical targets are merged like everywhere else
    odem = DetectorErrorModel(tuple(_merged(only)), dem.detectors + vmeta, dem.observable_paulis)
    return DecomposedDEM(
        color=c,
        restricted=rdem,
        only=odem,
        virtual_offset=offset,
        virtual=tuple(m.detectors for m in restricted),
        dropped=dict(dropped),
    )


def to_match_graph(dem: DetectorErrorModel) -> MatchGraph:
    """Matching graph with one edge per mechanism.

    Vertices are the DEM detectors plus a final boundary vertex.  Edge ``j``
    carries mechanism ``j`` as its fault id and the observable bit mask.

    Raises
    ------
    ValueError
        If a mechanism is not edge-like or has ``q >= 0.5``.
    """
    n = dem.num_detectors
    edges = []
    for m in dem.mechanisms:
        if not 1 <= len(m.detectors) <= 2:
            raise ValueError(f"mechanism with {len(m.detectors)} detectors is not edge-like")
        edges.append(m.detectors if len(m.detectors) == 2 else (m.detectors[0], n))
    q = dem.probabilities
    weights = weight_from_probability(q) if len(q) else np.zeros(0)
    masks = [sum(1 << o for o in m.observables) for m in dem.mechanisms]
    return MatchGraph.from_edges(n + 1, n, edges, weights, np.arange(len(edges)), masks)


# -- text format -----------------------------------------------------------------------

_ERROR_RE = re.compile(r"^error\(([^)]+)\)((?:\s+[DL]\d+)*)\s*$")
_DET_RE = re.compile(r"^detector\s+D(\d+)\s+(.*)$")
_OBS_RE = re.compile(r"^observable\s+L(\d+)\s+pauli=([XZ])\s*$")


def serialize_dem(dem: DetectorErrorModel) -> str:
    """Line-oriented text form; probabilities with 17 significant digits."""
    lines = []
    for i, d in enumerate(dem.detectors):
        if isinstance(d, VirtualDetector):
            lines.append(f"detector D{i} virtual source={d.source} color={d.color.letter}")
        else:
            lines.append(f"detector D{i} face={d.face} pauli={d.pauli} round={d.round} color={d.color.letter}")
    for j, P in enumerate(dem.observable_paulis):
        lines.append(f"observable L{j} pauli={P}")
    for m in dem.mechanisms:
        targets = [f"D{d}" for d in m.detectors] + [f"L{o}" for o in m.observables]
        lines.append(f"error({m.q:.17g}) " + " ".join(targets) if targets else f"error({m.q:.17g})")
    return "\n".join(lines) + ("\n" if lines else "")


def parse_dem(text: str) -> DetectorErrorModel:
    """Inverse of :func:`serialize_dem`; ``#`` starts a comment.

    Detectors referenced by ``error`` lines but never declared get
    placeholder metadata so bare ``error(...)`` listings still load.
    """
    dets: dict[int, Metadata] = {}
    obs: dict[int, str] = {}
    mechs = []
    max_det, max_obs = -1, -1
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if m := _ERROR_RE.match(line):
            q = float(m.group(1))
            toks = m.group(2).split()
            d = [int(t[1:]) for t in toks if t[0] == "D"]
            o = [int(t[1:]) for t in toks if t[0] == "L"]
            max_det = max([max_det] + d)
            max_obs = max([max_obs] + o)
            mechs.append(ErrorMechanism(q, d, o))
        elif m := _DET_RE.match(line):
            i = int(m.group(1))
            fields = dict(kv.split("=", 1) for kv in m.group(2).split() if "=" in kv)
            if m.group(2).split()[0] == "virtual":
                dets[i] = VirtualDetector(int(fields["source"]), Color.parse(fields["color"]))
            else:
                dets[i] = DetectorInfo(int(fields["face"]), fields["pauli"], int(fields["round"]), Color.parse(fields["color"]))
        elif m := _OBS_RE.match(line):
            obs[int(m.group(1))] = m.group(2)
        else:
            raise ValueError(f"line {lineno}: cannot parse {raw!r}")
    n_det = max([max_det] + list(dets)) + 1
    n_obs = max([max_obs] + list(obs)) + 1
    meta = tuple(dets.get(i, DetectorInfo(-1, "Z", 0, Color.R)) for i in range(n_det))
    return DetectorErrorModel(tuple(mechs), meta, tuple(obs.get(j, "Z") for j in range(n_obs)))
