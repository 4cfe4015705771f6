"""Concatenated matching decoder for bit-flip noise with perfect syndromes.

For each color ``c`` the decoder runs two matchings:

1. on the restricted graph of ``c`` (faces of the other two colors, joined by
   ``c``-colored edges) with the violated checks of the other two colors as
   defects, giving a set of ``c``-colored edges;
2. on the monochrome graph of ``c`` (``c``-colored edges and faces, joined by
   qubits) with the violated ``c`` checks and the edges from step 1 as
   defects, giving a set of qubits.

The smallest of the per-color qubit sets is the correction.  Colors tie in
the order R, G, B.
"""

from __future__ import annotations

import weakref
from collections import deque
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .gf2 import RowSpace
from .lattice import Color, ColorLattice, build_triangular, monochrome_graph, restricted_graph
from .matching import MatchGraph, Matcher, weight_from_probability

__all__ = [
    "Syndrome2D",
    "DecodeResult2D",
    "ConcatMatchingDecoder2D",
    "syndrome_from_error",
    "syndrome_array",
    "decode_color",
    "decode",
    "is_logical_failure",
    "logical_flip",
    "string_operator",
    "gen_projection_hard_error",
    "gen_concat_hard_error",
]


@dataclass(frozen=True)
class Syndrome2D:
    """Violated Z-type checks, grouped by face color."""

    red: frozenset[int]
    green: frozenset[int]
    blue: frozenset[int]

    @classmethod
    def from_faces(cls, lattice: ColorLattice, faces: Iterable[int]) -> "Syndrome2D":
        parts: dict[Color, set[int]] = {c: set() for c in Color}
        for f in faces:
            f = int(f)
            if not 0 <= f < lattice.num_faces:
                raise ValueError(f"face {f} out of range")
            parts[lattice.face_colors[f]].add(f)
        return cls(*(frozenset(parts[c]) for c in Color))

    def of_color(self, c) -> frozenset[int]:
        return (self.red, self.green, self.blue)[Color.parse(c)]

    @property
    def faces(self) -> frozenset[int]:
        return self.red | self.green | self.blue

    def __len__(self) -> int:
        return len(self.red) + len(self.green) + len(self.blue)

    def to_array(self, lattice: ColorLattice) -> np.ndarray:
        out = np.zeros(lattice.num_faces, dtype=np.uint8)
        out[sorted(self.faces)] = 1
        return out


@dataclass(frozen=True)
class DecodeResult2D:
    """Per-color predictions and the selected one."""

    predictions: dict
    chosen: Color

    @property
    def prediction(self) -> frozenset[int]:
        return self.predictions[self.chosen]

    @property
    def weights(self) -> dict:
        return {c: len(v) for c, v in self.predictions.items()}


def _as_error_vector(lattice: ColorLattice, error) -> np.ndarray:
    e = np.asarray(error)
    if e.dtype == bool or (e.ndim == 1 and e.shape[0] == lattice.num_vertices and set(np.unique(e)) <= {0, 1}
                           and not isinstance(error, (set, frozenset, list, tuple))):
        return e.astype(np.uint8)
    v = np.zeros(lattice.num_vertices, dtype=np.uint8)
    for q in error:
        q = int(q)
        if not 0 <= q < lattice.num_vertices:
            raise ValueError(f"qubit {q} out of range")
        v[q] ^= 1
    return v


def syndrome_array(lattice: ColorLattice, errors) -> np.ndarray:
    """Face parities of error indicator rows; shape ``(..., n_faces)``."""
    e = np.asarray(errors, dtype=np.uint8)
    return (e @ lattice.check_matrix.T.astype(np.uint8) % 2).astype(np.uint8)


def syndrome_from_error(lattice: ColorLattice, error) -> Syndrome2D:
    """Faces holding an odd number of the qubits in ``error``."""
    s = syndrome_array(lattice, _as_error_vector(lattice, error))
    return Syndrome2D.from_faces(lattice, np.flatnonzero(s))


def logical_flip(lattice: ColorLattice, residuals) -> np.ndarray:
    """Parity of the overlap with a logical operator (red boundary support).

    Only meaningful for residuals with an empty syndrome.
    """
    r = np.asarray(residuals, dtype=np.uint8)
    support = list(lattice.boundaries[Color.R])
    return (r[..., support].sum(axis=-1) % 2).astype(bool)


_ROWSPACES: "weakref.WeakKeyDictionary[ColorLattice, RowSpace]" = weakref.WeakKeyDictionary()


def is_logical_failure(lattice: ColorLattice, error, prediction) -> bool:
    """True if ``error + prediction`` is not a product of checks.

    Raises
    ------
    ValueError
        If the residual has a non-empty syndrome.
    """
    residual = _as_error_vector(lattice, error) ^ _as_error_vector(lattice, prediction)
    if syndrome_array(lattice, residual).any():
        raise ValueError("residual error has a non-empty syndrome")
    space = _ROWSPACES.get(lattice)
    if space is None:
        space = _ROWSPACES[lattice] = RowSpace(lattice.check_matrix)
    return not space.contains(residual)


class _ColorStage:
    """Both matching graphs for one color and the column maps between them."""

    def __init__(self, lattice: ColorLattice, c: Color, weight: float, backend: str):
        rg = restricted_graph(lattice, c)
        mg = monochrome_graph(lattice, c)
        self.color = c
        self.restricted = rg
        self.monochrome = mg
        self.other_faces = np.array(rg.faces, dtype=np.int64)
        self.own_faces = np.array(mg.faces, dtype=np.int64)
        g1 = MatchGraph.from_edges(rg.num_vertices, rg.boundary, rg.edges, np.full(len(rg.edges), weight))
        g2 = MatchGraph.from_edges(mg.num_vertices, mg.boundary, mg.edges, np.full(len(mg.edges), weight))
        self.m1 = Matcher(g1, backend=backend)
        self.m2 = Matcher(g2, backend=backend)
        # Monochrome edge-node order equals restricted-graph edge order.
        assert rg.lattice_edges == mg.lattice_edges

    def run(self, syndromes: np.ndarray) -> np.ndarray:
        """Syndrome rows ``(shots, n_faces)`` -> qubit predictions ``(shots, n_qubits)``."""
        edges = self.m1.solve_batch(syndromes[:, self.other_faces])
        virtual = np.concatenate([edges, syndromes[:, self.own_faces].astype(bool)], axis=1)
        return self.m2.solve_batch(virtual.astype(np.uint8))


class ConcatMatchingDecoder2D(BaseEstimator):
    """Concatenated matching decoder as a scikit-learn style estimator.

    Parameters
    ----------
    colors : str, default "RGB"
        Colors whose sub-decoders run; the smallest prediction wins.
    p : float or None, default None
        Physical error rate used for ``log((1 - p) / p)`` edge weights.
        ``None`` gives unit weights; both choices yield the same matchings
        because all edges share a single weight.
    backend : {"pymatching", "networkx"}, default "pymatching"

    Examples
    --------
    >>> dec = ConcatMatchingDecoder2D().fit(build_triangular(5))
    >>> dec.predict(np.zeros((1, dec.lattice_.num_faces), dtype=np.uint8)).any()
    False
    """

    def __init__(self, colors: str = "RGB", p: float | None = None, backend: str = "pymatching"):
        self.colors = colors
        self.p = p
        self.backend = backend

    def fit(self, X, y=None):
        """Build the matching graphs for a lattice (or a code distance)."""
        lattice = build_triangular(int(X)) if isinstance(X, (int, np.integer)) else X
        if not isinstance(lattice, ColorLattice):
            raise TypeError("fit expects a ColorLattice or an odd code distance")
        colors = sorted({Color.parse(c) for c in self.colors})
        if not colors:
            raise ValueError("at least one color is required")
        weight = 1.0 if self.p is None else float(weight_from_probability(self.p))
        self.lattice_ = lattice
        self.colors_ = tuple(colors)
        self.stages_ = {c: _ColorStage(lattice, c, weight, self.backend) for c in colors}
        return self

    def _check_syndromes(self, syndromes) -> np.ndarray:
        check_is_fitted(self, "stages_")
        s = np.asarray(syndromes)
        if s.ndim == 1:
            s = s[None, :]
        if s.ndim != 2 or s.shape[1] != self.lattice_.num_faces:
            raise ValueError(f"expected syndrome rows of length {self.lattice_.num_faces}")
        if not np.isin(s, (0, 1)).all():
            raise ValueError("syndromes must be 0/1")
        return s.astype(np.uint8)

    def decode_colors(self, syndromes) -> tuple[np.ndarray, np.ndarray]:
        """Per-color predictions.

        Returns
        -------
        predictions : ndarray of bool, shape (n_colors, shots, n_qubits)
        chosen : ndarray of int, shape (shots,)
            Index into ``colors_`` of the smallest prediction per shot.
        """
        s = self._check_syndromes(syndromes)
        preds = np.stack([self.stages_[c].run(s) for c in self.colors_])
        # argmin returns the first minimum, i.e. the R < G < B tie rule
        chosen = np.argmin(preds.sum(axis=2), axis=0)
        return preds, chosen

    def predict(self, syndromes) -> np.ndarray:
        """Correction indicator rows, shape ``(shots, n_qubits)``."""
        preds, chosen = self.decode_colors(syndromes)
        return preds[chosen, np.arange(preds.shape[1])]

    def decode(self, syndrome: Syndrome2D) -> DecodeResult2D:
        preds, chosen = self.decode_colors(syndrome.to_array(self.lattice_))
        out = {c: frozenset(np.flatnonzero(preds[i, 0]).tolist()) for i, c in enumerate(self.colors_)}
        return DecodeResult2D(out, self.colors_[int(chosen[0])])

    def logical_failures(self, errors, predictions=None) -> np.ndarray:
        """Logical-failure flag per shot for error rows (decoding them if needed)."""
        errors = np.asarray(errors, dtype=np.uint8)
        if predictions is None:
            predictions = self.predict(syndrome_array(self.lattice_, errors))
        residual = errors ^ np.asarray(predictions, dtype=np.uint8)
        if syndrome_array(self.lattice_, residual).any():
            raise AssertionError("decoder returned a correction with the wrong syndrome")
        return logical_flip(self.lattice_, residual)


_DECODERS: "weakref.WeakKeyDictionary[ColorLattice, ConcatMatchingDecoder2D]" = weakref.WeakKeyDictionary()


def _default_decoder(lattice: ColorLattice) -> ConcatMatchingDecoder2D:
    dec = _DECODERS.get(lattice)
    if dec is None:
        dec = _DECODERS[lattice] = ConcatMatchingDecoder2D().fit(lattice)
    return dec


def decode_color(lattice: ColorLattice, syndrome: Syndrome2D, c) -> frozenset[int]:
    """Prediction of the sub-decoder of color ``c``."""
    c = Color.parse(c)
    stage = _default_decoder(lattice).stages_[c]
    pred = stage.run(syndrome.to_array(lattice)[None, :])[0]
    return frozenset(np.flatnonzero(pred).tolist())


def decode(lattice: ColorLattice, syndrome: Syndrome2D) -> DecodeResult2D:
    """Run all three sub-decoders and keep the smallest prediction."""
    return _default_decoder(lattice).decode(syndrome)


# -- string operators and hard-error witnesses -------------------------------


def _string_graph(lattice: ColorLattice, c: Color):
    """Adjacency of ``c`` faces (plus boundary key ``-1``) through ``c`` edges.

    Moving a violated ``c`` check across a ``c`` edge costs the two endpoint
    qubits of that edge.
    """
    adj: dict[int, list[tuple[int, int]]] = {f: [] for f in lattice.faces_of_color(c)}
    adj[-1] = []
    for e in lattice.edges_of_color(c):
        ends = []
        for v in lattice.edges[e]:
            fs = [f for f in lattice.vertex_faces[v] if lattice.face_colors[f] == c]
            ends.append(fs[0] if fs else -1)
        a, b = ends
        if a == b:
            continue
        adj[a].append((b, e))
        adj[b].append((a, e))
    return adj


def _bfs(adj, start, sink=None):
    """Breadth-first distances; ``sink`` is reachable but never expanded."""
    dist = {start: 0}
    prev: dict[int, tuple[int, int]] = {}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        if u == sink and u != start:
            continue
        for v, e in sorted(adj[u]):
            if v not in dist:
                dist[v] = dist[u] + 1
                prev[v] = (u, e)
                queue.append(v)
    return dist, prev


def string_operator(lattice: ColorLattice, c, face: int, boundary_edge: int | None = None) -> frozenset[int]:
    """Shortest ``c``-string from ``face`` to the ``c`` boundary.

    The result is a qubit set whose syndrome is exactly ``{face}``.  If
    ``boundary_edge`` is given the string leaves through that ``c`` edge.
    """
    c = Color.parse(c)
    if lattice.face_colors[face] != c:
        raise ValueError("face has the wrong color")
    adj = _string_graph(lattice, c)
    dist, prev = _bfs(adj, face, sink=-1)
    if boundary_edge is not None:
        ends = [v for v, e in adj[-1] if e == boundary_edge]
        if not ends or ends[0] not in dist:
            raise ValueError("edge does not touch the boundary")
        prev[-1] = (ends[0], boundary_edge)
    node = -1
    qubits: set[int] = set()
    while node != face:
        node, e = prev[node]
        qubits ^= {int(x) for x in lattice.edges[e]}
    return frozenset(qubits)


def _center_qubit(lattice: ColorLattice) -> int:
    L = 3 * (lattice.distance - 1) // 2
    target = np.array([L, L / 3])
    d2 = ((lattice.coords - target) ** 2).sum(axis=1)
    return int(np.argmin(d2))


def gen_projection_hard_error(lattice: ColorLattice, c="R") -> frozenset[int]:
    """Single-qubit error at the patch centre plus a ``c``-string to the ``c`` boundary.

    The ``c`` check of the centre qubit is cancelled by the string, leaving
    one violated check for each of the two other colors.
    """
    c = Color.parse(c)
    v = _center_qubit(lattice)
    face = next(f for f in lattice.vertex_faces[v] if lattice.face_colors[f] == c)
    return frozenset({v}) ^ string_operator(lattice, c, face)


# Weight-12 witness on the distance-25 patch: three two-edge strings whose
# violated checks are pairwise seven edges apart in the restricted graphs.
_CONCAT_WITNESS_D = 25


def _restricted_adjacency(lattice: ColorLattice, c: Color):
    rg = restricted_graph(lattice, c)
    adj: dict[int, list[tuple[int, int]]] = {i: [] for i in range(rg.num_vertices)}
    for j, (a, b) in enumerate(rg.edges):
        adj[int(a)].append((int(b), j))
        adj[int(b)].append((int(a), j))
    return rg, adj


def _restricted_distances(rg, adj, source: int) -> dict[int, int]:
    dist, _ = _bfs(adj, rg.face_index[source], sink=rg.boundary)
    return {rg.faces[i]: dv for i, dv in dist.items() if i != rg.boundary}


def find_concat_hard_errors(lattice: ColorLattice, string_edges: int = 2, gap: int = 7, limit: int = 1):
    """Search three-string errors of the kind the concatenated decoder misses.

    Each string crosses ``string_edges`` edges of its own color and ends on
    its own boundary; the red one ends at the middle qubit of the red
    boundary.  Violated checks are pairwise ``gap`` edges apart in the
    restricted graph of the remaining color.  Returns up to ``limit``
    ``(faces, error)`` pairs that the decoder fails on.
    """
    mid = lattice.boundaries[Color.R][(lattice.distance - 1) // 2]
    reach = {}
    for c in Color:
        adj = _string_graph(lattice, c)
        dist, _ = _bfs(adj, -1)
        reach[c] = sorted(f for f, dv in dist.items() if dv == string_edges and f != -1)
    red_adj = _string_graph(lattice, Color.R)
    mid_edges = [e for _, e in red_adj[-1] if mid in lattice.edges[e]]
    found = []
    dec = _default_decoder(lattice)
    radj = {c: _restricted_adjacency(lattice, c) for c in Color}
    for fr in reach[Color.R]:
        strings_r = []
        for e in mid_edges:
            s = string_operator(lattice, Color.R, fr, boundary_edge=e)
            if len(s) == 2 * string_edges:
                strings_r.append(s)
        if not strings_r:
            continue
        d_from_r = {c: _restricted_distances(*radj[c], fr) for c in (Color.G, Color.B)}
        for fg in reach[Color.G]:
            if d_from_r[Color.B].get(fg) != gap:
                continue
            d_from_g = _restricted_distances(*radj[Color.R], fg)
            for fb in reach[Color.B]:
                if d_from_r[Color.G].get(fb) != gap or d_from_g.get(fb) != gap:
                    continue
                error = strings_r[0] ^ string_operator(lattice, Color.G, fg) ^ string_operator(lattice, Color.B, fb)
                res = dec.decode(syndrome_from_error(lattice, error))
                if is_logical_failure(lattice, error, res.prediction):
                    found.append(((fr, fg, fb), error))
                    if len(found) >= limit:
                        return found
    return found


def gen_concat_hard_error() -> tuple[ColorLattice, frozenset[int]]:
    """Weight-12 error on the distance-25 patch that defeats the decoder."""
    lattice = build_triangular(_CONCAT_WITNESS_D)
    found = find_concat_hard_errors(lattice)
    if not found:
        raise RuntimeError("no witness found")
    return lattice, found[0][1]
