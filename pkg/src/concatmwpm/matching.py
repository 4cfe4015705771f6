"""Minimum-weight perfect matching with a boundary vertex.

The problem solved here is the one used by matching decoders: given a
weighted graph containing one designated boundary vertex and a set of
defect vertices, find a minimum-weight edge set that touches every defect an
odd number of times and every other non-boundary vertex an even number of
times.

Two exact backends are provided:

``"pymatching"``
    sparse blossom via PyMatching (fast, used for Monte Carlo work);
``"networkx"``
    metric closure over the defects followed by Edmonds' blossom algorithm
    from networkx (slow, dependency-light reference route).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

__all__ = [
    "MatchGraph",
    "Matching",
    "Matcher",
    "MatchingInfeasibleError",
    "WEIGHT_SCALE",
    "quantize_weights",
    "weight_from_probability",
    "solve",
]

WEIGHT_SCALE = 2**16


class MatchingInfeasibleError(ValueError):
    """Raised when a defect set cannot be paired off (odd defects in a
    component that has no route to the boundary)."""


def quantize_weights(weights) -> np.ndarray:
    """Round weights onto the grid ``k / WEIGHT_SCALE``."""
    w = np.asarray(weights, dtype=float)
    return np.round(w * WEIGHT_SCALE) / WEIGHT_SCALE


def weight_from_probability(q) -> np.ndarray:
    """``log((1 - q) / q)``; rejects ``q`` outside ``(0, 0.5)``."""
    q = np.asarray(q, dtype=float)
    if np.any(~(q > 0)) or np.any(~(q < 0.5)):
        raise ValueError("edge probabilities must lie in (0, 0.5)")
    return np.log1p(-q) - np.log(q)


@dataclass(frozen=True, eq=False)
class MatchGraph:
    """Weighted matching graph.

    Vertices are ``0 .. num_nodes - 1``; ``boundary`` is one of them.
    Edge ``j`` joins ``edges[j, 0]`` and ``edges[j, 1]`` with weight
    ``weights[j]`` and carries a payload: ``fault_ids[j]`` (an arbitrary
    integer tag, e.g. the originating error mechanism) and
    ``observables[j]`` (bit mask of flipped logical observables).
    """

    num_nodes: int
    boundary: int
    edges: np.ndarray
    weights: np.ndarray
    fault_ids: np.ndarray = field(repr=False)
    observables: np.ndarray = field(repr=False)

    @classmethod
    def from_edges(cls, num_nodes, boundary, edges, weights=None, fault_ids=None, observables=None):
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        m = len(edges)
        weights = np.ones(m) if weights is None else np.asarray(weights, dtype=float).reshape(m)
        weights = quantize_weights(weights)
        fault_ids = np.arange(m) if fault_ids is None else np.asarray(fault_ids, dtype=np.int64).reshape(m)
        observables = (
            np.zeros(m, dtype=np.int64) if observables is None else np.asarray(observables, dtype=np.int64).reshape(m)
        )
        if not 0 <= boundary < num_nodes:
            raise ValueError("boundary vertex out of range")
        if m and (edges.min() < 0 or edges.max() >= num_nodes):
            raise ValueError("edge endpoint out of range")
        if np.any(edges[:, 0] == edges[:, 1]):
            raise ValueError("self-loops are not allowed")
        if not np.all(np.isfinite(weights)) or np.any(weights < 0):
            raise ValueError("edge weights must be finite and non-negative")
        for arr in (edges, weights, fault_ids, observables):
            arr.setflags(write=False)
        return cls(num_nodes, boundary, edges, weights, fault_ids, observables)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def num_detectors(self) -> int:
        return self.num_nodes - 1

    @cached_property
    def detector_index(self) -> np.ndarray:
        """Map graph vertex -> dense detector index (boundary -> -1)."""
        idx = np.full(self.num_nodes, -1, dtype=np.int64)
        others = [v for v in range(self.num_nodes) if v != self.boundary]
        idx[others] = np.arange(len(others))
        return idx


@dataclass(frozen=True)
class Matching:
    edges: tuple[int, ...]
    total_weight: float

    def observable_mask(self, graph: MatchGraph) -> int:
        mask = 0
        for e in self.edges:
            mask ^= int(graph.observables[e])
        return mask


class Matcher:
    """Reusable solver context for one :class:`MatchGraph`.

    Parallel edges are reduced to the lightest one (lowest edge id on
    ties); they can never both appear in a minimum solution.
    """

    def __init__(self, graph: MatchGraph, backend: str = "pymatching"):
        if backend not in ("pymatching", "networkx"):
            raise ValueError(f"unknown backend {backend!r}")
        self.graph = graph
        self.backend = backend
        best: dict[tuple[int, int], int] = {}
        for j, (u, v) in enumerate(graph.edges):
            key = (min(u, v), max(u, v))
            k = best.get(key)
            if k is None or graph.weights[j] < graph.weights[k]:
                best[key] = j
        self._kept = np.array(sorted(best.values()), dtype=np.int64)
        self._pm = None
        self._nx = None

    # pymatching wants detectors 0..n-1 and boundary edges; remap vertices.
    def _pymatching(self):
        if self._pm is None:
            import pymatching

            g = self.graph
            det = g.detector_index
            pm = pymatching.Matching()
            for k, j in enumerate(self._kept):
                u, v = g.edges[j]
                w = float(g.weights[j])
                if u == g.boundary:
                    pm.add_boundary_edge(int(det[v]), fault_ids={k}, weight=w)
                elif v == g.boundary:
                    pm.add_boundary_edge(int(det[u]), fault_ids={k}, weight=w)
                else:
                    pm.add_edge(int(det[u]), int(det[v]), fault_ids={k}, weight=w)
            pm.ensure_num_fault_ids(len(self._kept))
            self._pm = pm
        return self._pm

    def _check_defects(self, defects) -> np.ndarray:
        g = self.graph
        d = np.unique(np.asarray(list(defects), dtype=np.int64))
        if d.size and (d.min() < 0 or d.max() >= g.num_nodes):
            raise ValueError("defect vertex out of range")
        if np.any(d == g.boundary):
            raise ValueError("the boundary vertex cannot be a defect")
        return d

    def solve(self, defects) -> Matching:
        d = self._check_defects(defects)
        if d.size == 0:
            return Matching((), 0.0)
        if self.backend == "networkx":
            chosen = self._solve_networkx(d)
        else:
            syndrome = np.zeros((1, self.graph.num_detectors), dtype=np.uint8)
            syndrome[0, self.graph.detector_index[d]] = 1
            chosen = self.solve_batch(syndrome)[0]
            chosen = np.flatnonzero(chosen)
        chosen = tuple(int(e) for e in sorted(chosen))
        return Matching(chosen, float(sum(self.graph.weights[list(chosen)])) if chosen else 0.0)

    def solve_batch(self, syndromes) -> np.ndarray:
        """Decode many defect indicator rows at once.

        Parameters
        ----------
        syndromes : array of shape (shots, num_detectors)
            Rows indexed by dense detector index (graph vertices with the
            boundary removed).

        Returns
        -------
        ndarray of bool, shape (shots, num_edges)
            Selected-edge indicator per shot.
        """
        g = self.graph
        s = np.asarray(syndromes, dtype=np.uint8)
        if s.ndim != 2 or s.shape[1] != g.num_detectors:
            raise ValueError(f"expected shape (shots, {g.num_detectors}), got {s.shape}")
        out = np.zeros((len(s), g.num_edges), dtype=bool)
        if len(s) == 0 or len(self._kept) == 0:
            if s.any():
                raise MatchingInfeasibleError("defects present but the graph has no edges")
            return out
        if self.backend == "networkx":
            back = np.flatnonzero(g.detector_index >= 0)
            for i, row in enumerate(s):
                chosen = self._solve_networkx(back[np.flatnonzero(row)]) if row.any() else []
                out[i, list(chosen)] = True
            return out
        pm = self._pymatching()
        padded = s
        if pm.num_detectors > s.shape[1]:
            padded = np.zeros((len(s), pm.num_detectors), dtype=np.uint8)
            padded[:, : s.shape[1]] = s
        elif pm.num_detectors < s.shape[1]:
            if s[:, pm.num_detectors :].any():
                raise MatchingInfeasibleError("defect on an isolated vertex")
            padded = s[:, : pm.num_detectors]
        try:
            pred = pm.decode_batch(padded)
        except ValueError as exc:
            raise MatchingInfeasibleError(str(exc)) from exc
        out[:, self._kept] = pred[:, : len(self._kept)].astype(bool)
        return out

    # -- networkx reference route ------------------------------------------
    def _nx_graph(self):
        if self._nx is None:
            import networkx as nx

            g = self.graph
            G = nx.Graph()
            G.add_nodes_from(range(g.num_nodes))
            for j in self._kept:
                u, v = g.edges[j]
                G.add_edge(int(u), int(v), weight=float(g.weights[j]), eid=int(j))
            self._nx = G
        return self._nx

    def _solve_networkx(self, defects) -> list[int]:
        import networkx as nx

        g = self.graph
        G = self._nx_graph()
        defects = [int(x) for x in defects]
        dist = {}
        paths = {}
        for s in defects:
            dist[s], paths[s] = nx.single_source_dijkstra(G, s, weight="weight")
        # Complete graph on defects plus one private boundary copy per defect;
        # boundary copies are mutually joined at zero cost.
        K = nx.Graph()
        big = 1.0 + sum(float(w) for w in g.weights[self._kept])
        for i, a in enumerate(defects):
            for b in defects[i + 1 :]:
                if b in dist[a]:
                    K.add_edge(("d", a), ("d", b), weight=big - dist[a][b])
            if g.boundary in dist[a]:
                K.add_edge(("d", a), ("b", a), weight=big - dist[a][g.boundary])
            for b in defects[i + 1 :]:
                K.add_edge(("b", a), ("b", b), weight=big)
        mate = nx.max_weight_matching(K, maxcardinality=True)
        matched = {x for pair in mate for x in pair}
        if any(("d", a) not in matched for a in defects):
            raise MatchingInfeasibleError("no perfect matching of the defects exists")
        chosen: set[int] = set()
        for x, y in mate:
            if x[0] == "b" and y[0] == "b":
                continue
            if x[0] == "b":
                x, y = y, x
            a = x[1]
            target = g.boundary if y[0] == "b" else y[1]
            path = paths[a][target]
            for u, v in zip(path, path[1:]):
                chosen ^= {G.edges[u, v]["eid"]}
        return sorted(chosen)


def solve(graph: MatchGraph, defects, backend: str = "pymatching") -> Matching:
    """Minimum-weight edge set with odd degree exactly at ``defects``.

    Raises
    ------
    MatchingInfeasibleError
        If no such edge set exists.
    """
    return Matcher(graph, backend=backend).solve(defects)
