"""Triangular 6-6-6 color-code lattice and its derived matching graphs.

Coordinate convention
---------------------
Sites live on integer coordinates ``(x, y)`` with rows ``y = 0 .. L`` where
``L = 3 (d - 1) / 2`` and ``x`` running over ``y, y + 2, ..., 2L - y``.  The
apex of the triangle is at the top (``y = L``), the red boundary is the bottom
row ``y = 0``, the green boundary is the left edge ``x = y`` and the blue
boundary is the right edge ``x = 2L - y``.  A site is a face centre when
``((x - y) / 2) % 3`` equals a per-row offset; all other sites are qubits.

The six qubits around a face centre are listed in a fixed cyclic order of
*positions* (offsets relative to the centre)::

    0: (-1, +1)   1: (+1, +1)   2: (+2, 0)
    3: (+1, -1)   4: (-1, -1)   5: (-2, 0)

The CNOT schedule of the syndrome-extraction circuit refers to these
positions.  Boundary faces simply lack the positions that fall outside the
patch.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import IntEnum
from functools import cached_property

import numpy as np

__all__ = [
    "Color",
    "ColorLattice",
    "RestrictedGraph",
    "MonochromeGraph",
    "POSITION_OFFSETS",
    "build_triangular",
    "restricted_graph",
    "monochrome_graph",
    "logical_support",
]

POSITION_OFFSETS: tuple[tuple[int, int], ...] = (
    (-1, 1),
    (1, 1),
    (2, 0),
    (1, -1),
    (-1, -1),
    (-2, 0),
)

# row % 3 -> (face colour, face offset index along the row)
_ROW_FACES = {0: ("g", 2), 1: ("b", 0), 2: ("r", 1)}


class Color(IntEnum):
    R = 0
    G = 1
    B = 2

    @property
    def letter(self) -> str:
        return "rgb"[self]

    @property
    def others(self) -> tuple["Color", "Color"]:
        return tuple(c for c in Color if c != self)  # type: ignore[return-value]

    @classmethod
    def parse(cls, value) -> "Color":
        if isinstance(value, Color):
            return value
        if isinstance(value, (int, np.integer)):
            return cls(int(value))
        s = str(value).strip().lower()
        table = {"r": cls.R, "red": cls.R, "g": cls.G, "green": cls.G, "b": cls.B, "blue": cls.B}
        if s not in table:
            raise ValueError(f"unknown color {value!r}")
        return table[s]


@dataclass(frozen=True, eq=False)
class ColorLattice:
    """Immutable triangular color-code patch.

    Attributes
    ----------
    distance : int
        Code distance ``d`` (odd, >= 3).
    coords : ndarray of shape (n_vertices, 2)
        Integer coordinates of the qubit sites.
    edges : ndarray of shape (n_edges, 2)
        Vertex-id pairs, ``edges[i, 0] < edges[i, 1]``, sorted.
    edge_colors : tuple of Color
    faces : tuple of tuple of int
        Vertex ids of each face, in cyclic position order.
    face_colors : tuple of Color
    face_coords : ndarray of shape (n_faces, 2)
        Coordinates of the face centres.
    face_positions : ndarray of shape (n_faces, 6)
        Vertex id at each of the six hexagon positions, ``-1`` if absent.
    boundaries : dict
        ``Color -> tuple`` of vertex ids on that boundary, ordered along it.
    """

    distance: int
    coords: np.ndarray
    edges: np.ndarray
    edge_colors: tuple
    faces: tuple
    face_colors: tuple
    face_coords: np.ndarray
    face_positions: np.ndarray
    boundaries: dict = field(repr=False)

    @property
    def num_vertices(self) -> int:
        return len(self.coords)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def num_faces(self) -> int:
        return len(self.faces)

    def faces_of_color(self, c) -> tuple[int, ...]:
        c = Color.parse(c)
        return tuple(i for i, fc in enumerate(self.face_colors) if fc == c)

    def edges_of_color(self, c) -> tuple[int, ...]:
        c = Color.parse(c)
        return tuple(i for i, ec in enumerate(self.edge_colors) if ec == c)

    @cached_property
    def vertex_faces(self) -> tuple[tuple[int, ...], ...]:
        out: list[list[int]] = [[] for _ in range(self.num_vertices)]
        for f, verts in enumerate(self.faces):
            for v in verts:
                out[v].append(f)
        return tuple(tuple(x) for x in out)

    @cached_property
    def vertex_edges(self) -> tuple[tuple[int, ...], ...]:
        out: list[list[int]] = [[] for _ in range(self.num_vertices)]
        for e, (u, v) in enumerate(self.edges):
            out[u].append(e)
            out[v].append(e)
        return tuple(tuple(x) for x in out)

    @cached_property
    def check_matrix(self) -> np.ndarray:
        """Face-by-vertex incidence matrix over GF(2) (``uint8``)."""
        h = np.zeros((self.num_faces, self.num_vertices), dtype=np.uint8)
        for f, verts in enumerate(self.faces):
            h[f, list(verts)] = 1
        h.setflags(write=False)
        return h

    @cached_property
    def edge_faces(self) -> tuple[tuple[int, ...], ...]:
        """Faces containing both endpoints of each edge (one or two)."""
        vf = [set(x) for x in self.vertex_faces]
        return tuple(tuple(sorted(vf[u] & vf[v])) for u, v in self.edges)

    def to_dict(self) -> dict:
        return {
            "distance": self.distance,
            "orientation": "apex-top; red boundary y=0, green x=y, blue x=2L-y",
            "vertices": [{"id": i, "x": int(x), "y": int(y)} for i, (x, y) in enumerate(self.coords)],
            "edges": [
                {"id": i, "vertices": [int(u), int(v)], "color": c.letter}
                for i, ((u, v), c) in enumerate(zip(self.edges, self.edge_colors))
            ],
            "faces": [
                {
                    "id": i,
                    "vertices": [int(v) for v in verts],
                    "color": c.letter,
                    "center": [int(a) for a in self.face_coords[i]],
                }
                for i, (verts, c) in enumerate(zip(self.faces, self.face_colors))
            ],
            "boundaries": {c.letter: [int(v) for v in vs] for c, vs in self.boundaries.items()},
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def build_triangular(d: int) -> ColorLattice:
    """Build the distance-``d`` triangular patch of the hexagonal color code.

    Raises
    ------
    ValueError
        If ``d`` is not an odd integer of at least 3.
    """
    if isinstance(d, bool) or not isinstance(d, (int, np.integer)) or d < 3 or d % 2 == 0:
        raise ValueError(f"distance must be an odd integer >= 3, got {d!r}")
    d = int(d)
    size = 3 * (d - 1) // 2

    qubit_sites: list[tuple[int, int]] = []
    face_sites: list[tuple[int, int, Color]] = []
    for y in range(size + 1):
        color, offset = _ROW_FACES[y % 3]
        for x in range(y, 2 * size - y + 1, 2):
            if ((x - y) // 2) % 3 == offset:
                face_sites.append((x, y, Color.parse(color)))
            else:
                qubit_sites.append((x, y))

    index = {site: i for i, site in enumerate(qubit_sites)}
    faces = []
    positions = np.full((len(face_sites), 6), -1, dtype=np.int64)
    for f, (x, y, _) in enumerate(face_sites):
        verts = []
        for k, (dx, dy) in enumerate(POSITION_OFFSETS):
            v = index.get((x + dx, y + dy))
            if v is not None:
                positions[f, k] = v
                verts.append(v)
        faces.append(tuple(verts))

    face_colors = tuple(c for *_, c in face_sites)
    vertex_faces: list[set[int]] = [set() for _ in qubit_sites]
    for f, verts in enumerate(faces):
        for v in verts:
            vertex_faces[v].add(f)

    # Lattice edges join cyclically consecutive qubits of a face.
    edge_set: set[tuple[int, int]] = set()
    for verts in faces:
        for i, u in enumerate(verts):
            v = verts[(i + 1) % len(verts)]
            edge_set.add((min(u, v), max(u, v)))
    edges = np.array(sorted(edge_set), dtype=np.int64)

    edge_colors = []
    for u, v in edges:
        outer = vertex_faces[u] ^ vertex_faces[v]
        colors = {face_colors[f] for f in outer}
        if len(colors) != 1:
            raise RuntimeError(f"cannot color edge ({u}, {v})")
        edge_colors.append(colors.pop())

    boundaries = {}
    for c in Color:
        members = [v for v in range(len(qubit_sites)) if all(face_colors[f] != c for f in vertex_faces[v])]
        if c == Color.R:
            members.sort(key=lambda v: qubit_sites[v][0])
        else:
            members.sort(key=lambda v: qubit_sites[v][1])
        boundaries[c] = tuple(members)

    coords = np.array(qubit_sites, dtype=np.int64)
    face_coords = np.array([(x, y) for x, y, _ in face_sites], dtype=np.int64)
    for arr in (coords, edges, positions, face_coords):
        arr.setflags(write=False)
    return ColorLattice(
        distance=d,
        coords=coords,
        edges=edges,
        edge_colors=tuple(edge_colors),
        faces=tuple(faces),
        face_colors=face_colors,
        face_coords=face_coords,
        face_positions=positions,
        boundaries=boundaries,
    )


@dataclass(frozen=True, eq=False)
class RestrictedGraph:
    """Graph on the faces of the two colors other than ``color``.

    Graph vertex ``i < len(faces)`` is lattice face ``faces[i]``; the last
    vertex is the boundary vertex.  Graph edge ``j`` corresponds to lattice
    edge ``lattice_edges[j]`` (a ``color``-colored edge).
    """

    color: Color
    faces: tuple[int, ...]
    edges: np.ndarray
    lattice_edges: tuple[int, ...]

    @property
    def boundary(self) -> int:
        return len(self.faces)

    @property
    def num_vertices(self) -> int:
        return len(self.faces) + 1

    @cached_property
    def face_index(self) -> dict[int, int]:
        return {f: i for i, f in enumerate(self.faces)}

    @cached_property
    def edge_map(self) -> dict[int, int]:
        """Lattice edge id -> graph edge id."""
        return {e: j for j, e in enumerate(self.lattice_edges)}


@dataclass(frozen=True, eq=False)
class MonochromeGraph:
    """Graph on the ``color``-colored edges and faces of the lattice.

    Vertex ids: ``0 .. n_e - 1`` are the lattice edges in ``lattice_edges``,
    ``n_e .. n_e + n_f - 1`` the faces in ``faces`` and the last one is the
    boundary vertex.  Graph edge ``j`` corresponds to lattice vertex
    ``qubits[j]``.
    """

    color: Color
    lattice_edges: tuple[int, ...]
    faces: tuple[int, ...]
    edges: np.ndarray
    qubits: tuple[int, ...]

    @property
    def boundary(self) -> int:
        return len(self.lattice_edges) + len(self.faces)

    @property
    def num_vertices(self) -> int:
        return self.boundary + 1

    @cached_property
    def edge_node(self) -> dict[int, int]:
        return {e: i for i, e in enumerate(self.lattice_edges)}

    @cached_property
    def face_node(self) -> dict[int, int]:
        n = len(self.lattice_edges)
        return {f: n + i for i, f in enumerate(self.faces)}

    @cached_property
    def vertex_map(self) -> dict[int, int]:
        """Lattice vertex id -> graph edge id."""
        return {v: j for j, v in enumerate(self.qubits)}


def restricted_graph(lattice: ColorLattice, c) -> RestrictedGraph:
    c = Color.parse(c)
    faces = tuple(f for f, fc in enumerate(lattice.face_colors) if fc != c)
    index = {f: i for i, f in enumerate(faces)}
    bdry = len(faces)
    lattice_edges = lattice.edges_of_color(c)
    pairs = []
    for e in lattice_edges:
        fs = lattice.edge_faces[e]
        if len(fs) == 2:
            pairs.append((index[fs[0]], index[fs[1]]))
        elif len(fs) == 1:
            pairs.append((index[fs[0]], bdry))
        else:
            raise RuntimeError(f"edge {e} belongs to no face")
    edges = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    edges.setflags(write=False)
    return RestrictedGraph(color=c, faces=faces, edges=edges, lattice_edges=lattice_edges)


def monochrome_graph(lattice: ColorLattice, c) -> MonochromeGraph:
    c = Color.parse(c)
    lattice_edges = lattice.edges_of_color(c)
    faces = lattice.faces_of_color(c)
    edge_node = {e: i for i, e in enumerate(lattice_edges)}
    face_node = {f: len(lattice_edges) + i for i, f in enumerate(faces)}
    bdry = len(lattice_edges) + len(faces)
    pairs = []
    for v in range(lattice.num_vertices):
        ends = [edge_node[e] for e in lattice.vertex_edges[v] if lattice.edge_colors[e] == c]
        ends += [face_node[f] for f in lattice.vertex_faces[v] if lattice.face_colors[f] == c]
        if len(ends) == 1:
            ends.append(bdry)
        if len(ends) != 2:
            raise RuntimeError(f"vertex {v} has {len(ends)} {c.name}-colored incidences")
        pairs.append(tuple(ends))
    edges = np.array(pairs, dtype=np.int64)
    edges.setflags(write=False)
    return MonochromeGraph(
        color=c,
        lattice_edges=lattice_edges,
        faces=faces,
        edges=edges,
        qubits=tuple(range(lattice.num_vertices)),
    )


def logical_support(lattice: ColorLattice, c) -> frozenset[int]:
    """Qubits on the ``c``-colored boundary; supports a logical operator."""
    return frozenset(lattice.boundaries[Color.parse(c)])
