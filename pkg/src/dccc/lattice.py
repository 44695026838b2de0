"""Toric honeycomb lattice with three-coloured faces and edges.

The lattice is a three-valent tiling of the torus by hexagons, arranged in
``n_M`` rows and ``n_E`` columns.  Faces carry one of three colours (cyan,
magenta, yellow) such that adjacent faces never share a colour, and every
edge carries the third colour relative to its two adjacent faces.

Internally faces live on axial coordinates (q, r) where q is the column and
r the row.  Wrapping a row is colour-preserving only when n_M is a multiple
of 3; wrapping a column is made colour-preserving by shearing the
identification by ``(-n_E) mod 3`` rows.  This is the weakest congruence the
embedding needs: any n_E works, but n_M must be divisible by 3.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum


class Colour(Enum):
    C = 0  # cyan
    M = 1  # magenta
    Y = 2  # yellow

    def __repr__(self) -> str:
        return f"Colour.{self.name}"


COLOURS = (Colour.C, Colour.M, Colour.Y)


def third(a: Colour, b: Colour) -> Colour:
    """The unique colour distinct from both arguments."""
    if a == b:
        raise ValueError(f"third() needs two distinct colours, got {a} twice")
    return Colour((-(a.value + b.value)) % 3)


@dataclass(frozen=True)
class Face:
    index: int
    colour: Colour
    row: int
    col: int
    vertices: tuple[int, ...]  # 6 qubit indices, in cyclic boundary order
    boundary_edges: tuple[int, ...]  # 6 edge indices, cyclic, edge i joins
    # vertices i and (i+1) mod 6


@dataclass(frozen=True)
class Edge:
    index: int
    colour: Colour
    qubits: tuple[int, int]
    faces: tuple[int, int]


@dataclass(frozen=True)
class Lattice:
    n_M: int
    n_E: int
    faces: tuple[Face, ...]
    edges: tuple[Edge, ...]
    qubit_coords: tuple[tuple[float, float], ...]
    qubit_edges: tuple[tuple[int, int, int], ...]
    qubit_faces: tuple[tuple[int, int, int], ...]

    @property
    def n_qubits(self) -> int:
        return 2 * self.n_M * self.n_E

    def edges_of_colour(self, colour: Colour) -> list[int]:
        return [e.index for e in self.edges if e.colour == colour]

    def face_boundary_edges(self, face: int, colour: Colour) -> list[int]:
        f = self.faces[face]
        if colour == f.colour:
            raise ValueError(
                f"face {face} has colour {f.colour}; boundary edges only "
                f"exist for the two other colours"
            )
        return [e for e in f.boundary_edges if self.edges[e].colour == colour]

    def to_json(self) -> str:
        payload = {
            "n_M": self.n_M,
            "n_E": self.n_E,
            "qubits": [list(xy) for xy in self.qubit_coords],
            "faces": [
                {
                    "colour": f.colour.name,
                    "row": f.row,
                    "col": f.col,
                    "vertices": list(f.vertices),
                    "boundary_edges": list(f.boundary_edges),
                }
                for f in self.faces
            ],
            "edges": [
                {
                    "colour": e.colour.name,
                    "qubits": list(e.qubits),
                    "faces": list(e.faces),
                }
                for e in self.edges
            ],
        }
        return json.dumps(payload, sort_keys=True)


def _builder(n_M: int, n_E: int):
    """Closure exposing the canonical index maps for (q, r) coordinates."""
    shear = (-n_E) % 3

    def face_index(q: int, r: int) -> int:
        k = q // n_E
        q0 = q - k * n_E
        r0 = (r + k * shear) % n_M
        return r0 * n_E + q0

    def vertex(q: int, r: int, t: int) -> int:
        return 2 * face_index(q, r) + t

    def edge_index(q: int, r: int, d: int) -> int:
        return 3 * face_index(q, r) + d

    return face_index, vertex, edge_index


def admissible(n_M: int, n_E: int) -> bool:
    return n_M >= 1 and n_E >= 1 and n_M % 3 == 0


def build_lattice(n_M: int, n_E: int) -> Lattice:
    """Construct the (n_M, n_E) toric honeycomb lattice.

    Raises ValueError when no consistent three-face-colouring exists on the
    torus (n_M not a multiple of 3).
    """
    if n_M < 1 or n_E < 1:
        raise ValueError(f"lattice dimensions must be positive, got ({n_M}, {n_E})")
    if n_M % 3 != 0:
        raise ValueError(
            f"n_M={n_M} is not a multiple of 3: the face colouring cannot "
            f"close around the torus rows"
        )

    face_index, vertex, edge_index = _builder(n_M, n_E)
    n_faces = n_M * n_E

    def colour_of(q: int, r: int) -> Colour:
        return Colour((q + 2 * r) % 3)

    # Edge directions owned by face (q, r):
    #   d=0 "E":  to face (q+1, r),   qubits (V1(q,r), V2(q,r))
    #   d=1 "SE": to face (q, r+1),   qubits (V1(q,r), V2(q-1,r+1))
    #   d=2 "NE": to face (q+1, r-1), qubits (V2(q,r), V1(q,r-1))
    edges: list[Edge] = [None] * (3 * n_faces)  # type: ignore[list-item]
    for r in range(n_M):
        for q in range(n_E):
            f = face_index(q, r)
            c = colour_of(q, r)
            neighbours = [(q + 1, r), (q, r + 1), (q + 1, r - 1)]
            qubit_pairs = [
                (vertex(q, r, 0), vertex(q, r, 1)),
                (vertex(q, r, 0), vertex(q - 1, r + 1, 1)),
                (vertex(q, r, 1), vertex(q, r - 1, 0)),
            ]
            for d, ((nq, nr), pair) in enumerate(zip(neighbours, qubit_pairs)):
                idx = edge_index(q, r, d)
                edges[idx] = Edge(
                    index=idx,
                    colour=third(c, colour_of(nq, nr)),
                    qubits=pair,
                    faces=(f, face_index(nq, nr)),
                )

    faces: list[Face] = [None] * n_faces  # type: ignore[list-item]
    for r in range(n_M):
        for q in range(n_E):
            f = face_index(q, r)
            verts = (
                vertex(q, r, 0),
                vertex(q - 1, r + 1, 1),
                vertex(q - 1, r, 0),
                vertex(q - 1, r, 1),
                vertex(q, r - 1, 0),
                vertex(q, r, 1),
            )
            bedges = (
                edge_index(q, r, 1),
                edge_index(q - 1, r + 1, 2),
                edge_index(q - 1, r, 0),
                edge_index(q, r - 1, 1),
                edge_index(q, r, 2),
                edge_index(q, r, 0),
            )
            faces[f] = Face(
                index=f,
                colour=colour_of(q, r),
                row=r,
                col=q,
                vertices=verts,
                boundary_edges=bedges,
            )

    coords: list[tuple[float, float]] = [None] * (2 * n_faces)  # type: ignore[list-item]
    for r in range(n_M):
        for q in range(n_E):
            cx = q + 0.5 * r
            cy = 1.5 * r
            coords[vertex(q, r, 0)] = (round(cx + 0.5, 3), round(cy + 0.75, 3))
            coords[vertex(q, r, 1)] = (round(cx + 0.75, 3), round(cy - 0.25, 3))

    qubit_edges: list[list[int]] = [[] for _ in range(2 * n_faces)]
    for e in edges:
        for v in e.qubits:
            qubit_edges[v].append(e.index)
    qubit_faces: list[list[int]] = [[] for _ in range(2 * n_faces)]
    for face in faces:
        for v in face.vertices:
            qubit_faces[v].append(face.index)

    return Lattice(
        n_M=n_M,
        n_E=n_E,
        faces=tuple(faces),
        edges=tuple(edges),
        qubit_coords=tuple(coords),
        qubit_edges=tuple(tuple(sorted(es)) for es in qubit_edges),
        qubit_faces=tuple(tuple(sorted(fs)) for fs in qubit_faces),
    )


def validate_lattice(lat: Lattice) -> list[str]:
    """Return a list of invariant violations (empty when the lattice is good)."""
    problems = []
    n_F = lat.n_M * lat.n_E
    if len(lat.faces) != n_F:
        problems.append(f"face count {len(lat.faces)} != {n_F}")
    if len(lat.edges) != 3 * n_F:
        problems.append(f"edge count {len(lat.edges)} != {3 * n_F}")
    if lat.n_qubits != 2 * n_F:
        problems.append(f"qubit count {lat.n_qubits} != {2 * n_F}")
    for es in lat.qubit_edges:
        if len(es) != 3:
            problems.append(f"qubit with {len(es)} incident edges")
            break
    for fs in lat.qubit_faces:
        if len(set(fs)) != 3:
            problems.append(f"qubit with faces {fs} (expected 3 distinct)")
            break
    for e in lat.edges:
        f1, f2 = (lat.faces[f] for f in e.faces)
        if f1.colour == f2.colour:
            problems.append(f"edge {e.index} joins same-coloured faces")
        elif e.colour != third(f1.colour, f2.colour):
            problems.append(f"edge {e.index} colour is not the third colour")
    for f in lat.faces:
        per_colour = {c: 0 for c in COLOURS}
        for e in f.boundary_edges:
            per_colour[lat.edges[e].colour] += 1
        if per_colour[f.colour] != 0:
            problems.append(f"face {f.index} has own-colour boundary edges")
        for c in COLOURS:
            if c != f.colour and per_colour[c] != 3:
                problems.append(
                    f"face {f.index} has {per_colour[c]} boundary edges of "
                    f"colour {c} (expected 3)"
                )
    return problems
