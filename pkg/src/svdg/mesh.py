"""Conforming triangulations with edge topology and size metrics."""

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

BOUNDARY = -1


class MeshError(ValueError):
    """Raised for malformed, degenerate or non-conforming meshes."""


@dataclass(frozen=True)
class MeshQuality:
    shape_regularity: float  # max h_E / rho_E
    quasi_uniformity: float  # h / min h_E


def _signed_areas(vertices, triangles):
    p = vertices[triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable triangulation.

    Derived topology is built on construction:

    * ``edges`` (ne, 2): sorted vertex pairs.
    * ``edge_elements`` (ne, 2): (left, right) adjacent elements, left < right,
      right = ``BOUNDARY`` for boundary edges.
    * ``edge_normals`` (ne, 2): unit normal, pointing from left to right on
      interior edges and outward on boundary edges.
    * ``tri_edges`` (nt, 3): local edge k is the one opposite local vertex k.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    parent: np.ndarray | None = None  # parent triangle index after refinement
    edges: np.ndarray = field(init=False, repr=False)
    edge_elements: np.ndarray = field(init=False, repr=False)
    edge_normals: np.ndarray = field(init=False, repr=False)
    tri_edges: np.ndarray = field(init=False, repr=False)
    areas: np.ndarray = field(init=False, repr=False)
    h_E: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        verts = np.ascontiguousarray(self.vertices, dtype=float)
        tris = np.ascontiguousarray(self.triangles, dtype=np.int64)
        if verts.ndim != 2 or verts.shape[1] != 2:
            raise MeshError("vertices must have shape (N, 2)")
        if tris.ndim != 2 or tris.shape[1] != 3 or len(tris) == 0:
            raise MeshError("triangles must have shape (M, 3) with M >= 1")
        if tris.min() < 0 or tris.max() >= len(verts):
            raise MeshError("triangle vertex index out of range")
        areas = _signed_areas(verts, tris)
        bad = np.flatnonzero(areas <= 0.0)
        if bad.size:
            raise MeshError(f"element {bad[0]} is degenerate or clockwise (signed area {areas[bad[0]]:.3e})")

        local = np.array([[1, 2], [2, 0], [0, 1]])
        pairs = np.sort(tris[:, local], axis=2).reshape(-1, 2)
        edges, inverse, counts = np.unique(pairs, axis=0, return_inverse=True, return_counts=True)
        inverse = inverse.ravel()
        if counts.max() > 2:
            e = np.flatnonzero(counts > 2)[0]
            raise MeshError(f"non-conforming mesh: edge {tuple(edges[e])} shared by {counts[e]} triangles")
        tri_edges = inverse.reshape(-1, 3)

        owner = np.repeat(np.arange(len(tris)), 3)
        order = np.lexsort((owner, inverse))
        edge_elements = np.full((len(edges), 2), BOUNDARY, dtype=np.int64)
        first = np.ones(len(order), dtype=bool)
        first[1:] = inverse[order][1:] != inverse[order][:-1]
        edge_elements[inverse[order][first], 0] = owner[order][first]
        edge_elements[inverse[order][~first], 1] = owner[order][~first]

        tangent = verts[edges[:, 1]] - verts[edges[:, 0]]
        lengths = np.linalg.norm(tangent, axis=1)
        normals = np.column_stack([tangent[:, 1], -tangent[:, 0]]) / lengths[:, None]
        centroids = verts[tris].mean(axis=1)
        mid = 0.5 * (verts[edges[:, 0]] + verts[edges[:, 1]])
        left = edge_elements[:, 0]
        right = edge_elements[:, 1]
        interior = right != BOUNDARY
        # Interior: towards the right element. Boundary: away from the only element.
        target = np.where(interior[:, None], centroids[np.where(interior, right, 0)], 2 * mid - centroids[left])
        flip = np.einsum("ij,ij->i", normals, target - centroids[left]) < 0
        normals[flip] *= -1

        side = np.linalg.norm(verts[tris[:, local[:, 0]]] - verts[tris[:, local[:, 1]]], axis=2)

        for name, value in [
            ("vertices", verts),
            ("triangles", tris),
            ("edges", edges),
            ("edge_elements", edge_elements),
            ("edge_normals", normals),
            ("tri_edges", tri_edges),
            ("areas", areas),
            ("h_E", side.max(axis=1)),
        ]:
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def h(self):
        return float(self.h_E.max())

    @property
    def boundary_edges(self):
        return np.flatnonzero(self.edge_elements[:, 1] == BOUNDARY)

    @property
    def interior_edges(self):
        return np.flatnonzero(self.edge_elements[:, 1] != BOUNDARY)

    @property
    def boundary_vertices(self):
        return np.unique(self.edges[self.boundary_edges])

    @property
    def edge_lengths(self):
        return np.linalg.norm(self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]], axis=1)

    def with_flipped_normals(self):
        """Copy of the mesh with every edge normal reversed."""
        out = Mesh(self.vertices, self.triangles, self.parent)
        flipped = -self.edge_normals
        flipped.setflags(write=False)
        object.__setattr__(out, "edge_normals", flipped)
        return out


def generate_uniform(n):
    """Unit square split into n x n cells, each cut along its (0,0)-(1,1) diagonal."""
    if int(n) != n or n < 1:
        raise MeshError(f"number of subdivisions must be a positive integer, got {n}")
    n = int(n)
    t = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(t, t, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    a = (j * (n + 1) + i).ravel()
    b, c, d = a + 1, a + n + 1, a + n + 2
    triangles = np.column_stack([np.column_stack([a, b, d]), np.column_stack([a, d, c])]).reshape(-1, 3)
    return Mesh(vertices, triangles)


def barycentric_refine(m):
    """Alfeld split: connect every vertex of each triangle to its barycenter."""
    nt = m.n_triangles
    centers = m.vertices[m.triangles].mean(axis=1)
    c = m.n_vertices + np.arange(nt)
    t = m.triangles
    children = np.stack(
        [
            np.column_stack([t[:, 0], t[:, 1], c]),
            np.column_stack([t[:, 1], t[:, 2], c]),
            np.column_stack([t[:, 2], t[:, 0], c]),
        ],
        axis=1,
    ).reshape(-1, 3)
    return Mesh(np.vstack([m.vertices, centers]), children, parent=np.repeat(np.arange(nt), 3))


def quality(m):
    """Shape-regularity and quasi-uniformity constants of the mesh."""
    p = m.vertices[m.triangles]
    perim = sum(np.linalg.norm(p[:, k] - p[:, (k + 1) % 3], axis=1) for k in range(3))
    rho = 2.0 * m.areas / perim
    return MeshQuality(float(np.max(m.h_E / rho)), float(m.h / m.h_E.min()))


def _data_lines(text):
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            yield line


def load_mesh(path):
    """Read the ASCII ``vertices N`` / ``triangles M`` format (0-based indices).

    Clockwise triangles are reoriented by swapping their second and third
    vertex, with a warning.
    """
    lines = list(_data_lines(Path(path).read_text()))

    def header(k, keyword):
        if k >= len(lines):
            raise MeshError(f"{path}: missing '{keyword}' header")
        parts = lines[k].split()
        if len(parts) != 2 or parts[0] != keyword or not parts[1].isdigit():
            raise MeshError(f"{path}: expected '{keyword} <count>', got {lines[k]!r}")
        return int(parts[1])

    nv = header(0, "vertices")
    try:
        vertices = np.array([[float(s) for s in lines[1 + i].split()] for i in range(nv)])
    except (IndexError, ValueError) as exc:
        raise MeshError(f"{path}: malformed vertex block") from exc
    k = 1 + nv
    nt = header(k, "triangles")
    try:
        triangles = np.array([[int(s) for s in lines[k + 1 + i].split()] for i in range(nt)])
    except (IndexError, ValueError) as exc:
        raise MeshError(f"{path}: malformed triangle block") from exc
    if len(lines) > k + 1 + nt:
        raise MeshError(f"{path}: {len(lines) - k - 1 - nt} trailing lines after triangle block")
    if vertices.shape != (nv, 2) or triangles.shape != (nt, 3):
        raise MeshError(f"{path}: wrong number of columns")
    if nt and (triangles.min() < 0 or triangles.max() >= nv):
        raise MeshError(f"{path}: triangle index out of range [0, {nv})")
    if nt:
        cw = _signed_areas(vertices, triangles) < 0
        if cw.any():
            warnings.warn(f"{path}: {cw.sum()} clockwise triangles reoriented", stacklevel=2)
            triangles[cw] = triangles[cw][:, [0, 2, 1]]
    return Mesh(vertices, triangles)


def save_mesh(m, path):
    with open(path, "w") as fh:
        fh.write(f"vertices {m.n_vertices}\n")
        for x, y in m.vertices:
            fh.write(f"{float(x)!r} {float(y)!r}\n")
        fh.write(f"triangles {m.n_triangles}\n")
        for i, j, k in m.triangles:
            fh.write(f"{i} {j} {k}\n")


def benchmark_mesh(level):
    """Barycentric refinement of the uniform mesh used at refinement ``level`` (1-4)."""
    n = {1: 4, 2: 7, 3: 14, 4: 28}.get(level)
    if n is None:
        raise MeshError(f"refinement level must be 1-4, got {level}")
    return barycentric_refine(generate_uniform(n))
