"""Conforming triangulations with red and newest-vertex-bisection refinement.

Convention: triangle ``(n0, n1, n2)`` is counterclockwise, local edge ``k``
joins ``n_k`` and ``n_{k+1}``, and local edge 0 is the refinement edge, so
``n2`` is the newest vertex.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np


@dataclass(eq=False)
class Mesh:
    """Immutable triangulation.

    ``tri_parent`` and ``vertex_parents`` are set by refinement: the coarse
    triangle containing each fine triangle, and for every fine vertex the two
    coarse vertices whose midpoint it is (an old vertex lists itself twice).
    """

    vertices: np.ndarray
    triangles: np.ndarray
    tri_parent: np.ndarray | None = field(default=None, repr=False)
    vertex_parents: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=float)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int64)
        self.vertices.setflags(write=False)
        self.triangles.setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    # -- topology ---------------------------------------------------------

    @cached_property
    def _edge_data(self):
        t = self.triangles
        nt = len(t)
        local = np.stack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]], axis=1).reshape(-1, 2)
        key = np.sort(local, axis=1)
        edges, inverse = np.unique(key, axis=0, return_inverse=True)
        inverse = inverse.ravel()
        tri_edges = inverse.reshape(nt, 3)
        ne = len(edges)
        # T+ is the lower triangle index; entries are visited in increasing triangle order
        owner = np.repeat(np.arange(nt), 3)
        edge_tris = np.full((ne, 2), -1, dtype=np.int64)
        order = np.lexsort((owner, inverse))
        inv_sorted = inverse[order]
        first = np.ones(len(order), dtype=bool)
        first[1:] = inv_sorted[1:] != inv_sorted[:-1]
        edge_tris[inv_sorted[first], 0] = owner[order][first]
        edge_tris[inv_sorted[~first], 1] = owner[order][~first]
        return edges, tri_edges, edge_tris

    @property
    def edges(self) -> np.ndarray:
        return self._edge_data[0]

    @property
    def tri_edges(self) -> np.ndarray:
        """Global edge index of local edge k of each triangle, ``(NT, 3)``."""
        return self._edge_data[1]

    @property
    def edge_tris(self) -> np.ndarray:
        """``(NE, 2)`` incident triangles (T+, T-); T- is -1 on the boundary."""
        return self._edge_data[2]

    @cached_property
    def boundary_edges(self) -> np.ndarray:
        return self.edge_tris[:, 1] < 0

    @cached_property
    def boundary_vertices(self) -> np.ndarray:
        flag = np.zeros(self.n_vertices, dtype=bool)
        flag[self.edges[self.boundary_edges].ravel()] = True
        return flag

    @cached_property
    def edge_signs(self) -> np.ndarray:
        """nu_T . nu_E for each local edge, ``(NT, 3)`` of +-1."""
        plus = self.edge_tris[self.tri_edges, 0]
        return np.where(plus == np.arange(self.n_triangles)[:, None], 1.0, -1.0)

    # -- geometry -----------------------------------------------------------

    @cached_property
    def corners(self) -> np.ndarray:
        return self.vertices[self.triangles]

    @cached_property
    def areas(self) -> np.ndarray:
        c = self.corners
        d1 = c[:, 1] - c[:, 0]
        d2 = c[:, 2] - c[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @cached_property
    def midpoints(self) -> np.ndarray:
        """Triangle barycenters."""
        return self.corners.mean(axis=1)

    @cached_property
    def local_edge_vectors(self) -> np.ndarray:
        c = self.corners
        return np.roll(c, -1, axis=1) - c

    @cached_property
    def local_edge_lengths(self) -> np.ndarray:
        return np.linalg.norm(self.local_edge_vectors, axis=2)

    @cached_property
    def diameters(self) -> np.ndarray:
        return self.local_edge_lengths.max(axis=1)

    @cached_property
    def outer_normals(self) -> np.ndarray:
        """Outward unit normal of each local edge, ``(NT, 3, 2)``."""
        t = self.local_edge_vectors
        n = np.stack([t[..., 1], -t[..., 0]], axis=-1)
        return n / self.local_edge_lengths[..., None]

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        return np.linalg.norm(np.diff(self.vertices[self.edges], axis=1)[:, 0], axis=1)

    @cached_property
    def edge_midpoints(self) -> np.ndarray:
        return self.vertices[self.edges].mean(axis=1)

    @cached_property
    def edge_normals(self) -> np.ndarray:
        """nu_E: outer normal of T+ on E."""
        plus = self.edge_tris[:, 0]
        loc = np.argmax(self.tri_edges[plus] == np.arange(self.n_edges)[:, None], axis=1)
        return self.outer_normals[plus, loc]

    @cached_property
    def grad_lambda(self) -> np.ndarray:
        """Gradients of the barycentric coordinates, ``(NT, 3, 2)``."""
        c = self.corners
        jac = np.stack([c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]], axis=2)  # columns are edge vectors
        inv = np.linalg.inv(jac)
        g = np.empty((self.n_triangles, 3, 2))
        g[:, 1:] = inv
        g[:, 0] = -inv[:, 0] - inv[:, 1]
        return g

    @property
    def h_max(self) -> float:
        return float(self.diameters.max())

    @property
    def total_area(self) -> float:
        return float(self.areas.sum())

    @cached_property
    def _vertex_dof(self) -> np.ndarray:
        idx = np.full(self.n_vertices, -1, dtype=np.int64)
        inner = ~self.boundary_vertices
        idx[inner] = np.arange(inner.sum())
        return idx

    def interior_vertex_index(self) -> np.ndarray:
        """Map vertex -> S^1_0 dof index, -1 on the boundary."""
        return self._vertex_dof

    def check_regular(self) -> list[str]:
        """Return a list of violated conformity conditions (empty when regular)."""
        problems = []
        if np.any(self.areas <= 0):
            problems.append("non-positive triangle area")
        counts = np.bincount(self.tri_edges.ravel(), minlength=self.n_edges)
        if np.any(counts > 2):
            problems.append("edge shared by more than two triangles")
        # hanging node: a vertex lying in the interior of some edge
        v = self.vertices
        a = v[self.edges[:, 0]]
        b = v[self.edges[:, 1]]
        tol = 1e-12 * max(1.0, np.abs(v).max())
        for e in range(self.n_edges):
            d = b[e] - a[e]
            rel = v - a[e]
            cross = np.abs(d[0] * rel[:, 1] - d[1] * rel[:, 0])
            s = rel @ d / (d @ d)
            hit = (cross < tol * np.linalg.norm(d)) & (s > 1e-12) & (s < 1 - 1e-12)
            if np.any(hit):
                problems.append(f"hanging node on edge {e}")
                break
        # interior edge normals point out of T+
        plus = self.edge_tris[:, 0]
        towards = self.edge_midpoints - self.midpoints[plus]
        if np.any(np.einsum("ij,ij->i", towards, self.edge_normals) <= 0):
            problems.append("edge normal not outward for T+")
        return problems


def _orient_refinement_edges(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Make every triangle counterclockwise with its longest edge as local edge 0.

    Ties go to the rotation whose opposite vertex has the smallest index.
    """
    tri = np.array(triangles, dtype=np.int64)
    c = vertices[tri]
    d1 = c[:, 1] - c[:, 0]
    d2 = c[:, 2] - c[:, 0]
    flip = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0] < 0
    tri[flip] = tri[flip][:, [0, 2, 1]]
    out = np.empty_like(tri)
    for i, (a, b, c_) in enumerate(tri):
        rots = [(a, b, c_), (b, c_, a), (c_, a, b)]
        lengths = [np.linalg.norm(vertices[r[0]] - vertices[r[1]]) for r in rots]
        lmax = max(lengths)
        cands = [r for r, ln in zip(rots, lengths) if ln >= lmax * (1 - 1e-12)]
        out[i] = min(cands, key=lambda r: r[2])
    return out


def criss_cross_mesh(cells) -> Mesh:
    """Criss-cross triangulation of a union of axis-parallel unit cells.

    ``cells`` lists lower-left corners ``(x, y)`` and side length ``h`` as
    ``(x, y, h)``; every cell gets its center as an extra vertex.
    """
    index: dict[tuple[float, float], int] = {}
    pts: list[tuple[float, float]] = []

    def vid(p):
        key = (round(p[0], 12), round(p[1], 12))
        if key not in index:
            index[key] = len(pts)
            pts.append(key)
        return index[key]

    tris = []
    for x, y, h in cells:
        ll, lr, ur, ul = vid((x, y)), vid((x + h, y)), vid((x + h, y + h)), vid((x, y + h))
        ctr = vid((x + h / 2, y + h / 2))
        tris += [(ll, lr, ctr), (lr, ur, ctr), (ur, ul, ctr), (ul, ll, ctr)]
    vertices = np.array(pts)
    return Mesh(vertices, _orient_refinement_edges(vertices, tris))


def make_square_mesh() -> Mesh:
    """Criss-cross triangulation of (-1, 1)^2 into four triangles."""
    return criss_cross_mesh([(-1.0, -1.0, 2.0)])


def make_lshape_mesh() -> Mesh:
    """Criss-cross triangulation of (-1, 1)^2 minus [0, 1]^2 into twelve triangles."""
    return criss_cross_mesh([(-1.0, 0.0, 1.0), (-1.0, -1.0, 1.0), (0.0, -1.0, 1.0)])


def _with_edge_midpoints(mesh: Mesh, edge_mask: np.ndarray):
    """Append the midpoints of the masked edges; return (vertices, edge->new vertex, vertex_parents)."""
    nv = mesh.n_vertices
    marked = np.flatnonzero(edge_mask)
    new_id = np.full(mesh.n_edges, -1, dtype=np.int64)
    new_id[marked] = nv + np.arange(len(marked))
    vertices = np.vstack([mesh.vertices, mesh.edge_midpoints[marked]])
    parents = np.vstack([np.repeat(np.arange(nv)[:, None], 2, axis=1), mesh.edges[marked]])
    return vertices, new_id, parents


def refine_uniform(mesh: Mesh) -> Mesh:
    """Red refinement: each triangle into four similar children.

    Children inherit refinement edges parallel to the parent's.
    """
    vertices, new_id, parents = _with_edge_midpoints(mesh, np.ones(mesh.n_edges, dtype=bool))
    n0, n1, n2 = mesh.triangles.T
    m0, m1, m2 = new_id[mesh.tri_edges].T  # midpoints of n0n1, n1n2, n2n0
    children = np.stack(
        [
            np.stack([n0, m0, m2], axis=1),
            np.stack([m0, n1, m1], axis=1),
            np.stack([m2, m1, n2], axis=1),
            np.stack([m1, m2, m0], axis=1),
        ],
        axis=1,
    ).reshape(-1, 3)
    tri_parent = np.repeat(np.arange(mesh.n_triangles), 4)
    return Mesh(vertices, children, tri_parent=tri_parent, vertex_parents=parents)


def nvb_closure(mesh: Mesh, marked, all_edges: bool = True) -> np.ndarray:
    """Edges to bisect so that refining ``marked`` leaves no hanging node.

    With ``all_edges`` every edge of a marked triangle is bisected (four
    children, "bisec3"); otherwise only its refinement edge.
    """
    edge_mask = np.zeros(mesh.n_edges, dtype=bool)
    marked = np.asarray(sorted(marked), dtype=np.int64)
    if marked.size == 0:
        return edge_mask
    te = mesh.tri_edges
    edge_mask[te[marked] if all_edges else te[marked, 0]] = True
    while True:
        touched = edge_mask[te].any(axis=1) & ~edge_mask[te[:, 0]]
        if not touched.any():
            return edge_mask
        edge_mask[te[touched, 0]] = True


def refine_nvb(mesh: Mesh, marked, all_edges: bool = True) -> Mesh:
    """Smallest regular NVB refinement in which every marked triangle is refined.

    By default all three edges of a marked triangle are bisected, so marking
    every triangle gives a uniform refinement into four children each.
    """
    edge_mask = nvb_closure(mesh, marked, all_edges)
    if not edge_mask.any():
        return Mesh(mesh.vertices, mesh.triangles,
                    tri_parent=np.arange(mesh.n_triangles),
                    vertex_parents=np.repeat(np.arange(mesh.n_vertices)[:, None], 2, axis=1))
    vertices, new_id, parents = _with_edge_midpoints(mesh, edge_mask)
    t = mesh.triangles
    m = new_id[mesh.tri_edges]
    flags = edge_mask[mesh.tri_edges]
    n0, n1, n2 = t.T
    m0, m1, m2 = m.T
    pattern = flags[:, 0] * 1 + flags[:, 1] * 2 + flags[:, 2] * 4

    def rows(sel, *kids):
        return [np.stack(k, axis=1)[sel] for k in kids]

    pieces, owners = [], []
    cases = {
        0: lambda s: rows(s, (n0, n1, n2)),
        1: lambda s: rows(s, (n2, n0, m0), (n1, n2, m0)),
        3: lambda s: rows(s, (n2, n0, m0), (m0, n1, m1), (n2, m0, m1)),
        5: lambda s: rows(s, (m0, n2, m2), (n0, m0, m2), (n1, n2, m0)),
        7: lambda s: rows(s, (m0, n2, m2), (n0, m0, m2), (m0, n1, m1), (n2, m0, m1)),
    }
    if np.any(~np.isin(pattern, list(cases))):
        raise AssertionError("NVB closure left a triangle without its refinement edge marked")
    for code, make in cases.items():
        sel = pattern == code
        if not sel.any():
            continue
        kids = make(sel)
        idx = np.flatnonzero(sel)
        for j, k in enumerate(kids):
            pieces.append(k)
            owners.append(np.stack([idx, np.full_like(idx, j)], axis=1))
    tris = np.vstack(pieces)
    own = np.vstack(owners)
    order = np.lexsort((own[:, 1], own[:, 0]))
    return Mesh(vertices, tris[order], tri_parent=own[order, 0], vertex_parents=parents)


def refine_uniform_nvb(mesh: Mesh) -> Mesh:
    """Uniform refinement by newest-vertex bisection of every edge (four children each)."""
    return refine_nvb(mesh, np.arange(mesh.n_triangles))


def export_mesh(mesh: Mesh, path) -> None:
    """Write the plain-text mesh format (NV NT NE header, vertices, triangles, edges)."""
    path = Path(path)
    bv = mesh.boundary_vertices.astype(int)
    be = mesh.boundary_edges.astype(int)
    lines = [f"{mesh.n_vertices} {mesh.n_triangles} {mesh.n_edges}"]
    lines += [f"{x!r} {y!r} {b}" for (x, y), b in zip(mesh.vertices.tolist(), bv)]
    lines += [f"{a} {b} {c} 0" for a, b, c in mesh.triangles.tolist()]
    lines += [f"{a} {b} {f}" for (a, b), f in zip(mesh.edges.tolist(), be)]
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write mesh to {path}: {exc}") from exc


def read_mesh(path) -> Mesh:
    """Read a mesh written by :func:`export_mesh`; the refedge column rotates triangles."""
    path = Path(path)
    try:
        text = path.read_text().split("\n")
    except OSError as exc:
        raise OSError(f"cannot read mesh from {path}: {exc}") from exc
    nv, nt, _ = (int(s) for s in text[0].split())
    vertices = np.array([[float(s) for s in line.split()[:2]] for line in text[1:1 + nv]])
    tris = []
    for line in text[1 + nv:1 + nv + nt]:
        a, b, c, r = (int(s) for s in line.split())
        tri = (a, b, c)
        tris.append(tri[r:] + tri[:r])
    return Mesh(vertices, np.array(tris, dtype=np.int64).reshape(-1, 3))
