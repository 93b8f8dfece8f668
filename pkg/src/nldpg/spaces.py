"""Degrees of freedom and canonical operators for S^1_0, RT_0, CR^1_0 and broken P_1.

RT_0 coefficients are normal fluxes q . nu_E per edge.  On a triangle the
field is ``q = a + b (x - mid(T))``; the basis function of local edge k is
``sign_k |E_k| / (2|T|) (x - P_k)`` with P_k the vertex opposite E_k.
Broken P_1 functions are stored as vertex values per triangle, ``(NT, 3)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from nldpg.mesh import Mesh

# Degree-4 six-point rule on the reference triangle (barycentric points, weights sum to 1).
_A1, _B1, _W1 = 0.445948490915965, 0.108103018168070, 0.223381589678011
_A2, _B2, _W2 = 0.091576213509771, 0.816847572980459, 0.109951743655322
QUAD_BARY = np.array(
    [
        [_B1, _A1, _A1], [_A1, _B1, _A1], [_A1, _A1, _B1],
        [_B2, _A2, _A2], [_A2, _B2, _A2], [_A2, _A2, _B2],
    ]
)
QUAD_WEIGHTS = np.array([_W1] * 3 + [_W2] * 3)

# 3-point Gauss-Legendre on [0, 1] for edge averages.
GAUSS_EDGE_S = 0.5 + 0.5 * np.array([-np.sqrt(0.6), 0.0, np.sqrt(0.6)])
GAUSS_EDGE_W = np.array([5.0, 8.0, 5.0]) / 18.0


def quad_points(mesh: Mesh) -> np.ndarray:
    """Physical quadrature points, ``(NT, 6, 2)``."""
    return np.einsum("qk,tkd->tqd", QUAD_BARY, mesh.corners)


@dataclass(frozen=True)
class DofLayout:
    n_s: int
    n_rt: int
    n_cr: int
    n_p1: int
    vertex_dof: np.ndarray  # vertex -> S dof or -1

    @property
    def ndof(self) -> int:
        return self.n_s + self.n_rt


def dof_layout(mesh: Mesh) -> DofLayout:
    vdof = mesh.interior_vertex_index()
    return DofLayout(
        n_s=int((vdof >= 0).sum()),
        n_rt=mesh.n_edges,
        n_cr=int((~mesh.boundary_edges).sum()),
        n_p1=3 * mesh.n_triangles,
        vertex_dof=vdof,
    )


@dataclass(frozen=True)
class ElementWeights:
    S0: np.ndarray  # (NT, 2, 2)
    H0f: np.ndarray  # (NT, 2)
    Pi0f: np.ndarray  # (NT,)
    normf2_loc: np.ndarray  # (NT,)
    f_quad: np.ndarray  # f at the quadrature points, (NT, 6)

    @property
    def M(self) -> np.ndarray:
        """(I + S0)^{-1} per triangle."""
        return np.linalg.inv(np.eye(2) + self.S0)


def second_moments(mesh: Mesh) -> np.ndarray:
    """S0|_T = mean over T of (x - mid)(x - mid)^T, exact."""
    d = mesh.corners - mesh.midpoints[:, None, :]
    return np.einsum("tki,tkj->tij", d, d) / 12.0


def compute_weights(mesh: Mesh, f) -> ElementWeights:
    """Element data of the right-hand side ``f(x)`` (x of shape ``(..., 2)``)."""
    x = quad_points(mesh)
    fq = np.broadcast_to(np.asarray(f(x), dtype=float), x.shape[:2]).copy()
    pi0 = fq @ QUAD_WEIGHTS
    h0 = np.einsum("q,tq,tqd->td", QUAD_WEIGHTS, fq, x - mesh.midpoints[:, None, :])
    normf2 = mesh.areas * (fq**2 @ QUAD_WEIGHTS)
    return ElementWeights(S0=second_moments(mesh), H0f=h0, Pi0f=pi0, normf2_loc=normf2, f_quad=fq)


# -- RT_0 -------------------------------------------------------------------

def rt_local_maps(mesh: Mesh):
    """Linear maps from the three local edge fluxes to (a, b).

    Returns ``A_loc`` of shape ``(NT, 2, 3)`` and ``B_loc`` of shape ``(NT, 3)``
    so that ``a = A_loc @ c`` and ``b = B_loc @ c``; ``div q = 2 b``.
    """
    alpha = mesh.edge_signs * mesh.local_edge_lengths / (2.0 * mesh.areas[:, None])
    opposite = np.roll(mesh.corners, -2, axis=1)  # vertex k+2 is opposite local edge k
    A_loc = np.einsum("tk,tkd->tdk", alpha, mesh.midpoints[:, None, :] - opposite)
    return A_loc, alpha


def rt_fields(mesh: Mesh, pRT: np.ndarray):
    """Per-triangle constant part ``a`` (= Pi_0 q) and slope ``b`` of an RT_0 field."""
    A_loc, B_loc = rt_local_maps(mesh)
    c = np.asarray(pRT)[mesh.tri_edges]
    return np.einsum("tdk,tk->td", A_loc, c), np.einsum("tk,tk->t", B_loc, c)


def pi0_rt(mesh: Mesh, pRT: np.ndarray) -> np.ndarray:
    return rt_fields(mesh, pRT)[0]


def rt_highorder_norm(mesh: Mesh, pRT: np.ndarray) -> float:
    """||(1 - Pi_0) q||_{L2}, exact: ||b (x - mid)||^2 = b^2 |T| tr S0."""
    _, b = rt_fields(mesh, pRT)
    tr = np.trace(second_moments(mesh), axis1=1, axis2=2)
    return float(np.sqrt(np.sum(b**2 * mesh.areas * tr)))


def rt_evaluate(mesh: Mesh, pRT: np.ndarray, tri: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Evaluate the RT_0 field at points ``x`` lying in triangles ``tri``."""
    a, b = rt_fields(mesh, pRT)
    return a[tri] + b[tri][..., None] * (x - mesh.midpoints[tri])


def rt_interpolate(mesh: Mesh, q) -> np.ndarray:
    """Canonical RT_0 interpolation: mean normal flux of ``q(x)`` on each edge."""
    v = mesh.vertices[mesh.edges]
    pts = v[:, 0, None, :] + GAUSS_EDGE_S[None, :, None] * (v[:, 1] - v[:, 0])[:, None, :]
    vals = np.asarray(q(pts))
    return np.einsum("q,eqd,ed->e", GAUSS_EDGE_W, vals, mesh.edge_normals)


def rt_mass_matrices(mesh: Mesh) -> np.ndarray:
    """Local RT_0 mass matrices, ``(NT, 3, 3)``, exact."""
    alpha = mesh.edge_signs * mesh.local_edge_lengths / (2.0 * mesh.areas[:, None])
    opposite = np.roll(mesh.corners, -2, axis=1)
    d = mesh.midpoints[:, None, :] - opposite
    tr = np.trace(second_moments(mesh), axis1=1, axis2=2)
    inner = np.einsum("tid,tjd->tij", d, d) + tr[:, None, None]
    return mesh.areas[:, None, None] * alpha[:, :, None] * alpha[:, None, :] * inner


# -- broken P_1 / CR ---------------------------------------------------------

def p1_mass(mesh: Mesh) -> np.ndarray:
    base = (np.ones((3, 3)) + np.eye(3)) / 12.0
    return mesh.areas[:, None, None] * base


def p1_stiffness(mesh: Mesh) -> np.ndarray:
    g = mesh.grad_lambda
    return mesh.areas[:, None, None] * np.einsum("tid,tjd->tij", g, g)


def p1_h1_matrices(mesh: Mesh) -> np.ndarray:
    """Local H^1(T) Gram matrices of the barycentric basis."""
    return p1_mass(mesh) + p1_stiffness(mesh)


def p1_from_mean_gradient(mesh: Mesh, mean: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """Vertex values of the P_1 function with element mean ``mean`` and gradient ``grad``."""
    d = mesh.corners - mesh.midpoints[:, None, :]
    return mean[:, None] + np.einsum("tkd,td->tk", d, grad)


def p1_gradient(mesh: Mesh, vals: np.ndarray) -> np.ndarray:
    return np.einsum("tk,tkd->td", vals, mesh.grad_lambda)


def p1_midpoint_values(vals: np.ndarray) -> np.ndarray:
    """Values at the midpoints of local edges (k, k+1), ``(NT, 3)``."""
    return 0.5 * (vals + np.roll(vals, -1, axis=1))


def p1_from_midpoints(mid: np.ndarray) -> np.ndarray:
    """Inverse of :func:`p1_midpoint_values`: vertex k touches local edges k and k-1."""
    return mid + np.roll(mid, 1, axis=1) - np.roll(mid, -1, axis=1)


def cr_jumps(mesh: Mesh, vals: np.ndarray):
    """Midpoint jumps of a broken P_1 function on interior edges and traces on boundary edges."""
    mid = p1_midpoint_values(vals)
    edge_val = np.zeros((mesh.n_edges, 2))
    plus = mesh.edge_tris[:, 0]
    te = mesh.tri_edges
    is_plus = np.arange(mesh.n_triangles)[:, None] == plus[te]
    edge_val[te[is_plus], 0] = mid[is_plus]
    edge_val[te[~is_plus], 1] = mid[~is_plus]
    inner = ~mesh.boundary_edges
    return edge_val[inner, 0] - edge_val[inner, 1], edge_val[~inner, 0]


def inc_interpolate(mesh: Mesh, v) -> np.ndarray:
    """Local nonconforming interpolation: match edge averages of ``v`` on each triangle.

    ``v(x, tri)`` evaluates the restriction of v to triangle(s) ``tri`` at
    points ``x``; returns broken P_1 vertex values ``(NT, 3)``.
    """
    c = mesh.corners
    start = c
    vec = np.roll(c, -1, axis=1) - c
    pts = start[:, :, None, :] + GAUSS_EDGE_S[None, None, :, None] * vec[:, :, None, :]
    tri = np.broadcast_to(np.arange(mesh.n_triangles)[:, None, None], pts.shape[:3])
    vals = np.asarray(v(pts, tri))
    mids = np.einsum("q,tkq->tk", GAUSS_EDGE_W, vals)
    return p1_from_midpoints(mids)


def prolongate(coarse: Mesh, fine: Mesh, uC: np.ndarray, pRT: np.ndarray):
    """Transfer (u_C, p_RT) to a refinement of ``coarse``.

    u_C is interpolated nodally; p_RT by the canonical RT_0 interpolation of
    the coarse field, evaluated on each fine edge inside its parent triangle.
    """
    if fine.tri_parent is None or fine.vertex_parents is None:
        raise ValueError("fine mesh carries no refinement relation")
    if fine.tri_parent.max() >= coarse.n_triangles or fine.vertex_parents[: coarse.n_vertices].max() >= coarse.n_vertices:
        raise ValueError("meshes are not in refinement relation")
    cdof = coarse.interior_vertex_index()
    ufull = np.zeros(coarse.n_vertices)
    ufull[cdof >= 0] = uC
    fine_full = 0.5 * ufull[fine.vertex_parents].sum(axis=1)
    fdof = fine.interior_vertex_index()
    u_fine = fine_full[fdof >= 0]

    a, b = rt_fields(coarse, pRT)
    parent = fine.tri_parent[fine.edge_tris[:, 0]]
    x = fine.edge_midpoints
    q = a[parent] + b[parent][:, None] * (x - coarse.midpoints[parent])
    p_fine = np.einsum("ed,ed->e", q, fine.edge_normals)
    return u_fine, p_fine


@dataclass
class DiscreteState:
    """Coefficients of (u_C, p_RT) and optionally the residual representer (broken P_1)."""

    uC: np.ndarray
    pRT: np.ndarray
    vRep: np.ndarray | None = None

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.uC, self.pRT])

    @classmethod
    def from_vector(cls, layout: DofLayout, x: np.ndarray) -> "DiscreteState":
        x = np.asarray(x, dtype=float)
        if x.shape != (layout.ndof,):
            raise ValueError(f"state vector has shape {x.shape}, expected ({layout.ndof},)")
        return cls(uC=x[: layout.n_s].copy(), pRT=x[layout.n_s:].copy())

    @classmethod
    def zeros(cls, layout: DofLayout) -> "DiscreteState":
        return cls(uC=np.zeros(layout.n_s), pRT=np.zeros(layout.n_rt))

    def check(self, layout: DofLayout) -> None:
        if self.uC.shape != (layout.n_s,) or self.pRT.shape != (layout.n_rt,):
            raise ValueError(
                f"state dims ({self.uC.shape}, {self.pRT.shape}) do not match "
                f"S1_0={layout.n_s}, RT0={layout.n_rt}"
            )


def full_vertex_values(mesh: Mesh, uC: np.ndarray) -> np.ndarray:
    """Extend S^1_0 coefficients by zero to all vertices."""
    vdof = mesh.interior_vertex_index()
    out = np.zeros(mesh.n_vertices)
    out[vdof >= 0] = uC
    return out
