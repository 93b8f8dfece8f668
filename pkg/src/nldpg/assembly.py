"""Weighted least-squares functional, its derivatives, and the dPG residual operators.

Per triangle T the functional is ``|T| (R1^2 + w^T (I + S0)^{-1} w)`` with
``R1 = Pi0 f + div p`` and ``w = Pi0 p - sigma(grad u) + H0 f``.  Local
unknowns are ordered as the three vertex values of u followed by the
three edge fluxes of p.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from nldpg.mesh import Mesh
from nldpg.nonlinearity import PhiModel, dsigma, hess_sigma, sigma
from nldpg.spaces import (
    QUAD_BARY,
    QUAD_WEIGHTS,
    DiscreteState,
    ElementWeights,
    dof_layout,
    full_vertex_values,
    p1_h1_matrices,
    p1_stiffness,
    rt_local_maps,
    rt_mass_matrices,
)


@dataclass(frozen=True)
class LsEvaluation:
    value: float
    gradient: np.ndarray
    hessian: sp.csr_matrix
    per_element: np.ndarray


class _Local:
    """Mesh-dependent arrays shared by all assembly routines."""

    def __init__(self, mesh: Mesh):
        layout = dof_layout(mesh)
        self.layout = layout
        self.G = np.transpose(mesh.grad_lambda, (0, 2, 1))  # (NT, 2, 3)
        self.A, self.B = rt_local_maps(mesh)
        vd = layout.vertex_dof[mesh.triangles]
        self.dofs = np.concatenate([vd, layout.n_s + mesh.tri_edges], axis=1)
        self.active = np.concatenate([vd >= 0, np.ones_like(vd, dtype=bool)], axis=1)
        self.dofs_safe = np.where(self.active, self.dofs, 0)
        # trace integrals: int_{E_k} lambda_i = |E_k| / 2 for i in {k, k+1}
        on_edge = np.zeros((3, 3))
        for k in range(3):
            on_edge[k, k] = on_edge[(k + 1) % 3, k] = 1.0
        self.trace = 0.5 * on_edge[None] * mesh.local_edge_lengths[:, None, :]  # (NT, i, k)


def local_data(mesh: Mesh) -> _Local:
    cache = mesh.__dict__.setdefault("_assembly_cache", {})
    if "local" not in cache:
        cache["local"] = _Local(mesh)
    return cache["local"]


def _unpack(mesh: Mesh, loc: _Local, state: DiscreteState):
    state.check(loc.layout)
    u = full_vertex_values(mesh, state.uC)[mesh.triangles]
    c = np.asarray(state.pRT)[mesh.tri_edges]
    return u, c


def residual_parts(mesh: Mesh, model: PhiModel, weights: ElementWeights, state: DiscreteState):
    """Elementwise gradient of u_C, the weighted vector w, R1 and (I + S0)^{-1}."""
    loc = local_data(mesh)
    u, c = _unpack(mesh, loc, state)
    g = np.einsum("tdk,tk->td", loc.G, u)
    a = np.einsum("tdk,tk->td", loc.A, c)
    b = np.einsum("tk,tk->t", loc.B, c)
    w = a - sigma(model, g) + weights.H0f
    R1 = weights.Pi0f + 2.0 * b
    return g, w, R1, weights.M


def ls_elementwise(mesh, model, weights, state) -> np.ndarray:
    _, w, R1, M = residual_parts(mesh, model, weights, state)
    return mesh.areas * (R1**2 + np.einsum("td,tde,te->t", w, M, w))


def ls_value(mesh, model, weights, state) -> float:
    return float(ls_elementwise(mesh, model, weights, state).sum())


def _jacobians(mesh, model, weights, state):
    loc = local_data(mesh)
    g, w, R1, M = residual_parts(mesh, model, weights, state)
    nt = mesh.n_triangles
    Jw = np.empty((nt, 2, 6))
    Jw[:, :, :3] = -np.einsum("tde,tek->tdk", dsigma(model, g), loc.G)
    Jw[:, :, 3:] = loc.A
    JR = np.zeros((nt, 6))
    JR[:, 3:] = 2.0 * loc.B
    return loc, g, w, R1, M, Jw, JR


def _scatter_vector(loc: _Local, local: np.ndarray) -> np.ndarray:
    vals = np.where(loc.active, local, 0.0)
    return np.bincount(loc.dofs_safe.ravel(), weights=vals.ravel(), minlength=loc.layout.ndof)


def _scatter_matrix(loc: _Local, local: np.ndarray, n: int | None = None) -> sp.csr_matrix:
    n = loc.layout.ndof if n is None else n
    mask = loc.active[:, :, None] & loc.active[:, None, :]
    rows = np.broadcast_to(loc.dofs[:, :, None], local.shape)[mask]
    cols = np.broadcast_to(loc.dofs[:, None, :], local.shape)[mask]
    return sp.csr_matrix((local[mask], (rows, cols)), shape=(n, n))


def ls_gradient(mesh, model, weights, state) -> np.ndarray:
    loc, g, w, R1, M, Jw, JR = _jacobians(mesh, model, weights, state)
    Mw = np.einsum("tde,te->td", M, w)
    local = 2.0 * mesh.areas[:, None] * (R1[:, None] * JR + np.einsum("tdk,td->tk", Jw, Mw))
    return _scatter_vector(loc, local)


def ls_hessian(mesh, model, weights, state, curvature: bool = True) -> sp.csr_matrix:
    """Hessian of the functional; ``curvature=False`` gives the Gauss-Newton part only."""
    loc, g, w, R1, M, Jw, JR = _jacobians(mesh, model, weights, state)
    local = np.einsum("ti,tj->tij", JR, JR) + np.einsum("tdi,tde,tej->tij", Jw, M, Jw)
    if curvature and not model.is_linear:
        Mw = np.einsum("tde,te->td", M, w)
        H = hess_sigma(model, g)  # (NT, d, j, l)
        # second derivative of w_d wrt u is -G^T H[d] G
        curv = -np.einsum("td,tdjl,tja,tlb->tab", Mw, H, loc.G, loc.G)
        local[:, :3, :3] += curv
    local *= 2.0 * mesh.areas[:, None, None]
    return _scatter_matrix(loc, local)


def ls_evaluate(mesh, model, weights, state) -> LsEvaluation:
    per = ls_elementwise(mesh, model, weights, state)
    return LsEvaluation(
        value=float(per.sum()),
        gradient=ls_gradient(mesh, model, weights, state),
        hessian=ls_hessian(mesh, model, weights, state),
        per_element=per,
    )


# -- dPG residual in the broken test space -----------------------------------

def load_vector_p1(mesh: Mesh, weights: ElementWeights) -> np.ndarray:
    """F(lambda_i) per triangle by the degree-4 rule, ``(NT, 3)``."""
    return mesh.areas[:, None] * np.einsum("q,tq,qi->ti", QUAD_WEIGHTS, weights.f_quad, QUAD_BARY)


def b_form_p1(mesh: Mesh, model: PhiModel, state: DiscreteState) -> np.ndarray:
    """b(u_C, t; lambda_i) = int sigma(grad u_C) . grad lambda_i - <t, lambda_i>, ``(NT, 3)``."""
    loc = local_data(mesh)
    u, c = _unpack(mesh, loc, state)
    g = np.einsum("tdk,tk->td", loc.G, u)
    volume = mesh.areas[:, None] * np.einsum("td,tid->ti", sigma(model, g), mesh.grad_lambda)
    t = mesh.edge_signs * c
    return volume - np.einsum("tik,tk->ti", loc.trace, t)


def riesz_representer(mesh, model, weights, state) -> np.ndarray:
    """Broken-P_1 representer y with a(y, eta) = F(eta) - b(x; eta) for all eta.

    Solves the 3x3 H^1(T) problem on each triangle; returns vertex values ``(NT, 3)``.
    """
    K = p1_h1_matrices(mesh)
    rhs = load_vector_p1(mesh, weights) - b_form_p1(mesh, model, state)
    return np.linalg.solve(K, rhs[..., None])[..., 0]


def residual_dual_norm(mesh, model, weights, state) -> float:
    y = riesz_representer(mesh, model, weights, state)
    K = p1_h1_matrices(mesh)
    return float(np.sqrt(np.einsum("ti,tij,tj->", y, K, y)))


def bprime_matrix(mesh: Mesh, model: PhiModel, state: DiscreteState) -> sp.csr_matrix:
    """Matrix of b'(x; xi, eta): rows broken-P_1 vertex dofs (3 per triangle), columns X_h dofs."""
    loc = local_data(mesh)
    u, _ = _unpack(mesh, loc, state)
    g = np.einsum("tdk,tk->td", loc.G, u)
    D = dsigma(model, g)
    nt = mesh.n_triangles
    local = np.empty((nt, 3, 6))
    local[:, :, :3] = mesh.areas[:, None, None] * np.einsum("tid,tde,tje->tij", mesh.grad_lambda, D, mesh.grad_lambda)
    local[:, :, 3:] = -loc.trace * mesh.edge_signs[:, None, :]
    rows = np.broadcast_to(3 * np.arange(nt)[:, None, None] + np.arange(3)[None, :, None], local.shape)
    cols = np.broadcast_to(loc.dofs[:, None, :], local.shape)
    mask = np.broadcast_to(loc.active[:, None, :], local.shape)
    return sp.csr_matrix((local[mask], (rows[mask], cols[mask])), shape=(3 * nt, loc.layout.ndof))


def mixed_residual(mesh, model, weights, state) -> tuple[float, float]:
    """Dual norms of both equations of the mixed system at (state, state.vRep).

    The first is measured in the broken H^1 dual, the second in the dual of X_h.
    """
    if state.vRep is None:
        raise ValueError("state carries no residual representer")
    K = p1_h1_matrices(mesh)
    y = state.vRep
    r1 = np.einsum("tij,tj->ti", K, y) + b_form_p1(mesh, model, state) - load_vector_p1(mesh, weights)
    first = np.sqrt(max(np.einsum("ti,ti->", r1, np.linalg.solve(K, r1[..., None])[..., 0]), 0.0))
    r2 = bprime_matrix(mesh, model, state).T @ y.ravel()
    second = dual_norm(mesh, r2)
    return float(first), float(second)


# -- norm on X_h ------------------------------------------------------------

def xnorm_operator(mesh: Mesh) -> sp.csr_matrix:
    """a_NC on S^1_0 plus the H(div) inner product on RT_0 (block diagonal)."""
    loc = local_data(mesh)
    local = np.zeros((mesh.n_triangles, 6, 6))
    local[:, :3, :3] = p1_stiffness(mesh)
    local[:, 3:, 3:] = rt_mass_matrices(mesh) + 4.0 * mesh.areas[:, None, None] * loc.B[:, :, None] * loc.B[:, None, :]
    return _scatter_matrix(loc, local)


def xnorm_factor(mesh: Mesh):
    """Cached sparse LU of the X_h Gram matrix."""
    from scipy.sparse.linalg import splu

    cache = mesh.__dict__.setdefault("_assembly_cache", {})
    if "xnorm_lu" not in cache:
        cache["xnorm_lu"] = splu(xnorm_operator(mesh).tocsc())
    return cache["xnorm_lu"]


def dual_norm(mesh: Mesh, g: np.ndarray) -> float:
    """Norm of a functional on X_h given by its coefficient vector: (g^T K^{-1} g)^{1/2}."""
    z = xnorm_factor(mesh).solve(np.asarray(g, dtype=float))
    return float(np.sqrt(max(g @ z, 0.0)))
