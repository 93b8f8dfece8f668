"""A posteriori quantities: local estimator, marking, energy, exact errors and certificates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from nldpg.assembly import ls_elementwise, riesz_representer
from nldpg.mesh import Mesh
from nldpg.nonlinearity import PhiModel, sigma
from nldpg.spaces import (
    QUAD_BARY,
    QUAD_WEIGHTS,
    DiscreteState,
    ElementWeights,
    full_vertex_values,
    p1_gradient,
    quad_points,
    rt_fields,
)

KAPPA = 0.29823
C_DF_ISOSCELES = 6.24


@dataclass
class ErrorReport:
    """Per-level error quantities; ``None`` marks what is unavailable."""

    eta_global: float
    eta_local: np.ndarray
    vmax: float | None = None
    energy: float | None = None
    energy_diff_sqrt: float | None = None
    error_energy: float | None = None
    error_hdiv: float | None = None
    guaranteed_bound: float | None = None
    uniqueness_flag: bool | None = None


def data_term(mesh: Mesh, weights: ElementWeights) -> np.ndarray:
    """||h_T f||^2_{L2(T)} per triangle, h_T the diameter."""
    return mesh.diameters**2 * weights.normf2_loc


def local_estimator(mesh: Mesh, model: PhiModel, weights: ElementWeights, state: DiscreteState) -> np.ndarray:
    """Squared local indicators eta^2(T) = local LS residual + ||h_T f||^2_{L2(T)}."""
    return ls_elementwise(mesh, model, weights, state) + data_term(mesh, weights)


def doerfler_mark(eta2: np.ndarray, theta: float) -> np.ndarray:
    """Minimal set with sum of ``eta2`` over it at least ``theta * sum(eta2)``.

    ``eta2`` are squared indicators.  Greedy over a stable descending sort, so
    ties are broken by the smaller triangle id.  Returns sorted ids.
    """
    if not 0.0 < theta < 1.0:
        raise ValueError(f"theta must lie in (0, 1), got {theta}")
    eta2 = np.asarray(eta2, dtype=float)
    total = eta2.sum()
    if total <= 0.0:
        return np.zeros(0, dtype=int)
    order = np.argsort(-eta2, kind="stable")
    csum = np.cumsum(eta2[order])
    n = int(np.searchsorted(csum, theta * total, side="left")) + 1
    return np.sort(order[: min(n, eta2.size)])


def energy(mesh: Mesh, model: PhiModel, state: DiscreteState, f) -> float:
    """E(u_C) = int varphi(|grad u_C|) - int f u_C; the second term by the degree-4 rule."""
    u = full_vertex_values(mesh, state.uC)[mesh.triangles]
    t = np.linalg.norm(p1_gradient(mesh, u), axis=1)
    stored = np.sum(mesh.areas * model.varphi(t))
    fq = np.broadcast_to(np.asarray(f(quad_points(mesh)), dtype=float), (mesh.n_triangles, QUAD_WEIGHTS.size))
    load = np.sum(mesh.areas * np.einsum("q,tq,qk,tk->t", QUAD_WEIGHTS, fq, QUAD_BARY, u))
    return float(stored - load)


def exact_errors(mesh: Mesh, model: PhiModel, state: DiscreteState, u_grad, f) -> tuple[float, float]:
    """(|||u - u_C|||, ||p - p_RT||_{H(div)}) with p = sigma(grad u) and div p = -f."""
    x = quad_points(mesh)
    w = QUAD_WEIGHTS[None, :] * mesh.areas[:, None]
    g = np.asarray(u_grad(x))
    uv = full_vertex_values(mesh, state.uC)[mesh.triangles]
    gh = p1_gradient(mesh, uv)
    err_u = np.sum(w * np.sum((g - gh[:, None, :]) ** 2, axis=-1))
    a, b = rt_fields(mesh, state.pRT)
    q = a[:, None, :] + b[:, None, None] * (x - mesh.midpoints[:, None, :])
    err_p = np.sum(w * np.sum((sigma(model, g) - q) ** 2, axis=-1))
    fq = np.broadcast_to(np.asarray(f(x), dtype=float), w.shape)
    err_div = np.sum(w * (fq + 2.0 * b[:, None]) ** 2)
    return float(np.sqrt(err_u)), float(np.sqrt(err_p + err_div))


# -- guaranteed upper bound --------------------------------------------------

def _cr_basis(mesh: Mesh):
    """Interior-edge index per local edge (-1 on the boundary) and gradients of psi_E = 1 - 2 lambda_opp."""
    inner = ~mesh.boundary_edges
    idx = np.full(mesh.n_edges, -1)
    idx[inner] = np.arange(inner.sum())
    loc_dof = idx[mesh.tri_edges]
    # local edge k is opposite vertex k+2
    grads = -2.0 * np.roll(mesh.grad_lambda, -2, axis=1)
    return loc_dof, grads, int(inner.sum())


def cr_residual_dual_norm(mesh: Mesh, model: PhiModel, weights: ElementWeights, state: DiscreteState) -> float:
    """Norm of w -> F(w) - int sigma(grad u_C) . grad_NC w on CR^1_0 in the broken H^1 product."""
    loc_dof, grads, n = _cr_basis(mesh)
    if n == 0:
        return 0.0
    u = full_vertex_values(mesh, state.uC)[mesh.triangles]
    s = sigma(model, p1_gradient(mesh, u))
    # psi_E at the quadrature points: 1 - 2 lambda_{k+2}
    psi = 1.0 - 2.0 * np.roll(QUAD_BARY, -2, axis=1)
    load = mesh.areas[:, None] * np.einsum("q,tq,qk->tk", QUAD_WEIGHTS, weights.f_quad, psi)
    rhs_loc = load - mesh.areas[:, None] * np.einsum("td,tkd->tk", s, grads)
    Kloc = mesh.areas[:, None, None] * (np.einsum("tkd,tld->tkl", grads, grads) + np.eye(3) / 3.0)
    act = loc_dof >= 0
    rhs = np.bincount(loc_dof[act], weights=rhs_loc[act], minlength=n)
    mask = act[:, :, None] & act[:, None, :]
    rows = np.broadcast_to(loc_dof[:, :, None], Kloc.shape)[mask]
    cols = np.broadcast_to(loc_dof[:, None, :], Kloc.shape)[mask]
    K = sp.csc_matrix((Kloc[mask], (rows, cols)), shape=(n, n))
    r = spsolve(K, rhs)
    return float(np.sqrt(max(r @ rhs, 0.0)))


def guaranteed_bound(
    mesh: Mesh,
    model: PhiModel,
    weights: ElementWeights,
    state: DiscreteState,
    c_df: float = C_DF_ISOSCELES,
    kappa: float = KAPPA,
) -> float:
    """Upper bound for |||u - u_C|||: ((1 + C_dF^2) dual^2 + kappa^2 ||h f||^2)^{1/2} / gamma_1."""
    if c_df <= 0 or kappa <= 0:
        raise ValueError("C_dF and kappa must be positive")
    dual = cr_residual_dual_norm(mesh, model, weights, state)
    hf2 = data_term(mesh, weights).sum()
    return float(np.sqrt((1.0 + c_df**2) * dual**2 + kappa**2 * hf2) / model.gamma1)


# -- uniqueness --------------------------------------------------------------

def uniqueness_threshold(model: PhiModel, c_f: float) -> float:
    return model.gamma1**2 / (model.lip_dsigma * (1.0 + c_f**2))


def gradient_sup(mesh: Mesh, vrep: np.ndarray, norm: str = "max") -> float:
    """L-infinity norm of the piecewise constant grad_NC v_h.

    ``norm="max"`` takes the largest component modulus (the convention of the
    benchmark reference values), ``"euclid"`` the Euclidean length.
    """
    g = p1_gradient(mesh, vrep)
    if norm == "max":
        return float(np.max(np.abs(g), initial=0.0))
    if norm == "euclid":
        return float(np.max(np.linalg.norm(g, axis=1), initial=0.0))
    raise ValueError(f"unknown norm {norm!r}")


def uniqueness_check(
    mesh: Mesh, model: PhiModel, vrep: np.ndarray, c_f: float, norm: str = "max"
) -> tuple[float, float, bool]:
    """(vmax, threshold, vmax < threshold) with vmax from :func:`gradient_sup`."""
    if vrep is None:
        raise ValueError("state carries no residual representer")
    vmax = gradient_sup(mesh, vrep, norm)
    if model.lip_dsigma == 0.0:
        return vmax, np.inf, True
    thr = uniqueness_threshold(model, c_f)
    return vmax, thr, bool(vmax < thr)


def aitken(x) -> float:
    """Aitken extrapolation x_l - (dx_l)^2 / d2x_l from the last three entries."""
    x = np.asarray(x, dtype=float)
    if x.size < 3:
        raise ValueError("Aitken extrapolation needs at least three values")
    x0, x1, x2 = x[-3:]
    d2 = x2 - 2.0 * x1 + x0
    if d2 == 0.0:
        return float(x2)
    return float(x2 - (x2 - x1) ** 2 / d2)


def error_report(
    mesh: Mesh,
    model: PhiModel,
    weights: ElementWeights,
    state: DiscreteState,
    f,
    *,
    energy_ref: float | None = None,
    u_grad=None,
    c_f: float | None = None,
    c_df: float | None = None,
    kappa: float = KAPPA,
    vmax_norm: str = "max",
) -> ErrorReport:
    eta2 = local_estimator(mesh, model, weights, state)
    rep = ErrorReport(eta_global=float(np.sqrt(eta2.sum())), eta_local=np.sqrt(eta2))
    if state.vRep is None:
        state.vRep = riesz_representer(mesh, model, weights, state)
    if c_f is not None:
        rep.vmax, _, rep.uniqueness_flag = uniqueness_check(mesh, model, state.vRep, c_f, vmax_norm)
    rep.energy = energy(mesh, model, state, f)
    if energy_ref is not None:
        rep.energy_diff_sqrt = float(np.sqrt(max(rep.energy - energy_ref, 0.0)))
    if u_grad is not None:
        rep.error_energy, rep.error_hdiv = exact_errors(mesh, model, state, u_grad, f)
    if c_df is not None:
        rep.guaranteed_bound = guaranteed_bound(mesh, model, weights, state, c_df, kappa)
    return rep
