"""Newton iteration on the least-squares functional and eigenvalue certificates."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh, splu

from nldpg.assembly import (
    bprime_matrix,
    dual_norm,
    ls_gradient,
    ls_hessian,
    ls_value,
    riesz_representer,
    xnorm_operator,
)
from nldpg.mesh import Mesh
from nldpg.nonlinearity import PhiModel, linear_model
from nldpg.spaces import DiscreteState, ElementWeights, dof_layout, p1_h1_matrices

log = logging.getLogger(__name__)

DENSE_EIG_LIMIT = 3000


class NewtonFailure(RuntimeError):
    """A Newton linear solve broke down; ``state`` holds the last iterate."""

    def __init__(self, message: str, state: DiscreteState, norms: list[float]):
        super().__init__(message)
        self.state = state
        self.norms = norms


@dataclass
class NewtonReport:
    state: DiscreteState
    norms: list[float] = field(default_factory=list)  # dual norm of the gradient at iterates 0, 1, ...
    converged: bool = False
    damped: bool = False

    @property
    def iterations(self) -> int:
        return len(self.norms) - 1


def _solve(H: sp.spmatrix, rhs: np.ndarray) -> np.ndarray:
    lu = splu(sp.csc_matrix(H))
    x = lu.solve(rhs)
    res = np.linalg.norm(H @ x - rhs)
    if not np.all(np.isfinite(x)):
        raise np.linalg.LinAlgError("non-finite solution of the Newton system")
    if res > 1e-8 * max(np.linalg.norm(rhs), 1e-300):
        # one step of iterative refinement
        x += lu.solve(rhs - H @ x)
    return x


def newton(
    mesh: Mesh,
    model: PhiModel,
    weights: ElementWeights,
    init: DiscreteState,
    tol: float = 1e-12,
    maxiter: int = 20,
) -> NewtonReport:
    """Plain Newton on the LS functional, monitored by the X_h-dual norm of its gradient.

    Stops when the dual norm drops below ``tol`` or, once below 1e-9, stops
    decreasing by at least a factor two (round-off plateau).  A step-halving
    fallback activates after two consecutive increases of the dual norm.
    """
    layout = dof_layout(mesh)
    init.check(layout)
    x = init.vector.copy()
    report = NewtonReport(state=init)
    increases = 0
    for it in range(maxiter + 1):
        state = DiscreteState.from_vector(layout, x)
        g = ls_gradient(mesh, model, weights, state)
        nrm = dual_norm(mesh, g)
        if report.norms and nrm > report.norms[-1]:
            increases += 1
        else:
            increases = 0
        report.norms.append(nrm)
        report.state = state
        if nrm <= tol:
            report.converged = True
            break
        if len(report.norms) > 1 and nrm <= 1e-9 and nrm > 0.5 * report.norms[-2]:
            report.converged = True
            break
        if it == maxiter:
            break
        H = ls_hessian(mesh, model, weights, state)
        try:
            dx = _solve(H, g)
        except (RuntimeError, np.linalg.LinAlgError) as exc:
            raise NewtonFailure(f"Newton system solve failed at iteration {it}: {exc}", state, report.norms) from exc
        step = 1.0
        if increases >= 2:
            report.damped = True
            f0 = ls_value(mesh, model, weights, state)
            while step > 1e-6:
                trial = DiscreteState.from_vector(layout, x - step * dx)
                if ls_value(mesh, model, weights, trial) < f0:
                    break
                step *= 0.5
            log.warning("Newton damping active at iteration %d, step %.3g", it, step)
        x = x - step * dx
    report.state.vRep = riesz_representer(mesh, model, weights, report.state)
    return report


def linear_init(mesh: Mesh, w: float, weights: ElementWeights) -> DiscreteState:
    """Exact minimizer of the LS functional for phi == w (one Newton step from zero)."""
    model = linear_model(w)
    layout = dof_layout(mesh)
    zero = DiscreteState.zeros(layout)
    g = ls_gradient(mesh, model, weights, zero)
    if not np.any(g):
        return zero
    H = ls_hessian(mesh, model, weights, zero)
    return DiscreteState.from_vector(layout, -_solve(H, g))


@dataclass
class EigenResult:
    lambda_min: float
    lambda_max: float
    residual: float  # max relative residual ||H x - lam K x|| / ||K x|| of both pairs


def _certify(H, K, lam, x) -> float:
    Kx = K @ x
    return float(np.linalg.norm(H @ x - lam * Kx) / np.linalg.norm(Kx))


def gevp_extremes(hessian: sp.spmatrix, xnorm: sp.spmatrix, dense_limit: int = DENSE_EIG_LIMIT) -> EigenResult:
    """Smallest and largest eigenvalues of the pencil (hessian, xnorm)."""
    H = sp.csr_matrix(hessian)
    K = sp.csr_matrix(xnorm)
    n = H.shape[0]
    if n <= dense_limit:
        w, V = sla.eigh(H.toarray(), K.toarray())
        pairs = [(w[0], V[:, 0]), (w[-1], V[:, -1])]
    else:
        lo, vlo = eigsh(H.tocsc(), k=1, M=K.tocsc(), sigma=0.0, which="LM", tol=1e-12)
        hi, vhi = eigsh(H.tocsc(), k=1, M=K.tocsc(), which="LA", tol=1e-12, maxiter=20 * n)
        pairs = [(lo[0], vlo[:, 0]), (hi[0], vhi[:, 0])]
    res = max(_certify(H, K, lam, v) for lam, v in pairs)
    if res > 1e-8:
        log.warning("generalized eigenpair residual %.2e exceeds 1e-8", res)
    return EigenResult(float(pairs[0][0]), float(pairs[1][0]), res)


def infsup_constant(mesh: Mesh, model: PhiModel, state: DiscreteState, max_ndof: int = 10_000) -> float:
    """Discrete inf-sup constant of b'(state) on X_h x P_1(T) (X_h norm vs broken H^1)."""
    layout = dof_layout(mesh)
    if layout.ndof > max_ndof:
        raise ValueError(f"inf-sup computation restricted to ndof <= {max_ndof}, got {layout.ndof}")
    B = bprime_matrix(mesh, model, state)
    Kinv = sp.block_diag(list(np.linalg.inv(p1_h1_matrices(mesh))), format="csr")
    S = (B.T @ Kinv @ B).tocsr()
    S = 0.5 * (S + S.T)
    eig = gevp_extremes(S, xnorm_operator(mesh))
    return float(np.sqrt(max(eig.lambda_min, 0.0)))
