"""Built-in benchmark problems: smooth manufactured solution on the square, f = 1 on the L-shape."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from nldpg.mesh import Mesh, make_lshape_mesh, make_square_mesh, refine_uniform_nvb
from nldpg.nonlinearity import PhiModel

# reference energies; the example-a-data values are Aitken extrapolations,
# the others exact energies of the manufactured solution (2D adaptive quadrature)
E_REF_SQUARE = -5.774337908509
E_REF_LSHAPE = -3.657423002939e-2
E_REF_SQUARE_BY_MODEL = {
    "example-a-data": E_REF_SQUARE,
    "example-a": -5.136358272145,
    "example-b": -4.415449923457,
}
E_REF_LSHAPE_BY_MODEL = {"example-a-data": E_REF_LSHAPE}
C_F_SQUARE = np.sqrt(2.0) / np.pi
C_F_LSHAPE = 1.0 / np.sqrt(9.6397238)
SQUARE_THRESHOLD_REPORTED = 0.17239892


@dataclass(frozen=True)
class ExactSolution:
    u: Callable
    grad: Callable
    hess: Callable


@dataclass(frozen=True)
class Problem:
    name: str
    initial_mesh: Callable[[], Mesh]
    f: Callable
    exact: ExactSolution | None
    energy_ref: float | None
    friedrichs: float | None
    # discrete Friedrichs constant of CR^1_0; None when not known for the domain
    discrete_friedrichs: float | None


def manufactured_square_problem(model: PhiModel):
    """u = cos(pi x/2) cos(pi y/2) with f = -div sigma(grad u); returns (u, grad u, D^2 u, f)."""
    k = np.pi / 2

    def u(x):
        return np.cos(k * x[..., 0]) * np.cos(k * x[..., 1])

    def grad(x):
        cx, cy = np.cos(k * x[..., 0]), np.cos(k * x[..., 1])
        sx, sy = np.sin(k * x[..., 0]), np.sin(k * x[..., 1])
        return -k * np.stack([sx * cy, cx * sy], axis=-1)

    def hess(x):
        cx, cy = np.cos(k * x[..., 0]), np.cos(k * x[..., 1])
        sx, sy = np.sin(k * x[..., 0]), np.sin(k * x[..., 1])
        d = -(k**2) * cx * cy
        o = (k**2) * sx * sy
        return np.stack([np.stack([d, o], -1), np.stack([o, d], -1)], -2)

    def f(x):
        g = grad(x)
        H = hess(x)
        t = np.linalg.norm(g, axis=-1)
        lap = np.trace(H, axis1=-2, axis2=-1)
        gHg = np.einsum("...i,...ij,...j->...", g, H, g)
        tsafe = np.where(t > 0, t, 1.0)
        return -model.phi(t) * lap - np.where(t > 0, model.dphi(t) * gHg / tsafe, 0.0)

    return u, grad, hess, f


def square_mesh_level0() -> Mesh:
    """Coarsest run mesh on the square: one bisection refinement of the criss-cross (ndof 33)."""
    return refine_uniform_nvb(make_square_mesh())


def square_problem(model: PhiModel) -> Problem:
    u, grad, hess, f = manufactured_square_problem(model)
    return Problem(
        name="square",
        initial_mesh=square_mesh_level0,
        f=f,
        exact=ExactSolution(u, grad, hess),
        energy_ref=E_REF_SQUARE_BY_MODEL.get(model.name),
        friedrichs=C_F_SQUARE,
        discrete_friedrichs=6.24,
    )


def lshape_problem(model: PhiModel) -> Problem:
    return Problem(
        name="lshape",
        initial_mesh=make_lshape_mesh,
        f=lambda x: np.ones(np.shape(x)[:-1]),
        exact=None,
        energy_ref=E_REF_LSHAPE_BY_MODEL.get(model.name),
        friedrichs=C_F_LSHAPE,
        discrete_friedrichs=None,
    )


def get_problem(name: str, model: PhiModel) -> Problem:
    if name == "square":
        return square_problem(model)
    if name == "lshape":
        return lshape_problem(model)
    raise ValueError(f"unknown problem {name!r}")
