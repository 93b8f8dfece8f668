"""Lowest-order nonlinear dPG / weighted least-squares FEM for -div(phi(|grad u|) grad u) = f in 2D."""

from nldpg.mesh import Mesh, make_lshape_mesh, make_square_mesh, refine_nvb, refine_uniform, refine_uniform_nvb
from nldpg.nonlinearity import PhiModel, get_model

__all__ = [
    "Mesh",
    "PhiModel",
    "get_model",
    "make_lshape_mesh",
    "make_square_mesh",
    "refine_nvb",
    "refine_uniform",
    "refine_uniform_nvb",
]
