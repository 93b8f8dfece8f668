import numpy as np
import pytest
import scipy.linalg as sla

from nldpg.assembly import (
    ls_elementwise,
    ls_evaluate,
    ls_gradient,
    ls_hessian,
    ls_value,
    mixed_residual,
    residual_dual_norm,
    riesz_representer,
    xnorm_operator,
)
from nldpg.mesh import make_lshape_mesh, refine_nvb, refine_uniform_nvb
from nldpg.nonlinearity import get_model, sigma
from nldpg.problems import manufactured_square_problem, square_mesh_level0
from nldpg.solver import linear_init, newton
from nldpg.spaces import (
    DiscreteState,
    compute_weights,
    cr_jumps,
    dof_layout,
    full_vertex_values,
    p1_gradient,
    rt_fields,
)

ZERO_F = lambda x: np.zeros(x.shape[:-1])
ONE_F = lambda x: np.ones(x.shape[:-1])


def random_state(mesh, rng, scale=1.0):
    return DiscreteState.from_vector(dof_layout(mesh), scale * rng.normal(size=dof_layout(mesh).ndof))


@pytest.fixture(scope="module")
def setup():
    m = refine_nvb(make_lshape_mesh(), [0, 5, 9])
    mod = get_model("example-a")
    f = lambda x: np.sin(2 * x[..., 0]) + x[..., 1] ** 2
    return m, mod, compute_weights(m, f)


def test_zero_residual_gives_zero(lshape25):
    w = compute_weights(lshape25, ZERO_F)
    z = DiscreteState.zeros(dof_layout(lshape25))
    mod = get_model("example-a")
    assert ls_value(lshape25, mod, w, z) == 0.0
    assert np.all(riesz_representer(lshape25, mod, w, z) == 0.0)
    z.vRep = riesz_representer(lshape25, mod, w, z)
    assert mixed_residual(lshape25, mod, w, z) == (0.0, 0.0)


def test_elementwise_oracle(setup, rng):
    m, mod, w = setup
    s = random_state(m, rng)
    g = p1_gradient(m, full_vertex_values(m, s.uC)[m.triangles])
    a, b = rt_fields(m, s.pRT)
    r2 = a - sigma(mod, g) + w.H0f
    root = np.stack([sla.sqrtm(np.linalg.inv(np.eye(2) + S)).real for S in w.S0])
    r2w = np.einsum("tij,tj->ti", root, r2)
    ref = m.areas * ((w.Pi0f + 2 * b) ** 2 + np.sum(r2w**2, axis=1))
    per = ls_elementwise(m, mod, w, s)
    assert np.allclose(per, ref, rtol=1e-12)
    assert np.all(per >= 0) and ls_value(m, mod, w, s) == pytest.approx(per.sum(), rel=1e-15)


def test_linear_model_split(setup, rng):
    m, _, _ = setup
    w = compute_weights(m, ZERO_F)
    mod = get_model("linear:1")
    s = random_state(m, rng)
    a, b = rt_fields(m, s.pRT)
    g = p1_gradient(m, full_vertex_values(m, s.uC)[m.triangles])
    r2 = np.einsum("tij,tj->ti", w.M, a - g)
    expected = m.areas * (4 * b**2 + np.einsum("ti,ti->t", a - g, r2))
    assert np.allclose(ls_elementwise(m, mod, w, s), expected)


@pytest.mark.parametrize("model", ["example-a", "example-b", "linear:2"])
def test_ls_equals_dual_norm(setup, rng, model):
    m, _, w = setup
    mod = get_model(model)
    for _ in range(50):
        s = random_state(m, rng, scale=rng.choice([0.01, 1, 10]))
        ls = ls_value(m, mod, w, s)
        assert abs(residual_dual_norm(m, mod, w, s) ** 2 - ls) <= 1e-10 * ls


def test_representer_closed_form(setup, rng):
    m, mod, w = setup
    s = random_state(m, rng)
    y = riesz_representer(m, mod, w, s)
    a, b = rt_fields(m, s.pRT)
    g = p1_gradient(m, full_vertex_values(m, s.uC)[m.triangles])
    # y = -v1 in the sign convention a(y, .) = F - b
    assert np.allclose(y.mean(axis=1), w.Pi0f + 2 * b)
    lhs = np.einsum("tij,tj->ti", np.eye(2) + w.S0, p1_gradient(m, y))
    assert np.allclose(lhs, a - sigma(mod, g) + w.H0f)


@pytest.mark.parametrize("model", ["example-a", "example-b"])
def test_gradient_finite_differences(setup, rng, model):
    m, _, w = setup
    mod = get_model(model)
    lay = dof_layout(m)
    s = random_state(m, rng)
    g = ls_gradient(m, mod, w, s)
    x = s.vector
    h = 1e-6 * (1 + np.linalg.norm(x))
    for _ in range(5):
        d = rng.normal(size=lay.ndof)
        d /= np.linalg.norm(d)
        fp = ls_value(m, mod, w, DiscreteState.from_vector(lay, x + h * d))
        fm = ls_value(m, mod, w, DiscreteState.from_vector(lay, x - h * d))
        assert abs((fp - fm) / (2 * h) - g @ d) <= 1e-6 * max(np.linalg.norm(g), 1.0)


@pytest.mark.parametrize("model", ["example-a", "example-b"])
def test_hessian_finite_differences(setup, rng, model):
    m, _, w = setup
    mod = get_model(model)
    lay = dof_layout(m)
    s = random_state(m, rng)
    H = ls_hessian(m, mod, w, s)
    assert abs(H - H.T).max() <= 1e-12 * abs(H).max()
    x = s.vector
    h = 1e-6
    for _ in range(5):
        d = rng.normal(size=lay.ndof)
        gp = ls_gradient(m, mod, w, DiscreteState.from_vector(lay, x + h * d))
        gm = ls_gradient(m, mod, w, DiscreteState.from_vector(lay, x - h * d))
        fd = (gp - gm) / (2 * h)
        assert np.linalg.norm(fd - H @ d) <= 1e-5 * np.linalg.norm(H @ d)


def test_linear_model_quadratic_structure(setup, rng):
    m, _, w = setup
    mod = get_model("linear:2.5")
    s1, s2, s3 = (random_state(m, rng) for _ in range(3))
    lay = dof_layout(m)
    g = lambda s: ls_gradient(m, mod, w, s)
    combo = DiscreteState.from_vector(lay, s1.vector + 2 * s2.vector - s3.vector)
    assert np.allclose(g(combo), g(s1) + 2 * g(s2) - g(s3) - g(DiscreteState.zeros(lay)), atol=1e-9)
    assert abs(ls_hessian(m, mod, w, s1) - ls_hessian(m, mod, w, s2)).max() == 0.0


def test_linear_newton_step_is_exact(setup):
    m, _, w = setup
    mod = get_model("linear:2.5")
    s = linear_init(m, 2.5, w)
    g = ls_gradient(m, mod, w, s)
    assert np.linalg.norm(g) <= 1e-10
    rep = newton(m, mod, w, s)
    assert rep.iterations == 0


def test_evaluate_bundle(setup, rng):
    m, mod, w = setup
    s = random_state(m, rng)
    ev = ls_evaluate(m, mod, w, s)
    assert ev.value == pytest.approx(ev.per_element.sum())
    assert np.allclose(ev.gradient, ls_gradient(m, mod, w, s))


def test_mixed_residual_at_solution_and_perturbed():
    m = refine_uniform_nvb(square_mesh_level0())
    mod = get_model("example-a")
    _, _, _, f = manufactured_square_problem(mod)
    w = compute_weights(m, f)
    rep = newton(m, mod, w, linear_init(m, 1.0, w))
    first, second = mixed_residual(m, mod, w, rep.state)
    assert first <= 1e-10 and second <= 1e-10
    s = DiscreteState(rep.state.uC + 1e-3, rep.state.pRT.copy())
    s.vRep = riesz_representer(m, mod, w, s)
    assert mixed_residual(m, mod, w, s)[1] > 1e-8


def test_xnorm_positive_definite(lshape97):
    K = xnorm_operator(lshape97).toarray()
    assert np.allclose(K, K.T)
    assert np.linalg.eigvalsh(K).min() > 0


def test_dimension_mismatch(setup):
    m, mod, w = setup
    with pytest.raises(ValueError):
        ls_value(m, mod, w, DiscreteState(np.zeros(1), np.zeros(2)))


@pytest.mark.parametrize("model", ["example-a", "example-b"])
def test_representer_cr_continuity_at_solution(model):
    m = refine_nvb(square_mesh_level0(), [1, 7, 12])
    mod = get_model(model)
    w = compute_weights(m, manufactured_square_problem(mod)[3])
    s = newton(m, mod, w, linear_init(m, 1.0, w)).state
    interior, boundary = cr_jumps(m, s.vRep)
    assert np.abs(interior).max() <= 1e-9
    assert np.abs(boundary).max() <= 1e-9
    # a non-solution state is not CR continuous in general
    s.uC = s.uC + 0.1
    interior, _ = cr_jumps(m, riesz_representer(m, mod, w, s))
    assert np.abs(interior).max() > 1e-6
