import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nldpg.estimator import (
    aitken,
    doerfler_mark,
    energy,
    error_report,
    exact_errors,
    gradient_sup,
    guaranteed_bound,
    local_estimator,
    uniqueness_check,
    uniqueness_threshold,
)
from nldpg.mesh import make_square_mesh, refine_uniform_nvb
from nldpg.nonlinearity import get_model, sigma
from nldpg.problems import C_F_LSHAPE, C_F_SQUARE, E_REF_SQUARE_BY_MODEL, manufactured_square_problem
from nldpg.solver import linear_init, newton
from nldpg.spaces import DiscreteState, compute_weights, dof_layout, rt_interpolate

ZERO_F = lambda x: np.zeros(x.shape[:-1])
ONE_F = lambda x: np.ones(x.shape[:-1])


def square_meshes(levels):
    m = refine_uniform_nvb(make_square_mesh())
    out = [m]
    for _ in range(levels - 1):
        m = refine_uniform_nvb(m)
        out.append(m)
    return out


def interpolant(mesh, model, u, grad):
    uC = u(mesh.vertices[mesh.interior_vertex_index() >= 0])
    pRT = rt_interpolate(mesh, lambda x: sigma(model, grad(x)))
    return DiscreteState(uC, pRT)


# -- estimator and marking -----------------------------------------------------

def test_estimator_zero_data(lshape25):
    w = compute_weights(lshape25, ZERO_F)
    z = DiscreteState.zeros(dof_layout(lshape25))
    assert np.all(local_estimator(lshape25, get_model("example-a"), w, z) == 0.0)
    assert np.all(doerfler_mark(np.zeros(4), 0.5) == [])


def test_estimator_is_ls_plus_data(lshape25):
    w = compute_weights(lshape25, ONE_F)
    z = DiscreteState.zeros(dof_layout(lshape25))
    # at zero state only the load enters: |T| (1 + h_T^2)
    eta2 = local_estimator(lshape25, get_model("example-a"), w, z)
    a = lshape25.areas
    assert np.allclose(eta2, a + lshape25.diameters**2 * a)


def test_doerfler_examples():
    assert list(doerfler_mark([1.0, 1.0, 2.0, 4.0], 0.3)) == [3]
    assert list(doerfler_mark([1.0, 1.0, 2.0, 4.0], 0.6)) == [2, 3]
    assert list(doerfler_mark([1.0, 1.0, 1.0, 1.0], 0.5)) == [0, 1]
    assert list(doerfler_mark([3.0], 0.99)) == [0]


@pytest.mark.parametrize("theta", [0.0, 1.0, -0.1, 1.5])
def test_doerfler_rejects_theta(theta):
    with pytest.raises(ValueError):
        doerfler_mark([1.0, 2.0], theta)


@given(
    st.lists(st.floats(0.0, 10.0, allow_nan=False), min_size=1, max_size=8),
    st.floats(0.05, 0.95),
)
def test_doerfler_minimal_cardinality(eta2, theta):
    eta2 = np.array(eta2)
    marked = doerfler_mark(eta2, theta)
    total = eta2.sum()
    if total == 0:
        assert marked.size == 0
        return
    assert eta2[marked].sum() >= theta * total * (1 - 1e-12)
    best = min(
        k
        for k in range(1, eta2.size + 1)
        if any(eta2[list(c)].sum() >= theta * total for c in itertools.combinations(range(eta2.size), k))
    )
    assert marked.size == best


# -- energy and exact errors -----------------------------------------------------

def test_energy_linear_oracle(square33, rng):
    w = 2.0
    mod = get_model(f"linear:{w}")
    s = DiscreteState.from_vector(dof_layout(square33), rng.normal(size=dof_layout(square33).ndof))
    from nldpg.spaces import full_vertex_values, p1_gradient

    u = full_vertex_values(square33, s.uC)[square33.triangles]
    g = p1_gradient(square33, u)
    expected = 0.5 * w * np.sum(square33.areas * np.sum(g**2, axis=1)) - np.sum(square33.areas * u.mean(axis=1))
    assert energy(square33, mod, s, ONE_F) == pytest.approx(expected, rel=1e-12)


def test_energy_zero_state(square33):
    mod = get_model("example-a-data")
    assert energy(square33, mod, DiscreteState.zeros(dof_layout(square33)), ONE_F) == 0.0


def test_zero_state_errors_equal_exact_norms():
    mod = get_model("example-a")
    u, grad, _, f = manufactured_square_problem(mod)
    m = square_meshes(3)[-1]
    eu, _ = exact_errors(m, mod, DiscreteState.zeros(dof_layout(m)), grad, f)
    # int |grad u|^2 = pi^2 / 2 for u = cos(pi x/2) cos(pi y/2)
    assert eu == pytest.approx(np.pi / np.sqrt(2), rel=1e-4)


def test_interpolant_errors_first_order():
    mod = get_model("example-a")
    u, grad, _, f = manufactured_square_problem(mod)
    errs = [exact_errors(m, mod, interpolant(m, mod, u, grad), grad, f) for m in square_meshes(4)]
    eu = np.array([e[0] for e in errs])
    rates = np.log2(eu[:-1] / eu[1:])
    assert np.all(np.abs(rates - 1.0) < 0.15)
    assert np.all(np.diff([e[1] for e in errs]) < 0)


def test_manufactured_problem_consistency(rng):
    mod = get_model("example-a")
    u, grad, _, f = manufactured_square_problem(mod)
    assert u(np.array([0.0, 0.0])) == pytest.approx(1.0)
    t = np.linspace(-1, 1, 9)
    edge = np.concatenate([np.stack([t, np.full_like(t, s)], -1) for s in (-1, 1)])
    assert np.allclose(u(edge), 0.0, atol=1e-15)
    assert np.allclose(u(edge[:, ::-1]), 0.0, atol=1e-15)
    h = 1e-5
    for x in rng.uniform(-0.9, 0.9, size=(5, 2)):
        div = 0.0
        for j in range(2):
            e = np.zeros(2)
            e[j] = h
            div += (sigma(mod, grad(x + e)[None])[0, j] - sigma(mod, grad(x - e)[None])[0, j]) / (2 * h)
        assert -div == pytest.approx(float(f(x)), rel=1e-5, abs=1e-8)


# -- certificates ------------------------------------------------------------------

@pytest.mark.parametrize("model", ["example-a", "example-a-data"])
def test_guaranteed_bound_dominates_error(model):
    mod = get_model(model)
    u, grad, _, f = manufactured_square_problem(mod)
    for m in square_meshes(3):
        w = compute_weights(m, f)
        s = newton(m, mod, w, linear_init(m, 1.0, w)).state
        err, _ = exact_errors(m, mod, s, grad, f)
        assert guaranteed_bound(m, mod, w, s) >= err


def test_guaranteed_bound_rejects_bad_constants(square33):
    w = compute_weights(square33, ONE_F)
    z = DiscreteState.zeros(dof_layout(square33))
    with pytest.raises(ValueError):
        guaranteed_bound(square33, get_model("example-a"), w, z, c_df=-1.0)


def test_uniqueness_thresholds():
    mod = get_model("example-a-data")
    assert uniqueness_threshold(mod, C_F_LSHAPE) == pytest.approx(0.22650326, rel=1e-6)
    assert uniqueness_threshold(mod, C_F_SQUARE) == pytest.approx(1 / (4 * (1 + 2 / np.pi**2)), rel=1e-14)


def test_uniqueness_check_cases(square33):
    mod = get_model("example-a")
    zero = np.zeros((square33.n_triangles, 3))
    vmax, thr, ok = uniqueness_check(square33, mod, zero, C_F_SQUARE)
    assert vmax == 0.0 and ok
    _, thr, ok = uniqueness_check(square33, get_model("linear:1"), zero + 5.0, C_F_SQUARE)
    assert thr == np.inf and ok
    with pytest.raises(ValueError):
        uniqueness_check(square33, mod, None, C_F_SQUARE)


def test_gradient_sup_norms(square33):
    v = np.zeros((square33.n_triangles, 3))
    v[0] = square33.corners[0] @ np.array([3.0, 4.0])
    assert gradient_sup(square33, v, "max") == pytest.approx(4.0)
    assert gradient_sup(square33, v, "euclid") == pytest.approx(5.0)
    with pytest.raises(ValueError):
        gradient_sup(square33, v, "l1")


def test_aitken():
    x = 2.0 + 3.0 * 0.5 ** np.arange(6)
    assert aitken(x) == pytest.approx(2.0, abs=1e-13)
    assert aitken([1.0, 1.0, 1.0]) == 1.0
    with pytest.raises(ValueError):
        aitken([1.0, 2.0])


def test_error_report_fields(square33):
    mod = get_model("example-a-data")
    u, grad, _, f = manufactured_square_problem(mod)
    w = compute_weights(square33, f)
    s = newton(square33, mod, w, linear_init(square33, 1.0, w)).state
    rep = error_report(
        square33, mod, w, s, f, energy_ref=E_REF_SQUARE_BY_MODEL[mod.name], u_grad=grad, c_f=C_F_SQUARE, c_df=6.24
    )
    assert rep.eta_global == pytest.approx(np.sqrt(np.sum(rep.eta_local**2)))
    assert rep.energy >= E_REF_SQUARE_BY_MODEL[mod.name]
    assert rep.guaranteed_bound >= rep.error_energy > 0
    assert rep.uniqueness_flag is not None
    bare = error_report(square33, mod, w, s, f)
    assert bare.vmax is None and bare.error_energy is None and bare.guaranteed_bound is None
