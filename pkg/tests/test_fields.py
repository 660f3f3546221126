import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lieflow.fields import (FieldError, Grid, GridKForm, KFormField, PolynomialForm,
                            QuadratureGrid, TestForm, VectorField, check_parabolicity,
                            fd_derivative, holder_quotient, l2_inner, load_grid_form, lp_norm,
                            save_grid_form, sobolev_norm)


def assert_close(a, b, tol, what=""):
    a, b = np.asarray(a, float), np.asarray(b, float)
    err = np.max(np.abs(a - b)) if a.size else 0.0
    assert err <= tol, f"{what}: error {err:.3e} > {tol:.1e}"


def x1_dx2():
    return PolynomialForm(2, 1, [[], [(1.0, (1, 0))]])


def test_fd_derivative_constant_is_zero():
    K = KFormField.constant(3, 2, [1.0, -2.0, 0.5])
    d = fd_derivative(K, 0.0, [0.3, 0.1, -0.2], 1)
    assert d.norm() < 1e-12


def test_fd_derivative_linear_example():
    d = fd_derivative(x1_dx2(), 0.0, [0.4, -0.7], 0)
    assert_close(d.coeffs, [0.0, 1.0], 1e-9, "d/dx1 of x1 dx2")


def test_fd_derivative_second_order():
    # quadratic field: error of the central difference shrinks like h^2
    K = PolynomialForm(2, 1, [[(1.0, (3, 0))], [(2.0, (1, 2))]])
    x = np.array([0.7, -0.4])
    exact = K.gradient(0.0, x)[0]
    errs = [np.max(np.abs(fd_derivative(K, 0.0, x, 0, h=h).coeffs - exact)) for h in (1e-2, 5e-3)]
    assert 3.5 < errs[0] / errs[1] < 4.5


def test_fd_derivative_rejects_grid_boundary():
    g = Grid([-1, -1], [1, 1], 16)
    K = GridKForm.sample(x1_dx2(), g)
    with pytest.raises(FieldError):
        fd_derivative(K, 0.0, [0.99, 0.0], 0)


def test_l2_inner_examples():
    g = QuadratureGrid.cube(2, 1.0, 40)
    K = x1_dx2()
    assert l2_inner(KFormField.zero(2, 1), K, g) == 0.0
    assert l2_inner(K, K, g) > 0.0
    # x1^2 over [-1,1]^2: exact 4/3, midpoint rule error O(h^2)
    assert abs(l2_inner(K, K, g) - 4.0 / 3.0) < 1e-3


def test_l2_inner_degree_mismatch():
    g = QuadratureGrid.cube(2, 1.0, 8)
    with pytest.raises(FieldError):
        l2_inner(KFormField.zero(2, 1), KFormField.zero(2, 2), g)


def test_box_indicator_volume():
    g = QuadratureGrid.cube(2, 1.0, 64)
    box = KFormField(2, 2, lambda t, X: (np.all(np.abs(X) < 0.5, axis=1)).astype(float)[:, None])
    assert abs(l2_inner(box, box, g) - 1.0) < 1e-12
    assert abs(lp_norm(box, 3, g) - 1.0) < 1e-12


def test_lp_norm_trio():
    g = QuadratureGrid.cube(2, 1.0, 32)
    K = x1_dx2()
    assert lp_norm(KFormField.zero(2, 1), 2, g) == 0.0
    assert np.isclose(lp_norm(K.scaled(-3.0), 2.5, g), 3.0 * lp_norm(K, 2.5, g))
    with pytest.raises(FieldError):
        lp_norm(K, 0.5, g)


def test_ball_restriction_and_exclusion():
    g = QuadratureGrid.cube(2, 1.0, 200, ball_radius=1.0, exclude_radius=0.5)
    one = KFormField.constant(2, 0, [1.0])
    assert abs(l2_inner(one, one, g) - np.pi * 0.75) < 5e-3


def test_local_subsampling_keeps_volume():
    base = QuadratureGrid.cube(3, 1.0, 16, ball_radius=1.0)
    sub = QuadratureGrid.cube(3, 1.0, 16, ball_radius=1.0, refine_radius=0.3, refine_factor=4)
    assert sub.nodes.shape[0] > base.nodes.shape[0]
    # sub-cells of interior cells carry exactly the parent volume
    assert abs(sub.weights.sum() - base.weights.sum()) < 0.05
    # a smooth integrand is unaffected to quadrature accuracy
    f = lambda X: np.exp(-np.sum(X * X, axis=1))
    assert abs(sub.integrate(f(sub.nodes)) - base.integrate(f(base.nodes))) < 5e-3


def test_parabolicity_examples():
    e = [VectorField.constant([1.0, 0.0]), VectorField.constant([0.0, 1.0])]
    pts = np.zeros((1, 2))
    c, C = check_parabolicity(e, pts)
    assert np.isclose(c, 1.0) and np.isclose(C, 1.0)
    c, C = check_parabolicity(e[:1], pts)
    assert abs(c) < 1e-12
    c, C = check_parabolicity([VectorField.constant([1.0, 0.0]), VectorField.constant([1.0, 1.0])], pts)
    assert abs(c - (3 - np.sqrt(5)) / 2) < 1e-12 and abs(C - (3 + np.sqrt(5)) / 2) < 1e-12


def test_vector_field_jacobian_fd_matches_analytic():
    A = np.array([[0.3, -1.0], [2.0, 0.5]])
    v = VectorField.linear(A)
    nofd = VectorField(2, lambda t, X: X @ A.T)
    X = np.random.default_rng(0).normal(size=(5, 2))
    assert_close(nofd.jacobian(0.0, X), v.jacobian(0.0, X), 1e-8, "jacobian")
    assert v.check_divergence_free(0.0, X) is False


def test_sobolev_norm_constant_field():
    g = QuadratureGrid.cube(2, 1.0, 16)
    v = VectorField.constant([3.0, 4.0])
    assert np.isclose(sobolev_norm(v, 2.0, g), 5.0 * 2.0)


def test_holder_quotient_of_sqrt():
    v = VectorField(1, lambda t, X: np.sqrt(np.abs(X)))
    pts = np.linspace(-1, 1, 101)[:, None]
    q = holder_quotient(v, pts, 0.5)
    # sqrt|x| is 1/2-Hölder with constant sqrt 2 across the origin
    assert 0.9 <= q <= np.sqrt(2.0) + 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 3), st.integers(0, 2 ** 31 - 1))
def test_test_form_derivatives(n, seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(0, n + 1))
    T = TestForm.random(n, k, rng)
    X = T.center + rng.uniform(-0.3, 0.3, size=(6, n))
    fd = KFormField(n, k, T.__call__, fd_step=1e-6)
    assert_close(T.gradient(0.0, X), fd.gradient(0.0, X), 1e-6, "gradient")
    fdg = KFormField(n, k, T.__call__, deriv=T.gradient, fd_step=1e-6)
    assert_close(T.hessian(0.0, X), fdg.hessian(0.0, X), 1e-5, "hessian")


def test_grid_form_serialization_round_trip(tmp_path):
    g = Grid([-1, -2, 0], [1, 2, 1], (5, 6, 7))
    K = PolynomialForm(3, 2, [[(1.0, (1, 0, 0))], [(2.0, (0, 1, 1))], [(0.5, (0, 0, 0))]])
    G = GridKForm.sample(K, g, times=[0.25])
    path = tmp_path / "k.bin"
    save_grid_form(str(path), G)
    H = load_grid_form(str(path))
    assert (H.n, H.k) == (3, 2)
    assert np.array_equal(H.node_values(), G.node_values())
    meta = json.loads((tmp_path / "k.bin.json").read_text())
    assert meta["n"] == 3 and meta["k"] == 2
    raw = path.read_bytes()
    assert len(raw) >= 3 * 6 * 5 * 6 * 7


def test_grid_form_interpolation_is_exact_for_linear_data():
    g = Grid([-1, -1], [1, 1], 20)
    G = GridKForm.sample(x1_dx2(), g)
    X = np.random.default_rng(2).uniform(-0.9, 0.9, size=(10, 2))
    assert_close(G(0.0, X)[:, 1], X[:, 0], 1e-12, "interpolation")
    with pytest.raises(FieldError):
        G(0.0, [[1.5, 0.0]])
