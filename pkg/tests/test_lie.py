import numpy as np
import pytest

from lieflow.counterexamples import b_alpha
from lieflow.fields import (FieldError, KFormField, PolynomialForm, QuadratureGrid, TestForm,
                            VectorField, l2_inner)
from lieflow.forms import FormValue
from lieflow.lie import (AdjointLieField, LieDerivativeField, Mollifier, adjoint_lie,
                         adjoint_lie_squared, commutator_pairing, distributional_adjoint_pairing,
                         double_commutator_pairing, duality_gap, lie_derivative, loglog_slope,
                         mollify)


def assert_coeffs(F, expected, tol=1e-9):
    c = F.coeffs if isinstance(F, FormValue) else np.asarray(F)
    assert np.max(np.abs(c - np.asarray(expected, float))) <= tol, f"{c} vs {expected}"


ROT = VectorField.linear([[0.0, 1.0], [-1.0, 0.0]], name="rot")


def test_lie_zero_field():
    K = PolynomialForm(2, 1, [[(1.0, (1, 1))], [(2.0, (0, 2))]])
    assert_coeffs(lie_derivative(VectorField.zero(2), K, 0.0, [0.3, 0.4]), [0, 0])


def test_lie_scalar_example():
    u = PolynomialForm(2, 0, [[(1.0, (2, 0))]])
    out = lie_derivative(VectorField.constant([1.0, 0.0]), u, 0.0, [3.0, 0.0])
    assert_coeffs(out, [6.0])


def symbolic_lie_rot_x1dx2(x):
    # L_b K = b . grad K_j + K_l d_j b^l with b = (x2, -x1), K = x1 dx2:
    #   j=1: 0 + K_2 d_1 b^2 = -x1 ;  j=2: b^1 * 1 + K_2 d_2 b^2 = x2
    return [-x[0], x[1]]


def test_lie_rotation_example():
    K = PolynomialForm(2, 1, [[], [(1.0, (1, 0))]])
    for x in ([0.3, -0.2], [1.5, 2.0]):
        assert_coeffs(lie_derivative(ROT, K, 0.0, x), symbolic_lie_rot_x1dx2(x))


def test_lie_volume_form_is_divergence():
    rho = KFormField.constant(2, 2, [1.0])
    out = lie_derivative(VectorField.linear(np.eye(2)), rho, 0.0, [0.7, -1.1])
    assert_coeffs(out, [2.0])


def test_adjoint_examples():
    theta = PolynomialForm(2, 2, [[(1.0, (1, 0))]])
    assert_coeffs(adjoint_lie(VectorField.zero(2), theta, 0.0, [0.1, 0.2]), [0.0])
    assert_coeffs(adjoint_lie(VectorField.constant([1.0, 0.0]), theta, 0.0, [0.1, 0.2]), [-1.0])


def test_adjoint_squared_scalar():
    u = PolynomialForm(2, 0, [[(1.0, (2, 0))]])
    assert_coeffs(adjoint_lie_squared(VectorField.constant([1.0, 0.0]), u, 0.0, [0.4, 0.0]), [2.0])


def _poly_field():
    def jac(t, X):
        J = np.zeros((X.shape[0], 2, 2))
        J[:, 0, 0], J[:, 0, 1], J[:, 1, 0] = X[:, 1], X[:, 0], np.cos(X[:, 0])
        return J
    return VectorField(2, lambda t, X: np.stack([X[:, 0] * X[:, 1] + 0.3, np.sin(X[:, 0])], 1),
                       jac=jac, name="b")


@pytest.mark.parametrize("k", [0, 1, 2])
def test_duality_on_grid(k):
    rng = np.random.default_rng(10 + k)
    K = TestForm.random(2, k, rng)
    T = TestForm.random(2, k, rng)
    g = QuadratureGrid.cube(2, 1.0, 64)
    gap, lhs, rhs = duality_gap(_poly_field(), K, T, g)
    # integration by parts holds up to midpoint quadrature error (~1e-6 at h = 1/32)
    assert abs(gap) <= 1e-5 * max(1.0, abs(lhs))


def test_lie_fields_match_pointwise_operators():
    rng = np.random.default_rng(1)
    K = TestForm.random(3, 2, rng)
    b = VectorField.linear(rng.normal(size=(3, 3)))
    X = K.center + rng.uniform(-0.2, 0.2, size=(4, 3))
    L = LieDerivativeField(b, K)
    A = AdjointLieField(b, K)
    for i, x in enumerate(X):
        assert_coeffs(L(0.0, X)[i], lie_derivative(b, K, 0.0, x).coeffs, 1e-10)
        assert_coeffs(A(0.0, X)[i], adjoint_lie(b, K, 0.0, x).coeffs, 1e-10)
    # analytic gradient of L_b K against finite differences
    fd = KFormField(3, 2, L.__call__, fd_step=1e-6)
    assert np.max(np.abs(L.gradient(0.0, X) - fd.gradient(0.0, X))) < 1e-5


def test_lie_is_derivative_of_pullback():
    # d/dt phi_t^* K at t=0 equals L_b K for a linear flow
    from lieflow.transport import linear_flow, pullback_form
    A = np.array([[0.2, -0.7], [0.4, 0.1]])
    K = PolynomialForm(2, 1, [[(1.0, (1, 1))], [(0.5, (2, 0))]])
    x = np.array([0.3, -0.6])
    flow = linear_flow(A)
    h = 1e-5
    d = (pullback_form(K, flow, h, x).coeffs - pullback_form(K, flow, -h, x).coeffs) / (2 * h)
    assert_coeffs(d, lie_derivative(VectorField.linear(A), K, 0.0, x).coeffs, 1e-8)


def test_distributional_pairing_smooth_agrees():
    rng = np.random.default_rng(4)
    K = TestForm.random(2, 1, rng)
    T = TestForm.random(2, 1, rng)
    b = _poly_field()
    g = QuadratureGrid.cube(2, 1.0, 96)
    ref = l2_inner(K, AdjointLieField(b, T), g)
    d = distributional_adjoint_pairing(b, T, K, g)
    assert abs(d - ref) <= 1e-3 * max(1.0, abs(ref))


def test_distributional_pairing_holder_drift_is_stable():
    # b_alpha is not differentiable at 0; refining the excluded ball barely moves the value
    rng = np.random.default_rng(2)
    K = TestForm(2, 1, [0.05, 0.0], 0.6, rng.normal(size=2), rng.normal(size=(2, 2)))
    T = TestForm(2, 1, [0.0, 0.05], 0.6, rng.normal(size=2), rng.normal(size=(2, 2)))
    b = b_alpha(0.5, 2)
    vals = []
    for delta in (0.04, 0.02, 0.01):
        g = QuadratureGrid.cube(2, 1.0, 200, exclude_radius=delta)
        vals.append(distributional_adjoint_pairing(b, T, K, g))
    assert np.all(np.isfinite(vals))
    assert abs(vals[2] - vals[1]) < abs(vals[1] - vals[0]) + 1e-6


def test_mollifier_profile_and_mass():
    m = Mollifier(0.2, 2)
    r = np.array([0.0, 0.05, 0.1, 0.2, 0.21])
    p = m.profile(r / 0.2)
    assert abs(p[0] - p[1]) < 1e-12 and abs(p[0] - p[2]) < 1e-12   # plateau on |x| <= eps/2
    assert p[3] == 0.0 and p[4] == 0.0
    kern, vol = m.discrete_kernel(np.array([0.01, 0.01]))
    assert abs(kern.sum() * vol - 1.0) < 1e-12
    with pytest.raises(FieldError):
        m.discrete_kernel(np.array([0.15, 0.15]))


def test_mollify_constant_and_convergence():
    g = QuadratureGrid.cube(2, 1.0, 128)
    c = KFormField.constant(2, 0, [2.5])
    Kc = mollify(c, Mollifier(0.1, 2), g)
    X = g.points().reshape(128, 128, 2)[40:88, 40:88].reshape(-1, 2)
    assert np.max(np.abs(Kc(0.0, X) - 2.5)) < 1e-12
    K = TestForm(2, 1, [0.0, 0.0], 0.7, [1.0, -0.5], [[0.2, 0.0], [0.0, 0.3]])
    errs = []
    for eps in (0.2, 0.1, 0.05):
        Ke = mollify(K, Mollifier(eps, 2), g)
        d = Ke(0.0, g.nodes) - K(0.0, g.nodes)
        errs.append(np.sqrt(g.integrate(np.sum(d * d, axis=1))))
    assert loglog_slope([0.2, 0.1, 0.05], errs) >= 1.0


def test_commutator_vanishes_for_constant_field():
    rng = np.random.default_rng(0)
    K = TestForm.random(2, 1, rng)
    T = TestForm.random(2, 1, rng)
    g = QuadratureGrid.cube(2, 1.0, 128)
    for eps in (0.2, 0.1):
        m = Mollifier(eps, 2)
        assert abs(commutator_pairing(VectorField.constant([0.3, -1.0]), K, T, m, g)) < 1e-12
        assert abs(double_commutator_pairing(VectorField.constant([0.3, -1.0]), K, T, m, g)) < 1e-12


def test_commutator_smooth_data_decays():
    rng = np.random.default_rng(3)
    K = TestForm.random(2, 1, rng)
    T = TestForm.random(2, 1, rng)
    g = QuadratureGrid.cube(2, 1.0, 256)
    eps = [0.2, 0.1, 0.05]
    v = [commutator_pairing(b_alpha(0.5, 2), K, T, Mollifier(e, 2), g) for e in eps]
    assert np.all(np.diff(np.abs(v)) < 0)
    assert loglog_slope(eps, v) > 1.0


def test_commutator_rejects_support_overflow():
    T = TestForm(2, 1, [0.8, 0.0], 0.3, [1.0, 0.0])
    g = QuadratureGrid.cube(2, 1.0, 64)
    with pytest.raises(FieldError):
        commutator_pairing(ROT, T, T, Mollifier(0.2, 2), g)
