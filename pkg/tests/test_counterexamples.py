import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from lieflow.counterexamples import (CounterexampleParams, DomainError, Phi_explicit,
                                     Psi_explicit, b_alpha, b_prime_alpha, blowup_flow,
                                     blowup_solution, blowup_sup, bump_form, fixture,
                                     nonunique_solution, phi_explicit, psi_explicit,
                                     vacated_radius, validate_nonunique)


def assert_close(a, b, tol, what=""):
    err = float(np.max(np.abs(np.asarray(a, float) - np.asarray(b, float))))
    assert err <= tol, f"{what}: error {err:.3e} > {tol:.1e}"


def fd_jacobian(f, X, h=1e-6):
    cols = [(f(X + h * e)[0] - f(X - h * e)[0]) / (2 * h) for e in np.eye(X.shape[1])]
    return np.stack(cols, axis=2)


def test_drift_values():
    b = b_alpha(0.5, 2)
    assert_close(b(0.0, [[0.0, 0.0]]), [[0.0, 0.0]], 0.0)
    assert_close(b(0.0, [[2.0, 0.0]]), [[2.0, 0.0]], 1e-15)        # saturated outside R=1
    assert_close(b(0.0, [[0.25, 0.0]]), [[1.0, 0.0]], 1e-15)       # 0.25^0.5 / 0.5


def test_flow_examples():
    assert_close(phi_explicit(0.25, [[0.25, 0.0]], 0.5)[0], [[0.5625, 0.0]], 1e-15)
    assert_close(phi_explicit(1.0, [[2.0, 0.0]], 0.5)[0], [[4.0, 0.0]], 1e-15)
    assert_close(Phi_explicit(1.0, [[0.5, 0.0]], 0.5)[0], [[0.25, 0.0]], 1e-15)
    assert_close(Psi_explicit(1.0, [[0.25, 0.0]], 0.5)[0], [[0.5, 0.0]], 1e-15)


def test_phi_matches_ode_solver():
    # independent oracle: integrate the radial ODE numerically
    alpha = 0.6
    b = b_alpha(alpha, 2)
    for x in ([0.05, 0.02], [0.4, -0.3], [1.5, 0.2]):
        sol = solve_ivp(lambda t, y: b(t, y[None])[0], (0.0, 0.7), x, rtol=1e-11, atol=1e-12)
        assert_close(phi_explicit(0.7, [x], alpha)[0], sol.y[:, -1][None], 1e-7, str(x))


@settings(max_examples=40, deadline=None)
@given(st.floats(0.2, 0.9), st.floats(0.0, 0.8), st.floats(0.05, 2.0), st.floats(0, 2 * np.pi))
def test_flow_round_trip(alpha, t, r, a):
    x = np.array([[r * np.cos(a), r * np.sin(a), 0.1 * r]])
    y, _ = phi_explicit(t, x, alpha)
    z, _ = psi_explicit(t, y, alpha)
    assert_close(z, x, 1e-10)


@pytest.mark.parametrize("t,r", [(0.1, 0.2), (0.3, 0.8), (0.5, 1.4), (0.9, 0.3)])
def test_jacobians_match_finite_differences(t, r):
    alpha = 0.5
    x = np.array([[r * 0.6, r * 0.8]])
    _, D = phi_explicit(t, x, alpha)
    assert_close(D, fd_jacobian(lambda X: phi_explicit(t, X, alpha), x), 1e-6, "Dphi")
    y, _ = phi_explicit(t, x, alpha)
    _, Dp = psi_explicit(t, y, alpha)
    assert_close(Dp, fd_jacobian(lambda X: psi_explicit(t, X, alpha), y), 1e-6, "Dpsi")
    assert_close(Dp @ D, np.eye(2)[None], 1e-10, "Dpsi Dphi")


def test_emitted_trajectories_fill_vacated_ball():
    alpha, t = 0.5, 0.2
    rv = vacated_radius(t, alpha)
    x = np.array([[0.3 * rv, 0.0], [0.0, -0.9 * rv]])
    z, D = Psi_explicit(t, x, alpha)
    y, _ = Phi_explicit(t, z, alpha)
    assert_close(y, x, 1e-12)
    # the vacated ball is exactly phi_t's missed region
    edge = phi_explicit(t, [[1e-12, 0.0]], alpha)[0]
    assert abs(edge[0, 0] - rv) < 1e-5
    with pytest.raises(DomainError):
        phi_explicit(t, [[0.0, 0.0]], alpha)


def test_params_validation():
    validate_nonunique(CounterexampleParams())
    with pytest.raises(ValueError, match="constraint kp < n violated"):
        validate_nonunique(CounterexampleParams(n=3, k=2, p=2))
    with pytest.raises(ValueError):
        validate_nonunique(CounterexampleParams(T=0.9))
    with pytest.raises(ValueError):
        validate_nonunique(CounterexampleParams(alpha=1.0))


def test_two_solutions_share_initial_data():
    p = CounterexampleParams()
    K0 = bump_form(3, 1, 0, radius=0.5)
    G = bump_form(3, 1, 2, radius=0.5)
    K_a, K_b = nonunique_solution(K0, None, p), nonunique_solution(K0, G, p)
    X = np.random.default_rng(0).uniform(-0.6, 0.6, size=(50, 3))
    assert np.array_equal(K_a(0.0, X), K_b(0.0, X))
    rv = vacated_radius(0.1, p.alpha)
    inside = np.array([[0.3 * rv, 0.1 * rv, 0.0]])
    assert np.all(K_a(0.1, inside) == 0.0)
    assert abs(K_b(0.1, inside)[0, 2]) > 0.0
    with pytest.raises(ValueError):
        nonunique_solution(bump_form(3, 1, 0, center=[0.3, 0, 0], radius=0.5), None, p)


def test_shear_drift_is_divergence_free():
    b = b_prime_alpha(0.7, 3)
    X = np.random.default_rng(1).uniform(-2, 2, size=(20, 3))
    assert np.max(np.abs(b.divergence(0.0, X))) == 0.0
    with pytest.raises(ValueError):
        b_prime_alpha(0.7, 1)


def test_shear_flow_round_trip():
    f = blowup_flow(0.8, 3)
    X = np.random.default_rng(2).uniform(-2, 2, size=(20, 3))
    Y, D = f.forward(0.6, X)
    Z, Dz = f.inverse(0.6, Y)
    assert_close(Z, X, 1e-14)
    assert_close(Dz @ D, np.eye(3)[None], 1e-12)


@pytest.mark.parametrize("n,k", [(2, 1), (3, 1), (3, 2), (4, 2)])
def test_blowup_component(n, k):
    alpha, t, d = 0.8, 0.5, 1e-3
    sol = blowup_solution(alpha, k, n)
    x = np.zeros((2, n))
    x[:, 0] = [d, -d]
    x[:, 1] = t * d ** alpha
    v = sol(t, x)
    expect = -np.array([1.0, -1.0]) * alpha * d ** (alpha - 1) * t
    assert_close(v[:, sol.blowup_channel()], expect, 1e-9 * abs(expect[0]))
    assert_close(v[:, sol.transported_channel()], 1.0, 0.0)
    assert abs(blowup_sup(sol, d, t) - abs(expect[0])) < 1e-9 * abs(expect[0])


def test_blowup_rejects_bad_params():
    with pytest.raises(ValueError):
        blowup_solution(0.4, 1, 2, p=2.0)         # alpha below (p-1)/p
    with pytest.raises(ValueError):
        blowup_solution(0.8, 2, 2)


def test_fixture_registry():
    geo = fixture("geometric")
    assert np.isclose(geo["exact"](2.0, 0.5), 2.0 * np.exp(0.5))
    assert set(fixture("rotation")) >= {"b", "xis"}
    with pytest.raises(KeyError):
        fixture("nope")
