import itertools
from math import comb, factorial

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lieflow.forms import (FormError, FormValue, MultiVectorValue, bundle_norm, compound_matrix,
                           evaluate_on_vectors, flat, multi_indices, pairing, permutation_sign,
                           sharp, wedge)


def dx(n, *idx, c=1.0):
    # 1-based labels, as in the usual notation
    return FormValue.basis(n, [i - 1 for i in idx], c)


def dd(n, *idx, c=1.0):
    return MultiVectorValue.basis(n, [i - 1 for i in idx], c)


def assert_form(F, expected, atol=1e-12):
    assert F.allclose(expected, atol=atol), f"{F} != {expected}"


def tensor_of(F):
    """Fully antisymmetric coefficient tensor with T[I] = F_I on sorted I."""
    T = np.zeros((F.n,) * F.k)
    for c, I in zip(F.coeffs, multi_indices(F.n, F.k)):
        for perm in itertools.permutations(range(F.k)):
            J = tuple(I[p] for p in perm)
            T[J] = permutation_sign(perm) * c
    return T


def wedge_oracle(A, B):
    """Wedge by brute force over all index tuples (alternation of A (x) B)."""
    n, k, l = A.n, A.k, B.k
    TA, TB = tensor_of(A), tensor_of(B)
    out = FormValue(n, k + l)
    for pos, I in enumerate(multi_indices(n, k + l)):
        s = 0.0
        for perm in itertools.permutations(range(k + l)):
            J = tuple(I[p] for p in perm)
            s += permutation_sign(perm) * TA[J[:k]] * TB[J[k:]]
        out.coeffs[pos] = s / (factorial(k) * factorial(l))
    return out


# -- wedge ---------------------------------------------------------------------

def test_repeated_factor_vanishes():
    assert_form(dx(3, 1) ^ dx(3, 1), FormValue(3, 2))


def test_wedge_antisymmetry():
    assert_form(dx(2, 1) ^ dx(2, 2), dx(2, 1, 2))
    assert_form(dx(2, 2) ^ dx(2, 1), dx(2, 1, 2, c=-1.0))


def test_wedge_example_value():
    out = wedge(dx(3, 1, c=2.0), dx(3, 2, 3, c=3.0))
    assert_form(out, dx(3, 1, 2, 3, c=6.0))


def test_wedge_degree_overflow():
    with pytest.raises(FormError):
        dx(2, 1, 2) ^ dx(2, 1)


def test_wedge_matches_permutation_oracle():
    rng = np.random.default_rng(3)
    for n, k, l in [(3, 1, 1), (3, 1, 2), (4, 2, 2), (5, 2, 1), (5, 1, 3)]:
        A = FormValue(n, k, rng.normal(size=comb(n, k)))
        B = FormValue(n, l, rng.normal(size=comb(n, l)))
        assert_form(A ^ B, wedge_oracle(A, B), atol=1e-11)


forms_nkl = st.integers(1, 5).flatmap(
    lambda n: st.tuples(st.just(n), st.integers(0, n)).flatmap(
        lambda t: st.tuples(st.just(t[0]), st.just(t[1]), st.integers(0, t[0] - t[1]),
                            st.integers(0, 2 ** 31 - 1))))


@settings(max_examples=60, deadline=None)
@given(forms_nkl)
def test_graded_anticommutativity(args):
    n, k, l, seed = args
    rng = np.random.default_rng(seed)
    A = FormValue(n, k, rng.normal(size=comb(n, k)))
    B = FormValue(n, l, rng.normal(size=comb(n, l)))
    assert_form(A ^ B, (B ^ A) * (-1) ** (k * l), atol=1e-10)


@settings(max_examples=60, deadline=None)
@given(forms_nkl)
def test_wedge_bilinear_and_associative(args):
    n, k, l, seed = args
    rng = np.random.default_rng(seed)
    A, A2 = (FormValue(n, k, rng.normal(size=comb(n, k))) for _ in range(2))
    B = FormValue(n, l, rng.normal(size=comb(n, l)))
    s = rng.normal()
    assert_form((A * s + A2) ^ B, (A ^ B) * s + (A2 ^ B), atol=1e-10)
    m = int(rng.integers(0, n - k - l + 1))
    C = FormValue(n, m, rng.normal(size=comb(n, m)))
    assert_form((A ^ B) ^ C, A ^ (B ^ C), atol=1e-10)


# -- pairing, sharp, flat, norm ----------------------------------------------------------

def test_pairing_examples():
    assert pairing(dd(2, 1, 2), dx(2, 1, 2)) == 1.0
    assert pairing(dd(3, 1, 2), dx(3, 1, 3)) == 0.0
    U = dd(3, 1, 2, c=2.0) + dd(3, 2, 3)
    assert pairing(U, dx(3, 2, 3)) == 1.0


def test_pairing_of_wedged_vectors_is_determinant():
    rng = np.random.default_rng(5)
    V = rng.normal(size=(3, 4))
    F = dx(4, 1, 2, 4)
    U = MultiVectorValue.from_vectors(V)
    assert np.isclose(pairing(U, F), np.linalg.det(V[:, [0, 1, 3]]), atol=1e-12)


def test_pairing_mismatch():
    with pytest.raises(FormError):
        pairing(dd(3, 1), dx(3, 1, 2))


def test_sharp_flat():
    assert sharp(FormValue(3, 1)).norm() == 0.0
    out = sharp(dx(3, 2, c=3.0))
    assert out.allclose(dd(3, 2, c=3.0))
    rng = np.random.default_rng(0)
    K = FormValue(4, 2, rng.normal(size=6))
    assert flat(sharp(K)).allclose(K)


def test_bundle_norm_examples():
    assert FormValue(3, 2).norm() == 0.0
    assert np.isclose((dx(3, 1, 2) + dx(3, 1, 3)).norm(), np.sqrt(2.0))
    K = FormValue(3, 1, [1.0, -2.0, 0.5])
    assert np.isclose((K * -3.0).norm(), 3.0 * K.norm())
    assert np.isclose(bundle_norm(K.coeffs), K.norm())


def test_repeated_index_component_is_zero():
    assert dx(3, 1, 2).component((0, 0)) == 0.0
    assert dx(3, 1, 2).component((1, 0)) == -1.0


def test_compound_matrix_minors():
    rng = np.random.default_rng(2)
    A = rng.normal(size=(4, 4))
    for k in range(5):
        M = compound_matrix(A, k)
        idx = multi_indices(4, k)
        for a, I in enumerate(idx):
            for b, J in enumerate(idx):
                ref = 1.0 if k == 0 else np.linalg.det(A[np.ix_(I, J)])
                assert np.isclose(M[a, b], ref, atol=1e-12)


def test_compound_is_multiplicative():
    # Cauchy-Binet: C_k(AB) = C_k(A) C_k(B)
    rng = np.random.default_rng(4)
    A, B = rng.normal(size=(2, 5, 5))
    for k in range(6):
        assert np.allclose(compound_matrix(A @ B, k), compound_matrix(A, k) @ compound_matrix(B, k))


def test_evaluate_on_vectors():
    V = np.array([[1.0, 0.0], [0.0, 2.0]])
    assert np.isclose(evaluate_on_vectors(dx(2, 1, 2).coeffs, V, 2), 2.0)
    assert np.isclose(evaluate_on_vectors(dx(2, 2).coeffs, V[:, [1]], 1), 2.0)


def test_dimension_limits():
    with pytest.raises(FormError):
        FormValue(9, 1)
    with pytest.raises(FormError):
        FormValue(3, 4)
