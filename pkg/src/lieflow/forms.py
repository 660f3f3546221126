"""Pointwise algebra of k-forms and k-vectors on R^n.

A k-form is stored as a dense coefficient vector of length C(n, k), one entry
per strictly increasing multi-index, in the order produced by
``itertools.combinations(range(n), k)``.  Indices are 0-based internally; the
string labels use 1-based indices (``dx1^dx3``).

Conventions:

* the value of a form on a k-vector is the plain sum over increasing
  multi-indices, no factorial factors;
* the wedge product is the shuffle product, so that the coefficient of
  ``dx_I`` in ``F ^ G`` is the sum of ``sign(I, J) F_I G_J``;
* sharp and flat relabel coefficients (Euclidean metric).

Every routine accepting coefficient arrays broadcasts over leading axes, so a
batch of point values has shape ``(m, C(n, k))``.
"""

from functools import lru_cache
from itertools import combinations
from math import comb

import numpy as np

MAX_DIM = 8


class FormError(ValueError):
    pass


def _check_dims(n, k):
    if not (isinstance(n, (int, np.integer)) and 1 <= n <= MAX_DIM):
        raise FormError(f"dimension n={n} outside 1..{MAX_DIM}")
    if not (isinstance(k, (int, np.integer)) and 0 <= k <= n):
        raise FormError(f"degree k={k} outside 0..{n}")


def n_components(n, k):
    return comb(n, k)


@lru_cache(maxsize=None)
def multi_indices(n, k):
    """Increasing multi-indices of length k in lexicographic order."""
    _check_dims(n, k)
    return tuple(combinations(range(n), k))


@lru_cache(maxsize=None)
def index_map(n, k):
    return {I: pos for pos, I in enumerate(multi_indices(n, k))}


def permutation_sign(seq):
    """Sign of the permutation sorting ``seq``; 0 if an entry repeats."""
    seq = list(seq)
    if len(set(seq)) != len(seq):
        return 0
    sign = 1
    # cycle decomposition of the sorting permutation
    order = sorted(range(len(seq)), key=seq.__getitem__)
    seen = [False] * len(seq)
    for i in range(len(seq)):
        if seen[i]:
            continue
        j, length = i, 0
        while not seen[j]:
            seen[j] = True
            j = order[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


def canonicalize(idx):
    """Return (sorted multi-index, sign); sign is 0 for a repeated index."""
    idx = tuple(int(i) for i in idx)
    s = permutation_sign(idx)
    if s == 0:
        return None, 0
    return tuple(sorted(idx)), s


def label(I, prefix="dx"):
    if len(I) == 0:
        return "1"
    return "^".join(f"{prefix}{i + 1}" for i in I)


@lru_cache(maxsize=None)
def _wedge_tensor(n, k, l):
    """Dense shuffle tensor S[a, b, c] = sign for F_a G_b -> out_c."""
    out = index_map(n, k + l)
    S = np.zeros((comb(n, k), comb(n, l), comb(n, k + l)))
    for a, I in enumerate(multi_indices(n, k)):
        for b, J in enumerate(multi_indices(n, l)):
            s = permutation_sign(I + J)
            if s:
                S[a, b, out[tuple(sorted(I + J))]] = s
    return S


def wedge_coeffs(a, b, n, k, l):
    """Wedge of coefficient arrays of a k-form and an l-form."""
    if k + l > n:
        raise FormError(f"degree {k}+{l} exceeds n={n}")
    return np.einsum("...a,...b,abc->...c", np.asarray(a, float),
                     np.asarray(b, float), _wedge_tensor(n, k, l))


def pair_coeffs(a, b):
    """Pairing of a form with a k-vector (or Euclidean inner product)."""
    return np.sum(np.asarray(a, float) * np.asarray(b, float), axis=-1)


def bundle_norm(a):
    return np.sqrt(np.sum(np.asarray(a, float) ** 2, axis=-1))


@lru_cache(maxsize=None)
def _minor_gather(n, k):
    idx = np.array(multi_indices(n, k), dtype=int).reshape(-1, k)
    return idx


def compound_matrix(A, k):
    """k-th compound: ``M[..., I, J] = det(A[..., I rows, J cols])``.

    With ``A = Dphi`` the pull-back of a k-form is ``coeffs(phi(x)) @ M``.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[-1]
    if A.shape[-2] != n:
        raise FormError("compound_matrix needs square matrices")
    lead = A.shape[:-2]
    if k == 0:
        return np.ones(lead + (1, 1))
    if k == n:
        return np.linalg.det(A)[..., None, None]
    if k == 1:
        return A.copy()
    idx = _minor_gather(n, k)
    C = idx.shape[0]
    rows = idx[:, None, :, None]   # (C, 1, k, 1)
    cols = idx[None, :, None, :]   # (1, C, 1, k)
    sub = A[..., rows, cols]       # lead + (C, C, k, k)
    return np.linalg.det(sub).reshape(lead + (C, C))


def evaluate_on_vectors(a, V, k):
    """Value of a k-form on the wedge of the k columns of ``V`` (shape n x k)."""
    V = np.asarray(V, dtype=float)
    n = V.shape[-2]
    if V.shape[-1] != k:
        raise FormError(f"expected {k} tangent vectors, got {V.shape[-1]}")
    if k == 0:
        return np.asarray(a, float)[..., 0]
    idx = _minor_gather(n, k)
    sub = V[..., idx, :]           # lead + (C, k, k)
    return np.sum(np.asarray(a, float) * np.linalg.det(sub), axis=-1)


@lru_cache(maxsize=None)
def substitution_table(n, k):
    """Index substitutions used by the Lie derivative of k-forms.

    Returns arrays (J, a, l, I, sign): replacing the a-th entry of the sorted
    multi-index number J by l gives, after sorting, sign * multi-index I.
    Entries producing a repeated index are dropped.
    """
    imap = index_map(n, k)
    rows = []
    for jpos, J in enumerate(multi_indices(n, k)):
        for a in range(k):
            for l in range(n):
                new = J[:a] + (l,) + J[a + 1:]
                I, s = canonicalize(new)
                if s:
                    rows.append((jpos, J[a], l, imap[I], s))
    if not rows:
        z = np.zeros(0, int)
        return z, z, z, z, np.zeros(0)
    t = np.array(rows)
    return t[:, 0], t[:, 1], t[:, 2], t[:, 3], t[:, 4].astype(float)


@lru_cache(maxsize=None)
def lie_index_tensor(n, k):
    """Tensor P with (zero-order part of L_b K)_J = sum P[J, I, p, q] K_I Db[p, q].

    Here ``Db[p, q] = d b^p / d x_q``.  The adjoint uses the same tensor with
    ``Db`` transposed.
    """
    C = comb(n, k)
    P = np.zeros((C, C, n, n))
    J, ja, l, I, s = substitution_table(n, k)
    np.add.at(P, (J, I, l, ja), s)
    return P


class _Multi:
    prefix = "dx"

    def __init__(self, n, k, coeffs=None):
        _check_dims(n, k)
        self.n, self.k = int(n), int(k)
        C = comb(n, k)
        if coeffs is None:
            coeffs = np.zeros(C)
        coeffs = np.array(coeffs, dtype=float)
        if coeffs.shape != (C,):
            raise FormError(f"expected {C} coefficients, got shape {coeffs.shape}")
        self.coeffs = coeffs

    @classmethod
    def basis(cls, n, idx, value=1.0):
        """Elementary element ``value * e_idx``; idx may be unsorted."""
        k = len(idx)
        out = cls(n, k)
        if any(not 0 <= i < n for i in idx):
            raise FormError(f"index {idx} out of range for n={n}")
        I, s = canonicalize(idx)
        if s:
            out.coeffs[index_map(n, k)[I]] = s * value
        return out

    @classmethod
    def from_dict(cls, n, k, d):
        out = cls(n, k)
        for idx, v in d.items():
            if len(idx) != k:
                raise FormError(f"multi-index {idx} has wrong length")
            I, s = canonicalize(idx)
            if s:
                out.coeffs[index_map(n, k)[I]] += s * v
        return out

    def component(self, idx):
        I, s = canonicalize(idx)
        if not s:
            return 0.0
        return s * self.coeffs[index_map(self.n, self.k)[I]]

    def _same(self, other):
        if type(other) is not type(self) or (other.n, other.k) != (self.n, self.k):
            raise FormError("incompatible operands")

    def __add__(self, other):
        self._same(other)
        return type(self)(self.n, self.k, self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._same(other)
        return type(self)(self.n, self.k, self.coeffs - other.coeffs)

    def __neg__(self):
        return type(self)(self.n, self.k, -self.coeffs)

    def __mul__(self, c):
        return type(self)(self.n, self.k, self.coeffs * float(c))

    __rmul__ = __mul__

    def norm(self):
        return float(bundle_norm(self.coeffs))

    def allclose(self, other, atol=1e-12):
        self._same(other)
        return bool(np.allclose(self.coeffs, other.coeffs, rtol=0, atol=atol))

    def __repr__(self):
        terms = [f"{c:+g} {label(I, self.prefix)}"
                 for c, I in zip(self.coeffs, multi_indices(self.n, self.k)) if c != 0]
        body = " ".join(terms) if terms else "0"
        return f"{type(self).__name__}(n={self.n}, k={self.k}: {body})"


class FormValue(_Multi):
    """Value of a k-form at a point."""

    prefix = "dx"

    def wedge(self, other):
        if not isinstance(other, FormValue) or other.n != self.n:
            raise FormError("wedge needs two forms on the same space")
        if self.k + other.k > self.n:
            raise FormError(f"degree {self.k}+{other.k} exceeds n={self.n}")
        c = wedge_coeffs(self.coeffs, other.coeffs, self.n, self.k, other.k)
        return FormValue(self.n, self.k + other.k, c)

    __xor__ = wedge

    def pair(self, vec):
        return pairing(self, vec)

    def sharp(self):
        return MultiVectorValue(self.n, self.k, self.coeffs.copy())

    def inner(self, other):
        self._same(other)
        return float(pair_coeffs(self.coeffs, other.coeffs))


class MultiVectorValue(_Multi):
    """Value of a k-vector field at a point."""

    prefix = "d"

    def wedge(self, other):
        if not isinstance(other, MultiVectorValue) or other.n != self.n:
            raise FormError("wedge needs two k-vectors on the same space")
        if self.k + other.k > self.n:
            raise FormError(f"degree {self.k}+{other.k} exceeds n={self.n}")
        c = wedge_coeffs(self.coeffs, other.coeffs, self.n, self.k, other.k)
        return MultiVectorValue(self.n, self.k + other.k, c)

    __xor__ = wedge

    def flat(self):
        return FormValue(self.n, self.k, self.coeffs.copy())

    @classmethod
    def from_vectors(cls, vectors):
        """Wedge of a list of vectors in R^n."""
        V = np.atleast_2d(np.asarray(vectors, float))
        k, n = V.shape
        out = cls(n, 0, [1.0])
        for v in V:
            out = out.wedge(cls(n, 1, v))
        return out


def wedge(F, G):
    return F.wedge(G)


def pairing(U, K):
    """Pairing of a k-vector with a k-form; the arguments may come in either order."""
    if isinstance(U, FormValue) and isinstance(K, MultiVectorValue):
        U, K = K, U
    if not isinstance(U, MultiVectorValue) or not isinstance(K, FormValue):
        raise FormError("pairing takes a k-vector and a form")
    if (U.n, U.k) != (K.n, K.k):
        raise FormError(f"degree mismatch: k-vector ({U.n},{U.k}) vs form ({K.n},{K.k})")
    return float(pair_coeffs(U.coeffs, K.coeffs))


def sharp(F):
    return F.sharp()


def flat(V):
    return V.flat()
