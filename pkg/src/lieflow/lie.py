"""Lie derivative of k-forms, its L2 adjoint, mollification and commutators.

In coordinates, for a sorted multi-index J = (j_1 < ... < j_k),

    (L_b K)_J  =  b^l d_l K_J + sum_a K_{J[j_a -> l]} d_{j_a} b^l
    (L*_b T)_J = -d_l(b^l T_J) + sum_a T_{J[j_a -> l]} d_l b^{j_a}

where J[j_a -> l] is J with its a-th entry replaced by l, re-sorted with the
permutation sign (and dropped when an index repeats).  The ``*_arrays``
functions work on pre-evaluated point data so that grid computations can mix
convolved and pointwise quantities freely.
"""

import numpy as np
from scipy import special
from scipy.signal import fftconvolve

from .fields import FieldError, KFormField, QuadratureGrid, as_points, lp_norm
from .forms import FormValue, lie_index_tensor


# -- pointwise formulas on arrays ------------------------------------------

def lie_arrays(b, Db, K, dK, k):
    """(L_b K) from b (m,n), Db (m,n,n), K (m,C), dK (m,n,C)."""
    n = b.shape[-1]
    P = lie_index_tensor(n, k)
    out = np.einsum("ml,mlJ->mJ", b, dK)
    if k > 0:
        out += np.einsum("JIpq,mI,mpq->mJ", P, K, Db, optimize=True)
    return out


def lie_grad_arrays(b, Db, D2b, K, dK, d2K, k):
    """Spatial gradient of L_b K, shape (m, n, C)."""
    n = b.shape[-1]
    P = lie_index_tensor(n, k)
    out = np.einsum("mlq,mlJ->mqJ", Db, dK) + np.einsum("ml,mqlJ->mqJ", b, d2K)
    if k > 0:
        out += np.einsum("JIpr,mqI,mpr->mqJ", P, dK, Db, optimize=True)
        out += np.einsum("JIpr,mI,mprq->mqJ", P, K, D2b, optimize=True)
    return out


def adjoint_arrays(b, Db, T, dT, k):
    """(L*_b T) from pointwise data."""
    n = b.shape[-1]
    P = lie_index_tensor(n, k)
    div = np.trace(Db, axis1=-2, axis2=-1)
    out = -div[:, None] * T - np.einsum("ml,mlJ->mJ", b, dT)
    if k > 0:
        out += np.einsum("JIpq,mI,mqp->mJ", P, T, Db, optimize=True)
    return out


def adjoint_grad_arrays(b, Db, D2b, T, dT, d2T, k):
    """Returns (L*_b T, its gradient) from data up to second derivatives.

    D2b[m, i, j, l] = d_l d_j b^i and d2T[m, l, q, J] = d_l d_q T_J.
    """
    n = b.shape[-1]
    P = lie_index_tensor(n, k)
    div = np.trace(Db, axis1=-2, axis2=-1)
    ddiv = np.einsum("miil->ml", D2b)
    F = adjoint_arrays(b, Db, T, dT, k)
    dF = (-ddiv[:, :, None] * T[:, None, :] - div[:, None, None] * dT
          - np.einsum("mrl,mrJ->mlJ", Db, dT) - np.einsum("mr,mlrJ->mlJ", b, d2T))
    if k > 0:
        dF += np.einsum("JIpq,mlI,mqp->mlJ", P, dT, Db, optimize=True)
        dF += np.einsum("JIpq,mI,mqpl->mlJ", P, T, D2b, optimize=True)
    return F, dF


# -- field-level operators ---------------------------------------------------

def _maybe_value(out, single, n, k):
    return FormValue(n, k, out[0]) if single else out


def lie_derivative(b, K, t, X):
    """L_b K at points X; a FormValue for a single point, else an (m, C) array."""
    X, single = as_points(X, K.n)
    out = lie_arrays(b(t, X), b.jacobian(t, X), K(t, X), K.gradient(t, X), K.k)
    return _maybe_value(out, single, K.n, K.k)


def adjoint_lie(b, T, t, X):
    X, single = as_points(X, T.n)
    out = adjoint_arrays(b(t, X), b.jacobian(t, X), T(t, X), T.gradient(t, X), T.k)
    return _maybe_value(out, single, T.n, T.k)


def adjoint_lie_squared(xi, T, t, X):
    """L*_xi L*_xi T; the inner result's gradient is assembled from second
    derivatives of T and xi (analytic where available, local stencils else)."""
    X, single = as_points(X, T.n)
    v, Dv, D2v = xi(t, X), xi.jacobian(t, X), xi.hessian(t, X)
    F, dF = adjoint_grad_arrays(v, Dv, D2v, T(t, X), T.gradient(t, X), T.hessian(t, X), T.k)
    out = adjoint_arrays(v, Dv, F, dF, T.k)
    return _maybe_value(out, single, T.n, T.k)


class LieDerivativeField(KFormField):
    """The k-form field L_b K, with gradient from second derivatives of K, b."""

    def __init__(self, b, K):
        self.b, self.K = b, K
        super().__init__(K.n, K.k, self._eval, deriv=self._grad, name=f"L_{b.name}{K.name}")

    def _eval(self, t, X):
        return lie_arrays(self.b(t, X), self.b.jacobian(t, X), self.K(t, X),
                          self.K.gradient(t, X), self.K.k)

    def _grad(self, t, X):
        b, K = self.b, self.K
        return lie_grad_arrays(b(t, X), b.jacobian(t, X), b.hessian(t, X), K(t, X),
                               K.gradient(t, X), K.hessian(t, X), K.k)


class AdjointLieField(KFormField):
    """The k-form field L*_b T."""

    def __init__(self, b, T):
        self.b, self.T = b, T
        super().__init__(T.n, T.k, self._eval, deriv=self._grad, name=f"L*_{b.name}{T.name}")

    def _eval(self, t, X):
        return adjoint_arrays(self.b(t, X), self.b.jacobian(t, X), self.T(t, X),
                              self.T.gradient(t, X), self.T.k)

    def _grad(self, t, X):
        b, T = self.b, self.T
        return adjoint_grad_arrays(b(t, X), b.jacobian(t, X), b.hessian(t, X), T(t, X),
                                   T.gradient(t, X), T.hessian(t, X), T.k)[1]


def _check_support(T, grid, margin=0.0):
    c = getattr(T, "center", None)
    R = getattr(T, "radius", None)
    if c is None or R is None:
        return
    if np.any(c - R - margin < grid.lo) or np.any(c + R + margin > grid.hi):
        raise FieldError("test form support (plus margin) escapes the grid box")


def distributional_adjoint_pairing(b, T, K, grid, t=0.0, h=None):
    """<<K, (L*_b)^dist T>> with derivatives only on T and on products b T.

    Uses T_I d_l b^j = d_l(b^j T_I) - b^j d_l T_I, and central differences of
    the products at the grid spacing, so b only needs to be continuous.
    """
    if (K.n, K.k) != (T.n, T.k):
        raise FieldError("degree mismatch")
    _check_support(T, grid)
    X = grid.nodes
    n, k = T.n, T.k
    hs = grid.h if h is None else np.broadcast_to(np.asarray(h, float), (n,))
    dT = T.gradient(t, X)
    bv = b(t, X)
    # d_l(b^i T_J) for all i, l, J by central differences of the product
    dprod = np.empty((X.shape[0], n, n, T.ncomp))     # [m, i, l, J]
    for l in range(n):
        e = np.zeros(n)
        e[l] = hs[l]
        prod_p = b(t, X + e)[:, :, None] * T(t, X + e)[:, None, :]
        prod_m = b(t, X - e)[:, :, None] * T(t, X - e)[:, None, :]
        dprod[:, :, l, :] = (prod_p - prod_m) / (2 * hs[l])
    F = -np.einsum("mllJ->mJ", dprod)
    if k > 0:
        P = lie_index_tensor(n, k)
        # sum P[J,I,p,q] T_I d_p b^q  with  T_I d_p b^q = d_p(b^q T_I) - b^q d_p T_I
        F += np.einsum("JIpq,mqpI->mJ", P, dprod, optimize=True)
        F -= np.einsum("JIpq,mq,mpI->mJ", P, bv, dT, optimize=True)
    return grid.integrate(np.sum(K(t, X) * F, axis=1))


def duality_gap(b, K, T, grid, t=0.0):
    """<<L_b K, T>> - <<K, L*_b T>> on the quadrature grid."""
    X = grid.nodes
    lhs = grid.integrate(np.sum(lie_derivative(b, K, t, X) * T(t, X), axis=1))
    rhs = grid.integrate(np.sum(K(t, X) * adjoint_lie(b, T, t, X), axis=1))
    return lhs - rhs, lhs, rhs


# -- mollifier ---------------------------------------------------------------

def _sphere_area(n):
    return 2 * np.pi ** (n / 2) / special.gamma(n / 2)


def _cap_fraction(c, n):
    """Fraction of the unit sphere S^{n-1} with first coordinate > c."""
    c = np.clip(c, -1.0, 1.0)
    if n == 1:
        return 0.5 * (c < 1).astype(float) + 0.5 * (c < -1).astype(float)
    return 1.0 - special.betainc((n - 1) / 2, (n - 1) / 2, (1 + c) / 2)


def _profile_table(n, size=2049, nquad=256):
    """Radial table of (bump of radius 1/4) * (indicator of B(0, 3/4)).

    The result is smooth, constant on B(0, 1/2) and vanishes outside B(0, 1).
    """
    r = np.linspace(0.0, 1.0, size)
    s, w = np.polynomial.legendre.leggauss(nquad)
    s = 0.125 * (s + 1)            # nodes on (0, 1/4)
    w = 0.125 * w
    beta = np.exp(1 - 1 / (1 - (4 * s) ** 2))
    with np.errstate(divide="ignore", invalid="ignore"):
        c = (s[None, :] ** 2 + r[:, None] ** 2 - 9 / 16) / (2 * s[None, :] * r[:, None])
    c = np.where(r[:, None] == 0, np.where(s[None, :] < 0.75, -2.0, 2.0), c)
    frac = _cap_fraction(c, n)
    area = 2.0 if n == 1 else _sphere_area(n)
    vals = (frac * beta * s ** (n - 1) * w).sum(axis=1) * area
    # normalise to unit integral over R^n
    rr = np.linspace(0, 1, 20001)
    dens = np.interp(rr, r, vals) * rr ** (n - 1) * area
    mass = np.trapezoid(dens, rr)
    return r, vals / mass


_TABLES = {}


class Mollifier:
    """Radial mollifier rho^eps(x) = eps^-n rho(x / eps)."""

    def __init__(self, eps, n):
        if eps <= 0:
            raise FieldError("mollifier scale must be positive")
        self.eps = float(eps)
        self.n = int(n)
        if self.n not in _TABLES:
            _TABLES[self.n] = _profile_table(self.n)
        self._r, self._rho = _TABLES[self.n]

    def profile(self, r):
        r = np.asarray(r, float)
        return np.where(r < 1.0, np.interp(r, self._r, self._rho), 0.0)

    def __call__(self, X):
        X = np.atleast_2d(np.asarray(X, float))
        return self.profile(np.linalg.norm(X, axis=-1) / self.eps) / self.eps ** self.n

    def discrete_kernel(self, h):
        """Kernel sampled on grid offsets, renormalised so that
        sum(kernel) * cell_volume = 1 (constants are reproduced exactly)."""
        h = np.broadcast_to(np.asarray(h, float), (self.n,))
        if self.eps < 2 * h.max():
            raise FieldError(f"eps={self.eps} below two cells (h={h.max():g})")
        half = [int(np.ceil(self.eps / hi)) for hi in h]
        axes = [np.arange(-m, m + 1) * hi for m, hi in zip(half, h)]
        mesh = np.meshgrid(*axes, indexing="ij")
        X = np.stack([g.ravel() for g in mesh], axis=1)
        K = self(X).reshape(mesh[0].shape)
        vol = float(np.prod(h))
        return K / (K.sum() * vol), vol


def convolve_channels(arr, kernel, vol):
    """Discrete convolution of node data (*shape, ...channels) with a kernel."""
    nd = kernel.ndim
    shape = arr.shape[:nd]
    flat = arr.reshape(shape + (-1,))
    out = np.empty_like(flat)
    for c in range(flat.shape[-1]):
        out[..., c] = fftconvolve(flat[..., c], kernel, mode="same") * vol
    return out.reshape(arr.shape)


def mollify(K, m, grid, t=0.0):
    """Channelwise convolution of a k-form with rho^eps on a cell-centred grid.

    ``K`` may be a GridKForm on ``grid`` or any field (sampled first).
    """
    from .fields import GridKForm
    kernel, vol = m.discrete_kernel(grid.h)
    if isinstance(K, GridKForm) and K.grid is grid:
        data = K.data
        times = K.times
    else:
        P = grid.points()
        data = K(t, P).reshape(tuple(grid.shape) + (K.ncomp,))[None]
        times = [t]
    out = np.stack([convolve_channels(d, kernel, vol) for d in data])
    return GridKForm(grid, K.k, out, times, name=f"{K.name}^eps")


# -- commutators ---------------------------------------------------------------

class _GridData:
    """Full tensor-grid node data plus the quadrature mask of a QuadratureGrid."""

    def __init__(self, grid):
        self.grid = grid
        self.X = grid.points()
        self.mask = grid.mask
        self.shape = tuple(grid.shape)

    def to_nodes(self, arr):
        return arr.reshape(self.shape + arr.shape[1:])

    def to_flat(self, arr):
        return arr.reshape((-1,) + arr.shape[len(self.shape):])

    def pair(self, A, B):
        prod = np.sum(A[self.mask] * B[self.mask], axis=tuple(range(1, A.ndim)))
        return float(np.sum(prod) * self.grid.cell_volume)


def _conv(gd, m, arr):
    kernel, vol = m.discrete_kernel(gd.grid.h)
    return gd.to_flat(convolve_channels(gd.to_nodes(arr), kernel, vol))


def commutator_pairing(b, K, T, m, grid, t=0.0):
    """<< [L_b, rho^eps *] K, T >>
       = << K^eps, L*_b T >> - << K, L*_b (rho^eps * T) >>.

    Mollification is moved onto the test form, so only Db (an L^q function)
    is needed, never second derivatives of b.
    """
    if not isinstance(grid, QuadratureGrid):
        raise FieldError("commutator pairing needs a QuadratureGrid")
    _check_support(T, grid, margin=m.eps)
    gd = _GridData(grid)
    X = gd.X
    bv, Db = b(t, X), b.jacobian(t, X)
    Kv, Tv, dT = K(t, X), T(t, X), T.gradient(t, X)
    Ke = _conv(gd, m, Kv)
    A1 = adjoint_arrays(bv, Db, Tv, dT, T.k)
    A2 = adjoint_arrays(bv, Db, _conv(gd, m, Tv), _conv(gd, m, dT), T.k)
    return gd.pair(Ke, A1) - gd.pair(Kv, A2)


def double_commutator_pairing(xi, K, T, m, grid, t=0.0):
    """<< [L_xi, [L_xi, rho^eps *]] K, T >> via adjoints:

       << K, (L*L* T)^eps >> - 2 << K, L*((L* T)^eps) >> + << K, L*L*(T^eps) >>.
    """
    if not isinstance(grid, QuadratureGrid):
        raise FieldError("commutator pairing needs a QuadratureGrid")
    _check_support(T, grid, margin=m.eps)
    gd = _GridData(grid)
    X = gd.X
    k = T.k
    v, Dv, D2v = xi(t, X), xi.jacobian(t, X), xi.hessian(t, X)
    Kv = K(t, X)
    Tv, dT, d2T = T(t, X), T.gradient(t, X), T.hessian(t, X)
    F, dF = adjoint_grad_arrays(v, Dv, D2v, Tv, dT, d2T, k)
    term_a = gd.pair(Kv, _conv(gd, m, adjoint_arrays(v, Dv, F, dF, k)))
    term_b = gd.pair(Kv, adjoint_arrays(v, Dv, _conv(gd, m, F), _conv(gd, m, dF), k))
    H, dH = adjoint_grad_arrays(v, Dv, D2v, _conv(gd, m, Tv), _conv(gd, m, dT),
                                _conv(gd, m, d2T), k)
    term_c = gd.pair(Kv, adjoint_arrays(v, Dv, H, dH, k))
    return term_a - 2 * term_b + term_c


def conjugate_exponent(p):
    if p == 1:
        return np.inf
    if np.isinf(p):
        return 1.0
    return p / (p - 1)


def _ball_grid(grid, center, radius):
    return QuadratureGrid(grid.lo, grid.hi, grid.shape, ball_radius=radius, ball_center=center,
                          exclude_radius=grid.exclude_radius, exclude_center=grid.exclude_center)


def _norm_q(vals, grid, q):
    v = np.abs(vals)
    if np.isinf(q):
        return float(v.max())
    return grid.integrate(v ** q) ** (1 / q)


def commutator_bound(b, K, T, p, grid, t=0.0):
    """||T||_inf ||K||_{L^p(B_{R+1})} ||b||_{W^{1,q}(B_{R+1})} with 1/p + 1/q = 1."""
    q = conjugate_exponent(p)
    ball = _ball_grid(grid, T.center, T.radius + 1)
    X = ball.nodes
    bq = _norm_q(np.linalg.norm(b(t, X), axis=1), ball, q) \
        + _norm_q(np.linalg.norm(b.jacobian(t, X), axis=(1, 2)), ball, q)
    return T.sup_norm() * lp_norm(K, p, ball, t) * bq


def double_commutator_bound(xi, K, T, p, grid, t=0.0):
    """||T||_inf ||K||_p (||xi||_inf ||D^2 xi||_q + ||D xi||_inf ||D xi||_q) on B_{R+1}."""
    q = conjugate_exponent(p)
    ball = _ball_grid(grid, T.center, T.radius + 1)
    X = ball.nodes
    v = np.linalg.norm(xi(t, X), axis=1)
    d1 = np.linalg.norm(xi.jacobian(t, X), axis=(1, 2))
    d2 = np.sqrt(np.sum(xi.hessian(t, X) ** 2, axis=(1, 2, 3)))
    fac = v.max() * _norm_q(d2, ball, q) + d1.max() * _norm_q(d1, ball, q)
    return T.sup_norm() * lp_norm(K, p, ball, t) * fac


def loglog_slope(x, y):
    """Least-squares slope of log|y| against log x."""
    x = np.log(np.asarray(x, float))
    y = np.log(np.abs(np.asarray(y, float)))
    A = np.vstack([x, np.ones_like(x)]).T
    return float(np.linalg.lstsq(A, y, rcond=None)[0][0])
