"""Vector fields and k-form fields, derivatives, grids and quadrature.

Fields are evaluated on batches of points: ``X`` has shape ``(m, n)`` (a
single point of shape ``(n,)`` is accepted and the leading axis is dropped in
the result).  Time ``t`` is a scalar or an array broadcastable to ``(m,)``.

Shapes returned:

* ``VectorField(t, X)``            -> (m, n)
* ``VectorField.jacobian(t, X)``   -> (m, n, n), entry [i, j] = d b^i / d x_j
* ``VectorField.hessian(t, X)``    -> (m, n, n, n), entry [i, j, l] = d_l d_j b^i
* ``KFormField(t, X)``             -> (m, C)
* ``KFormField.gradient(t, X)``    -> (m, n, C), entry [l, J] = d_l K_J
* ``KFormField.hessian(t, X)``     -> (m, n, n, C)
"""

import json
import struct
from math import comb

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .forms import FormValue, bundle_norm, multi_indices, label

ANALYTIC_FD_STEP = 1e-4


class FieldError(ValueError):
    pass


def as_points(X, n):
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[-1] != n:
        raise FieldError(f"points have dimension {X.shape[-1]}, field has n={n}")
    return X, single


def _fd_steps(X, h, relative):
    if relative:
        return h * (1.0 + np.linalg.norm(X, axis=-1))
    return np.full(X.shape[0], float(h))


def central_gradient(f, t, X, h=ANALYTIC_FD_STEP, relative=True, kink_radius=None):
    """Central differences of ``f(t, X) -> (m, ...)``; result (m, n, ...).

    With ``kink_radius`` set, points whose stencil straddles the sphere
    ``|x| = kink_radius`` use a second-order one-sided stencil on their own side
    (points exactly on the sphere count as inside).
    """
    X = np.asarray(X, float)
    m, n = X.shape
    hs = _fd_steps(X, h, relative)
    cols = []
    r = np.linalg.norm(X, axis=1)
    for l in range(n):
        e = np.zeros(n)
        e[l] = 1.0
        step = hs[:, None] * e
        fp = np.asarray(f(t, X + step))
        fm = np.asarray(f(t, X - step))
        hb = hs.reshape((m,) + (1,) * (fp.ndim - 1))
        d = (fp - fm) / (2 * hb)
        if kink_radius is not None:
            straddle = np.abs(r - kink_radius) < hs * 1.0001
            if np.any(straddle):
                Xs = X[straddle]
                inside = np.linalg.norm(Xs, axis=1) <= kink_radius
                # move towards the origin when inside, away from it outside
                toward = -np.sign(Xs[:, l])
                toward[toward == 0] = -1.0
                direction = np.where(inside, toward, -toward)
                ts = t if np.ndim(t) == 0 else np.asarray(t)[straddle]
                hh = hs[straddle]
                s = (hh * direction)[:, None] * e
                f0 = np.asarray(f(ts, Xs))
                f1 = np.asarray(f(ts, Xs + s))
                f2 = np.asarray(f(ts, Xs + 2 * s))
                sh = (hh * direction).reshape((-1,) + (1,) * (f0.ndim - 1))
                d[straddle] = (-3 * f0 + 4 * f1 - f2) / (2 * sh)
        cols.append(d)
    return np.stack(cols, axis=1)


class VectorField:
    """Time-dependent vector field on R^n.

    ``func(t, X)`` returns an (m, n) array.  ``jac`` (optional) returns the
    (m, n, n) Jacobian; without it central differences with step
    ``fd_step * (1 + |x|)`` are used.
    """

    def __init__(self, n, func, jac=None, hess=None, fd_step=ANALYTIC_FD_STEP,
                 divergence_free=False, kink_radius=None, name="b"):
        self.n = int(n)
        self._func = func
        self._jac = jac
        self._hess = hess
        self.fd_step = fd_step
        self.divergence_free = divergence_free
        self.kink_radius = kink_radius
        self.name = name

    def __call__(self, t, X):
        X, single = as_points(X, self.n)
        out = np.asarray(self._func(t, X), dtype=float).reshape(X.shape[0], self.n)
        return out[0] if single else out

    def jacobian(self, t, X):
        X, single = as_points(X, self.n)
        if self._jac is not None:
            J = np.asarray(self._jac(t, X), dtype=float).reshape(-1, self.n, self.n)
        else:
            G = central_gradient(self.__call__, t, X, self.fd_step, True, self.kink_radius)
            J = np.swapaxes(G, 1, 2)
        return J[0] if single else J

    def hessian(self, t, X):
        X, single = as_points(X, self.n)
        if self._hess is not None:
            H = np.asarray(self._hess(t, X), dtype=float)
        else:
            G = central_gradient(self.jacobian, t, X, self.fd_step, True, self.kink_radius)
            H = np.moveaxis(G, 1, 3)   # (m, i, j, l)
        return H[0] if single else H

    def divergence(self, t, X):
        return np.trace(self.jacobian(t, X), axis1=-2, axis2=-1)

    def check_divergence_free(self, t, X, tol=1e-8):
        return bool(np.max(np.abs(self.divergence(t, X))) <= tol)

    # -- common constructors
    @classmethod
    def constant(cls, vec, name="const"):
        vec = np.asarray(vec, float)
        n = vec.size
        return cls(n, lambda t, X: np.broadcast_to(vec, X.shape).copy(),
                   jac=lambda t, X: np.zeros((X.shape[0], n, n)),
                   hess=lambda t, X: np.zeros((X.shape[0], n, n, n)),
                   divergence_free=True, name=name)

    @classmethod
    def linear(cls, A, c=None, name="linear"):
        """b(x) = A x + c."""
        A = np.asarray(A, float)
        n = A.shape[0]
        c = np.zeros(n) if c is None else np.asarray(c, float)
        return cls(n, lambda t, X: X @ A.T + c,
                   jac=lambda t, X: np.broadcast_to(A, (X.shape[0], n, n)).copy(),
                   hess=lambda t, X: np.zeros((X.shape[0], n, n, n)),
                   divergence_free=abs(np.trace(A)) < 1e-14, name=name)

    @classmethod
    def zero(cls, n):
        return cls.constant(np.zeros(n), name="zero")


class KFormField:
    """k-form field given by a closure ``func(t, X) -> (m, C(n, k))``.

    ``deriv(t, X) -> (m, n, C)`` is optional; central differences are used
    otherwise.  ``hess`` likewise.
    """

    def __init__(self, n, k, func, deriv=None, hess=None, fd_step=ANALYTIC_FD_STEP,
                 relative_step=True, name="K"):
        self.n, self.k = int(n), int(k)
        self.ncomp = comb(self.n, self.k)
        self._func = func
        self._deriv = deriv
        self._hess = hess
        self.fd_step = fd_step
        self.relative_step = relative_step
        self.name = name

    def __call__(self, t, X):
        X, single = as_points(X, self.n)
        out = np.asarray(self._func(t, X), dtype=float).reshape(X.shape[0], self.ncomp)
        return out[0] if single else out

    def value(self, t, x):
        return FormValue(self.n, self.k, self(t, np.asarray(x, float).reshape(self.n)))

    def gradient(self, t, X):
        X, single = as_points(X, self.n)
        if self._deriv is not None:
            G = np.asarray(self._deriv(t, X), dtype=float).reshape(-1, self.n, self.ncomp)
        else:
            G = central_gradient(self.__call__, t, X, self.fd_step, self.relative_step)
        return G[0] if single else G

    def hessian(self, t, X):
        X, single = as_points(X, self.n)
        if self._hess is not None:
            H = np.asarray(self._hess(t, X), dtype=float)
        else:
            H = central_gradient(self.gradient, t, X, self.fd_step, self.relative_step)
        return H[0] if single else H

    # arithmetic used to build composite fixtures
    def __add__(self, other):
        _same_degree(self, other)
        return KFormField(self.n, self.k, lambda t, X: self(t, X) + other(t, X),
                          deriv=lambda t, X: self.gradient(t, X) + other.gradient(t, X),
                          name=f"{self.name}+{other.name}")

    def scaled(self, c):
        return KFormField(self.n, self.k, lambda t, X: c * self(t, X),
                          deriv=lambda t, X: c * self.gradient(t, X), name=f"{c}*{self.name}")

    @classmethod
    def zero(cls, n, k):
        C = comb(n, k)
        return cls(n, k, lambda t, X: np.zeros((X.shape[0], C)),
                   deriv=lambda t, X: np.zeros((X.shape[0], n, C)),
                   hess=lambda t, X: np.zeros((X.shape[0], n, n, C)), name="0")

    @classmethod
    def constant(cls, n, k, coeffs):
        coeffs = np.asarray(coeffs, float)
        C = comb(n, k)
        return cls(n, k, lambda t, X: np.broadcast_to(coeffs, (X.shape[0], C)).copy(),
                   deriv=lambda t, X: np.zeros((X.shape[0], n, C)),
                   hess=lambda t, X: np.zeros((X.shape[0], n, n, C)), name="const")


def _same_degree(A, B):
    if (A.n, A.k) != (B.n, B.k):
        raise FieldError(f"degree mismatch: ({A.n},{A.k}) vs ({B.n},{B.k})")


class PolynomialForm(KFormField):
    """k-form whose coefficients are polynomials, given as a list of terms.

    ``terms[J]`` is a list of (coefficient, exponent tuple) pairs for channel J.
    Derivatives are exact.
    """

    def __init__(self, n, k, terms, name="poly"):
        C = comb(n, k)
        if len(terms) != C:
            raise FieldError(f"need {C} channels of terms")
        self.terms = [[(float(c), tuple(int(e) for e in ex)) for c, ex in ch] for ch in terms]
        super().__init__(n, k, self._eval, deriv=self._grad, hess=self._hess2, name=name)

    @staticmethod
    def _mono(X, ex, d=()):
        c = 1.0
        ex = list(ex)
        for l in d:
            c = c * ex[l]
            ex[l] -= 1
        if c == 0 or min(ex) < 0:
            return np.zeros(X.shape[0])
        return c * np.prod(X ** np.asarray(ex, float), axis=1)

    def _eval(self, t, X):
        return np.stack([sum((c * self._mono(X, ex) for c, ex in ch), np.zeros(X.shape[0]))
                         for ch in self.terms], axis=1)

    def _grad(self, t, X):
        return np.stack([np.stack([sum((c * self._mono(X, ex, (l,)) for c, ex in ch),
                                       np.zeros(X.shape[0])) for ch in self.terms], axis=1)
                         for l in range(self.n)], axis=1)

    def _hess2(self, t, X):
        out = np.zeros((X.shape[0], self.n, self.n, self.ncomp))
        for l in range(self.n):
            for q in range(self.n):
                for J, ch in enumerate(self.terms):
                    for c, ex in ch:
                        out[:, l, q, J] += c * self._mono(X, ex, (l, q))
        return out


def bump(X, center, R):
    """exp(1 - 1/(1 - |x - c|^2 / R^2)) on the open ball, 0 outside; value 1 at c."""
    Y = np.asarray(X, float) - center
    s = np.sum(Y * Y, axis=-1) / R**2
    out = np.zeros_like(s)
    inside = s < 1
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside]))
    return out


class TestForm(KFormField):
    """Smooth compactly supported k-form: bump(x) * (a + g . (x - c)).

    ``a`` has shape (C,), ``g`` shape (C, n).  First and second derivatives are
    analytic, so adjoint operators of every order are available without
    nested finite differences.
    """

    __test__ = False   # not a pytest class

    def __init__(self, n, k, center, radius, a, g=None, name="Theta"):
        C = comb(n, k)
        self.center = np.asarray(center, float).reshape(n)
        self.radius = float(radius)
        self.a = np.asarray(a, float).reshape(C)
        self.g = np.zeros((C, n)) if g is None else np.asarray(g, float).reshape(C, n)
        super().__init__(n, k, self._eval, deriv=self._grad, hess=self._hess2, name=name)

    def _parts(self, X):
        Y = X - self.center
        R2 = self.radius ** 2
        s = np.sum(Y * Y, axis=1) / R2
        inside = s < 1
        beta = np.zeros_like(s)
        u = np.zeros_like(s)
        du = np.zeros_like(s)
        si = s[inside]
        beta[inside] = np.exp(1.0 - 1.0 / (1.0 - si))
        u[inside] = -1.0 / (1.0 - si) ** 2
        du[inside] = -2.0 / (1.0 - si) ** 3
        ds = 2.0 * Y / R2                     # (m, n)
        p = self.a + Y @ self.g.T             # (m, C)
        return Y, beta, u, du, ds, p, R2

    def _eval(self, t, X):
        _, beta, _, _, _, p, _ = self._parts(X)
        return beta[:, None] * p

    def _grad(self, t, X):
        _, beta, u, _, ds, p, _ = self._parts(X)
        dbeta = (beta * u)[:, None] * ds      # (m, n)
        return dbeta[:, :, None] * p[:, None, :] + beta[:, None, None] * self.g.T[None]

    def _hess2(self, t, X):
        _, beta, u, du, ds, p, R2 = self._parts(X)
        n = self.n
        dbeta = (beta * u)[:, None] * ds
        ddbeta = (beta * (du + u * u))[:, None, None] * ds[:, :, None] * ds[:, None, :] \
            + (beta * u * 2.0 / R2)[:, None, None] * np.eye(n)[None]
        gT = self.g.T                          # (n, C)
        return (ddbeta[..., None] * p[:, None, None, :]
                + dbeta[:, :, None, None] * gT[None, None, :, :]
                + dbeta[:, None, :, None] * gT[None, :, None, :])

    def sup_norm(self, samples=20000, seed=0):
        """Sampled estimate of sup |Theta| (bundle norm)."""
        rng = np.random.default_rng(seed)
        d = rng.normal(size=(samples, self.n))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        r = self.radius * rng.random(samples) ** (1.0 / self.n)
        pts = np.vstack([self.center[None], self.center + d * r[:, None]])
        return float(np.max(bundle_norm(self(0.0, pts))))

    @classmethod
    def random(cls, n, k, rng, center_scale=0.2, radius=(0.4, 0.6), name="Theta"):
        C = comb(n, k)
        center = rng.uniform(-center_scale, center_scale, size=n)
        R = rng.uniform(*radius)
        a = rng.normal(size=C)
        g = rng.normal(size=(C, n))
        return cls(n, k, center, R, a, g, name=name)


class Grid:
    """Cell-centred tensor grid on an axis-aligned box."""

    def __init__(self, lo, hi, shape):
        self.lo = np.atleast_1d(np.asarray(lo, float))
        self.hi = np.atleast_1d(np.asarray(hi, float))
        n = self.lo.size
        shape = tuple(int(s) for s in np.broadcast_to(np.asarray(shape), (n,)))
        if self.hi.size != n or np.any(self.hi <= self.lo):
            raise FieldError("invalid box")
        if min(shape) < 1:
            raise FieldError("grid needs at least one node per axis")
        self.n = n
        self.shape = shape
        self.h = (self.hi - self.lo) / np.asarray(shape)
        self.cell_volume = float(np.prod(self.h))
        self.axes = [self.lo[i] + (np.arange(shape[i]) + 0.5) * self.h[i] for i in range(n)]

    @property
    def size(self):
        return int(np.prod(self.shape))

    def points(self):
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def contains(self, X, margin=0.0):
        X = np.atleast_2d(X)
        return np.all((X >= self.lo + margin) & (X <= self.hi - margin), axis=1)


class QuadratureGrid(Grid):
    """Midpoint rule on a box, optionally restricted to a ball, with an
    excluded ball (for integrable point singularities) and optional local
    sub-sampling: cells whose centre lies within ``refine_radius`` of
    ``refine_center`` are split into ``refine_factor**n`` sub-cells.

    ``mask`` always refers to the base tensor grid; ``nodes``/``weights``
    include the sub-sampled cells.
    """

    def __init__(self, lo, hi, shape, ball_radius=None, ball_center=None,
                 exclude_radius=None, exclude_center=None,
                 refine_radius=None, refine_center=None, refine_factor=8):
        super().__init__(lo, hi, shape)
        self.refine_radius = refine_radius
        self.refine_center = np.zeros(self.n) if refine_center is None else np.asarray(refine_center, float)
        self.refine_factor = int(refine_factor)
        self.ball_radius = ball_radius
        self.ball_center = np.zeros(self.n) if ball_center is None else np.asarray(ball_center, float)
        self.exclude_radius = exclude_radius
        self.exclude_center = np.zeros(self.n) if exclude_center is None else np.asarray(exclude_center, float)
        if exclude_radius is not None:
            c, r = self.exclude_center, exclude_radius
            if r <= 0 or np.any(c - r <= self.lo) or np.any(c + r >= self.hi):
                raise FieldError("excluded ball must lie strictly inside the box")
        P = self.points()
        keep = np.ones(P.shape[0], bool)
        if ball_radius is not None:
            keep &= np.linalg.norm(P - self.ball_center, axis=1) < ball_radius
        if exclude_radius is not None:
            keep &= np.linalg.norm(P - self.exclude_center, axis=1) >= exclude_radius
        self.mask = keep
        self.nodes = P[keep]
        if self.nodes.shape[0] == 0:
            raise FieldError("quadrature grid has no nodes")
        self.weights = np.full(self.nodes.shape[0], self.cell_volume)
        if refine_radius is not None:
            self._subsample(keep)

    def _subsample(self, keep):
        f = self.refine_factor
        if f < 1:
            raise FieldError("refine_factor must be >= 1")
        P = self.nodes
        near = np.linalg.norm(P - self.refine_center, axis=1) < self.refine_radius
        offs = (np.arange(f) + 0.5) / f - 0.5
        mesh = np.meshgrid(*([offs] * self.n), indexing="ij")
        sub = np.stack([m.ravel() for m in mesh], axis=1) * self.h      # (f^n, n)
        S = (P[near][:, None, :] + sub[None]).reshape(-1, self.n)
        # sub-nodes must still satisfy the ball restrictions
        ok = np.ones(S.shape[0], bool)
        if self.ball_radius is not None:
            ok &= np.linalg.norm(S - self.ball_center, axis=1) < self.ball_radius
        if self.exclude_radius is not None:
            ok &= np.linalg.norm(S - self.exclude_center, axis=1) >= self.exclude_radius
        self.nodes = np.vstack([P[~near], S[ok]])
        self.weights = np.concatenate([self.weights[~near],
                                       np.full(int(ok.sum()), self.cell_volume / f ** self.n)])

    @classmethod
    def cube(cls, n, half_width, nodes, **kw):
        return cls(-half_width * np.ones(n), half_width * np.ones(n), nodes, **kw)

    def refined(self, factor=2):
        kw = dict(ball_radius=self.ball_radius, ball_center=self.ball_center)
        if self.exclude_radius is not None:
            kw.update(exclude_radius=self.exclude_radius, exclude_center=self.exclude_center)
        if self.refine_radius is not None:
            kw.update(refine_radius=self.refine_radius, refine_center=self.refine_center,
                      refine_factor=self.refine_factor)
        return QuadratureGrid(self.lo, self.hi, tuple(s * factor for s in self.shape), **kw)

    def integrate(self, values):
        return float(np.sum(np.asarray(values) * self.weights))


def _values_on(A, grid, t):
    if isinstance(A, np.ndarray):
        return A
    return A(t, grid.nodes)


def l2_inner(A, B, grid, t=0.0):
    """Midpoint rule for the integral of the pointwise inner product (A, B)_x."""
    if isinstance(A, KFormField) and isinstance(B, KFormField):
        _same_degree(A, B)
    a = _values_on(A, grid, t)
    b = _values_on(B, grid, t)
    if a.shape != b.shape:
        raise FieldError(f"degree mismatch: shapes {a.shape} vs {b.shape}")
    return grid.integrate(np.sum(a * b, axis=-1))


def lp_norm(A, p, grid, t=0.0):
    if p < 1:
        raise FieldError(f"p={p} < 1")
    v = bundle_norm(_values_on(A, grid, t))
    if np.isinf(p):
        return float(np.max(v))
    return grid.integrate(v ** p) ** (1.0 / p)


def sobolev_norm(b, q, grid, t=0.0):
    """||b||_{L^q} + ||Db||_{L^q} on the quadrature grid (Frobenius norm of Db)."""
    X = grid.nodes
    v = np.linalg.norm(b(t, X), axis=1)
    d = np.linalg.norm(b.jacobian(t, X), axis=(1, 2))
    if np.isinf(q):
        return float(v.max() + d.max())
    return grid.integrate(v ** q) ** (1 / q) + grid.integrate(d ** q) ** (1 / q)


def fd_derivative(F, t, x, axis, h=None):
    """Central difference of a k-form field along one coordinate axis."""
    x = np.asarray(x, float).reshape(F.n)
    if isinstance(F, GridKForm):
        h = float(F.grid.h[axis]) if h is None else h
        if not F.grid.contains(x, margin=h + F.grid.h.max() / 2):
            raise FieldError("point closer than h to the grid boundary")
    elif h is None:
        h = ANALYTIC_FD_STEP * (1 + np.linalg.norm(x))
    e = np.zeros(F.n)
    e[axis] = h
    c = (F(t, x + e) - F(t, x - e)) / (2 * h)
    return FormValue(F.n, F.k, c)


def check_parabolicity(xis, points, times=(0.0,), n_dirs=64, seed=0):
    """Estimate (c_hat, C_hat), the min/max of sum_r (xi_r . v)^2 over unit v.

    The extreme values over v are the extreme eigenvalues of sum_r xi_r xi_r^T,
    so random directions are only used as a cross-check lower/upper bracket.
    """
    if len(xis) == 0:
        raise FieldError("empty noise field list")
    points = np.atleast_2d(np.asarray(points, float))
    lo, hi = np.inf, -np.inf
    for t in np.atleast_1d(times):
        A = sum(np.einsum("mi,mj->mij", xi(t, points), xi(t, points)) for xi in xis)
        ev = np.linalg.eigvalsh(A)
        lo = min(lo, float(ev[:, 0].min()))
        hi = max(hi, float(ev[:, -1].max()))
    return lo, hi


def holder_quotient(b, points, alpha, t=0.0, pairs=2000, seed=0):
    """Largest |b(x)-b(y)| / |x-y|^alpha over random pairs of sample points."""
    points = np.atleast_2d(np.asarray(points, float))
    rng = np.random.default_rng(seed)
    i = rng.integers(0, len(points), pairs)
    j = rng.integers(0, len(points), pairs)
    keep = i != j
    x, y = points[i[keep]], points[j[keep]]
    d = np.linalg.norm(x - y, axis=1)
    ok = d > 0
    num = np.linalg.norm(b(t, x[ok]) - b(t, y[ok]), axis=1)
    return float(np.max(num / d[ok] ** alpha))


class GridKForm(KFormField):
    """k-form sampled on the nodes of a cell-centred grid, optionally at several
    times.  ``data`` has shape (nt, *grid.shape, C); interpolation is
    multilinear in space and linear in time (constant outside the time range).
    """

    def __init__(self, grid, k, data, times=None, name="grid"):
        n = grid.n
        C = comb(n, k)
        data = np.asarray(data, float)
        if data.shape == tuple(grid.shape) + (C,):
            data = data[None]
        if data.shape[1:] != tuple(grid.shape) + (C,):
            raise FieldError(f"data shape {data.shape} does not match grid {grid.shape} with {C} channels")
        self.grid = grid
        self.data = data
        self.times = np.zeros(1) if times is None else np.asarray(times, float).reshape(-1)
        if self.times.size != data.shape[0]:
            raise FieldError("one time per data slice required")
        self._interp = [RegularGridInterpolator(grid.axes, d, method="linear",
                                                bounds_error=False, fill_value=None)
                        for d in data]
        super().__init__(n, k, self._eval, fd_step=float(grid.h.min()),
                         relative_step=False, name=name)

    @classmethod
    def sample(cls, field, grid, times=(0.0,), name=None):
        P = grid.points()
        data = np.stack([field(t, P).reshape(tuple(grid.shape) + (field.ncomp,)) for t in times])
        return cls(grid, field.k, data, times, name=name or field.name)

    def _slice(self, i, X):
        return self._interp[i](X)

    def _eval(self, t, X):
        if not np.all(self.grid.contains(X)):
            raise FieldError("evaluation point outside the grid box")
        tt = np.broadcast_to(np.asarray(t, float), (X.shape[0],))
        if self.times.size == 1:
            return self._slice(0, X)
        out = np.empty((X.shape[0], self.ncomp))
        pos = np.clip(np.searchsorted(self.times, tt, side="right") - 1, 0, self.times.size - 2)
        for i in np.unique(pos):
            sel = pos == i
            t0, t1 = self.times[i], self.times[i + 1]
            w = np.clip((tt[sel] - t0) / (t1 - t0), 0.0, 1.0)[:, None]
            out[sel] = (1 - w) * self._slice(i, X[sel]) + w * self._slice(i + 1, X[sel])
        return out

    def node_values(self, i=0):
        """Flattened node values of slice i, shape (grid.size, C)."""
        return self.data[i].reshape(-1, self.ncomp)


def save_grid_form(path, field, slice_index=0):
    """Write one time slice: binary header + channel arrays, and a JSON sidecar.

    Header: n, k, resolution[n] as int64, box lo[n], hi[n] as float64, all
    little-endian.  Then C(n,k) float64 channel arrays in lexicographic
    multi-index order, each row-major over the axes.
    """
    g = field.grid
    n, k = field.n, field.k
    with open(path, "wb") as f:
        f.write(struct.pack(f"<{2 + n}q", n, k, *g.shape))
        f.write(struct.pack(f"<{2 * n}d", *g.lo, *g.hi))
        for c in range(field.ncomp):
            f.write(np.ascontiguousarray(field.data[slice_index][..., c]).astype("<f8").tobytes())
    meta = {"n": n, "k": k, "resolution": list(g.shape), "box_lo": g.lo.tolist(),
            "box_hi": g.hi.tolist(), "time": float(field.times[slice_index]),
            "channels": [label(I) for I in multi_indices(n, k)], "dtype": "<f8"}
    with open(str(path) + ".json", "w") as f:
        json.dump(meta, f, indent=1)


def load_grid_form(path):
    with open(path, "rb") as f:
        raw = f.read()
    n, k = struct.unpack_from("<2q", raw, 0)
    shape = struct.unpack_from(f"<{n}q", raw, 16)
    off = 16 + 8 * n
    bounds = struct.unpack_from(f"<{2 * n}d", raw, off)
    off += 16 * n
    grid = Grid(bounds[:n], bounds[n:], shape)
    C = comb(n, k)
    arr = np.frombuffer(raw, dtype="<f8", offset=off).reshape((C,) + tuple(shape))
    data = np.moveaxis(arr, 0, -1).copy()
    time = 0.0
    try:
        with open(str(path) + ".json") as f:
            time = json.load(f).get("time", 0.0)
    except FileNotFoundError:
        pass
    return GridKForm(grid, k, data, [time])
