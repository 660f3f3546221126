"""Transport of k-forms along flows: push-forward, pull-back, integrals over
k-dimensional charts, weak-form residuals and pathwise identities.

Coordinate formulas (sorted multi-indices, Dpsi[i, j] = d psi^i / d x_j):

    ((phi_t)_* K0)_J(x) = sum_I K0_I(psi_t(x)) det(Dpsi_t(x)[I, J])
    (phi_t^* K)_J(x)    = sum_I K_I(phi_t(x))  det(Dphi_t(x)[I, J])

A *flow context* is any object with ``n`` and two methods
``forward(t, X) -> (phi_t(X), Dphi_t(X))`` and
``inverse(t, X) -> (psi_t(X), Dpsi_t(X))``.
"""

from dataclasses import dataclass, field
import numpy as np

from .fields import KFormField, as_points
from .flow import integrate_flow, inverse_flow
from .forms import FormValue, bundle_norm, compound_matrix, evaluate_on_vectors
from .lie import LieDerivativeField, adjoint_arrays, adjoint_grad_arrays


class TransportError(ValueError):
    pass


# -- flow contexts -------------------------------------------------------------

class ExactFlow:
    """Flow given in closed form."""

    def __init__(self, n, forward, inverse, name="exact"):
        self.n = n
        self._forward = forward
        self._inverse = inverse
        self.name = name

    def forward(self, t, X):
        return self._forward(t, np.atleast_2d(X))

    def inverse(self, t, X):
        return self._inverse(t, np.atleast_2d(X))


def identity_flow(n):
    def both(t, X):
        return X.copy(), np.broadcast_to(np.eye(n), (X.shape[0], n, n)).copy()
    return ExactFlow(n, both, both, name="identity")


def linear_flow(A):
    """Flow of b(x) = A x: phi_t(x) = expm(tA) x."""
    from scipy.linalg import expm
    A = np.asarray(A, float)
    n = A.shape[0]

    def fwd(t, X):
        E = expm(t * A)
        return X @ E.T, np.broadcast_to(E, (X.shape[0], n, n)).copy()

    def inv(t, X):
        E = expm(-t * A)
        return X @ E.T, np.broadcast_to(E, (X.shape[0], n, n)).copy()

    return ExactFlow(n, fwd, inv, name="linear")


class StochasticFlow:
    """Flow context backed by the SDE integrator on one Brownian path.

    Times must be grid times of the path.  The inverse map solves the backward
    equation; Dpsi_t(x) is the inverse of the forward Jacobian at the recovered
    pre-image.
    """

    def __init__(self, b, xis, path, scheme="strat_heun"):
        self.b, self.xis, self.path, self.scheme = b, list(xis), path, scheme
        self.n = b.n

    def _steps(self, t):
        m = t / self.path.dt
        mi = int(round(m))
        if abs(m - mi) > 1e-9 * max(1.0, m) or mi > self.path.M or mi < 0:
            raise TransportError(f"time {t} is not on the path grid")
        return mi

    def forward(self, t, X):
        m = self._steps(t)
        X = np.atleast_2d(np.asarray(X, float))
        if m == 0:
            return X.copy(), np.broadcast_to(np.eye(self.n), X.shape + (self.n,)).copy()
        s = integrate_flow(self.b, self.xis, X, self.path.restrict(m), self.scheme)
        if np.any(s.escaped):
            raise TransportError("flow left the safety box")
        return s.x, s.jac

    def inverse(self, t, X):
        m = self._steps(t)
        X = np.atleast_2d(np.asarray(X, float))
        if m == 0:
            return X.copy(), np.broadcast_to(np.eye(self.n), X.shape + (self.n,)).copy()
        Z = inverse_flow(self.b, self.xis, X, self.path.restrict(m), self.scheme)
        _, J = self.forward(t, Z)
        return Z, np.linalg.inv(J)


# -- push-forward and pull-back -----------------------------------------------

def transform_coeffs(vals, A, k):
    """Coefficients ``vals`` (m, C) contracted with the k-th compound of A."""
    return np.einsum("mI,mIJ->mJ", vals, compound_matrix(A, k))


def pushforward_form(K0, flow, t, X):
    """(phi_t)_* K0 at X; FormValue for a single point, else (m, C)."""
    X, single = as_points(X, K0.n)
    Z, Dpsi = flow.inverse(t, X)
    out = transform_coeffs(K0(0.0, Z), Dpsi, K0.k)
    return FormValue(K0.n, K0.k, out[0]) if single else out


def pullback_form(K, flow, t, X):
    """phi_t^* K(t, .) at X."""
    X, single = as_points(X, K.n)
    Y, Dphi = flow.forward(t, X)
    out = transform_coeffs(K(t, Y), Dphi, K.k)
    return FormValue(K.n, K.k, out[0]) if single else out


class PushforwardField(KFormField):
    """K_t = (phi_t)_* K0 as a k-form field (time argument selects t)."""

    def __init__(self, K0, flow, name=None):
        self.K0, self.flow = K0, flow
        super().__init__(K0.n, K0.k, self._eval, name=name or f"push({K0.name})")

    def _eval(self, t, X):
        t = float(np.atleast_1d(t)[0]) if np.ndim(t) else float(t)
        return pushforward_form(self.K0, self.flow, t, X)


# -- charts ----------------------------------------------------------------------

class SubmanifoldChart:
    """Parameterisation sigma: [0,1]^k -> R^n with midpoint quadrature nodes."""

    def __init__(self, n, k, sigma, tangents=None, nodes=64, fd_step=1e-6, name="chart"):
        if k > n:
            raise TransportError("chart dimension exceeds ambient dimension")
        self.n, self.k = n, k
        self.sigma = sigma
        self._tangents = tangents
        self.nodes = tuple(int(v) for v in np.broadcast_to(nodes, (k,)))
        self.fd_step = fd_step
        self.name = name
        axes = [(np.arange(m) + 0.5) / m for m in self.nodes]
        mesh = np.meshgrid(*axes, indexing="ij")
        self.U = np.stack([g.ravel() for g in mesh], axis=1) if k else np.zeros((1, 0))
        self.weight = 1.0 / float(np.prod(self.nodes)) if k else 1.0

    def points(self):
        return np.asarray(self.sigma(self.U), float).reshape(-1, self.n)

    def tangents(self):
        """(m, n, k): column a is d sigma / d u_a."""
        if self._tangents is not None:
            return np.asarray(self._tangents(self.U), float).reshape(-1, self.n, self.k)
        cols = []
        for a in range(self.k):
            e = np.zeros(self.k)
            e[a] = self.fd_step
            cols.append((self.sigma(self.U + e) - self.sigma(self.U - e)) / (2 * self.fd_step))
        return np.stack(cols, axis=2)

    def check(self):
        V = self.tangents()
        if self.k and np.min(np.linalg.svd(V, compute_uv=False)[:, -1]) < 1e-12:
            raise TransportError("degenerate chart tangents")


def circle_chart(radius=1.0, center=(0.0, 0.0), nodes=256):
    c = np.asarray(center, float)

    def sigma(U):
        a = 2 * np.pi * U[:, 0]
        return c + radius * np.stack([np.cos(a), np.sin(a)], axis=1)

    def tangents(U):
        a = 2 * np.pi * U[:, 0]
        return (2 * np.pi * radius * np.stack([-np.sin(a), np.cos(a)], axis=1))[:, :, None]

    return SubmanifoldChart(2, 1, sigma, tangents, nodes, name="circle")


def disk_chart(radius=1.0, center=(0.0, 0.0), nodes=(64, 128)):
    """(s, a) -> center + s R (cos 2 pi a, sin 2 pi a), positively oriented."""
    c = np.asarray(center, float)

    def sigma(U):
        s, a = radius * U[:, 0], 2 * np.pi * U[:, 1]
        return c + s[:, None] * np.stack([np.cos(a), np.sin(a)], axis=1)

    def tangents(U):
        s, a = radius * U[:, 0], 2 * np.pi * U[:, 1]
        d0 = radius * np.stack([np.cos(a), np.sin(a)], axis=1)
        d1 = 2 * np.pi * s[:, None] * np.stack([-np.sin(a), np.cos(a)], axis=1)
        return np.stack([d0, d1], axis=2)

    return SubmanifoldChart(2, 2, sigma, tangents, nodes, name="disk")


def square_chart(n=2, axes=(0, 1), nodes=16):
    """Unit square in the plane spanned by two coordinate axes."""
    def sigma(U):
        X = np.zeros((U.shape[0], n))
        X[:, axes[0]] = U[:, 0]
        X[:, axes[1]] = U[:, 1]
        return X

    def tangents(U):
        V = np.zeros((U.shape[0], n, 2))
        V[:, axes[0], 0] = 1.0
        V[:, axes[1], 1] = 1.0
        return V

    return SubmanifoldChart(n, 2, sigma, tangents, nodes, name="square")


def integrate_over_chart(K, chart, t=0.0):
    """int_{[0,1]^k} < K(sigma(u)), d_1 sigma ^ ... ^ d_k sigma > du."""
    if (K.n, K.k) != (chart.n, chart.k):
        raise TransportError("form degree does not match chart dimension")
    chart.check()
    X, V = chart.points(), chart.tangents()
    return float(np.sum(evaluate_on_vectors(K(t, X), V, chart.k)) * chart.weight)


def conservation_check(K0, flow, chart, times):
    """Integrals of K_t = (phi_t)_* K0 over phi_t(Omega_0).

    Nodes and tangents are transported by the flow; K_t is evaluated at the
    transported nodes through the (numerical) inverse map.  Returns
    (I_0, array of I_t, array of relative drifts).
    """
    chart.check()
    X, V = chart.points(), chart.tangents()
    I0 = float(np.sum(evaluate_on_vectors(K0(0.0, X), V, chart.k)) * chart.weight)
    It = []
    for t in np.atleast_1d(times):
        Y, Dphi = flow.forward(t, X)
        W = Dphi @ V
        Kt = pushforward_form(K0, flow, t, Y)
        It.append(float(np.sum(evaluate_on_vectors(Kt, W, chart.k)) * chart.weight))
    It = np.asarray(It)
    return I0, It, np.abs(It - I0) / max(abs(I0), 1e-300)


# -- weak residual ----------------------------------------------------------------

@dataclass
class SolutionSeries:
    """Candidate solution K_t sampled at the nodes of a time grid.

    ``field(t, X)`` evaluates K_t; ``times`` must match the Brownian grid when
    noise is present.
    """

    times: np.ndarray
    field: KFormField
    provenance: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.field.n

    @property
    def k(self):
        return self.field.k


def _test_data(T, b, xis, X, t):
    """Pointwise L*_b T, L*_xi T and L*_xi L*_xi T at X."""
    Tv, dT, d2T = T(t, X), T.gradient(t, X), T.hessian(t, X)
    Ab = adjoint_arrays(b(t, X), b.jacobian(t, X), Tv, dT, T.k)
    Ax, Axx = [], []
    for xi in xis:
        v, Dv, D2v = xi(t, X), xi.jacobian(t, X), xi.hessian(t, X)
        F, dF = adjoint_grad_arrays(v, Dv, D2v, Tv, dT, d2T, T.k)
        Ax.append(F)
        Axx.append(adjoint_arrays(v, Dv, F, dF, T.k))
    return Tv, Ab, Ax, Axx


def weak_residual(series, b, xis, tests, grid, dW=None, autonomous=True):
    """Residual of the weak formulation at every time node.

    R(t_m) = <<K_m, T>> - <<K_0, T>> + int <<K_s, L*_b T>> ds
             + sum_i int <<K_s, L*_xi_i T>> dW^i - 1/2 sum_i int <<K_s, L*_xi_i L*_xi_i T>> ds

    ds-integrals use the trapezoidal rule, dW-integrals left-endpoint sums.
    ``tests`` is a TestForm or a list of them; returns (n_tests, n_times).
    """
    single = not isinstance(tests, (list, tuple))
    tests = [tests] if single else list(tests)
    times = np.asarray(series.times, float)
    nt = times.size
    xis = list(xis)
    if xis:
        if dW is None:
            raise TransportError("noise fields given without Brownian increments")
        dW = np.asarray(dW, float).reshape(nt - 1, len(xis))
    for T in tests:
        if (T.n, T.k) != (series.n, series.k):
            raise TransportError("test form degree mismatch")
        c, R = getattr(T, "center", None), getattr(T, "radius", None)
        if c is not None and (np.any(c - R < grid.lo) or np.any(c + R > grid.hi)):
            raise TransportError("test form support escapes the grid")
    X = grid.nodes
    w = grid.weights
    data = [_test_data(T, b, xis, X, times[0]) for T in tests] if autonomous else None
    nT = len(tests)
    pT = np.zeros((nT, nt))
    pb = np.zeros((nT, nt))
    px = np.zeros((nT, len(xis), nt))
    pxx = np.zeros((nT, len(xis), nt))
    for j, t in enumerate(times):
        Kv = series.field(t, X) * w[:, None]
        for a, T in enumerate(tests):
            Tv, Ab, Ax, Axx = data[a] if autonomous else _test_data(T, b, xis, X, t)
            pT[a, j] = np.sum(Kv * Tv)
            pb[a, j] = np.sum(Kv * Ab)
            for i in range(len(xis)):
                px[a, i, j] = np.sum(Kv * Ax[i])
                pxx[a, i, j] = np.sum(Kv * Axx[i])
    dt = np.diff(times)
    R = np.zeros((nT, nt))
    for a in range(nT):
        drift = np.concatenate([[0.0], np.cumsum(0.5 * (pb[a, 1:] + pb[a, :-1]) * dt)])
        corr = np.zeros(nt)
        noise = np.zeros(nt)
        for i in range(len(xis)):
            corr += np.concatenate([[0.0], np.cumsum(0.5 * (pxx[a, i, 1:] + pxx[a, i, :-1]) * dt)])
            noise += np.concatenate([[0.0], np.cumsum(px[a, i, :-1] * dW[:, i])])
        R[a] = pT[a] - pT[a, 0] + drift + noise - 0.5 * corr
    return R[0] if single else R


# -- expectations ---------------------------------------------------------------------

def ensemble_mean(values):
    """Mean and standard error over the leading (path) axis."""
    v = np.asarray(values, float)
    P = v.shape[0]
    return v.mean(axis=0), v.std(axis=0, ddof=1) / np.sqrt(P)


def expectation_check(values, reference, dt, ref_stderr=None, n_std=3.0, allowance=5.0):
    """Compare a Monte Carlo mean against a reference at probe points.

    Passes pointwise when |mean - ref| <= n_std * stderr + allowance * dt,
    with stderr combining both estimates when the reference is itself Monte
    Carlo.  Returns a dict with the per-point data.
    """
    values = np.asarray(values, float)
    if values.shape[0] < 100:
        raise TransportError("expectation check needs at least 100 paths")
    mean, se = ensemble_mean(values)
    if ref_stderr is not None:
        se = np.sqrt(se ** 2 + np.asarray(ref_stderr) ** 2)
    err = np.abs(mean - reference)
    tol = n_std * se + allowance * dt
    return {"mean": mean, "stderr": se, "error": err, "tolerance": tol, "ok": err <= tol}


def heat_reference(u0, x, t, n_quad=201):
    """E[u0(x + W_t)] for a scalar u0 on R (Gauss-Hermite quadrature)."""
    z, w = np.polynomial.hermite_e.hermegauss(n_quad)
    w = w / w.sum()
    x = np.atleast_1d(np.asarray(x, float))
    return (u0(x[:, None] + np.sqrt(t) * z[None, :]) * w).sum(axis=1)


# -- pathwise Ito-Wentzell-Kunita identity ----------------------------------------------

class SemimartingaleForm(KFormField):
    """K(t, x) = K0(x) + t G(x) + W_t H(x) for time-independent G, H, with W
    read from a Brownian path (component 0)."""

    def __init__(self, K0, G, H, path):
        self.K0, self.G, self.H, self.path = K0, G, H, path
        super().__init__(K0.n, K0.k, self._eval, deriv=self._grad, hess=self._hess2, name="K")

    def _coef(self, t, m):
        t = np.broadcast_to(np.asarray(t, float), (m,))
        return t, self.path.value_at(t)[:, 0]

    def _eval(self, t, X):
        tt, W = self._coef(t, X.shape[0])
        return self.K0(0.0, X) + tt[:, None] * self.G(0.0, X) + W[:, None] * self.H(0.0, X)

    def _grad(self, t, X):
        tt, W = self._coef(t, X.shape[0])
        return (self.K0.gradient(0.0, X) + tt[:, None, None] * self.G.gradient(0.0, X)
                + W[:, None, None] * self.H.gradient(0.0, X))

    def _hess2(self, t, X):
        tt, W = self._coef(t, X.shape[0])
        return (self.K0.hessian(0.0, X) + tt[:, None, None, None] * self.G.hessian(0.0, X)
                + W[:, None, None, None] * self.H.hessian(0.0, X))


def kiw_check(K0, G, H, b, xi, path, points, scheme="strat_heun", quadrature="milstein"):
    """Residual of the pathwise identity

      phi_t^* K(t) = K(0) + int phi^* G ds + int phi^* H dW + int phi^* L_b K ds
                     + int phi^* L_xi K dW + int phi^* L_xi H ds + 1/2 int phi^* L_xi L_xi K ds

    for K = K0 + int G ds + int H dW, with a single noise field and B = W.

    ``quadrature="left"`` uses plain left-endpoint sums for the dW integral
    (strong order 1/2).  ``"milstein"`` adds the adapted second-order term
    f'_j (dW_j^2 - dt) / 2, where f' = phi^*(2 L_xi H + L_xi L_xi K) is the dW
    coefficient of the integrand, which makes the quadrature strong order 1.
    Returns the maximum bundle norm of the residual over points and time
    nodes, and the residual array.
    """
    if quadrature not in ("left", "milstein"):
        raise TransportError(f"unknown quadrature {quadrature!r}")
    if path.N != 1:
        raise TransportError("kiw_check uses one Brownian motion")
    K = SemimartingaleForm(K0, G, H, path)
    X0 = np.atleast_2d(np.asarray(points, float))
    m, n = X0.shape
    k = K0.k
    s = integrate_flow(b, [xi], X0, path, scheme, store=True)
    if np.any(s.escaped):
        raise TransportError("flow left the safety box")
    M = path.M
    times = s.times
    Y = s.traj.reshape(-1, n)
    J = s.jac_traj.reshape(-1, n, n)
    tt = np.repeat(times, m)
    comp = compound_matrix(J, k)

    def pull(vals):
        return np.einsum("qI,qIJ->qJ", vals, comp).reshape(M + 1, m, -1)

    LxiK = LieDerivativeField(xi, K)
    LxiH = LieDerivativeField(xi, H)(tt, Y)
    LxixiK = LieDerivativeField(xi, LxiK)(tt, Y)
    ds_term = G(tt, Y) + LieDerivativeField(b, K)(tt, Y) + LxiH + 0.5 * LxixiK
    dw_term = H(tt, Y) + LxiK(tt, Y)
    ds_p, dw_p = pull(ds_term), pull(dw_term)
    lhs = pull(K(tt, Y))
    dt = path.dt
    dW = path.dW[:, 0]
    incr = ds_p[:-1] * dt + dw_p[:-1] * dW[:, None, None]
    if quadrature == "milstein":
        sig = pull(2 * LxiH + LxixiK)
        incr += sig[:-1] * (0.5 * (dW ** 2 - dt))[:, None, None]
    rhs = np.concatenate([K0(0.0, X0)[None], K0(0.0, X0)[None] + np.cumsum(incr, axis=0)])
    res = bundle_norm(lhs - rhs)          # (M+1, m)
    return float(res.max()), res
