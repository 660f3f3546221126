"""Closed-form fixtures: a Hölder drift with non-unique characteristics and the
transport solutions built from it, and a divergence-free drift whose
solutions lose boundedness instantly.

Radial drift (R = 1):  b_a(x) = x/|x| min(|x|, 1)^a / (1 - a),  b_a(0) = 0.

Its flow leaves the origin at t = 0 only along the trivial branch phi; the
maps Phi/Psi describe the family of trajectories emitted from the origin,
which is what produces the second solution branch K^Gamma.
"""

from dataclasses import dataclass

import numpy as np

from .fields import FieldError, KFormField, VectorField, bump
from .transport import ExactFlow, transform_coeffs


class DomainError(ValueError):
    pass


# -- radial maps ----------------------------------------------------------------

def _radial_map(X, g, dg):
    """Map x -> x/|x| g(|x|) and its Jacobian g/r (I - xx^T) + g' xx^T."""
    r = np.linalg.norm(X, axis=1)
    xh = X / r[:, None]
    Y = xh * g[:, None]
    P = xh[:, :, None] * xh[:, None, :]
    n = X.shape[1]
    D = (g / r)[:, None, None] * (np.eye(n)[None] - P) + dg[:, None, None] * P
    return Y, D


def _dispatch(X, t, branches, what):
    """Evaluate the first matching branch at each point.

    ``branches`` is a list of (name, condition(r), g(r), dg(r)).
    """
    X = np.atleast_2d(np.asarray(X, float))
    r = np.linalg.norm(X, axis=1)
    g = np.full(r.shape, np.nan)
    dg = np.full(r.shape, np.nan)
    label = np.full(r.shape, -1)
    todo = r > 0
    for i, (name, cond, gf, dgf) in enumerate(branches):
        sel = todo & cond(r)
        if np.any(sel):
            g[sel] = gf(r[sel])
            dg[sel] = dgf(r[sel])
            label[sel] = i
            todo &= ~sel
    if np.any(label < 0):
        bad = X[label < 0][0]
        raise DomainError(f"{what}: point {bad} at t={t} outside every branch domain")
    Y, D = _radial_map(X, g, dg)
    return Y, D, label


def _check_alpha(alpha):
    if not 0 < alpha < 1:
        raise ValueError(f"alpha={alpha} must lie in (0, 1)")


def b_alpha(alpha, n):
    """The radial Hölder drift as a VectorField with analytic Jacobian."""
    _check_alpha(alpha)
    c = 1.0 / (1.0 - alpha)

    def g_dg(r):
        inner = r <= 1.0           # the sphere |x| = 1 takes the inner branch
        rs = np.maximum(r, 1e-300)
        g = c * np.where(inner, rs ** alpha, 1.0)
        dg = np.where(inner, c * alpha * rs ** (alpha - 1.0), 0.0)
        return g, dg

    def func(t, X):
        r = np.linalg.norm(X, axis=1)
        out = np.zeros_like(X)
        nz = r > 0
        g, _ = g_dg(r[nz])
        out[nz] = X[nz] / r[nz, None] * g[:, None]
        return out

    def jac(t, X):
        r = np.linalg.norm(X, axis=1)
        out = np.zeros((X.shape[0], n, n))
        nz = r > 0
        if np.any(nz):
            g, dg = g_dg(r[nz])
            out[nz] = _radial_map(X[nz], g, dg)[1]
        return out

    return VectorField(n, func, jac=jac, kink_radius=1.0, name=f"b_{alpha}")


def b_alpha_1d(alpha):
    return b_alpha(alpha, 1)


def phi_explicit(t, X, alpha, return_branch=False):
    """Forward flow of b_alpha from x != 0 (three branches)."""
    _check_alpha(alpha)
    if t < 0:
        raise DomainError("t must be nonnegative")
    be = 1.0 - alpha
    branches = [
        ("phi0", lambda r: (r <= 1) & (t + r ** be <= 1),
         lambda r: (t + r ** be) ** (1 / be),
         lambda r: (t + r ** be) ** (alpha / be) * r ** (-alpha)),
        ("phi1", lambda r: (r <= 1) & (t + r ** be > 1),
         lambda r: (t + r ** be - 1) / be + 1,
         lambda r: r ** (-alpha)),
        ("phi2", lambda r: r > 1,
         lambda r: t / be + r,
         lambda r: np.ones_like(r)),
    ]
    Y, D, lab = _dispatch(X, t, branches, "phi")
    return (Y, D, lab) if return_branch else (Y, D)


def vacated_radius(t, alpha):
    """Radius of the ball emptied by the flow at time t."""
    be = 1.0 - alpha
    return t ** (1 / be) if t <= 1 else (t - alpha) / be


def psi_explicit(t, X, alpha, return_branch=False):
    """Inverse flow psi_t on A_t = R^n minus the closed vacated ball."""
    _check_alpha(alpha)
    be = 1.0 - alpha
    if t < 0:
        raise DomainError("t must be nonnegative")
    if t == 0:
        X = np.atleast_2d(np.asarray(X, float))
        if np.any(np.linalg.norm(X, axis=1) == 0):
            raise DomainError("psi: origin is not in the domain")
        D = np.broadcast_to(np.eye(X.shape[1]), X.shape + (X.shape[1],)).copy()
        return (X.copy(), D, np.zeros(len(X), int)) if return_branch else (X.copy(), D)
    branches = [
        ("psi0", lambda r: (t ** (1 / be) < r) & (r <= 1) & (t < 1),
         lambda r: (r ** be - t) ** (1 / be),
         lambda r: (r ** be - t) ** (alpha / be) * r ** (-alpha)),
        ("psi1", lambda r: (1 < r) & (r <= 1 + t / be) & (t < 1),
         lambda r: (be * r + alpha - t) ** (1 / be),
         lambda r: (be * r + alpha - t) ** (alpha / be)),
        ("psi2", lambda r: ((t - alpha) / be < r) & (r <= 1 + t / be) & (t >= 1),
         lambda r: (be * r + alpha - t) ** (1 / be),
         lambda r: (be * r + alpha - t) ** (alpha / be)),
        ("psi3", lambda r: r > 1 + t / be,
         lambda r: r - t / be,
         lambda r: np.ones_like(r)),
    ]
    Y, D, lab = _dispatch(X, t, branches, "psi")
    return (Y, D, lab) if return_branch else (Y, D)


def Phi_explicit(t, X, alpha):
    """Trajectories emitted from the origin: the point at distance |x| < t
    from the origin 'leaves' at time t - |x|.  Orientation reversing."""
    _check_alpha(alpha)
    be = 1.0 - alpha
    branches = [
        ("Phi0", lambda r: (r < t) & (t - r <= 1),
         lambda r: (t - r) ** (1 / be),
         lambda r: -(t - r) ** (alpha / be) / be),
        ("Phi1", lambda r: (r < t) & (t - r > 1),
         lambda r: (t - r - 1) / be + 1,
         lambda r: np.full_like(r, -1.0 / be)),
    ]
    return _dispatch(X, t, branches, "Phi")[:2]


def Psi_explicit(t, X, alpha):
    """Inverse of Phi_t on the vacated ball (minus the origin)."""
    _check_alpha(alpha)
    be = 1.0 - alpha
    branches = [
        ("Psi0", lambda r: (r <= t ** (1 / be)) & (0 < t) & (t <= 1),
         lambda r: t - r ** be,
         lambda r: -be * r ** (-alpha)),
        ("Psi1", lambda r: (r <= 1) & (t > 1),
         lambda r: t - r ** be,
         lambda r: -be * r ** (-alpha)),
        ("Psi2", lambda r: (1 < r) & (r <= 1 + (t - 1) / be) & (t > 1),
         lambda r: (alpha - 1) * r - alpha + t,
         lambda r: np.full_like(r, alpha - 1.0)),
    ]
    return _dispatch(X, t, branches, "Psi")[:2]


def b_alpha_flow(alpha, n):
    """ExactFlow context for b_alpha (forward phi, inverse psi)."""
    return ExactFlow(n, lambda t, X: phi_explicit(t, X, alpha),
                     lambda t, X: psi_explicit(t, X, alpha), name=f"phi_{alpha}")


# -- non-unique solutions ----------------------------------------------------------

@dataclass
class CounterexampleParams:
    alpha: float = 0.5
    n: int = 3
    k: int = 1
    p: float = 2.0
    T: float = 0.2
    R: float = 1.0

    @property
    def q(self):
        return self.p / (self.p - 1.0)


def bump_form(n, k, channel=0, center=None, radius=0.5, scale=1.0, name="bump"):
    """Single-channel bump k-form: scale * bump(x) dx_I, I the channel-th multi-index."""
    from math import comb
    C = comb(n, k)
    c = np.zeros(n) if center is None else np.asarray(center, float)
    if not 0 <= channel < C:
        raise FieldError("channel out of range")

    def func(t, X):
        out = np.zeros((X.shape[0], C))
        out[:, channel] = scale * bump(X, c, radius)
        return out

    K = KFormField(n, k, func, name=name)
    K.center, K.radius = c, radius
    return K


def validate_nonunique(params):
    a, n, k, p, T = params.alpha, params.n, params.k, params.p, params.T
    _check_alpha(a)
    if not 0 <= k <= n:
        raise ValueError(f"degree k={k} outside 0..{n}")
    if p < 1:
        raise ValueError("p must be >= 1")
    if not k * p < n:
        raise ValueError(f"constraint kp < n violated: k*p = {k * p:g} >= n = {n}")
    Tmax = 1.0 - 2.0 ** (-(1.0 - a))
    if not 0 < T <= Tmax + 1e-15:
        raise ValueError(f"horizon T={T} must satisfy 0 < T <= 1 - 2^-(1-alpha) = {Tmax:.6g}")
    if params.R != 1.0:
        raise ValueError("only R = 1 is supported")


class NonuniqueSolution(KFormField):
    """K^Gamma_t: (phi_t)_* K0 on B(0,1) minus the vacated ball, (Phi_t)_* Gamma
    on the vacated ball, zero elsewhere; K^Gamma_0 = K0.  Gamma=None gives the
    vacuum solution K^0."""

    def __init__(self, K0, Gamma, params):
        validate_nonunique(params)
        for F in (K0, Gamma):
            if F is None:
                continue
            c, R = getattr(F, "center", None), getattr(F, "radius", None)
            if c is not None and np.linalg.norm(c) + R > 0.5 + 1e-12:
                raise ValueError("K0 and Gamma must be supported in B(0, 1/2)")
            if (F.n, F.k) != (params.n, params.k):
                raise ValueError("degree mismatch with parameters")
        self.K0, self.Gamma, self.params = K0, Gamma, params
        super().__init__(params.n, params.k, self._eval, name="K^Gamma" if Gamma else "K^0")

    def _eval(self, t, X):
        t = float(np.atleast_1d(t)[0]) if np.ndim(t) else float(t)
        a = self.params.alpha
        if t == 0:
            return self.K0(0.0, X)
        out = np.zeros((X.shape[0], self.ncomp))
        r = np.linalg.norm(X, axis=1)
        rv = vacated_radius(t, a)
        outer = (r > rv) & (r < 1.0)
        if np.any(outer):
            Z, D = psi_explicit(t, X[outer], a)
            out[outer] = transform_coeffs(self.K0(0.0, Z), D, self.k)
        inner = (r > 0) & (r < rv)
        if self.Gamma is not None and np.any(inner):
            Z, D = Psi_explicit(t, X[inner], a)
            out[inner] = transform_coeffs(self.Gamma(0.0, Z), D, self.k)
        return out


def nonunique_solution(K0, Gamma, params):
    return NonuniqueSolution(K0, Gamma, params)


# -- instantaneous blow-up ----------------------------------------------------------

def _floor_abs(x):
    return np.maximum(np.abs(x), 1e-300)


def b_prime_alpha(alpha, n):
    """Shear drift (0, min(|x1|, 1)^alpha, 0, ...); divergence free."""
    _check_alpha(alpha)
    if n < 2:
        raise ValueError("the shear drift needs n >= 2")

    def func(t, X):
        out = np.zeros_like(X)
        out[:, 1] = np.minimum(np.abs(X[:, 0]), 1.0) ** alpha
        return out

    def jac(t, X):
        out = np.zeros((X.shape[0], n, n))
        a = np.abs(X[:, 0])
        inner = a <= 1.0
        out[:, 1, 0] = np.where(inner, alpha * np.sign(X[:, 0]) * _floor_abs(X[:, 0]) ** (alpha - 1), 0.0)
        return out

    return VectorField(n, func, jac=jac, divergence_free=True, name=f"b'_{alpha}")


def blowup_flow(alpha, n):
    """phi_t(x) = x + t min(|x1|,1)^alpha e_2 and its inverse."""
    _check_alpha(alpha)

    def make(sign):
        def f(t, X):
            X = np.atleast_2d(np.asarray(X, float))
            a = np.abs(X[:, 0])
            Y = X.copy()
            Y[:, 1] += sign * t * np.minimum(a, 1.0) ** alpha
            D = np.broadcast_to(np.eye(n), (X.shape[0], n, n)).copy()
            D[:, 1, 0] = np.where(a <= 1.0, sign * t * alpha * np.sign(X[:, 0])
                                  * _floor_abs(X[:, 0]) ** (alpha - 1), 0.0)
            return Y, D
        return f

    return ExactFlow(n, make(1.0), make(-1.0), name=f"shear_{alpha}")


def blowup_initial(n, k, smooth=False):
    """K0 = indicator of B(0,1) times dx2 ^ ... ^ dx_{k+1} (or a bump profile)."""
    from math import comb
    from .forms import index_map
    if not 0 < k < n:
        raise ValueError(f"blow-up needs 0 < k < n, got k={k}, n={n}")
    ch = index_map(n, k)[tuple(range(1, k + 1))]
    C = comb(n, k)

    def func(t, X):
        out = np.zeros((X.shape[0], C))
        if smooth:
            out[:, ch] = bump(X, np.zeros(n), 1.0)
        else:
            out[:, ch] = (np.linalg.norm(X, axis=1) < 1.0).astype(float)
        return out

    return KFormField(n, k, func, name="K0_blowup")


class BlowupSolution(KFormField):
    """(phi_t)_* K0 for the shear flow, evaluated in closed form."""

    def __init__(self, alpha, n, k, p=2.0, indicator_at="preimage", smooth=False):
        _check_alpha(alpha)
        if not 0 < k < n:
            raise ValueError(f"blow-up needs k not in {{0, n}}, got k={k}")
        if not (p - 1) / p < alpha < 1:
            raise ValueError(f"blow-up needs alpha in ((p-1)/p, 1) = ({(p - 1) / p:g}, 1)")
        if indicator_at not in ("preimage", "point"):
            raise ValueError("indicator_at must be 'preimage' or 'point'")
        self.alpha, self.indicator_at = alpha, indicator_at
        self.flow = blowup_flow(alpha, n)
        self.K0 = blowup_initial(n, k, smooth)
        super().__init__(n, k, self._eval, name="K_blowup")

    def _eval(self, t, X):
        t = float(np.atleast_1d(t)[0]) if np.ndim(t) else float(t)
        Z, D = self.flow.inverse(t, X)
        src = Z if self.indicator_at == "preimage" else X
        return transform_coeffs(self.K0(0.0, src), D, self.k)

    def blowup_channel(self):
        from .forms import index_map
        return index_map(self.n, self.k)[(0,) + tuple(range(2, self.k + 1))]

    def transported_channel(self):
        from .forms import index_map
        return index_map(self.n, self.k)[tuple(range(1, self.k + 1))]


def blowup_solution(alpha, k, n=None, **kw):
    return BlowupSolution(alpha, n if n is not None else k + 1, k, **kw)


def blowup_sup(sol, delta, t, samples=201):
    """sup of the blow-up component over the hyperplanes |x1| = delta, sampled
    along x2 across the transported unit ball (other coordinates zero)."""
    n = sol.n
    x2 = t * delta ** sol.alpha + np.linspace(-0.9, 0.9, samples)
    x2 = np.append(x2, t * delta ** sol.alpha)
    P = np.zeros((2 * x2.size, n))
    P[:, 0] = np.repeat([delta, -delta], x2.size)
    P[:, 1] = np.tile(x2, 2)
    vals = sol(t, P)[:, sol.blowup_channel()]
    return float(np.max(np.abs(vals)))


# -- registry ---------------------------------------------------------------------------

def _rotation_fixture():
    b = VectorField.linear([[0.0, 1.0], [-1.0, 0.0]], name="rotation")
    return {"b": b, "xis": [VectorField.constant([0.5, 0.0]), VectorField.constant([0.0, 0.5])],
            "description": "rigid rotation with two constant noise fields"}


def _geometric_fixture():
    return {"b": VectorField.zero(1), "xis": [VectorField.linear([[1.0]], name="x")],
            "exact": lambda x, W: x * np.exp(W),
            "description": "linear multiplicative noise, phi_t(x) = x exp(W_t)"}


FIXTURES = {
    "nonunique": lambda alpha=0.5, n=3: {"b": b_alpha(alpha, n), "flow": b_alpha_flow(alpha, n)},
    "blowup": lambda alpha=0.8, n=2: {"b": b_prime_alpha(alpha, n), "flow": blowup_flow(alpha, n)},
    "rotation": _rotation_fixture,
    "geometric": _geometric_fixture,
}


def fixture(name, **kw):
    if name not in FIXTURES:
        raise KeyError(f"unknown fixture {name!r}; available: {sorted(FIXTURES)}")
    return FIXTURES[name](**kw)
