"""Stochastic flows of diffeomorphisms and their Jacobians.

The flow solves the Stratonovich equation

    phi_t(x) = x + int_0^t b(r, phi_r) dr + sum_i int_0^t xi_i(r, phi_r) o dW^i_r

whose Ito form has drift b + (1/2) sum_i (D xi_i) xi_i.  Two schemes are
available:

``ito_euler``   Euler-Maruyama on the Ito form (correction added explicitly);
``strat_heun``  predictor-corrector (stochastic Heun) on the Stratonovich form.

The Jacobian Dphi is advanced with the same increments, by applying the
scheme to the augmented system (x, J).  Brownian increments come from a
counter-based generator so a path is reproducible from (seed, index) alone
and refined/coarsened paths stay coupled.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

SCHEMES = ("ito_euler", "strat_heun")


class FlowError(RuntimeError):
    pass


# -- Brownian paths ------------------------------------------------------------

def _counter_normals(seed, index, count):
    """``count`` standard normals; value j depends only on (seed, index, j)."""
    bitgen = np.random.Philox(key=np.array([seed, index], dtype=np.uint64))
    npairs = (count + 1) // 2
    raw = bitgen.random_raw(2 * npairs)
    u = (raw >> np.uint64(11)).astype(np.float64) * 2.0 ** -53
    u1 = 1.0 - u[0::2]                # (0, 1]
    u2 = u[1::2]
    rad = np.sqrt(-2.0 * np.log(u1))
    z = np.empty(2 * npairs)
    z[0::2] = rad * np.cos(2 * np.pi * u2)
    z[1::2] = rad * np.sin(2 * np.pi * u2)
    return z[:count]


@dataclass
class BrownianPath:
    """Increments of an N-dimensional Brownian motion on a uniform grid."""

    T: float
    dW: np.ndarray          # (M, N)
    seed: int = 0
    index: int = 0

    @property
    def M(self):
        return self.dW.shape[0]

    @property
    def N(self):
        return self.dW.shape[1]

    @property
    def dt(self):
        return self.T / self.M

    @property
    def times(self):
        return np.linspace(0.0, self.T, self.M + 1)

    @property
    def W(self):
        return np.vstack([np.zeros((1, self.N)), np.cumsum(self.dW, axis=0)])

    def coarsen(self, factor):
        """Same path observed on a grid ``factor`` times coarser."""
        if self.M % factor:
            raise ValueError(f"{self.M} steps not divisible by {factor}")
        dW = self.dW.reshape(self.M // factor, factor, self.N).sum(axis=1)
        return BrownianPath(self.T, dW, self.seed, self.index)

    def restrict(self, m):
        """The path on [0, t_m]."""
        return BrownianPath(m * self.dt, self.dW[:m].copy(), self.seed, self.index)

    def value_at(self, t):
        """W(t) by linear interpolation between grid nodes (exact at nodes)."""
        t = np.asarray(t, float)
        W = self.W
        return np.stack([np.interp(t, self.times, W[:, i]) for i in range(self.N)], axis=-1)


def sample_brownian(N, T, M, seed, index=0):
    """Increments for path ``index``: dW[m, i] is a deterministic function of
    (seed, index, m, i), so regenerating gives bit-identical paths."""
    if M < 1 or T <= 0:
        raise ValueError("need M >= 1 steps and T > 0")
    if N == 0:
        return BrownianPath(float(T), np.zeros((M, 0)), seed, index)
    z = _counter_normals(int(seed), int(index), M * N).reshape(M, N)
    return BrownianPath(float(T), z * np.sqrt(T / M), seed, index)


# -- integration --------------------------------------------------------------

@dataclass
class FlowSample:
    """Result of integrating the flow from a batch of m initial points."""

    x0: np.ndarray                    # (m, n)
    times: np.ndarray                 # (M+1,)
    x: np.ndarray                     # (m, n) final positions
    jac: np.ndarray | None            # (m, n, n) final Jacobians
    logdet: np.ndarray | None         # (M+1, m)
    traj: np.ndarray | None = None    # (M+1, m, n) if stored
    jac_traj: np.ndarray | None = None
    escaped: np.ndarray = field(default=None)
    scheme: str = "strat_heun"

    @property
    def dt(self):
        return self.times[1] - self.times[0]


def _ito_correction(xis, t, X):
    """(1/2) sum_i (D xi_i) xi_i  and, lazily, its Jacobian."""
    c = np.zeros_like(X)
    for xi in xis:
        c += 0.5 * np.einsum("mij,mj->mi", xi.jacobian(t, X), xi(t, X))
    return c


def _ito_correction_jac(xis, t, X):
    n = X.shape[1]
    D = np.zeros((X.shape[0], n, n))
    for xi in xis:
        v, Dv, D2v = xi(t, X), xi.jacobian(t, X), xi.hessian(t, X)
        D += 0.5 * (np.einsum("maqj,mq->maj", D2v, v)
                    + np.einsum("maq,mqj->maj", Dv, Dv))
    return D


def _increment(b, xis, t, X, dt, dw):
    """b dt + sum xi_i dW_i ; dw has shape (N,) or (m, N)."""
    out = b(t, X) * dt
    for i, xi in enumerate(xis):
        out += xi(t, X) * (dw[..., i][..., None] if dw.ndim > 1 else dw[i])
    return out


def _jac_increment(b, xis, t, X, dt, dw):
    A = b.jacobian(t, X) * dt
    for i, xi in enumerate(xis):
        w = dw[..., i][..., None, None] if dw.ndim > 1 else dw[i]
        A += xi.jacobian(t, X) * w
    return A


def _check_scheme(scheme):
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")


MIN_BOX_HALF_WIDTH = 10.0


def _safety_bound(X0):
    """10 times the initial box; the box has half-width at least 10."""
    extent = float(np.max(np.abs(X0))) if X0.size else 0.0
    return 10.0 * max(MIN_BOX_HALF_WIDTH, extent)


def integrate_flow(b, xis, x0, path, scheme="strat_heun", jacobian=True, store=False,
                   t0=0.0, dW=None, bound=None):
    """Integrate the flow from the points ``x0`` along ``path``.

    ``dW`` (optional) overrides the path increments and may carry one path per
    point: shape (M, m, N).  Points leaving the safety box (10x the initial
    box, half-width at least 10) are frozen and reported in ``escaped``.
    """
    _check_scheme(scheme)
    X = np.atleast_2d(np.asarray(x0, float)).copy()
    m, n = X.shape
    if b.n != n or any(xi.n != n for xi in xis):
        raise ValueError("dimension mismatch between fields and points")
    dW = path.dW if dW is None else np.asarray(dW, float)
    M = dW.shape[0]
    if len(xis) != dW.shape[-1]:
        raise ValueError(f"{len(xis)} noise fields but {dW.shape[-1]} Brownian components")
    dt = path.dt
    times = t0 + dt * np.arange(M + 1)
    bound = _safety_bound(X) if bound is None else bound
    J = np.broadcast_to(np.eye(n), (m, n, n)).copy() if jacobian else None
    logdet = np.zeros((M + 1, m)) if jacobian else None
    traj = np.empty((M + 1, m, n)) if store else None
    jtraj = np.empty((M + 1, m, n, n)) if (store and jacobian) else None
    if store:
        traj[0] = X
        if jacobian:
            jtraj[0] = J
    escaped = np.zeros(m, bool)
    for j in range(M):
        t, dw = times[j], dW[j]
        live = ~escaped
        if not np.all(live):
            Xl = X[live]
            dwl = dw[live] if dw.ndim > 1 else dw
        else:
            Xl, dwl = X, dw
        if scheme == "ito_euler":
            dX = _increment(b, xis, t, Xl, dt, dwl) + _ito_correction(xis, t, Xl) * dt
            if jacobian:
                A = _jac_increment(b, xis, t, Xl, dt, dwl) + _ito_correction_jac(xis, t, Xl) * dt
                J[live] = J[live] + A @ J[live]
            Xn = Xl + dX
        else:
            k1 = _increment(b, xis, t, Xl, dt, dwl)
            Xp = Xl + k1
            k2 = _increment(b, xis, t + dt, Xp, dt, dwl)
            Xn = Xl + 0.5 * (k1 + k2)
            if jacobian:
                Jl = J[live]
                A1 = _jac_increment(b, xis, t, Xl, dt, dwl) @ Jl
                A2 = _jac_increment(b, xis, t + dt, Xp, dt, dwl) @ (Jl + A1)
                J[live] = Jl + 0.5 * (A1 + A2)
        X[live] = Xn
        bad = ~np.all(np.isfinite(X), axis=1) | (np.max(np.abs(X), axis=1) > bound)
        escaped |= bad
        if jacobian:
            sign, ld = np.linalg.slogdet(J)
            if np.any((sign <= 0) & ~escaped):
                raise FlowError(f"Jacobian determinant not positive at step {j + 1}")
            logdet[j + 1] = ld
        if store:
            traj[j + 1] = X
            if jacobian:
                jtraj[j + 1] = J
    return FlowSample(x0=np.atleast_2d(np.asarray(x0, float)), times=times, x=X, jac=J,
                      logdet=logdet, traj=traj, jac_traj=jtraj, escaped=escaped, scheme=scheme)


def inverse_flow(b, xis, y, path, scheme="strat_heun", dW=None, t_end=None):
    """psi_t(y): solve the backward equation from time t down to 0 with
    negated coefficients over the reversed increments of ``path``.

    ``path`` should cover exactly [0, t] (see ``BrownianPath.restrict``).
    """
    _check_scheme(scheme)
    Z = np.atleast_2d(np.asarray(y, float)).copy()
    dW = path.dW if dW is None else np.asarray(dW, float)
    dt = path.dt
    M = dW.shape[0]
    times = dt * np.arange(M + 1) if t_end is None else t_end - dt * np.arange(M, -1, -1)
    for j in range(M - 1, -1, -1):
        t1, t0, dw = times[j + 1], times[j], dW[j]
        if scheme == "ito_euler":
            Z = Z - _increment(b, xis, t1, Z, dt, dw) + _ito_correction(xis, t1, Z) * dt
        else:
            k1 = _increment(b, xis, t1, Z, dt, dw)
            Zp = Z - k1
            k2 = _increment(b, xis, t0, Zp, dt, dw)
            Z = Z - 0.5 * (k1 + k2)
    return Z


# -- volume -------------------------------------------------------------------

def volume_report(sample, b=None, xis=(), dW=None):
    """Jacobian determinants along a FlowSample.

    Returns the final determinants, max |J - 1|, and (when the fields and a
    stored trajectory are given) the discrepancy between log det Dphi and the
    Stratonovich integral of div b dt + div xi_i o dW^i along the path.
    """
    if sample.logdet is None:
        raise FlowError("sample has no Jacobian data")
    det = np.exp(sample.logdet[-1])
    out = {"det": det, "max_dev_from_one": float(np.max(np.abs(det - 1.0)))}
    if b is not None and sample.traj is not None and dW is not None:
        t, X, dt = sample.times, sample.traj, sample.dt
        integ = np.zeros(X.shape[1])
        for j in range(len(t) - 1):
            d0 = b.divergence(t[j], X[j]) * dt
            d1 = b.divergence(t[j + 1], X[j + 1]) * dt
            for i, xi in enumerate(xis):
                w = dW[j][..., i] if np.ndim(dW[j]) > 1 else dW[j][i]
                d0 = d0 + xi.divergence(t[j], X[j]) * w
                d1 = d1 + xi.divergence(t[j + 1], X[j + 1]) * w
            integ += 0.5 * (d0 + d1)
        out["log_identity_gap"] = float(np.max(np.abs(sample.logdet[-1] - integ)))
    return out


@dataclass
class FlowEnsemble:
    """FlowSamples for several Brownian paths sharing the initial points."""

    samples: list
    paths: list

    def to_csv(self, fname, run_id, every=1):
        """Columns: run_id, path_index, point_index, t, x_1..x_n, J_11..J_nn, logdet."""
        n = self.samples[0].x0.shape[1]
        head = (["run_id", "path_index", "point_index", "t"] + [f"x_{i + 1}" for i in range(n)]
                + [f"J_{i + 1}{j + 1}" for i in range(n) for j in range(n)] + ["logdet"])
        with open(fname, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(head)
            write_ensemble_rows(w, self, run_id, every)


def write_ensemble_rows(writer, ensemble, run_id, every=1):
    for s, p in zip(ensemble.samples, ensemble.paths):
        if s.traj is None:
            steps = [len(s.times) - 1]
        else:
            steps = list(range(0, len(s.times), every))
            if steps[-1] != len(s.times) - 1:
                steps.append(len(s.times) - 1)
        for j in steps:
            X = s.traj[j] if s.traj is not None else s.x
            J = s.jac_traj[j] if s.jac_traj is not None else s.jac
            for q in range(X.shape[0]):
                row = [run_id, p.index, q, f"{s.times[j]:.10g}"]
                row += [f"{v:.15g}" for v in X[q]]
                row += [f"{v:.15g}" for v in J[q].ravel()] if J is not None else []
                row += [f"{s.logdet[j, q]:.15g}"] if s.logdet is not None else []
                writer.writerow(row)
