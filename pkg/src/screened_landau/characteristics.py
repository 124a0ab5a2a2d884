"""Characteristic flow in a prescribed field history.

The ODE is ``dX/ds = V``, ``dV/ds = E(s, X)`` with ``(X, V) = (x, v)`` at
time ``t``. Deviations from free streaming are

    Y_{s,t}(x, v) = X_{s,t}(x, v) - x + (t - s) v,    W_{s,t}(x, v) = V_{s,t}(x, v) - v,

and they are reported against the free-streaming label ``z = x - t v``.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.ndimage import map_coordinates, spline_filter1d

from .errors import ContractError, DomainError, StraighteningError


# ------------------------------------------------------------ field histories


class FieldHistory:
    """Interface: ``E(t, x)`` for points ``x`` of shape ``(N, d)``."""

    dimension = 1
    t_min = 0.0
    t_max = np.inf
    dt_field = np.inf

    def __call__(self, t, x):
        raise NotImplementedError

    def check_time(self, t):
        slack = 1e-9 * (1.0 + abs(self.t_min) + (abs(self.t_max) if np.isfinite(self.t_max) else 0.0))
        if t < self.t_min - slack or t > self.t_max + slack:
            raise ContractError(f"time {t} lies outside the field history [{self.t_min}, {self.t_max}]")


class CallableField(FieldHistory):
    """Synthetic field from a vectorized callable ``fn(t, x) -> (N, d)``."""

    def __init__(self, dimension, fn, t_max=np.inf, t_min=0.0):
        self.dimension = int(dimension)
        self.fn = fn
        self.t_max = float(t_max)
        self.t_min = float(t_min)

    def __call__(self, t, x):
        return np.asarray(self.fn(t, x), dtype=float)


def zero_field(d):
    return CallableField(d, lambda t, x: np.zeros_like(x))


def constant_field(e0, t_max=np.inf):
    e0 = np.atleast_1d(np.asarray(e0, dtype=float))
    return CallableField(e0.size, lambda t, x: np.broadcast_to(e0, x.shape).copy(), t_max)


class _TimeSlices(FieldHistory):
    """Shared linear-in-time interpolation over uniform snapshots."""

    def _bracket(self, t):
        self.check_time(t)
        t = min(max(t, self.t_min), self.t_max)
        pos = (t - self.times[0]) / self.dt_field
        j = int(np.clip(np.floor(pos), 0, self.times.size - 2))
        return j, pos - j

    def __call__(self, t, x):
        j, a = self._bracket(t)
        if a <= 1e-14:
            return self._eval(j, x)
        if a >= 1 - 1e-14:
            return self._eval(j + 1, x)
        return (1 - a) * self._eval(j, x) + a * self._eval(j + 1, x)


class RadialFieldHistory(_TimeSlices):
    """Radial fields ``E(t, x) = e(t, |x|) x / |x|`` sampled on uniform times.

    Cubic splines in r at each node, linear interpolation in t. Inside the
    first radius ``e`` is continued linearly to ``e(0) = 0``; beyond the last
    radius evaluation raises DomainError.
    """

    def __init__(self, dimension, times, radii, e_values):
        self.dimension = int(dimension)
        self.times = np.asarray(times, dtype=float)
        self.radii = np.asarray(radii, dtype=float)
        self.e = np.asarray(e_values, dtype=float)
        if self.e.shape != (self.times.size, self.radii.size):
            raise ContractError("field values must have shape (times, radii)")
        steps = np.diff(self.times)
        if self.times.size < 2 or not np.allclose(steps, steps[0], rtol=1e-9):
            raise ContractError("field history needs a uniform time grid")
        self.dt_field = float(steps[0])
        self.t_min = float(self.times[0])
        self.t_max = float(self.times[-1])
        self._splines = [CubicSpline(self.radii, row) for row in self.e]

    def _eval(self, j, x):
        r = np.sqrt(np.sum(x * x, axis=-1))
        if np.any(r > self.radii[-1]):
            i = int(np.argmax(r))
            raise DomainError(f"trajectory reached |x| = {r[i]:.6g} beyond the field radii",
                              location=x[i].tolist())
        inner = r < self.radii[0]
        e = np.empty_like(r)
        e[~inner] = self._splines[j](r[~inner])
        e[inner] = self.e[j, 0] * r[inner] / self.radii[0]
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(r[:, None] > 0, x / r[:, None], 0.0)
        return e[:, None] * unit


class PeriodicFieldHistory(_TimeSlices):
    """Fields on a periodic box, cubic B-spline interpolation in x.

    ``values`` has shape ``(times, d) + (n,)*d``. Spline coefficients are
    computed once per node; since prefiltering is linear, the time
    interpolation acts on the coefficients.
    """

    def __init__(self, box, times, values):
        self.box = box
        self.dimension = box.dimension
        self.times = np.asarray(times, dtype=float)
        self.values = np.asarray(values, dtype=float)
        steps = np.diff(self.times)
        if self.times.size < 2 or not np.allclose(steps, steps[0], rtol=1e-9):
            raise ContractError("field history needs a uniform time grid")
        if self.values.shape[:2] != (self.times.size, self.dimension):
            raise ContractError("field values must have shape (times, d) + grid")
        self.dt_field = float(steps[0])
        self.t_min = float(self.times[0])
        self.t_max = float(self.times[-1])
        coef = self.values
        for ax in range(2, 2 + self.dimension):
            coef = spline_filter1d(coef, order=3, axis=ax, mode="grid-wrap")
        self._coef = coef

    def _coords(self, x):
        return (x.T - self.box.x[0]) / self.box.dx

    def _interp(self, coef, x):
        coords = self._coords(x)
        return np.column_stack([map_coordinates(coef[c], coords, order=3, mode="grid-wrap",
                                                prefilter=False) for c in range(self.dimension)])

    def _eval(self, j, x):
        return self._interp(self._coef[j], x)

    def __call__(self, t, x):
        j, a = self._bracket(t)
        if a <= 1e-14:
            return self._eval(j, x)
        if a >= 1 - 1e-14:
            return self._eval(j + 1, x)
        return self._interp((1 - a) * self._coef[j] + a * self._coef[j + 1], x)


# ------------------------------------------------------------------ the flow


def _rk4_backward(field, s, t, x, v, dt_char):
    """Integrate from time t down to time s; returns (X, V)."""
    X = np.array(x, dtype=float)
    V = np.array(v, dtype=float)
    if t == s:
        return X, V
    n = max(1, int(np.ceil((t - s) / dt_char - 1e-9)))
    h = -(t - s) / n
    for i in range(n):
        tau = t + i * h
        k1x, k1v = V, field(tau, X)
        k2x, k2v = V + 0.5 * h * k1v, field(tau + 0.5 * h, X + 0.5 * h * k1x)
        k3x, k3v = V + 0.5 * h * k2v, field(tau + 0.5 * h, X + 0.5 * h * k2x)
        k4x, k4v = V + h * k3v, field(tau + h, X + h * k3x)
        X = X + h / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
        V = V + h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
    return X, V


def _velocity_verlet_backward(field, s, t, x, v, dt_char):
    X = np.array(x, dtype=float)
    V = np.array(v, dtype=float)
    if t == s:
        return X, V
    n = max(1, int(np.ceil((t - s) / dt_char - 1e-9)))
    h = -(t - s) / n
    acc = field(t, X)
    for i in range(n):
        Vh = V + 0.5 * h * acc
        X = X + h * Vh
        acc = field(t + (i + 1) * h, X)
        V = Vh + 0.5 * h * acc
    return X, V


def default_step(field):
    return min(field.dt_field, 0.05) / 2.0


def characteristics(field, s, t, x, v, dt_char=None, method="rk4"):
    """``(X_{s,t}(x, v), V_{s,t}(x, v))`` for arrays of shape ``(N, d)``."""
    if not 0 <= s <= t:
        raise ContractError("flow needs 0 <= s <= t")
    field.check_time(s)
    field.check_time(t)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    v = np.atleast_2d(np.asarray(v, dtype=float))
    if x.shape != v.shape or x.shape[1] != field.dimension:
        raise ContractError("x and v must both have shape (N, d)")
    dt_char = default_step(field) if dt_char is None else dt_char
    if method == "rk4":
        return _rk4_backward(field, s, t, x, v, dt_char)
    if method == "verlet":
        return _velocity_verlet_backward(field, s, t, x, v, dt_char)
    raise ContractError(f"unknown integrator {method!r}")


@dataclass
class FlowMap:
    s: float
    t: float
    x: np.ndarray
    v: np.ndarray
    X: np.ndarray
    V: np.ndarray
    jacobian: np.ndarray | None = None
    psi: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    @property
    def z(self):
        """Free-streaming labels ``x - t v``."""
        return self.x - self.t * self.v

    @property
    def Y(self):
        return self.X - self.x + (self.t - self.s) * self.v

    @property
    def W(self):
        return self.V - self.v

    @property
    def determinant(self):
        if self.jacobian is None:
            return None
        return np.linalg.det(self.jacobian)

    def blocks(self):
        """``(grad_x Y, grad_v Y, grad_x W, grad_v W)`` from the phase Jacobian."""
        if self.jacobian is None:
            raise ContractError("flow map has no Jacobian")
        d = self.x.shape[1]
        J = self.jacobian
        eye = np.eye(d)
        dXdx, dXdv = J[:, :d, :d], J[:, :d, d:]
        dVdx, dVdv = J[:, d:, :d], J[:, d:, d:]
        return dXdx - eye, dXdv + (self.t - self.s) * eye, dVdx, dVdv - eye


def flow(field, s, t, x, v, dt_char=None, jacobian=False, h=1e-5, method="rk4"):
    """Backward characteristics from ``(x, v)`` at time t to time s.

    With ``jacobian`` the phase-space Jacobian of ``(x, v) -> (X, V)`` is
    estimated by centred differences of step ``h``.
    """
    X, V = characteristics(field, s, t, x, v, dt_char, method)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    v = np.atleast_2d(np.asarray(v, dtype=float))
    J = None
    if jacobian:
        n, d = x.shape
        J = np.zeros((n, 2 * d, 2 * d))
        for c in range(2 * d):
            dx = np.zeros((n, d))
            dv = np.zeros((n, d))
            (dx if c < d else dv)[:, c % d] = h
            Xp, Vp = characteristics(field, s, t, x + dx, v + dv, dt_char, method)
            Xm, Vm = characteristics(field, s, t, x - dx, v - dv, dt_char, method)
            J[:, :d, c] = (Xp - Xm) / (2 * h)
            J[:, d:, c] = (Vp - Vm) / (2 * h)
    return FlowMap(s, t, x, v, X, V, J)


# ------------------------------------------------------------- straightening


@dataclass
class Straightening:
    psi: np.ndarray
    residual: np.ndarray
    iterations: int
    ratios: list
    damping: float
    det_grad_psi: np.ndarray | None = None
    converged_fraction: float = 1.0


def straighten(field, s, t, x, v, tol=1e-12, max_iter=100, dt_char=None, det=False, h=1e-5):
    """Velocity ``Psi_{s,t}(x, v)`` with ``X_{s,t}(x, Psi) = x - (t - s) v``.

    Plain fixed-point iteration ``Psi <- v + Y_{s,t}(x, Psi)/(t - s)``;
    the displacement ratio between iterates must stay below 1/2. After the
    first breach the iteration is damped by 1/2; three consecutive breaches
    raise StraighteningError.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    v = np.atleast_2d(np.asarray(v, dtype=float))
    if s == t:
        return Straightening(v.copy(), np.zeros(x.shape[0]), 0, [], 1.0,
                             np.ones(x.shape[0]) if det else None)
    span = t - s
    target = x - span * v
    psi = v.copy()
    damping = 1.0
    ratios = []
    last_step = None
    breaches = 0
    resid = None
    it = 0
    for it in range(1, max_iter + 1):
        X, _ = characteristics(field, s, t, x, psi, dt_char)
        resid = np.sqrt(np.sum((X - target) ** 2, axis=1))
        if np.all(resid < tol * (1 + np.sqrt(np.sum(x * x, axis=1)))):
            break
        Y = X - x + span * psi
        new = v + Y / span
        step = float(np.max(np.abs(new - psi)))
        if last_step is not None and last_step > 0:
            ratio = step / last_step
            ratios.append(ratio)
            if ratio >= 0.5 and step > 1e-14:
                breaches += 1
                if breaches >= 3:
                    raise StraighteningError(
                        f"straightening stopped contracting (ratio {ratio:.3g})", ratio=ratio)
                damping = 0.5
            else:
                breaches = 0
        psi = psi + damping * (new - psi)
        last_step = step
    ok = resid < max(tol, 1e-14) * (1 + np.sqrt(np.sum(x * x, axis=1))) * 10
    det_psi = None
    if det:
        det_psi = _grad_psi_det(field, s, t, x, v, psi, dt_char, h)
    return Straightening(psi, resid, it, ratios, damping, det_psi, float(np.mean(ok)))


def _grad_psi_det(field, s, t, x, v, psi, dt_char, h):
    """``det grad_v Psi`` by implicit differentiation of ``X(x, Psi) = x - (t-s) v``.

    ``grad_v Psi = -(t - s) (d_v X)^-1`` evaluated at ``(x, Psi)``.
    """
    n, d = x.shape
    J = np.zeros((n, d, d))
    for c in range(d):
        dv = np.zeros((n, d))
        dv[:, c] = h
        Xp, _ = characteristics(field, s, t, x, psi + dv, dt_char)
        Xm, _ = characteristics(field, s, t, x, psi - dv, dt_char)
        J[:, :, c] = (Xp - Xm) / (2 * h)
    grad = -(t - s) * np.linalg.inv(J)
    return np.linalg.det(grad)


# ------------------------------------------------------------------ scattering


@dataclass
class ScatteringResult:
    times: np.ndarray
    Y_inf: np.ndarray
    W_inf: np.ndarray
    increments_Y: np.ndarray
    increments_W: np.ndarray
    converged: bool
    report: object = None


def deviations_at(field, t, z, v, dt_char=None):
    """``(Y_{0,t}, W_{0,t})`` at labels ``z`` (trajectories start at ``z + t v``)."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    v = np.atleast_2d(np.asarray(v, dtype=float))
    X, V = characteristics(field, 0.0, t, z + t * v, v, dt_char)
    return X - z, V - v


def scattering_limits(field, z, v, t_list, dt_char=None, tol=None, fit=None):
    """Large-time limits of ``Y_{0,t}``, ``W_{0,t}`` on the labels ``(z, v)``.

    Successive trajectories are integrated incrementally: the values at
    ``t_{k+1}`` reuse nothing from ``t_k`` since the start points differ,
    so each time is a fresh backward solve. ``fit`` may be a callable that
    receives ``(t_k, |Y_{k+1} - Y_k|_inf)`` pairs and returns a report.
    """
    t_list = np.asarray(sorted(t_list), dtype=float)
    if t_list.size < 2:
        raise ContractError("scattering limits need at least two times")
    Ys, Ws = [], []
    for t in t_list:
        Y, W = deviations_at(field, t, z, v, dt_char)
        Ys.append(Y)
        Ws.append(W)
    Ys = np.array(Ys)
    Ws = np.array(Ws)
    incY = np.max(np.abs(np.diff(Ys, axis=0)), axis=(1, 2))
    incW = np.max(np.abs(np.diff(Ws, axis=0)), axis=(1, 2))
    if tol is None:
        floor = 1e-12 * (1.0 + float(np.max(np.abs(Ys))) + float(np.max(np.abs(Ws))))
        converged = bool(incY[-1] <= max(incY[0], floor) and incW[-1] <= max(incW[0], floor))
    else:
        converged = bool(incY[-1] < tol and incW[-1] < tol)
    report = fit(np.column_stack([t_list[:-1], incY])) if fit is not None else None
    return ScatteringResult(t_list, Ys[-1], Ws[-1], incY, incW, converged, report)


def scattering_profile(f0, mu, x, v, Y_inf, W_inf):
    """``f_inf(x, v) = f0(x + Y, v + W) + mu(v + W) - mu(v)`` pointwise.

    ``f0(x, v)`` and ``mu(v)`` are vectorized callables over ``(N, d)`` arrays.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    v = np.atleast_2d(np.asarray(v, dtype=float))
    Y = np.broadcast_to(Y_inf, x.shape)
    W = np.broadcast_to(W_inf, v.shape)
    return f0(x + Y, v + W) + mu(v + W) - mu(v)
