"""Per-mode Volterra convolution equations on a uniform time grid.

Every solve uses the trapezoidal product rule

    rho_n = S_n + dt * (K_n rho_0 / 2 + sum_{0<j<n} K_{n-j} rho_j + K_0 rho_n / 2).

The fast path rewrites this as a power-series division and evaluates it with
FFT-based Newton inversion; ``method="march"`` performs the same recursion
step by step and is kept as the reference.
"""

import csv
import io
from dataclasses import dataclass

import numpy as np

from .dispersion import khat_radial, khat_time
from .errors import ContractError
from .parallel import ordered_map

KINDS = ("Source", "Density", "Kernel", "Resolvent")


@dataclass(frozen=True)
class TimeGrid:
    t_max: float
    steps: int

    def __post_init__(self):
        if not self.t_max > 0 or int(self.steps) != self.steps or self.steps < 1:
            raise ContractError("time grid needs t_max > 0 and an integer steps >= 1")

    @property
    def dt(self):
        return self.t_max / self.steps

    @property
    def nodes(self):
        return self.dt * np.arange(self.steps + 1)


@dataclass
class ModeSeries:
    grid: TimeGrid
    xi: np.ndarray
    values: np.ndarray
    kind: str

    def __post_init__(self):
        self.xi = np.atleast_1d(np.asarray(self.xi, dtype=float))
        self.values = np.asarray(self.values)
        if self.values.ndim == 1:
            self.values = self.values[None, :]
        if self.kind not in KINDS:
            raise ContractError(f"unknown series kind {self.kind!r}")
        if self.values.shape != (self.xi.size, self.grid.steps + 1):
            raise ContractError(
                f"values shape {self.values.shape} does not match "
                f"{self.xi.size} modes x {self.grid.steps + 1} nodes"
            )

    def matches(self, other):
        return (self.grid == other.grid and self.xi.shape == other.xi.shape
                and np.array_equal(self.xi, other.xi))


def _pow2(n):
    return 1 << max(0, int(n - 1).bit_length())


def series_inverse(a, n):
    """First ``n`` coefficients of ``1/a(z)`` along the last axis (Newton)."""
    a = np.asarray(a, dtype=complex)
    if np.any(a[..., 0] == 0):
        raise ContractError("series with zero constant term has no inverse")
    b = np.zeros(a.shape[:-1] + (n,), dtype=complex)
    b[..., 0] = 1.0 / a[..., 0]
    m = 1
    while m < n:
        m2 = min(2 * m, n)
        L = _pow2(2 * m2)
        fb = np.fft.fft(b[..., :m], L)
        prod = np.fft.ifft(np.fft.fft(a[..., :m2], L) * fb)[..., :m2]
        corr = -prod
        corr[..., 0] += 2.0
        b[..., :m2] = np.fft.ifft(fb * np.fft.fft(corr, L))[..., :m2]
        m = m2
    return b


def truncated_convolution(x, y):
    """``(x * y)_n`` for ``n`` below the common length, along the last axis."""
    n = x.shape[-1]
    L = _pow2(2 * n)
    return np.fft.ifft(np.fft.fft(x, L) * np.fft.fft(y, L))[..., :n]


def _denominator(K, dt):
    c = -dt * K.astype(complex)
    c[..., 0] = 1.0 - 0.5 * dt * K[..., 0]
    if np.any(np.abs(c[..., 0]) < 1e-300):
        raise ContractError("singular trapezoidal step: 1 - dt K(0)/2 = 0")
    return c


def _fft_solve(K, S, dt):
    rhs = S.astype(complex) + 0.5 * dt * K * S[..., :1]
    rhs[..., 0] = 0.0
    c = _denominator(K, dt)
    out = truncated_convolution(rhs, series_inverse(c, K.shape[-1]))
    out[..., 0] = S[..., 0]
    return out


def _march_solve(K, S, dt):
    K = K.astype(complex)
    S = S.astype(complex)
    out = np.zeros_like(S)
    out[..., 0] = S[..., 0]
    diag = 1.0 - 0.5 * dt * K[..., 0]
    if np.any(np.abs(diag) < 1e-300):
        raise ContractError("singular trapezoidal step: 1 - dt K(0)/2 = 0")
    for n in range(1, S.shape[-1]):
        hist = np.sum(K[..., n - 1:0:-1] * out[..., 1:n], axis=-1)
        out[..., n] = (S[..., n] + dt * (0.5 * K[..., n] * out[..., 0] + hist)) / diag
    return out


def _solve(K, S, dt, method):
    if method == "fft":
        return _fft_solve(K, S, dt)
    if method == "march":
        return _march_solve(K, S, dt)
    raise ContractError(f"unknown method {method!r}")


def _finish(values, like_real):
    if like_real and np.max(np.abs(values.imag), initial=0.0) <= 1e-12 * max(1.0, np.max(np.abs(values))):
        return values.real
    return values


def solve_mode_volterra(kernel, source, method="fft"):
    """Density modes solving ``rho = S + K * rho`` (trapezoidal product rule)."""
    if kernel.kind != "Kernel" or source.kind != "Source":
        raise ContractError("expected a Kernel series and a Source series")
    if not kernel.matches(source):
        raise ContractError("kernel and source must share the time grid and mode list")
    real = np.isrealobj(kernel.values) and np.isrealobj(source.values)
    vals = _solve(kernel.values, source.values, kernel.grid.dt, method)
    return ModeSeries(kernel.grid, kernel.xi, _finish(vals, real), "Density")


def resolvent_mode(kernel, method="fft"):
    """Resolvent modes solving ``G = K + K * G`` with the same product rule."""
    if kernel.kind != "Kernel":
        raise ContractError("expected a Kernel series")
    K = kernel.values
    vals = _solve(K, K, kernel.grid.dt, method)
    return ModeSeries(kernel.grid, kernel.xi, _finish(vals, np.isrealobj(K)), "Resolvent")


def trapezoid_convolution(g, s, dt):
    """``dt (g_n s_0/2 + sum_{0<j<n} g_{n-j} s_j + g_0 s_n/2)`` along the last axis."""
    g = np.asarray(g)
    s = np.asarray(s)
    full = dt * truncated_convolution(g.astype(complex), s.astype(complex))
    full -= 0.5 * dt * (g * s[..., :1] + g[..., :1] * s)
    full[..., 0] = 0.0
    return full


def apply_resolvent(resolvent, source):
    """``S + G * S`` with the trapezoidal convolution."""
    if resolvent.kind != "Resolvent" or source.kind != "Source":
        raise ContractError("expected a Resolvent series and a Source series")
    if not resolvent.matches(source):
        raise ContractError("resolvent and source must share the time grid and mode list")
    vals = source.values + trapezoid_convolution(resolvent.values, source.values, source.grid.dt)
    real = np.isrealobj(resolvent.values) and np.isrealobj(source.values)
    return ModeSeries(source.grid, source.xi, _finish(vals, real), "Density")


def mode_sweep(profile, grid, xi_list, direction=None, workers=None):
    """Tabulate ``Khat(t_k, xi)`` on the product of the time grid and |xi| list.

    Non-radial profiles are sampled along ``direction`` (default e_1).
    """
    xi = np.atleast_1d(np.asarray(xi_list, dtype=float))
    if xi.size == 0:
        raise ContractError("mode list must be nonempty")
    if np.any(xi < 0):
        raise ContractError("mode magnitudes must be >= 0")
    t = grid.nodes
    chunks = [xi[i:i + 64] for i in range(0, xi.size, 64)]
    if profile.is_zero:
        return ModeSeries(grid, xi, np.zeros((xi.size, t.size)), "Kernel")
    if profile.is_radial:
        rows = ordered_map(lambda c: khat_radial(profile, t, c), chunks, workers)
    else:
        e = np.eye(profile.dimension)[0] if direction is None else np.asarray(direction, dtype=float)

        def tab(c):
            vecs = c[:, None] * e
            return khat_time(profile, t[None, :], vecs[:, None, :])

        rows = ordered_map(tab, chunks, workers)
    return ModeSeries(grid, xi, np.concatenate(rows, axis=0), "Kernel")


def default_modes(count=2048, lo=1e-3, hi=64.0, include_zero=True):
    """Geometric |xi| grid with an optional leading zero mode."""
    xs = np.geomspace(lo, hi, count - 1 if include_zero else count)
    return np.concatenate([[0.0], xs]) if include_zero else xs


def source_series(grid, xi, fn):
    """Build a Source series from ``fn(t, xi)`` evaluated on the outer grid."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    vals = fn(grid.nodes[None, :], xi[:, None])
    return ModeSeries(grid, xi, np.broadcast_to(vals, (xi.size, grid.steps + 1)).copy(), "Source")


# ------------------------------------------------------------------ CSV I/O


def series_to_csv(series):
    """Serialize as ``t,xi,re,im`` rows, mode-major, full round-trip precision."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "xi", "re", "im"])
    t = series.grid.nodes
    vals = np.asarray(series.values, dtype=complex)
    for i, x in enumerate(series.xi):
        for k in range(t.size):
            v = vals[i, k]
            w.writerow([repr(float(t[k])), repr(float(x)), repr(float(v.real)), repr(float(v.imag))])
    return buf.getvalue()


def series_from_csv(text, kind):
    """Inverse of :func:`series_to_csv`; the time grid must be uniform from 0."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [h.strip() for h in rows[0]] != ["t", "xi", "re", "im"]:
        raise ContractError("mode CSV must start with the header t,xi,re,im")
    data = np.array([[float(x) for x in r] for r in rows[1:] if r], dtype=float)
    if data.size == 0:
        raise ContractError("mode CSV has no data rows")
    xi, first = np.unique(data[:, 1], return_index=True)
    xi = data[np.sort(first), 1]
    n_modes = xi.size
    if data.shape[0] % n_modes:
        raise ContractError("mode CSV rows are not a full mode x time product")
    n_t = data.shape[0] // n_modes
    t = data[:n_t, 0]
    if t[0] != 0.0 or n_t < 2:
        raise ContractError("time grid must start at 0 with at least two nodes")
    grid = TimeGrid(float(t[-1]), n_t - 1)
    if not np.allclose(t, grid.nodes, rtol=1e-12, atol=1e-12):
        raise ContractError("time grid in mode CSV is not uniform")
    vals = (data[:, 2] + 1j * data[:, 3]).reshape(n_modes, n_t)
    if np.all(data[:, 3] == 0.0):
        vals = vals.real
    return ModeSeries(grid, xi, vals, kind)
