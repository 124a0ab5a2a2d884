"""Radial inverse Fourier transforms, norms, dyadic blocks and decay fits.

Inverse transform convention: ``g(x) = (2 pi)^-d int exp(i x.xi) f(|xi|) dxi``.
For a radial symbol this is

    g(r) = (2 pi)^(-d/2) int_0^inf k^(d-1) [J_nu(kr) / (kr)^nu] f(k) dk,

``nu = d/2 - 1``, and the radial derivative is

    g'(r) = -(2 pi)^(-d/2) r int_0^inf k^(d+1) [J_{nu+1}(kr) / (kr)^(nu+1)] f(k) dk.
"""

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import AccuracyError, ContractError, UnsupportedError
from .parallel import ordered_map
from .quadrature import bessel_ratio, graded_edges, panel_rule, sphere_area


def default_radii(count=1024, r_min=1e-3, r_max=1e3):
    return np.geomspace(r_min, r_max, count)


@dataclass
class RadialSnapshot:
    dimension: int
    t: float
    radii: np.ndarray
    values: np.ndarray
    gradient_values: np.ndarray | None = None
    accuracy: float = 0.0
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.radii = np.asarray(self.radii, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.radii.ndim != 1 or np.any(np.diff(self.radii) <= 0) or self.radii[0] <= 0:
            raise ContractError("radii must be positive and strictly increasing")
        if self.values.shape != self.radii.shape or not np.all(np.isfinite(self.values)):
            raise ContractError("values must be finite and match the radii")
        if self.gradient_values is not None:
            self.gradient_values = np.asarray(self.gradient_values, dtype=float)

    def gradient(self):
        """Snapshot of ``|grad g| = |g'(r)|`` (signed radial derivative)."""
        if self.gradient_values is None:
            raise ContractError("snapshot carries no gradient data")
        return RadialSnapshot(self.dimension, self.t, self.radii, self.gradient_values,
                              accuracy=self.accuracy, info=dict(self.info))


# ------------------------------------------------------------ symbol handling


def _as_symbol(fhat):
    """Return ``(callable, k_last)``; ``k_last`` is the end of sampled support."""
    if callable(fhat):
        return fhat, None
    k, f = fhat
    k = np.asarray(k, dtype=float)
    f = np.asarray(f, dtype=float)
    if k.ndim != 1 or k.shape != f.shape or np.any(np.diff(k) <= 0) or k[0] < 0:
        raise ContractError("sampled symbol needs increasing k >= 0 and matching values")
    if k[0] > 0:
        # even extension: f'(0) = 0
        spline = CubicSpline(np.concatenate([-k[::-1], k]), np.concatenate([f[::-1], f]))
    else:
        spline = CubicSpline(k, f, bc_type=((1, 0.0), "not-a-knot"))
    k_last = float(k[-1])

    def fn(x):
        x = np.asarray(x, dtype=float)
        return np.where(x <= k_last, spline(np.minimum(x, k_last)), 0.0)

    return fn, k_last


def effective_cutoff(fn, d, k_cap, rel=1e-9):
    """Largest k with ``|f(k)| k^(d-1)`` above ``rel`` times its maximum, times 1.2.

    Returns ``(k_eff, decays)``; ``decays`` is False when the weighted symbol
    is still above the threshold at ``k_cap``.
    """
    probe = np.geomspace(1e-6, k_cap, 4000)
    env = np.abs(fn(probe)) * probe ** (d - 1)
    top = float(np.max(env))
    if top == 0.0:
        return 0.0, True
    above = np.nonzero(env > rel * top)[0]
    k_hi = probe[above[-1]]
    if above[-1] == probe.size - 1:
        return float(k_cap), False
    return float(min(1.2 * k_hi, k_cap)), True


def _bands(radii, per_band=None):
    """Split radii into roughly dyadic groups."""
    n_bands = max(1, int(np.ceil(np.log2(radii[-1] / radii[0]) / 1.7)))
    edges = np.geomspace(radii[0], radii[-1] * (1 + 1e-12), n_bands + 1)
    idx = np.searchsorted(edges, radii, side="right") - 1
    idx = np.clip(idx, 0, n_bands - 1)
    return [np.nonzero(idx == b)[0] for b in range(n_bands) if np.any(idx == b)]


def _kernels(d, k, r):
    """``J_nu(kr)/(kr)^nu`` and ``J_{nu+1}(kr)/(kr)^{nu+1}`` on the outer grid."""
    x = np.outer(r, k)
    if d == 1:
        c = np.sqrt(2.0 / np.pi)
        return c * np.cos(x), c * np.sinc(x / np.pi)
    if d == 3:
        c = np.sqrt(2.0 / np.pi)
        s = np.sinc(x / np.pi)
        with np.errstate(invalid="ignore", divide="ignore"):
            second = np.where(x > 1e-3, (s - np.cos(x)) / (x * x), 1.0 / 3.0 - x * x / 30.0)
        return c * s, c * second
    nu = d / 2.0 - 1.0
    return bessel_ratio(nu, x), bessel_ratio(nu + 1.0, x)


def _transform(fn, d, radii, k_eff, k_first, refine=1, gradient=True, order=12):
    """Panel quadrature of the inverse transform for all radii."""
    g = np.zeros(radii.size)
    dg = np.zeros(radii.size)
    if k_eff <= 0:
        return g, dg
    norm = (2.0 * np.pi) ** (-d / 2.0)
    for band in _bands(radii):
        r = radii[band]
        width = np.pi / r[-1] / refine
        edges = graded_edges(min(k_first, k_eff), k_eff, width, ratio=0.05 / refine)
        k, w = panel_rule(edges, order=order)
        fk = fn(k)
        a0 = w * k ** (d - 1) * fk
        a1 = w * k ** (d + 1) * fk
        # keep each kernel block near 2M entries
        step_r = 32
        step_k = max(4096, 2_000_000 // step_r)
        for start in range(0, r.size, step_r):
            sl = slice(start, start + step_r)
            acc0 = np.zeros(r[sl].size)
            acc1 = np.zeros(r[sl].size)
            for ks in range(0, k.size, step_k):
                kl = slice(ks, ks + step_k)
                k0, k1 = _kernels(d, k[kl], r[sl])
                acc0 += k0 @ a0[kl]
                if gradient:
                    acc1 += k1 @ a1[kl]
            g[band[sl]] = norm * acc0
            if gradient:
                dg[band[sl]] = -norm * r[sl] * acc1
    return g, dg


def _tail_correction(fn, d, radii, K):
    """Endpoint asymptotics of ``int_K^inf`` for slowly decaying symbols (d = 1, 3)."""
    h = 1e-4 * max(K, 1.0)
    f0, fp, fm = fn(np.array([K, K + h, K - h]))
    df = (fp - fm) / (2 * h)
    c = (2.0 * np.pi) ** (-d / 2.0) * np.sqrt(2.0 / np.pi)
    r = radii
    if d == 3:
        # int_K^inf k sin(kr) f dk / r  with h(k) = k f(k)
        H, dH = K * f0, f0 + K * df
        val = (H * np.cos(K * r) / r - dH * np.sin(K * r) / r**2) / r
        # derivative of g: differentiate the leading term in r
        dval = -(H * K * np.sin(K * r) / r) / r - 2 * H * np.cos(K * r) / r**3
        return c * val, c * dval
    if d == 1:
        val = -f0 * np.sin(K * r) / r - df * np.cos(K * r) / r**2
        dval = -f0 * K * np.cos(K * r) / r
        return c * val, c * dval
    raise AccuracyError(f"symbol does not decay and no endpoint correction exists for d={d}")


def radial_inverse_fourier(d, fhat, radii=None, t=0.0, k_max=None, k_first=1e-3,
                           gradient=True, tol=1e-6, check=True, atol=0.0):
    """Inverse Fourier transform of a radial symbol in dimension ``d``.

    ``fhat`` is a vectorized callable of k or a pair ``(k_samples, values)``
    (cubic spline, zero beyond the last sample). The quadrature is repeated
    with halved panels on a subset of radii; AccuracyError is raised when the
    two disagree by more than ``tol`` relative to ``max|g|`` plus ``atol``.
    """
    radii = default_radii() if radii is None else np.asarray(radii, dtype=float)
    fn, k_last = _as_symbol(fhat)
    k_cap = k_max if k_max is not None else (k_last if k_last is not None else 1e4)
    k_eff, decays = effective_cutoff(fn, d, k_cap)
    g, dg = _transform(fn, d, radii, k_eff, k_first, gradient=gradient)
    corrected = False
    if not decays and k_last is None:
        tg, tdg = _tail_correction(fn, d, radii, k_eff)
        g, dg = g + tg, dg + tdg
        corrected = True
    achieved = 0.0
    if check and k_eff > 0:
        sub = radii[:: max(1, radii.size // 48)]
        g2, dg2 = _transform(fn, d, sub, k_eff, k_first / 2, refine=2, gradient=gradient)
        if corrected:
            tg, tdg = _tail_correction(fn, d, sub, k_eff)
            g2, dg2 = g2 + tg, dg2 + tdg
        g1 = g[:: max(1, radii.size // 48)]
        scale = max(float(np.max(np.abs(g))) + atol / tol, 1e-300)
        achieved = float(np.max(np.abs(g2 - g1)) / scale)
        if gradient:
            d1 = dg[:: max(1, radii.size // 48)]
            dscale = max(float(np.max(np.abs(dg))) + atol / tol, 1e-300)
            achieved = max(achieved, float(np.max(np.abs(dg2 - d1)) / dscale))
        if achieved > tol:
            raise AccuracyError(f"radial transform unresolved: relative change {achieved:.3g} "
                                f"under panel halving exceeds {tol:.3g}", achieved=achieved)
    info = {"k_eff": k_eff, "tail_corrected": corrected}
    return RadialSnapshot(d, t, radii, g, dg if gradient else None, accuracy=achieved, info=info)


# -------------------------------------------------------------------- norms


class Norms(NamedTuple):
    l1: float
    linf: float
    divergent: bool
    tail_fraction: float


def _parabolic_max(x, y, i):
    if i == 0 or i == y.size - 1:
        return float(y[i])
    y0, y1, y2 = y[i - 1], y[i], y[i + 1]
    denom = y0 - 2 * y1 + y2
    if denom >= 0:
        return float(y1)
    return float(y1 - 0.125 * (y2 - y0) ** 2 / denom)


def norms(snapshot, tail_tol=0.01):
    """L1 and L-infinity norms of a radial snapshot in its dimension.

    The L1 integral is a trapezoid rule in ``log r``. The tail estimate
    bounds the mass inside ``r_min`` (bounded profile) and outside ``r_max``
    (using the last log-slope); AccuracyError if it exceeds ``tail_tol`` of
    the integral.
    """
    d = snapshot.dimension
    r = snapshot.radii
    a = np.abs(snapshot.values)
    omega = sphere_area(d)
    integrand = a * omega * r**d
    l1 = float(np.trapezoid(integrand, np.log(r)))
    if l1 == 0.0 and np.max(a) == 0.0:
        return Norms(0.0, 0.0, False, 0.0)
    # bounded profile inside r_min: int_0^r0 |g| omega r^(d-1) dr ~ integrand(r0) / d
    inner = integrand[0] / d
    l1 += inner
    # outer tail: integrand ~ r^s beyond r_max with s from the last decade
    j = max(0, r.size - 1 - max(2, r.size // 64))
    lo, hi = integrand[j], integrand[-1]
    # without visible decay, charge one more decade at the final level
    outer = hi * np.log(10.0)
    if lo > 0 and hi > 0:
        s = np.log(hi / lo) / np.log(r[-1] / r[j])
        if s < -0.1:
            outer = hi / (-s)
    tail = float((inner + outer) / l1) if l1 > 0 else np.inf
    if tail > tail_tol:
        raise AccuracyError(f"L1 tail fraction {tail:.3g} exceeds {tail_tol}", achieved=tail)
    i = int(np.argmax(a))
    linf = _parabolic_max(np.log(r), a, i)
    m = min(4, r.size - 1)
    with np.errstate(divide="ignore"):
        slope = np.log(a[m] / a[0]) / np.log(r[m] / r[0]) if a[0] > 0 and a[m] > 0 else 0.0
    divergent = bool(i < 2 and slope < -0.5)
    return Norms(l1, linf, divergent, tail)


def snapshot_norms(snapshot, tail_tol=0.01):
    """Norms of the profile and of its gradient: ``(l1, linf, grad_l1, grad_linf)``."""
    n0 = norms(snapshot, tail_tol)
    n1 = norms(snapshot.gradient(), tail_tol)
    return n0.l1, n0.linf, n1.l1, n1.linf


def _series_at(series, t):
    """Values of a mode series at time ``t`` (linear interpolation between nodes)."""
    grid = series.grid
    pos = t / grid.dt
    k = int(np.floor(pos + 1e-9))
    if k >= grid.steps:
        if pos > grid.steps + 1e-9:
            raise ContractError(f"time {t} lies beyond the series horizon {grid.t_max}")
        return series.values[:, -1].copy()
    frac = pos - k
    if frac < 1e-9:
        return series.values[:, k].copy()
    return (1 - frac) * series.values[:, k] + frac * series.values[:, k + 1]


def mode_snapshot(series, d, t, radii=None, tol=1e-6):
    """Reconstruct the physical-space profile of a radial mode series at time t."""
    vals = _series_at(series, t)
    if np.iscomplexobj(vals):
        if np.max(np.abs(vals.imag)) > 1e-10 * max(1.0, np.max(np.abs(vals))):
            raise ContractError("radial reconstruction needs real mode data")
        vals = vals.real
    return radial_inverse_fourier(d, (series.xi, vals), radii, t=t, tol=tol)


def g_kernel_norms(resolvent, d, times, radii=None, workers=None, tol=1e-6):
    """``(t, |G|_1, |G|_inf, |grad G|_1, |grad G|_inf)`` for each requested time."""
    if resolvent.kind != "Resolvent":
        raise ContractError("expected a Resolvent series")

    def one(t):
        if not np.any(resolvent.values):
            return (float(t), 0.0, 0.0, 0.0, 0.0)
        snap = mode_snapshot(resolvent, d, t, radii, tol)
        return (float(t),) + snapshot_norms(snap)

    return ordered_map(one, list(times), workers)


def g_decay_reports(table, d):
    """Fits of the :func:`g_kernel_norms` columns against the rates
    ``-1, -(d+1), -2, -(d+2)``."""
    t = table[:, 0]
    spec = {"G_l1": (1, -1.0, 0.2), "G_linf": (2, -(d + 1.0), 0.3),
            "grad_G_l1": (3, -2.0, 0.3), "grad_G_linf": (4, -(d + 2.0), 0.4)}
    return {name: fit_decay(np.column_stack([t, table[:, c]]), target, False, tol, name)
            for name, (c, target, tol) in spec.items()}


# --------------------------------------------------------- Littlewood-Paley


def _smooth_step(x):
    """C-infinity step: 0 for x <= 0, 1 for x >= 1."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)
        b = np.where(x < 1, np.exp(-1.0 / np.where(x < 1, 1.0 - x, 1.0)), 0.0)
    return a / (a + b)


def lp_chi(s):
    """Radial bump: 1 on [1/2, 2], 0 outside (1/4, 4), smooth in between."""
    s = np.abs(np.asarray(s, dtype=float))
    up = _smooth_step((s - 0.25) / 0.25)
    down = _smooth_step((4.0 - s) / 2.0)
    return np.where(s < 1.0, up, down)


def lp_partition(s, q):
    """Normalized block ``chi_q / sum_j chi_j``; these sum to 1 for s > 0."""
    s = np.abs(np.asarray(s, dtype=float))
    total = np.zeros_like(s)
    with np.errstate(divide="ignore"):
        qc = np.floor(np.log2(np.where(s > 0, s, 1.0)))
    for off in range(-3, 4):
        total += lp_chi(s / 2.0 ** (qc + off))
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(total > 0, lp_chi(s / 2.0**q) / np.where(total > 0, total, 1.0), 0.0)
    return out


def lp_block(fhat, q, space="space", normalized=False):
    """Frequency block of a radial symbol at dyadic scale ``2^q``.

    ``fhat`` is a callable or ``(k, values)`` samples; the result has the same
    form. ``normalized`` divides by the partition sum so blocks add up to the
    symbol.
    """
    if space == "spacetime":
        raise UnsupportedError("space-time blocks are not tabulated; use space blocks")
    if space != "space":
        raise ContractError(f"unknown block space {space!r}")
    weight = (lambda s: lp_partition(s, q)) if normalized else (lambda s: lp_chi(s / 2.0**q))
    if callable(fhat):
        return lambda k: fhat(k) * weight(k)
    k, f = fhat
    k = np.asarray(k, dtype=float)
    return k, np.asarray(f) * weight(k)


def gq_block_norms(resolvent, q, t, d=3, radii=None, tol=1e-6):
    """Norms ``(l1, linf)`` of the reconstructed block ``G_q(t)``."""
    if resolvent.kind != "Resolvent":
        raise ContractError("expected a Resolvent series")
    vals = np.real(_series_at(resolvent, t))
    if not np.any(vals):
        return 0.0, 0.0
    k, block = lp_block((resolvent.xi, vals), q, normalized=True)
    fn, _ = _as_symbol((k, block))

    def sym(x):
        # restrict to the support of the block to keep the spline honest
        return fn(x) * (lp_partition(x, q) > 0)

    if radii is None:
        radii = default_radii(1024, 1e-3, max(1e3, 400.0 * 2.0**-q + 4.0 * t))
    # sup |G(t)| <= (2 pi)^-d omega_d int |G_hat| k^(d-1) dk sets the absolute floor
    bound = (2 * np.pi) ** -d * sphere_area(d) * np.trapezoid(np.abs(vals) * resolvent.xi ** (d - 1),
                                                              resolvent.xi)
    snap = radial_inverse_fourier(d, sym, radii, t=t, k_max=float(resolvent.xi[-1]),
                                  k_first=min(1e-3, 2.0**q / 8), gradient=False, tol=tol,
                                  atol=1e-3 * tol * bound)
    n = norms(snap)
    return n.l1, n.linf


def bernstein_ratio(d, q, p, radii=None):
    """``|grad u_q|_p / (2^q |u_q|_p)`` for ``u_q`` with symbol ``chi(k / 2^q)``."""
    if radii is None:
        radii = np.geomspace(1e-4, 2e3, 1536) / 2.0**q
    snap = radial_inverse_fourier(d, lambda k: lp_chi(k / 2.0**q), radii, t=0.0,
                                  k_max=4.0 * 2.0**q, k_first=2.0**q / 8)
    base = norms(snap, tail_tol=0.05)
    grad = norms(snap.gradient(), tail_tol=0.05)
    if p == 1:
        return grad.l1 / (2.0**q * base.l1)
    if p == np.inf or p == "inf":
        return grad.linf / (2.0**q * base.linf)
    raise ContractError("Bernstein ratios are tabulated for p in {1, inf}")


def riesz_ratio(d, fhat, p, radii=None):
    """``|grad (1 - Delta)^-1 u|_p / |u|_p`` for a radial symbol ``u_hat``."""
    radii = default_radii(1536, 1e-4, 2e2) if radii is None else radii
    u = radial_inverse_fourier(d, fhat, radii, gradient=False)
    e = radial_inverse_fourier(d, lambda k: fhat(k) / (1.0 + k * k), radii)
    nu = norms(u)
    ne = norms(e.gradient())
    if p == 1:
        return ne.l1 / nu.l1
    if p == np.inf or p == "inf":
        return ne.linf / nu.linf
    raise ContractError("Riesz ratios are tabulated for p in {1, inf}")


def riesz_young_bound(d):
    """``|| |grad Y| ||_1`` for the screened kernel ``Y``; bounds the operator on every L^p."""
    snap = radial_inverse_fourier(d, lambda k: 1.0 / (1.0 + k * k), default_radii(2048, 1e-5, 80.0),
                                  check=False)
    if d == 3:
        r = snap.radii
        # closed form e^{-r}(1 + r)/(4 pi r^2) avoids the r -> 0 singularity of the quadrature
        grad = np.exp(-r) * (1 + r) / (4 * np.pi * r**2)
        return float(np.trapezoid(grad * sphere_area(3) * r**3, np.log(r)))
    return norms(snap.gradient(), tail_tol=0.05).l1


# ----------------------------------------------------------------- decay fits


@dataclass
class DecayReport:
    quantity: str
    t_lo: float
    t_hi: float
    exponent: float
    constant: float
    residual: float
    residual_uncorrected: float
    residual_corrected: float
    log_correction: bool
    log_improves: bool
    target: float
    tolerance: float
    passed: bool
    samples: int

    def to_dict(self):
        return {k: (float(v) if isinstance(v, (np.floating, float)) else v)
                for k, v in self.__dict__.items()}


def _loglog_fit(t, y):
    A = np.vstack([np.log(t), np.ones_like(t)]).T
    coef, *_ = np.linalg.lstsq(A, np.log(y), rcond=None)
    resid = np.log(y) - A @ coef
    return float(coef[0]), float(coef[1]), float(np.sqrt(np.mean(resid**2)))


def fit_decay(series, target_exponent, log_correction=False, tolerance=0.2, quantity="value"):
    """Least-squares power-law exponent of ``value(t)``.

    With ``log_correction`` the values are divided by ``log(2 + t)`` first.
    Both fits are always computed so the report can say whether the
    correction lowers the residual.
    """
    data = np.asarray(series, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2 or data.shape[0] < 8:
        raise ContractError("decay fit needs at least 8 (t, value) pairs")
    t, y = data[:, 0], data[:, 1]
    if np.any(t < 1):
        raise ContractError("decay fit needs t >= 1")
    if np.any(y <= 0) or not np.all(np.isfinite(y)):
        raise ContractError("decay fit needs positive finite values")
    p0, c0, r0 = _loglog_fit(t, y)
    p1, c1, r1 = _loglog_fit(t, y / np.log(2.0 + t))
    p, c, r = (p1, c1, r1) if log_correction else (p0, c0, r0)
    return DecayReport(quantity=quantity, t_lo=float(t.min()), t_hi=float(t.max()), exponent=p,
                       constant=float(np.exp(c)), residual=r, residual_uncorrected=r0,
                       residual_corrected=r1, log_correction=bool(log_correction),
                       log_improves=bool(r1 <= r0), target=float(target_exponent),
                       tolerance=float(tolerance), passed=bool(abs(p - target_exponent) <= tolerance),
                       samples=int(t.size))
