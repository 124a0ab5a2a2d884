"""Linear response kernel, its Laplace-Fourier symbol and the Penrose margin.

With ``xi = lam e`` (``|e| = 1``) and ``z = tau - i gamma`` every quantity
reduces to the scale-free line transform

    L(zeta; e) = int_0^inf exp(-i zeta u) u mu_hat(u e) du,

through ``Ktilde(z, xi) = -L(z / lam; e) / (1 + lam^2)`` and
``K^{h,1}(tau, xi) = -L(tau / lam; e)``.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import wofz

from .equilibria import fourier_cutoff, fourier_grad_mu, line_fourier
from .errors import AccuracyError, ContractError
from .parallel import ordered_map
from .quadrature import gauss_legendre, panel_rule

_SQRT_HALF_PI = np.sqrt(np.pi / 2.0)


@dataclass(frozen=True)
class SymbolPoint:
    gamma: float
    tau: float
    xi: tuple

    def __post_init__(self):
        if not self.gamma >= 0:
            raise ContractError("Laplace abscissa gamma must be >= 0")


def _split(xi, d=None):
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    lam = float(np.sqrt(np.sum(xi * xi)))
    e = xi / lam if lam > 0 else np.eye(xi.size)[0]
    return lam, e


def khat_time(profile, t, xi):
    """Spatial Fourier transform of the response kernel K(t, .) at ``xi``.

    ``xi`` has shape ``(..., d)``; ``t`` broadcasts against the batch shape.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ContractError("khat_time requires t >= 0")
    xi = np.asarray(xi, dtype=float)
    if profile.is_zero:
        return np.zeros(np.broadcast(t, xi[..., 0]).shape)
    lam2 = np.sum(xi * xi, axis=-1)
    eta = t[..., None] * xi
    val = np.sum(1j * xi * fourier_grad_mu(profile, eta), axis=-1) / (1.0 + lam2)
    if profile.is_radial:
        return val.real
    return val


def khat_radial(profile, t, k):
    """``Khat(t, k)`` for radial profiles on the outer product of ``t`` and ``k``.

    Equals ``-t k^2 m(t k) / (1 + k^2)``.
    """
    t = np.asarray(t, dtype=float)
    k = np.asarray(k, dtype=float)
    tk = np.multiply.outer(k, t)
    return -(tk * k[:, None]) * profile.fourier_radial(tk) / (1.0 + k * k)[:, None]


def line_symbol_closed(profile, e, zeta):
    """Closed-form L(zeta; e) for Gaussian-mixture profiles (None otherwise)."""
    comps = profile.gaussian_components(e)
    if comps is None:
        return None
    zeta = np.asarray(zeta, dtype=complex)
    out = np.zeros(zeta.shape, dtype=complex)
    for c, b, th in comps:
        beta = 1j * (zeta + b) / np.sqrt(th)
        out += c / th * (1.0 - beta * _SQRT_HALF_PI * wofz(1j * beta / np.sqrt(2.0)))
    return out


def _line_quadrature(profile, e, zeta, tol, order=16, max_nodes=400_000):
    """Panel quadrature of L(zeta; e) for one complex ``zeta``.

    Returns the value and the analytic tail bound that was dropped.
    """
    damp = max(-zeta.imag, 0.0)
    freq = abs(zeta.real)
    comps = profile.gaussian_components(e)
    if comps:
        freq += max(abs(b) for _, b, _ in comps)
        shape_scale = 1.0 / np.sqrt(max(th for _, _, th in comps))
    else:
        shape_scale = 1.0
    cut = fourier_cutoff(profile, tol / 4.0)
    tail = tol / 4.0
    if damp > 0:
        # |u mu_hat| <= sup |u mu_hat|, so the damped tail is below sup * e^{-damp U} / damp
        sup = _sup_u_mu(profile, e, cut)
        u_damp = np.log(max(sup / (damp * tol / 4.0), 1.0)) / damp
        if u_damp < cut:
            cut = u_damp
            tail = sup * np.exp(-damp * cut) / damp
    width = min(np.pi / max(freq, 1e-300), 0.5 * shape_scale)
    if damp > 0:
        width = min(width, 2.0 / damp)
    n_panels = max(4, int(np.ceil(cut / width)))
    if n_panels * order > max_nodes:
        raise AccuracyError(
            f"oscillatory quadrature would need {n_panels * order} nodes (zeta={zeta})",
            achieved=np.inf,
        )
    u, w = panel_rule(np.linspace(0.0, cut, n_panels + 1), order=order)
    val = np.sum(w * np.exp(-1j * zeta * u) * u * line_fourier(profile, e, u))
    return complex(val), float(tail)


def _sup_u_mu(profile, e, cut):
    u = np.linspace(0.0, max(cut, 1e-12), 4001)
    return float(np.max(u * np.abs(line_fourier(profile, e, u)))) * 1.01 + 1e-300


def ktilde(profile, p, tol=1e-10):
    """Laplace-Fourier symbol ``Ktilde(tau - i gamma, xi)`` by panel quadrature.

    Raises AccuracyError if the dropped tail exceeds ``tol``.
    """
    if profile.is_zero:
        return 0j
    lam, e = _split(p.xi)
    if lam == 0.0:
        return 0j
    if p.gamma == 0.0 and p.tau == 0.0 and not np.isfinite(fourier_cutoff(profile, tol)):
        raise ContractError("symbol at the origin needs a decaying profile")
    zeta = complex(p.tau, -p.gamma) / lam
    val, tail = _line_quadrature(profile, e, zeta, tol)
    if tail > tol:
        raise AccuracyError(f"tail bound {tail:.3g} exceeds tolerance {tol:.3g}", achieved=tail)
    return -val / (1.0 + lam * lam)


def ktilde_closed(profile, gamma, tau, lam, e=None):
    """Vectorized closed-form symbol for Gaussian-mixture profiles."""
    if e is None:
        e = np.eye(profile.dimension)[0]
    lam = np.asarray(lam, dtype=float)
    z = np.asarray(tau, dtype=float) - 1j * np.asarray(gamma, dtype=float)
    L = line_symbol_closed(profile, e, z / lam)
    if L is None:
        raise ContractError("closed form needs a Gaussian-mixture profile")
    return -L / (1.0 + lam * lam)


def k_h1(profile, tau, xi, tol=1e-10):
    """Degree-zero homogeneous part ``K^{h,1}(tau, xi) = -L(tau/|xi|; e)``."""
    lam, e = _split(xi)
    if lam == 0.0 and tau == 0.0:
        raise ContractError("K^{h,1} is undefined at (tau, xi) = 0")
    if profile.is_zero or lam == 0.0:
        return 0j
    val, tail = _line_quadrature(profile, e, complex(tau / lam, 0.0), tol)
    if tail > tol:
        raise AccuracyError(f"tail bound {tail:.3g} exceeds tolerance", achieved=tail)
    return -val


def _line_derivatives(profile, e, s):
    """``g, g', g''`` for ``g(s) = mu_hat(s e)``."""
    comps = profile.gaussian_components(e)
    if comps is not None:
        g0 = np.zeros(s.shape, dtype=complex)
        g1 = np.zeros_like(g0)
        g2 = np.zeros_like(g0)
        for c, b, th in comps:
            base = c * np.exp(-1j * b * s - th * s * s / 2.0)
            slope = -1j * b - th * s
            g0 += base
            g1 += slope * base
            g2 += (slope * slope - th) * base
        return g0, g1, g2
    h = 1e-3
    f = [line_fourier(profile, e, s + j * h) for j in (-2, -1, 0, 1, 2)]
    g1 = (f[0] - 8 * f[1] + 8 * f[3] - f[4]) / (12 * h)
    g2 = (-f[0] + 16 * f[1] - 30 * f[2] + 16 * f[3] - f[4]) / (12 * h * h)
    return f[2], g1, g2


@dataclass
class H2Decomposition:
    p2: complex
    contraction: complex
    k_h1: complex
    expansion_residual: float
    ktilde_residual: float


def k_h2_decomposition(profile, tau, xi, tol=1e-10):
    """Second-order expansion of ``K^{h,1}`` in powers of ``1/(i tau)``.

    ``p2 = i xi . (D grad mu_hat)(0) xi`` and ``contraction`` is
    ``int exp(-i tau t) F''(t) dt`` with ``F(t) = i xi . grad mu_hat(t xi)``,
    so that ``K^{h,1} = (p2 + contraction) / (i tau)^2``. The residuals
    record how well that identity and the matching expansion of ``Ktilde``
    hold with independently computed pieces.
    """
    if tau == 0:
        raise ContractError("the expansion divides by tau; tau must be nonzero")
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    lam, e = _split(xi)
    if profile.is_zero:
        return H2Decomposition(0j, 0j, 0j, 0.0, 0.0)
    # p2 by a centred difference of the Fourier gradient at the origin
    h = 1e-4
    d = xi.size
    jac = np.zeros((d, d), dtype=complex)
    for j in range(d):
        step = np.zeros(d)
        step[j] = h
        jac[:, j] = (fourier_grad_mu(profile, step) - fourier_grad_mu(profile, -step)) / (2 * h)
    p2 = complex(1j * xi @ jac @ xi)
    # F''(t) = -lam^2 (2 lam g'(t lam) + t lam^2 g''(t lam)), g(s) = mu_hat(s e)
    if lam == 0.0:
        contraction = 0j
    else:
        cut = fourier_cutoff(profile, tol / 10.0) / lam
        width = min(np.pi / abs(tau), 0.5 / lam)
        n = max(8, int(np.ceil(cut / width)))
        t, w = panel_rule(np.linspace(0.0, cut, n + 1), order=16)
        _, g1, g2 = _line_derivatives(profile, e, t * lam)
        F2 = -lam**2 * (2 * lam * g1 + t * lam**2 * g2)
        contraction = complex(np.sum(w * np.exp(-1j * tau * t) * F2))
    kh1 = k_h1(profile, tau, xi, tol) if lam > 0 else 0j
    expansion = (p2 + contraction) / (1j * tau) ** 2
    scale = max(1.0, abs(kh1))
    kt = ktilde(profile, SymbolPoint(0.0, tau, tuple(xi)), tol) if lam > 0 else 0j
    kt_expansion = (kh1 - p2 / (1 + lam**2) - contraction / (1 + lam**2)) / (1 + lam**2 + tau**2)
    return H2Decomposition(
        p2=p2,
        contraction=contraction,
        k_h1=kh1,
        expansion_residual=float(abs(expansion - kh1) / scale),
        ktilde_residual=float(abs(kt_expansion - kt) / max(1.0, abs(kt))),
    )


# ---------------------------------------------------------------- Penrose scan


@dataclass(frozen=True)
class PenroseGrid:
    gamma_max: float = 50.0
    tau_max: float = 50.0
    xi_max: float = 20.0
    xi_min: float = 1e-3
    n: int = 48
    refine: int = 2
    refine_points: int = 17
    directions: int = 5
    winding_points: int = 4096

    def __post_init__(self):
        if self.gamma_max < 0:
            raise ContractError("gamma range must start at 0 and be nonnegative")
        if not (self.tau_max > 0 and self.xi_max > self.xi_min > 0):
            raise ContractError("tau_max and xi range must be positive")
        if self.n < 4 or self.refine < 0:
            raise ContractError("grid needs n >= 4 and refine >= 0")

    def axes(self):
        n = self.n
        # gamma: 0 plus geometric; tau: sinh-spaced and symmetric; xi: geometric
        gamma = np.concatenate([[0.0], np.geomspace(1e-3 * max(self.gamma_max, 1e-3), self.gamma_max, n - 1)]) \
            if self.gamma_max > 0 else np.array([0.0])
        s = np.linspace(-1.0, 1.0, 2 * n + 1)
        tau = self.tau_max * np.sinh(6.0 * s) / np.sinh(6.0)
        xi = np.geomspace(self.xi_min, self.xi_max, n)
        return gamma, tau, xi


@dataclass
class PenroseScan:
    grid: PenroseGrid
    margin: float
    argmin: SymbolPoint
    grid_trace: list
    tail_certificate: dict
    min_real_part: float
    winding: int
    status: str
    directions: list = field(default_factory=list)

    def to_dict(self):
        return {
            "margin": self.margin,
            "argmin": {"gamma": self.argmin.gamma, "tau": self.argmin.tau,
                       "xi": list(self.argmin.xi)},
            "tail_certificate": self.tail_certificate,
            "grid_trace": [{"level": lvl, "margin": m} for lvl, m in self.grid_trace],
            "min_real_part": self.min_real_part,
            "winding": self.winding,
            "status": self.status,
            "grid": {"gamma_max": self.grid.gamma_max, "tau_max": self.grid.tau_max,
                     "xi_max": self.grid.xi_max, "xi_min": self.grid.xi_min,
                     "n": self.grid.n, "refine": self.grid.refine},
        }


class _LineSymbol:
    """Vectorized L(zeta; e) for a fixed direction."""

    def __init__(self, profile, e, tol=1e-12):
        self.profile = profile
        self.e = e
        self.closed = profile.gaussian_components(e) is not None
        if not self.closed:
            cut = fourier_cutoff(profile, tol)
            self.cut = cut
            x, w = gauss_legendre(16)
            self.nodes_per_panel = (x, w)
            # Taylor data of g at 0 for the large-|zeta| asymptotic series
            _, _, g2 = _line_derivatives(profile, e, np.array([0.0]))
            self.g2 = complex(g2[0])

    def __call__(self, zeta):
        zeta = np.asarray(zeta, dtype=complex)
        if self.closed:
            return line_symbol_closed(self.profile, self.e, zeta)
        out = np.empty(zeta.shape, dtype=complex)
        flat = zeta.reshape(-1)
        res = out.reshape(-1)
        # integration by parts: L = (iz)^-2 + 3 g''(0) (iz)^-4 + O(|z|^-6)
        big = np.abs(flat) > 200.0
        iz = 1j * flat[big]
        res[big] = iz**-2 + 3 * self.g2 * iz**-4
        small = np.nonzero(~big)[0]
        if small.size:
            fmax = float(np.max(np.abs(flat[small].real)))
            n_panels = max(8, int(np.ceil(self.cut * max(fmax, 1.0) / np.pi)))
            u, w = panel_rule(np.linspace(0.0, self.cut, n_panels + 1), order=16)
            phi = w * u * line_fourier(self.profile, self.e, u)
            for start in range(0, small.size, 512):
                idx = small[start:start + 512]
                res[idx] = np.exp(-1j * np.outer(flat[idx], u)) @ phi
        return out


def _line_bounds(profile, e):
    """Numerical majorants used by the tail certificate.

    Returns ``A = int u|g|``, ``S = sup u|g|`` and ``B = 1 + int |phi''|`` with
    ``g(u) = mu_hat(u e)`` and ``phi(u) = u g(u)``.
    """
    cut = fourier_cutoff(profile, 1e-14)
    u, w = panel_rule(np.linspace(0.0, cut, 801), order=8)
    g0, g1, g2 = _line_derivatives(profile, e, u)
    A = float(np.sum(w * u * np.abs(g0)))
    S = float(np.max(u * np.abs(g0)))
    B = 1.0 + float(np.sum(w * np.abs(2 * g1 + u * g2)))
    return A, S, B


def tail_certificate(profile, grid, directions):
    """Check that |Ktilde| < 1/2 outside the scanned box.

    Outside the box ``|1 - Ktilde| >= 1 - |Ktilde| > 1/2``, so the infimum of
    the margin is attained (or bounded below by 1/2) inside it.
    """
    if profile.is_zero:
        return {"certified": True, "bound_xi": 0.0, "bound_gamma": 0.0, "bound_tau": 0.0,
                "threshold": 0.5, "A": 0.0, "S": 0.0, "B": 0.0, "xi_below": 0.0}
    A = S = B = 0.0
    for e in directions:
        a, s, b = _line_bounds(profile, e)
        A, S, B = max(A, a), max(S, s), max(B, b)
    # |Ktilde| <= A/(1+lam^2); <= S/(2 gamma); <= B/tau^2 (two integrations by parts)
    bound_xi = A / (1.0 + grid.xi_max**2)
    bound_gamma = S / (2.0 * grid.gamma_max) if grid.gamma_max > 0 else np.inf
    bound_tau = B / grid.tau_max**2
    # below xi_min the symbol is continuous in lam at fixed zeta; the scan
    # covers this through the smallest lam row (reported, not certified)
    worst = max(bound_xi, bound_gamma, bound_tau)
    return {"certified": bool(worst < 0.5), "bound_xi": bound_xi, "bound_gamma": bound_gamma,
            "bound_tau": bound_tau, "threshold": 0.5, "A": A, "S": S, "B": B,
            "xi_below": grid.xi_min}


def _direction_list(profile, count):
    d = profile.dimension
    if profile.is_radial or d == 1:
        return [np.eye(d)[0]] if profile.is_radial else [np.array([1.0]), np.array([-1.0])]
    # the symbol depends on e only through e_1; scan cos(angle) in [0, 1]
    out = []
    for c in np.linspace(1.0, 0.0, max(count, 2)):
        e = np.zeros(d)
        e[0] = c
        e[1] = np.sqrt(max(0.0, 1.0 - c * c))
        out.append(e)
    return out


def _margin_on(symbol, gamma, tau, lam):
    G, T, X = np.meshgrid(gamma, tau, lam, indexing="ij")
    zeta = (T - 1j * G) / X
    vals = 1.0 + symbol(zeta) / (1.0 + X * X)
    return np.abs(vals), vals


def penrose_margin(profile, scan=None, workers=None):
    """Minimum of ``|1 - Ktilde(tau - i gamma, xi)|`` over a (gamma, tau, |xi|) box.

    The coarse grid is followed by ``scan.refine`` local passes that zoom in
    on the current argmin. A winding count of ``1 - Ktilde`` along the real
    tau line at each scanned |xi| detects roots in the closed lower half
    plane that a coarse grid can step over.
    """
    scan = scan or PenroseGrid()
    directions = _direction_list(profile, scan.directions)
    cert = tail_certificate(profile, scan, directions)
    gamma, tau, lam = scan.axes()
    if profile.is_zero:
        point = SymbolPoint(0.0, 0.0, tuple(scan.xi_min * directions[0]))
        return PenroseScan(scan, 1.0, point, [(0, 1.0)], cert, 1.0, 0, "stable",
                           [list(map(float, e)) for e in directions])

    def coarse(e):
        symbol = _LineSymbol(profile, e)
        rows = ordered_map(lambda j: _margin_on(symbol, gamma, tau, lam[j:j + 1]),
                           range(lam.size), workers)
        mags = np.concatenate([r[0] for r in rows], axis=2)
        vals = np.concatenate([r[1] for r in rows], axis=2)
        return symbol, mags, vals

    best = None
    min_re = np.inf
    winding = 0
    for e in directions:
        symbol, mags, vals = coarse(e)
        idx = np.unravel_index(np.argmin(mags), mags.shape)
        min_re = min(min_re, float(np.min(vals.real[0])))
        winding = max(winding, _winding(symbol, lam, scan))
        if best is None or mags[idx] < best[0]:
            best = (float(mags[idx]), idx, e, symbol)
    margin, idx, e, symbol = best
    trace = [(0, margin)]
    axes = [gamma, tau, lam]
    g0, t0, x0 = (ax[i] for ax, i in zip(axes, idx))
    boxes = []
    for ax, i in zip(axes, idx):
        lo = ax[max(i - 1, 0)]
        hi = ax[min(i + 1, ax.size - 1)]
        boxes.append((lo, hi))
    for level in range(1, scan.refine + 1):
        local = [np.linspace(lo, hi, scan.refine_points) for lo, hi in boxes]
        if local[2][0] <= 0:
            local[2] = np.geomspace(max(boxes[2][0], scan.xi_min), boxes[2][1], scan.refine_points)
        local = [np.union1d(loc, [c]) for loc, c in zip(local, (g0, t0, x0))]
        local[0] = local[0][local[0] >= 0]
        mags, vals = _margin_on(symbol, *local)
        j = np.unravel_index(np.argmin(mags), mags.shape)
        if mags[j] <= margin:
            margin = float(mags[j])
            g0, t0, x0 = (loc[i] for loc, i in zip(local, j))
        trace.append((level, float(margin)))
        boxes = []
        for loc, i in zip(local, j):
            lo = loc[max(i - 1, 0)]
            hi = loc[min(i + 1, loc.size - 1)]
            boxes.append((lo, hi))
    argmin = SymbolPoint(float(g0), float(t0), tuple(float(c) for c in x0 * e))
    if winding != 0:
        status = "violated"
    elif margin < 0.05 or min_re <= 0.0:
        status = "marginal"
    else:
        status = "stable"
    return PenroseScan(scan, float(margin), argmin, trace, cert, float(min_re), int(winding),
                       status, [list(map(float, v)) for v in directions])


def _winding(symbol, lam, scan):
    """Largest |winding number| of ``1 - Ktilde`` around 0 along real tau."""
    s = np.linspace(-1.0, 1.0, scan.winding_points)
    worst = 0
    for x in lam:
        # zeta-space contour; 1 - Ktilde -> 1 at both ends
        zmax = max(scan.tau_max / x, 50.0)
        zeta = zmax * np.sinh(8.0 * s) / np.sinh(8.0)
        w = 1.0 + symbol(zeta.astype(complex)) / (1.0 + x * x)
        turn = np.sum(np.diff(np.unwrap(np.angle(w)))) / (2 * np.pi)
        worst = max(worst, abs(int(np.rint(turn))))
    return worst
