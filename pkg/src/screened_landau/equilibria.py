"""Background velocity profiles mu(v) and their Fourier data.

Fourier convention: ``g_hat(eta) = int exp(-i v.eta) g(v) dv``. Every
evaluator takes velocities or frequencies with the vector index last, so a
batch of points has shape ``(..., d)``.
"""

from dataclasses import dataclass, field
from itertools import product
import numpy as np
import scipy.fft as sfft
from scipy.interpolate import CubicSpline

from .errors import ContractError, DomainError, UnsupportedError
from .quadrature import bessel_ratio, panel_rule, sphere_area


@dataclass(frozen=True)
class Maxwellian:
    theta: float = 1.0

    def __post_init__(self):
        if not self.theta > 0:
            raise ContractError("Maxwellian temperature must be positive")


@dataclass(frozen=True)
class BiMaxwellianBump:
    """``alpha N_theta1(v) + (1 - alpha) N_theta2(v - u e_1)``."""

    u: float
    alpha: float
    theta1: float
    theta2: float

    def __post_init__(self):
        if not self.u > 0:
            raise ContractError("bump separation u must be positive")
        if not 0.0 < self.alpha < 1.0:
            raise ContractError("mass fraction alpha must lie in (0, 1)")
        if not (self.theta1 > 0 and self.theta2 > 0):
            raise ContractError("bump temperatures must be positive")


@dataclass(frozen=True)
class TabulatedRadial:
    """Radial profile sampled at ``radii`` (starting at 0).

    ``smoothness`` is the number of bounded derivatives the caller vouches
    for; the (H1) audit refuses to run without it. ``panels`` sets the
    Gauss-Legendre panel count of the radial Fourier quadrature.
    """

    radii: tuple
    values: tuple
    smoothness: int | None = None
    panels: int = 256

    def __post_init__(self):
        r = np.asarray(self.radii, dtype=float)
        f = np.asarray(self.values, dtype=float)
        if r.ndim != 1 or r.shape != f.shape or r.size < 4:
            raise ContractError("radii and values must be matching 1-d arrays of length >= 4")
        if r[0] != 0.0 or np.any(np.diff(r) <= 0):
            raise ContractError("radii must start at 0 and increase strictly")
        if np.any(f < 0):
            raise ContractError("tabulated profile must be nonnegative")


@dataclass(frozen=True)
class ZeroProfile:
    """The trivial background mu = 0 (used for degenerate checks)."""


@dataclass(frozen=True)
class EquilibriumProfile:
    dimension: int
    kind: object = field(default_factory=Maxwellian)
    h1_weight_k: float | None = None

    def __post_init__(self):
        if int(self.dimension) != self.dimension or self.dimension < 1:
            raise ContractError("dimension must be an integer >= 1")
        if self.h1_weight_k is not None and not self.h1_weight_k > self.dimension:
            raise ContractError("the (H1) weight k must exceed the dimension")
        if isinstance(self.kind, TabulatedRadial):
            m = _tabulated_mass(self)
            if abs(m - 1.0) > 1e-6:
                raise ContractError(f"tabulated profile has mass {m:.10g}, expected 1")

    @property
    def is_radial(self):
        return not isinstance(self.kind, BiMaxwellianBump)

    @property
    def is_zero(self):
        return isinstance(self.kind, ZeroProfile)

    @property
    def mass(self):
        if self.is_zero:
            return 0.0
        if isinstance(self.kind, TabulatedRadial):
            return _tabulated_mass(self)
        return 1.0

    @property
    def velocity_scale(self):
        """A length beyond which mu is negligible, in units of thermal speed."""
        k = self.kind
        if isinstance(k, Maxwellian):
            return np.sqrt(k.theta)
        if isinstance(k, BiMaxwellianBump):
            return np.sqrt(max(k.theta1, k.theta2))
        if isinstance(k, TabulatedRadial):
            return float(k.radii[-1]) / 12.0
        return 1.0

    @property
    def velocity_extent(self):
        """Radius of a ball centred at 0 that holds all of mu to ~1e-30."""
        ext = 12.0 * self.velocity_scale
        if isinstance(self.kind, BiMaxwellianBump):
            ext += self.kind.u
        return ext

    def fourier_radial(self, k):
        """Radial Fourier profile m(k) with mu_hat(eta) = m(|eta|)."""
        if not self.is_radial:
            raise UnsupportedError("profile is not radial; use fourier_mu")
        return _radial_m(self, np.asarray(k, dtype=float))

    def gaussian_components(self, direction):
        """Weights, phase rates and temperatures of mu_hat along ``direction``.

        ``mu_hat(s e) = sum_j c_j exp(-i b_j s) exp(-theta_j s^2 / 2)``; returns
        None for profiles without that structure.
        """
        k = self.kind
        if isinstance(k, ZeroProfile):
            return []
        if isinstance(k, Maxwellian):
            return [(1.0, 0.0, k.theta)]
        if isinstance(k, BiMaxwellianBump):
            e1 = float(np.asarray(direction, dtype=float).reshape(-1)[0])
            return [(k.alpha, 0.0, k.theta1), (1.0 - k.alpha, k.u * e1, k.theta2)]
        return None


def _gauss(v, theta, d):
    r2 = np.sum(v * v, axis=-1)
    return (2.0 * np.pi * theta) ** (-d / 2.0) * np.exp(-r2 / (2.0 * theta))


def _as_points(profile, v):
    v = np.asarray(v, dtype=float)
    if v.shape[-1:] != (profile.dimension,):
        raise ContractError(f"expected trailing axis of length {profile.dimension}, got {v.shape}")
    return v


def _spline(kind):
    r = np.asarray(kind.radii, dtype=float)
    return CubicSpline(r, np.asarray(kind.values, dtype=float), bc_type=((1, 0.0), "not-a-knot"))


def _tabulated_radial_eval(profile, r, nu=0):
    kind = profile.kind
    rmax = float(kind.radii[-1])
    if np.any(r > rmax * (1 + 1e-12)):
        bad = float(np.max(r))
        raise DomainError(f"|v| = {bad:.6g} lies outside the tabulated range [0, {rmax:.6g}]", location=bad)
    return _spline(kind)(r, nu)


def _tabulated_mass(profile):
    kind = profile.kind
    d = profile.dimension
    x, w = panel_rule(np.linspace(0.0, float(kind.radii[-1]), kind.panels + 1))
    return float(sphere_area(d) * np.sum(w * x ** (d - 1) * _spline(kind)(x)))


def _radial_m(profile, k):
    kind = profile.kind
    d = profile.dimension
    if isinstance(kind, ZeroProfile):
        return np.zeros_like(k)
    if isinstance(kind, Maxwellian):
        return np.exp(-kind.theta * k * k / 2.0)
    # m(k) = (2 pi)^(d/2) int r^(d-1) (J_nu(kr)/(kr)^nu) mu(r) dr
    nu = d / 2.0 - 1.0
    r, w = panel_rule(np.linspace(0.0, float(kind.radii[-1]), kind.panels + 1))
    mu_r = _spline(kind)(r) * w * r ** (d - 1)
    flat = np.abs(k).reshape(-1)
    out = np.empty(flat.shape)
    for start in range(0, flat.size, 256):
        chunk = flat[start:start + 256]
        out[start:start + 256] = bessel_ratio(nu, np.outer(chunk, r)) @ mu_r
    return (2.0 * np.pi) ** (d / 2.0) * out.reshape(k.shape)


def eval_mu(profile, v):
    """Evaluate mu at velocities ``v`` of shape ``(..., d)``."""
    v = _as_points(profile, v)
    k = profile.kind
    d = profile.dimension
    if isinstance(k, ZeroProfile):
        return np.zeros(v.shape[:-1])
    if isinstance(k, Maxwellian):
        return _gauss(v, k.theta, d)
    if isinstance(k, BiMaxwellianBump):
        shift = np.zeros(d)
        shift[0] = k.u
        return k.alpha * _gauss(v, k.theta1, d) + (1 - k.alpha) * _gauss(v - shift, k.theta2, d)
    return _tabulated_radial_eval(profile, np.sqrt(np.sum(v * v, axis=-1)))


def grad_mu(profile, v):
    """Velocity gradient of mu, shape ``(..., d)``."""
    v = _as_points(profile, v)
    k = profile.kind
    d = profile.dimension
    if isinstance(k, ZeroProfile):
        return np.zeros(v.shape)
    if isinstance(k, Maxwellian):
        return -v / k.theta * _gauss(v, k.theta, d)[..., None]
    if isinstance(k, BiMaxwellianBump):
        shift = np.zeros(d)
        shift[0] = k.u
        w = v - shift
        return (-k.alpha * v / k.theta1 * _gauss(v, k.theta1, d)[..., None]
                - (1 - k.alpha) * w / k.theta2 * _gauss(w, k.theta2, d)[..., None])
    r = np.sqrt(np.sum(v * v, axis=-1))
    dr = _tabulated_radial_eval(profile, r, nu=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = np.where(r[..., None] > 0, v / r[..., None], 0.0)
    return dr[..., None] * unit


def fourier_mu(profile, eta):
    """Fourier transform of mu at frequencies ``eta`` of shape ``(..., d)``."""
    eta = _as_points(profile, eta)
    k = profile.kind
    if isinstance(k, BiMaxwellianBump):
        e2 = np.sum(eta * eta, axis=-1)
        return (k.alpha * np.exp(-k.theta1 * e2 / 2)
                + (1 - k.alpha) * np.exp(-1j * k.u * eta[..., 0] - k.theta2 * e2 / 2))
    return _radial_m(profile, np.sqrt(np.sum(eta * eta, axis=-1))).astype(complex)


def fourier_grad_mu(profile, eta):
    """Fourier transform of grad mu, ``i eta mu_hat(eta)``, shape ``(..., d)``."""
    eta = _as_points(profile, eta)
    return 1j * eta * fourier_mu(profile, eta)[..., None]


def line_fourier(profile, direction, s):
    """``mu_hat(s e)`` for scalar or array ``s`` along the unit vector ``e``."""
    e = np.asarray(direction, dtype=float)
    s = np.asarray(s, dtype=float)
    comps = profile.gaussian_components(e)
    if comps is None:
        return _radial_m(profile, np.abs(s)).astype(complex)
    out = np.zeros(s.shape, dtype=complex)
    for c, b, th in comps:
        out += c * np.exp(-1j * b * s - th * s * s / 2.0)
    return out


def fourier_cutoff(profile, tol):
    """Smallest s with ``int_s^inf s'|mu_hat(s' e)| ds' < tol`` (upper bound)."""
    k = profile.kind
    if isinstance(k, ZeroProfile):
        return 0.0
    if isinstance(k, (Maxwellian, BiMaxwellianBump)):
        th = k.theta if isinstance(k, Maxwellian) else min(k.theta1, k.theta2)
        # int_s^inf s e^{-th s^2/2} ds = e^{-th s^2/2}/th
        return float(np.sqrt(max(0.0, -2.0 * np.log(tol * th)) / th))
    # tabulated: scan a coarse grid of m until the weighted tail is tiny
    dr = float(np.min(np.diff(np.asarray(k.radii, dtype=float))))
    kmax = np.pi / dr
    grid = np.linspace(0.0, kmax, 2049)
    env = np.abs(_radial_m(profile, grid)) * grid
    tail = np.cumsum(env[::-1])[::-1] * (grid[1] - grid[0])
    idx = np.nonzero(tail > tol)[0]
    return float(grid[min(idx[-1] + 1, grid.size - 1)]) if idx.size else 0.0


def mass_quadrature(profile, radius_factor=12.0, panels=64):
    """Integrate mu over a ball by Gauss-Legendre panels.

    The ball radius is ``radius_factor`` thermal speeds (plus the bump
    separation for the bi-Maxwellian).
    """
    d = profile.dimension
    R = radius_factor * profile.velocity_scale
    if isinstance(profile.kind, BiMaxwellianBump):
        R += profile.kind.u
    if isinstance(profile.kind, TabulatedRadial):
        R = min(R, float(profile.kind.radii[-1]))
    if profile.is_radial:
        r, w = panel_rule(np.linspace(0.0, R, panels + 1), order=16)
        pts = np.zeros((r.size, d))
        pts[:, 0] = r
        return float(sphere_area(d) * np.sum(w * r ** (d - 1) * eval_mu(profile, pts)))
    # axisymmetric about e_1: integrate over (v1, rho) inside the ball
    v1, w1 = panel_rule(np.linspace(-R, R, 2 * panels + 1), order=16)
    if d == 1:
        return float(np.sum(w1 * eval_mu(profile, v1[:, None])))
    total = 0.0
    for a, wa in zip(v1, w1):
        rho_max = np.sqrt(max(R * R - a * a, 0.0))
        rho, wr = panel_rule(np.linspace(0.0, rho_max, panels + 1), order=16)
        pts = np.zeros((rho.size, d))
        pts[:, 0] = a
        pts[:, 1] = rho
        total += wa * np.sum(wr * sphere_area(d - 1) * rho ** (d - 2) * eval_mu(profile, pts))
    return float(total)


@dataclass
class H1Report:
    """Numerical audit of the weighted norms in (H1)."""

    k: float
    max_order: int
    grid_points: int
    half_width: float
    sup_norms: dict
    l1_norms: dict
    boundary_ratio: float
    spectral_tail: float
    finite: bool
    satisfied: bool
    message: str


def _narrowest_scale(profile):
    kind = profile.kind
    if isinstance(kind, BiMaxwellianBump):
        return np.sqrt(min(kind.theta1, kind.theta2))
    if isinstance(kind, TabulatedRadial):
        return 4.0 * float(np.min(np.diff(np.asarray(kind.radii, dtype=float))))
    return profile.velocity_scale


def _multi_indices(d, n):
    for combo in product(range(n + 1), repeat=d):
        if sum(combo) == n:
            yield combo


def verify_h1(profile, k, max_order, grid_points=None, workers=None):
    """Audit (H1): finiteness of ``<v>^k grad mu`` in W^{2,inf} and of
    ``<v>^{4d+6} grad mu`` in W^{n,1}, ``n = min(max_order, 2d+5)``.

    Derivatives are taken spectrally on a periodic box that contains the
    profile to Gaussian accuracy, so the box edge value doubles as the tail
    bound.
    """
    d = profile.dimension
    if not k > d:
        raise ContractError(f"(H1) requires k > d, got k={k}, d={d}")
    if max_order < 0:
        raise ContractError("max_order must be nonnegative")
    kind = profile.kind
    if isinstance(kind, TabulatedRadial) and (kind.smoothness is None or kind.smoothness < 3):
        raise UnsupportedError("tabulated profile lacks smoothness metadata for the (H1) audit")
    n_l1 = min(max_order, 2 * d + 5)
    if isinstance(kind, TabulatedRadial):
        n_l1 = min(n_l1, kind.smoothness - 1)
    half = profile.velocity_extent
    if isinstance(kind, TabulatedRadial):
        half = float(kind.radii[-1]) / np.sqrt(d)
    if grid_points is None:
        # a quarter of the narrowest thermal speed per cell, capped for memory
        grid_points = int(np.ceil(2.0 * half / (0.25 * _narrowest_scale(profile))))
        grid_points += grid_points % 2
        grid_points = min(grid_points, {1: 4096, 2: 512}.get(d, 128))
    h = 2.0 * half / grid_points
    axis = -half + h * np.arange(grid_points)
    mesh = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1)
    gm = grad_mu(profile, mesh)
    bracket = 1.0 + np.sum(mesh * mesh, axis=-1)
    freqs = [2.0 * np.pi * np.fft.fftfreq(grid_points, d=h)] * (d - 1)
    freqs.append(2.0 * np.pi * np.fft.rfftfreq(grid_points, d=h))
    spec_shape = [grid_points] * (d - 1) + [grid_points // 2 + 1]
    cell = h**d

    def derivative_norms(weight_power, orders, kind_of_norm):
        fields = gm * (bracket ** (weight_power / 2.0))[..., None]
        spectra = np.stack([sfft.rfftn(fields[..., c], workers=workers) for c in range(d)])
        out = {}
        for n in range(orders + 1):
            acc = 0.0
            for alpha in _multi_indices(d, n):
                symbol = np.ones(spec_shape, dtype=complex)
                for ax, a in enumerate(alpha):
                    if a:
                        shape = [1] * d
                        shape[ax] = spec_shape[ax]
                        symbol = symbol * ((1j * freqs[ax]) ** a).reshape(shape)
                vals = sfft.irfftn(symbol * spectra, s=[grid_points] * d,
                                   axes=tuple(range(1, d + 1)), workers=workers)
                if kind_of_norm == "sup":
                    acc = max(acc, float(np.max(np.abs(vals))))
                else:
                    acc += float(np.sum(np.abs(vals)) * cell)
            out[n] = acc
        return out, fields, spectra

    sup, fk, spk = derivative_norms(k, 2, "sup")
    l1, fl, spl = derivative_norms(4 * d + 6, n_l1, "l1")

    def edge_ratio(f):
        mag = np.sqrt(np.sum(f * f, axis=-1))
        edge = np.zeros(mag.shape, dtype=bool)
        for ax in range(d):
            sl = [slice(None)] * d
            sl[ax] = 0
            edge[tuple(sl)] = True
        top = float(np.max(mag))
        return float(np.max(mag[edge]) / top) if top > 0 else 0.0

    def tail(spectra):
        power = np.sum(np.abs(spectra) ** 2, axis=0)
        total = float(np.sum(power))
        if total == 0:
            return 0.0
        kmag = np.sqrt(sum(np.meshgrid(*[f**2 for f in freqs], indexing="ij")))
        return float(np.sum(power[kmag > 0.5 * np.pi / h]) / total)

    boundary = max(edge_ratio(fk), edge_ratio(fl))
    spectral = max(tail(spk), tail(spl))
    values = list(sup.values()) + list(l1.values())
    finite = all(np.isfinite(values))
    resolved = boundary < 1e-8 and spectral < 1e-6
    satisfied = finite and resolved
    if satisfied:
        message = "H1 satisfied"
    elif not finite:
        message = "H1 violated: non-finite weighted norm"
    else:
        message = "H1 inconclusive: profile not resolved on the audit grid"
    return H1Report(k=k, max_order=n_l1, grid_points=grid_points, half_width=half,
                    sup_norms=sup, l1_norms=l1, boundary_ratio=boundary,
                    spectral_tail=spectral, finite=finite, satisfied=satisfied,
                    message=message)


def profile_from_config(dimension, kind="maxwellian", theta=1.0, u=None, alpha=None,
                        theta1=None, theta2=None):
    """Build a profile from the flat configuration keys."""
    kind = kind.lower()
    if kind == "maxwellian":
        return EquilibriumProfile(dimension, Maxwellian(theta))
    if kind in ("bimaxwellian", "bimaxwellianbump", "bump"):
        return EquilibriumProfile(dimension, BiMaxwellianBump(u, alpha, theta1, theta2))
    if kind == "zero":
        return EquilibriumProfile(dimension, ZeroProfile())
    raise ContractError(f"unknown equilibrium kind {kind!r}")
