"""Free-transport source terms and the screened electric field.

``S(t, x) = int f0(x - t v, v) dv`` and ``E = -grad (1 - Delta)^-1 rho``.
Radial whole-space data use closed forms or quadrature in ``(|v|, cos)``;
periodic grid data (d = 1, 2) use spectral shifts.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma as gamma_fn
from scipy.special import roots_jacobi

from .errors import ContractError, UnsupportedError
from .quadrature import bessel_ratio, panel_rule, sphere_area
from .reconstruct import RadialSnapshot, default_radii, radial_inverse_fourier
from .volterra import ModeSeries


def _gauss_radial(r, sigma, d):
    return (2.0 * np.pi * sigma**2) ** (-d / 2.0) * np.exp(-(r**2) / (2.0 * sigma**2))


@dataclass(frozen=True)
class GaussianPhaseDensity:
    """``f0(x, v) = A N_{sigma_x}(x) N_{sigma_v}(v)`` with unit-mass Gaussians."""

    dimension: int
    sigma_x: float = 1.0
    sigma_v: float = 1.0
    amplitude: float = 1.0

    def __post_init__(self):
        if self.dimension < 1 or self.sigma_x <= 0 or self.sigma_v <= 0:
            raise ContractError("Gaussian phase density needs d >= 1 and positive widths")

    def spatial(self, r):
        return self.amplitude * _gauss_radial(np.asarray(r, dtype=float), self.sigma_x, self.dimension)

    def spatial_derivative(self, r):
        r = np.asarray(r, dtype=float)
        return -r / self.sigma_x**2 * self.spatial(r)

    def velocity(self, s):
        return _gauss_radial(np.asarray(s, dtype=float), self.sigma_v, self.dimension)

    def velocity_derivative(self, s):
        s = np.asarray(s, dtype=float)
        return -s / self.sigma_v**2 * self.velocity(s)

    def __call__(self, x, v):
        """Evaluate at points with trailing axis d (x and v broadcast)."""
        rx = np.sqrt(np.sum(np.asarray(x, dtype=float) ** 2, axis=-1))
        rv = np.sqrt(np.sum(np.asarray(v, dtype=float) ** 2, axis=-1))
        return self.spatial(rx) * self.velocity(rv)

    def fourier(self, k):
        """Spatial Fourier transform of the density ``int f0 dv``."""
        k = np.asarray(k, dtype=float)
        return self.amplitude * np.exp(-((self.sigma_x * k) ** 2) / 2.0)

    def source_fourier(self, t, k):
        """``S_hat(t, k) = a_hat(k) b_hat(t k)``."""
        k = np.asarray(k, dtype=float)
        t = np.asarray(t, dtype=float)
        return self.fourier(k) * np.exp(-((self.sigma_v * t * k) ** 2) / 2.0)

    @property
    def norms(self):
        """Closed-form data norms used by the free-transport bounds."""
        d = self.dimension
        A = abs(self.amplitude)
        sv = self.sigma_v
        peak_v = (2.0 * np.pi * sv**2) ** (-d / 2.0)
        mean_speed = np.sqrt(2.0) * gamma_fn((d + 1) / 2.0) / gamma_fn(d / 2.0) * sv
        return {
            "L1": A,
            "L1x_Linfv": A * peak_v,
            "grad_v_L1": A * mean_speed / sv**2,
            "grad_v_L1x_Linfv": A * peak_v * np.exp(-0.5) / sv,
        }


@dataclass(frozen=True)
class SeparableRadial:
    """``f0(x, v) = a(|x|) b(|v|)`` with vectorized callables ``a``, ``b``.

    ``a_prime`` enables gradients; ``v_extent`` and ``x_extent`` bound the
    supports used by the quadrature.
    """

    dimension: int
    a: object
    b: object
    a_prime: object = None
    v_extent: float = 12.0
    x_extent: float = 12.0

    def __call__(self, x, v):
        rx = np.sqrt(np.sum(np.asarray(x, dtype=float) ** 2, axis=-1))
        rv = np.sqrt(np.sum(np.asarray(v, dtype=float) ** 2, axis=-1))
        return self.a(rx) * self.b(rv)

    def spatial(self, r):
        return self.a(np.asarray(r, dtype=float))

    def spatial_derivative(self, r):
        if self.a_prime is None:
            raise UnsupportedError("separable density has no spatial derivative")
        return self.a_prime(np.asarray(r, dtype=float))

    def velocity(self, s):
        return self.b(np.asarray(s, dtype=float))


@dataclass
class GridPhaseDensity:
    """Samples on a periodic x-box times a v-grid (d = 1 or 2).

    ``values`` has shape ``(nx,)*d + (nv,)*d``; ``grad_v`` optionally holds
    the velocity gradient with a trailing component axis.
    """

    box: object
    v: np.ndarray
    values: np.ndarray
    grad_v: np.ndarray | None = None

    @property
    def dimension(self):
        return self.box.dimension


# ------------------------------------------------------------- free source


def _direction_rule(d, n=96, panels=24):
    """Nodes/weights for ``int_{-1}^{1} g(c) (1 - c^2)^((d-3)/2) dc`` (d >= 2)."""
    if d == 3:
        return panel_rule(np.linspace(-1.0, 1.0, panels + 1), order=16)
    a = (d - 3) / 2.0
    x, w = roots_jacobi(n, a, a)
    return x, w


def _source_quadrature(f0, t, r, derivative=False, panels=96):
    """Direct v-quadrature of ``int f0(x - t v, v) dv`` at ``x = r e_1``."""
    d = f0.dimension
    vmax = _v_extent(f0)
    if d == 3:
        return _source_quadrature_3d(f0, t, r, vmax, derivative)
    s, ws = panel_rule(np.linspace(0.0, vmax, panels + 1), order=16)
    out = np.zeros(r.size)
    if d == 1:
        v = np.concatenate([-s[::-1], s])
        wv = np.concatenate([ws[::-1], ws])
        bv = f0.velocity(np.abs(v)) * wv
        for i, ri in enumerate(r):
            y = ri - t * v
            if derivative:
                out[i] = np.sum(f0.spatial_derivative(np.abs(y)) * np.sign(y) * bv)
            else:
                out[i] = np.sum(f0.spatial(np.abs(y)) * bv)
        return out
    c, wc = _direction_rule(d)
    area = sphere_area(d - 1)
    bs = f0.velocity(s) * ws * s ** (d - 1) * area
    for i, ri in enumerate(r):
        # |x - t v|^2 with v = s (c, sqrt(1-c^2), 0, ...)
        y2 = ri * ri + (t * s[:, None]) ** 2 - 2.0 * ri * t * s[:, None] * c[None, :]
        y = np.sqrt(np.maximum(y2, 0.0))
        if derivative:
            with np.errstate(invalid="ignore", divide="ignore"):
                proj = np.where(y > 0, (ri - t * s[:, None] * c[None, :]) / y, 0.0)
            vals = f0.spatial_derivative(y) * proj
        else:
            vals = f0.spatial(y)
        out[i] = np.sum(bs * (vals @ wc))
    return out


def _source_quadrature_3d(f0, t, r, vmax, derivative, panels=24):
    """d = 3: the angular integral becomes an integral over ``y = |x - t v|``.

    ``int_{-1}^{1} a(y) dc = (1/(r t s)) int_{|r-ts|}^{r+ts} a(y) y dy``.
    Only speeds with ``|r - t s| < x_ext`` contribute, so the speed panels
    are laid on that window; it narrows like ``1/t``.
    """
    x_ext = 12.0 * f0.sigma_x if isinstance(f0, GaussianPhaseDensity) else f0.x_extent
    yq, wq = panel_rule(np.linspace(0.0, 1.0, panels + 1), order=16)
    out = np.zeros(r.size)
    for i, ri in enumerate(r):
        s_lo = max(0.0, (ri - x_ext) / t)
        s_hi = min(vmax, (ri + x_ext) / t)
        if s_hi <= s_lo:
            continue
        s, ws = panel_rule(np.linspace(s_lo, s_hi, panels + 1), order=16)
        bs = f0.velocity(s) * ws * s * s * 2.0 * np.pi
        ts = t * s
        lo = np.abs(ri - ts)
        hi = np.minimum(ri + ts, x_ext)
        span = np.maximum(hi - lo, 0.0)
        y = lo[:, None] + span[:, None] * yq[None, :]
        wy = span[:, None] * wq[None, :]
        if derivative:
            # d/dr of the angular average: a'(y) (r^2 - t^2 s^2 + y^2) / (2 r y)
            vals = f0.spatial_derivative(y) * (ri * ri - ts[:, None] ** 2 + y * y) / (2.0 * ri)
        else:
            vals = f0.spatial(y) * y
        inner = np.sum(vals * wy, axis=1) / (ri * ts)
        out[i] = np.sum(bs * inner)
    return out


def _v_extent(f0):
    if isinstance(f0, GaussianPhaseDensity):
        return 12.0 * f0.sigma_v
    return f0.v_extent


def free_source(f0, t, radii=None, method="auto"):
    """Free-transport density ``S(t, .)``.

    Radial data: ``method`` is ``"closed"`` (Gaussian product only),
    ``"quadrature"`` (direct v-integral) or ``"auto"``. Grid data: returns
    an array on the x-grid computed by exact spectral shifts.
    """
    if t < 0:
        raise ContractError("free_source requires t >= 0")
    if isinstance(f0, GridPhaseDensity):
        return _grid_free_source(f0, t)
    radii = default_radii(256, 1e-3, 60.0 + 12.0 * t) if radii is None else np.asarray(radii, dtype=float)
    d = f0.dimension
    if method == "auto":
        method = "closed" if isinstance(f0, GaussianPhaseDensity) else "quadrature"
    if method == "closed":
        if not isinstance(f0, GaussianPhaseDensity):
            raise UnsupportedError("closed form needs Gaussian factors")
        sig = np.sqrt(f0.sigma_x**2 + (t * f0.sigma_v) ** 2)
        vals = f0.amplitude * _gauss_radial(radii, sig, d)
        grads = -radii / sig**2 * vals
        return RadialSnapshot(d, t, radii, vals, grads, info={"method": "closed"})
    if method == "quadrature":
        vals = _source_quadrature(f0, t, radii) if t > 0 else f0.spatial(radii)
        return RadialSnapshot(d, t, radii, vals, info={"method": "quadrature"})
    raise ContractError(f"unknown method {method!r}")


def free_source_gradient(f0, t, radii=None, method="auto"):
    """Radial derivative of ``S(t, .)`` with its free-transport bounds.

    Returns ``(snapshot, checks)``; ``checks`` compares the L1 and L-infinity
    norms against ``|grad_v f0|_{L1} / t`` and
    ``|grad_v f0|_{L1_x Linf_v} / t^(d+1)``.
    """
    if isinstance(f0, GridPhaseDensity):
        grad = _grid_free_source_gradient(f0, t)
        if f0.grad_v is None:
            raise UnsupportedError("grid density carries no velocity derivative")
        return grad, _grid_gradient_checks(f0, grad, t)
    d = f0.dimension
    if method == "auto":
        method = "closed" if isinstance(f0, GaussianPhaseDensity) else "quadrature"
    if method == "closed":
        snap = free_source(f0, t, radii, "closed").gradient()
    elif method == "quadrature":
        radii = default_radii(256, 1e-3, 60.0 + 12.0 * t) if radii is None else np.asarray(radii, dtype=float)
        vals = _source_quadrature(f0, t, radii, derivative=True) if t > 0 else f0.spatial_derivative(radii)
        snap = RadialSnapshot(d, t, radii, vals, info={"method": "quadrature"})
    else:
        raise ContractError(f"unknown method {method!r}")
    checks = {}
    if isinstance(f0, GaussianPhaseDensity) and t > 0:
        from .reconstruct import norms

        # norms on a grid wide enough for the tail, independent of ``radii``
        n = norms(free_source(f0, t, default_radii(2048, 1e-3, 40.0 * (f0.sigma_x + t * f0.sigma_v)),
                              "closed").gradient())
        data = f0.norms
        checks = {
            "l1": n.l1,
            "l1_bound": data["grad_v_L1"] / t,
            "linf": n.linf,
            "linf_bound": data["grad_v_L1x_Linfv"] / t ** (d + 1),
        }
        checks["holds"] = bool(checks["l1"] <= checks["l1_bound"] * (1 + 1e-9)
                               and checks["linf"] <= checks["linf_bound"] * (1 + 1e-9))
    return snap, checks


def source_modes(f0, grid, xi):
    """Source series ``S_hat(t_k, |xi|)`` for radial linear studies."""
    if not isinstance(f0, GaussianPhaseDensity):
        raise UnsupportedError("Fourier-side sources are tabulated for Gaussian data only")
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    vals = f0.source_fourier(grid.nodes[None, :], xi[:, None])
    return ModeSeries(grid, xi, vals, "Source")


# ------------------------------------------------------------ screened field


@dataclass
class FieldSnapshot:
    """Radial field ``E(x) = e(r) x / r`` (or grid components).

    ``grad_bound`` is ``max(|e'|, |e| / r)``, the pointwise operator norm of
    ``grad E`` for a radial gradient field.
    """

    t: float
    radii: np.ndarray | None
    e: np.ndarray
    grad_bound: np.ndarray | None = None
    info: dict = field(default_factory=dict)


def radial_forward_fourier(snapshot, k):
    """``f_hat(k)`` of a radial snapshot by trapezoid quadrature in ``log r``."""
    d = snapshot.dimension
    r = snapshot.radii
    k = np.asarray(k, dtype=float)
    lr = np.log(r)
    w = np.gradient(lr)
    w[0] = w[-1] = 0.5 * (lr[1] - lr[0])
    base = snapshot.values * r**d * w
    nu = d / 2.0 - 1.0
    out = np.empty(k.shape)
    flat = k.reshape(-1)
    res = out.reshape(-1)
    for start in range(0, flat.size, 128):
        kk = flat[start:start + 128]
        res[start:start + 128] = bessel_ratio(nu, np.outer(kk, r)) @ base
    # bounded profile inside r_min contributes ~ f(r0) r0^d / d
    inner = snapshot.values[0] * r[0] ** d / d
    return (2.0 * np.pi) ** (d / 2.0) * (out + inner)


def field_from_density(rho, k_grid=None, radii=None):
    """Screened field ``E = -grad (1 - Delta)^-1 rho``.

    ``rho`` is a radial snapshot; it is transformed forward, multiplied by
    ``1 / (1 + k^2)`` and transformed back with the radial derivative.
    """
    if not isinstance(rho, RadialSnapshot):
        raise ContractError("pass a RadialSnapshot, or use field_from_symbol / field_from_grid_density")
    if k_grid is None:
        k_grid = np.concatenate([[0.0], np.geomspace(1e-4, 40.0 / max(rho.radii[0], 0.05), 1500)])
    rho_hat = radial_forward_fourier(rho, k_grid)
    radii = rho.radii if radii is None else radii
    return field_from_symbol(rho.dimension, (k_grid, rho_hat), radii, rho.t)


def field_from_symbol(d, rho_hat, radii=None, t=0.0, tol=1e-6):
    """Screened field from a radial density symbol (callable or samples)."""
    from .reconstruct import _as_symbol

    fn, k_last = _as_symbol(rho_hat)
    radii = default_radii() if radii is None else np.asarray(radii, dtype=float)
    phi = radial_inverse_fourier(d, lambda k: fn(k) / (1.0 + k * k), radii, t=t,
                                 k_max=k_last, tol=tol)
    rho = radial_inverse_fourier(d, fn, radii, t=t, k_max=k_last, gradient=False, tol=tol)
    e = -phi.gradient_values
    # Phi'' = (Phi - rho) - (d-1) Phi'/r, and e' = -Phi''
    phi2 = (phi.values - rho.values) - (d - 1) * phi.gradient_values / radii
    grad_bound = np.maximum(np.abs(phi2), np.abs(e) / radii)
    return FieldSnapshot(t, radii, e, grad_bound, info={"phi": phi.values, "rho": rho.values})


# -------------------------------------------------------------- grid paths


def _grid_free_source(f0, t):
    box = f0.box
    d = box.dimension
    v = f0.v
    dv = v[1] - v[0]
    spec = box.fft(f0.values, axes=tuple(range(d)))
    if d == 1:
        phase = np.exp(-1j * np.outer(box.k[0], t * v))
        return box.ifft(np.sum(spec * phase, axis=-1) * dv, axes=(0,)).real
    k1, k2 = box.k
    out = np.zeros(spec.shape[:2], dtype=complex)
    for j, vy in enumerate(v):
        ph_y = np.exp(-1j * k2[None, :] * t * vy)
        for i, vx in enumerate(v):
            out += spec[:, :, i, j] * np.exp(-1j * k1[:, None] * t * vx) * ph_y
    return box.ifft(out * dv * dv, axes=(0, 1)).real


def _grid_free_source_gradient(f0, t):
    S = _grid_free_source(f0, t)
    return f0.box.gradient(S)


def _grid_gradient_checks(f0, grad, t):
    box = f0.box
    d = box.dimension
    gv = np.sqrt(np.sum(f0.grad_v**2, axis=-1))
    cell_x = box.dx**d
    cell_v = (f0.v[1] - f0.v[0]) ** d
    l1_v = float(np.sum(gv) * cell_x * cell_v)
    vaxes = tuple(range(d, 2 * d))
    l1x_linfv = float(np.sum(np.max(gv, axis=vaxes)) * cell_x)
    mag = np.sqrt(np.sum(grad**2, axis=0))
    return {"l1": float(np.sum(mag) * cell_x), "l1_bound": l1_v / t if t > 0 else np.inf,
            "linf": float(np.max(mag)), "linf_bound": l1x_linfv / t ** (d + 1) if t > 0 else np.inf}


def field_from_grid_density(box, rho):
    """Spectral screened field on a periodic grid; returns ``(E components, grad E)``."""
    d = box.dimension
    rh = box.fft(rho, axes=tuple(range(d)))
    ks = box.kgrid()
    denom = 1.0 + sum(k * k for k in ks)
    E = np.stack([box.ifft(-1j * k * rh / denom, axes=tuple(range(d))).real for k in ks])
    gradE = np.stack([[box.ifft(k_i * k_j * rh / denom, axes=tuple(range(d))).real for k_j in ks]
                      for k_i in ks])
    return E, gradE
