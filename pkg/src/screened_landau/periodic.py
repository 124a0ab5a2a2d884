"""Periodic boxes used as whole-space surrogates in d = 1, 2."""

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import spline_filter1d

from .errors import ContractError


@dataclass(frozen=True)
class PeriodicBox:
    """``[-L/2, L/2)^d`` with ``n`` points per axis."""

    length: float
    n: int
    dimension: int = 1

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise ContractError("nonlinear grid path supports d in {1, 2}")
        if self.length <= 0 or self.n < 4:
            raise ContractError("periodic box needs a positive length and n >= 4")

    @property
    def dx(self):
        return self.length / self.n

    @property
    def x(self):
        return -0.5 * self.length + self.dx * np.arange(self.n)

    @property
    def k(self):
        """Angular wavenumbers per axis."""
        kk = 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.dx)
        return [kk] * self.dimension

    def kgrid(self):
        """Broadcastable wavenumber arrays, one per axis."""
        kk = self.k[0]
        if self.dimension == 1:
            return [kk]
        return [kk[:, None], kk[None, :]]

    def mesh(self):
        if self.dimension == 1:
            return [self.x]
        return list(np.meshgrid(self.x, self.x, indexing="ij"))

    def fft(self, a, axes=None):
        axes = tuple(range(self.dimension)) if axes is None else axes
        return np.fft.fftn(a, axes=axes)

    def ifft(self, a, axes=None):
        axes = tuple(range(self.dimension)) if axes is None else axes
        return np.fft.ifftn(a, axes=axes)

    def gradient(self, a):
        """Spectral gradient of a field on the grid, stacked on axis 0."""
        spec = self.fft(a)
        return np.stack([self.ifft(1j * k * spec).real for k in self.kgrid()])

    def integrate(self, a):
        return float(np.sum(a) * self.dx**self.dimension)


@dataclass(frozen=True)
class PhaseGrid:
    """Periodic box in x times a periodic velocity grid on ``[-vmax, vmax)^d``."""

    box: PeriodicBox
    vmax: float = 8.0
    nv: int = 256

    def __post_init__(self):
        if self.vmax <= 0 or self.nv < 4:
            raise ContractError("velocity grid needs vmax > 0 and nv >= 4")

    @property
    def dimension(self):
        return self.box.dimension

    @property
    def dv(self):
        return 2.0 * self.vmax / self.nv

    @property
    def v(self):
        return -self.vmax + self.dv * np.arange(self.nv)

    @property
    def eta(self):
        return 2.0 * np.pi * np.fft.fftfreq(self.nv, d=self.dv)

    def velocities(self):
        """Velocity labels as an ``(nv**d, d)`` array, first axis fastest last."""
        if self.dimension == 1:
            return self.v[:, None]
        a, b = np.meshgrid(self.v, self.v, indexing="ij")
        return np.column_stack([a.ravel(), b.ravel()])

    def positions(self):
        """Grid points as an ``(n**d, d)`` array."""
        return np.column_stack([m.ravel() for m in self.box.mesh()])


def _inner5(x):
    x2 = x * x
    return 11.0 / 20 + x2 * (-0.5 + x2 * (0.25 - x / 12))


def _mid5(x):
    return 17.0 / 40 + x * (5.0 / 8 + x * (-7.0 / 4 + x * (5.0 / 4 + x * (-3.0 / 8 + x / 24))))


class RowSpline:
    """Periodic quintic B-spline interpolants of a stack of grid functions.

    ``values`` has shape ``(R,) + (n,)*d``; ``__call__(rows, points)``
    evaluates function ``rows[m]`` at ``points[m]``. Interpolation
    reproduces the samples exactly.
    """

    def __init__(self, box, values):
        self.box = box
        coef = np.asarray(values, dtype=float)
        for ax in range(1, box.dimension + 1):
            coef = spline_filter1d(coef, order=5, axis=ax, mode="grid-wrap")
        pad = [(0, 0)] + [(2, 3)] * box.dimension
        self.coef = np.pad(coef, pad, mode="wrap")

    def _weights(self, u):
        i0 = np.floor(u).astype(np.int64)
        f = u - i0
        idx = (i0 % self.box.n)[:, None] + np.arange(6)[None, :]
        g = 1.0 - f
        w = np.empty((u.size, 6))
        g2 = g * g
        f2 = f * f
        w[:, 0] = g * g2 * g2 / 120
        w[:, 5] = f * f2 * f2 / 120
        w[:, 2] = _inner5(f)
        w[:, 3] = _inner5(g)
        w[:, 1] = _mid5(1.0 + f)
        w[:, 4] = _mid5(1.0 + g)
        return idx, w

    def __call__(self, rows, points):
        points = np.asarray(points, dtype=float).reshape(len(rows), -1)
        u = (points - self.box.x[0]) / self.box.dx
        idx0, w0 = self._weights(u[:, 0])
        rows = np.asarray(rows)[:, None]
        if self.box.dimension == 1:
            return np.sum(w0 * self.coef[rows, idx0], axis=1)
        idx1, w1 = self._weights(u[:, 1])
        out = np.zeros(len(points))
        for a in range(6):
            out += w0[:, a] * np.sum(w1 * self.coef[rows, idx0[:, a:a + 1], idx1], axis=1)
        return out
