"""Linearized evolution of radial perturbations in whole space.

The density modes solve ``rho = S + K * rho`` with the free-transport
source of a radial phase density; physical-space profiles, their norms and
the self-consistent field history come from the radial inverse transform.
"""

from dataclasses import dataclass

import numpy as np

from .characteristics import RadialFieldHistory
from .errors import ContractError
from .parallel import ordered_map
from .reconstruct import _series_at, default_radii, fit_decay, mode_snapshot, snapshot_norms
from .transport import field_from_symbol, source_modes
from .volterra import TimeGrid, default_modes, mode_sweep, solve_mode_volterra


@dataclass
class LinearRun:
    profile: object
    f0: object
    grid: TimeGrid
    kernel: object
    source: object
    density: object


def linear_evolve(profile, f0, t_max=100.0, steps=2000, modes=None, method="fft", workers=None):
    """Density modes of the linearized problem on ``[0, t_max]``."""
    if not profile.is_radial:
        raise ContractError("the whole-space linear path needs a radial equilibrium")
    if f0.dimension != profile.dimension:
        raise ContractError("initial data and equilibrium dimensions differ")
    grid = TimeGrid(t_max, steps)
    xi = default_modes() if modes is None else np.asarray(modes, dtype=float)
    kernel = mode_sweep(profile, grid, xi, workers=workers)
    source = source_modes(f0, grid, xi)
    density = solve_mode_volterra(kernel, source, method=method)
    return LinearRun(profile, f0, grid, kernel, source, density)


def density_norm_table(run, times, radii=None, workers=None, tol=1e-6):
    """Rows ``(t, |rho|_1, |rho|_inf, |grad rho|_1, |grad rho|_inf)``."""
    d = run.profile.dimension

    def one(t):
        snap = mode_snapshot(run.density, d, t, radii, tol)
        return (float(t),) + snapshot_norms(snap)

    return np.array(ordered_map(one, list(times), workers))


def density_decay_reports(table, d, log_correction=True):
    """Power-law fits of the density norms against their theorem rates."""
    t = table[:, 0]
    spec = {
        "rho_linf": (2, -float(d), 0.25),
        "grad_rho_linf": (4, -float(d + 1), 0.35),
        "grad_rho_l1": (3, -1.0, 0.3),
    }
    return {name: fit_decay(np.column_stack([t, table[:, col]]), target, log_correction,
                            tol, quantity=name)
            for name, (col, target, tol) in spec.items()}


def radial_field_history(run, dt_field=0.5, radii=None, t_max=None, tol=1e-6, workers=None):
    """Self-consistent field ``e(t, r)`` of a linear run on a uniform time grid."""
    d = run.profile.dimension
    t_max = run.grid.t_max if t_max is None else t_max
    n = int(round(t_max / dt_field))
    if n < 1 or abs(n * dt_field - t_max) > 1e-9 * t_max:
        raise ContractError("dt_field must divide the horizon")
    times = dt_field * np.arange(n + 1)
    radii = default_radii(768, 1e-2, 400.0) if radii is None else np.asarray(radii, dtype=float)
    xi = run.density.xi

    def one(t):
        vals = np.asarray(_series_at(run.density, t)).real
        return field_from_symbol(d, (xi, vals), radii, t=t, tol=tol).e

    e = np.array(ordered_map(one, list(times), workers))
    return RadialFieldHistory(d, times, radii, e)
