"""Nonlinear density iteration on a periodic phase grid (d = 1, 2).

The density perturbation solves ``rho = K * rho + S`` with

    S = I + R_L - R_NL,
    I(t, x)    = int f0(X_{0,t}, V_{0,t}) dv,
    R_L(t, x)  = int_0^t int E(s, x - (t - s) v) . grad mu(v) dv ds,
    R_NL(t, x) = int_0^t int E(s, X_{s,t}) . grad mu(V_{s,t}) dv ds,

where the characteristics belong to the previous iterate's field. All
three terms are evaluated from trajectories launched forward from a label
grid ``(y, w)``. Because the flow preserves phase volume, for any quantity
``q`` transported along characteristics with label values ``Q``,

    int q(t, x, v) dv = sum_w  Q(y*, w) / det(d_y X_t(y*, w)) dw,
    X_t(y*, w) = x,

so only a small root solve per velocity label is needed. R_L uses the
same code path with trajectories frozen to free streaming.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .characteristics import PeriodicFieldHistory
from .equilibria import grad_mu, eval_mu
from .errors import ContractError, StraighteningError
from .periodic import PhaseGrid, RowSpline
from .volterra import ModeSeries, TimeGrid, solve_mode_volterra
from .dispersion import khat_time


# ------------------------------------------------------------------ helpers


def _japanese(t):
    return np.sqrt(1.0 + np.asarray(t, dtype=float) ** 2)


def _spatial_axes(d, lead=1):
    return tuple(range(lead, lead + d))


def field_history_from_density(grid, times, rho):
    """Screened field ``E = -grad (1 - Delta)^{-1} rho`` for a density history.

    ``rho`` has shape ``(T,) + (n,)*d``; returns a PeriodicFieldHistory.
    """
    box = grid.box
    d = box.dimension
    axes = _spatial_axes(d)
    spec = np.fft.fftn(rho, axes=axes)
    ks = box.kgrid()
    denom = 1.0 + sum(k * k for k in ks)
    E = np.stack([np.fft.ifftn(-1j * k * spec / denom, axes=axes).real for k in ks], axis=1)
    return PeriodicFieldHistory(box, times, E)


def _wrap(y, length):
    return (y + 0.5 * length) % length - 0.5 * length


def density_norms(grid, rho):
    """``(L1, Linf, grad L1, grad Linf)`` per time for a density history."""
    box = grid.box
    d = box.dimension
    axes = _spatial_axes(d)
    cell = box.dx**d
    spec = np.fft.fftn(rho, axes=axes)
    grads = [np.fft.ifftn(1j * k * spec, axes=axes).real for k in box.kgrid()]
    gmag = np.sqrt(sum(g * g for g in grads))
    flat = rho.reshape(rho.shape[0], -1)
    gflat = gmag.reshape(rho.shape[0], -1)
    return np.column_stack([np.sum(np.abs(flat), axis=1) * cell, np.max(np.abs(flat), axis=1),
                            np.sum(gflat, axis=1) * cell, np.max(gflat, axis=1)])


def y_norm(times, rho, grid):
    """``sup_t (||r||_L1 + <t>^d ||r||_Linf)`` for a density-like history."""
    n = density_norms(grid, rho)
    return float(np.max(n[:, 0] + _japanese(times) ** grid.dimension * n[:, 1]))


# ----------------------------------------------------------- label sweeps


@dataclass
class SweepResult:
    times: np.ndarray
    initial: np.ndarray
    reaction: np.ndarray
    sup_Y: np.ndarray
    sup_W: np.ndarray
    inversion_ratio: float


class _Labels:
    def __init__(self, grid):
        self.grid = grid
        self.pos = grid.positions()
        self.vel = grid.velocities()
        self.nx = self.pos.shape[0]
        self.nvd = self.vel.shape[0]
        self.y = np.tile(self.pos, (self.nvd, 1))
        self.w = np.repeat(self.vel, self.nx, axis=0)
        self.rows = np.repeat(np.arange(self.nvd), self.nx)
        self.weight = grid.dv**grid.dimension


def _marginal(labels, t, Y, quantities):
    """Velocity integrals of transported label quantities at time t.

    ``Y`` is the position deviation ``X_t - y - t w`` on the label grid
    (None for free streaming); ``quantities`` maps names to callables
    ``q(y, w)`` or label-grid arrays.
    """
    grid = labels.grid
    box = grid.box
    d = box.dimension
    shape = (labels.nvd,) + (box.n,) * d
    base = labels.y - t * labels.w
    ratio = 0.0
    if Y is None:
        ystar = base
        jac = np.ones(base.shape[0])
    else:
        comps = [RowSpline(box, Y[:, c].reshape(shape)) for c in range(d)]
        rows = labels.rows
        ystar = base.copy()
        last = None
        breaches = 0
        for _ in range(60):
            shift = np.column_stack([s(rows, ystar) for s in comps])
            new = base - shift
            step = float(np.max(np.abs(new - ystar)))
            ystar = new
            if last is not None and last > 0 and step > 1e-15 * box.length:
                r = step / last
                ratio = max(ratio, r)
                breaches = breaches + 1 if r >= 0.5 else 0
                if breaches >= 3:
                    raise StraighteningError(
                        f"label inversion stopped contracting at t = {t:g} (ratio {r:.3g})", ratio=r)
            last = step
            if step <= 1e-14 * box.length:
                break
        J = np.zeros((base.shape[0], d, d))
        for c in range(d):
            spec = np.fft.fftn(Y[:, c].reshape(shape), axes=_spatial_axes(d))
            for a, k in enumerate(box.kgrid()):
                dYa = np.fft.ifftn(1j * k * spec, axes=_spatial_axes(d)).real
                J[:, c, a] = RowSpline(box, dYa)(rows, ystar)
        J += np.eye(d)
        jac = np.linalg.det(J)
    ywrapped = _wrap(ystar, box.length)
    out = {}
    for name, q in quantities.items():
        if callable(q):
            vals = q(ywrapped, labels.w)
        else:
            vals = RowSpline(box, np.asarray(q).reshape(shape))(labels.rows, ystar)
        out[name] = (vals / jac).reshape(labels.nvd, labels.nx).sum(axis=0) * labels.weight
    return out, ratio


def _sweep(grid, f0, profile, field, times, frozen, dt_char=None, want_initial=True):
    """Forward label trajectories through ``field``; densities at each output time."""
    labels = _Labels(grid)
    d = grid.dimension
    box = grid.box
    shape_x = (box.n,) * d
    times = np.asarray(times, dtype=float)
    T = times.size
    initial = np.zeros((T,) + shape_x)
    reaction = np.zeros((T,) + shape_x)
    supY = np.zeros(T)
    supW = np.zeros(T)
    worst = 0.0
    y, w = labels.y, labels.w
    X, V, A = y.copy(), w.copy(), np.zeros(y.shape[0])
    gmu_w = grad_mu(profile, w) if frozen else None
    if field is not None:
        dt_char = min(field.dt_field, 0.05) / 2.0 if dt_char is None else dt_char

    def rhs(s, X, V):
        if frozen:
            E = field(s, y + s * w)
            return w, 0.0, np.sum(E * gmu_w, axis=1)
        E = field(s, X)
        return V, E, np.sum(E * grad_mu(profile, V), axis=1)

    for k, t in enumerate(times):
        if k > 0 and field is not None:
            t0 = times[k - 1]
            m = max(1, int(np.ceil((t - t0) / dt_char - 1e-9)))
            h = (t - t0) / m
            for i in range(m):
                s = t0 + i * h
                k1 = rhs(s, X, V)
                k2 = rhs(s + h / 2, X + h / 2 * k1[0], V + h / 2 * k1[1])
                k3 = rhs(s + h / 2, X + h / 2 * k2[0], V + h / 2 * k2[1])
                k4 = rhs(s + h, X + h * k3[0], V + h * k3[1])
                if not frozen:
                    X = X + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
                    V = V + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
                A = A + h / 6 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        if field is None or frozen:
            Y = None
        else:
            Y = X - y - t * w
            supY[k] = float(np.max(np.abs(Y)))
            supW[k] = float(np.max(np.abs(V - w)))
        q = {"reaction": A}
        if want_initial:
            q["initial"] = lambda yy, ww: f0(yy, ww)
        vals, ratio = _marginal(labels, t, Y, q)
        worst = max(worst, ratio)
        reaction[k] = vals["reaction"].reshape(shape_x)
        if want_initial:
            initial[k] = vals["initial"].reshape(shape_x)
    return SweepResult(times, initial, reaction, supY, supW, worst)


def initial_data_term(f0, field, t, grid):
    """``I(t, x) = int f0(X_{0,t}(x, v), V_{0,t}(x, v)) dv`` on the grid."""
    times = np.array([0.0, t]) if t > 0 else np.array([0.0])
    res = _sweep(grid, f0, _null_profile(grid), field, times, frozen=False)
    return res.initial[-1]


def reaction_term(field, mu, t, grid, frozen=False):
    """``(R_L, R_NL)`` at time t; ``frozen`` forces free characteristics in R_NL."""
    times = np.array([0.0, t]) if t > 0 else np.array([0.0])
    lin = _sweep(grid, None, mu, field, times, frozen=True, want_initial=False)
    nl = _sweep(grid, None, mu, field, times, frozen=frozen, want_initial=False)
    return lin.reaction[-1], nl.reaction[-1]


def _null_profile(grid):
    from .equilibria import EquilibriumProfile, ZeroProfile

    return EquilibriumProfile(grid.dimension, ZeroProfile())


# ------------------------------------------------------------ Picard loop


@dataclass
class NonlinearProblem:
    """Perturbation ``f0`` of ``mu`` on a periodic phase grid over ``[0, t_max]``."""

    grid: PhaseGrid
    f0: object
    profile: object
    t_max: float = 20.0
    steps: int = 400
    dt_char: float | None = None

    def __post_init__(self):
        if self.profile.dimension != self.grid.dimension:
            raise ContractError("profile and grid dimensions differ")
        self.time_grid = TimeGrid(self.t_max, self.steps)
        self._kernel = None

    @property
    def times(self):
        return self.time_grid.nodes

    def kernel_modes(self):
        """Volterra kernel on the rfft modes of the box, flattened."""
        if self._kernel is None:
            box = self.grid.box
            d = box.dimension
            kk = box.k[0]
            if d == 1:
                kv = np.fft.rfftfreq(box.n, d=box.dx)[:, None] * 2 * np.pi
            else:
                kr = np.fft.rfftfreq(box.n, d=box.dx) * 2 * np.pi
                a, b = np.meshgrid(kk, kr, indexing="ij")
                kv = np.column_stack([a.ravel(), b.ravel()])
            K = khat_time(self.profile, self.times[None, :], kv[:, None, :])
            self._kernel = (kv, ModeSeries(self.time_grid, np.sqrt(np.sum(kv * kv, axis=1)), K, "Kernel"))
        return self._kernel

    def volterra(self, source):
        """Solve ``rho = K * rho + S`` mode by mode for a source history."""
        d = self.grid.dimension
        n = self.grid.box.n
        axes = _spatial_axes(d)
        kv, kernel = self.kernel_modes()
        spec = np.fft.rfftn(source, axes=axes)
        flat = np.moveaxis(spec.reshape(spec.shape[0], -1), 0, 1)
        sol = solve_mode_volterra(kernel, ModeSeries(self.time_grid, kernel.xi, flat, "Source"))
        vals = np.moveaxis(np.asarray(sol.values), 1, 0).reshape(spec.shape)
        return np.fft.irfftn(vals, s=(n,) * d, axes=axes)


@dataclass
class IterationState:
    n: int
    times: np.ndarray
    rho: np.ndarray
    field: object
    initial: np.ndarray | None = None
    reaction_linear: np.ndarray | None = None
    reaction_nonlinear: np.ndarray | None = None
    source: np.ndarray | None = None
    residual: float = np.inf
    residuals: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)


def initial_state(problem):
    shape = (problem.times.size,) + (problem.grid.box.n,) * problem.grid.dimension
    return IterationState(0, problem.times, np.zeros(shape), None)


def picard_step(state, problem):
    """One outer iteration: characteristics of E^(n) -> S^(n) -> rho^(n+1) -> E^(n+1)."""
    grid = problem.grid
    fld = state.field
    nl = _sweep(grid, problem.f0, problem.profile, fld, problem.times, frozen=False,
                dt_char=problem.dt_char)
    if fld is None:
        r_lin = np.zeros_like(nl.reaction)
    else:
        r_lin = _sweep(grid, None, problem.profile, fld, problem.times, frozen=True,
                       dt_char=problem.dt_char, want_initial=False).reaction
    source = nl.initial + r_lin - nl.reaction
    rho = problem.volterra(source)
    residual = y_norm(problem.times, rho - state.rho, grid)
    new_field = field_history_from_density(grid, problem.times, rho)
    diag = {"sup_Y": nl.sup_Y, "sup_W": nl.sup_W, "inversion_ratio": nl.inversion_ratio}
    return IterationState(state.n + 1, problem.times, rho, new_field, nl.initial, r_lin,
                          nl.reaction, source, residual, state.residuals + [residual], diag)


def source_identity_error(state):
    """``max |S - (I + (R_L - R_NL))|`` relative to ``max |S|``."""
    remainder = state.reaction_linear - state.reaction_nonlinear
    scale = max(float(np.max(np.abs(state.source))), 1e-300)
    return float(np.max(np.abs(state.source - (state.initial + remainder)))) / scale


def picard_loop(problem, max_picard=20, tol=1e-8, callback=None, state=None):
    """Iterate from ``E = 0`` until the Y-norm residual drops below ``tol``.

    A previous ``state`` resumes the iteration; ``max_picard`` counts all
    iterations including those already done.
    """
    state = initial_state(problem) if state is None else state
    if state.n > 0 and state.residual < tol:
        return state
    for _ in range(max_picard - state.n):
        state = picard_step(state, problem)
        if callback is not None:
            callback(state)
        if state.residual < tol:
            break
    return state


def contraction_ratios(residuals):
    r = np.asarray(residuals, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return r[1:] / r[:-1]


# ------------------------------------------------------- bootstrap monitor


@dataclass
class BootstrapMonitor:
    epsilon: float
    times: np.ndarray
    weighted: np.ndarray
    N: np.ndarray
    breach_time: float | None

    def to_dict(self):
        return {"epsilon": self.epsilon, "N_of_t": [float(x) for x in self.N],
                "breach_time": self.breach_time}


def bootstrap_monitor(times, norms, dimension, epsilon=np.inf):
    """Running sup of the log-weighted density functional.

    ``norms`` has columns ``(L1, Linf, grad L1, grad Linf)``; the weights are
    ``1, <s>^d, <s>, <s>^{d+1}`` divided by ``log(2 + s)``.
    """
    t = np.asarray(times, dtype=float)
    n = np.asarray(norms, dtype=float)
    j = _japanese(t)
    w = np.column_stack([np.ones_like(t), j**dimension, j, j ** (dimension + 1)])
    weighted = n * w / np.log(2.0 + t)[:, None]
    N = np.maximum.accumulate(weighted.sum(axis=1))
    over = np.nonzero(N > epsilon)[0]
    breach = float(t[over[0]]) if over.size else None
    return BootstrapMonitor(float(epsilon), t, weighted, N, breach)


# ------------------------------------------------- semi-Lagrangian twin


@dataclass
class SemiLagrangianResult:
    times: np.ndarray
    rho: np.ndarray
    mass: np.ndarray
    l2: np.ndarray
    notes: list


def semi_lagrangian_reference(f0, profile, grid, t_max, steps, substeps=1):
    """Strang-split solver for the full screened Vlasov equation.

    Half advection in x, field solve, full kick in v, half advection in x.
    Both advections are exact Fourier shifts of the grid interpolant. The
    unknown is ``g = f - mu``; the kick adds ``mu(v - E dt) - mu(v)``
    exactly. Densities are recorded at the ``steps + 1`` output times.
    """
    d = grid.dimension
    box = grid.box
    n, nv = box.n, grid.nv
    xa = _spatial_axes(d, 0)
    va = _spatial_axes(d, d)
    pos = grid.positions()
    vel = grid.velocities()
    g = f0(pos[:, None, :], vel[None, :, :]).reshape((n,) * d + (nv,) * d)
    mu_v = eval_mu(profile, vel).reshape((nv,) * d)
    dt = t_max / (steps * substeps)
    cell_x = box.dx**d
    cell_v = grid.dv**d
    kx = [k.reshape(k.shape + (1,) * d) for k in box.kgrid()]
    vgrid = [vv.reshape((1,) * d + vv.shape) for vv in _velocity_mesh(grid)]
    eta = _eta_mesh(grid)
    half_phase = np.exp(-0.5j * dt * sum(k * v for k, v in zip(kx, vgrid)))
    notes = []
    if grid.vmax * dt > 0.5 * box.length:
        notes.append("x-shift per step exceeds half the box")
    edge = np.max(np.abs(np.take(g, [0], axis=va[0])))
    if edge > 1e-12 * max(np.max(np.abs(g)), 1e-300):
        notes.append("initial data not negligible at the velocity boundary")
    for msg in notes:
        warnings.warn(msg, RuntimeWarning, stacklevel=2)

    def density(g):
        return g.sum(axis=va) * cell_v

    def advect_x(g):
        return np.fft.ifftn(np.fft.fftn(g, axes=xa) * half_phase, axes=xa).real

    def kick(g):
        rho = density(g)
        spec = np.fft.fftn(rho)
        ks = box.kgrid()
        denom = 1.0 + sum(k * k for k in ks)
        E = [np.fft.ifftn(-1j * k * spec / denom).real for k in ks]
        Eb = [e.reshape(e.shape + (1,) * d) for e in E]
        phase = np.exp(-1j * dt * sum(e * h for e, h in zip(Eb, eta)))
        shifted = np.fft.ifftn(np.fft.fftn(g, axes=va) * phase, axes=va).real
        vel_shift = vel[None, :, :] - dt * np.stack([e.ravel() for e in E], axis=1)[:, None, :]
        dmu = eval_mu(profile, vel_shift).reshape((n,) * d + (nv,) * d) - mu_v
        return shifted + dmu

    T = steps + 1
    rho = np.zeros((T,) + (n,) * d)
    mass = np.zeros(T)
    l2 = np.zeros(T)
    rho[0] = density(g)
    mass[0] = rho[0].sum() * cell_x
    l2[0] = np.sqrt(np.sum(g * g) * cell_x * cell_v)
    for k in range(1, T):
        for _ in range(substeps):
            g = advect_x(kick(advect_x(g)))
        rho[k] = density(g)
        mass[k] = rho[k].sum() * cell_x
        l2[k] = np.sqrt(np.sum(g * g) * cell_x * cell_v)
    return SemiLagrangianResult(np.linspace(0.0, t_max, T), rho, mass, l2, notes)


def _velocity_mesh(grid):
    if grid.dimension == 1:
        return [grid.v]
    return list(np.meshgrid(grid.v, grid.v, indexing="ij"))


def _eta_mesh(grid):
    d = grid.dimension
    e = grid.eta
    if d == 1:
        return [e.reshape(1, -1)]
    return [e.reshape(1, 1, -1, 1), e.reshape(1, 1, 1, -1)]


def relative_l2_difference(a, b):
    """Per-time ``||a - b||_2 / ||b||_2`` over the spatial axes."""
    a = a.reshape(a.shape[0], -1)
    b = b.reshape(b.shape[0], -1)
    return np.sqrt(np.sum((a - b) ** 2, axis=1) / np.maximum(np.sum(b * b, axis=1), 1e-300))
