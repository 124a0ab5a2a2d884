import numpy as np
import pytest

from screened_landau.equilibria import EquilibriumProfile
from screened_landau.errors import ContractError
from screened_landau.nonlinear import (NonlinearProblem, bootstrap_monitor, contraction_ratios,
                                       density_norms, initial_state, picard_loop, picard_step,
                                       reaction_term, relative_l2_difference, semi_lagrangian_reference,
                                       source_identity_error)
from screened_landau.periodic import PeriodicBox, PhaseGrid, RowSpline
from screened_landau.transport import GaussianPhaseDensity


@pytest.fixture(scope="module")
def small():
    grid = PhaseGrid(PeriodicBox(48.0, 48, 1), 8.0, 48)
    problem = NonlinearProblem(grid, GaussianPhaseDensity(1, 2.0, 1.0, 1e-3), EquilibriumProfile(1), 3.0, 60)
    state = picard_loop(problem, 10, 1e-10)
    return problem, state


def test_picard_converges_geometrically(small):
    _, state = small
    assert state.residual < 1e-10
    assert np.all(contraction_ratios(state.residuals)[1:] < 0.5)


def test_source_identity(small):
    _, state = small
    assert source_identity_error(state) < 1e-12


def test_frozen_trajectories_make_reactions_equal(small):
    problem, state = small
    lin, nonlin = reaction_term(state.field, problem.profile, 2.0, problem.grid, frozen=True)
    assert np.max(np.abs(lin - nonlin)) == 0.0


def test_agrees_with_semi_lagrangian_twin(small):
    problem, state = small
    sl = semi_lagrangian_reference(problem.f0, problem.profile, problem.grid, problem.t_max, problem.steps)
    assert np.max(relative_l2_difference(state.rho, sl.rho)) < 1e-3
    assert np.ptp(sl.mass) < 1e-10


def test_resume_from_state(small):
    problem, _ = small
    first = picard_step(initial_state(problem), problem)
    resumed = picard_loop(problem, 10, 1e-10, state=first)
    assert resumed.residual < 1e-10 and resumed.residuals[0] == first.residuals[0]


def test_bootstrap_monitor_breach():
    t = np.linspace(0, 10, 11)
    norms = np.tile([1e-3, 1e-3, 1e-3, 1e-3], (11, 1))
    mon = bootstrap_monitor(t, norms, 1, epsilon=0.02)
    assert np.all(np.diff(mon.N) >= 0)
    assert mon.breach_time is not None and mon.N[np.searchsorted(t, mon.breach_time)] > 0.02
    assert bootstrap_monitor(t, norms, 1).breach_time is None


def test_density_norms_of_gaussian():
    box = PeriodicBox(40.0, 128, 1)
    grid = PhaseGrid(box, 6.0, 16)
    rho = np.exp(-box.x**2 / 2)[None, :] / np.sqrt(2 * np.pi)
    n = density_norms(grid, rho)[0]
    assert n[0] == pytest.approx(1.0, rel=1e-10)
    assert n[1] == pytest.approx(1 / np.sqrt(2 * np.pi), rel=1e-3)


@pytest.mark.parametrize("d", [1, 2])
def test_row_spline_reproduces_samples_and_interpolates(d):
    box = PeriodicBox(2 * np.pi, 32, d)
    mesh = box.mesh()
    f = np.sin(mesh[0]) if d == 1 else np.sin(mesh[0]) * np.cos(mesh[1])
    sp = RowSpline(box, f[None])
    pts = np.column_stack([m.ravel() for m in mesh])
    assert np.max(np.abs(sp(np.zeros(len(pts), int), pts) - f.ravel())) < 1e-13
    rng = np.random.default_rng(0)
    q = rng.uniform(-np.pi, np.pi, (50, d))
    exact = np.sin(q[:, 0]) if d == 1 else np.sin(q[:, 0]) * np.cos(q[:, 1])
    assert np.max(np.abs(sp(np.zeros(50, int), q) - exact)) < 1e-5


def test_grid_path_rejects_d3():
    with pytest.raises(ContractError, match="supports d in"):
        PeriodicBox(10.0, 16, 3)
