import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from screened_landau.equilibria import EquilibriumProfile
from screened_landau.errors import ContractError
from screened_landau.volterra import (ModeSeries, TimeGrid, apply_resolvent, mode_sweep, resolvent_mode,
                                      series_from_csv, series_to_csv, solve_mode_volterra, source_series)


def _constant(grid, a, kind):
    return ModeSeries(grid, [1.0], np.full(grid.steps + 1, a), kind)


def test_constant_kernel_gives_exponential():
    # rho = 1 + a * int_0^t rho  =>  rho = e^{a t}; trapezoid error O(dt^2)
    errs = []
    for steps in (50, 100, 200):
        grid = TimeGrid(2.0, steps)
        rho = solve_mode_volterra(_constant(grid, 0.8, "Kernel"), _constant(grid, 1.0, "Source"))
        errs.append(np.max(np.abs(rho.values[0] - np.exp(0.8 * grid.nodes))))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)
    assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.05)


@settings(max_examples=15, deadline=None)
@given(a=st.floats(-2, 2), b=st.floats(0, 1), c=st.floats(0, 3), steps=st.integers(8, 300))
def test_fft_matches_marching(a, b, c, steps):
    grid = TimeGrid(5.0, steps)
    t = grid.nodes
    kern = ModeSeries(grid, [0.5], a * np.exp(-b * t) * np.sin(c * t), "Kernel")
    src = ModeSeries(grid, [0.5], np.cos(c * t) + 0.5, "Source")
    fft = solve_mode_volterra(kern, src, "fft").values
    march = solve_mode_volterra(kern, src, "march").values
    assert np.max(np.abs(fft - march)) < 1e-10 * max(1.0, np.max(np.abs(march)))


def test_resolvent_identity_on_maxwellian_modes():
    grid = TimeGrid(10.0, 200)
    xi = np.geomspace(0.05, 4.0, 8)
    kern = mode_sweep(EquilibriumProfile(3), grid, xi)
    src = source_series(grid, xi, lambda t, x: np.exp(-0.3 * t) * np.cos(t) / (1 + x))
    G = resolvent_mode(kern)
    diff = solve_mode_volterra(kern, src, "march").values - apply_resolvent(G, src).values
    assert np.max(np.abs(diff)) < 5e-12


def test_csv_round_trip_is_exact():
    grid = TimeGrid(1.0, 5)
    s = ModeSeries(grid, [0.1, 2.0], np.random.default_rng(0).normal(size=(2, 6)), "Source")
    back = series_from_csv(series_to_csv(s), "Source")
    assert back.grid == grid and np.array_equal(back.xi, s.xi) and np.array_equal(back.values, s.values)


def test_contracts():
    grid = TimeGrid(1.0, 4)
    with pytest.raises(ContractError):
        ModeSeries(grid, [1.0], np.zeros(3), "Source")
    with pytest.raises(ContractError):
        solve_mode_volterra(_constant(grid, 1.0, "Source"), _constant(grid, 1.0, "Source"))
    with pytest.raises(ContractError):
        TimeGrid(-1.0, 4)
