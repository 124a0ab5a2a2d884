import numpy as np
import pytest

from screened_landau.errors import ContractError
from screened_landau.reconstruct import (bernstein_ratio, default_radii, fit_decay, lp_partition,
                                         norms, radial_inverse_fourier, riesz_ratio, riesz_young_bound)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_gaussian_symbol_inverts_to_gaussian(d):
    s = 1.3
    r = default_radii(256, 1e-3, 30.0)
    snap = radial_inverse_fourier(d, lambda k: np.exp(-(s * k) ** 2 / 2), r)
    exact = (2 * np.pi * s * s) ** (-d / 2) * np.exp(-r * r / (2 * s * s))
    assert np.max(np.abs(snap.values - exact)) < 1e-8 * exact.max()
    assert np.max(np.abs(snap.gradient_values + r / s**2 * exact)) < 1e-8 * exact.max()


def test_norms_of_unit_gaussian():
    r = default_radii(1024, 1e-4, 40.0)
    snap = radial_inverse_fourier(3, lambda k: np.exp(-k * k / 2), r)
    n = norms(snap)
    assert n.l1 == pytest.approx(1.0, rel=1e-6)
    assert n.linf == pytest.approx((2 * np.pi) ** -1.5, rel=1e-8)
    assert not n.divergent


def test_lp_partition_sums_to_one():
    s = np.geomspace(1e-3, 1e3, 500)
    total = sum(lp_partition(s, q) for q in range(-12, 12))
    assert np.max(np.abs(total - 1)) < 1e-12


def test_bernstein_ratio_is_scale_invariant_and_bracketed():
    vals = [bernstein_ratio(3, q, 1) for q in (-1, 0, 1)]
    assert np.ptp(vals) < 1e-6 * vals[0]
    assert 0.25 <= vals[0] <= 4.0
    assert 0.25 <= bernstein_ratio(3, 0, np.inf) <= 4.0


def test_riesz_ratio_below_young_bound():
    young = riesz_young_bound(3)
    assert young == pytest.approx(2.0, rel=1e-4)
    for p in (1, np.inf):
        assert riesz_ratio(3, lambda k: np.exp(-k * k / 2), p) <= young


def test_fit_decay_recovers_power_law():
    t = np.geomspace(10, 100, 12)
    rep = fit_decay(np.column_stack([t, 3 * t**-2.5]), -2.5, tolerance=0.01)
    assert rep.passed and rep.exponent == pytest.approx(-2.5, abs=1e-12)
    logged = fit_decay(np.column_stack([t, t**-3 * np.log(2 + t)]), -3.0, log_correction=True)
    assert logged.exponent == pytest.approx(-3.0, abs=1e-12) and logged.log_improves


def test_fit_decay_contracts():
    with pytest.raises(ContractError):
        fit_decay(np.column_stack([np.arange(1, 5), np.ones(4)]), -1)
    t = np.geomspace(0.1, 10, 10)
    with pytest.raises(ContractError):
        fit_decay(np.column_stack([t, t**-1]), -1)
