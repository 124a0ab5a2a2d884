import numpy as np
import pytest

from screened_landau.dispersion import PenroseGrid, khat_radial, khat_time, penrose_margin
from screened_landau.equilibria import BiMaxwellianBump, EquilibriumProfile, Maxwellian
from screened_landau.errors import ContractError


def test_kernel_formula_for_maxwellian():
    mu = EquilibriumProfile(3, Maxwellian(1.0))
    t = np.linspace(0, 5, 11)
    k = 0.7
    expected = -t * k**2 * np.exp(-((t * k) ** 2) / 2) / (1 + k**2)
    xi = np.array([k, 0.0, 0.0])
    assert np.allclose(khat_time(mu, t[:, None], xi[None, :]).ravel(), expected, atol=1e-15)
    assert np.allclose(khat_radial(mu, t, np.array([k]))[0], expected, atol=1e-15)


def test_kernel_vanishes_at_t0_and_k0():
    mu = EquilibriumProfile(3)
    assert np.all(khat_radial(mu, np.array([0.0]), np.array([0.1, 1.0, 5.0])) == 0)
    assert np.all(khat_radial(mu, np.linspace(0, 10, 5), np.array([0.0])) == 0)


def test_maxwellian_margin_positive_and_grid_stable():
    mu = EquilibriumProfile(3)
    a = penrose_margin(mu, PenroseGrid(n=24))
    b = penrose_margin(mu, PenroseGrid(n=48))
    assert a.margin > 0 and b.status == "stable" and b.winding == 0
    assert abs(a.margin - b.margin) / b.margin < 0.02
    report = b.to_dict()
    for key in ("margin", "argmin", "tail_certificate", "grid_trace"):
        assert key in report


def test_two_stream_flagged():
    mu = EquilibriumProfile(3, BiMaxwellianBump(2.0, 0.5, 0.04, 0.04))
    scan = penrose_margin(mu, PenroseGrid(n=32))
    assert scan.margin < 0.05 or scan.winding != 0
    assert scan.status in ("marginal", "violated")


def test_margin_monotone_in_temperature_is_not_assumed_but_positive():
    for theta in (0.5, 2.0):
        assert penrose_margin(EquilibriumProfile(3, Maxwellian(theta)), PenroseGrid(n=24)).margin > 0


def test_bad_grid_rejected():
    with pytest.raises(ContractError):
        PenroseGrid(n=2)
