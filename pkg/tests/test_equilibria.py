import numpy as np
import pytest
from scipy import integrate

from screened_landau.equilibria import (BiMaxwellianBump, EquilibriumProfile, Maxwellian, ZeroProfile,
                                        eval_mu, fourier_mu, grad_mu, profile_from_config)
from screened_landau.errors import ContractError


def test_maxwellian_unit_mass_d1():
    mu = EquilibriumProfile(1, Maxwellian(0.7))
    m, _ = integrate.quad(lambda v: eval_mu(mu, np.array([[v]]))[0], -np.inf, np.inf)
    assert m == pytest.approx(1.0, abs=1e-12)


def test_maxwellian_fourier_matches_quadrature_d1():
    mu = EquilibriumProfile(1, Maxwellian(1.3))
    for eta in (0.0, 0.4, 1.7):
        ref, _ = integrate.quad(lambda v: np.cos(eta * v) * eval_mu(mu, np.array([[v]]))[0], -40, 40,
                                limit=200)
        assert fourier_mu(mu, np.array([[eta]]))[0].real == pytest.approx(ref, abs=1e-12)


@pytest.mark.parametrize("kind", [Maxwellian(0.8), BiMaxwellianBump(2.0, 0.4, 0.3, 0.5)])
def test_gradient_matches_finite_differences(kind):
    mu = EquilibriumProfile(3, kind)
    rng = np.random.default_rng(1)
    v = rng.normal(size=(20, 3))
    h = 1e-6
    fd = np.stack([(eval_mu(mu, v + h * e) - eval_mu(mu, v - h * e)) / (2 * h) for e in np.eye(3)], -1)
    assert np.max(np.abs(fd - grad_mu(mu, v))) < 1e-8


def test_bump_fourier_carries_the_shift_phase():
    kind = BiMaxwellianBump(2.0, 0.5, 0.04, 0.04)
    mu = EquilibriumProfile(1, kind)
    eta = np.array([[0.9]])
    ref_re, _ = integrate.quad(lambda v: np.cos(0.9 * v) * eval_mu(mu, np.array([[v]]))[0], -10, 10,
                               points=[0.0, 2.0], limit=400)
    ref_im, _ = integrate.quad(lambda v: -np.sin(0.9 * v) * eval_mu(mu, np.array([[v]]))[0], -10, 10,
                               points=[0.0, 2.0], limit=400)
    val = fourier_mu(mu, eta)[0]
    assert val.real == pytest.approx(ref_re, abs=1e-10)
    assert val.imag == pytest.approx(ref_im, abs=1e-10)


def test_zero_profile_is_identically_zero():
    mu = EquilibriumProfile(2, ZeroProfile())
    v = np.ones((4, 2))
    assert mu.is_zero and mu.mass == 0.0
    assert not np.any(eval_mu(mu, v)) and not np.any(grad_mu(mu, v))


def test_invalid_parameters_rejected():
    with pytest.raises(ContractError):
        Maxwellian(-1.0)
    with pytest.raises(ContractError):
        BiMaxwellianBump(2.0, 1.5, 0.1, 0.1)
    with pytest.raises(ContractError):
        EquilibriumProfile(0)


def test_profile_from_config():
    assert profile_from_config(3).kind == Maxwellian(1.0)
    bump = profile_from_config(1, "bump", u=2.0, alpha=0.5, theta1=0.1, theta2=0.2)
    assert isinstance(bump.kind, BiMaxwellianBump) and not bump.is_radial
