import numpy as np
import pytest
from scipy import integrate

from screened_landau.reconstruct import default_radii, norms
from screened_landau.transport import (GaussianPhaseDensity, field_from_density, field_from_symbol,
                                       free_source, free_source_gradient)


@pytest.mark.parametrize("t", [0.3, 4.0, 60.0])
def test_closed_form_matches_quadrature(t):
    f0 = GaussianPhaseDensity(3, 1.0, 0.8, 1.0)
    r = default_radii(48, 1e-3, 12 * (1 + t))
    c = free_source(f0, t, r, "closed")
    q = free_source(f0, t, r, "quadrature")
    assert np.max(np.abs(c.values - q.values)) < 1e-8 * np.max(c.values)
    cg, _ = free_source_gradient(f0, t, r, "closed")
    qg, _ = free_source_gradient(f0, t, r, "quadrature")
    assert np.max(np.abs(cg.values - qg.values)) < 1e-8 * np.max(np.abs(cg.values))


def test_d1_quadrature_matches_closed_form():
    f0 = GaussianPhaseDensity(1, 2.0, 1.0, 1.0)
    r = np.linspace(0.01, 40, 60)
    c = free_source(f0, 5.0, r, "closed").values
    q = free_source(f0, 5.0, r, "quadrature").values
    assert np.max(np.abs(c - q)) < 1e-10 * c.max()


def test_free_transport_bounds_hold():
    f0 = GaussianPhaseDensity(3, 1.0, 1.0, 1.0)
    for t in (1.0, 10.0, 50.0):
        _, checks = free_source_gradient(f0, t, default_radii(64, 1e-3, 100.0), "closed")
        assert checks["holds"]


def test_mass_is_conserved():
    f0 = GaussianPhaseDensity(3, 1.0, 1.0, 0.5)
    snap = free_source(f0, 7.0, default_radii(1024, 1e-3, 400.0), "closed")
    assert norms(snap).l1 == pytest.approx(0.5, rel=1e-6)


def test_screened_field_matches_yukawa_convolution():
    # Phi(r) = int rho(s) s (e^{-|r-s|} - e^{-(r+s)}) / (2 r) ds for radial rho in d = 3
    f0 = GaussianPhaseDensity(3, 1.0, 1.0, 1.0)
    probes = np.array([0.5, 1.0, 3.0, 8.0])
    radii = np.unique(np.concatenate([default_radii(128, 1e-2, 40.0), probes]))
    fld = field_from_symbol(3, f0.fourier, radii)
    rho = lambda s: f0.spatial(s)
    for r in probes:
        phi, _ = integrate.quad(lambda s: rho(s) * s * (np.exp(-abs(r - s)) - np.exp(-(r + s))) / (2 * r),
                                0, 20, points=[r], limit=200)
        assert fld.info["phi"][np.searchsorted(radii, r)] == pytest.approx(phi, rel=1e-7)
    idx = (radii > 0.5) & (radii < 8)
    k_grid = np.concatenate([[0.0], np.geomspace(1e-4, 12.0, 1500)])
    back = field_from_density(free_source(f0, 0.0, default_radii(512, 1e-3, 30.0), "closed"), k_grid, radii)
    assert np.max(np.abs(back.e[idx] - fld.e[idx])) < 1e-6 * np.max(np.abs(fld.e))
