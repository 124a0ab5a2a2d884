import numpy as np
import pytest

from screened_landau import characteristics as ch
from screened_landau.errors import DomainError, StraighteningError
from screened_landau.periodic import PeriodicBox


def _points(d, n=16, seed=0):
    rng = np.random.default_rng(seed)
    return rng.uniform(-3, 3, (n, d)), rng.uniform(-2, 2, (n, d))


@pytest.mark.parametrize("d", [1, 2, 3])
def test_zero_field_is_free_streaming(d):
    x, v = _points(d)
    fm = ch.flow(ch.zero_field(d), 0.5, 3.0, x, v)
    assert np.max(np.abs(fm.Y)) < 1e-13 and np.max(np.abs(fm.W)) == 0.0
    assert np.array_equal(ch.straighten(ch.zero_field(d), 0.5, 3.0, x, v).psi, v)


def test_constant_field_closed_forms():
    e0 = np.array([0.1, -0.05, 0.2])
    x, v = _points(3)
    s, t = 1.0, 7.0
    fm = ch.flow(ch.constant_field(e0), s, t, x, v)
    assert np.max(np.abs(fm.Y - e0 * (t - s) ** 2 / 2)) < 1e-12
    assert np.max(np.abs(fm.W + e0 * (t - s))) < 1e-12
    st = ch.straighten(ch.constant_field(e0), s, t, x, v)
    assert np.max(np.abs(st.psi - v - e0 * (t - s) / 2)) < 1e-12


@pytest.mark.parametrize("method", ["rk4", "verlet"])
def test_volume_preservation(method):
    fld = ch.CallableField(1, lambda t, x: 0.3 * np.sin(x) * np.exp(-0.2 * t))
    x, v = _points(1, 30)
    fm = ch.flow(fld, 0.0, 5.0, x, v, jacobian=True, method=method)
    assert np.max(np.abs(fm.determinant - 1)) < 1e-6


def test_group_property():
    fld = ch.CallableField(2, lambda t, x: 0.2 * np.cos(x[..., ::-1]) / (1 + t))
    x, v = _points(2)
    Xu, Vu = ch.characteristics(fld, 1.5, 4.0, x, v)
    Xs, Vs = ch.characteristics(fld, 0.0, 1.5, Xu, Vu)
    Xd, Vd = ch.characteristics(fld, 0.0, 4.0, x, v)
    assert np.max(np.abs(Xs - Xd)) < 1e-10 and np.max(np.abs(Vs - Vd)) < 1e-10


def test_straightening_inverts_the_flow():
    fld = ch.CallableField(1, lambda t, x: 0.05 * np.sin(x))
    x, v = _points(1, 40)
    st = ch.straighten(fld, 0.0, 4.0, x, v, det=True)
    X, _ = ch.characteristics(fld, 0.0, 4.0, x, st.psi)
    assert np.max(np.abs(X - (x - 4.0 * v))) < 1e-10
    assert st.converged_fraction == 1.0
    assert np.all((st.det_grad_psi > 0.5) & (st.det_grad_psi < 1.5))
    assert all(r < 0.5 for r in st.ratios)


def test_straightening_failure_is_reported():
    fld = ch.CallableField(1, lambda t, x: 40.0 * np.sin(3 * x))
    x, v = _points(1, 40)
    with pytest.raises(StraighteningError):
        ch.straighten(fld, 0.0, 10.0, x, v)


def test_radial_history_domain():
    radii = np.geomspace(0.01, 10, 50)
    e = np.tile(np.exp(-radii), (3, 1))
    fld = ch.RadialFieldHistory(3, np.array([0.0, 1.0, 2.0]), radii, e)
    val = fld(0.5, np.array([[1.0, 0.0, 0.0]]))
    assert val[0, 0] == pytest.approx(np.exp(-1.0), rel=1e-6)
    with pytest.raises(DomainError):
        fld(0.5, np.array([[20.0, 0.0, 0.0]]))


def test_periodic_history_interpolates_smooth_field():
    box = PeriodicBox(2 * np.pi, 32, 1)
    times = np.linspace(0, 1, 5)
    vals = np.array([[np.sin(box.x) * (1 + t)] for t in times])
    fld = ch.PeriodicFieldHistory(box, times, vals)
    pts = np.array([[0.3], [2.0], [-3.0]])
    assert np.max(np.abs(fld(0.6, pts)[:, 0] - 1.6 * np.sin(pts[:, 0]))) < 1e-4


def test_scattering_of_compactly_supported_field():
    fld = ch.CallableField(1, lambda t, x: 0.1 * np.cos(x) * max(0.0, 2.0 - t))
    z, v = _points(1, 8)
    res = ch.scattering_limits(fld, z, v, [2.0, 4.0, 8.0])
    Y2, W2 = ch.deviations_at(fld, 2.0, z, v)
    assert np.max(np.abs(res.Y_inf - Y2)) < 1e-10 and np.max(np.abs(res.W_inf - W2)) < 1e-10
    assert res.converged


def test_scattering_profile_formula():
    f0 = lambda x, v: np.exp(-np.sum(x * x + v * v, axis=-1))
    mu = lambda v: np.exp(-np.sum(v * v, axis=-1) / 2)
    x, v = _points(2)
    Y, W = np.array([0.1, 0.2]), np.array([-0.3, 0.0])
    got = ch.scattering_profile(f0, mu, x, v, Y, W)
    assert np.allclose(got, f0(x + Y, v + W) + mu(v + W) - mu(v), rtol=0, atol=1e-15)
