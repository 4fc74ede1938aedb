import numpy as np
import pytest
import sympy as sy
from hypothesis import given
from hypothesis import strategies as st

from vortsel.grid import make_radial_grid
from vortsel.vortex import (
    ProfileError,
    Shape,
    VortexProfile,
    build_vortex,
    cutoff,
    read_profile_csv,
    similarity_force,
    smoothstep,
    truncate_vortex,
    write_profile_csv,
)

R = np.linspace(0.05, 4.0, 200)


class _GaussOmega(Shape):
    def __init__(self):
        r = sy.symbols("r", positive=True)
        om = sy.exp(-r ** 2)
        self._d = [sy.lambdify(r, sy.diff(om, r, k)) for k in range(5)]

    def omega(self, r, k=0):
        return self._d[k](np.asarray(r, float))


def test_vorticity_of_gaussian_spin():
    got = _GaussOmega().vorticity(R)
    np.testing.assert_allclose(got, 2 * np.exp(-R ** 2) * (1 - R ** 2), atol=1e-14)


def test_gaussian_family_inverts_to_closed_form():
    p = build_vortex({"family": "gaussian", "amps": [1.0], "widths": [1.0]}, 0.5)
    r = np.concatenate([np.linspace(0.01, 0.49, 20), R])
    np.testing.assert_allclose(p.omega(r), -np.expm1(-r ** 2) / (2 * r ** 2), rtol=1e-12)
    np.testing.assert_allclose(p.vorticity(r), np.exp(-r ** 2), atol=1e-12)


def test_default_profile_consistency(profile):
    r = np.linspace(1e-3, 2.5, 2001)
    w = profile.vorticity(r)
    h = 1e-6
    fd = (profile.omega(r + h) - profile.omega(r - h)) / (2 * h)
    np.testing.assert_allclose(w, r * fd + 2 * profile.omega(r), atol=1e-6 * np.max(np.abs(w)))


def test_default_profile_zero_circulation_and_support(profile):
    assert profile.support == pytest.approx(1.65)
    r = np.array([1.7, 3.0, 10.0])
    np.testing.assert_allclose(profile.omega(r), 0.0, atol=1e-12)
    np.testing.assert_allclose(profile.vorticity(r), 0.0, atol=1e-12)


def test_force_equals_time_derivative_of_physical_vorticity(profile):
    f = similarity_force(profile)
    a = profile.alpha
    r = np.linspace(0.05, 2.0, 300)
    dt = 1e-4

    def omega_bar(t):
        return profile.vorticity(r / t ** (1 / a)) / t

    fd = (omega_bar(1 + dt) - omega_bar(1 - dt)) / (2 * dt)
    assert np.max(np.abs(fd - f.physical_g(r, 1.0))) < 1e-4 * np.max(np.abs(fd))


def test_curl_of_force_density_is_g(profile):
    f = similarity_force(profile)
    r = np.linspace(0.05, 2.0, 400)
    h = 1e-6
    curl = (f.f_theta(r + h) * (r + h) - f.f_theta(r - h) * (r - h)) / (2 * h) / r
    np.testing.assert_allclose(curl, f.g(r), atol=1e-5 * np.max(np.abs(f.g(r))))


@given(st.floats(-0.5, 1.5), st.floats(-0.5, 1.5))
def test_smoothstep_monotone_and_bounded(u, v):
    a, b = smoothstep(np.array([min(u, v), max(u, v)]))
    assert 0.0 <= a <= b <= 1.0


def test_smoothstep_is_c4_at_ends():
    for k in range(1, 5):
        assert abs(smoothstep(np.array([1e-12]), k)[0]) < 1e-6
        assert abs(smoothstep(np.array([1 - 1e-12]), k)[0]) < 1e-6


def test_cutoff_levels():
    np.testing.assert_allclose(cutoff(np.array([0.0, 0.5, 1.0, 2.0, 3.0])), [1, 1, 1, 0, 0])


def test_truncation_beyond_support_is_identity(profile):
    assert truncate_vortex(profile, 5.0) is profile


def test_truncation_cuts_tail():
    p = build_vortex({"family": "gaussian", "amps": [1.0], "widths": [1.0]}, 0.5)
    t = truncate_vortex(p, 2.0)
    assert t.support == 4.0
    assert t.omega(np.array([4.5]))[0] == 0.0
    assert t.omega(np.array([0.5]))[0] == pytest.approx(p.omega(np.array([0.5]))[0])


@pytest.mark.parametrize("bad", [({"family": "nope"}, 0.5), ({"family": "two_level"}, 1.5),
                                 ({"family": "two_level", "amplitude": np.nan}, 0.5)])
def test_builder_rejects(bad):
    with pytest.raises(ProfileError):
        build_vortex(*bad)


def test_alpha_range_for_heat_study(profile):
    assert profile.with_alpha(1.0).alpha == 1.0
    with pytest.raises(ProfileError):
        profile.with_alpha(2.0)


def test_profile_csv_roundtrip(profile, tmp_path):
    g = make_radial_grid(3.0, 64)
    header, data = read_profile_csv(write_profile_csv(profile, g, tmp_path / "p.csv"))
    assert header["alpha"] == 0.5 and header["family"] == "two_level"
    np.testing.assert_allclose(data[:, 1], profile.omega(g.r), rtol=1e-15)


def test_zero_profile_is_allowed():
    p = build_vortex("zero", 0.5)
    assert isinstance(p, VortexProfile) and p.support == 0.0
