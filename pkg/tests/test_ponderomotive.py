import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import constants as sc
from scipy import integrate, optimize
from scipy.special import j0

from circular_rydberg.ponderomotive import (
    TWO_PI,
    LatticeSpec,
    LGBeam,
    QuadratureError,
    depth_factor_at,
    find_magic_wavelengths,
    gaussian_intensity,
    lattice_depth_factor,
    lg_field,
    optical_omega,
    pond_rabi,
    pond_shift,
    ponderomotive_coefficient,
    rabi_position_sensitivity,
    rabi_ring,
    raman_error_per_pi,
    thermal_rotation_error,
    thomson_errors,
    trap_mismatch,
    uniform_intensity,
    z_lattice_mismatch,
)

A0 = sc.physical_constants["Bohr radius"][0]


# pond_shift

def test_uniform_intensity_gives_free_electron_value():
    lam, I = 1064e-9, 1e8
    oracle = sc.e**2 * I / (2 * sc.epsilon_0 * sc.c * sc.m_e * (TWO_PI * sc.c / lam) ** 2) / sc.hbar
    assert math.isclose(pond_shift(40, uniform_intensity(I), wavelength=lam), oracle, rel_tol=1e-9)


@pytest.mark.parametrize("lam", [532e-9, 1064e-9])
def test_gaussian_beam_shift_per_power(lam):
    s = pond_shift(3, gaussian_intensity(1e-3, lam, lam), wavelength=lam)
    assert abs(s / TWO_PI / 1.44e6 - 1) < 0.01


def test_shift_scales_as_inverse_omega_squared():
    field = gaussian_intensity(1e-3, 2e-6, 1064e-9)
    a = pond_shift(20, field, wavelength=1064e-9)
    b = pond_shift(20, field, wavelength=532e-9)
    assert abs(a / b - 4) < 4e-10


def test_shift_decreases_as_beam_moves_off_centre():
    lam, waist = 1064e-9, 1.2e-6
    field = gaussian_intensity(1e-3, waist, lam)
    offsets = np.linspace(0, 2 * waist, 41)
    shifts = [pond_shift(30, field, R=(d, 0.0, 0.0), wavelength=lam) for d in offsets]
    assert all(b <= a * (1 + 1e-12) for a, b in zip(shifts, shifts[1:]))
    assert shifts[-1] < 0.01 * shifts[0]


def test_negative_intensity_rejected():
    with pytest.raises(ValueError):
        pond_shift(10, uniform_intensity(-1.0))


def test_unresolved_field_reports_estimate():
    noisy = lambda p: np.random.default_rng(0).uniform(size=np.asarray(p).shape[:-1])
    with pytest.raises(QuadratureError) as info:
        pond_shift(20, noisy)
    assert info.value.estimate > 0


# lattices

def test_lattice_spec_validation():
    with pytest.raises(ValueError):
        LatticeSpec(200e-9)
    with pytest.raises(ValueError):
        LatticeSpec(1064e-9, period=400e-9)
    with pytest.raises(ValueError):
        LatticeSpec(1064e-9, orientation="diagonal")
    assert LatticeSpec(1064e-9).lattice_period == 532e-9


def test_depth_factor_zero_wavevector():
    assert depth_factor_at(59, 0.0, "in_plane") == 1.0


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 80), st.floats(0, 1e8), st.sampled_from(["in_plane", "z_axis"]))
def test_depth_factor_bounded(n, two_k, orientation):
    assert -1 - 1e-12 <= depth_factor_at(n, two_k, orientation) <= 1 + 1e-12


def test_depth_factor_oscillates_in_n_at_400nm():
    vals = np.array([lattice_depth_factor(n, LatticeSpec(400e-9)) for n in range(50, 71)])
    assert np.any(np.diff(np.sign(vals)) != 0)
    d = np.diff(vals)
    assert np.any(d > 0) and np.any(d < 0)


def _sample_circular(n, size, rng):
    # |psi_nC|^2 d^3r: r/a0 ~ Gamma(2n+1, n/2); cos(theta) = 2B - 1 with B ~ Beta(n, n)
    r = rng.gamma(2 * n + 1, n / 2, size) * A0
    cos_t = 2 * rng.beta(n, n, size) - 1
    return r, cos_t


def test_depth_factor_matches_monte_carlo():
    n, lam = 59, 629e-9
    rng = np.random.default_rng(5)
    r, cos_t = _sample_circular(n, 4_000_000, rng)
    two_k = 2 * TWO_PI / lam
    mc = np.mean(j0(two_k * r * np.sqrt(1 - cos_t**2)))
    assert abs(lattice_depth_factor(n, LatticeSpec(lam)) - mc) < 1e-4
    mc_z = np.mean(np.cos(two_k * r * cos_t))
    assert abs(lattice_depth_factor(n, LatticeSpec(lam, "z_axis")) - mc_z) < 1e-4


@pytest.fixture(scope="module")
def magic():
    return find_magic_wavelengths()


def test_magic_wavelength_positions(magic):
    kinds = {p.kind: p for p in magic}
    assert abs(kinds["eta_a_root"].wavelength - 629.38e-9) < 1e-9
    assert abs(kinds["eta_s_root"].wavelength - 628.87e-9) < 1e-9
    assert 2e-4 <= abs(kinds["eta_a_root"].eta_s) <= 1.8e-3


def test_magic_compromise_lies_between_roots(magic):
    comp = next(p for p in magic if p.kind == "compromise")
    roots = [p.wavelength for p in magic if p.kind != "compromise"]
    assert min(roots) <= comp.wavelength <= max(roots)
    assert max(abs(comp.eta_a), abs(comp.eta_s)) <= min(max(abs(p.eta_a), abs(p.eta_s)) for p in magic)


def test_magic_eta_matches_recomputed_depth_factors(magic):
    for p in magic:
        two_k = 2 * TWO_PI / p.wavelength
        d = {n: depth_factor_at(n, two_k, "in_plane") for n in (56, 59, 61, 64)}
        assert abs(p.eta_s - (d[61] - d[59]) / d[59]) < 1e-9
        assert abs(p.eta_a - (d[64] - d[56]) / d[56]) < 1e-9


def test_no_crossing_raises():
    with pytest.raises(ValueError):
        find_magic_wavelengths(lam_range=(1000e-9, 1010e-9), n_scan=5)


def test_z_lattice_mismatch_and_period_scaling():
    eta_a, eta_s = z_lattice_mismatch(0.8e-6)
    assert 2e-3 <= abs(eta_a) <= 8e-3
    assert 0.5e-3 <= abs(eta_s) <= 2e-3
    periods = np.array([0.8e-6, 1.2e-6, 1.6e-6, 2.4e-6, 3.2e-6])
    vals = np.array([abs(z_lattice_mismatch(L)[0]) for L in periods])
    slope = np.polyfit(np.log(periods), np.log(vals), 1)[0]
    assert abs(slope + 2) < 0.2


def test_trap_mismatch_definition():
    lat = LatticeSpec(800e-9)
    d0, d1 = lattice_depth_factor(59, lat), lattice_depth_factor(61, lat)
    assert trap_mismatch(59, 61, lat) == (d1 - d0) / d0


# Laguerre-Gauss modes

@pytest.mark.parametrize("m", [0, 1, -2])
def test_lg_power_normalisation(m):
    beam = LGBeam(m, 1.5e-6, 1064e-9, power=2e-3)
    for z in (0.0, beam.rayleigh):
        f = lambda r: sc.epsilon_0 * sc.c / 2 * abs(lg_field(beam, r, z)) ** 2 * TWO_PI * r
        p, _ = integrate.quad(f, 0, 20 * beam.waist, limit=200, epsrel=1e-12)
        assert abs(p / beam.power - 1) < 1e-6


def test_lg01_vanishes_on_axis_and_peaks_at_w_over_root2():
    beam = LGBeam(1, 1.5e-6, 1064e-9)
    assert lg_field(beam, 0.0, 0.0) == 0
    for z in (0.0, 0.7 * beam.rayleigh):
        w = beam.waist * math.sqrt(1 + (z / beam.rayleigh) ** 2)
        res = optimize.minimize_scalar(lambda r: -abs(lg_field(beam, r, z)) ** 2, bounds=(0.1 * w, 2 * w),
                                       method="bounded", options={"xatol": 1e-15})
        assert abs(res.x / (w / math.sqrt(2)) - 1) < 1e-6


def test_lg_beam_validation():
    with pytest.raises(ValueError):
        LGBeam(1, 100e-9, 1064e-9)
    with pytest.raises(ValueError):
        LGBeam(1, 1e-6, 1064e-9, power=-1)
    with pytest.raises(ValueError):
        LGBeam(1, 1e-6, 1064e-9, p=1)


# two-beam Rabi frequency

def test_rabi_selection_rule_is_exact():
    b1, b2 = LGBeam.focused(1, 532e-9), LGBeam.focused(-1, 532e-9)
    assert rabi_ring(59, 61, b2, b1) == 0.0
    assert rabi_ring(59, 62, b1, b2) == 0.0


def test_rabi_magnitude_532nm():
    b1, b2 = LGBeam.focused(1, 532e-9), LGBeam.focused(-1, 532e-9)
    res = pond_rabi(59, 61, b1, b2)
    assert 0.5 <= abs(res.quadrature) / (TWO_PI * 1e6) <= 2


@pytest.mark.parametrize("lam", [1064e-9, 532e-9])
def test_ring_and_quadrature_agree(lam):
    b1, b2 = LGBeam.focused(1, lam), LGBeam.focused(-1, lam)
    res = pond_rabi(59, 61, b1, b2)
    assert abs(res.ring - res.quadrature) <= 0.1 * abs(res.quadrature)


def test_ring_path_is_bilinear_in_field_amplitudes():
    b1, b2 = LGBeam.focused(1, 1064e-9, power=1e-3), LGBeam.focused(-1, 1064e-9, power=1e-3)
    base = rabi_ring(59, 61, b1, b2)
    scaled = rabi_ring(59, 61, LGBeam(1, b1.waist, b1.wavelength, 4e-3), LGBeam(-1, b2.waist, b2.wavelength, 9e-3))
    assert abs(scaled / base - 6) < 6e-12


def test_offset_quadrature_reduces_to_centred_value():
    b1, b2 = LGBeam.focused(1, 1064e-9), LGBeam.focused(-1, 1064e-9)
    centred = pond_rabi(59, 61, b1, b2).quadrature
    tiny = pond_rabi(59, 61, b1, b2, offset=(1e-12, 0.0, 0.0)).quadrature
    assert abs(tiny / centred - 1) < 1e-6


@pytest.mark.parametrize("lam,sigma", [(532e-9, 107e-9), (1064e-9, 200e-9), (1550e-9, 287e-9)])
def test_position_sensitivity(lam, sigma):
    res = rabi_position_sensitivity(wavelength=lam)
    assert abs(res.sigma / sigma - 1) <= 0.15
    assert res.residual <= 0.01


@pytest.mark.parametrize("sigma,eps", [(107e-9, 0.09), (200e-9, 0.03), (287e-9, 0.015)])
def test_thermal_rotation_error(sigma, eps):
    assert abs(thermal_rotation_error(sigma, 10e-6) / eps - 1) <= 0.3


def test_thermal_rotation_error_oracle():
    m = 86.909 * sc.atomic_mass
    w = TWO_PI * 100e3
    assert math.isclose(thermal_rotation_error(1e-7, 1e-5, w, m), sc.k * 1e-5 / (m * w * w) / 2e-14, rel_tol=1e-12)


# Thomson scattering

def test_thomson_error_per_pi_at_532():
    te = thomson_errors(optical_omega(532e-9), TWO_PI * 1e6)
    assert abs(te.error_per_pi / 5.6e-7 - 1) < 0.01
    assert 0.5 <= te.error_per_pi / 1e-6 <= 2


def test_thomson_error_equals_rate_over_drive_frequency():
    # epsilon = Gamma / (U / 2h) with U in rad/s, i.e. Gamma * 4 pi / U
    w, U = optical_omega(800e-9), TWO_PI * 3e6
    te = thomson_errors(w, U)
    assert math.isclose(te.error_per_pi, 4 * math.pi * te.scatter_rate / U, rel_tol=1e-8)  # CODATA r_e vs e, eps0, m_e


def test_state_change_rate_at_1mhz():
    assert math.isclose(thomson_errors(optical_omega(1064e-9), TWO_PI * 1e6).state_change_rate, 0.3, rel_tol=1e-12)


def test_thomson_input_validation():
    with pytest.raises(ValueError):
        thomson_errors(0.0, 1.0)


def test_raman_reference():
    assert abs(raman_error_per_pi() - 7.6e-6) < 0.05e-6


def test_coefficient_formula():
    w = optical_omega(1064e-9)
    assert math.isclose(ponderomotive_coefficient(1064e-9) * sc.hbar, sc.e**2 / (2 * sc.epsilon_0 * sc.c * sc.m_e * w * w))
