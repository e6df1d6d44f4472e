"""Ponderomotive traps and drives for circular Rydberg states.

The quiver energy of the Rydberg electron in an optical field acts on the
atom through the overlap of |E|^2 with the electron density.  This module
evaluates that overlap for lattices (trap depth and magic wavelengths) and
for pairs of co-propagating Laguerre-Gauss beams (Raman-like transitions
between circular levels), plus Thomson scattering rates.

Circular-state integrals use Gauss-Legendre nodes in (r, theta) concentrated
where the density lives; the azimuthal integral is done analytically when the
geometry allows, numerically otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import constants as sc
from scipy import optimize
from scipy.special import j0

from .atomic_structure import A0, RB87_MASS, circular_density

TWO_PI = 2 * np.pi
CLASSICAL_ELECTRON_RADIUS = sc.physical_constants["classical electron radius"][0]


class QuadratureError(RuntimeError):
    def __init__(self, message: str, estimate: float):
        super().__init__(f"{message} (estimate {estimate:.6g})")
        self.estimate = estimate


def optical_omega(wavelength: float) -> float:
    return TWO_PI * sc.c / wavelength


def ponderomotive_coefficient(wavelength: float) -> float:
    """U/I for a free electron, in rad/s per (W/m^2):  e^2 / (2 eps0 c m_e omega^2 hbar)."""
    w = optical_omega(wavelength)
    return sc.e**2 / (2 * sc.epsilon_0 * sc.c * sc.m_e * w**2) / sc.hbar


# ---------------------------------------------------------------------------
# quadrature over circular-state densities


@lru_cache(maxsize=256)
def _circular_nodes(n: int, n_r: int, n_theta: int, width: float = 9.0):
    """Nodes (r [m], theta) and weights w so that sum w f = int |psi_nC|^2 f d^3r / (2 pi)... times 2 pi.

    Returned weights already include the density, the Jacobian r^2 sin(theta) and the 2 pi of
    the azimuthal integral, so for an azimuthally symmetric integrand sum(w * f) is the full
    expectation value.
    """
    r_peak = n * (n - 1) * A0 if n > 1 else A0
    sig_r = max(r_peak / math.sqrt(max(2 * n - 2, 1)), 0.5 * A0 * n)
    r_lo = max(0.0, r_peak - width * sig_r)
    r_hi = r_peak + width * sig_r * 1.5
    l = n - 1
    sig_t = 1 / math.sqrt(max(2 * l, 1))
    t_lo = max(0.0, math.pi / 2 - width * sig_t)
    t_hi = min(math.pi, math.pi / 2 + width * sig_t)
    xr, wr = np.polynomial.legendre.leggauss(n_r)
    xt, wt = np.polynomial.legendre.leggauss(n_theta)
    r = 0.5 * (r_hi - r_lo) * xr + 0.5 * (r_hi + r_lo)
    t = 0.5 * (t_hi - t_lo) * xt + 0.5 * (t_hi + t_lo)
    wr = wr * 0.5 * (r_hi - r_lo)
    wt = wt * 0.5 * (t_hi - t_lo)
    R, T = np.meshgrid(r, t, indexing="ij")
    W = np.outer(wr, wt) * circular_density(n, R, T) * R**2 * np.sin(T) * TWO_PI
    return R, T, W


def _expect(n: int, f, n_r: int = 96, n_theta: int = 96) -> float:
    R, T, W = _circular_nodes(n, n_r, n_theta)
    return float(np.sum(W * f(R, T)))


# ---------------------------------------------------------------------------
# intensity profiles


def gaussian_intensity(power: float, waist: float, wavelength: float):
    """Callable I(points [N,3] m) -> W/m^2 for a paraxial TEM00 beam along z centred at the origin."""
    zr = math.pi * waist**2 / wavelength

    def intensity(points):
        p = np.asarray(points, dtype=float)
        rho2 = p[..., 0] ** 2 + p[..., 1] ** 2
        w2 = waist**2 * (1 + (p[..., 2] / zr) ** 2)
        return 2 * power / (math.pi * w2) * np.exp(-2 * rho2 / w2)

    return intensity


def uniform_intensity(value: float):
    return lambda points: np.full(np.asarray(points).shape[:-1], float(value))


def pond_shift(n: int, intensity_field, R=(0.0, 0.0, 0.0), wavelength: float = 1064e-9,
               n_phi: int = 64, rtol: float = 1e-7) -> float:
    """Ponderomotive energy shift (rad/s) of nC with its nucleus at R in the given intensity field."""
    R = np.asarray(R, dtype=float)

    def integrate(n_r, n_t, n_p):
        rr, tt, ww = _circular_nodes(n, n_r, n_t)
        phi = np.arange(n_p) * TWO_PI / n_p
        x = rr[..., None] * np.sin(tt)[..., None] * np.cos(phi)
        y = rr[..., None] * np.sin(tt)[..., None] * np.sin(phi)
        z = np.broadcast_to((rr * np.cos(tt))[..., None], x.shape)
        pts = np.stack([x + R[0], y + R[1], z + R[2]], axis=-1)
        I = intensity_field(pts)
        if np.any(I < 0):
            raise ValueError("intensity must be nonnegative")
        return float(np.sum(ww[..., None] * I) / n_p)

    coarse = integrate(48, 48, n_phi)
    fine = integrate(96, 96, 2 * n_phi)
    if abs(fine - coarse) > rtol * abs(fine) + 1e-300:
        raise QuadratureError("ponderomotive quadrature did not converge", fine * ponderomotive_coefficient(wavelength))
    return fine * ponderomotive_coefficient(wavelength)


# ---------------------------------------------------------------------------
# lattices


@dataclass(frozen=True)
class LatticeSpec:
    wavelength: float
    orientation: str = "in_plane"  # or "z_axis"
    period: float | None = None
    single_beam_intensity: float = 1.0  # W/cm^2

    def __post_init__(self):
        if not 300e-9 <= self.wavelength <= 2000e-9:
            raise ValueError("wavelength outside [300, 2000] nm")
        if self.orientation not in ("in_plane", "z_axis"):
            raise ValueError(f"unknown orientation {self.orientation!r}")
        if self.period is not None and self.period < self.wavelength / 2 * (1 - 1e-12):
            raise ValueError("lattice period must be >= wavelength / 2")

    @property
    def lattice_period(self) -> float:
        return self.period if self.period is not None else self.wavelength / 2

    @property
    def two_k(self) -> float:
        """Spatial frequency of the intensity modulation (rad/m)."""
        return TWO_PI / self.lattice_period


def depth_factor_at(n: int, two_k: float, orientation: str) -> float:
    """int |psi_nC|^2 cos(2k.r) d^3r for a modulation wavevector of magnitude two_k."""
    if two_k == 0:
        return 1.0
    if orientation == "in_plane":
        return _expect(n, lambda r, t: j0(two_k * r * np.sin(t)))
    return _expect(n, lambda r, t: np.cos(two_k * r * np.cos(t)))


def lattice_depth_factor(n: int, lattice: LatticeSpec) -> float:
    return depth_factor_at(n, lattice.two_k, lattice.orientation)


def trap_mismatch(n0: int, n1: int, lattice: LatticeSpec) -> float:
    """eta = (U1 - U0)/U0 with U proportional to the depth factor."""
    d0 = lattice_depth_factor(n0, lattice)
    d1 = lattice_depth_factor(n1, lattice)
    return (d1 - d0) / d0


@dataclass(frozen=True)
class MagicPoint:
    wavelength: float
    eta_s: float
    eta_a: float
    kind: str  # "eta_a_root", "eta_s_root" or "compromise"


def find_magic_wavelengths(orientation: str = "in_plane", lam_range=(620e-9, 640e-9),
                           storage=(59, 61), active=(56, 64), period: float | None = None,
                           n_scan: int = 81) -> list[MagicPoint]:
    """Roots of eta_a and eta_s in the wavelength window plus the min-max compromise point."""

    def lat(lam):
        return LatticeSpec(lam, orientation, period)

    def eta_s(lam):
        return trap_mismatch(storage[0], storage[1], lat(lam))

    def eta_a(lam):
        return trap_mismatch(active[0], active[1], lat(lam))

    grid = np.linspace(lam_range[0], lam_range[1], n_scan)
    es = np.array([eta_s(x) for x in grid])
    ea = np.array([eta_a(x) for x in grid])
    out = []
    for values, fn, kind in ((ea, eta_a, "eta_a_root"), (es, eta_s, "eta_s_root")):
        idx = np.nonzero(np.sign(values[:-1]) * np.sign(values[1:]) < 0)[0]
        for i in idx:
            lam = optimize.brentq(fn, grid[i], grid[i + 1], xtol=1e-15, rtol=1e-13)
            out.append(MagicPoint(lam, eta_s(lam), eta_a(lam), kind))
    roots = [p for p in out]
    if not roots:
        raise ValueError("no magic crossing inside the wavelength range")
    lo = min(p.wavelength for p in roots)
    hi = max(p.wavelength for p in roots)
    if hi > lo:
        res = optimize.minimize_scalar(lambda x: max(abs(eta_s(x)), abs(eta_a(x))), bounds=(lo, hi),
                                       method="bounded", options={"xatol": 1e-15})
        out.append(MagicPoint(res.x, eta_s(res.x), eta_a(res.x), "compromise"))
    return sorted(out, key=lambda p: p.wavelength)


def z_lattice_mismatch(period: float, storage=(59, 61), active=(56, 64), wavelength: float = 1560e-9):
    """(eta_a, eta_s) for a z-oriented lattice of the given period."""
    lat = LatticeSpec(wavelength, "z_axis", max(period, wavelength / 2))
    return trap_mismatch(*active, lat), trap_mismatch(*storage, lat)


# ---------------------------------------------------------------------------
# Laguerre-Gauss beams


@dataclass(frozen=True)
class LGBeam:
    m: int
    waist: float
    wavelength: float
    power: float = 1e-3
    p: int = 0

    def __post_init__(self):
        if self.p != 0:
            raise ValueError("only p = 0 modes are supported")
        if self.waist <= self.wavelength / 4:
            raise ValueError("waist must exceed wavelength / 4")
        if self.power < 0:
            raise ValueError("power must be nonnegative")

    @property
    def omega(self) -> float:
        return optical_omega(self.wavelength)

    @property
    def rayleigh(self) -> float:
        return math.pi * self.waist**2 / self.wavelength

    @classmethod
    def focused(cls, m: int, wavelength: float, na: float = 0.5, power: float = 1e-3) -> "LGBeam":
        """Paraxial beam standing in for focusing at numerical aperture `na` (waist = lambda/(pi NA))."""
        return cls(m, wavelength / (math.pi * na), wavelength, power)


def lg_field(beam: LGBeam, r, z, phi=0.0):
    """Complex field amplitude (V/m) of the LG_0m mode, normalized so int eps0 c/2 |E|^2 dA = power."""
    r = np.asarray(r, dtype=float)
    z = np.asarray(z, dtype=float)
    am = abs(beam.m)
    zr = beam.rayleigh
    w = beam.waist * np.sqrt(1 + (z / zr) ** 2)
    k = TWO_PI / beam.wavelength
    inv_rc = z / (z**2 + zr**2)
    gouy = (am + 1) * np.arctan(z / zr)
    amp = math.sqrt(2 / (math.pi * math.factorial(am))) / w * (math.sqrt(2) * r / w) ** am * np.exp(-(r**2) / w**2)
    phase = np.exp(-1j * k * r**2 * inv_rc / 2 + 1j * gouy + 1j * beam.m * phi)
    return math.sqrt(2 * beam.power / (sc.epsilon_0 * sc.c)) * amp * phase


def _rabi_prefactor(beam: LGBeam) -> float:
    return sc.e**2 / (4 * sc.hbar * sc.m_e * beam.omega**2)


def rabi_ring(n: int, n_prime: int, beam1: LGBeam, beam2: LGBeam) -> float:
    """Ring approximation: the electron pair density is a ring of radius a0 (n^2 + n'^2)/2 in z = 0."""
    if beam1.m - beam2.m != n_prime - n:
        return 0.0
    r0 = 0.5 * A0 * (n**2 + n_prime**2)
    e1 = lg_field(beam1, r0, 0.0)
    e2 = lg_field(beam2, r0, 0.0)
    return float(_rabi_prefactor(beam1) * np.real(e1 * np.conj(e2)))


def _circular_pair_nodes(n: int, n_prime: int, n_r: int, n_t: int):
    """Nodes and weights for int R_n R_n' Y*_n' Y_n (sans e^{i dphi}) r^2 sin(theta) dr dtheta."""
    lo = min(n, n_prime)
    r_mid = 0.5 * A0 * (n**2 + n_prime**2)
    sig_r = r_mid / math.sqrt(2 * lo)
    r_a, r_b = max(0.0, r_mid - 10 * sig_r), r_mid + 12 * sig_r
    sig_t = 1 / math.sqrt(2 * (lo - 1))
    t_a, t_b = max(0.0, math.pi / 2 - 10 * sig_t), min(math.pi, math.pi / 2 + 10 * sig_t)
    xr, wr = np.polynomial.legendre.leggauss(n_r)
    xt, wt = np.polynomial.legendre.leggauss(n_t)
    r = 0.5 * (r_b - r_a) * xr + 0.5 * (r_b + r_a)
    t = 0.5 * (t_b - t_a) * xt + 0.5 * (t_b + t_a)
    wr = wr * 0.5 * (r_b - r_a)
    wt = wt * 0.5 * (t_b - t_a)
    R, T = np.meshgrid(r, t, indexing="ij")

    def log_psi(nn):
        l = nn - 1
        x = R / A0
        log_rad = (nn + 0.5) * math.log(2.0 / nn) - 0.5 * math.lgamma(2 * nn + 1) + l * np.log(x) - x / nn
        log_ang = 0.5 * (math.lgamma(2 * l + 2) - math.log(4 * math.pi) - l * math.log(4.0)) - math.lgamma(l + 1)
        return log_rad + log_ang + l * np.log(np.sin(T))

    amp = np.exp(log_psi(n) + log_psi(n_prime)) / A0**3
    W = np.outer(wr, wt) * amp * R**2 * np.sin(T)
    return R, T, W


def rabi_quadrature(n: int, n_prime: int, beam1: LGBeam, beam2: LGBeam, offset=(0.0, 0.0, 0.0),
                    n_r: int = 80, n_t: int = 64, n_phi: int = 96) -> float:
    """<n'C| U_p |nC>/hbar from the interference term by direct quadrature (rad/s, magnitude with sign of the ring path)."""
    R, T, W = _circular_pair_nodes(n, n_prime, n_r, n_t)
    pref = _rabi_prefactor(beam1)
    off = np.asarray(offset, dtype=float)
    dm = n - n_prime  # wavefunction product carries e^{i (n - n') phi}
    if np.allclose(off[:2], 0.0):
        # the azimuthal integral selects the matching angular-momentum transfer
        if beam1.m - beam2.m != n_prime - n:
            return 0.0
        rho = R * np.sin(T)
        z = R * np.cos(T) + off[2]
        e1 = lg_field(beam1, rho, z)
        e2 = lg_field(beam2, rho, z)
        return float(pref * TWO_PI * np.real(np.sum(W * e1 * np.conj(e2))))
    phi = np.arange(n_phi) * TWO_PI / n_phi
    x = (R * np.sin(T))[..., None] * np.cos(phi) + off[0]
    y = (R * np.sin(T))[..., None] * np.sin(phi) + off[1]
    z = (R * np.cos(T))[..., None] + off[2]
    rho = np.hypot(x, y)
    ang = np.arctan2(y, x)
    e1 = lg_field(beam1, rho, z, ang)
    e2 = lg_field(beam2, rho, z, ang)
    integrand = W[..., None] * e1 * np.conj(e2) * np.exp(1j * dm * phi)
    val = pref * TWO_PI * np.sum(integrand) / n_phi
    return float(np.real(val)) if abs(val.imag) < 1e-6 * abs(val) + 1e-300 else float(np.abs(val) * np.sign(val.real or 1))


@dataclass(frozen=True)
class RabiResult:
    ring: float
    quadrature: float


def pond_rabi(n: int, n_prime: int, beam1: LGBeam, beam2: LGBeam, offset=(0.0, 0.0, 0.0)) -> RabiResult:
    """Two-beam ponderomotive coupling between nC and n'C by both evaluation routes (rad/s)."""
    ring = rabi_ring(n, n_prime, beam1, beam2) if np.allclose(offset, 0.0) else float("nan")
    return RabiResult(ring, rabi_quadrature(n, n_prime, beam1, beam2, offset))


@dataclass(frozen=True)
class PositionSensitivity:
    sigma: float
    offsets: np.ndarray
    ratio: np.ndarray
    residual: float


def rabi_position_sensitivity(n: int = 59, n_prime: int = 61, wavelength: float = 532e-9, na: float = 0.5,
                              m_pair=(1, -1), max_offset: float | None = None, points: int = 9) -> PositionSensitivity:
    """Gaussian width sigma of Omega(r)/Omega(0) for a transverse beam offset r."""
    b1 = LGBeam.focused(m_pair[0], wavelength, na)
    b2 = LGBeam.focused(m_pair[1], wavelength, na)
    omega0 = rabi_quadrature(n, n_prime, b1, b2)
    guess = 0.2 * wavelength
    max_offset = max_offset or 1.0 * guess
    offsets = np.linspace(0.0, max_offset, points)
    ratio = np.array([rabi_quadrature(n, n_prime, b1, b2, (d, 0.0, 0.0)) / omega0 for d in offsets])
    sel = ratio > 0.05
    # Gaussian model: ln(ratio) = -r^2 / (2 sigma^2)
    x = offsets[sel] ** 2
    y = np.log(ratio[sel])
    slope = np.sum(x * y) / np.sum(x * x)
    sigma = math.sqrt(-1 / (2 * slope))
    model = np.exp(-offsets**2 / (2 * sigma**2))
    residual = float(np.max(np.abs(model - ratio)))
    if residual > 0.01:
        raise QuadratureError("Gaussian fit residual above 1%", residual)
    return PositionSensitivity(sigma, offsets, ratio, residual)


def thermal_rotation_error(sigma: float, temperature: float, trap_omega: float = TWO_PI * 100e3,
                           mass: float = RB87_MASS) -> float:
    """Mean fractional rotation error <x^2>/(2 sigma^2) for thermal motion along one transverse axis."""
    return sc.k * temperature / (mass * trap_omega**2) / (2 * sigma**2)


# ---------------------------------------------------------------------------
# Thomson scattering


THOMSON_CROSS_SECTION = 8 * math.pi / 3 * CLASSICAL_ELECTRON_RADIUS**2
STATE_CHANGE_PER_DEPTH = 3e-7


@dataclass(frozen=True)
class ThomsonErrors:
    scatter_rate: float  # photons/s at the intensity giving `trap_depth`
    state_change_rate: float  # 1/s
    error_per_pi: float
    error_per_pi_printed_form: float  # 4 e^2 omega/(3 eps0 m_e c^2), carries units of 1/m... as printed


def thomson_errors(omega: float, trap_depth: float) -> ThomsonErrors:
    """Scattering rate and errors for a ponderomotive potential of depth `trap_depth` (rad/s) at optical omega."""
    if omega <= 0 or trap_depth <= 0:
        raise ValueError("inputs must be positive")
    # intensity producing the depth: U = e^2 I/(2 eps0 c m omega^2)
    intensity = trap_depth * sc.hbar * 2 * sc.epsilon_0 * sc.c * sc.m_e * omega**2 / sc.e**2
    gamma = intensity * THOMSON_CROSS_SECTION / (sc.hbar * omega)
    depth_hz = trap_depth / TWO_PI
    eps = 16 * math.pi / 3 * CLASSICAL_ELECTRON_RADIUS * omega / sc.c
    printed = 4 * sc.e**2 * omega / (3 * sc.epsilon_0 * sc.m_e * sc.c**2)
    return ThomsonErrors(gamma, STATE_CHANGE_PER_DEPTH * depth_hz, eps, printed)


def raman_error_per_pi(linewidth: float = TWO_PI * 6e6, fine_structure: float = TWO_PI * 7e12) -> float:
    """Reference error of an optimally detuned two-photon Raman pi pulse: 2 sqrt(2) pi Gamma / Delta_FS."""
    return 2 * math.sqrt(2) * math.pi * linewidth / fine_structure
