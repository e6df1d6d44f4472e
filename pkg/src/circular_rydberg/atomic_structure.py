"""Rydberg level bookkeeping, energies and single-atom matrix elements.

Everything internal is evaluated in atomic units (lengths in Bohr radii,
energies in Hartree) and converted to SI at the public boundary.  Circular
and near-circular states use closed-form hydrogenic wavefunctions; states
carrying a quantum defect use wavefunctions integrated numerically in the
Coulomb approximation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

import mpmath
import numpy as np
from scipy import constants as sc

A0 = sc.physical_constants["Bohr radius"][0]
HARTREE_HZ = sc.physical_constants["hartree-hertz relationship"][0]
HARTREE_RAD = 2 * np.pi * HARTREE_HZ
RYDBERG_HZ = sc.physical_constants["Rydberg constant times c in Hz"][0]
MU_B_HZ_PER_G = sc.physical_constants["Bohr magneton in Hz/T"][0] * 1e-4
RB87_MASS = 86.909180527 * sc.atomic_mass
# E-field of one atomic unit, expressed in V/cm
AU_FIELD_V_PER_CM = sc.physical_constants["atomic unit of electric field"][0] / 100.0

SPECIES = ("hydrogenic", "rb87")


class AtomicStructureError(ValueError):
    """Raised for invalid levels or numerically failed matrix elements."""


@lru_cache(maxsize=None)
def load_quantum_defects() -> dict[tuple[str, int], tuple[float, float, float]]:
    """Read the versioned quantum-defect table shipped with the package."""
    text = resources.files("circular_rydberg.data").joinpath("rb87_quantum_defects.txt").read_text()
    table = {}
    version = None
    for raw in text.splitlines():
        line = raw.strip()
        if line.startswith("# format-version:"):
            version = int(line.split(":")[1])
            continue
        if not line or line.startswith("#"):
            continue
        species, l, d0, d2, d4 = line.split()
        table[(species.lower(), int(l))] = (float(d0), float(d2), float(d4))
    if version != 1:
        raise AtomicStructureError(f"unsupported quantum defect table version {version}")
    return table


def quantum_defect(species: str, n: int, l: int) -> float:
    coeffs = load_quantum_defects().get((species, l))
    if coeffs is None:
        return 0.0
    d0, d2, d4 = coeffs
    x = 1.0 / (n - d0) ** 2
    return d0 + d2 * x + d4 * x * x


@dataclass(frozen=True, order=True)
class RydbergLevel:
    n: int
    l: int
    m: int
    species: str = "rb87"
    defect: float | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.species not in SPECIES:
            raise AtomicStructureError(f"unknown species {self.species!r}")
        if self.n < 1 or not 0 <= self.l < self.n or abs(self.m) > self.l:
            raise AtomicStructureError(f"invalid quantum numbers n={self.n} l={self.l} m={self.m}")
        if self.defect is None:
            d = quantum_defect(self.species, self.n, self.l) if self.species == "rb87" else 0.0
            object.__setattr__(self, "defect", d)
        if self.n - self.defect <= self.l:
            raise AtomicStructureError(f"effective principal number {self.n - self.defect:.3f} <= l for {self.n},{self.l}")

    @property
    def n_eff(self) -> float:
        return self.n - self.defect

    @property
    def is_circular(self) -> bool:
        return self.l == self.n - 1 and abs(self.m) == self.n - 1

    @property
    def hydrogenic(self) -> bool:
        return self.defect == 0.0

    def label(self) -> str:
        if self.is_circular:
            return f"{self.n}C" + ("" if self.m >= 0 else "-")
        return f"{self.n},{self.l},{self.m}"


def circular(n: int, species: str = "rb87") -> RydbergLevel:
    return RydbergLevel(n, n - 1, n - 1, species)


@dataclass(frozen=True)
class FieldConfig:
    """Static fields along the quantization axis (Ez in V/cm, Bz in gauss)."""

    Ez: float = 0.0
    Bz: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.Ez) and math.isfinite(self.Bz)):
            raise AtomicStructureError("field values must be finite")

    @property
    def signed(self) -> bool:
        return self.Ez < 0 or self.Bz < 0


def rydberg_constant_hz(species: str) -> float:
    if species == "hydrogenic":
        return RYDBERG_HZ
    return RYDBERG_HZ / (1.0 + sc.m_e / RB87_MASS)


def level_energy(level: RydbergLevel) -> float:
    """Binding energy below the ionization threshold, in rad/s (negative)."""
    return -2 * np.pi * rydberg_constant_hz(level.species) / level.n_eff**2


# ---------------------------------------------------------------------------
# angular algebra


def _lf(x: int) -> float:
    return math.lgamma(x + 1)


@lru_cache(maxsize=200_000)
def wigner_3j(j1: int, j2: int, j3: int, m1: int, m2: int, m3: int) -> float:
    """Wigner 3j symbol for integer arguments (Racah formula, log domain)."""
    if m1 + m2 + m3 != 0:
        return 0.0
    if abs(m1) > j1 or abs(m2) > j2 or abs(m3) > j3:
        return 0.0
    if j3 < abs(j1 - j2) or j3 > j1 + j2:
        return 0.0
    tri = _lf(j1 + j2 - j3) + _lf(j1 - j2 + j3) + _lf(-j1 + j2 + j3) - _lf(j1 + j2 + j3 + 1)
    pre = 0.5 * (tri + _lf(j1 + m1) + _lf(j1 - m1) + _lf(j2 + m2) + _lf(j2 - m2) + _lf(j3 + m3) + _lf(j3 - m3))
    kmin = max(0, j2 - j3 - m1, j1 - j3 + m2)
    kmax = min(j1 + j2 - j3, j1 - m1, j2 + m2)
    terms = []
    for k in range(kmin, kmax + 1):
        lg = (
            _lf(k) + _lf(j1 + j2 - j3 - k) + _lf(j1 - m1 - k) + _lf(j2 + m2 - k)
            + _lf(j3 - j2 + m1 + k) + _lf(j3 - j1 - m2 + k)
        )
        terms.append((-1) ** k * math.exp(pre - lg))
    return (-1) ** (j1 - j2 - m3) * math.fsum(terms)


def angular_element(l: int, m: int, k: int, q: int, lp: int, mp: int) -> float:
    """<l m| C^k_q |l' m'> with C the Racah-normalized spherical harmonic."""
    if m != q + mp:
        return 0.0
    a = wigner_3j(l, k, lp, 0, 0, 0)
    if a == 0.0:
        return 0.0
    return (-1) ** m * math.sqrt((2 * l + 1) * (2 * lp + 1)) * a * wigner_3j(l, k, lp, -m, q, mp)


# ---------------------------------------------------------------------------
# radial wavefunctions


def _laguerre_coeffs(n: int, l: int) -> list:
    """Coefficients c_j of R_nl = N (2r/n)^l e^{-r/n} sum_j c_j (2r/n)^j, as mpmath numbers."""
    nr = n - l - 1
    alpha = 2 * l + 1
    return [(-1) ** j * mpmath.binomial(nr + alpha, nr - j) / mpmath.factorial(j) for j in range(nr + 1)]


@lru_cache(maxsize=None)
def _hydrogenic_radial_au(n1: int, l1: int, n2: int, l2: int, k: int) -> float:
    """Closed-form <n1 l1| r^k |n2 l2> in atomic units, exact polynomial sum in extended precision."""
    with mpmath.workdps(30 + n1 + n2):
        def norm(n, l):
            return mpmath.sqrt((mpmath.mpf(2) / n) ** 3 * mpmath.factorial(n - l - 1) / (2 * n * mpmath.factorial(n + l)))

        c1, c2 = _laguerre_coeffs(n1, l1), _laguerre_coeffs(n2, l2)
        s1, s2 = mpmath.mpf(2) / n1, mpmath.mpf(2) / n2
        a = mpmath.mpf(1) / n1 + mpmath.mpf(1) / n2
        total = mpmath.mpf(0)
        for i, ci in enumerate(c1):
            for j, cj in enumerate(c2):
                p = l1 + l2 + i + j + 2 + k
                total += ci * cj * s1 ** (l1 + i) * s2 ** (l2 + j) * mpmath.factorial(p) / a ** (p + 1)
        return float(norm(n1, l1) * norm(n2, l2) * total)


@lru_cache(maxsize=4096)
def _numerov_wavefunction(n_eff: float, l: int, n: int):
    """Coulomb-approximation radial function on a sqrt(r) grid.

    Returns (rho, X) with r = rho^2 and u(r) = r R(r) = sqrt(rho) X(rho), normalized so that
    integral u^2 dr = 1.  The sign at large r is fixed to (-1)^(n-l-1) to agree with the
    closed-form hydrogenic convention when the defect vanishes.
    """
    energy = -0.5 / n_eff**2
    r_out = 2 * n_eff * (n_eff + 15)
    r_in = max(1e-3, 0.5 * (n_eff**2 - n_eff * math.sqrt(max(n_eff**2 - l * (l + 1), 0.0))) * 0.25)
    h = 0.01 if n_eff < 20 else 0.005 * max(1.0, math.sqrt(n_eff) / 5)
    rho = np.arange(math.sqrt(r_out), math.sqrt(r_in), -h)
    r = rho**2
    g = (2 * l + 0.5) * (2 * l + 1.5) / rho**2 + 8 * r * (-1.0 / r - energy)
    X = np.zeros_like(rho)
    X[0] = 1e-10
    X[1] = 1e-10 * math.exp(h * math.sqrt(max(g[0], 0.0)))
    f = 1 - h * h * g / 12
    for i in range(1, len(rho) - 1):
        X[i + 1] = ((12 - 10 * f[i]) * X[i] - f[i - 1] * X[i - 1]) / f[i + 1]
    # discard the unphysical growth inside the inner classical turning point
    r_tp = n_eff**2 - n_eff * math.sqrt(max(n_eff**2 - l * (l + 1), 0.0))
    inner = np.nonzero(r < r_tp)[0]
    if inner.size:
        seg = np.abs(X[inner])
        cut = inner[0] + int(np.argmin(seg))
        X[cut + 1 :] = 0.0
    rho, X = rho[::-1].copy(), X[::-1].copy()
    X /= math.sqrt(np.trapezoid(2 * X**2 * rho**2, rho))
    # the outermost amplitude was seeded positive; impose the hydrogenic sign convention
    if (n - l - 1) % 2:
        X = -X
    return rho, X


def _numerov_radial_au(a: RydbergLevel, b: RydbergLevel, k: int) -> float:
    rho_a, Xa = _numerov_wavefunction(a.n_eff, a.l, a.n)
    rho_b, Xb = _numerov_wavefunction(b.n_eff, b.l, b.n)
    lo = max(rho_a[0], rho_b[0])
    hi = min(rho_a[-1], rho_b[-1])
    grid = rho_a if len(rho_a) >= len(rho_b) else rho_b
    grid = grid[(grid >= lo) & (grid <= hi)]
    xa = np.interp(grid, rho_a, Xa)
    xb = np.interp(grid, rho_b, Xb)
    return float(np.trapezoid(2 * xa * xb * grid ** (2 * k + 2), grid))


def radial_au(a: RydbergLevel, b: RydbergLevel, k: int) -> float:
    """<a| r^k |b> over radial functions in atomic units (Bohr^k)."""
    if a.hydrogenic and b.hydrogenic:
        if (a.n, a.l) > (b.n, b.l):
            a, b = b, a
        return _hydrogenic_radial_au(a.n, a.l, b.n, b.l, k)
    if (a.n, a.l) > (b.n, b.l):
        a, b = b, a
    return _numerov_cached(a.n, a.l, a.species, b.n, b.l, b.species, k)


@lru_cache(maxsize=None)
def _numerov_cached(n1, l1, s1, n2, l2, s2, k):
    a = RydbergLevel(n1, l1, 0, s1)
    b = RydbergLevel(n2, l2, 0, s2)
    value = _numerov_radial_au(a, b, k)
    if not math.isfinite(value):
        raise AtomicStructureError(f"radial integral failed for {a.label()} / {b.label()}")
    return value


def radial_matrix_element(a: RydbergLevel, b: RydbergLevel, k: int) -> float:
    """<a| r^k |b> in SI units (m^k)."""
    value = radial_au(a, b, k)
    if not math.isfinite(value):
        raise AtomicStructureError(f"non-finite radial element for {a.label()}, {b.label()}, k={k}")
    return value * A0**k


def multipole_element_au(a: RydbergLevel, b: RydbergLevel, k: int, q: int) -> float:
    """<a| r^k C^k_q |b> in atomic units."""
    ang = angular_element(a.l, a.m, k, q, b.l, b.m)
    if ang == 0.0:
        return 0.0
    return ang * radial_au(a, b, k)


# ---------------------------------------------------------------------------
# circular state density


def circular_density(n: int, r, theta):
    """|psi_nC|^2 in m^-3 at radius r (m) and polar angle theta."""
    if n < 1:
        raise AtomicStructureError("n must be >= 1")
    x = np.asarray(r, dtype=float) / A0
    l = n - 1
    # |R_n,n-1|^2 = (2/n)^(2n+1) / (2n)! * r^(2n-2) e^{-2r/n};  |Y_ll|^2 = (2l+1)!/(4 pi 4^l (l!)^2) sin^2l
    log_rad = (2 * n + 1) * math.log(2.0 / n) - math.lgamma(2 * n + 1)
    log_ang = math.lgamma(2 * l + 2) - math.log(4 * math.pi) - l * math.log(4.0) - 2 * math.lgamma(l + 1)
    with np.errstate(divide="ignore"):
        log_r = np.where(x > 0, (2 * n - 2) * np.log(np.where(x > 0, x, 1.0)), 0.0 if n == 1 else -np.inf)
        s = np.abs(np.sin(theta))
        log_s = np.where(s > 0, 2 * l * np.log(np.where(s > 0, s, 1.0)), 0.0 if l == 0 else -np.inf)
    dens = np.exp(log_rad + log_ang + log_r - 2 * x / n + log_s)
    return dens / A0**3


# ---------------------------------------------------------------------------
# single-atom Hamiltonian


def manifold_basis(n: int, m_min: int, species: str = "rb87") -> list[RydbergLevel]:
    return [RydbergLevel(n, l, m, species) for m in range(m_min, n) for l in range(abs(m), n)]


def stark_zeeman_matrix(basis: list[RydbergLevel], fields: FieldConfig, reference: float = 0.0) -> np.ndarray:
    """Energies + Zeeman + Stark couplings (rad/s) over an arbitrary level list.

    Level energies enter relative to `reference` (rad/s).  Stark couplings are
    -e Ez <a|z|b>, which only connect Delta m = 0, Delta l = +-1.
    """
    dim = len(basis)
    H = np.zeros((dim, dim))
    ez_au = fields.Ez / AU_FIELD_V_PER_CM
    zeeman = 2 * np.pi * MU_B_HZ_PER_G * fields.Bz
    index = {}
    for i, lv in enumerate(basis):
        H[i, i] = (level_energy(lv) - reference) + lv.m * zeeman
        index.setdefault(lv.m, []).append(i)
    if ez_au != 0.0:
        for idx in index.values():
            for ii, i in enumerate(idx):
                for j in idx[ii + 1 :]:
                    a, b = basis[i], basis[j]
                    if abs(a.l - b.l) != 1:
                        continue
                    z = multipole_element_au(a, b, 1, 0)
                    H[i, j] = H[j, i] = -ez_au * z * HARTREE_RAD
    return H


def single_atom_hamiltonian(n: int, fields: FieldConfig, m_min: int | None = None,
                            n_span: int = 0, species: str = "rb87"):
    """Stark/Zeeman Hamiltonian over {|n', l, m>: m >= m_min, |n'-n| <= n_span}.

    Energies are measured from the unperturbed energy of manifold n, so with
    n_span = 0 and zero fields the matrix vanishes.  Returns (H, basis).
    """
    if m_min is None:
        m_min = max(n - 6, 0)
    if not 0 <= m_min <= n - 1:
        raise AtomicStructureError(f"m_min={m_min} outside [0, {n - 1}]")
    basis = []
    for nn in range(max(1, n - n_span), n + n_span + 1):
        if m_min <= nn - 1:
            basis.extend(manifold_basis(nn, m_min, species))
    ref = level_energy(RydbergLevel(n, n - 1, 0, species))
    return stark_zeeman_matrix(basis, fields, ref), basis


# ---------------------------------------------------------------------------
# dipole channels


@dataclass(frozen=True)
class DipoleChannel:
    final: RydbergLevel
    polarization: str
    frequency: float  # Hz, signed: positive for emission (final below initial)
    strength: float  # |<f| r C^1_q |i>|^2 in m^2


def dipole_channels(initial: RydbergLevel, n_max: int, n_min: int = 1) -> list[DipoleChannel]:
    """All dipole-allowed partners with n' <= n_max (Delta l = +-1, Delta m in {0, +-1})."""
    out = []
    e0 = level_energy(initial)
    for n2 in range(max(n_min, 1), n_max + 1):
        for l2 in (initial.l - 1, initial.l + 1):
            if not 0 <= l2 < n2:
                continue
            for dm in (-1, 0, 1):
                m2 = initial.m + dm
                if abs(m2) > l2:
                    continue
                final = RydbergLevel(n2, l2, m2, initial.species)
                q = m2 - initial.m
                amp = multipole_element_au(final, initial, 1, q)
                if amp == 0.0:
                    continue
                pol = "pi" if dm == 0 else ("sigma+" if dm < 0 else "sigma-")
                freq = (e0 - level_energy(final)) / (2 * np.pi)
                out.append(DipoleChannel(final, pol, freq, (amp * A0) ** 2))
    return out
