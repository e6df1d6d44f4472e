"""Effective spin couplings between circular Rydberg atoms.

A truncated basis of pair states around the target pair is built, the pair
Hamiltonian (one-atom energies with Stark and Zeeman terms plus the
multipole interaction) is diagonalized, and the eigenstates connected to
the target pairs are used to read off the Ising, exchange and local-field
coefficients of the qubit Hamiltonians.

Geometry: atom A sits at the origin, atom B at the displacement vector.
The quantization axis is z; the compute array lies along x.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import sph_harm_y

from .atomic_structure import (
    HARTREE_RAD,
    A0,
    FieldConfig,
    RydbergLevel,
    circular,
    level_energy,
    multipole_element_au,
    stark_zeeman_matrix,
    wigner_3j,
)

TWO_PI = 2 * np.pi
OVERLAP_THRESHOLD = 0.5

STORAGE = (59, 61)
ACTIVE = (56, 64)
TABLE_FIELDS = FieldConfig(Ez=0.313, Bz=1.39)
TABLE_SEPARATION = 12e-6


class InteractionError(RuntimeError):
    """Eigenstate identification or basis construction failed."""


@dataclass(frozen=True)
class PairWindows:
    """Truncation of the pair basis.

    n_window: allowed |n - n_target| per atom.
    dm_window: allowed depth below the target magnetic quantum number per atom.
    energy_window: maximum |pair detuning| from the target pair (rad/s).
    multipole_order: per-atom multipole cap (1 = dipole, 2 = quadrupole).
    low_l_max: largest l kept for atoms whose target is a low-l state.
    """

    n_window: int = 2
    dm_window: int = 2
    energy_window: float = TWO_PI * 60e9
    multipole_order: int = 2
    low_l_max: int = 3

    def grown(self, step: int = 1) -> "PairWindows":
        return replace(
            self,
            n_window=self.n_window + step,
            dm_window=self.dm_window + step,
            energy_window=self.energy_window * (1 + 0.5 * step),
        )


ZERO_WINDOWS = PairWindows(0, 0, 0.0)


@dataclass
class PairBasis:
    levels_a: list
    levels_b: list
    entries: np.ndarray  # (N, 2) indices into levels_a / levels_b
    targets: list  # pairs of RydbergLevel used to seed the basis
    energy_window: float
    n_window: int
    m_min: int
    multipole_order: int

    def __len__(self) -> int:
        return len(self.entries)

    def pairs(self) -> list:
        return [(self.levels_a[i], self.levels_b[j]) for i, j in self.entries]

    def index_of(self, a: RydbergLevel, b: RydbergLevel) -> int:
        ia, ib = self.levels_a.index(a), self.levels_b.index(b)
        hit = np.nonzero((self.entries[:, 0] == ia) & (self.entries[:, 1] == ib))[0]
        if hit.size == 0:
            raise InteractionError(f"pair ({a.label()}, {b.label()}) not in basis")
        return int(hit[0])


def _levels_near(target: RydbergLevel, windows: PairWindows) -> list:
    out = []
    low_l = target.l <= windows.low_l_max and not target.is_circular
    for n in range(max(1, target.n - windows.n_window), target.n + windows.n_window + 1):
        if low_l:
            ls = [target.l] if windows.n_window == 0 and windows.dm_window == 0 else range(0, min(windows.low_l_max, n - 1) + 1)
            for l in ls:
                for m in range(max(-l, target.m - windows.dm_window), min(l, target.m + windows.dm_window) + 1):
                    out.append(RydbergLevel(n, l, m, target.species))
        else:
            for m in range(max(target.m - windows.dm_window, -(n - 1)), n):
                for l in range(abs(m), n):
                    out.append(RydbergLevel(n, l, m, target.species))
    return out


def _zero_field_pair_energy(a: RydbergLevel, b: RydbergLevel) -> float:
    return level_energy(a) + level_energy(b)


def build_pair_basis(targets, windows: PairWindows = PairWindows()) -> PairBasis:
    """Pair states near one or more target pairs.

    `targets` is a pair (a, b) or a list of pairs.  Atom A levels are drawn
    from the windows around every target's first member, atom B from the
    second.  For identical-species targets with circular members the two atom
    level sets are symmetrized so that exchanged pairs are always present.
    Ordering: by |detuning| from the first target, then lexicographically.
    """
    if isinstance(targets[0], RydbergLevel):
        targets = [tuple(targets)]
    targets = [tuple(t) for t in targets]
    sym = all(a.is_circular and b.is_circular for a, b in targets)
    seeds_a = {a for a, _ in targets} | ({b for _, b in targets} if sym else set())
    seeds_b = {b for _, b in targets} | ({a for a, _ in targets} if sym else set())
    levels_a = sorted({lv for s in seeds_a for lv in _levels_near(s, windows)})
    levels_b = sorted({lv for s in seeds_b for lv in _levels_near(s, windows)})
    ea = np.array([level_energy(x) for x in levels_a])
    eb = np.array([level_energy(x) for x in levels_b])
    e_targets = [_zero_field_pair_energy(a, b) for a, b in targets]
    ia, ib = np.meshgrid(np.arange(len(levels_a)), np.arange(len(levels_b)), indexing="ij")
    e_pair = ea[:, None] + eb[None, :]
    det = np.min(np.abs(e_pair[..., None] - np.array(e_targets)), axis=-1)
    mask = det <= windows.energy_window * (1 + 1e-12) + 1e-6
    sel = np.nonzero(mask)
    entries = np.stack([ia[sel], ib[sel]], axis=1)
    order = np.lexsort((entries[:, 1], entries[:, 0], np.round(det[sel] / TWO_PI, 3)))
    entries = entries[order]
    if len(entries) == 0:
        raise InteractionError("pair basis is empty")
    basis = PairBasis(
        levels_a, levels_b, entries, targets, windows.energy_window, windows.n_window,
        min(x.m for x in levels_a + levels_b), windows.multipole_order,
    )
    for a, b in targets:
        basis.index_of(a, b)
    return basis


# ---------------------------------------------------------------------------
# multipole operator


def _clebsch(j1, m1, j2, m2, J, M) -> float:
    return (-1) ** (j1 - j2 + M) * math.sqrt(2 * J + 1) * wigner_3j(j1, j2, J, m1, m2, -M)


def _racah_harmonic(K: int, Q: int, direction: np.ndarray) -> complex:
    x, y, z = direction / np.linalg.norm(direction)
    theta = math.acos(max(-1.0, min(1.0, z)))
    phi = math.atan2(y, x)
    return complex(math.sqrt(4 * math.pi / (2 * K + 1)) * sph_harm_y(K, Q, theta, phi))


def multipole_terms(direction, max_order: int = 2):
    """List of (k1, q1, k2, q2, coefficient) for the multipole expansion at unit distance.

    V = sum coefficient * R^-(k1+k2+1) * [r1^k1 C^k1_q1] [r2^k2 C^k2_q2]   (atomic units)
    """
    direction = np.asarray(direction, dtype=float)
    out = []
    for k1 in range(1, max_order + 1):
        for k2 in range(1, max_order + 1):
            K = k1 + k2
            pref = (-1) ** k2 * math.sqrt(math.factorial(2 * K) / (math.factorial(2 * k1) * math.factorial(2 * k2)))
            for q1 in range(-k1, k1 + 1):
                for q2 in range(-k2, k2 + 1):
                    cg = _clebsch(k1, q1, k2, q2, K, q1 + q2)
                    if cg == 0.0:
                        continue
                    c = pref * cg * np.conj(_racah_harmonic(K, q1 + q2, direction))
                    if abs(c) < 1e-14:
                        continue
                    out.append((k1, q1, k2, q2, c))
    return out


def multipole_element(pa, pb, R, max_order: int = 2, direction=(1.0, 0.0, 0.0)) -> float:
    """<pa| V |pb> in rad/s for pair states pa=(a1, a2), pb=(b1, b2) at separation R (m).

    max_order is the per-atom multipole cap; 2 keeps all terms to 1/R^5.
    Terms violating the selection rules contribute exactly 0.
    """
    if R <= 0:
        raise ValueError("separation must be positive")
    if max_order < 1:
        raise ValueError("max_order must be >= 1")
    Rau = R / A0
    total = 0j
    for k1, q1, k2, q2, c in multipole_terms(direction, max_order):
        if pa[0].m - pb[0].m != q1 or pa[1].m - pb[1].m != q2:
            continue
        e1 = multipole_element_au(pa[0], pb[0], k1, q1)
        if e1 == 0.0:
            continue
        e2 = multipole_element_au(pa[1], pb[1], k2, q2)
        total += c * e1 * e2 / Rau ** (k1 + k2 + 1)
    return float(total.real) * HARTREE_RAD


def _single_atom_multipoles(levels: list, max_order: int) -> dict:
    """Dense <a| r^k C^k_q |a'> matrices (atomic units) for every (k, q)."""
    out = {}
    ls = np.array([x.l for x in levels])
    ms = np.array([x.m for x in levels])
    for k in range(1, max_order + 1):
        for q in range(-k, k + 1):
            M = np.zeros((len(levels), len(levels)))
            rows, cols = np.nonzero((ms[:, None] - ms[None, :] == q) & (np.abs(ls[:, None] - ls[None, :]) <= k)
                                    & ((ls[:, None] + ls[None, :] + k) % 2 == 0))
            for i, j in zip(rows, cols):
                M[i, j] = multipole_element_au(levels[i], levels[j], k, q)
            out[(k, q)] = M
    return out


@dataclass
class PairOperators:
    """Cached field-independent pieces of the pair Hamiltonian."""

    basis: PairBasis
    direction: np.ndarray
    by_power: dict  # inverse power p -> matrix (rad/s at R = 1 a0)

    def interaction(self, R: float, powers=None) -> np.ndarray:
        Rau = R / A0
        V = np.zeros((len(self.basis), len(self.basis)))
        for p, M in self.by_power.items():
            if powers is None or p in powers:
                V += M / Rau**p
        return V


def pair_operators(basis: PairBasis, direction=(1.0, 0.0, 0.0), max_order: int | None = None) -> PairOperators:
    max_order = basis.multipole_order if max_order is None else max_order
    direction = np.asarray(direction, dtype=float)
    # fields along z make the problem symmetric about z: rotate the axis into the
    # xz-plane so every angular coefficient is real
    direction = np.array([math.hypot(direction[0], direction[1]), 0.0, direction[2]])
    mA = _single_atom_multipoles(basis.levels_a, max_order)
    mB = mA if basis.levels_b == basis.levels_a else _single_atom_multipoles(basis.levels_b, max_order)
    ia, ib = basis.entries[:, 0], basis.entries[:, 1]
    by_power: dict = {}
    for k1, q1, k2, q2, c in multipole_terms(direction, max_order):
        A = mA[(k1, q1)][np.ix_(ia, ia)]
        if not A.any():
            continue
        B = mB[(k2, q2)][np.ix_(ib, ib)]
        term = (c * A * B).real * HARTREE_RAD
        p = k1 + k2 + 1
        by_power[p] = by_power.get(p, 0.0) + term
    return PairOperators(basis, direction, by_power)


def one_atom_pair_matrix(basis: PairBasis, fields: FieldConfig, offset: float = 0.0) -> np.ndarray:
    """H_A (x) 1 + 1 (x) H_B restricted to the pair basis (rad/s), relative to the first target."""
    a0, b0 = basis.targets[0]
    ref = level_energy(a0) + level_energy(b0)
    HA = stark_zeeman_matrix(basis.levels_a, fields, 0.0)
    HB = stark_zeeman_matrix(basis.levels_b, fields, 0.0)
    ia, ib = basis.entries[:, 0], basis.entries[:, 1]
    H = HA[np.ix_(ia, ia)] * (ib[:, None] == ib[None, :]) + HB[np.ix_(ib, ib)] * (ia[:, None] == ia[None, :])
    H[np.diag_indices_from(H)] -= ref - offset
    return H


# ---------------------------------------------------------------------------
# eigenstate identification


@dataclass
class PairSpectrum:
    energies: np.ndarray
    vectors: np.ndarray


def _diag(H: np.ndarray) -> PairSpectrum:
    w, v = np.linalg.eigh(H)
    return PairSpectrum(w, v)


def _find(spec: PairSpectrum, ref_vec: np.ndarray, what: str):
    ov = np.abs(ref_vec @ spec.vectors) ** 2
    i = int(np.argmax(ov))
    if ov[i] < OVERLAP_THRESHOLD:
        raise InteractionError(f"state {what} lost: best overlap {ov[i]:.3f} < {OVERLAP_THRESHOLD}")
    return i, float(ov[i])


def pair_shifts(ops: PairOperators, fields: FieldConfig, R: float, pairs, powers=None, offset: float = 0.0):
    """Interaction-induced shifts of the listed pair states.

    For each (a, b) with a != b and (b, a) in the basis the symmetric and
    antisymmetric combinations are tracked; returns dict mapping
    (a, b) -> {"V": mean shift, "E": E+ - E-, "overlap": min overlap}
    and for a == b or no exchange partner -> {"V": shift, "E": 0.0}.
    All in rad/s.
    """
    basis = ops.basis
    H0 = one_atom_pair_matrix(basis, fields, offset)
    spec0 = _diag(H0)
    spec = _diag(H0 + ops.interaction(R, powers))
    out = {}
    n = len(basis)
    for a, b in pairs:
        i = basis.index_of(a, b)
        swapped = None
        if a != b:
            try:
                swapped = basis.index_of(b, a)
            except (InteractionError, ValueError):
                swapped = None
        if swapped is None:
            bare = np.zeros(n)
            bare[i] = 1.0
            k0, _ = _find(spec0, bare, f"{a.label()},{b.label()} (R=inf)")
            k, ov = _find(spec, spec0.vectors[:, k0], f"{a.label()},{b.label()}")
            out[(a, b)] = {"V": spec.energies[k] - spec0.energies[k0], "E": 0.0, "overlap": ov,
                           "vector": spec.vectors[:, k], "reference": spec0.vectors[:, k0], "bare_index": i}
            continue
        # the dressed pairs (a, b) and (b, a) are degenerate at R = inf; take the two
        # eigenvectors carrying most of their weight and project onto that plane
        w0 = np.abs(spec0.vectors[i]) ** 2 + np.abs(spec0.vectors[swapped]) ** 2
        top = np.argsort(w0)[-2:]
        if w0[top].sum() < 2 * OVERLAP_THRESHOLD:
            raise InteractionError(f"pair ({a.label()},{b.label()}) lost at R=inf")
        e_inf = float(spec0.energies[top].mean())
        P = spec0.vectors[:, top]
        refs = []
        for sgn in (1.0, -1.0):
            bare = np.zeros(n)
            bare[i] = 1 / math.sqrt(2)
            bare[swapped] = sgn / math.sqrt(2)
            ref = P @ (P.T @ bare)
            refs.append(ref / np.linalg.norm(ref))
        Rm = np.stack(refs, axis=1)
        # the two interacting eigenstates with most weight in the (+, -) plane; an effective 2x2
        # Hamiltonian in that plane (symmetric orthonormalization) stays well defined even when
        # the exchange splitting is far below the eigenvalue resolution
        w = np.sum((Rm.T @ spec.vectors) ** 2, axis=0)
        top = np.argsort(w)[-2:]
        ov = float(w[top].sum() / 2)
        if ov < OVERLAP_THRESHOLD:
            raise InteractionError(f"pair ({a.label()},{b.label()}) lost: overlap {ov:.3f} < {OVERLAP_THRESHOLD}")
        A = Rm.T @ spec.vectors[:, top]
        S = A @ A.T
        sv, su = np.linalg.eigh(S)
        S_half_inv = su @ np.diag(sv**-0.5) @ su.T
        Heff = S_half_inv @ A @ np.diag(spec.energies[top] - e_inf) @ A.T @ S_half_inv
        out[(a, b)] = {"V": 0.5 * (Heff[0, 0] + Heff[1, 1]), "E": Heff[0, 0] - Heff[1, 1], "overlap": ov}
    return out


# ---------------------------------------------------------------------------
# coefficients


@dataclass(frozen=True)
class InteractionCoefficients:
    """Effective couplings (rad/s) of the storage/active qubit Hamiltonians."""

    J_ss: float
    Jz_ss: float
    Jz_sa: float
    Jz_aa: float
    Delta_ss: float
    Delta_sa: float
    Delta_as: float
    Delta_aa: float
    separation: float = TABLE_SEPARATION
    fields: FieldConfig = field(default_factory=lambda: TABLE_FIELDS)
    E_1s1a: float = 0.0

    NAMES = ("J_ss", "Jz_ss", "Jz_sa", "Jz_aa", "Delta_ss", "Delta_sa", "Delta_as", "Delta_aa")

    def __post_init__(self):
        for name in self.NAMES + ("E_1s1a",):
            if not math.isfinite(getattr(self, name)):
                raise InteractionError(f"{name} is not finite")

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.NAMES}

    def in_hz(self) -> dict:
        return {k: getattr(self, k) / TWO_PI for k in self.NAMES}

    def scaled(self, factor: float) -> "InteractionCoefficients":
        kw = {k: getattr(self, k) * factor for k in self.NAMES}
        return replace(self, **kw, E_1s1a=self.E_1s1a * factor)

    @classmethod
    def table(cls) -> "InteractionCoefficients":
        """The published reference values at 12 um (used as simulation defaults)."""
        v = dict(J_ss=-0.918, Jz_ss=1.84, Jz_sa=-10.62, Jz_aa=33.61, Delta_ss=-1.51,
                 Delta_sa=0.144, Delta_as=-6.60, Delta_aa=-6.24)
        return cls(**{k: TWO_PI * 1e3 * x for k, x in v.items()}, E_1s1a=TWO_PI * -0.9)


def same_subspace_coefficients(V_nn, V_nnp, V_npn, V_npnp, E_nnp):
    """Quarter-sum map for two atoms sharing one qubit encoding -> (Jz, J, Delta, E0)."""
    Jz = (V_nn - V_nnp - V_npn + V_npnp) / 4
    # E_nnp is the splitting of the symmetric/antisymmetric pair states; the
    # flip-flop term J (S+S- + S-S+)/2 with Pauli spins splits them by 4J
    J = E_nnp / 4
    Delta = (V_nn - V_npnp) / 4
    E0 = (V_nn + V_nnp + V_npn + V_npnp) / 4
    return Jz, J, Delta, E0


def cross_subspace_coefficients(V00, V01, V10, V11):
    """Storage-active quarter-sum map -> (Jz_sa, Delta_sa, Delta_as, E0)."""
    Jz = (V00 - V01 - V10 + V11) / 4
    d_sa = (V00 + V01 - V10 - V11) / 4
    d_as = (V00 - V01 + V10 - V11) / 4
    E0 = (V00 + V01 + V10 + V11) / 4
    return Jz, d_sa, d_as, E0


class CoefficientModel:
    """Caches one pair basis and multipole blocks per target pair.

    Each target pair gets its own basis centred on it, so every pair shift is
    computed with the same relative truncation.
    """

    def __init__(self, windows: PairWindows = PairWindows(), direction=(1.0, 0.0, 0.0),
                 storage=STORAGE, active=ACTIVE, species: str = "rb87", offset: float = 0.0):
        self.windows = windows
        self.offset = offset  # constant added to every one-atom pair energy (rad/s)
        self.direction = np.asarray(direction, dtype=float)
        self.s = [circular(n, species) for n in storage]
        self.a = [circular(n, species) for n in active]
        self._ops = {}

    def ops(self, a: RydbergLevel, b: RydbergLevel) -> PairOperators:
        key = (a, b)
        if key not in self._ops:
            self._ops[key] = pair_operators(build_pair_basis((a, b), self.windows), self.direction)
        return self._ops[key]

    def shift(self, a: RydbergLevel, b: RydbergLevel, fields: FieldConfig, R: float, powers=None) -> dict:
        return pair_shifts(self.ops(a, b), fields, R, [(a, b)], powers, self.offset)[(a, b)]

    def _same(self, levels, fields, R, powers):
        x0, x1 = levels
        V00 = self.shift(x0, x0, fields, R, powers)["V"]
        V11 = self.shift(x1, x1, fields, R, powers)["V"]
        sh = self.shift(x0, x1, fields, R, powers)
        return same_subspace_coefficients(V00, sh["V"], sh["V"], V11, sh["E"])

    def storage(self, fields: FieldConfig, R: float, powers=None):
        Jz, J, D, _ = self._same(self.s, fields, R, powers)
        return Jz, J, D

    def active(self, fields: FieldConfig, R: float, powers=None):
        Jz, _, D, _ = self._same(self.a, fields, R, powers)
        return Jz, D

    def cross(self, fields: FieldConfig, R: float, powers=None):
        s0, s1 = self.s
        a0, a1 = self.a
        sh = {(x, y): self.shift(x, y, fields, R, powers) for x in (s0, s1) for y in (a0, a1)}
        Jz, dsa, das, _ = cross_subspace_coefficients(
            sh[(s0, a0)]["V"], sh[(s0, a1)]["V"], sh[(s1, a0)]["V"], sh[(s1, a1)]["V"])
        return Jz, dsa, das, sh[(s1, a1)]["E"]

    def coefficients(self, fields: FieldConfig = TABLE_FIELDS, R: float = TABLE_SEPARATION, powers=None):
        Jz_ss, J_ss, D_ss = self.storage(fields, R, powers)
        Jz_aa, D_aa = self.active(fields, R, powers)
        Jz_sa, D_sa, D_as, E_x = self.cross(fields, R, powers)
        return InteractionCoefficients(J_ss, Jz_ss, Jz_sa, Jz_aa, D_ss, D_sa, D_as, D_aa, R, fields, E_x)


def extract_coefficients(separation: float = TABLE_SEPARATION, fields: FieldConfig = TABLE_FIELDS,
                         windows: PairWindows = PairWindows(), model: CoefficientModel | None = None,
                         powers=None) -> InteractionCoefficients:
    if not 3e-6 <= separation <= 50e-6:
        raise ValueError("separation must lie in [3, 50] um")
    model = model or CoefficientModel(windows)
    return model.coefficients(fields, separation, powers)


# ---------------------------------------------------------------------------
# dipolar-condition tuning


DIPOLAR_RESIDUAL_TOL = TWO_PI * 1.0


def dipolar_residual(model: CoefficientModel, fields: FieldConfig, R: float = TABLE_SEPARATION) -> float:
    """Jz_ss + 2 J_ss (rad/s); zero on the dipolar condition."""
    Jz, J, _ = model.storage(fields, R)
    return Jz + 2 * J


def tune_dipolar_condition(separation: float = TABLE_SEPARATION, Bz_grid=(1.39,), Ez_grid=None,
                           model: CoefficientModel | None = None, tol: float = DIPOLAR_RESIDUAL_TOL) -> list:
    """Field points with Jz_ss = -2 J_ss.

    For every Bz the residual is scanned over Ez_grid (V/cm) and each sign
    change is refined by Brent's method until |Jz_ss + 2 J_ss| < tol.
    Returns FieldConfig points ordered by (Bz, Ez).
    """
    from scipy.optimize import brentq

    model = model or CoefficientModel()
    Ez_grid = np.linspace(0.15, 0.5, 8) if Ez_grid is None else np.asarray(Ez_grid, dtype=float)
    out = []
    for Bz in Bz_grid:
        f = lambda ez: dipolar_residual(model, FieldConfig(float(ez), float(Bz)), separation)
        vals = [f(ez) for ez in Ez_grid]
        for lo, hi, vlo, vhi in zip(Ez_grid[:-1], Ez_grid[1:], vals[:-1], vals[1:]):
            if vlo == 0.0:
                out.append(FieldConfig(float(lo), float(Bz)))
                continue
            if np.sign(vlo) == np.sign(vhi):
                continue
            ez = brentq(f, lo, hi, xtol=1e-7, rtol=1e-12)
            if abs(f(ez)) >= tol:
                raise InteractionError(f"root refinement at Bz={Bz} G stalled at residual {f(ez) / TWO_PI:.3g} Hz")
            out.append(FieldConfig(float(ez), float(Bz)))
    if not out:
        raise InteractionError("Jz_ss + 2 J_ss does not change sign on the supplied grid")
    return out


# ---------------------------------------------------------------------------
# ancilla readout interaction


ANCILLA = RydbergLevel(55, 0, 0)
ANCILLA_DEPTH = 5e-6
ANCILLA_WINDOWS = PairWindows(n_window=2, dm_window=2, energy_window=TWO_PI * 60e9)


@dataclass
class AncillaResult:
    V: float  # rad/s
    admixture: float
    overlap: float
    basis_size: int


def ancilla_interaction(n: int, fields: FieldConfig = FieldConfig(0.0, TABLE_FIELDS.Bz),
                        displacement=(0.0, 0.0, ANCILLA_DEPTH), ancilla: RydbergLevel = ANCILLA,
                        windows: PairWindows = ANCILLA_WINDOWS, species: str = "rb87",
                        detail: bool = False):
    """Interaction shift V_{a,n} (rad/s) of the pair (ancilla, nC).

    The ancilla sits at the origin and the circular atom at `displacement`
    (m); lateral offsets go in x and y, the array spacing along z.
    With detail=True an AncillaResult (including the admixture) is returned.
    """
    d = np.asarray(displacement, dtype=float)
    R = float(np.linalg.norm(d))
    if R == 0:
        raise ValueError("displacement must be nonzero")
    target = circular(n, species)
    basis = build_pair_basis((ancilla, target), windows)
    ops = pair_operators(basis, d / R)
    sh = pair_shifts(ops, fields, R, [(ancilla, target)])[(ancilla, target)]
    if not detail:
        return sh["V"]
    return AncillaResult(sh["V"], admixture_probability(sh["vector"], sh["reference"]), sh["overlap"], len(basis))


def admixture_probability(eigenstate: np.ndarray, unperturbed: np.ndarray) -> float:
    """Weight of other pair states mixed in: 1 - |<unperturbed|eigenstate>|^2."""
    ov = abs(np.vdot(unperturbed, eigenstate)) ** 2 / (np.vdot(unperturbed, unperturbed).real
                                                       * np.vdot(eigenstate, eigenstate).real)
    return float(max(0.0, 1.0 - ov))


# ---------------------------------------------------------------------------
# sweeps and export


SWEEP_COLUMNS = ("Ez", "Bz", "R") + tuple(f"{k}_hz2pi" for k in InteractionCoefficients.NAMES)


def coefficient_sweep(points, model: CoefficientModel | None = None) -> list[dict]:
    """Coefficients at each (FieldConfig, R) point, as rows in units of 2*pi*Hz."""
    model = model or CoefficientModel()
    rows = []
    for fields, R in points:
        c = model.coefficients(fields, R)
        row = {"Ez": fields.Ez, "Bz": fields.Bz, "R": R}
        row.update({f"{k}_hz2pi": v for k, v in c.in_hz().items()})
        rows.append(row)
    return rows


def write_sweep(rows: list[dict], csv_path, json_path=None, windows: PairWindows = PairWindows()) -> None:
    import csv
    import json

    with open(csv_path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(float(r[k])) for k in SWEEP_COLUMNS})
    if json_path is not None:
        meta = {
            "windows": {
                "n_window": windows.n_window,
                "dm_window": windows.dm_window,
                "energy_window_hz": windows.energy_window / TWO_PI,
                "multipole_order": windows.multipole_order,
                "low_l_max": windows.low_l_max,
            },
            "points": len(rows),
            "columns": list(SWEEP_COLUMNS),
        }
        with open(json_path, "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
