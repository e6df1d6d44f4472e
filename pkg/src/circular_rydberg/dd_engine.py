"""Dynamical decoupling of circular-state spin chains.

Pulse sequences, toggling-frame bookkeeping, the decoupling conditions for
static and motional error terms, and dense simulations of storage, two-qubit
gates and thermal motion.

Conventions follow quantum_core: hbar = 1, rad/s, Pauli spins, site 0 is the
slowest tensor factor.  A pulse (axis a, angle theta) applies
exp(-i theta sigma_a / 2) on every storage site.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import reduce
from pathlib import Path

import numpy as np
from scipy import constants as sc

from .atomic_structure import RB87_MASS
from .interactions import InteractionCoefficients
from .quantum_core import (
    SX,
    SY,
    SZ,
    ErrorEstimate,
    HamiltonianTerm,
    average_error_per_atom,
    computational_subspace,
    expm_hermitian,
    haar_vector,
    sample_rng,
)

TWO_PI = 2 * np.pi
AXES = {"x": (SX, 1.0), "y": (SY, 1.0), "-x": (SX, -1.0), "-y": (SY, -1.0)}
AXIS_VECTORS = {"x": (1, 0, 0), "y": (0, 1, 0), "-x": (-1, 0, 0), "-y": (0, -1, 0)}
SNAP_TOL = 1e-9
CONDITION_TOL = 1e-9
MAX_STORAGE_ATOMS = 8
MAX_DIM = 4**4


class SequenceError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# pulse sequences


@dataclass(frozen=True)
class Pulse:
    axis: str
    angle: float  # rad
    center: float  # fraction of the cycle period

    def __post_init__(self):
        if self.axis not in AXES:
            raise SequenceError(f"pulse axis {self.axis!r} not in {sorted(AXES)}")
        if not (math.isclose(self.angle, np.pi / 2) or math.isclose(self.angle, np.pi)):
            raise SequenceError(f"pulse angle {self.angle} must be pi/2 or pi")

    def unitary(self, angle_error: float = 0.0) -> np.ndarray:
        op, sgn = AXES[self.axis]
        return expm_hermitian(sgn * op / 2, self.angle * (1 + angle_error))


@dataclass(frozen=True)
class PulseSequence:
    """Pulses with centres at fractions of the cycle period t_c; each lasts t_p."""

    pulses: tuple
    t_c: float = 1.0
    t_p: float = 0.0
    name: str = ""

    def __post_init__(self):
        if self.t_c <= 0 or self.t_p < 0:
            raise SequenceError("t_c must be > 0 and t_p >= 0")
        if self.duty > 1 + 1e-12:
            raise SequenceError(f"duty cycle {self.duty:.3g} exceeds 1")
        starts = self.start_times()
        for k, s in enumerate(starts):
            if s < -1e-12 * self.t_c or s + self.t_p > self.t_c * (1 + 1e-12):
                raise SequenceError(f"pulse {k} does not fit inside the cycle")
            if k and s < starts[k - 1] + self.t_p - 1e-12 * self.t_c:
                raise SequenceError(f"pulses {k - 1} and {k} overlap")

    def __len__(self) -> int:
        return len(self.pulses)

    @property
    def duty(self) -> float:
        return len(self.pulses) * self.t_p / self.t_c

    def start_times(self) -> list:
        return [p.center * self.t_c - self.t_p / 2 for p in self.pulses]

    def timed(self, t_c: float, duty: float = 0.0) -> "PulseSequence":
        """Same pulses with period t_c and duty cycle N_p t_p / t_c."""
        return replace(self, t_c=t_c, t_p=duty * t_c / max(len(self.pulses), 1))

    def inverse(self) -> "PulseSequence":
        """Reversed order with every rotation inverted (centres mirrored)."""
        flip = {"x": "-x", "-x": "x", "y": "-y", "-y": "y"}
        pulses = tuple(Pulse(flip[p.axis], p.angle, 1 - p.center) for p in reversed(self.pulses))
        return replace(self, pulses=pulses, name=f"{self.name} inverse")

    def then(self, other: "PulseSequence", name: str = "") -> "PulseSequence":
        """Concatenation; each half keeps its own relative timing inside a doubled period."""
        a = [Pulse(p.axis, p.angle, p.center / 2) for p in self.pulses]
        b = [Pulse(p.axis, p.angle, 0.5 + p.center / 2) for p in other.pulses]
        return PulseSequence(tuple(a + b), self.t_c, self.t_p, name)


def equidistant(tokens, name: str = "") -> PulseSequence:
    """Sequence from tokens like 'x', '-y', 'xpi'; pulse k centred at (k - 1/2)/N."""
    pulses = []
    n = len(tokens)
    for k, tok in enumerate(tokens):
        angle = np.pi if tok.endswith("pi") else np.pi / 2
        pulses.append(Pulse(tok[:-2] if tok.endswith("pi") else tok, angle, (k + 0.5) / n))
    return PulseSequence(tuple(pulses), name=name)


def parse_sequence(text: str, name: str = "") -> PulseSequence:
    """Sequence file: one pulse per line `time_fraction axis angle_deg`, '#' comments.

    time_fraction is the pulse centre in units of t_c; axis in x, y, -x, -y;
    angle 90 or 180.
    """
    pulses = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise SequenceError(f"line {lineno}: expected 'time_fraction axis angle', got {raw!r}")
        try:
            frac = float(parts[0])
            deg = float(parts[2])
        except ValueError as exc:
            raise SequenceError(f"line {lineno}: {exc}") from None
        if deg not in (90.0, 180.0):
            raise SequenceError(f"line {lineno}: angle must be 90 or 180")
        if not 0 <= frac <= 1:
            raise SequenceError(f"line {lineno}: time fraction outside [0, 1]")
        pulses.append(Pulse(parts[1], np.deg2rad(deg), frac))
    if any(b.center <= a.center for a, b in zip(pulses, pulses[1:])):
        raise SequenceError("pulse times must be strictly increasing")
    return PulseSequence(tuple(pulses), name=name)


def load_sequence(path) -> PulseSequence:
    p = Path(path)
    return parse_sequence(p.read_text(encoding="utf-8"), name=p.stem)


def format_sequence(seq: PulseSequence) -> str:
    lines = [f"# {seq.name}" if seq.name else "# pulse sequence", "# time_fraction axis angle"]
    for p in seq.pulses:
        lines.append(f"{p.center:.12g} {p.axis} {round(np.rad2deg(p.angle))}")
    return "\n".join(lines) + "\n"


def builtin_sequences() -> dict:
    """The three decoupling sequences (keys 1, 2, 3)."""
    s1 = equidistant("x -y ypi y x ypi".split(), "sequence1")
    s2 = equidistant("x y x -y x y x -y x y x -y".split(), "sequence2")
    s3 = s2.then(s2.inverse(), "sequence3")
    return {1: s1, 2: s2, 3: s3}


# ---------------------------------------------------------------------------
# toggling frames and decoupling conditions


@dataclass(frozen=True)
class ToggleFrames:
    F: np.ndarray  # (N, 3) integer rows: S_z in the k-th toggling frame
    beta: np.ndarray  # (N, 3): F_{k+1} x F_k, cyclic
    closing: np.ndarray  # frame after the full cycle


def _bloch(op: np.ndarray) -> np.ndarray:
    return np.array([np.trace(op @ s).real / 2 for s in (SX, SY, SZ)])


def toggling_frames(seq: PulseSequence) -> ToggleFrames:
    """Frame rows from conjugating S_z through the accumulated ideal pulses."""
    U = np.eye(2, dtype=complex)
    rows = []
    for p in list(seq.pulses) + [None]:
        v = _bloch(U.conj().T @ SZ @ U)
        snapped = np.round(v)
        if np.max(np.abs(v - snapped)) > SNAP_TOL or np.count_nonzero(snapped) != 1:
            raise SequenceError(f"frame {len(rows)} is not a signed axis: {v}")
        rows.append(snapped.astype(int))
        if p is not None:
            U = p.unitary() @ U
    F = np.array(rows[:-1], dtype=int).reshape(-1, 3) if seq.pulses else np.array([[0, 0, 1]])
    beta = np.array([np.cross(F[(k + 1) % len(F)], F[k]) for k in range(len(F))], dtype=int)
    return ToggleFrames(F, beta, rows[-1])


@dataclass(frozen=True)
class ConditionResult:
    passed: bool
    residual: float


CONDITION_TEXT = {
    1: "sum_k F = 0 (static S_z terms)",
    2: "sum_k |F| = N/3 (dipolar interactions)",
    3: "sum_k beta = 0 (static rotation-angle error)",
    4: "sum_k e^{-ik w tau} F = 0 (S_z x(t))",
    5: "sum_k e^{-2ik w tau} F = 0 (S_z x(t)^2)",
    6: "sum_k e^{-ik w tau} |F| = 0 (interaction x(t))",
    7: "sum_k e^{-ik w tau} beta = 0 (drive x(t))",
    8: "sum_k e^{-2ik w tau} beta = 0 (drive x(t)^2)",
}


def check_conditions(seq: PulseSequence, n_periods: int = 2, tol: float = CONDITION_TOL) -> dict:
    """Residuals of the eight decoupling conditions with w tau N = 2 pi n_periods."""
    fr = toggling_frames(seq)
    F, beta = fr.F.astype(float), fr.beta.astype(float)
    N = len(F)
    k = np.arange(1, N + 1)[:, None]
    wt = TWO_PI * n_periods / N

    def phased(m, X):
        return float(np.max(np.abs(np.sum(np.exp(-1j * m * k * wt) * X, axis=0))))

    def commensurate(x):
        return abs(x - round(x)) < 1e-12

    res = {
        1: float(np.max(np.abs(F.sum(0)))),
        2: float(np.max(np.abs(np.abs(F).sum(0) - N / 3))),
        3: float(np.max(np.abs(beta.sum(0)))),
        4: 0.0 if commensurate(wt / TWO_PI) else phased(1, F),
        5: 0.0 if commensurate(wt / np.pi) else phased(2, F),
        6: 0.0 if commensurate(wt / TWO_PI) else phased(1, np.abs(F)),
        7: phased(1, beta),
        8: phased(2, beta),
    }
    return {i: ConditionResult(r < tol, r) for i, r in res.items()}


# ---------------------------------------------------------------------------
# spin-chain Hamiltonian


STORAGE_TERMS = ("Jz_ss", "J_ss", "Delta_ss")
ACTIVE_TERMS = ("Jz_sa", "Delta_sa", "Delta_as", "Jz_aa", "Delta_aa")


@dataclass(frozen=True)
class SpinChainConfig:
    n_atoms: int = 8
    levels: str = "storage2"  # or "full4"
    coefficients: InteractionCoefficients = field(default_factory=InteractionCoefficients.table)
    separation: float = 12e-6
    open_chain: bool = True
    cutoff: int | None = None  # max |i - j| kept
    J_offset: float = 0.0  # rad/s added to J_ss (manual dipolar detuning)

    def __post_init__(self):
        if not 2 <= self.n_atoms <= 10:
            raise ValueError("n_atoms must lie in [2, 10]")
        if self.levels not in ("storage2", "full4"):
            raise ValueError("levels must be 'storage2' or 'full4'")
        if self.local_dim ** self.n_atoms > 4**5:
            raise ValueError(f"Hilbert space {self.local_dim}^{self.n_atoms} exceeds the dense budget")

    @property
    def local_dim(self) -> int:
        return 2 if self.levels == "storage2" else 4

    @property
    def dim(self) -> int:
        return self.local_dim**self.n_atoms

    def couplings(self) -> dict:
        c = self.coefficients.as_dict()
        c["J_ss"] += self.J_offset
        return c

    def pairs(self):
        """(i, j, signed site distance i - j, 1/d^6 weight) for i < j."""
        out = []
        for i in range(self.n_atoms):
            for j in range(i + 1, self.n_atoms):
                d = j - i
                if not self.open_chain:
                    d = min(d, self.n_atoms - d)
                if self.cutoff is not None and d > self.cutoff:
                    continue
                out.append((i, j, i - j, 1.0 / d**6))
        return out


def _pair_operator_terms(levels: str) -> dict:
    """Operator-label products for each coupling, symmetric in the two sites."""
    terms = {
        "Jz_ss": [("Sz", "Sz")],
        "J_ss": [("Sx", "Sx"), ("Sy", "Sy")],
        "Delta_ss": [("Sz", "n"), ("n", "Sz")],
    }
    if levels == "full4":
        terms.update({
            "Jz_sa": [("Sz", "S̄z"), ("S̄z", "Sz")],
            "Delta_sa": [("Sz", "n̄"), ("n̄", "Sz")],
            "Delta_as": [("S̄z", "n"), ("n", "S̄z")],
            "Jz_aa": [("S̄z", "S̄z")],
            "Delta_aa": [("S̄z", "n̄"), ("n̄", "S̄z")],
        })
    return terms


class ChainOperators:
    """Per-pair, per-coupling matrices of a chain (built once, combined with scalars)."""

    def __init__(self, config: SpinChainConfig):
        self.config = config
        self.names = list(_pair_operator_terms(config.levels))
        labels = _pair_operator_terms(config.levels)
        self.pairs = config.pairs()
        self.blocks = {}
        for i, j, _, _ in self.pairs:
            for name in self.names:
                M = sum(HamiltonianTerm(1.0, (i, j), lab).matrix(config.n_atoms, config.local_dim)
                        for lab in labels[name])
                self.blocks[(i, j, name)] = M

    def hamiltonian(self, factors=None) -> np.ndarray:
        """sum over pairs of weight * coefficient * factor * operator.

        factors maps (pair_index, name) -> multiplier (default 1).
        """
        c = self.config.couplings()
        H = np.zeros((self.config.dim, self.config.dim), dtype=complex)
        for p, (i, j, _, w) in enumerate(self.pairs):
            for name in self.names:
                coef = c[name]
                if coef == 0.0:
                    continue
                f = 1.0 if factors is None else factors.get((p, name), 1.0)
                H += (w * coef * f) * self.blocks[(i, j, name)]
        return H


def build_hamiltonian(config: SpinChainConfig) -> np.ndarray:
    """Interaction Hamiltonian of the chain with 1/|i-j|^6 scaling of every coupling."""
    return ChainOperators(config).hamiltonian()


def local_sum(config: SpinChainConfig, label: str, sites=None) -> np.ndarray:
    sites = range(config.n_atoms) if sites is None else sites
    return sum(HamiltonianTerm(1.0, (s,), (label,)).matrix(config.n_atoms, config.local_dim) for s in sites)


def drive_hamiltonian(config: SpinChainConfig, pulse: Pulse, t_p: float, angle_error: float = 0.0) -> np.ndarray:
    """Global drive on the storage levels realising the pulse in time t_p."""
    label = "Sx" if pulse.axis.endswith("x") else "Sy"
    sgn = -1.0 if pulse.axis.startswith("-") else 1.0
    rate = pulse.angle * (1 + angle_error) / t_p
    return (sgn * rate / 2) * local_sum(config, label)


def pulse_unitary(config: SpinChainConfig, pulse: Pulse, angle_error: float = 0.0) -> np.ndarray:
    """Instantaneous pulse on every site's storage levels."""
    u = pulse.unitary(angle_error)
    local = np.eye(config.local_dim, dtype=complex)
    local[:2, :2] = u
    return reduce(np.kron, [local] * config.n_atoms)


# ---------------------------------------------------------------------------
# cycle propagators


def cycle_segments(seq: PulseSequence, H_int: np.ndarray, config: SpinChainConfig, angle_error: float = 0.0):
    """One cycle as a list of ('free', dt) / ('pulse', Pulse, dt) items with the relevant Hamiltonians."""
    segs = []
    t = 0.0
    for p, start in zip(seq.pulses, seq.start_times()):
        if start > t:
            segs.append((H_int, start - t, None))
        if seq.t_p > 0:
            segs.append((H_int + drive_hamiltonian(config, p, seq.t_p, angle_error), seq.t_p, None))
        else:
            segs.append((None, 0.0, pulse_unitary(config, p, angle_error)))
        t = start + seq.t_p
    if seq.t_c > t:
        segs.append((H_int, seq.t_c - t, None))
    return segs


def segments_propagator(segs, dim: int, substeps: int = 1) -> np.ndarray:
    U = np.eye(dim, dtype=complex)
    cache = {}
    for H, dt, instant in segs:
        if instant is not None:
            U = instant @ U
            continue
        key = (id(H), dt)
        if key not in cache:
            step = expm_hermitian(H, dt / substeps)
            cache[key] = np.linalg.matrix_power(step, substeps) if substeps > 1 else step
        U = cache[key] @ U
    return U


def cycle_propagators(seq: PulseSequence, config: SpinChainConfig, H_int: np.ndarray | None = None,
                      angle_error: float = 0.0, substeps: int = 1):
    """(U, U0): one cycle with and without interactions, identical pulses."""
    H_int = build_hamiltonian(config) if H_int is None else H_int
    zero = np.zeros_like(H_int)
    U = segments_propagator(cycle_segments(seq, H_int, config, angle_error), config.dim, substeps)
    U0 = segments_propagator(cycle_segments(seq, zero, config, angle_error), config.dim, substeps)
    return U, U0


# ---------------------------------------------------------------------------
# storage simulation


@dataclass(frozen=True)
class StorageResult:
    cycles: np.ndarray
    times: np.ndarray
    errors: tuple  # ErrorEstimate per refocus time

    @property
    def mean(self) -> np.ndarray:
        return np.array([e.mean for e in self.errors])


def default_cycle_time(coefficients: InteractionCoefficients, product: float = 0.021) -> float:
    """t_c = product / |J_ss|."""
    return product / abs(coefficients.J_ss)


def _twirl_ops(rng: np.random.Generator, n_sites: int) -> list:
    """Random single-site pi rotations (identity or a Pauli) on the storage levels."""
    paulis = (np.eye(2, dtype=complex), SX, SY, SZ)
    return [paulis[i] for i in rng.integers(0, 4, size=n_sites)]


def _apply_local(psi: np.ndarray, ops: list, local_dim: int) -> np.ndarray:
    n = len(ops)
    t = psi.reshape((local_dim,) * n)
    for site, u in enumerate(ops):
        full = np.eye(local_dim, dtype=complex)
        full[:2, :2] = u
        t = np.moveaxis(np.tensordot(full, t, axes=([1], [site])), 0, site)
    return t.reshape(-1)


def simulate_storage(seq: PulseSequence, config: SpinChainConfig = SpinChainConfig(), n_cycles: int = 1, *,
                     t_c: float | None = None, duty: float = 0.025, twirl: bool = False,
                     angle_error: float = 0.0, samples: int = 20, seed: int = 0,
                     substeps: int = 1, H_int: np.ndarray | None = None) -> StorageResult:
    """Average error per atom at the refocus times 1..n_cycles.

    The reference evolution uses the same (finite) pulses with interactions
    switched off.  With twirl=True a seeded random Pauli layer follows every
    cycle in both evolutions.
    """
    if config.levels == "storage2" and config.n_atoms > MAX_STORAGE_ATOMS:
        raise ValueError(f"storage simulation limited to {MAX_STORAGE_ATOMS} atoms")
    if config.dim > 4**5:
        raise ValueError("Hilbert space exceeds the dense budget")
    t_c = default_cycle_time(config.coefficients) if t_c is None else t_c
    timed = seq.timed(t_c, duty)
    U, U0 = cycle_propagators(timed, config, H_int, angle_error, substeps)
    sub = computational_subspace(config.n_atoms, config.local_dim)
    cycles = np.arange(1, n_cycles + 1)
    if not twirl:
        errs = []
        Un, U0n = np.eye(config.dim, dtype=complex), np.eye(config.dim, dtype=complex)
        for _ in cycles:
            Un, U0n = U @ Un, U0 @ U0n
            errs.append(average_error_per_atom(Un, U0n, config.n_atoms, samples, seed, sub))
        return StorageResult(cycles, cycles * t_c, tuple(errs))
    table = np.zeros((samples, n_cycles))
    for i in range(samples):
        rng = sample_rng(seed, i)
        psi = np.zeros(config.dim, dtype=complex)
        psi[sub] = haar_vector(len(sub), rng)
        phi = psi.copy()
        for c in range(n_cycles):
            ops = _twirl_ops(rng, config.n_atoms)
            psi = _apply_local(U @ psi, ops, config.local_dim)
            phi = _apply_local(U0 @ phi, ops, config.local_dim)
            table[i, c] = max(0.0, 1 - abs(np.vdot(phi, psi)) ** 2) / config.n_atoms
    errs = tuple(ErrorEstimate(float(col.mean()), float(col.std(ddof=1) / np.sqrt(samples)) if samples > 1
                               else float("nan"), samples) for col in table.T)
    return StorageResult(cycles, cycles * t_c, errs)


def growth_exponent(cycles, errors) -> float:
    """Least-squares log-log slope of error versus cycle number."""
    return float(np.polyfit(np.log(cycles), np.log(errors), 1)[0])


# ---------------------------------------------------------------------------
# two-qubit gate


def pi_sa(config: SpinChainConfig, sites, phase: float = 0.0) -> np.ndarray:
    """Swap storage and active levels on the given sites (optional phase on the 1 branch)."""
    local = np.zeros((4, 4), dtype=complex)
    local[2, 0] = local[0, 2] = 1.0
    local[3, 1] = np.exp(1j * phase)
    local[1, 3] = np.exp(-1j * phase)
    ops = [local if s in sites else np.eye(4, dtype=complex) for s in range(config.n_atoms)]
    return reduce(np.kron, ops)


def gate_time(coefficients: InteractionCoefficients) -> float:
    """t_pi = pi / (4 Jz_aa)."""
    return np.pi / (4 * abs(coefficients.Jz_aa))


def ideal_gate_hamiltonian(config: SpinChainConfig, gate_sites) -> np.ndarray:
    """Ising coupling of the active pair plus its static single-site fields."""
    c = config.couplings()
    i, j = gate_sites
    H = np.zeros((config.dim, config.dim), dtype=complex)
    for a, b, _, w in config.pairs():
        if {a, b} == {i, j}:
            H += w * c["Jz_aa"] * HamiltonianTerm(1.0, (i, j), ("S̄z", "S̄z")).matrix(config.n_atoms, 4)
            H += w * c["Delta_aa"] * (local_sum(config, "S̄z", [i]) + local_sum(config, "S̄z", [j]))
        elif a in gate_sites or b in gate_sites:
            act = a if a in gate_sites else b
            H += w * c["Delta_as"] * local_sum(config, "S̄z", [act])
    return H


DEFAULT_GATE_WINDOW = (0, 2)  # (N, N'): pair active between refocus times N t_c and N' t_c


def gate_propagators(seq: PulseSequence, config: SpinChainConfig | None = None, window=DEFAULT_GATE_WINDOW, *,
                     t_c: float | None = None, duty: float = 0.025, gate_sites=None,
                     compensation_phase: float = 0.0, angle_error: float = 0.0):
    """(U, U_ref, storage subspace) for a CZ gate between refocus times N t_c and N' t_c.

    Before N t_c the pair sits in storage under the DD sequence; Pi_sa moves it
    to the active levels, the DD pulses keep acting on the spectators for
    N' - N cycles (= t_pi), and Pi_sa moves it back.  U_ref replaces every
    interaction by the ideal active-pair evolution (Ising CZ plus its static
    single-site fields) and keeps the spectator pulses.
    """
    config = config or SpinChainConfig(n_atoms=4, levels="full4")
    if config.levels != "full4":
        raise ValueError("gate simulation needs the full4 level set")
    if config.dim > MAX_DIM:
        raise ValueError("gate simulation limited to 4 atoms")
    n_start, n_end = (int(w) for w in window)
    n_gate = n_end - n_start
    if n_start < 0 or n_gate < 1:
        raise ValueError("gate window must satisfy 0 <= N < N'")
    gate_sites = tuple(gate_sites) if gate_sites else (config.n_atoms // 2 - 1, config.n_atoms // 2)
    t_pi = gate_time(config.coefficients)
    if t_c is None:
        t_c = t_pi / n_gate
    elif not math.isclose(n_gate * t_c, t_pi, rel_tol=1e-9):
        raise ValueError(f"gate window {n_gate} x {t_c:.4g} s is not t_pi = {t_pi:.4g} s")
    timed = seq.timed(t_c, duty)
    U, U0 = cycle_propagators(timed, config, angle_error=angle_error)
    P = pi_sa(config, gate_sites, compensation_phase)
    pre = np.linalg.matrix_power(U, n_start)
    pre0 = np.linalg.matrix_power(U0, n_start)
    Ug = P @ np.linalg.matrix_power(U, n_gate) @ P @ pre
    Hg = ideal_gate_hamiltonian(config, gate_sites)
    Uref = P @ np.linalg.matrix_power(U0, n_gate) @ expm_hermitian(Hg, t_pi) @ P @ pre0
    return Ug, Uref, computational_subspace(config.n_atoms, 4)


def simulate_gate(seq: PulseSequence, config: SpinChainConfig | None = None, window=DEFAULT_GATE_WINDOW, *,
                  t_c: float | None = None, duty: float = 0.025, gate_sites=None, samples: int = 20,
                  seed: int = 0, compensation_phase: float = 0.0, angle_error: float = 0.0) -> ErrorEstimate:
    """Haar-averaged CZ error 1 - |<psi|U_ref^dag U|psi>|^2 on the storage qubits."""
    Ug, Uref, sub = gate_propagators(seq, config, window, t_c=t_c, duty=duty, gate_sites=gate_sites,
                                     compensation_phase=compensation_phase, angle_error=angle_error)
    # gate error is not normalised per atom
    return average_error_per_atom(Ug, Uref, 1, samples, seed, sub)


# ---------------------------------------------------------------------------
# thermal motion


@dataclass(frozen=True)
class MotionConfig:
    temperature: float = 10e-6  # K
    omega: float = TWO_PI * 100e3  # rad/s
    mass: float = RB87_MASS
    eta_s: float = 2e-3
    eta_a: float = 0.0
    matched: bool = True
    samples: int = 20
    seed: int = 0
    unmatched_periods: float = 2.5  # motional periods per cycle when not matched

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.omega <= 0:
            raise ValueError("omega must be > 0")
        if self.samples < 10:
            raise ValueError("motion simulation needs >= 10 samples")

    @property
    def cycle_time(self) -> float:
        periods = 2 if self.matched else self.unmatched_periods
        return periods * TWO_PI / self.omega

    def thermal_widths(self):
        """(position, velocity) standard deviations of the Boltzmann distribution."""
        kT = sc.k * self.temperature
        return math.sqrt(kT / (self.mass * self.omega**2)), math.sqrt(kT / self.mass)


MOTION_CHANNELS = ("eta", "delta_ss", "J_terms")


@dataclass(frozen=True)
class MotionResult:
    t_c: float
    channels: dict  # channel tuple label -> ErrorEstimate
    total: ErrorEstimate
    reference_line: float  # lifetime-limited error per cycle, 2 * 2 pi / (omega tau_circ)


def incoherent_reference(omega: float, tau_circ: float = 3.0, periods: int = 2) -> float:
    return periods * TWO_PI / (omega * tau_circ)


def _trajectory(rng, n_atoms, motion: MotionConfig):
    sx, sv = motion.thermal_widths()
    x0 = rng.normal(0.0, 1.0, n_atoms) * sx
    v0 = rng.normal(0.0, 1.0, n_atoms) * sv
    w = motion.omega
    return lambda t: x0 * np.cos(w * t) + v0 / w * np.sin(w * t)


def _time_grid(seq: PulseSequence, n_cycles: int, max_free: float, max_pulse: float):
    """Piecewise-constant steps (t_mid, dt, pulse or None) covering n_cycles."""
    steps = []
    for c in range(n_cycles):
        base = c * seq.t_c
        t = 0.0
        for p, start in zip(seq.pulses, seq.start_times()):
            if start > t:
                m = max(1, math.ceil((start - t) / max_free))
                steps += [(base + t + (k + 0.5) * (start - t) / m, (start - t) / m, None) for k in range(m)]
            if seq.t_p > 0:
                m = max(1, math.ceil(seq.t_p / max_pulse))
                steps += [(base + start + (k + 0.5) * seq.t_p / m, seq.t_p / m, p) for k in range(m)]
            else:
                steps.append((base + start, 0.0, p))
            t = start + seq.t_p
        if seq.t_c > t:
            m = max(1, math.ceil((seq.t_c - t) / max_free))
            steps += [(base + t + (k + 0.5) * (seq.t_c - t) / m, (seq.t_c - t) / m, None) for k in range(m)]
    return steps


def _motion_propagators(seq, config, ops, motion, channels, rng, steps):
    traj = _trajectory(rng, config.n_atoms, motion)
    a = config.separation
    sz = [local_sum(config, "Sz", [i]) for i in range(config.n_atoms)]
    eta_p = motion.eta_s / 2
    wbar2 = (1 + eta_p) * motion.omega**2  # mean of the two qubit-state trap curvatures
    U = np.eye(config.dim, dtype=complex)
    U0 = np.eye(config.dim, dtype=complex)
    drives = {}
    for t, dt, p in steps:
        x = traj(t)
        factors = {}
        for q, (i, j, rij, _) in enumerate(ops.pairs):
            f = 1 - 6 * (x[i] - x[j]) / (rij * a)
            for name in ops.names:
                if ("J_terms" in channels and name in ("Jz_ss", "J_ss")) or ("delta_ss" in channels and name == "Delta_ss"):
                    factors[(q, name)] = f
        H = ops.hamiltonian(factors)
        if "eta" in channels:
            for i in range(config.n_atoms):
                H = H + (0.5 * eta_p * motion.mass * wbar2 * x[i] ** 2 / sc.hbar) * sz[i]
        if p is not None and dt == 0.0:
            P = pulse_unitary(config, p)
            U, U0 = P @ U, P @ U0
            continue
        if p is not None:
            key = p.axis, p.angle
            if key not in drives:
                drives[key] = drive_hamiltonian(config, p, seq.t_p)
            D = drives[key]
            U = expm_hermitian(H + D, dt) @ U
            U0 = expm_hermitian(D, dt) @ U0
        else:
            U = expm_hermitian(H, dt) @ U
    return U, U0


def simulate_with_motion(seq: PulseSequence, config: SpinChainConfig | None = None,
                         motion: MotionConfig = MotionConfig(), channels=MOTION_CHANNELS, *,
                         n_cycles: int = 1, duty: float = 0.025, t_c: float | None = None,
                         steps_per_period: int = 64, check_convergence: bool = True,
                         per_channel: bool = True, tau_circ: float = 3.0) -> MotionResult:
    """Storage error with classical thermal motion of every atom along the chain axis.

    Each sample draws positions and velocities from the Boltzmann
    distribution, evolves them harmonically, modulates the couplings to first
    order in the displacement and adds the non-magic trap term; the error is
    measured against the interaction-free pulse evolution at t = n_cycles t_c.
    """
    config = config or SpinChainConfig(n_atoms=4, separation=16e-6,
                                       coefficients=InteractionCoefficients.table().scaled((12 / 16) ** 6))
    if config.levels != "storage2":
        raise ValueError("motion simulation uses the storage2 level set")
    unknown = set(channels) - set(MOTION_CHANNELS)
    if unknown:
        raise ValueError(f"unknown motion channels {sorted(unknown)}; choose from {MOTION_CHANNELS}")
    t_c = motion.cycle_time if t_c is None else t_c
    timed = seq.timed(t_c, duty)
    ops = ChainOperators(config)
    sub = computational_subspace(config.n_atoms, 2)

    def run(chans, refine):
        period = TWO_PI / motion.omega
        max_free = period / (steps_per_period * refine)
        max_pulse = timed.t_p / (8 * refine) if timed.t_p > 0 else 1.0
        steps = _time_grid(timed, n_cycles, max_free, max_pulse)
        errs = np.empty(motion.samples)
        for i in range(motion.samples):
            # trajectories use their own stream so the Haar states match simulate_storage
            traj_rng = np.random.default_rng([int(motion.seed) & 0xFFFFFFFFFFFFFFFF, i, 1])
            U, U0 = _motion_propagators(timed, config, ops, motion, chans, traj_rng, steps)
            psi = haar_vector(len(sub), sample_rng(motion.seed, i))
            W = (U0.conj().T @ U)[np.ix_(sub, sub)]
            errs[i] = max(0.0, 1 - abs(np.vdot(psi, W @ psi)) ** 2) / config.n_atoms
        return ErrorEstimate(float(errs.mean()), float(errs.std(ddof=1) / np.sqrt(len(errs))), len(errs))

    total = run(tuple(channels), 1)
    if check_convergence:
        fine = run(tuple(channels), 2)
        if abs(fine.mean - total.mean) > 0.1 * max(abs(fine.mean), 1e-300):
            raise ConvergenceError(f"halving the step changed the error from {total.mean:.3e} to {fine.mean:.3e}")
    per = {}
    if per_channel:
        for ch in channels:
            per[ch] = run((ch,), 1)
    return MotionResult(t_c, per, total, incoherent_reference(motion.omega, tau_circ))


@dataclass(frozen=True)
class GateMotionResult:
    jz_average_residual: float  # rms of (time-averaged Jz factor - 1)
    phi_D: float  # rms dephasing phase (rad); 0 in echo mode
    P_phi: float
    phi_D_unechoed: float


def gate_motion_phase(t_pi: float, omega: float, eta_a: float, T_a: float, *, echo: bool = False,
                      separation: float = 16e-6, mass: float = RB87_MASS, samples: int = 200,
                      seed: int = 0, amplitude: float | None = None, n_time: int = 512) -> GateMotionResult:
    """Motion-induced phase errors of an active-state gate.

    The Jz residual averages the exact (1 + x_12/a)^-6 coupling factor over
    the gate for sampled trajectories (or a fixed amplitude).  The dephasing
    phase uses eta_a k_B T_a t_pi / (2 hbar) and P_phi = phi_D^2 / 6; in echo
    mode (t_pi = 2 pi (2n) / omega) the common-mode phase cancels.
    """
    if min(t_pi, omega) <= 0 or T_a < 0 or eta_a < 0:
        raise ValueError("t_pi and omega must be > 0, T_a and eta_a >= 0")
    periods = t_pi * omega / TWO_PI
    if echo and abs(periods / 2 - round(periods / 2)) > 1e-9:
        raise ValueError("echo mode requires t_pi = 2 pi (2n) / omega")
    phi = eta_a * sc.k * T_a * t_pi / (2 * sc.hbar)
    t = (np.arange(n_time) + 0.5) * t_pi / n_time
    res = np.empty(samples)
    sx, sv = (math.sqrt(sc.k * T_a / (mass * omega**2)), math.sqrt(sc.k * T_a / mass)) if T_a > 0 else (0.0, 0.0)
    for i in range(samples):
        rng = sample_rng(seed, i)
        if amplitude is None:
            x0 = rng.normal(size=2) * sx
            v0 = rng.normal(size=2) * sv
        else:
            ph = rng.uniform(0, TWO_PI, size=2)
            x0 = amplitude * np.cos(ph)
            v0 = -amplitude * omega * np.sin(ph)
        x = x0[:, None] * np.cos(omega * t) + (v0 / omega)[:, None] * np.sin(omega * t)
        rel = (x[1] - x[0]) / separation
        res[i] = np.mean((1 + rel) ** -6) - 1
    phi_eff = 0.0 if echo else phi
    return GateMotionResult(float(np.sqrt(np.mean(res**2))), phi_eff, phi_eff**2 / 6, phi)


# ---------------------------------------------------------------------------
# composite pulses


def _rot(phase: float, angle: float) -> np.ndarray:
    op = np.cos(phase) * SX + np.sin(phase) * SY
    return expm_hermitian(op / 2, angle)


def bb1_sequence(theta: float, eps: float, phase: float = 0.0):
    """BB1 composite rotation with a static fractional angle error eps.

    Returns ([(phase, nominal angle), ...] in application order, residual
    infidelity 1 - |tr(U_target^dag U)/2|^2).
    """
    if abs(eps) >= 0.2:
        raise ValueError("|eps| must be < 0.2")
    phi1 = math.acos(-theta / (4 * np.pi))
    pulses = [(phase, theta), (phase + phi1, np.pi), (phase + 3 * phi1, 2 * np.pi), (phase + phi1, np.pi)]
    U = np.eye(2, dtype=complex)
    for ph, ang in pulses:
        U = _rot(ph, ang * (1 + eps)) @ U
    target = _rot(phase, theta)
    fid = abs(np.trace(target.conj().T @ U) / 2) ** 2
    return pulses, float(max(0.0, 1 - fid))


def plain_rotation_infidelity(theta: float, eps: float) -> float:
    U = _rot(0.0, theta * (1 + eps))
    return float(1 - abs(np.trace(_rot(0.0, theta).conj().T @ U) / 2) ** 2)
