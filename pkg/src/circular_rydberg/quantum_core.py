"""Dense linear algebra and sampling primitives for the spin simulations.

Conventions: hbar = 1, Hamiltonians in rad/s, site 0 is the slowest-varying
tensor factor, and Pauli-normalized spin operators (eigenvalues +-1).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

import numpy as np

UNITARITY_TOL = 1e-9


class DimensionError(ValueError):
    pass


class PropagationError(RuntimeError):
    pass


SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
I2 = np.eye(2, dtype=complex)


def _four_level(op2: np.ndarray, block: int) -> np.ndarray:
    """Place a 2x2 operator on the storage (block 0) or active (block 1) pair of a 4-level site."""
    out = np.zeros((4, 4), dtype=complex)
    out[2 * block : 2 * block + 2, 2 * block : 2 * block + 2] = op2
    return out


# Local dimension 4 orders a site as (0_s, 1_s, 0_a, 1_a).
LOCAL_OPERATORS = {
    2: {
        "I": I2,
        "Sx": SX,
        "Sy": SY,
        "Sz": SZ,
        "n": I2.copy(),
    },
    4: {
        "I": np.eye(4, dtype=complex),
        "Sx": _four_level(SX, 0),
        "Sy": _four_level(SY, 0),
        "Sz": _four_level(SZ, 0),
        "n": _four_level(I2, 0),
        "S̄x": _four_level(SX, 1),
        "S̄y": _four_level(SY, 1),
        "S̄z": _four_level(SZ, 1),
        "n̄": _four_level(I2, 1),
    },
}
# ASCII aliases
for _ops in LOCAL_OPERATORS.values():
    for _k in list(_ops):
        if "̄" in _k:
            _ops[_k.replace("̄", "") + "bar"] = _ops[_k]
del _ops, _k


@dataclass(frozen=True)
class StateVector:
    amplitudes: np.ndarray
    local_dim: int
    n_sites: int

    def __post_init__(self):
        if self.amplitudes.shape != (self.local_dim**self.n_sites,):
            raise DimensionError(
                f"amplitude length {self.amplitudes.shape} != {self.local_dim}^{self.n_sites}"
            )
        if abs(np.linalg.norm(self.amplitudes) - 1) > 1e-10:
            raise ValueError("state is not normalized")


@dataclass(frozen=True)
class Propagator:
    matrix: np.ndarray
    dim: int
    elapsed: float = 0.0

    def __post_init__(self):
        if self.matrix.shape != (self.dim, self.dim):
            raise DimensionError(f"propagator shape {self.matrix.shape} does not match dim {self.dim}")

    def unitarity_error(self) -> float:
        return float(np.max(np.abs(self.matrix.conj().T @ self.matrix - np.eye(self.dim))))

    def check(self, tol: float = UNITARITY_TOL) -> "Propagator":
        err = self.unitarity_error()
        if err > tol:
            raise PropagationError(f"propagator not unitary: max|U^dag U - I| = {err:.2e}")
        return self

    def then(self, other: "Propagator") -> "Propagator":
        """Apply self first, then other."""
        return Propagator(other.matrix @ self.matrix, self.dim, self.elapsed + other.elapsed)

    @classmethod
    def identity(cls, dim: int) -> "Propagator":
        return cls(np.eye(dim, dtype=complex), dim, 0.0)


@dataclass(frozen=True)
class HamiltonianTerm:
    coefficient: float
    site_indices: tuple
    operator_labels: tuple

    def matrix(self, n_sites: int, local_dim: int) -> np.ndarray:
        table = LOCAL_OPERATORS[local_dim]
        factors = [table["I"]] * n_sites
        for site, label in zip(self.site_indices, self.operator_labels):
            if label not in table:
                raise KeyError(f"operator {label!r} unavailable at local dimension {local_dim}")
            factors[site] = factors[site] @ table[label] if factors[site] is not table["I"] else table[label]
        return self.coefficient * reduce(np.kron, factors)


def assemble(terms, n_sites: int, local_dim: int) -> np.ndarray:
    dim = local_dim**n_sites
    H = np.zeros((dim, dim), dtype=complex)
    for t in terms:
        H += t.matrix(n_sites, local_dim)
    return H


def embed_operator(local_op: np.ndarray, site: int, n_sites: int, local_dim: int) -> np.ndarray:
    """I (x) ... (x) local_op (x) ... (x) I with local_op at `site` (site 0 slowest)."""
    local_op = np.asarray(local_op)
    if local_op.shape != (local_dim, local_dim):
        raise DimensionError(f"local operator has shape {local_op.shape}, expected ({local_dim}, {local_dim})")
    if not 0 <= site < n_sites:
        raise DimensionError(f"site {site} outside [0, {n_sites})")
    left = np.eye(local_dim**site)
    right = np.eye(local_dim ** (n_sites - site - 1))
    return np.kron(np.kron(left, local_op), right)


def is_hermitian(H: np.ndarray, rel_tol: float = 1e-12) -> bool:
    scale = max(float(np.max(np.abs(H))), 1e-300)
    return float(np.max(np.abs(H - H.conj().T))) <= rel_tol * scale


def expm_hermitian(H: np.ndarray, t: float) -> np.ndarray:
    """exp(-i H t) via the eigendecomposition of Hermitian H."""
    w, v = np.linalg.eigh(H)
    return (v * np.exp(-1j * w * t)) @ v.conj().T


def propagate(schedule, *, dim: int | None = None, check_hermitian: bool = True,
              tol: float = UNITARITY_TOL) -> Propagator:
    """Ordered product of exp(-i H_k dt_k) over (H_k, dt_k) segments.

    An empty schedule gives the identity of dimension `dim` (default 1).
    """
    schedule = list(schedule)
    if not schedule:
        return Propagator.identity(dim or 1)
    dim = schedule[0][0].shape[0]
    U = np.eye(dim, dtype=complex)
    elapsed = 0.0
    for k, (H, dt) in enumerate(schedule):
        if dt < 0:
            raise ValueError(f"segment {k} has negative duration {dt}")
        if H.shape != (dim, dim):
            raise DimensionError(f"segment {k} has shape {H.shape}, expected {(dim, dim)}")
        if check_hermitian and not is_hermitian(H, 1e-12):
            raise ValueError(f"segment {k} Hamiltonian is not Hermitian")
        step = expm_hermitian(H, dt)
        if not np.all(np.isfinite(step)):
            raise PropagationError(f"non-finite exponential in segment {k}")
        U = step @ U
        elapsed += dt
    return Propagator(U, dim, elapsed).check(tol)


def sample_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for Monte-Carlo sample `index` (order and thread-count independent)."""
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, int(index)])


def haar_vector(dim: int, rng: np.random.Generator) -> np.ndarray:
    if dim < 1:
        raise ValueError("dimension must be >= 1")
    z = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return z / np.linalg.norm(z)


def haar_state(dim: int, seed: int, local_dim: int | None = None) -> StateVector:
    """Haar-random pure state; deterministic for a given seed."""
    if dim < 1:
        raise ValueError("dimension must be >= 1")
    amps = haar_vector(dim, sample_rng(seed, 0))
    if local_dim is None:
        return StateVector(amps, dim, 1)
    n_sites = int(round(np.log(dim) / np.log(local_dim)))
    return StateVector(amps, local_dim, n_sites)


def computational_subspace(n_sites: int, local_dim: int, levels=(0, 1)) -> np.ndarray:
    """Indices of product states with every site in `levels`."""
    idx = np.zeros(1, dtype=int)
    for _ in range(n_sites):
        idx = (idx[:, None] * local_dim + np.asarray(levels)[None, :]).ravel()
    return idx


@dataclass(frozen=True)
class ErrorEstimate:
    mean: float
    sem: float
    samples: int


def average_error_per_atom(U, U_ref, n_atoms: int, n_samples: int = 20, seed: int = 0,
                           subspace: np.ndarray | None = None) -> ErrorEstimate:
    """Haar average of (1 - |<psi|U_ref^dag U|psi>|^2)/n_atoms with its standard error.

    States are drawn inside `subspace` (index array) when given.
    """
    Um = U.matrix if isinstance(U, Propagator) else np.asarray(U)
    Rm = U_ref.matrix if isinstance(U_ref, Propagator) else np.asarray(U_ref)
    if Um.shape != Rm.shape:
        raise DimensionError(f"propagator shapes differ: {Um.shape} vs {Rm.shape}")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if np.array_equal(Um, Rm):
        return ErrorEstimate(0.0, 0.0, n_samples)
    dim = Um.shape[0]
    sub = np.arange(dim) if subspace is None else np.asarray(subspace)
    W = Rm.conj().T @ Um
    Wsub = W[np.ix_(sub, sub)]
    errs = np.empty(n_samples)
    for i in range(n_samples):
        psi = haar_vector(len(sub), sample_rng(seed, i))
        amp = np.vdot(psi, Wsub @ psi)
        errs[i] = max(0.0, 1.0 - abs(amp) ** 2) / n_atoms
    sem = float(errs.std(ddof=1) / np.sqrt(n_samples)) if n_samples > 1 else float("nan")
    return ErrorEstimate(float(errs.mean()), sem, n_samples)


def fidelity_error_samples(W: np.ndarray, states: np.ndarray) -> np.ndarray:
    """1 - |<psi|W|psi>|^2 for each row psi of `states`."""
    amps = np.einsum("ij,jk,ik->i", states.conj(), W, states)
    return np.clip(1.0 - np.abs(amps) ** 2, 0.0, None)
