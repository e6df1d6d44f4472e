import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from circular_rydberg.quantum_core import (
    LOCAL_OPERATORS,
    SX,
    SZ,
    DimensionError,
    HamiltonianTerm,
    Propagator,
    StateVector,
    assemble,
    average_error_per_atom,
    computational_subspace,
    embed_operator,
    expm_hermitian,
    haar_state,
    haar_vector,
    is_hermitian,
    propagate,
    sample_rng,
)


def random_matrix(rng, d):
    return rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))


def random_hermitian(rng, d):
    A = random_matrix(rng, d)
    return (A + A.conj().T) / 2


def random_unitary(rng, d):
    q, r = np.linalg.qr(random_matrix(rng, d))
    return q * (np.diag(r) / np.abs(np.diag(r)))


# embed_operator

def test_embed_identity_is_identity():
    for site in range(3):
        assert np.array_equal(embed_operator(np.eye(2), site, 3, 2), np.eye(8))


def test_embed_site_zero_is_slowest_index():
    np.testing.assert_array_equal(np.diag(embed_operator(SZ, 0, 2, 2)).real, [1, 1, -1, -1])
    np.testing.assert_array_equal(np.diag(embed_operator(SZ, 1, 2, 2)).real, [1, -1, 1, -1])


@pytest.mark.parametrize("local_dim,n_sites", [(2, 3), (4, 2), (2, 1)])
def test_embed_trace_matches_direct_kronecker(local_dim, n_sites):
    rng = np.random.default_rng(1)
    A = random_matrix(rng, local_dim)
    for site in range(n_sites):
        factors = [np.eye(local_dim)] * n_sites
        factors[site] = A
        direct = factors[0]
        for f in factors[1:]:
            direct = np.kron(direct, f)
        E = embed_operator(A, site, n_sites, local_dim)
        np.testing.assert_allclose(E, direct, atol=1e-14)
        assert np.isclose(np.trace(E), np.trace(A) * local_dim ** (n_sites - 1))


def test_embed_dimension_mismatch_names_size():
    with pytest.raises(DimensionError, match="3"):
        embed_operator(np.eye(3), 0, 2, 2)
    with pytest.raises((DimensionError, ValueError)):
        embed_operator(np.eye(2), 2, 2, 2)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2))
def test_embed_is_linear(seed, a, b, site):
    rng = np.random.default_rng(seed)
    A, B = random_matrix(rng, 2), random_matrix(rng, 2)
    lhs = embed_operator(a * A + b * B, site, 3, 2)
    rhs = a * embed_operator(A, site, 3, 2) + b * embed_operator(B, site, 3, 2)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


# operators and Hamiltonians

@pytest.mark.parametrize("dim", [2, 4])
def test_spin_operators_have_pauli_spectrum(dim):
    for label in ("Sx", "Sy", "Sz"):
        w = np.linalg.eigvalsh(LOCAL_OPERATORS[dim][label])
        nonzero = np.sort(w[np.abs(w) > 1e-12])
        np.testing.assert_allclose(nonzero, [-1, 1])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.floats(-1e5, 1e5), st.sampled_from(["Sx", "Sy", "Sz", "n", "S̄x", "S̄z", "n̄", "I"]),
                          st.sampled_from(["Sx", "Sy", "Sz", "n", "S̄y", "S̄z", "n̄"])), min_size=1, max_size=5))
def test_assembled_hamiltonian_is_hermitian(terms):
    H = assemble([HamiltonianTerm(c, (0, 1), (a, b)) for c, a, b in terms], 3, 4)
    scale = max(np.max(np.abs(H)), 1e-300)
    assert np.max(np.abs(H - H.conj().T)) <= 1e-12 * scale


def test_state_vector_validation():
    StateVector(np.array([1, 0, 0, 0], dtype=complex), 2, 2)
    with pytest.raises(ValueError):
        StateVector(np.array([1, 0, 0], dtype=complex), 2, 2)
    with pytest.raises(ValueError):
        StateVector(np.array([1, 1, 0, 0], dtype=complex), 2, 2)


# propagation

def test_empty_schedule_is_identity():
    assert np.array_equal(propagate([], dim=4).matrix, np.eye(4))


def test_rabi_flop_gives_sigma_x():
    omega = 2 * np.pi * 1e6
    U = propagate([(omega / 2 * SX, np.pi / omega)]).matrix
    np.testing.assert_allclose(U, -1j * SX, atol=1e-12)


def test_subdivided_segment_agrees():
    rng = np.random.default_rng(3)
    H = random_hermitian(rng, 8)
    whole = propagate([(H, 0.7)]).matrix
    split = propagate([(H, 0.07)] * 10).matrix
    assert np.max(np.abs(whole - split)) < 1e-12


def test_propagate_rejects_bad_input():
    with pytest.raises(ValueError):
        propagate([(np.array([[0, 1], [0, 0]], dtype=complex), 1.0)])
    with pytest.raises(ValueError):
        propagate([(SZ, -1.0)])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4))
def test_propagators_are_unitary_and_time_reversal_is_adjoint(seed, n_seg):
    rng = np.random.default_rng(seed)
    sched = [(random_hermitian(rng, 4), float(rng.uniform(0, 2))) for _ in range(n_seg)]
    U = propagate(sched)
    assert U.unitarity_error() < 1e-9
    Um = propagate([(-H, dt) for H, dt in sched]).matrix
    # -H over the time-reversed segment order gives exactly U^dag; for one segment the orders coincide
    Ur = propagate([(-H, dt) for H, dt in reversed(sched)]).matrix
    np.testing.assert_allclose(Ur, U.matrix.conj().T, atol=1e-10)
    if n_seg == 1:
        np.testing.assert_allclose(Um, U.matrix.conj().T, atol=1e-10)


def test_propagator_check_flags_non_unitary():
    with pytest.raises(Exception):
        Propagator(2 * np.eye(2, dtype=complex), 2, 0.0).check()


# Haar sampling

def test_haar_dim_one_and_errors():
    assert abs(abs(haar_state(1, 5).amplitudes[0]) - 1) < 1e-15
    with pytest.raises(ValueError):
        haar_state(0, 1)


def test_haar_determinism():
    a, b = haar_state(16, 123), haar_state(16, 123)
    assert np.array_equal(a.amplitudes, b.amplitudes)
    assert abs(np.linalg.norm(a.amplitudes) - 1) < 1e-10


def test_haar_first_moment():
    vals = np.array([abs(haar_vector(4, sample_rng(7, i))[0]) ** 2 for i in range(10_000)])
    sem = vals.std(ddof=1) / np.sqrt(len(vals))
    assert abs(vals.mean() - 0.25) < 3 * sem


# error metric

def test_error_zero_for_identical_and_global_phase():
    rng = np.random.default_rng(0)
    U = random_unitary(rng, 8)
    assert average_error_per_atom(U, U, 3).mean == 0.0
    assert average_error_per_atom(np.exp(0.37j) * U, U, 3).mean < 1e-12


def test_error_dimension_mismatch():
    with pytest.raises(DimensionError):
        average_error_per_atom(np.eye(2), np.eye(4), 1)


def test_error_small_rotation_matches_monte_carlo_oracle():
    theta = 0.01
    U = expm_hermitian(SZ / 2, theta)
    est = average_error_per_atom(U, np.eye(2), 1, n_samples=2000, seed=11)
    # independent 1e5-sample oracle with its own generator
    rng = np.random.default_rng(2024)
    z = rng.normal(size=(100_000, 2)) + 1j * rng.normal(size=(100_000, 2))
    psi = z / np.linalg.norm(z, axis=1, keepdims=True)
    p0 = np.abs(psi[:, 0]) ** 2
    amp = np.cos(theta / 2) - 1j * np.sin(theta / 2) * (2 * p0 - 1)
    oracle = np.mean(1 - np.abs(amp) ** 2)
    assert abs(est.mean - oracle) < 4 * est.sem + 1e-9
    # closed form: sin^2(theta/2) * (1 - <(2p0-1)^2>) = sin^2(theta/2) * 2/3
    assert np.isclose(oracle, np.sin(theta / 2) ** 2 * 2 / 3, rtol=0.02)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_error_invariant_under_shared_basis_change(seed):
    rng = np.random.default_rng(seed)
    U, Ur, V = random_unitary(rng, 4), random_unitary(rng, 4), random_unitary(rng, 4)
    a = average_error_per_atom(U, Ur, 2, n_samples=10, seed=seed)
    b = average_error_per_atom(V @ U, V @ Ur, 2, n_samples=10, seed=seed)
    assert abs(a.mean - b.mean) < 1e-12


def test_computational_subspace_indices():
    np.testing.assert_array_equal(computational_subspace(2, 4), [0, 1, 4, 5])
    np.testing.assert_array_equal(computational_subspace(3, 2), np.arange(8))


def test_is_hermitian():
    assert is_hermitian(SX)
    assert not is_hermitian(np.array([[0, 1], [0, 0]], dtype=complex))
