import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize

from circular_rydberg.measurement_model import (
    TWO_PI,
    MeasurementParams,
    array_budget,
    blockade_gate_budget,
    budget_report,
    gate_error_model,
    majority_vote_error,
    optimal_rabi,
)


@pytest.fixture(scope="module")
def budget():
    return blockade_gate_budget()


def test_default_budget_values(budget):
    assert abs(budget["Omega_opt_hz2pi"] / 1e6 - 1.0) < 0.05
    assert abs(budget["P_g"] / 1.3e-3 - 1) < 0.05
    assert abs(budget["P_sc"] / 6.3e-6 - 1) < 0.05


def test_phase_kick(budget):
    # 2 pi x 1 kHz over the mean excitation time 2 pi / (8 Omega)
    assert math.isclose(budget["phi"], TWO_PI * 1e3 * TWO_PI / (8 * budget["Omega_opt"]), rel_tol=1e-12)
    assert abs(budget["phi"] / 8e-4 - 1) < 0.05
    assert math.isclose(budget["P_phi"], budget["phi"] ** 2 / 6, rel_tol=1e-12)


def test_closed_forms_are_self_consistent(budget):
    p = MeasurementParams()
    x = math.pi / (p.V_blockade * p.tau_a)
    assert math.isclose(budget["P_sc"], x ** (4 / 3), rel_tol=1e-12)
    assert math.isclose(budget["P_g"], gate_error_model(budget["Omega_opt"], p.V_blockade, p.tau_a), rel_tol=1e-12)


def test_pair_projection_reports_both_values(budget):
    assert budget["P_p_blockaded_printed"] == 1.2e-7
    assert math.isclose(budget["P_p_blockaded"], 0.2 * budget["P_sc"], rel_tol=1e-12)


def test_long_ancilla_lifetime_removes_error():
    b = blockade_gate_budget(MeasurementParams(tau_a=1e6))
    assert b["P_g"] < 1e-5


@settings(max_examples=30, deadline=None)
@given(st.floats(1e7, 1e9), st.floats(1e-5, 1e-2))
def test_optimal_rabi_minimises_error_model(V, tau):
    res = optimize.minimize_scalar(lambda w: gate_error_model(w, V, tau), bounds=(1e3, 1e10), method="bounded",
                                   options={"xatol": 1e-6})
    assert abs(res.x / optimal_rabi(V, tau) - 1) < 0.01


@settings(max_examples=30, deadline=None)
@given(st.floats(1e6, 1e10), st.floats(1e-5, 1e-1))
def test_probabilities_bounded(V, tau):
    if V * tau <= 10:
        with pytest.raises(ValueError):
            blockade_gate_budget(MeasurementParams(V_blockade=V, tau_a=tau))
        return
    b = blockade_gate_budget(MeasurementParams(V_blockade=V, tau_a=tau))
    for k in ("P_g", "P_sc", "P_p_blockaded", "P_p_unblockaded", "P_p_NN", "P_phi"):
        assert 0 <= b[k] <= 1 and math.isfinite(b[k])


def test_params_validation():
    with pytest.raises(ValueError):
        MeasurementParams(tau_a=0)
    with pytest.raises(ValueError):
        MeasurementParams(P_eps_target=1.5)


def test_array_budget():
    assert abs(array_budget(1.3e-3, 10e-3, 3.33) - 233) < 2
    assert abs(array_budget(1.3e-3, 10e-3, 3.33) / 250 - 1) < 0.1
    assert array_budget(0, 0, 3.0) == math.inf
    assert array_budget(2e-3, 10e-3, 3.33) < array_budget(1e-3, 10e-3, 3.33)
    assert array_budget(1e-3, 20e-3, 3.33) < array_budget(1e-3, 10e-3, 3.33)
    assert array_budget(1e-3, 10e-3, 1.0) < array_budget(1e-3, 10e-3, 3.33)


def test_majority_vote():
    p = 0.01
    assert math.isclose(majority_vote_error(p, 1), p, rel_tol=1e-12)
    assert math.isclose(majority_vote_error(p, 3), 3 * p**2 - 2 * p**3, rel_tol=1e-12)
    # ties count as errors for even repetitions
    assert math.isclose(majority_vote_error(p, 2), 1 - (1 - p) ** 2, rel_tol=1e-12)
    with pytest.raises(ValueError):
        majority_vote_error(p, 0)


def test_report_echoes_inputs():
    r = budget_report()
    assert r["inputs"]["tau_a"] == 200e-6
    assert 200 <= r["budget"]["N_array"] <= 260
