"""Closed-form error budget for ancilla-blockade readout of circular atoms."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from scipy.stats import binom

TWO_PI = 2 * math.pi
PRINTED_PAIR_PROJECTION = 1.2e-7  # value quoted alongside the blockaded-case inputs below


@dataclass(frozen=True)
class MeasurementParams:
    V_blockade: float = TWO_PI * 20e6  # rad/s, ancilla-target interaction in the blockaded case
    tau_a: float = 200e-6  # s, ancilla Rydberg lifetime
    P_eps_target: float = 0.2
    P_eps_others: float = 1e-4
    P_eps_NN: float = 1e-3
    differential_shift: float = TWO_PI * 1e3  # rad/s, on a neighbouring storage atom
    t_meas: float = 10e-3  # s
    tau_circ: float = 3.33  # s

    def __post_init__(self):
        for name in ("V_blockade", "tau_a", "t_meas", "tau_circ"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        for name in ("P_eps_target", "P_eps_others", "P_eps_NN"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.differential_shift < 0:
            raise ValueError("differential_shift must be >= 0")


def optimal_rabi(V: float, tau_a: float) -> float:
    """Rabi frequency balancing blockade leakage against ancilla decay (rad/s)."""
    return (math.pi * V**2 / tau_a) ** (1 / 3)


def gate_error_model(omega: float, V: float, tau_a: float) -> float:
    """Two-term error whose minimum sits at optimal_rabi and equals the gate error P_g."""
    return omega**2 / (6 * V**2) + math.pi / (3 * omega * tau_a)


def blockade_gate_budget(params: MeasurementParams = MeasurementParams()) -> dict:
    V, tau = params.V_blockade, params.tau_a
    if V * tau <= 10:
        raise ValueError("blockade too weak: V * tau_a must exceed 10")
    x = math.pi / (V * tau)
    omega = optimal_rabi(V, tau)
    P_g = x ** (2 / 3) / 2
    P_sc = x ** (4 / 3)
    excitation_time = TWO_PI / (8 * omega)
    phi = params.differential_shift * excitation_time
    return {
        "Omega_opt": omega,
        "Omega_opt_hz2pi": omega / TWO_PI,
        "P_g": P_g,
        "P_sc": P_sc,
        "P_p_blockaded": params.P_eps_target * P_sc,
        "P_p_blockaded_printed": PRINTED_PAIR_PROJECTION,
        "P_p_unblockaded": params.P_eps_others * P_g / 2,
        "P_p_NN": params.P_eps_NN * P_g / 2,
        "excitation_time": excitation_time,
        "phi": phi,
        # Haar-averaged infidelity of a phase rotation: (2/3) sin^2(phi/2) ~ phi^2/6
        "P_phi": phi**2 / 6,
    }


def array_budget(P_g: float, t_meas: float, tau_circ: float) -> float:
    """Array size with one expected defect: 1 / (P_g + t_meas / tau_circ). Returns inf when error-free."""
    if min(P_g, t_meas) < 0 or tau_circ <= 0:
        raise ValueError("inputs must be nonnegative with tau_circ > 0")
    total = P_g + t_meas / tau_circ
    return math.inf if total == 0 else 1.0 / total


def majority_vote_error(p: float, repetitions: int) -> float:
    """Error of a majority vote over independent repetitions with per-shot error p (ties count as errors)."""
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    return float(binom.sf(repetitions // 2 - (repetitions % 2 == 0), repetitions, p))


def budget_report(params: MeasurementParams = MeasurementParams()) -> dict:
    """Full budget plus input echo, JSON-ready."""
    b = blockade_gate_budget(params)
    b["N_array"] = array_budget(b["P_g"], params.t_meas, params.tau_circ)
    b["P_d"] = params.t_meas / params.tau_circ
    return {"inputs": asdict(params), "budget": b}
