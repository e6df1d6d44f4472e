"""Radiative lifetimes of circular states in an engineered photonic environment.

Every dipole channel rate is the free-space A-coefficient scaled by the local
density of states (Purcell factor) and the blackbody occupation. The useful
lifetime adds trap-induced state changes and background collisions.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import constants as sc

from .atomic_structure import RydbergLevel, circular, dipole_channels

STATE_CHANGE_PER_HZ_DEPTH = 3e-7  # 1/s of trap-light induced transitions per Hz of trap depth
LDOS_CSV_HEADER = ("frequency_hz", "P_sigma", "P_pi")


class LdosError(ValueError):
    pass


@dataclass(frozen=True)
class LdosModel:
    """Purcell factor P(f, polarization).

    kind: "free_space" (P = 1), "bandstop" (P_min on the closed interval
    band, 1 elsewhere) or "tabulated" (rows of (f, P_sigma, P_pi), log-linear
    interpolation in P).
    """

    kind: str = "free_space"
    P_min: float = 1e-4
    band: tuple = (20e9, 40e9)
    table: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in ("free_space", "bandstop", "tabulated"):
            raise LdosError(f"unknown LDOS model {self.kind!r}")
        if self.P_min < 0:
            raise LdosError("P_min must be >= 0")
        if self.kind == "tabulated":
            t = np.asarray(self.table, dtype=float)
            if t.ndim != 2 or t.shape[1] != 3 or len(t) < 2:
                raise LdosError("table needs >= 2 rows of (frequency, P_sigma, P_pi)")
            if np.any(np.diff(t[:, 0]) <= 0):
                raise LdosError("table frequencies must be strictly increasing")
            if np.any(t[:, 1:] <= 0):
                raise LdosError("tabulated Purcell factors must be > 0 for log interpolation")
            object.__setattr__(self, "table", t)

    @classmethod
    def free_space(cls) -> "LdosModel":
        return cls("free_space")

    @classmethod
    def bandstop(cls, P_min: float = 1e-4, band=(20e9, 40e9)) -> "LdosModel":
        return cls("bandstop", P_min, tuple(band))

    @classmethod
    def from_csv(cls, path) -> "LdosModel":
        with open(Path(path), newline="") as fh:
            reader = csv.reader(fh)
            header = tuple(h.strip() for h in next(reader))
            if header != LDOS_CSV_HEADER:
                raise LdosError(f"LDOS header must be {','.join(LDOS_CSV_HEADER)}, got {','.join(header)}")
            rows = [[float(x) for x in r] for r in reader if r]
        return cls("tabulated", table=np.array(rows))


def purcell(model: LdosModel, frequency: float, polarization: str = "sigma") -> float:
    """Purcell factor at frequency (Hz, > 0) for a "pi" or "sigma[+-]" dipole."""
    if frequency <= 0:
        raise ValueError("frequency must be > 0")
    if model.kind == "free_space":
        return 1.0
    if model.kind == "bandstop":
        lo, hi = model.band
        return model.P_min if lo <= frequency <= hi else 1.0
    t = model.table
    if not t[0, 0] <= frequency <= t[-1, 0]:
        raise LdosError(f"{frequency:.4g} Hz outside tabulated range [{t[0, 0]:.4g}, {t[-1, 0]:.4g}] Hz")
    col = 2 if polarization == "pi" else 1
    return float(np.exp(np.interp(frequency, t[:, 0], np.log(t[:, col]))))


def pmin_from_conductivity(sigma: float, frequency: float) -> float:
    """Wall-loss floor 1 - R ~ 4 sqrt(2 eps0 omega / sigma) of a good metal."""
    if sigma <= 0:
        raise ValueError("conductivity must be > 0")
    if math.isinf(sigma):
        return 0.0
    return 4 * math.sqrt(2 * sc.epsilon_0 * 2 * math.pi * frequency / sigma)


def thermal_occupation(frequency: float, T: float) -> float:
    """Bose-Einstein photon number; exactly 0 at T = 0."""
    if T <= 0:
        return 0.0
    x = sc.h * abs(frequency) / sc.k / T
    return 0.0 if x > 700 else 1.0 / math.expm1(x)


def einstein_a(frequency: float, strength: float) -> float:
    """Free-space spontaneous rate (1/s) for |<f|r_q|i>|^2 = strength (m^2) at frequency (Hz)."""
    omega = 2 * math.pi * abs(frequency)
    return omega**3 * sc.e**2 * strength / (3 * math.pi * sc.epsilon_0 * sc.hbar * sc.c**3)


@dataclass(frozen=True)
class ChannelRate:
    final: RydbergLevel
    polarization: str
    frequency: float  # Hz, positive for emission
    rate: float  # 1/s
    process: str  # "emission" or "absorption"


@dataclass(frozen=True)
class DecayBudget:
    total: float
    channels: tuple

    @property
    def lifetime(self) -> float:
        return math.inf if self.total == 0 else 1.0 / self.total


def total_decay_rate(n: int, model: LdosModel = LdosModel(), T_b: float = 0.0, n_max: int | None = None,
                     species: str = "rb87") -> DecayBudget:
    """Radiative depopulation rate of nC with its per-channel breakdown."""
    n_max = n + 6 if n_max is None else n_max
    if n_max < n + 3:
        raise ValueError("n_max must be >= n + 3")
    chans = []
    for ch in dipole_channels(circular(n, species), n_max):
        f = abs(ch.frequency)
        if f == 0:
            continue
        a = einstein_a(f, ch.strength) * purcell(model, f, ch.polarization)
        nbar = thermal_occupation(f, T_b)
        if ch.frequency > 0:
            chans.append(ChannelRate(ch.final, ch.polarization, ch.frequency, a * (1 + nbar), "emission"))
        else:
            chans.append(ChannelRate(ch.final, ch.polarization, ch.frequency, a * nbar, "absorption"))
    return DecayBudget(math.fsum(c.rate for c in chans), tuple(chans))


def useful_lifetime(radiative_rate: float, trap_depth_hz: float = 0.0, collision_rate: float = 0.0) -> float:
    """1 / (radiative + trap-induced + collisional rate), in seconds."""
    if min(radiative_rate, trap_depth_hz, collision_rate) < 0:
        raise ValueError("rates must be >= 0")
    total = radiative_rate + STATE_CHANGE_PER_HZ_DEPTH * trap_depth_hz + collision_rate
    return math.inf if total == 0 else 1.0 / total


def lifetime_table(ns, model: LdosModel, T_b: float, tag: str = "") -> list[dict]:
    """Rows (n, lifetime_s, model) for export."""
    return [{"n": n, "lifetime_s": total_decay_rate(n, model, T_b).lifetime, "model": tag or model.kind}
            for n in ns]
