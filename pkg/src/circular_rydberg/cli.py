"""Command-line front end: reproduction runs with provenance-stamped CSV/JSON outputs.

Config files are UTF-8 INI-style text: a ``[global]`` section plus one
section per subcommand, ``key = value`` lines, ``#`` or ``;`` comments.
Unknown sections or keys are rejected with the closest valid name.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import difflib
import hashlib
import io
import json
import math
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__

EXIT_OK, EXIT_VALIDATION, EXIT_CONVERGENCE, EXIT_USAGE = 0, 2, 3, 64
TWO_PI = 2 * math.pi


class ConfigError(ValueError):
    pass


class UsageError(Exception):
    pass


# section -> key -> (type, default); None defaults mean "derived at run time"
SCHEMA = {
    "global": {"seed": (int, 0), "samples": (int, 20)},
    "interactions": {
        "separations_um": (str, "12"),
        "Ez": (float, 0.313),
        "Bz": (float, 1.39),
        "n_window": (int, 2),
        "dm_window": (int, 2),
        "energy_window_ghz": (float, 60.0),
    },
    "magic-lattice": {
        "orientation": (str, "in_plane"),
        "lam_min_nm": (float, 620.0),
        "lam_max_nm": (float, 640.0),
        "n_scan": (int, 41),
    },
    "rabi": {
        "n": (int, 59),
        "n_prime": (int, 61),
        "wavelength_nm": (float, 532.0),
        "na": (float, 0.5),
        "points": (int, 9),
    },
    "lifetime": {
        "n_min": (int, 56),
        "n_max": (int, 68),
        "model": (str, "bandstop"),
        "P_min": (float, 1e-4),
        "band_lo_ghz": (float, 20.0),
        "band_hi_ghz": (float, 40.0),
        "ldos_csv": (str, ""),
        "temperature": (float, 0.0),
        "trap_depth_hz": (float, 0.0),
        "collision_rate": (float, 0.0),
    },
    "check-sequence": {"n_periods": (int, 2)},
    "dd-storage": {
        "n_atoms": (int, 8),
        "t_c": (float, None),
        "duty": (float, 0.025),
        "cycles": (int, 1),
        "twirl": (bool, False),
        "angle_error": (float, 0.0),
        "J_offset_hz": (float, 0.0),
    },
    "dd-gate": {
        "window_start": (int, 0),
        "window_end": (int, 2),
        "duty": (float, 0.025),
        "compensation_phase": (float, 0.0),
    },
    "dd-motion": {
        "temperature": (float, 10e-6),
        "omega_khz": (float, 100.0),
        "eta_s": (float, 2e-3),
        "matched": (bool, True),
        "separation_um": (float, 16.0),
        "cycles": (int, 1),
        "duty": (float, 0.025),
        "tau_circ": (float, 3.0),
    },
    "measure-budget": {
        "V_blockade_mhz": (float, 20.0),
        "tau_a_us": (float, 200.0),
        "P_eps_target": (float, 0.2),
        "P_eps_others": (float, 1e-4),
        "P_eps_NN": (float, 1e-3),
        "shift_khz": (float, 1.0),
        "t_meas_ms": (float, 10.0),
        "tau_circ": (float, 3.33),
    },
}
SEQUENCE_COMMANDS = ("check-sequence", "dd-storage", "dd-gate", "dd-motion")


def _suggest(name: str, options) -> str:
    close = difflib.get_close_matches(name, list(options), n=1, cutoff=0.5)
    return f"; did you mean {close[0]!r}?" if close else ""


def _convert(kind, raw: str, key: str):
    raw = raw.strip()
    try:
        if kind is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind is int:
            return int(raw, 0)
        return kind(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {kind.__name__}") from None


def validate_config(text: str = "") -> dict:
    """Parse config text into {section: {key: value}} with every default filled."""
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"),
                                       inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    out = {sec: {k: d for k, (_, d) in keys.items()} for sec, keys in SCHEMA.items()}
    for sec in parser.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]{_suggest(sec, SCHEMA)}")
        for key, raw in parser.items(sec):
            if key not in SCHEMA[sec]:
                raise ConfigError(f"unknown key {key!r} in [{sec}]{_suggest(key, SCHEMA[sec])}")
            kind, _ = SCHEMA[sec][key]
            out[sec][key] = _convert(kind, raw, key)
    return out


def load_config(path) -> dict:
    if path is None:
        return validate_config("")
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return validate_config(text)


# ---------------------------------------------------------------------------
# output helpers


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def provenance(command: str, run_config: dict) -> dict:
    blob = json.dumps(_jsonable(run_config), sort_keys=True).encode()
    return {
        "artifact": "circular_rydberg",
        "version": __version__,
        "subcommand": command,
        "seed": run_config["global"]["seed"],
        "config_hash": hashlib.sha256(blob).hexdigest(),
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }


def write_outputs(out_dir: Path, command: str, run_config: dict, tables: dict, summary: dict) -> list:
    """Write {name}.csv for each table and {command}.json; returns written paths."""
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, (columns, rows) in tables.items():
        p = out_dir / f"{name}.csv"
        p.write_text(csv_text(columns, rows), encoding="utf-8")
        written.append(p)
    doc = {"provenance": provenance(command, run_config), "config": run_config, "summary": summary,
           "files": [p.name for p in written]}
    p = out_dir / f"{command}.json"
    p.write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return written + [p]


# ---------------------------------------------------------------------------
# subcommands (each returns tables, summary)


def _sequence(args, cfg):
    from .dd_engine import builtin_sequences, load_sequence

    if args.sequence_file:
        cfg["sequence"] = {"file": str(args.sequence_file)}
        return load_sequence(args.sequence_file)
    k = args.builtin or 2
    cfg["sequence"] = {"builtin": k}
    return builtin_sequences()[k]


def cmd_interactions(args, cfg):
    from .atomic_structure import FieldConfig
    from .dd_engine import gate_time
    from .interactions import SWEEP_COLUMNS, CoefficientModel, PairWindows, coefficient_sweep

    c = cfg["interactions"]
    try:
        seps = [float(s) * 1e-6 for s in c["separations_um"].split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"separations_um must be a comma list of numbers, got {c['separations_um']!r}") from None
    windows = PairWindows(c["n_window"], c["dm_window"], TWO_PI * c["energy_window_ghz"] * 1e9)
    model = CoefficientModel(windows)
    fields = FieldConfig(c["Ez"], c["Bz"])
    rows = coefficient_sweep([(fields, R) for R in seps], model)
    coef = model.coefficients(fields, seps[0])
    summary = {"coefficients_hz2pi": coef.in_hz(), "separation_m": seps[0], "t_pi_s": gate_time(coef),
               "E_1s1a_hz2pi": coef.E_1s1a / TWO_PI}
    return {"interactions": (list(SWEEP_COLUMNS), rows)}, summary


def cmd_magic_lattice(args, cfg):
    from .ponderomotive import LatticeSpec, find_magic_wavelengths, trap_mismatch

    c = cfg["magic-lattice"]
    lo, hi = c["lam_min_nm"] * 1e-9, c["lam_max_nm"] * 1e-9
    rows = []
    for lam in np.linspace(lo, hi, c["n_scan"]):
        lat = LatticeSpec(lam, c["orientation"])
        rows.append({"wavelength_nm": lam * 1e9, "eta_s": trap_mismatch(59, 61, lat),
                     "eta_a": trap_mismatch(56, 64, lat)})
    points = find_magic_wavelengths(c["orientation"], (lo, hi), n_scan=c["n_scan"])
    summary = {"magic_points": [{"wavelength_nm": p.wavelength * 1e9, "eta_s": p.eta_s, "eta_a": p.eta_a,
                                 "kind": p.kind} for p in points]}
    return {"magic-lattice": (["wavelength_nm", "eta_s", "eta_a"], rows)}, summary


def cmd_rabi(args, cfg):
    from .ponderomotive import rabi_position_sensitivity

    c = cfg["rabi"]
    s = rabi_position_sensitivity(c["n"], c["n_prime"], c["wavelength_nm"] * 1e-9, c["na"], points=c["points"])
    rows = [{"offset_m": o, "rabi_ratio": r} for o, r in zip(s.offsets, s.ratio)]
    return {"rabi": (["offset_m", "rabi_ratio"], rows)}, {"sigma_m": s.sigma, "fit_residual": s.residual}


def cmd_lifetime(args, cfg):
    from .lifetime import LdosModel, total_decay_rate, useful_lifetime

    c = cfg["lifetime"]
    if c["model"] == "free_space":
        model = LdosModel.free_space()
    elif c["model"] == "bandstop":
        model = LdosModel.bandstop(c["P_min"], (c["band_lo_ghz"] * 1e9, c["band_hi_ghz"] * 1e9))
    elif c["model"] == "tabulated":
        if not c["ldos_csv"]:
            raise ConfigError("model = tabulated needs ldos_csv")
        model = LdosModel.from_csv(c["ldos_csv"])
    else:
        raise ConfigError(f"unknown LDOS model {c['model']!r}{_suggest(c['model'], ('free_space', 'bandstop', 'tabulated'))}")
    if c["n_max"] < c["n_min"]:
        raise ConfigError("n_max must be >= n_min")
    rows = []
    for n in range(c["n_min"], c["n_max"] + 1):
        b = total_decay_rate(n, model, c["temperature"])
        rows.append({"n": n, "radiative_lifetime_s": b.lifetime,
                     "useful_lifetime_s": useful_lifetime(b.total, c["trap_depth_hz"], c["collision_rate"])})
    return {"lifetime": (["n", "radiative_lifetime_s", "useful_lifetime_s"], rows)}, {"model": c["model"]}


def cmd_check_sequence(args, cfg):
    from .dd_engine import CONDITION_TEXT, check_conditions, toggling_frames

    seq = _sequence(args, cfg)
    n = cfg["check-sequence"]["n_periods"]
    report = check_conditions(seq, n)
    rows = [{"condition": i, "status": "PASS" if r.passed else "FAIL", "residual": r.residual}
            for i, r in report.items()]
    for r in rows:
        print(f"condition {r['condition']}: {r['status']:4s} residual={r['residual']:.3e}  {CONDITION_TEXT[r['condition']]}")
    frames = toggling_frames(seq)
    summary = {"sequence": seq.name, "n_pulses": len(seq), "n_periods": n,
               "frames": frames.F.tolist(), "beta": frames.beta.tolist()}
    return {"check-sequence": (["condition", "status", "residual"], rows)}, summary


def cmd_dd_storage(args, cfg):
    from .dd_engine import SpinChainConfig, default_cycle_time, simulate_storage

    c = cfg["dd-storage"]
    seq = _sequence(args, cfg)
    chain = SpinChainConfig(n_atoms=c["n_atoms"], J_offset=TWO_PI * c["J_offset_hz"])
    t_c = c["t_c"] if c["t_c"] is not None else default_cycle_time(chain.coefficients)
    c["t_c"] = t_c
    g = cfg["global"]
    res = simulate_storage(seq, chain, c["cycles"], t_c=t_c, duty=c["duty"], twirl=c["twirl"],
                           angle_error=c["angle_error"], samples=g["samples"], seed=g["seed"])
    rows = [{"cycle": int(n), "time_s": t, "error_mean": e.mean, "error_sem": e.sem}
            for n, t, e in zip(res.cycles, res.times, res.errors)]
    return ({"dd-storage": (["cycle", "time_s", "error_mean", "error_sem"], rows)},
            {"sequence": seq.name, "t_c_s": t_c, "final_error": rows[-1]["error_mean"]})


def cmd_dd_gate(args, cfg):
    from .dd_engine import SpinChainConfig, gate_time, simulate_gate

    c = cfg["dd-gate"]
    seq = _sequence(args, cfg)
    chain = SpinChainConfig(n_atoms=4, levels="full4")
    g = cfg["global"]
    window = (c["window_start"], c["window_end"])
    e = simulate_gate(seq, chain, window, duty=c["duty"], samples=g["samples"], seed=g["seed"],
                      compensation_phase=c["compensation_phase"])
    t_pi = gate_time(chain.coefficients)
    rows = [{"gate_cycles": window[1] - window[0], "t_c_s": t_pi / (window[1] - window[0]),
             "error_mean": e.mean, "error_sem": e.sem}]
    return ({"dd-gate": (["gate_cycles", "t_c_s", "error_mean", "error_sem"], rows)},
            {"sequence": seq.name, "t_pi_s": t_pi, "eps_CZ": e.mean, "sem": e.sem})


def cmd_dd_motion(args, cfg):
    from .dd_engine import MotionConfig, SpinChainConfig, simulate_with_motion
    from .interactions import InteractionCoefficients

    c = cfg["dd-motion"]
    seq = _sequence(args, cfg)
    g = cfg["global"]
    a = c["separation_um"] * 1e-6
    chain = SpinChainConfig(n_atoms=4, separation=a,
                            coefficients=InteractionCoefficients.table().scaled((12e-6 / a) ** 6))
    motion = MotionConfig(temperature=c["temperature"], omega=TWO_PI * c["omega_khz"] * 1e3, eta_s=c["eta_s"],
                          matched=c["matched"], samples=g["samples"], seed=g["seed"])
    r = simulate_with_motion(seq, chain, motion, n_cycles=c["cycles"], duty=c["duty"], tau_circ=c["tau_circ"])
    rows = [{"channel": k, "error_mean": v.mean, "error_sem": v.sem} for k, v in r.channels.items()]
    rows.append({"channel": "total", "error_mean": r.total.mean, "error_sem": r.total.sem})
    return ({"dd-motion": (["channel", "error_mean", "error_sem"], rows)},
            {"sequence": seq.name, "t_c_s": r.t_c, "total_error": r.total.mean,
             "incoherent_reference": r.reference_line})


def cmd_measure_budget(args, cfg):
    from .measurement_model import MeasurementParams, budget_report

    c = cfg["measure-budget"]
    params = MeasurementParams(
        V_blockade=TWO_PI * c["V_blockade_mhz"] * 1e6, tau_a=c["tau_a_us"] * 1e-6,
        P_eps_target=c["P_eps_target"], P_eps_others=c["P_eps_others"], P_eps_NN=c["P_eps_NN"],
        differential_shift=TWO_PI * c["shift_khz"] * 1e3, t_meas=c["t_meas_ms"] * 1e-3, tau_circ=c["tau_circ"])
    report = budget_report(params)
    rows = [{"quantity": k, "value": v} for k, v in sorted(report["budget"].items())]
    return {"measure-budget": (["quantity", "value"], rows)}, report["budget"]


COMMANDS = {
    "interactions": cmd_interactions,
    "magic-lattice": cmd_magic_lattice,
    "rabi": cmd_rabi,
    "lifetime": cmd_lifetime,
    "check-sequence": cmd_check_sequence,
    "dd-storage": cmd_dd_storage,
    "dd-gate": cmd_dd_gate,
    "dd-motion": cmd_dd_motion,
    "measure-budget": cmd_measure_budget,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="circular-rydberg", description="Circular Rydberg quantum-simulation toolkit")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", type=Path)
        s.add_argument("--seed", type=int)
        s.add_argument("--out", type=Path, default=Path("results"))
        s.add_argument("--samples", type=int)
        if name in SEQUENCE_COMMANDS:
            g = s.add_mutually_exclusive_group()
            g.add_argument("--builtin", type=int, choices=(1, 2, 3))
            g.add_argument("--sequence-file", type=Path)
        if name == "check-sequence":
            s.add_argument("--n-periods", type=int)
    return p


def run(argv=None) -> int:
    from .dd_engine import ConvergenceError
    from .interactions import InteractionError
    from .ponderomotive import QuadratureError

    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("seed must be an unsigned 64-bit integer")
            cfg["global"]["seed"] = args.seed
        if args.samples is not None:
            cfg["global"]["samples"] = args.samples
        if cfg["global"]["samples"] < 1:
            raise ConfigError("samples must be >= 1")
        if getattr(args, "n_periods", None) is not None:
            cfg["check-sequence"]["n_periods"] = args.n_periods
        run_cfg = {"global": cfg["global"], args.command: cfg[args.command]}
        tables, summary = COMMANDS[args.command](args, run_cfg)
        for path in write_outputs(args.out, args.command, run_cfg, tables, summary):
            print(f"wrote {path}")
        return EXIT_OK
    except (ConvergenceError, QuadratureError, InteractionError) as exc:
        print(f"convergence error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
