"""Command-line entry point: config loading, subcommand dispatch, CSV output."""

from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys

import numpy as np

from . import __version__
from .beamforming import aas_beamformer, comm_beamformer, eas_beamformer
from .channel import generate_scene
from .config import RunConfig, SystemConfig
from .detection import hierarchical_detect
from .exceptions import ConfigError, SquintSenseError
from .power import PowerPlan
from .simkit import (
    aggregate_to_csv,
    allocate_comm_plan,
    records_to_csv,
    run_experiment,
    trial_seed,
)

OUTPUT_DIR_ENV = "SQUINTSENSE_OUTPUT_DIR"


def _deg(value: str) -> float:
    return math.radians(float(value))


def _bool(value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ValueError(f"expected boolean, got {value!r}")


# config-file key -> (SystemConfig field, parser)
_SYSTEM_KEYS = {
    "fc_hz": ("fc", float),
    "bandwidth_hz": ("bandwidth", float),
    "n_subcarriers": ("n_subcarriers", int),
    "m_h": ("m_h", int),
    "m_v": ("m_v", int),
    "height_m": ("height", float),
    "theta_min_deg": ("theta_min", _deg),
    "theta_max_deg": ("theta_max", _deg),
    "phi_min_deg": ("phi_min", _deg),
    "phi_max_deg": ("phi_max", _deg),
    "noise_psd_dbm_hz": ("noise_psd_dbm_hz", float),
    "sigma_rcs_dbsm": ("sigma_rcs_dbsm", float),
    "kappa_db": ("kappa_db", float),
    "n_clutter": ("n_clutter", int),
    "sigma_clutter_dbsm": ("sigma_clutter_dbsm", float),
    "tau_s_db": ("tau_s_db", float),
    "tau_c_db": ("tau_c_db", float),
    "p_s_max_w": ("p_s_max", float),
    "n_candidates": ("n_candidates", int),
    "user_min_separation_deg": ("user_min_separation", _deg),
    "uniform_candidate_grid": ("uniform_candidate_grid", _bool),
    "max_abs_ttd_s": ("max_abs_ttd", float),
}

_RUN_KEYS = {
    "method": ("method", str),
    "q_targets": ("q_targets", int),
    "k_users": ("k_users", int),
    "trials": ("trials", int),
    "seed": ("seed", int),
    "sweep_var": ("sweep_var", str),
    "sweep_values": ("sweep_values", lambda v: tuple(float(x) for x in v.split(","))),
    "output": ("output", str),
    "include_clutter": ("include_clutter", _bool),
}


def load_config(path: str) -> RunConfig:
    """Parse a flat key=value config file into a validated RunConfig."""
    system_kwargs = {}
    run_kwargs = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path!r}: {exc}") from exc
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        try:
            if key in _SYSTEM_KEYS:
                field, parse = _SYSTEM_KEYS[key]
                system_kwargs[field] = parse(value)
            elif key in _RUN_KEYS:
                field, parse = _RUN_KEYS[key]
                run_kwargs[field] = parse(value)
            else:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from exc
    try:
        system = SystemConfig(**system_kwargs)
        return RunConfig(system=system, **run_kwargs)
    except ConfigError as exc:
        raise ConfigError(f"config file {path!r}: {exc}") from exc


def echo_config(run: RunConfig) -> list:
    """Config-file lines that reproduce this run exactly."""
    sys_cfg = run.system
    inverse = {
        "fc_hz": sys_cfg.fc,
        "bandwidth_hz": sys_cfg.bandwidth,
        "n_subcarriers": sys_cfg.n_subcarriers,
        "m_h": sys_cfg.m_h,
        "m_v": sys_cfg.m_v,
        "height_m": sys_cfg.height,
        "theta_min_deg": math.degrees(sys_cfg.theta_min),
        "theta_max_deg": math.degrees(sys_cfg.theta_max),
        "phi_min_deg": math.degrees(sys_cfg.phi_min),
        "phi_max_deg": math.degrees(sys_cfg.phi_max),
        "noise_psd_dbm_hz": sys_cfg.noise_psd_dbm_hz,
        "sigma_rcs_dbsm": sys_cfg.sigma_rcs_dbsm,
        "kappa_db": sys_cfg.kappa_db,
        "n_clutter": sys_cfg.n_clutter,
        "sigma_clutter_dbsm": sys_cfg.sigma_clutter_dbsm,
        "tau_s_db": sys_cfg.tau_s_db,
        "tau_c_db": sys_cfg.tau_c_db,
        "p_s_max_w": sys_cfg.p_s_max,
        "n_candidates": sys_cfg.n_candidates,
        "user_min_separation_deg": math.degrees(sys_cfg.user_min_separation),
        "uniform_candidate_grid": str(sys_cfg.uniform_candidate_grid).lower(),
        "max_abs_ttd_s": sys_cfg.max_abs_ttd,
        "method": run.method,
        "q_targets": run.q_targets,
        "k_users": run.k_users,
        "trials": run.trials,
        "seed": run.seed,
        "include_clutter": str(run.include_clutter).lower(),
    }
    lines = [f"{key} = {value!r}".replace("'", "") for key, value in inverse.items()]
    if run.sweep_var is not None:
        lines.append(f"sweep_var = {run.sweep_var}")
        lines.append("sweep_values = " + ",".join(repr(v) for v in run.sweep_values))
    if run.output is not None:
        lines.append(f"output = {run.output}")
    return lines


def provenance_lines(run: RunConfig) -> list:
    return [f"squintsense {__version__}", f"master seed {run.seed}", "effective config:"] + [
        "  " + line for line in echo_config(run)
    ]


def _resolve_output(path: str) -> str:
    override = os.environ.get(OUTPUT_DIR_ENV)
    if override:
        return os.path.join(override, os.path.basename(path))
    return path


def _write(path, text, stdout):
    if path is None:
        stdout.write(text)
        return
    path = _resolve_output(path)
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(text)


def cmd_simulate(run: RunConfig, args, stdout) -> int:
    records, rows = run_experiment(run)
    prov = provenance_lines(run)
    base = run.output or args.output
    if base is None:
        _write(None, aggregate_to_csv(rows, prov), stdout)
    else:
        root, ext = os.path.splitext(base)
        ext = ext or ".csv"
        _write(root + "_aggregate" + ext, aggregate_to_csv(rows, prov), stdout)
        _write(root + "_trials" + ext, records_to_csv(records, prov), stdout)
    return 0


def _one_detection(run: RunConfig):
    cfg = run.system
    scene = generate_scene(cfg, run.q_targets, run.k_users, trial_seed(run.seed, 0, 0, 0))
    rng = np.random.default_rng(trial_seed(run.seed, 0, 0, 1))
    result = hierarchical_detect(cfg, scene, run.q_targets, rng, run.include_clutter)
    return cfg, scene, result


def cmd_detect(run: RunConfig, args, stdout) -> int:
    _, _, result = _one_detection(run)
    buf = io.StringIO()
    for line in provenance_lines(run):
        buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["stage", "iteration", "selected_index", "correlation", "residual_norm"])
    for stage, counting in enumerate(result.traces):
        for it, (idx, corr, res) in enumerate(counting.trace):
            writer.writerow([stage, it, idx, f"{corr:.12e}", f"{res:.12e}"])
    _write(run.output or args.output, buf.getvalue(), stdout)
    return 0


def cmd_power(run: RunConfig, args, stdout) -> int:
    cfg, scene, result = _one_detection(run)
    comm_powers, _, tau_eff = allocate_comm_plan(
        cfg, scene, result.stage_weights, result.sensing_powers
    )
    plan = PowerPlan(
        symbol_counts=list(result.symbol_counts),
        sensing_powers=list(result.sensing_powers),
        comm_powers=comm_powers,
        effective_tau_c=tau_eff,
    )
    buf = io.StringIO()
    for line in provenance_lines(run):
        buf.write(f"# {line}\n")
    buf.write(f"# effective sinr threshold (linear) {tau_eff:.12g}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["kind", "stage", "user", "subcarrier", "symbols", "power_w"])
    for stage, (t, p_s) in enumerate(zip(plan.symbol_counts, plan.sensing_powers)):
        for n, p in enumerate(p_s):
            writer.writerow(["sensing", stage, "", n, t, f"{p:.12e}"])
    for stage, p_c in enumerate(plan.comm_powers):
        for k in range(p_c.shape[0]):
            for n in range(p_c.shape[1]):
                writer.writerow(
                    ["comm", stage, k, n, plan.symbol_counts[stage], f"{p_c[k, n]:.12e}"]
                )
    _write(run.output or args.output, buf.getvalue(), stdout)
    return 0


def cmd_beampattern(run: RunConfig, args, stdout) -> int:
    cfg = run.system
    kind = args.stage
    subcarriers = [int(s) for s in args.subcarriers.split(",")]
    for n in subcarriers:
        if not 0 <= n < cfg.n_subcarriers:
            raise ConfigError(f"subcarrier index {n} outside [0, {cfg.n_subcarriers - 1}]")
    if kind == "eas":
        bf = eas_beamformer(cfg)
    elif kind == "aas":
        if args.theta_hat is None:
            raise ConfigError("beampattern --stage aas requires --theta-hat")
        bf = aas_beamformer(cfg, math.radians(args.theta_hat))
    elif kind == "comm":
        if args.theta_hat is None or args.phi is None:
            raise ConfigError("beampattern --stage comm requires --theta-hat and --phi")
        bf = comm_beamformer(cfg, math.radians(args.theta_hat), math.radians(args.phi))
    else:
        raise ConfigError(f"unknown beampattern stage {kind!r}")

    buf = io.StringIO()
    for line in provenance_lines(run):
        buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    if kind == "eas":
        # sweep elevation at mid azimuth
        writer.writerow(["stage", "subcarrier", "theta_deg", "phi_deg", "gain_abs"])
        thetas = np.linspace(cfg.theta_min, cfg.theta_max, args.points)
        phi = 0.5 * (cfg.phi_min + cfg.phi_max)
        for n in subcarriers:
            gains = np.abs(bf.gain(thetas, phi, n))
            for th, g in zip(thetas, gains):
                writer.writerow(
                    [kind, n, f"{math.degrees(th):.6f}", f"{math.degrees(phi):.6f}", f"{g:.12e}"]
                )
    else:
        # sweep azimuth at the pointing elevation
        theta = math.radians(args.theta_hat)
        writer.writerow(["stage", "subcarrier", "theta_deg", "phi_deg", "gain_abs"])
        phis = np.linspace(cfg.phi_min, cfg.phi_max, args.points)
        for n in subcarriers:
            gains = np.abs(bf.gain(theta, phis, n))
            for ph, g in zip(phis, gains):
                writer.writerow(
                    [kind, n, f"{math.degrees(theta):.6f}", f"{math.degrees(ph):.6f}", f"{g:.12e}"]
                )
    _write(run.output or args.output, buf.getvalue(), stdout)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="squintsense",
        description="Wideband OFDM beam-squint angle sensing simulator",
    )
    sub = parser.add_subparsers(dest="command")
    for name, help_text in (
        ("simulate", "run a Monte Carlo experiment and emit aggregate/trial CSVs"),
        ("detect", "run one seeded detection trial and dump the pursuit trace"),
        ("power", "print the power plan of one seeded trial as CSV"),
        ("beampattern", "dump gain-vs-angle curves for chosen subcarriers"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default=None, help="flat key=value config file")
        p.add_argument("--output", default=None, help="output CSV path (default stdout)")
        p.add_argument("--seed", type=int, default=None, help="override master seed")
        if name == "beampattern":
            p.add_argument("--stage", required=True, choices=["eas", "aas", "comm"])
            p.add_argument("--theta-hat", type=float, default=None, help="elevation, degrees")
            p.add_argument("--phi", type=float, default=None, help="azimuth, degrees")
            p.add_argument("--subcarriers", default="0", help="comma list of indices")
            p.add_argument("--points", type=int, default=721, help="angle sweep points")
    return parser


_COMMANDS = {
    "simulate": cmd_simulate,
    "detect": cmd_detect,
    "power": cmd_power,
    "beampattern": cmd_beampattern,
}


def main(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(stderr)
        return 1
    try:
        if args.config is not None:
            run = load_config(args.config)
        else:
            run = RunConfig(system=SystemConfig())
        if args.seed is not None:
            run = run.replace(seed=args.seed)
        for line in echo_config(run):
            stderr.write(f"# {line}\n")
        return _COMMANDS[args.command](run, args, stdout)
    except ConfigError as exc:
        stderr.write(f"config error: {exc}\n")
        return 1
    except SquintSenseError as exc:
        stderr.write(f"runtime error: {exc}\n")
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
