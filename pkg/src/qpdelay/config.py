"""Configuration loading: TOML file < environment overrides < CLI flags.

The file holds three tables: [problem] (the equation instance), [solver]
(iteration constants) and [run] (seed, omega, output paths).  The resolved
configuration is hashed (sha256 over a canonical JSON dump) into every run
manifest, so identical inputs are recognizable across runs.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml

from .errors import ConfigError
from .model import ProblemSpec
from .newton import SolverConfig

ENV_OVERRIDES = {
    "QPDELAY_SEED": ("run", "seed", int),
    "QPDELAY_OMEGA": ("run", "omega", "omega"),
    "QPDELAY_MODE": ("solver", "mode", str),
    "QPDELAY_OUT": ("run", "out", str),
    "QPDELAY_JOBS": ("run", "jobs", int),
}

RUN_DEFAULTS = {"seed": 0, "out": "runs/out", "jobs": 1, "n_samples": 200,
                "stages": 3, "omega": None, "explore_radius": None}


def parse_omega(text):
    try:
        return [float(x) for x in str(text).replace(",", " ").split()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse omega {text!r}: {exc}") from exc


def load_toml(path):
    try:
        with open(path, "rb") as fh:
            return _toml.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except _toml.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc


def problem_from_dict(tbl):
    try:
        n = int(tbl["n"])
        d = int(tbl["d"])
        A = np.array(tbl["A"], dtype=float)
        tau = float(tbl["tau"])
        epsilon = float(tbl["epsilon"])
        freq_box = np.array(tbl["freq_box"], dtype=float)
    except KeyError as exc:
        raise ConfigError(f"[problem] missing key {exc}") from exc
    f_coeffs = {}
    for row in tbl.get("f", []):
        alpha = tuple(int(x) for x in row["alpha"])
        beta = tuple(int(x) for x in row["beta"])
        re = np.array(row["re"], dtype=float)
        im = np.array(row.get("im", np.zeros_like(re)), dtype=float)
        f_coeffs[(alpha, beta)] = re + 1j * im
    g_coeffs = {}
    for row in tbl.get("g", []):
        k = tuple(int(x) for x in row["k"])
        re = np.array(row["re"], dtype=float)
        im = np.array(row.get("im", np.zeros_like(re)), dtype=float)
        g_coeffs[k] = re + 1j * im
    spec = ProblemSpec(n=n, d=d, A=A, f_coeffs=f_coeffs, g_coeffs=g_coeffs,
                       tau=tau, epsilon=epsilon, freq_box=freq_box)
    try:
        spec.validate()
    except Exception as exc:
        raise ConfigError(f"invalid problem: {exc}") from exc
    return spec


def solver_from_dict(tbl):
    known = set(SolverConfig.__dataclass_fields__)
    unknown = set(tbl) - known
    if unknown:
        raise ConfigError(f"[solver] unknown keys: {sorted(unknown)}")
    return SolverConfig(**tbl)


def resolve(path, env=None, flag_overrides=None):
    """Resolved (problem, solver, run) with precedence file < env < flags."""
    env = os.environ if env is None else env
    raw = load_toml(path)
    if "problem" not in raw:
        raise ConfigError("config must contain a [problem] table")
    run = dict(RUN_DEFAULTS)
    run.update(raw.get("run", {}))
    solver_tbl = dict(raw.get("solver", {}))
    for var, (section, key, conv) in ENV_OVERRIDES.items():
        if var in env and env[var] != "":
            val = parse_omega(env[var]) if conv == "omega" else conv(env[var])
            (run if section == "run" else solver_tbl)[key] = val
    for key, val in (flag_overrides or {}).items():
        if val is None:
            continue
        section, name = key
        if section == "run":
            run[name] = val
        else:
            solver_tbl[name] = val
    problem = problem_from_dict(raw["problem"])
    solver = solver_from_dict(solver_tbl)
    if run.get("omega") is not None and len(run["omega"]) != problem.d:
        raise ConfigError(f"omega must have {problem.d} components")
    return problem, solver, run


def canonical_json(obj):
    def default(x):
        if isinstance(x, np.ndarray):
            return x.tolist()
        if isinstance(x, (np.integer,)):
            return int(x)
        if isinstance(x, (np.floating,)):
            return float(x)
        if isinstance(x, complex):
            return [x.real, x.imag]
        raise TypeError(f"not serializable: {type(x)}")
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=default)


def resolved_dict(problem, solver, run):
    return {
        "problem": {
            "n": problem.n, "d": problem.d, "A": problem.A,
            "tau": problem.tau, "epsilon": problem.epsilon,
            "freq_box": problem.freq_box,
            "f": sorted((list(a), list(b), [[v.real, v.imag] for v in vec])
                        for (a, b), vec in problem.f_coeffs.items()),
            "g": sorted((list(k), [[v.real, v.imag] for v in vec])
                        for k, vec in problem.g_coeffs.items()),
        },
        "solver": solver.to_dict(),
        "run": {k: run.get(k) for k in sorted(run)},
    }


def config_hash(problem, solver, run):
    return hashlib.sha256(
        canonical_json(resolved_dict(problem, solver, run)).encode()).hexdigest()
