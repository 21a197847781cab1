"""Command-line front end.

Commands: solve, verify, excise, explore, sweep.  Exit codes: 0 success,
1 configuration error, 2 excised frequency, 3 divergence or verification
failure.  All artifacts are plain text or CSV ('.' decimal, comma
separator, headers documented in the README); identical (config, seed)
inputs produce byte-identical outputs.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .config import config_hash, parse_omega, resolve, resolved_dict
from .errors import ConfigError, QPDelayError
from .excision import (apply_excision, check_separation,
                       fit_constraint_at_site, run_staged_excision,
                       sample_frequencies, sigma1_scan_values)
from .inverse import dense_inverse, invert_box
from .lattice import (FourierVector, KBox, assemble_linearization, lattice_sites)
from .model import diagonalize
from .newton import solve
from .smalldivisor import (build_clusters, check_melnikov, choose_epsilon1,
                           default_schedule, find_singular_sites)
from .verification import conjugate_symmetry_defect, dde_residual

log = logging.getLogger("qpdelay")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_EXCISED = 2
EXIT_DIVERGED = 3


def dspec_diag(dspec, m, omega):
    from .lattice import diagonal_entry
    return diagonal_entry(m, 0.0, np.asarray(omega, dtype=float), dspec.tau,
                          dspec.lambdas)


def _fmt(x):
    """Shortest round-trip decimal form; '.' decimal point always."""
    if isinstance(x, float):
        return repr(x)
    if isinstance(x, (np.floating,)):
        return repr(float(x))
    return str(x)


def write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


class Manifest:
    def __init__(self, command, problem, solver, run):
        self.data = {"command": command, "version": __version__,
                     "config_hash": config_hash(problem, solver, run),
                     "seed": int(run.get("seed", 0)),
                     "resolved_config": resolved_dict(problem, solver, run),
                     "artifacts": [], "timings": {}}
        self._t0 = time.perf_counter()
        self._last = self._t0

    def add(self, path):
        self.data["artifacts"].append(str(path))
        return path

    def phase(self, name):
        now = time.perf_counter()
        self.data["timings"][name] = round(now - self._last, 6)
        self._last = now

    def write(self, outdir):
        self.data["timings"]["total"] = round(time.perf_counter() - self._t0, 6)
        path = os.path.join(outdir, "manifest.json")
        self.data["artifacts"].append(path)
        with open(path, "w") as fh:
            json.dump(self.data, fh, indent=2, sort_keys=True, default=_json_default)
            fh.write("\n")
        return path


def _json_default(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    return str(x)


def _outdir(run):
    out = run.get("out") or "runs/out"
    os.makedirs(out, exist_ok=True)
    return out


def _omega_of(problem, run):
    om = run.get("omega")
    if om is None:
        # default: midpoint of the frequency box
        om = [(lo + hi) / 2.0 for lo, hi in problem.freq_box]
    return np.asarray(om, dtype=float)


RESIDUAL_HEADER = ["stage", "N", "residual", "delta_norm", "tail", "cancel",
                   "offbox", "taylor"]


def cmd_solve(problem, solver, run):
    outdir = _outdir(run)
    man = Manifest("solve", problem, solver, run)
    omega = _omega_of(problem, run)
    result = solve(problem, omega, solver)
    man.phase("solve")
    rep = result.report

    ypath = man.add(os.path.join(outdir, "y.txt"))
    with open(ypath, "w") as fh:
        fh.write(f"# qpdelay lattice vector, d={problem.d}, one entry per line:"
                 " mu j k1..kd re im\n")
        for line in result.y.to_lines():
            fh.write(line + "\n")

    write_csv(man.add(os.path.join(outdir, "residuals.csv")),
              RESIDUAL_HEADER, rep.residual_rows())

    rpath = man.add(os.path.join(outdir, "report.txt"))
    with open(rpath, "w") as fh:
        fh.write(rep.to_text())
    man.phase("artifacts")
    man.write(outdir)

    final_r = rep.residual_history[-1] if rep.residual_history else float("nan")
    print(f"solve: status={result.status} stages={len(rep.steps)} "
          f"residual={final_r:.6e}")
    if result.status in ("converged", "floor"):
        return EXIT_OK
    if result.status == "excised":
        return EXIT_EXCISED
    if result.status == "config_infeasible":
        return EXIT_CONFIG
    return EXIT_DIVERGED


def cmd_verify(problem, solver, run, ypath=None):
    outdir = _outdir(run)
    man = Manifest("verify", problem, solver, run)
    omega = _omega_of(problem, run)
    ypath = ypath or os.path.join(outdir, "y.txt")
    with open(ypath) as fh:
        y = FourierVector.from_lines(fh, problem.d)
    man.phase("load")
    report = dde_residual(y, omega, problem)
    defect = conjugate_symmetry_defect(y)
    man.phase("residual")
    path = man.add(os.path.join(outdir, "residual_report.txt"))
    with open(path, "w") as fh:
        for line in report.to_lines():
            fh.write(line + "\n")
        fh.write(f"conjugate_symmetry_defect {defect!r}\n")
    man.write(outdir)
    print(f"verify: sup_residual={report.sup_residual:.6e} "
          f"tail_ceiling={report.quadrature_tail:.6e} conj_defect={defect:.6e}")
    return EXIT_OK


def _excision_screens(problem, solver, dspec):
    """Stage screens for the excise command.

    Stage 1 is the nonresonance scan; later stages fit the first-order
    constraint at the singular site of the stage box (when one exists) and
    apply the exclusion rule, then check the separation property on a
    fixed annulus pair.
    """
    kmel = solver.melnikov_radius or 100 * solver.N0

    def melnikov_screen(omega):
        rep = check_melnikov(omega, dspec.lambdas, solver.gamma, kmel)
        if rep.passed:
            return True, None
        return False, f"melnikov {rep.violations[0]}"

    def stage_screen(stage_j):
        N = solver.M ** (stage_j + 1)

        def screen(omega):
            eps1 = solver.epsilon1 or choose_epsilon1(
                omega, dspec.lambdas, solver.gamma, solver.N0, problem.d)
            op = assemble_linearization(FourierVector(problem.d), dspec,
                                        omega, N=N)
            params = solver.inversion_params(eps1)
            try:
                _, info = invert_box(op, 0.0, N, params)
            except QPDelayError as exc:
                return False, f"inversion: {exc}"
            if info["m_star"] is None:
                return True, None
            m_star = info["m_star"]
            try:
                constraint = fit_constraint_at_site(
                    op, m_star, params, N, h0=abs(info["h"]),
                    epsilon=dspec.epsilon, npoints=solver.h_window_points,
                    N_local=solver.N0)
            except QPDelayError as exc:
                return False, f"fit: {exc}"
            scan = sigma1_scan_values(omega, m_star, dspec.lambdas, N)
            ok, witness = apply_excision([constraint], omega, scan)
            if not ok:
                return False, (f"|p| = {abs(witness['p']):.3e} at k={witness['k']}")
            # separation probe: shifted locals along one annulus vector must
            # not both fail the norm/decay property
            n_prime = solver.N0 + 1
            k_probe = (int(np.floor(4.4 * n_prime)),) + (0,) * (problem.d - 1)
            if 4 * n_prime < max(abs(x) for x in k_probe) < n_prime ** solver.C3:
                kw = float(np.dot(k_probe, omega))
                for s1 in (float(dspec.lambdas[0]), 0.5 * float(dspec.lambdas[0])):
                    if not check_separation(op, s1, s1 - kw, k_probe, n_prime,
                                            params):
                        return False, f"separation failed at sigma1={s1:.3f}"
            return True, None

        return screen

    return [(1, melnikov_screen)], stage_screen


def cmd_excise(problem, solver, run):
    outdir = _outdir(run)
    man = Manifest("excise", problem, solver, run)
    dspec = diagonalize(problem)
    n_samples = int(run.get("n_samples", 200))
    stages = int(run.get("stages", 3))
    seed = int(run.get("seed", 0))
    screens, stage_screen = _excision_screens(problem, solver, dspec)
    j0 = 2
    for s in range(stages - 1):
        screens.append((s + 2, stage_screen(j0 + s)))
    records = run_staged_excision(problem.freq_box, screens, n_samples, seed,
                                  eta=solver.eta)
    man.phase("screens")

    rows = []
    for rec in records:
        rows.append((rec.stage, rec.n_samples, len(rec.rejected),
                     rec.bad_fraction, rec.budget,
                     "pass" if rec.within_budget() else "warn"))
    write_csv(man.add(os.path.join(outdir, "excision.csv")),
              ["stage", "n_samples", "n_rejected", "fraction", "budget", "status"],
              rows)
    recpath = man.add(os.path.join(outdir, "excision_records.txt"))
    with open(recpath, "w") as fh:
        for rec in records:
            for line in rec.to_lines():
                fh.write(line + "\n")
            fh.write("\n")
    man.write(outdir)
    print("excise: " + "  ".join(
        f"stage {r.stage}: fraction={r.bad_fraction:.4f} "
        f"budget={r.budget:.4f} {'pass' if r.within_budget() else 'WARN'}"
        for r in records))
    return EXIT_OK


def cmd_explore(problem, solver, run):
    outdir = _outdir(run)
    man = Manifest("explore", problem, solver, run)
    dspec = diagonalize(problem)
    omega = _omega_of(problem, run)
    kmel = solver.melnikov_radius or 100 * solver.N0
    mel = check_melnikov(omega, dspec.lambdas, solver.gamma, kmel)
    kcols = [f"k{i+1}" for i in range(problem.d)]
    write_csv(man.add(os.path.join(outdir, "melnikov.csv")),
              kcols + ["mu", "j", "mup", "jp", "value"],
              [tuple(k) + (mu, j, mup, jp, v)
               for (k, mu, j, mup, jp, v) in mel.violations])
    man.phase("melnikov")

    N = int(run.get("explore_radius") or 4 * solver.N0)
    eps1 = solver.epsilon1 or choose_epsilon1(omega, dspec.lambdas,
                                              solver.gamma, solver.N0, problem.d)
    # linearize along the linear response -eps * phase*g / D, so the decay
    # profile reflects an actual operator rather than the empty one
    from .lattice import forcing_vector
    y1 = FourierVector(problem.d)
    for m, cval in forcing_vector(dspec, omega).entries.items():
        y1.set(m, -dspec.epsilon * cval / dspec_diag(dspec, m, omega))
    op = assemble_linearization(y1, dspec, omega, N=N)
    box = KBox.centered(N, problem.d)
    sites = find_singular_sites(op, eps1, box)
    write_csv(man.add(os.path.join(outdir, "singular_sites.csv")),
              ["mu", "j"] + kcols + ["abs_diagonal"],
              [(m.mu, m.j) + tuple(m.k) + (abs(op.dsigma(m)),) for m in sites])
    man.phase("singular")

    params = solver.inversion_params(eps1)
    schedule = default_schedule(solver.N0, solver.C3, N)
    cluster_rows = []
    if schedule:
        from .inverse import sepa_fail_predicate
        try:
            clusters = build_clusters(op, schedule,
                                      sepa_fail_predicate(op, 0.0, params, box),
                                      eps1, N=N, C3=solver.C3)
            for scale, lam in zip(clusters.scales, clusters.lambdas_nested):
                cluster_rows.append((scale,) + lam.lo + lam.hi)
        except QPDelayError as exc:
            log.warning("cluster construction aborted: %s", exc)
    write_csv(man.add(os.path.join(outdir, "clusters.csv")),
              ["scale"] + [f"lo{i+1}" for i in range(problem.d)]
              + [f"hi{i+1}" for i in range(problem.d)], cluster_rows)
    man.phase("clusters")

    li = dense_inverse(op, lattice_sites(problem.n, box))
    from .inverse import _pair_separations
    R = _pair_separations(li.sites)
    V = np.abs(li.matrix)
    rows = []
    for r in range(0, int(R.max()) + 1):
        vals = V[R == r]
        if vals.size:
            rows.append((r, float(np.log10(max(vals.max(), 1e-300)))))
    write_csv(man.add(os.path.join(outdir, "decay_profile.csv")),
              ["separation", "log10_max_abs"], rows)
    man.phase("decay")
    man.write(outdir)
    print(f"explore: melnikov_violations={len(mel.violations)} "
          f"singular_sites={len(sites)} clusters={len(cluster_rows)}")
    return EXIT_OK


def _sweep_one(args):
    problem, solver, omega, idx = args
    result = solve(problem, omega, solver)
    rep = result.report
    return (idx, tuple(float(x) for x in omega), result.status,
            len(rep.steps),
            float(rep.residual_history[-1]) if rep.residual_history else float("nan"))


def cmd_sweep(problem, solver, run):
    outdir = _outdir(run)
    man = Manifest("sweep", problem, solver, run)
    n_samples = int(run.get("n_samples", 200))
    seed = int(run.get("seed", 0))
    jobs = max(1, int(run.get("jobs", 1)))
    omegas = sample_frequencies(problem.freq_box, n_samples, seed)
    tasks = [(problem, solver, omegas[i], i) for i in range(n_samples)]
    if jobs > 1:
        sample_dir = os.path.join(outdir, "samples")
        os.makedirs(sample_dir, exist_ok=True)
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_sweep_one, tasks, chunksize=4))
        for row in results:
            write_csv(os.path.join(sample_dir, f"sample_{row[0]:05d}.csv"),
                      ["index"] + [f"omega{i+1}" for i in range(problem.d)]
                      + ["status", "stages", "residual"],
                      [(row[0],) + row[1] + row[2:]])
        results = {row[0]: row for row in results}
        rows = [results[i] for i in sorted(results)]
    else:
        rows = [_sweep_one(t) for t in tasks]
    man.phase("solves")

    flat = [(r[0],) + r[1] + (r[2], r[3], r[4]) for r in rows]
    write_csv(man.add(os.path.join(outdir, "sweep.csv")),
              ["index"] + [f"omega{i+1}" for i in range(problem.d)]
              + ["status", "stages", "residual"], flat)

    accepted = sum(1 for r in rows if r[2] in ("converged", "floor"))
    frac = accepted / n_samples if n_samples else 0.0
    spath = man.add(os.path.join(outdir, "sweep_summary.txt"))
    by_status = {}
    for r in rows:
        by_status[r[2]] = by_status.get(r[2], 0) + 1
    with open(spath, "w") as fh:
        fh.write(f"n_samples {n_samples}\n")
        fh.write(f"accepted {accepted}\n")
        fh.write(f"acceptance_fraction {frac!r}\n")
        for k in sorted(by_status):
            fh.write(f"status {k} {by_status[k]}\n")
        by_stages = {}
        for r in rows:
            by_stages[r[3]] = by_stages.get(r[3], 0) + 1
        for k in sorted(by_stages):
            fh.write(f"stages {k} {by_stages[k]} fraction {by_stages[k] / n_samples!r}\n")
        fh.write(f"eta {solver.eta!r}\n")
        fh.write(f"admissible_fraction_target >= {1.0 - solver.eta!r}\n")
    man.phase("artifacts")
    man.write(outdir)
    print(f"sweep: accepted {accepted}/{n_samples} (fraction {frac:.3f})")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(
        prog="qpdelay",
        description="Quasi-periodic solutions of delayed perturbation "
                    "differential equations: solve, verify, excise, explore, sweep.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="TOML configuration file")
    common.add_argument("--omega", help="frequency vector 'v1,...,vd'")
    common.add_argument("--seed", type=int, help="RNG seed")
    common.add_argument("--jobs", type=int, help="parallel workers (sweep)")
    common.add_argument("--mode", choices=["desk", "proof_fidelity"])
    common.add_argument("--out", help="output directory")
    sub.add_parser("solve", parents=[common], help="run the Newton construction")
    pv = sub.add_parser("verify", parents=[common],
                        help="time-domain residual of a stored solution")
    pv.add_argument("--y", help="lattice vector file (default OUT/y.txt)")
    pe = sub.add_parser("excise", parents=[common],
                        help="staged excision measure estimate")
    pe.add_argument("--samples", type=int, help="number of frequency samples")
    pe.add_argument("--stages", type=int, help="number of excision stages")
    px = sub.add_parser("explore", parents=[common],
                        help="resonance maps, clusters, decay profiles")
    px.add_argument("--radius", type=int, help="exploration box radius")
    ps = sub.add_parser("sweep", parents=[common],
                        help="acceptance sweep over sampled frequencies")
    ps.add_argument("--samples", type=int, help="number of frequency samples")
    return p


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    logging.basicConfig(
        level=getattr(logging, os.environ.get("QPDELAY_LOG", "WARNING").upper(),
                      logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides = {
        ("run", "omega"): parse_omega(args.omega) if args.omega else None,
        ("run", "seed"): args.seed,
        ("run", "jobs"): args.jobs,
        ("run", "out"): args.out,
        ("solver", "mode"): args.mode,
        ("run", "n_samples"): getattr(args, "samples", None),
        ("run", "stages"): getattr(args, "stages", None),
        ("run", "explore_radius"): getattr(args, "radius", None),
    }
    try:
        problem, solver, run = resolve(args.config, flag_overrides=overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "solve":
            return cmd_solve(problem, solver, run)
        if args.command == "verify":
            return cmd_verify(problem, solver, run, ypath=args.y)
        if args.command == "excise":
            return cmd_excise(problem, solver, run)
        if args.command == "explore":
            return cmd_explore(problem, solver, run)
        if args.command == "sweep":
            return cmd_sweep(problem, solver, run)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except QPDelayError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    parser.error("unknown command")


if __name__ == "__main__":
    sys.exit(main())
