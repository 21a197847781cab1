"""Acceptance gate: one test per criterion, each printing a pass/fail line.

Run with `pytest tests/test_acceptance.py -s` to see the lines as they
complete.  Every tolerance is the criterion's stated one; runtime budgets
are asserted against wall-clock time.
"""

import itertools
import time

import numpy as np
import pytest

from conftest import (canonical_problem, light_problem, manufactured_problem,
                      random_vector, rotation_problem)
from qpdelay.errors import ConfigError
from qpdelay.inverse import InversionParams, dense_inverse, invert_box, resolvent_residual
from qpdelay.lattice import (KBox, assemble_linearization, check_translation,
                             lattice_sites)
from qpdelay.model import diagonalize
from qpdelay.newton import SolverConfig, solve
from qpdelay.smalldivisor import check_melnikov, choose_epsilon1, find_singular_sites
from qpdelay.verification import convergence_order, dde_residual
from qpdelay.excision import estimate_bad_measure, sample_frequencies


def _report(num, ok, detail, elapsed, budget):
    line = (f"[criterion {num:02d}] {'PASS' if ok else 'FAIL'}"
            f" ({elapsed:.2f}s / budget {budget:.0f}s): {detail}")
    print(line)
    assert ok, line
    assert elapsed <= budget, f"criterion {num} exceeded runtime budget: {line}"


def test_criterion_01_multiscale_matches_dense_oracle():
    t0 = time.perf_counter()
    prob = light_problem()
    ds = diagonalize(prob)
    worst = 0.0
    n_planted = 0
    for i in range(50):
        rng = np.random.default_rng(1000 + i)
        N = int(rng.choice([16, 24, 32]))
        omega = np.array([rng.uniform(1.0, 2.0)])
        y = random_vector(rng, radius=2, amp=float(rng.uniform(0.02, 0.08)))
        op = assemble_linearization(y, ds, omega, N=N)
        eps1 = choose_epsilon1(omega, ds.lambdas, 0.05, 4, 1)
        if i % 2 == 0:
            sigma = float(rng.uniform(-0.5, 0.5))
        else:  # plant a resonance inside the box
            k0 = int(rng.integers(-(N - 6), N - 5))
            mu = int(rng.choice([-1, 1]))
            delta = float(rng.uniform(1e-4, 1e-3))
            sigma = float(-mu * (k0 * omega[0] + mu * 1.0) + delta)
            n_planted += 1
        params = InversionParams(epsilon1=eps1, method="multiscale")
        li, info = invert_box(op, sigma, N, params)
        dense = dense_inverse(op, lattice_sites(1, KBox.centered(N, 1)), sigma)
        rel = np.linalg.norm(li.matrix - dense.matrix) / np.linalg.norm(dense.matrix)
        worst = max(worst, rel)
        assert len(li.sites) <= 132
    elapsed = time.perf_counter() - t0
    _report(1, worst <= 1e-8,
            f"50 instances ({n_planted} planted), worst relative error {worst:.2e}"
            f" <= 1e-8", elapsed, 10.0)


def test_criterion_02_resolvent_identity_random_matrices():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst_ratio = 0.0
    for _ in range(100):
        s = int(rng.integers(8, 33))
        T = rng.normal(size=(s, s)) + 1j * rng.normal(size=(s, s))
        cut = int(rng.integers(1, s))
        perm = rng.permutation(s)
        i1 = sorted(perm[:cut].tolist())
        i2 = sorted(perm[cut:].tolist())
        M1 = np.linalg.inv(T[np.ix_(i1, i1)])
        M2 = np.linalg.inv(T[np.ix_(i2, i2)])
        r = resolvent_residual(T, (M1, M2), np.linalg.inv(T), i1, i2)
        worst_ratio = max(worst_ratio, r / np.linalg.cond(T))
    elapsed = time.perf_counter() - t0
    _report(2, worst_ratio <= 1e-10,
            f"100 random splits, worst residual/cond {worst_ratio:.2e} <= 1e-10",
            elapsed, 2.0)


def test_criterion_03_translation_identity_d1_d2():
    from qpdelay.model import ProblemSpec
    from conftest import ROT
    t0 = time.perf_counter()
    worst = 0.0
    for d in (1, 2):
        k1 = (1,) + (0,) * (d - 1)
        mk1 = tuple(-x for x in k1)
        prob = ProblemSpec(
            n=1, d=d, A=ROT,
            f_coeffs={((3,), (0,)): np.array([1.0, 0.0]),
                      ((2,), (0,)): np.array([0.0, 2.0])},
            g_coeffs={k1: np.array([1.0, 0.5]), mk1: np.array([1.0, 0.5])},
            tau=1.0, epsilon=1e-3, freq_box=[(1.0, 2.0)] * d)
        ds = diagonalize(prob)
        for trial in range(20):
            rng = np.random.default_rng(3000 + 100 * d + trial)
            omega = rng.uniform(1.0, 2.0, size=d)
            y = random_vector(rng, d=d, radius=2, amp=0.05)
            op = assemble_linearization(y, ds, omega, N=8)
            sigma = float(rng.uniform(-1.0, 1.0))
            lam_box = KBox.centered(2, d)
            q = tuple(int(x) for x in rng.integers(-6, 7, size=d))
            r = check_translation(op, q, lam_box, sigma=sigma)
            worst = max(worst, r)
    elapsed = time.perf_counter() - t0
    _report(3, worst <= 1e-12,
            f"20 random (q, sigma, omega) at N=8 for d=1 and d=2, worst "
            f"entrywise residual {worst:.2e} <= 1e-12", elapsed, 2.0)


def test_criterion_04_linearization_first_order():
    t0 = time.perf_counter()
    from qpdelay.lattice import evaluate_W
    prob = light_problem()
    ds = diagonalize(prob)
    hs = (1e-4, 1e-5, 1e-6)
    ok = True
    worst_ratio = 0.0
    for trial in range(20):
        rng = np.random.default_rng(4000 + trial)
        y = random_vector(rng, radius=3, amp=0.3)
        v = random_vector(rng, radius=3, amp=1.0)
        op = assemble_linearization(y, ds, np.array([1.37]))
        w0 = evaluate_W(y, ds.f_diag, 1, 1)
        errs = []
        for h in hs:
            w1 = evaluate_W(y + v.scale(h), ds.f_diag, 1, 1)
            fd = (w1 - w0).scale(1.0 / h)
            sv = op.apply(v)
            for m, c in v.entries.items():
                sv.set(m, sv.get(m) - op.dsigma(m) * c)
            sv = sv.scale(1.0 / ds.epsilon)
            errs.append((fd - sv).norm2())
        C = 2.0 * errs[0] / hs[0]
        ok = ok and all(e <= C * h for e, h in zip(errs, hs))
        # observed first order: error drops by ~10x per decade of h
        ratio = errs[1] / errs[0]
        worst_ratio = max(worst_ratio, abs(ratio - 0.1))
        ok = ok and 0.05 <= ratio <= 0.3
    elapsed = time.perf_counter() - t0
    _report(4, ok,
            f"20 (y, v) pairs, cubic f: ||FD - Sv|| <= C h with first-order "
            f"ratios (worst |ratio-0.1| = {worst_ratio:.3f})", elapsed, 2.0)


def test_criterion_05_singleton_property():
    t0 = time.perf_counter()
    from qpdelay.lattice import LatticeOperator
    lam = np.array([1.0])
    found_one = 0
    checked = 0
    seed = 0
    ok = True
    while checked < 100:
        seed += 1
        rng = np.random.default_rng(5000 + seed)
        omega = float(rng.uniform(1.0, 2.0))
        if not check_melnikov([omega], lam, 0.05, 400).passed:
            continue
        checked += 1
        eps1 = choose_epsilon1([omega], lam, 0.05, 4, 1)
        op = LatticeOperator(1, 1, lam, np.array([omega]), 1.0, 1e-3, None, 32)
        if checked % 2 == 0:
            k0 = int(rng.integers(-28, 29))
            mu = int(rng.choice([-1, 1]))
            depth = float(rng.uniform(0.0, 0.9)) * eps1
            sigma = -(k0 * omega + mu * 1.0) * mu * mu + mu * depth
            sigma = float(-(k0 * omega + mu * 1.0) + mu * depth)
        else:
            sigma = float(rng.uniform(-2.0, 2.0))
        sites = find_singular_sites(op, eps1, KBox.centered(32, 1), sigma)
        found_one += 1 if len(sites) == 1 else 0
        # at most one site per base-cluster window (diameter 12 N0)
        for a, b in itertools.combinations(sites, 2):
            if abs(a.k[0] - b.k[0]) <= 12 * 4:
                ok = False
    elapsed = time.perf_counter() - t0
    _report(5, ok,
            f"100 Melnikov-passing frequencies: every base window holds <= 1 "
            f"singular site ({found_one} scans found exactly one)",
            elapsed, 5.0)


def test_criterion_06_manufactured_solution_recovery():
    t0 = time.perf_counter()
    cfg = SolverConfig()
    omegas = sample_frequencies([[1.0, 2.0]], 40, seed=606)
    accepted = 0
    recovered = 0
    for i, om in enumerate(omegas):
        rng = np.random.default_rng(6000 + i)
        prob, y_star = manufactured_problem(rng, om)
        res = solve(prob, om, cfg)
        if res.ok:
            accepted += 1
            if (res.y - y_star).norm2() <= 1e-9:
                recovered += 1
    elapsed = time.perf_counter() - t0
    frac = recovered / max(accepted, 1)
    _report(6, accepted >= 30 and frac >= 0.95,
            f"{recovered}/{accepted} accepted frequencies recover the planted "
            f"solution to 1e-9 (fraction {frac:.3f} >= 0.95)", elapsed, 60.0)


def test_criterion_07_canonical_contraction_and_residual():
    t0 = time.perf_counter()
    prob = canonical_problem()
    cfg = SolverConfig()
    res = solve(prob, [1.37], cfg)
    order = res.report.convergence_order
    rep = dde_residual(res.y, [1.37], prob)
    ok = (res.ok and order is not None and order >= 1.5
          and rep.sup_residual <= 1e-9 + rep.quadrature_tail)
    elapsed = time.perf_counter() - t0
    _report(7, ok,
            f"canonical desk instance: order {order:.2f} >= 1.5, dde residual "
            f"{rep.sup_residual:.2e} <= 1e-9 + floor {rep.quadrature_tail:.2e}",
            elapsed, 30.0)


def test_criterion_08_excision_scaling_in_gamma():
    t0 = time.perf_counter()
    lam = np.array([1.0])

    def screen(gamma):
        def s(om):
            rep = check_melnikov(om, lam, gamma, 20)
            return rep.passed, None if rep.passed else "melnikov"
        return s

    gamma = 0.02
    r1 = estimate_bad_measure([[1.0, 2.0]], screen(gamma), 2000, seed=808)
    r2 = estimate_bad_measure([[1.0, 2.0]], screen(2 * gamma), 2000, seed=808)
    n1, n2 = len(r1.rejected), len(r2.rejected)
    sigma = np.sqrt(n2 + 4.0 * n1 + 1.0)
    ok = n1 > 0 and abs(n2 - 2 * n1) <= 3.0 * sigma
    elapsed = time.perf_counter() - t0
    _report(8, ok,
            f"2000 samples: rejected {n1} at gamma={gamma}, {n2} at 2*gamma "
            f"(|n2 - 2 n1| = {abs(n2 - 2 * n1)} <= 3 sigma = {3 * sigma:.1f})",
            elapsed, 10.0)


GOLDEN_SWEEP_FRACTION = 0.945  # frozen from the seeded desk sweep


def test_criterion_09_sweep_acceptance_fraction():
    t0 = time.perf_counter()
    prob = light_problem()
    cfg = SolverConfig()
    omegas = sample_frequencies(prob.freq_box, 200, seed=909)
    dspec = diagonalize(prob)
    statuses = {}
    accepted = 0
    for om in omegas:
        res = solve(prob, om, cfg, dspec=dspec)
        statuses[res.status] = statuses.get(res.status, 0) + 1
        accepted += 1 if res.ok else 0
    frac = accepted / 200.0
    ok = frac >= 0.9 and abs(frac - GOLDEN_SWEEP_FRACTION) <= 0.05
    elapsed = time.perf_counter() - t0
    _report(9, ok,
            f"200 seeded frequencies: acceptance fraction {frac:.3f} >= 0.9, "
            f"within +-0.05 of golden {GOLDEN_SWEEP_FRACTION} ({statuses})",
            elapsed, 300.0)


def test_criterion_10_constant_chain_validation():
    t0 = time.perf_counter()
    ok = True
    positives = [(SolverConfig.proof_fidelity(d), d) for d in (1, 2)]
    for (c, C2, C3, C5, C6) in [(1e-3, 4e3, 100.0, 10.0, 5.0),
                                (5e-4, 8e3, 50.0, 12.0, 4.0),
                                (2e-3, 2e3, 200.0, 10.0, 6.0),
                                (1e-3, 4e3, 100.0, 20.0, 8.0)]:
        for d in (1, 2):
            positives.append((SolverConfig(M=100, c=c, C1=1e4 * d * 2, C2=C2,
                                           C3=C3, C5=C5, C6=C6,
                                           mode="proof_fidelity"), d))
    assert len(positives) == 10
    for cfg, d in positives:
        ok = ok and not cfg.validate(d)

    base = dict(M=100, c=1e-3, C2=4e3, C3=100.0, C5=10.0, C6=5.0, C1=1e4,
                mode="proof_fidelity")
    negatives = [
        dict(base, c=1e-4),              # chain 0: c <= 2/C2
        dict(base, C2=1e3),              # chain 0 the other way
        dict(base, C6=15.0),             # chain 1: C6 >= (1-c) C5
        dict(base, C6=0.5),              # chain 1: C6 <= 1
        dict(base, C1=120.0),            # chain 2: RHS 112/120 > 1 - 12/C3
        dict(base, C3=13.0),             # chain 3 (24 C1/C3 blows up)
        dict(base, M=100, c=0.5),        # M^c far from 1
        dict(base, M=1),                 # M < 2
        dict(base, eta=1.5),             # eta outside (0, 1)
        dict(base, C5=0.9),              # chain 1: (1-c) C5 < 1 < C6
    ]
    assert len(negatives) == 10
    for kw in negatives:
        cfg = SolverConfig(**kw)
        if not cfg.validate(1):
            ok = False
        try:
            cfg.check(1)
            ok = False  # proof mode must reject
        except ConfigError:
            pass
    elapsed = time.perf_counter() - t0
    _report(10, ok,
            "10 valid constant sets accepted, 10 violating sets rejected in "
            "proof_fidelity mode", elapsed, 1.0)
