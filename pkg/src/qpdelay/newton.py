"""Newton iteration with scale-dependent truncation.

Stage j holds an approximate solution supported in [-M^j, M^j]^d; the
correction solves T_N Delta = -Gamma F[y] on the next box N = M^(j+1),
with the right-hand side truncated at min(10 M^j, N).  The new residual
splits exactly into four terms (truncation tail, solver cancellation,
out-of-box action, Taylor remainder), which the step reports verbatim.
The iteration stops at the residual tolerance, at the truncation floor
(tail term dominates), on divergence, or when the frequency is excised by
the inversion layer.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import (ConfigError, DivergenceDetected, ExcisionTrigger,
                     InversionFailed, PerturbationTooLarge)
from .excision import (apply_excision, fit_constraint_at_site,
                       sigma1_scan_values)
from .inverse import InversionParams, _certified, invert_box
from .lattice import FourierVector, assemble_linearization, evaluate_F, sup_norm
from .model import diagonalize
from .smalldivisor import check_melnikov, choose_epsilon1

PAPER_CONSTANTS = dict(M=100, c=1e-3, C2=4e3, C3=100.0, C5=10.0, C6=5.0)


@dataclass
class SolverConfig:
    """Iteration constants and thresholds.

    desk mode deliberately breaks the constant chain (small M, large c) so
    that boxes stay computable; proof_fidelity retains the chain, for
    structural checks that never execute large scales.
    """

    M: int = 2
    c: float = 0.5
    C1: float = 8.0
    C2: float = 8.0
    C3: float = 2.0
    C4: float = 10.0
    C5: float = 3.0
    C6: float = 2.0
    gamma: float = 0.05
    eta: float = 0.1
    epsilon1: float = None          # None: derived per instance
    N0: int = 4
    j_max: int = 12
    tol_residual: float = 1e-11
    mode: str = "desk"              # desk | proof_fidelity
    kappa_j0: float = 1.0
    j0_cap: int = 4
    dense_cap: int = 4096
    support_cap: int = 8192
    mc_tol: float = 0.05
    melnikov_radius: int = None     # None: 100 * N0
    inversion_method: str = "auto"
    h_window_points: int = 7
    monitor_s3: bool = True
    s3_max_sites: int = 1200        # skip the refresh monitor above this size
    site_budget: int = 2100         # largest stage box, in lattice points

    @classmethod
    def desk(cls, **kw):
        return cls(**kw)

    @classmethod
    def proof_fidelity(cls, d, **kw):
        base = dict(PAPER_CONSTANTS, C1=1e4 * d, mode="proof_fidelity",
                    N0=100, j_max=10 ** 6)
        base.update(kw)
        return cls(**base)

    def validate(self, d):
        """Constraint-chain violations as strings (empty when consistent)."""
        v = []
        if self.M < 2 or int(self.M) != self.M:
            v.append(f"M must be an integer >= 2 (got {self.M})")
        if not (0 < self.c < 1):
            v.append(f"c must lie in (0, 1) (got {self.c})")
        for name in ("C1", "C2", "C3", "C4", "C5", "C6"):
            if getattr(self, name) <= 0:
                v.append(f"{name} must be positive")
        if not (0 < self.eta < 1):
            v.append(f"eta must lie in (0, 1) (got {self.eta})")
        if self.mode not in ("desk", "proof_fidelity"):
            v.append(f"unknown mode {self.mode!r}")
        if abs(self.M ** self.c - 1.0) > self.mc_tol:
            v.append(f"M^c = {self.M ** self.c:.4f} not within {self.mc_tol} of 1")
        if not self.c > 2.0 / self.C2:
            v.append(f"chain 0 violated: c = {self.c} <= 2/C2 = {2.0 / self.C2}")
        if not ((1 - self.c) * self.C5 > self.C6 > 1):
            v.append(f"chain 1 violated: need (1-c)C5 > C6 > 1, got "
                     f"{(1 - self.c) * self.C5:.4g} vs {self.C6}")
        if not (1 - 12.0 / self.C3 > (2 * (d + 4) * self.C5 + 2 * (d + 5)) / self.C1):
            v.append("chain 2 violated: 1 - 12/C3 <= (2(d+4)C5 + 2(d+5))/C1")
        if not (self.C1 - 2 * d * self.C3 - 24.0 * self.C1 / self.C3 > 15):
            v.append("chain 3 violated: C1 - 2dC3 - 24 C1/C3 <= 15")
        return v

    def check(self, d):
        """Raise in proof_fidelity mode; return warnings in desk mode."""
        v = self.validate(d)
        if v and self.mode == "proof_fidelity":
            raise ConfigError("; ".join(v))
        return v

    def inversion_params(self, epsilon1):
        return InversionParams(epsilon1=epsilon1, C1=self.C1, c=self.c,
                               C2=self.C2, C3=self.C3, C5=self.C5, N0=self.N0,
                               dense_cap=self.dense_cap,
                               method=self.inversion_method)

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def init_stage(epsilon, config, clamp=False):
    """Smallest j0 with (M^j0)^c >= kappa * log(1/epsilon).

    With clamp=True (desk driver), capped at config.j0_cap with a warning
    recorded by the caller.
    """
    if not (0 < epsilon < 1):
        raise ValueError("epsilon must lie in (0, 1)")
    target = config.kappa_j0 * np.log(1.0 / epsilon)
    if target <= 1.0:
        j0 = 0
    else:
        # solve (M^j)^c >= target in logs (M^j overflows at proof constants)
        j0 = int(np.ceil(np.log(target) / (config.c * np.log(config.M)) - 1e-12))
        j0 = max(j0, 0)
    if clamp and j0 > config.j0_cap:
        return config.j0_cap
    return j0


@dataclass
class NewtonState:
    j: int
    y: FourierVector
    omega: np.ndarray
    residual_norm: float
    residual_history: list
    support_bound: int
    accepted: bool = False
    F: FourierVector = field(repr=False, default=None)
    op: object = field(repr=False, default=None)   # linearization at y


@dataclass
class StepReport:
    j: int
    N: int
    rhs_radius: int
    delta_norm: float
    decay_margin: float
    split: tuple                  # (tail, cancel, offbox, taylor)
    split_defect: float           # || F[y+] - sum of the four terms ||
    residual_before: float
    residual_after: float
    inverse_info: dict
    constraints: list = field(default_factory=list)
    s3_refresh: dict = None
    wall_time: float = 0.0


def _vec_of(y, sites):
    return np.array([y.get(m) for m in sites], dtype=complex)


def _fv_of(vec, sites, d, tol=1e-250):
    out = FourierVector(d)
    for m, c in zip(sites, vec):
        if abs(c) > tol:
            out.set(m, c)
    return out


def error_split(state_before, delta, state_after, config, dspec, op, inv,
                rhs_radius):
    """Four-term split of the new residual; exact as a vector identity.

    F[y+] = (1 - G)F[y] + (G F[y] + T_N Delta) + (T - T_N) Delta + R, where
    G truncates at the right-hand-side radius and R is the Taylor remainder
    R = F[y + Delta] - F[y] - T Delta evaluated directly.
    """
    Fy = state_before.F
    Fy_new = state_after.F
    rhs = Fy.truncate(rhs_radius)
    tail = Fy - rhs
    sites = inv.sites
    dvec = _vec_of(delta, sites)
    tn_delta = _fv_of(inv.t_dense @ dvec, sites, dspec.d, tol=0.0)
    cancel = rhs + tn_delta
    t_delta_full = op.apply(delta)
    offbox = t_delta_full - tn_delta
    taylor = Fy_new - Fy - t_delta_full
    defect = (Fy_new - (tail + cancel + offbox + taylor)).norm2()
    return (tail.norm2(), cancel.norm2(), offbox.norm2(), taylor.norm2()), defect


def refresh_inverse(old_inv, t_new, sigma=None):
    """Neumann update of a certified inverse after the operator moved.

    t_new is the new operator (dense over the same sites, or a lattice
    operator to restrict).  Requires ||dT|| * ||old|| < 1/2.
    """
    if hasattr(t_new, "dense"):
        sigma = old_inv.sigma if sigma is None else sigma
        T_new = t_new.dense(old_inv.sites, sigma, check_range=False)
    else:
        T_new = np.asarray(t_new, dtype=complex)
        sigma = old_inv.sigma if sigma is None else sigma
    dT = T_new - old_inv.t_dense
    M_old = old_inv.matrix
    from .inverse import _opnorm_est
    contraction = float(_opnorm_est(dT, exact_below=0)
                        * _opnorm_est(M_old, exact_below=0))
    if contraction >= 0.5:
        # the cheap bound is conservative; settle borderline cases exactly
        contraction = float(np.linalg.norm(dT, 2) * np.linalg.norm(M_old, 2))
    if contraction >= 0.5:
        raise PerturbationTooLarge(
            f"||dT|| * ||T_old^-1|| = {contraction:.3f} >= 1/2; recompute")
    M = M_old.copy()
    term = M_old.copy()
    base = -M_old @ dT
    for _ in range(200):
        term = base @ term
        M += term
        if float(np.max(np.abs(term))) < 1e-15 * max(float(np.max(np.abs(M))), 1.0):
            break
    c = old_inv.decay_profile[1] if old_inv.decay_profile else 0.5
    return _certified(old_inv.sites, M, T_new, sigma, "refreshed", c=c)


def _cluster_summary(dec):
    if dec is None or not dec.lambdas_nested:
        return None
    return [(s, b.lo, b.hi) for s, b in zip(dec.scales, dec.lambdas_nested)]


def _fit_stage_constraints(op, info, state, dspec, config, params, N):
    """Fit the first-order constraint at the singular site and apply the
    exclusion rule over all reachable sigma1 at this scale.

    Two passes: a coarse window locates the root of h, then a narrow
    window centered there keeps the curvature bias of the linear fit below
    a tenth of the excision threshold.
    """
    m_star = info["m_star"]
    if m_star is None:
        return []
    constraint = fit_constraint_at_site(
        op, m_star, params, N, h0=abs(info.get("h") or 0.0),
        epsilon=dspec.epsilon, npoints=config.h_window_points,
        N_local=config.N0)
    scan = sigma1_scan_values(state.omega, m_star, dspec.lambdas, N)
    ok, witness = apply_excision([constraint], state.omega, scan)
    if not ok:
        from .errors import PolynomialExcision
        raise PolynomialExcision(
            f"|p(sigma1)| = {abs(witness['p']):.3e} <= {constraint.threshold:.3e} "
            f"at k = {witness['k']}", witness=witness)
    return [constraint]


def newton_step(state, dspec, config, epsilon1):
    """One truncated Newton step; returns (new state, report).

    Raises InversionFailed when the inversion layer triggers excision and
    DivergenceDetected when the residual grew two stages running.
    """
    t0 = time.perf_counter()
    j = state.j
    N = config.M ** (j + 1)
    nsites = 2 * dspec.n * (2 * N + 1) ** dspec.d
    if nsites > config.site_budget:
        raise ConfigError(
            f"stage {j} needs {nsites} lattice points (> budget "
            f"{config.site_budget}); desk mode exists for a reason")
    rhs_radius = min(10 * config.M ** j, N)

    op = state.op
    if op is None:
        op = assemble_linearization(state.y, dspec, state.omega, N=N,
                                    support_cap=config.support_cap)
    else:
        op = op.with_radius(N)
    params = config.inversion_params(epsilon1)
    try:
        inv, info = invert_box(op, 0.0, N, params)
        constraints = _fit_stage_constraints(op, info, state, dspec, config,
                                             params, N)
    except ExcisionTrigger as exc:
        raise InversionFailed(f"stage {j}: {exc}", trigger=exc) from exc

    Fy = state.F if state.F is not None else evaluate_F(
        state.y, state.omega, dspec, support_cap=config.support_cap)
    rhs = Fy.truncate(rhs_radius)
    bvec = _vec_of(rhs, inv.sites)
    dvec = -(inv.matrix @ bvec)
    delta = _fv_of(dvec, inv.sites, dspec.d)

    y_new = (state.y + delta).truncate(config.M ** (j + 1))
    F_new = evaluate_F(y_new, state.omega, dspec, support_cap=config.support_cap)
    r_new = F_new.norm2()

    # per-mode decay check of the correction
    bound_scale = np.exp(-0.1 * (config.M ** j) ** config.c)
    margin = 0.0
    for m, cval in delta.entries.items():
        b = np.exp(-float(sup_norm(m.k)) ** config.c) * bound_scale
        margin = max(margin, abs(cval) / b)

    state_new = NewtonState(j=j + 1, y=y_new, omega=state.omega,
                            residual_norm=r_new,
                            residual_history=state.residual_history + [r_new],
                            support_bound=config.M ** (j + 1),
                            F=F_new)
    split, defect = error_split(
        NewtonState(j=j, y=state.y, omega=state.omega,
                    residual_norm=state.residual_norm,
                    residual_history=state.residual_history,
                    support_bound=state.support_bound, F=Fy),
        delta, state_new, config, dspec, op, inv, rhs_radius)

    s3 = None
    op_new = assemble_linearization(y_new, dspec, state.omega, N=N,
                                    support_cap=config.support_cap)
    if config.monitor_s3 and len(inv.sites) <= config.s3_max_sites:
        try:
            refreshed = refresh_inverse(inv, op_new)
            s3 = {"norm": refreshed.norm_bound, "phi": params.phi(N),
                  "ok": refreshed.norm_bound <= params.phi(N),
                  "residual": refreshed.residual}
        except PerturbationTooLarge as exc:
            s3 = {"ok": False, "reason": str(exc)}
    state_new.op = op_new

    hist = state_new.residual_history
    if len(hist) >= 3 and hist[-1] > hist[-2] > hist[-3]:
        raise DivergenceDetected(
            f"residual grew two stages running: {hist[-3]:.3e} -> "
            f"{hist[-2]:.3e} -> {hist[-1]:.3e}")

    report = StepReport(j=j, N=N, rhs_radius=rhs_radius,
                        delta_norm=delta.norm2(), decay_margin=margin,
                        split=split, split_defect=defect,
                        residual_before=state.residual_norm,
                        residual_after=r_new,
                        inverse_info=dict(
                            {k: info[k] for k in
                             ("method", "norm", "phi_bound", "residual",
                              "m_star", "h", "patches")},
                            clusters=_cluster_summary(info.get("clusters"))),
                        constraints=constraints, s3_refresh=s3,
                        wall_time=time.perf_counter() - t0)
    return state_new, report


@dataclass
class RunReport:
    omega: tuple
    status: str                    # converged | floor | excised | diverged |
                                   # config_infeasible | max_stages
    j0: int
    residual_history: list
    steps: list
    config: dict
    warnings: list = field(default_factory=list)
    excision_events: list = field(default_factory=list)
    melnikov: dict = None
    epsilon1: float = None
    convergence_order: float = None
    timings: dict = field(default_factory=dict)
    diagnostics: str = ""

    @property
    def ok(self):
        return self.status in ("converged", "floor")

    def residual_rows(self):
        """Rows (stage, N, residual, delta, tail, cancel, offbox, taylor)."""
        rows = []
        for s in self.steps:
            rows.append((s.j, s.N, s.residual_after, s.delta_norm) + s.split)
        return rows

    def to_text(self):
        lines = [f"status: {self.status}",
                 f"omega: {' '.join(repr(float(x)) for x in self.omega)}",
                 f"j0: {self.j0}",
                 f"epsilon1: {self.epsilon1!r}",
                 "residual history: " + " ".join(f"{r:.6e}" for r in self.residual_history)]
        if self.convergence_order is not None:
            lines.append(f"convergence order: {self.convergence_order:.3f}")
        for w in self.warnings:
            lines.append(f"warning: {w}")
        for e in self.excision_events:
            lines.append(f"excision: {e}")
        for s in self.steps:
            ii = s.inverse_info
            lines.append(
                f"stage {s.j}: N={s.N} rhs_radius={s.rhs_radius} "
                f"|delta|={s.delta_norm:.6e} residual={s.residual_after:.6e} "
                f"split=({s.split[0]:.3e},{s.split[1]:.3e},{s.split[2]:.3e},"
                f"{s.split[3]:.3e}) defect={s.split_defect:.3e} "
                f"inverse[{ii['method']}] norm={ii['norm']:.4e} "
                f"h={ii['h']!r} s3={'-' if s.s3_refresh is None else s.s3_refresh.get('ok')}")
            if ii.get("clusters"):
                lines.append(f"  clusters: {ii['clusters']}")
        if self.diagnostics:
            lines.append(f"diagnostics: {self.diagnostics}")
        return "\n".join(lines) + "\n"


@dataclass
class SolveResult:
    status: str
    y: FourierVector
    report: RunReport

    @property
    def ok(self):
        return self.report.ok


def solve(problem, omega, config, dspec=None):
    """Run the full construction at one frequency.

    Returns a SolveResult whose status is one of converged, floor (tail-
    limited), excised, diverged, config_infeasible, or max_stages; the
    report carries stages, residuals, certificates and excision events.
    """
    titan = time.perf_counter()
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    try:
        warnings = list(config.check(problem.d))
    except ConfigError as exc:
        rep = RunReport(omega=tuple(omega), status="config_infeasible", j0=-1,
                        residual_history=[], steps=[], config=config.to_dict(),
                        diagnostics=str(exc))
        return SolveResult("config_infeasible", FourierVector(problem.d), rep)

    if dspec is None:
        dspec = diagonalize(problem)

    kmel = config.melnikov_radius or 100 * config.N0
    mel = check_melnikov(omega, dspec.lambdas, config.gamma, kmel)
    mel_summary = {"passed": mel.passed, "gamma": mel.gamma, "K": mel.K,
                   "n_violations": len(mel.violations),
                   "violations": mel.violations[:8],
                   "min_margin": mel.min_margin}
    if not mel.passed:
        rep = RunReport(omega=tuple(omega), status="excised", j0=-1,
                        residual_history=[], steps=[], config=config.to_dict(),
                        warnings=warnings, melnikov=mel_summary,
                        excision_events=[f"melnikov: {len(mel.violations)} "
                                         f"violations, first {mel.violations[0]}"])
        return SolveResult("excised", FourierVector(problem.d), rep)

    eps1 = config.epsilon1
    if eps1 is None:
        eps1 = choose_epsilon1(omega, dspec.lambdas, config.gamma, config.N0,
                               problem.d)
    j0_raw = init_stage(dspec.epsilon, config)
    j0 = init_stage(dspec.epsilon, config, clamp=(config.mode == "desk"))
    if j0 != j0_raw:
        warnings.append(f"j0 clamped from {j0_raw} to {j0} (desk mode)")

    y0 = FourierVector(problem.d)
    F0 = evaluate_F(y0, omega, dspec, support_cap=config.support_cap)
    state = NewtonState(j=j0, y=y0, omega=omega, residual_norm=F0.norm2(),
                        residual_history=[F0.norm2()], support_bound=config.M ** j0,
                        F=F0)
    steps = []
    status = "max_stages"
    events = []
    diagnostics = ""
    while state.j < config.j_max:
        next_sites = 2 * dspec.n * (2 * config.M ** (state.j + 1) + 1) ** dspec.d
        if next_sites > config.site_budget:
            if not steps:
                status = "config_infeasible"
                diagnostics = (f"first stage needs {next_sites} lattice points "
                               f"(> budget {config.site_budget}); desk mode "
                               f"exists for a reason")
            else:
                status = "max_stages"
                diagnostics = (f"stage {state.j} needs {next_sites} lattice "
                               f"points (> budget {config.site_budget}); "
                               f"stopping at the last completed stage")
            break
        try:
            state, rep = newton_step(state, dspec, config, eps1)
        except InversionFailed as exc:
            status = "excised"
            events.append(str(exc))
            diagnostics = f"frequency excised at stage {state.j}: {exc}"
            break
        except DivergenceDetected as exc:
            status = "diverged"
            diagnostics = str(exc)
            break
        except ConfigError as exc:
            status = "config_infeasible"
            diagnostics = str(exc)
            break
        steps.append(rep)
        if rep.residual_after <= config.tol_residual:
            status = "converged"
            state.accepted = True
            break
        tail = rep.split[0]
        if tail > 0.5 * rep.residual_after and len(steps) >= 2 and \
                rep.residual_after > 0.5 * rep.residual_before:
            status = "floor"
            state.accepted = True
            diagnostics = (f"converged to truncation floor: tail "
                           f"{tail:.3e} dominates residual {rep.residual_after:.3e}")
            break

    order = None
    hist = state.residual_history
    try:
        from .verification import convergence_order
        order = convergence_order(hist, floor=config.tol_residual)
    except Exception:
        order = None

    rep = RunReport(omega=tuple(omega), status=status, j0=j0,
                    residual_history=hist, steps=steps,
                    config=config.to_dict(), warnings=warnings,
                    excision_events=events, melnikov=mel_summary,
                    epsilon1=eps1, convergence_order=order,
                    timings={"total": time.perf_counter() - titan},
                    diagnostics=diagnostics)
    return SolveResult(status, state.y, rep)
