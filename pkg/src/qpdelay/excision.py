"""Parameter excision: fitted first-order constraints and measure accounting.

Near the singular singleton the Schur scalar h is, up to a slowly varying
unit factor, linear in the recentered variable sigma1:
h ~ mu* (sigma1 + a0(omega)) (1 + o(1)).  We sample h on a window, fit the
linear model by least squares, keep the real part of a0, and excise every
frequency for which some reachable sigma1 = <k + k*, omega> + mu* lambda_j*
lands within the threshold Phi(N)^(-1/2) of the root.  The measure removed
per stage is estimated by deterministic low-discrepancy sampling of the
frequency box and compared against the stage budget eta / (50 * 4^(j-1)).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from .errors import FitIllConditioned, PreconditionViolated
from .inverse import local_inverse_at_center, sepa_property
from .lattice import KBox, lattice_sites, sup_norm


@dataclass
class PolynomialConstraint:
    """p(sigma1) = sigma1 + a0, excised when |p| <= threshold."""

    a0: float
    center_site: object
    scale: int
    threshold: float
    fit_residual: float
    a0_complex: complex = 0.0
    mu_star: int = 0

    def p(self, sigma1):
        return sigma1 + self.a0

    def violated(self, sigma1):
        return abs(self.p(sigma1)) <= self.threshold


def fit_polynomial(h_samples, center_site=None, scale=0, threshold=0.0):
    """Least-squares linear fit of sampled h(sigma1); the constraint root.

    h_samples is a list of (sigma1, h) pairs covering a window around 0.
    The model c1*sigma1 + c0 factors as c1*(sigma1 + a0) with a0 = c0/c1;
    the constraint keeps the real part.  fit_residual is the worst sample
    deviation in sigma1 units (|h - model| / |c1|).
    """
    if len(h_samples) < 5:
        raise PreconditionViolated("need at least 5 samples of h")
    s = np.array([x for x, _ in h_samples], dtype=float)
    h = np.array([v for _, v in h_samples], dtype=complex)
    span = float(s.max() - s.min())
    if span <= 0:
        raise FitIllConditioned("degenerate sampling window")
    A = np.column_stack([s, np.ones_like(s)]).astype(complex)
    coef, *_ = np.linalg.lstsq(A, h, rcond=None)
    c1, c0 = coef
    hscale = float(np.max(np.abs(h)))
    if abs(c1) * span < 1e-12 * max(hscale, 1e-300):
        raise FitIllConditioned(
            f"h nearly constant over the window (|c1| span = {abs(c1) * span:.3e})")
    a0c = c0 / c1
    resid = float(np.max(np.abs(h - A @ coef))) / abs(c1)
    mu_star = center_site.mu if center_site is not None else 0
    return PolynomialConstraint(a0=float(a0c.real), center_site=center_site,
                                scale=int(scale), threshold=float(threshold),
                                fit_residual=resid, a0_complex=complex(a0c),
                                mu_star=mu_star)


def sample_h(op, m_star, sigma_center, window, npoints, N_local, params):
    """Schur scalar h on a sigma1 window, from dense local inverses.

    Sweeps sigma over [center - window, center + window]; sigma1 values are
    reported relative to the recentering sigma1 = sigma + <k*, omega> +
    mu* lambda_j*.
    """
    from .inverse import _sigma1_of
    box = KBox.around(m_star.k, N_local)
    sites = lattice_sites(op.n, box)
    star = sites.index(m_star)
    rest = [i for i in range(len(sites)) if i != star]
    out = []
    for t in np.linspace(-window, window, npoints):
        sig = sigma_center + t
        T = op.dense(sites, sig, check_range=False)
        M1 = np.linalg.inv(T[np.ix_(rest, rest)])
        h = complex(T[star, star] - T[star, rest] @ M1 @ T[rest, star])
        out.append((_sigma1_of(op, m_star, sig), h))
    return out


def fit_constraint_at_site(op, m_star, params, N, h0=0.0, epsilon=1e-3,
                           npoints=7, N_local=4):
    """Two-pass constraint fit at a singular site.

    A coarse window locates the root of h; a narrow window centered there
    keeps the curvature bias of the linear model below a tenth of the
    excision threshold (the window obeys tau * w^2 << threshold).
    """
    threshold = params.phi_threshold(N)
    coarse_w = max(20.0 * epsilon, 4.0 * abs(h0), 1e-6)
    coarse = fit_polynomial(
        sample_h(op, m_star, 0.0, coarse_w, max(5, npoints), N_local, params),
        center_site=m_star, scale=N, threshold=threshold)
    sigma1_origin = float(np.dot(m_star.k, op.omega)
                          + m_star.mu * op.lambdas[m_star.j - 1])
    sigma_root = -coarse.a0 - sigma1_origin
    fine_w = min(max(np.sqrt(threshold / max(op.tau, 1.0)) / 2.0, 1e-7), coarse_w)
    samples = sample_h(op, m_star, sigma_root, fine_w, npoints, N_local, params)
    return fit_polynomial(samples, center_site=m_star, scale=N,
                          threshold=threshold)


def sigma1_scan_values(omega, m_star, lambdas, N):
    """All reachable sigma1 = <k + k*, omega> + mu* lambda_j*, |k| <= N."""
    omega = np.asarray(omega, dtype=float)
    d = omega.shape[0]
    lam = lambdas[m_star.j - 1]
    vals = []
    for k in itertools.product(range(-N, N + 1), repeat=d):
        kk = tuple(a + b for a, b in zip(k, m_star.k))
        vals.append((k, float(np.dot(kk, omega) + m_star.mu * lam)))
    return vals


def apply_excision(constraints, omega, sigma1_values):
    """Accept/reject a frequency against fitted constraints.

    sigma1_values may be plain floats or (k, sigma1) pairs; rejection
    reports the violating (k, center site, p value) as the witness.
    """
    for c in constraints:
        for item in sigma1_values:
            k, s1 = item if isinstance(item, tuple) else (None, item)
            if c.violated(s1):
                witness = {"k": k, "m_star": c.center_site, "sigma1": s1,
                           "p": c.p(s1), "threshold": c.threshold,
                           "omega": tuple(float(x) for x in np.atleast_1d(omega))}
                return False, witness
    return True, None


def check_separation(op, sigma1, sigma2, k, N_prime, params):
    """At most one of the two shifted local inverses may fail the property.

    Requires sigma1 - sigma2 = <k, omega> to 1e-12 and 4N' < |k| < N'^C3;
    both restrictions are inverted densely and tested against the norm and
    decay property at scale N'.
    """
    k = tuple(int(x) for x in k)
    gap = abs((sigma1 - sigma2) - float(np.dot(k, op.omega)))
    if gap > 1e-12:
        raise PreconditionViolated(
            f"sigma1 - sigma2 != <k, omega> (defect {gap:.3e})")
    kn = sup_norm(k)
    if not (4 * N_prime < kn < N_prime ** params.C3):
        raise PreconditionViolated(
            f"|k| = {kn} outside the annulus (4N', N'^C3) = "
            f"({4 * N_prime}, {N_prime ** params.C3:.6g})")
    fails = 0
    for sig in (sigma1, sigma2):
        try:
            li = local_inverse_at_center(op, (0,) * op.d, N_prime, sigma=sig,
                                         c=params.c)
            ok = sepa_property(li, N_prime, params)
        except np.linalg.LinAlgError:
            ok = False
        fails += 0 if ok else 1
    return fails <= 1


@dataclass
class ExcisionRecord:
    """Accepted/rejected frequency samples at one stage, with the budget."""

    stage: int
    accepted: list
    rejected: list            # (omega tuple, reason string)
    bad_fraction: float
    budget: float
    n_samples: int
    seed: int

    @classmethod
    def build(cls, stage, accepted, rejected, eta, seed):
        n = len(accepted) + len(rejected)
        frac = len(rejected) / n if n else 0.0
        budget = eta / (50.0 * 4.0 ** max(stage - 1, 0))
        return cls(stage=int(stage), accepted=sorted(accepted),
                   rejected=sorted(rejected), bad_fraction=float(frac),
                   budget=float(budget), n_samples=int(n), seed=int(seed))

    def within_budget(self):
        return self.bad_fraction <= self.budget

    def to_lines(self):
        lines = [f"# excision stage {self.stage} seed {self.seed}",
                 f"n_samples {self.n_samples}",
                 f"bad_fraction {self.bad_fraction!r}",
                 f"budget {self.budget!r}",
                 f"status {'pass' if self.within_budget() else 'warn'}"]
        for om in self.accepted:
            lines.append("accept " + " ".join(repr(float(x)) for x in om))
        for om, reason in self.rejected:
            lines.append("reject " + " ".join(repr(float(x)) for x in om)
                         + " | " + reason)
        return lines


def sample_frequencies(freq_box, n_samples, seed):
    """Deterministic low-discrepancy samples of the frequency box.

    Draws the next power-of-two Sobol block and keeps the first n_samples,
    which preserves balance and keeps the stream a pure function of seed.
    """
    freq_box = np.asarray(freq_box, dtype=float).reshape(-1, 2)
    d = freq_box.shape[0]
    eng = qmc.Sobol(d=d, scramble=True, seed=int(seed))
    m = max(1, int(np.ceil(np.log2(max(n_samples, 2)))))
    u = eng.random_base2(m)[:n_samples]
    return freq_box[:, 0] + u * (freq_box[:, 1] - freq_box[:, 0])


def estimate_bad_measure(freq_box, constraint_generator, n_samples, seed,
                         stage=1, eta=0.1):
    """Seeded sweep of the frequency box through a screen.

    constraint_generator(omega) returns (ok, reason) where reason names the
    violated screen for rejected samples.  Identical (seed, inputs) give an
    identical record; samples are sorted before serialization so
    aggregation order cannot leak in.
    """
    if n_samples < 100:
        raise PreconditionViolated("need at least 100 samples")
    omegas = sample_frequencies(freq_box, n_samples, seed)
    accepted, rejected = [], []
    for om in omegas:
        ok, reason = constraint_generator(om)
        key = tuple(float(x) for x in om)
        if ok:
            accepted.append(key)
        else:
            rejected.append((key, str(reason)))
    return ExcisionRecord.build(stage, accepted, rejected, eta, seed)


def run_staged_excision(freq_box, stage_screens, n_samples, seed, eta=0.1):
    """Accumulating screens: a sample rejected at stage j stays rejected.

    stage_screens is a list of (stage index, screen callable); returns one
    ExcisionRecord per stage, with the accepted sets shrinking monotonically.
    """
    omegas = sample_frequencies(freq_box, n_samples, seed)
    alive = {tuple(float(x) for x in om): om for om in omegas}
    records = []
    for stage, screen in stage_screens:
        newly_dead = {}
        for key in sorted(alive):
            ok, reason = screen(alive[key])
            if not ok:
                newly_dead[key] = f"stage {stage}: {reason}"
        for key in newly_dead:
            alive.pop(key, None)
        rej = [(k, r) for k, r in sorted(newly_dead.items())]
        records.append(ExcisionRecord.build(stage, sorted(alive), rej, eta, seed))
    return records
