"""Nonresonance checks, singular sites, and singular-cluster geometry.

A site m = (mu, j, k) is singular when the diagonal |D^sigma(m)| drops
below epsilon_1: the diagonal no longer dominates there and the Neumann
series is unavailable.  The Melnikov condition

    |<k, omega> +- lambda_j +- lambda_j'| >= gamma / |k|^{10d},  0 < |k| <= K,

keeps singular sites isolated: within a window whose diameter the scan
covers, at most one site can be singular.  Around that singleton the
box decomposes into nested intervals Lambda_0 c ... c Lambda_{r-1}, each
located by scanning which local inverses fail a norm/decay property at
the corresponding scale.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import ClusterTooWide
from .lattice import KBox, lattice_sites

MEL_EXPONENT = 10  # per frequency dimension: gamma / |k|^(10 d)


@dataclass
class MelnikovReport:
    gamma: float
    K: int
    violations: list
    passed: bool
    min_margin: float  # min over scanned combos of |value| * |k|^{10d} / gamma

    def to_rows(self):
        rows = []
        for (k, mu, j, mup, jp, value) in self.violations:
            rows.append((k, mu, j, mup, jp, value))
        return rows


def check_melnikov(omega, lambdas, gamma, K):
    """Exhaustive scan of the nonresonance condition up to radius K."""
    if K < 1:
        raise ValueError("K must be >= 1")
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    omega = np.asarray(omega, dtype=float)
    lambdas = np.asarray(lambdas, dtype=float)
    d = omega.shape[0]
    n = lambdas.shape[0]
    ks = np.array([k for k in itertools.product(range(-K, K + 1), repeat=d)
                   if any(k)], dtype=int)
    kw = ks @ omega
    knorm = np.max(np.abs(ks), axis=1).astype(float)
    bound = gamma / knorm ** (MEL_EXPONENT * d)
    violations = []
    min_margin = np.inf
    for mu in (1, -1):
        for j in range(1, n + 1):
            for mup in (1, -1):
                for jp in range(1, n + 1):
                    vals = kw + mu * lambdas[j - 1] + mup * lambdas[jp - 1]
                    av = np.abs(vals)
                    if gamma > 0:
                        min_margin = min(min_margin, float(np.min(av / bound)))
                        bad = np.nonzero(av < bound)[0]
                    else:
                        bad = np.nonzero(av == 0.0)[0]
                    for i in bad:
                        violations.append((tuple(int(x) for x in ks[i]),
                                           mu, j, mup, jp, float(vals[i])))
    violations.sort()
    return MelnikovReport(gamma=float(gamma), K=int(K), violations=violations,
                          passed=not violations,
                          min_margin=float(min_margin) if np.isfinite(min_margin) else np.inf)


def pair_gap(omega, lambdas, K):
    """Smallest |<k, omega> +- lambda_j +- lambda_j'| over 0 < |k| <= K.

    Two singular sites k, k' at distance <= K would force this quantity
    below twice the singular threshold, so half of it is a safe epsilon_1.
    """
    omega = np.asarray(omega, dtype=float)
    lambdas = np.asarray(lambdas, dtype=float)
    d = omega.shape[0]
    ks = np.array([k for k in itertools.product(range(-K, K + 1), repeat=d)
                   if any(k)], dtype=int)
    kw = ks @ omega
    best = np.inf
    for mu in (1, -1):
        for lj in lambdas:
            for mup in (1, -1):
                for ljp in lambdas:
                    best = min(best, float(np.min(np.abs(kw + mu * lj + mup * ljp))))
    return best


def choose_epsilon1(omega, lambdas, gamma, N0, d, safety=0.45):
    """Desk-scale singular threshold with the singleton property built in.

    Caps: a hundredth of the smallest spectral scale (1, lambda_min and the
    smallest spectral gap), and `safety` times the measured pair gap at
    radius 12*N0 (the widest a base cluster can grow).  Any two sites
    within that radius would contradict the pair gap, so scans below this
    threshold find at most one site per cluster.
    """
    lambdas = np.asarray(lambdas, dtype=float)
    scales = [1.0, float(np.min(lambdas))]
    if lambdas.shape[0] > 1:
        scales.append(float(np.min(np.diff(np.sort(lambdas)))))
    cap_spec = 0.01 * min(scales)
    gap = pair_gap(omega, lambdas, 12 * N0)
    return min(cap_spec, safety * gap)


def find_singular_sites(op, epsilon1, kbox, sigma=0.0):
    """All sites in the box with |D^sigma(m)| < epsilon_1, lex order."""
    if epsilon1 <= 0:
        raise ValueError("epsilon1 must be positive")
    sites = lattice_sites(op.n, kbox)
    vals = np.abs(op.diagonal_values(sites, sigma))
    return [sites[i] for i in np.nonzero(vals < epsilon1)[0]]


def rho_scale(N, N0, C3, log_ratio=None):
    """Decay-loss factor of one scale: (log N / log N0)^(-1/log10 C3).

    Equals 10^-s on the exact schedule N_s = N0^(C3^s).  For scales too
    large to materialize, pass log_ratio = log N / log N0 directly.
    """
    if log_ratio is None:
        if N <= N0:
            return 1.0
        log_ratio = np.log(float(N)) / np.log(float(N0))
    if log_ratio <= 1.0:
        return 1.0
    return float(log_ratio ** (-1.0 / np.log10(float(C3))))


def default_schedule(N0, C3, N):
    """Strictly increasing scales N0, ~N0^C3, ... below the box radius."""
    scales = []
    s = int(N0)
    while s < N:
        scales.append(s)
        nxt = int(round(s ** C3))
        if nxt <= s:
            break
        s = nxt
    return scales


@dataclass
class ClusterDecomposition:
    """Nested singular intervals with shells and the singleton.

    lambdas_nested[0] is the base cluster; shells[s] lists the sites between
    consecutive clusters (s = 0 the base minus the singleton, the last shell
    everything outside the top cluster).  A trivial decomposition (no
    failures, no singular site) has an empty chain and one shell.
    """

    box: KBox
    scales: list
    lambdas_nested: list
    omega2: object          # LatticeIndex or None
    shells: dict = field(repr=False)
    rho: list = field(default_factory=list)

    def check_invariants(self, n):
        for a, b in zip(self.lambdas_nested, self.lambdas_nested[1:]):
            assert b.contains_box(a), "nesting violated"
        for s, (scale, lam) in enumerate(zip(self.scales, self.lambdas_nested)):
            if s >= 1:
                prev = self.lambdas_nested[s - 1]
                grown = prev.enlarge(2 * scale, clip=self.box)
                assert lam.contains_box(grown), "enlargement violated"
                assert lam.diam() <= 12 * scale, "cluster wider than 12 N_s"
        all_sites = set(lattice_sites(n, self.box))
        covered = set()
        for sites in self.shells.values():
            assert not (covered & set(sites)), "shells overlap"
            covered |= set(sites)
        if self.omega2 is not None:
            assert self.omega2 not in covered
            covered.add(self.omega2)
        assert covered == all_sites, "shells + singleton must partition the box"
        return True


def _scan_failing_hull(fails, region, box, scale, hint=None):
    """Hull of the centers in `region` failing the predicate at `scale`.

    Coarse stride scale/2 first (the failing set is an interval at least one
    site wide around a resonance), then the hull boundary is refined by
    stepping outward one center at a time.
    """
    d = box.d
    stride = max(1, scale // 2)
    axes = []
    for lo, hi in zip(region.lo, region.hi):
        pts = list(range(lo, hi + 1, stride))
        if pts[-1] != hi:
            pts.append(hi)
        axes.append(pts)
    centers = [k for k in itertools.product(*axes)]
    if hint is not None and region.contains(hint):
        centers.append(tuple(hint))
    failing = [k for k in centers if fails(k)]
    if not failing:
        return None
    hull = KBox(tuple(min(k[i] for k in failing) for i in range(d)),
                tuple(max(k[i] for k in failing) for i in range(d)))
    # refine outward along each axis until the predicate passes again
    changed = True
    while changed:
        changed = False
        if hull.diam() > 8 * scale:
            raise ClusterTooWide(
                f"failing centers span {hull.diam()} > 8*{scale} at scale {scale}",
                witness=f"hull {hull}")
        mid = tuple((l + h) // 2 for l, h in zip(hull.lo, hull.hi))
        for i in range(d):
            for side in (-1, +1):
                edge = hull.lo[i] - 1 if side < 0 else hull.hi[i] + 1
                if edge < box.lo[i] or edge > box.hi[i]:
                    continue
                probe = tuple(edge if t == i else mid[t] for t in range(d))
                if fails(probe):
                    lo = tuple(min(l, p) for l, p in zip(hull.lo, probe))
                    hi = tuple(max(h, p) for h, p in zip(hull.hi, probe))
                    hull = KBox(lo, hi)
                    changed = True
    return hull


def build_clusters(op, schedule, fail_predicate, epsilon1, N=None, sigma=0.0, C3=None):
    """Nested singular clusters of T^sigma on the box [-N, N]^d.

    fail_predicate(k0, scale) decides whether the local inverse centered at
    k0 with halfwidth `scale` fails the norm/decay property; it is injected
    so tests can plant failures deterministically.  Raises ClusterTooWide
    when failing centers at one scale spread wider than a single resonance
    allows, or when two singular sites coexist in the box: both signal a
    frequency that must be excised.
    """
    if N is None:
        N = op.N
    d = op.d
    box = KBox.centered(N, d)
    scales = [s for s in schedule if s < N]
    if not scales:
        raise ValueError("schedule has no scale below the box radius")
    if any(b <= a for a, b in zip(scales, scales[1:])):
        raise ValueError("schedule must be strictly increasing")

    global_sites = find_singular_sites(op, epsilon1, box, sigma)
    if len(global_sites) > 1:
        raise ClusterTooWide(
            f"{len(global_sites)} singular sites in one box",
            witness=f"sites {global_sites[:4]}")
    hint = global_sites[0].k if global_sites else None

    chain = []          # outermost first while scanning
    used_scales = []
    region = box
    for scale in reversed(scales):
        hull = _scan_failing_hull(lambda k0: fail_predicate(k0, scale),
                                  region, box, scale, hint=hint)
        if hull is None:
            break
        chain.append(hull)
        used_scales.append(scale)
        region = hull
    chain.reverse()
    used_scales.reverse()

    omega2 = None
    if chain:
        inner_sites = [m for m in global_sites if chain[0].contains(m.k)]
        omega2 = inner_sites[0] if inner_sites else (global_sites[0] if global_sites else None)
    elif global_sites:
        omega2 = global_sites[0]
        chain = [KBox.around(omega2.k, scales[0], clip=box)]
        used_scales = [scales[0]]

    if omega2 is not None and chain:
        base = KBox.around(omega2.k, scales[0], clip=box)
        chain[0] = chain[0].hull(base)

    # enlargement pass, bottom up
    for s in range(1, len(chain)):
        grown = chain[s - 1].enlarge(2 * used_scales[s], clip=box)
        chain[s] = chain[s].hull(grown)
        if chain[s].diam() > 12 * used_scales[s]:
            raise ClusterTooWide(
                f"cluster at scale {used_scales[s]} has diameter {chain[s].diam()}"
                f" > 12*{used_scales[s]}")

    shells = {}
    prev = None
    for s, lam in enumerate(chain):
        sites = [m for m in lattice_sites(op.n, lam)
                 if (prev is None or not prev.contains(m.k)) and m != omega2]
        shells[s] = sites
        prev = lam
    outer = [m for m in lattice_sites(op.n, box)
             if (prev is None or not prev.contains(m.k)) and m != omega2]
    shells[len(chain)] = outer

    N0 = scales[0]
    if C3 is None:
        C3 = (np.log(scales[1]) / np.log(scales[0])) if len(scales) > 1 else 10.0
    rho = [rho_scale(s, N0, C3) for s in used_scales]

    return ClusterDecomposition(box=box, scales=used_scales, lambdas_nested=chain,
                                omega2=omega2, shells=shells, rho=rho)
