import numpy as np
import pytest

from conftest import light_problem, operator_at, random_vector, rotation_problem
from qpdelay.errors import ClusterTooWide
from qpdelay.inverse import InversionParams, sepa_fail_predicate
from qpdelay.lattice import KBox, LatticeOperator, lattice_sites
from qpdelay.model import diagonalize
from qpdelay.smalldivisor import (build_clusters, check_melnikov, choose_epsilon1,
                                  default_schedule, find_singular_sites, pair_gap,
                                  rho_scale)


def _diag_op(omega=1.37, lam=1.0, epsilon=1e-3, N=40, tau=1.0):
    return LatticeOperator(1, 1, [lam], np.array([omega]), tau, epsilon, None, N)


# -- Melnikov ----------------------------------------------------------

def test_melnikov_brute_force_small_case():
    # d=1, omega=10, lambda=(1): 12 combinations over k in {+-1,+-2,+-3};
    # brute-force minimum of |10k +- 1 +- 1| is 8 at k=1
    vals = []
    for k in (-3, -2, -1, 1, 2, 3):
        for s1 in (1, -1):
            for s2 in (1, -1):
                vals.append(abs(10 * k + s1 + s2))
    assert min(vals) == 8
    rep = check_melnikov([10.0], [1.0], 0.1, 3)
    assert rep.passed and rep.violations == []
    assert rep.min_margin == pytest.approx(8 / 0.1)


def test_melnikov_exact_resonance_flagged():
    # <k0, omega> = 2 lambda_1 at k0 = 4, omega = 0.5
    rep = check_melnikov([0.5], [1.0], 0.01, 6)
    assert not rep.passed
    assert any(k == (4,) and abs(v) < 1e-12 for (k, mu, j, mup, jp, v) in rep.violations)


def test_melnikov_gamma_zero_passes():
    rep = check_melnikov([0.5 + 1e-13], [1.0], 0.0, 6)
    assert rep.passed


# -- singular sites ----------------------------------------------------

def test_singular_site_planted_at_origin():
    op = _diag_op(epsilon=0.0)
    sigma = -1.0 + 1e-9  # sigma + lambda_1 = 1e-9 at (+1, 1, 0)
    sites = find_singular_sites(op, 1e-3, KBox.centered(5, 1), sigma)
    assert sites == [(1, 1, (0,))]


def test_singular_sites_empty_when_floor_holds():
    op = _diag_op(omega=1.37)
    # modulus floor 0.37 at sigma = 0
    assert find_singular_sites(op, 0.1, KBox.centered(10, 1), 0.0) == []


def test_singleton_with_desk_epsilon1(rng):
    # the chosen desk epsilon1 forces <= 1 singular site per base window
    lam = np.array([1.0])
    for _ in range(25):
        omega = float(rng.uniform(1.0, 2.0))
        if not check_melnikov([omega], lam, 0.05, 100).passed:
            continue
        eps1 = choose_epsilon1([omega], lam, 0.05, 4, 1)
        op = _diag_op(omega=omega)
        k0 = int(rng.integers(-30, 31))
        mu = int(rng.choice([-1, 1]))
        sigma = -(k0 * omega + mu * 1.0) + float(rng.uniform(0, 0.8)) * eps1 * mu
        sites = find_singular_sites(op, eps1, KBox.centered(40, 1), sigma)
        seps = [abs(a.k[0] - b.k[0]) for i, a in enumerate(sites)
                for b in sites[i + 1:]]
        assert all(s > 12 * 4 for s in seps), (omega, sigma, sites)


def test_epsilon1_consistent_with_pair_gap():
    omega, lam = [1.37], np.array([1.0])
    eps1 = choose_epsilon1(omega, lam, 0.05, 4, 1)
    assert eps1 <= 0.45 * pair_gap(omega, lam, 48)
    assert eps1 <= 0.01


# -- schedules and rho --------------------------------------------------

def test_default_schedule_growth():
    assert default_schedule(4, 2.0, 32) == [4, 16]
    assert default_schedule(4, 2.0, 300) == [4, 16, 256]


def test_rho_matches_power_law():
    # on the exact schedule N_s = N0^(C3^s), rho_s = 10^-s; large scales go
    # through the log-ratio form (the proof schedule overflows floats at s=2)
    for C3 in (2.0, 100.0):
        for s in range(4):
            got = rho_scale(None, None, C3, log_ratio=C3 ** s)
            assert 0.5 * 10.0 ** -s <= got <= 2.0 * 10.0 ** -s
    assert rho_scale(16, 4, 2.0) == pytest.approx(0.1)


# -- clusters ----------------------------------------------------------

def _params(eps1):
    return InversionParams(epsilon1=eps1)


def test_clusters_trivial_when_diagonal_dominates():
    op = _diag_op(omega=1.37, epsilon=0.0, N=32)
    params = _params(0.05)
    dec = build_clusters(op, [4, 16], sepa_fail_predicate(op, 0.0, params,
                                                          KBox.centered(32, 1)),
                         0.05, N=32, C3=2.0)
    assert dec.lambdas_nested == []
    assert dec.omega2 is None
    assert dec.check_invariants(1)
    assert sum(len(v) for v in dec.shells.values()) == 2 * 65


def test_clusters_planted_resonance():
    # plant |D| = 1e-11 at k=9: the local inverse fails the norm bound at
    # both scales (Phi(4) = 6.6e4, Phi(16) = 4.3e9), giving a genuine
    # two-level nested chain around the singleton
    omega = np.array([1.37])
    op = _diag_op(omega=1.37, epsilon=0.0, N=32)
    eps1 = choose_epsilon1(omega, [1.0], 0.05, 4, 1)
    k0, delta = 9, 1e-11
    sigma = float(1.0 - k0 * omega[0] - delta)  # site (-1, 1, 9)
    params = _params(eps1)
    fails = sepa_fail_predicate(op, sigma, params, KBox.centered(32, 1))
    dec = build_clusters(op, [4, 16], fails, eps1, N=32, sigma=sigma, C3=2.0)
    assert dec.omega2 == (-1, 1, (9,))
    assert len(dec.lambdas_nested) == 2
    assert dec.lambdas_nested[0].contains((9,))
    assert dec.check_invariants(1)
    # cross-check the failing map against dense local inversion
    assert fails((9,), 4)
    assert not fails((-20,), 4)
    assert dec.rho == pytest.approx([1.0, 0.1])


def test_two_plants_reject(rng):
    # two singular sites far apart cannot fit one nested chain
    op = _diag_op(omega=1.0, N=64, epsilon=0.0)
    # sigma = -1: sites at <k,1> = 0 and +-2 for both blocks: k=0 (mu=+1)
    # and k=2/-2; separations far beyond one base cluster
    sites = find_singular_sites(op, 1e-3, KBox.centered(64, 1), -1.0)
    assert len(sites) >= 2
    with pytest.raises(ClusterTooWide):
        build_clusters(op, [4, 16], lambda k0, s: False, 1e-3, N=64, sigma=-1.0)
