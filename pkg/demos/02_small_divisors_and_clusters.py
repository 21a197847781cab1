"""Small divisors: nonresonance scans, singular sites, nested clusters.

The diagonal mu<k,w> + mu sigma + lambda_j can come arbitrarily close to
zero; the Melnikov condition keeps such sites isolated.  This script scans
a frequency for violations, plants a near-resonance through the recentering
parameter sigma, and shows the nested interval chain the cluster scan
builds around the singleton.
"""

import numpy as np

from qpdelay.inverse import InversionParams, sepa_fail_predicate
from qpdelay.lattice import KBox, LatticeOperator
from qpdelay.smalldivisor import (build_clusters, check_melnikov,
                                  choose_epsilon1, find_singular_sites)

lam = np.array([1.0])
omega = 1.37

rep = check_melnikov([omega], lam, gamma=0.05, K=400)
print(f"omega = {omega}: Melnikov passed = {rep.passed}, "
      f"min margin {rep.min_margin:.1f}x the bound")

rep_bad = check_melnikov([2.0 - 1e-9], lam, gamma=0.05, K=10)
print(f"omega = 2 - 1e-9: violations = {rep_bad.violations[:2]}")

eps1 = choose_epsilon1([omega], lam, 0.05, 4, 1)
print(f"singular threshold epsilon_1 = {eps1:.4f} "
      "(spectral cap vs measured pair gap)")

op = LatticeOperator(1, 1, lam, np.array([omega]), 1.0, 1e-3, None, 32)
box = KBox.centered(32, 1)

print("\nno plant: ", find_singular_sites(op, eps1, box, sigma=0.0))

# plant |D| = 1e-11 at k = 9 by shifting sigma
k0, delta = 9, 1e-11
sigma = float(1.0 - k0 * omega - delta)
sites = find_singular_sites(op, eps1, box, sigma)
print(f"planted sigma = {sigma:.6f}: singular sites = {sites}")

params = InversionParams(epsilon1=eps1)
dec = build_clusters(op, [4, 16], sepa_fail_predicate(op, sigma, params, box),
                     eps1, N=32, sigma=sigma, C3=2.0)
print("nested clusters (innermost first):")
for scale, lam_box, rho in zip(dec.scales, dec.lambdas_nested, dec.rho):
    print(f"  scale {scale:3d}: {lam_box}  rho = {rho:.3f}")
print("singleton:", dec.omega2)
print("shell sizes:", {s: len(v) for s, v in dec.shells.items()})
dec.check_invariants(1)
print("nesting / enlargement / partition invariants hold")
