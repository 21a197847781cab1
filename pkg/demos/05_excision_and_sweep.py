"""Frequency excision and the measure of the admissible set.

Estimates how much of the frequency box each screen removes: the
nonresonance scan scales linearly in gamma, the staged constraints remove
geometrically less at each stage, and the surviving fraction is the
empirical counterpart of the admissible-measure bound 1 - C* eta.
"""

import numpy as np

from qpdelay.excision import estimate_bad_measure, run_staged_excision, sample_frequencies
from qpdelay.model import ProblemSpec
from qpdelay.newton import SolverConfig, solve
from qpdelay.smalldivisor import check_melnikov

lam = np.array([1.0])

# --- linear-in-gamma scaling of the nonresonance screen ------------------
def melnikov_screen(gamma):
    def s(om):
        rep = check_melnikov(om, lam, gamma, 20)
        return rep.passed, None if rep.passed else "melnikov"
    return s

print("gamma scaling of the excised fraction (2000 samples, K = 20):")
for gamma in (0.01, 0.02, 0.04, 0.08):
    rec = estimate_bad_measure([[1.0, 2.0]], melnikov_screen(gamma), 2000, seed=1)
    print(f"  gamma = {gamma:5.3f}: fraction {rec.bad_fraction:.4f}")

# --- staged budgets -------------------------------------------------------
screens = [(1, melnikov_screen(0.05)),
           (2, melnikov_screen(0.05)),   # nothing new: already screened
           (3, melnikov_screen(0.05))]
print("\nstaged records (budget eta / (50 * 4^(j-1)), eta = 0.1):")
for rec in run_staged_excision([[1.0, 2.0]], screens, 512, seed=2, eta=0.1):
    print(f"  stage {rec.stage}: newly rejected {len(rec.rejected):3d}, "
          f"fraction {rec.bad_fraction:.4f}, budget {rec.budget:.5f}, "
          f"{'pass' if rec.within_budget() else 'warn'}")

# --- acceptance sweep ------------------------------------------------------
A = np.array([[0.0, -1.0], [1.0, 0.0]])
problem = ProblemSpec(
    n=1, d=1, A=A,
    f_coeffs={((3,), (0,)): np.array([1.0, 0.0]),
              ((2,), (0,)): np.array([0.0, 2.0]),
              ((1,), (1,)): np.array([1.0, 0.0])},
    g_coeffs={(1,): np.array([1.0, 0.5]), (-1,): np.array([1.0, 0.5])},
    tau=1.0, epsilon=1e-3, freq_box=[[1.0, 2.0]])
cfg = SolverConfig()
omegas = sample_frequencies(problem.freq_box, 60, seed=3)
statuses = {}
for om in omegas:
    res = solve(problem, om, cfg)
    statuses[res.status] = statuses.get(res.status, 0) + 1
accepted = statuses.get("converged", 0) + statuses.get("floor", 0)
print(f"\nsweep over 60 frequencies: {statuses}")
print(f"acceptance fraction {accepted / 60:.3f} "
      f"(admissible-measure target >= 1 - eta = {1 - cfg.eta})")
