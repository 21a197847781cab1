"""Independent end-to-end checks in the time domain.

The reconstructed trajectory is differentiated analytically (termwise
i<k, omega> factors) and the delayed argument is evaluated by the same
Fourier sum, so the reported defect of

    x'(t) - A x(t) - eps f(x(t - tau)) - eps g(omega t)

contains no interpolation or finite-difference error: what remains is the
truncation floor of the lattice solution plus the solver residual.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import TooShortHistory
from .lattice import evaluate_F, sup_norm
from .model import evaluate_blocks


@dataclass
class ResidualReport:
    grid: np.ndarray
    sup_residual: float
    per_component: np.ndarray
    quadrature_tail: float

    def to_lines(self):
        lines = [f"sup_residual {self.sup_residual!r}",
                 f"quadrature_tail {self.quadrature_tail!r}",
                 "per_component " + " ".join(repr(float(x)) for x in self.per_component),
                 f"grid_points {len(self.grid)}"]
        return lines


def default_grid(lambda1, n_regular=512, n_random=64, periods=3.0, seed=0):
    """Regular grid over several base periods plus seeded jitter points,
    so the sampling cannot alias against the solver's own modes."""
    t_end = periods * 2.0 * np.pi / lambda1
    rng = np.random.default_rng(seed)
    t = np.concatenate([np.linspace(0.0, t_end, n_regular),
                        rng.uniform(0.0, t_end, n_random)])
    return np.unique(t)


def dde_residual(y, omega, problem, grid=None, dspec=None):
    """Sup-norm defect of the reconstructed solution in the original
    equation, with an a-priori ceiling from the lattice residual tail."""
    from .model import diagonalize
    if dspec is None:
        dspec = diagonalize(problem)
    if grid is None:
        grid = default_grid(dspec.lambdas[0])
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("grid must be nonempty")
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    n = problem.n

    z = evaluate_blocks(y, omega, grid, n)
    zd = np.zeros_like(z)
    zdel = np.zeros_like(z)
    for m, c in y.entries.items():
        kw = float(np.dot(m.k, omega))
        col = (m.j - 1) if m.mu == -1 else (n + m.j - 1)
        ph = c * np.exp(1j * kw * grid)
        zd[:, col] += 1j * kw * ph
        zdel[:, col] += ph * np.exp(-1j * kw * problem.tau)

    V = dspec.V
    x = z @ V.T
    xd = zd @ V.T
    xdel = zdel @ V.T

    fvals = np.zeros_like(x)
    for (a, b), vec in problem.f_coeffs.items():
        mono = np.ones(grid.shape[0], dtype=complex)
        for i, p in enumerate(a):
            if p:
                mono = mono * xdel[:, i] ** p
        for i, p in enumerate(b):
            if p:
                mono = mono * xdel[:, n + i] ** p
        fvals += mono[:, None] * vec[None, :]

    gvals = np.zeros_like(x)
    for k, vec in problem.g_coeffs.items():
        gvals += np.exp(1j * float(np.dot(k, omega)) * grid)[:, None] * vec[None, :]

    r = xd - x @ problem.A.T - problem.epsilon * (fvals + gvals)
    per_component = np.max(np.abs(r), axis=0)

    # ceiling implied by the lattice residual beyond the solution's support
    F = evaluate_F(y, omega, dspec, support_cap=None)
    radius = y.support_radius()
    tail = sum(abs(c) for m, c in F.entries.items() if sup_norm(m.k) > radius)
    vnorm = float(np.linalg.norm(np.asarray(V), 2))
    return ResidualReport(grid=grid, sup_residual=float(np.max(per_component)),
                          per_component=per_component,
                          quadrature_tail=float(vnorm * tail))


def conjugate_symmetry_defect(y):
    """max |y(+1, j, k) - conj(y(-1, j, -k))|; zero for real solutions."""
    worst = 0.0
    seen = set()
    for m, c in y.entries.items():
        mu, j, k = m
        partner = (-mu, j, tuple(-x for x in k))
        key = (min(m, partner), max(m, partner))
        if key in seen:
            continue
        seen.add(key)
        cp = y.get(partner)
        worst = max(worst, abs(c - np.conj(cp)))
    return float(worst)


def omega_sensitivity_probe(y, omega, dspec, h=1e-6):
    """Finite-difference probe of the residual's frequency sensitivity.

    Central differences of F[y] along each frequency axis; a bounded result
    is the numerical stand-in for derivative tracking, which the solver does
    not propagate symbolically.  Returns the vector of directional
    sensitivities ||dF/d omega_i||_2.
    """
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    out = []
    for i in range(omega.shape[0]):
        e = np.zeros_like(omega)
        e[i] = h
        fp = evaluate_F(y, omega + e, dspec, support_cap=None)
        fm = evaluate_F(y, omega - e, dspec, support_cap=None)
        out.append((fp - fm).norm2() / (2.0 * h))
    return np.array(out)


def convergence_order(history, floor=0.0):
    """Least-squares slope of log r_{j+1} against log r_j.

    Uses the longest strictly decreasing positive prefix, dropping pairs
    whose target already sits at the floor (within a factor 10); needs at
    least 4 usable entries.
    """
    hist = [float(r) for r in history]
    if any(r <= 0 for r in hist[:4]):
        raise TooShortHistory("history must be strictly positive")
    prefix = [hist[0]]
    for r in hist[1:]:
        if r <= 0 or r >= prefix[-1]:
            break
        prefix.append(r)
    if len(prefix) < 4:
        raise TooShortHistory(
            f"need >= 4 strictly positive decreasing entries, have {len(prefix)}")
    xs, ys = [], []
    for a, b in zip(prefix, prefix[1:]):
        if floor > 0 and b <= 10.0 * floor:
            continue
        xs.append(np.log(a))
        ys.append(np.log(b))
    if len(xs) < 2:
        # everything but the last hop is at the floor; use the raw pairs
        xs = [np.log(a) for a in prefix[:-1]]
        ys = [np.log(b) for b in prefix[1:]]
    slope = np.polyfit(xs, ys, 1)[0]
    return float(slope)
