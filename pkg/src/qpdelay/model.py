"""Problem definition, spectral hypotheses, and eigencoordinates.

The delayed perturbation equation is

    x'(t) = A x(t) + eps * f(x(t - tau)) + eps * g(omega t),   x in R^{2n},

with A having n simple purely imaginary eigenvalue pairs +-i*lambda_j.
Writing x = V z with V = [v_1 .. v_n, conj(v_1) .. conj(v_n)] turns the
linear part diagonal; the lower block of z obeys a Schrodinger-like delay
equation with diagonal matrix diag(lambda_1..lambda_n), and the upper block
is its conjugate counterpart.  The transformed nonlinearity and forcing are
obtained mechanically by substituting x = V z and re-expanding; they are
polynomials/Fourier data with genuinely complex coefficients (the reality
condition does not survive the change of variables; it reappears as the
conjugate symmetry between the two blocks).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (EigenvalueRealPart, NonSimpleSpectrum, RealityViolation,
                     SingularEigenbasis)
from .lattice import FourierVector, _var_index
from .polynomial import Poly


@dataclass
class ProblemSpec:
    """One delayed perturbation instance in original (real) coordinates.

    f_coeffs maps exponent pairs (alpha, beta) in N^n x N^n (the first and
    last n phase variables) to coefficient vectors in C^{2n}; g_coeffs maps
    frequency indices k in Z^d to coefficient vectors in C^{2n}.
    """

    n: int
    d: int
    A: np.ndarray
    f_coeffs: dict
    g_coeffs: dict
    tau: float
    epsilon: float
    freq_box: np.ndarray
    h2_tol_factor: float = 1e-9

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.freq_box = np.asarray(self.freq_box, dtype=float).reshape(self.d, 2)
        self.f_coeffs = {
            (tuple(int(x) for x in a), tuple(int(x) for x in b)):
                np.asarray(v, dtype=complex).reshape(2 * self.n)
            for (a, b), v in self.f_coeffs.items()}
        self.g_coeffs = {
            tuple(int(x) for x in k): np.asarray(v, dtype=complex).reshape(2 * self.n)
            for k, v in self.g_coeffs.items()}

    def validate(self):
        if self.n < 1 or self.d < 1:
            raise ValueError("n and d must be positive")
        if self.A.shape != (2 * self.n, 2 * self.n):
            raise ValueError(f"A must be {2 * self.n}x{2 * self.n}")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if np.any(self.freq_box[:, 1] <= self.freq_box[:, 0]):
            raise ValueError("freq_box must have positive volume")
        for (a, b) in self.f_coeffs:
            if len(a) != self.n or len(b) != self.n:
                raise ValueError("f exponents must be n-tuples")
            if sum(a) + sum(b) < 1:
                raise ValueError("f must have no constant term")
        for k in self.g_coeffs:
            if len(k) != self.d:
                raise ValueError("g frequency indices must be d-tuples")
        self.check_g_reality()
        spectral_data(self.A, self.h2_tol())  # raises on hypothesis failure
        return self

    def h2_tol(self):
        return self.h2_tol_factor * max(np.linalg.norm(self.A), 1e-300)

    def check_g_reality(self, tol=1e-12):
        scale = max((np.max(np.abs(v)) for v in self.g_coeffs.values()), default=1.0)
        for k, v in self.g_coeffs.items():
            mk = tuple(-x for x in k)
            w = self.g_coeffs.get(mk)
            defect = np.max(np.abs(v - (np.conj(w) if w is not None else 0.0)))
            if defect > tol * max(scale, 1.0):
                raise ValueError(
                    f"forcing violates reality: g({k}) != conj(g({mk})), defect {defect:.3e}")

    def g_support_radius(self):
        return max((max(abs(x) for x in k) if k else 0 for k in self.g_coeffs), default=0)


@dataclass
class DiagonalizedSpec:
    """Problem data rewritten in eigencoordinates.

    f_diag maps blocks (mu, j) to polynomials in the 2n block variables;
    g_diag is the forcing as a lattice vector (no delay phase applied).
    Carries tau and epsilon so downstream operator assembly needs no
    second handle on the problem.
    """

    n: int
    d: int
    lambdas: np.ndarray
    V: np.ndarray
    Vinv: np.ndarray
    f_diag: dict
    g_diag: FourierVector
    tau: float
    epsilon: float
    cond_V: float
    diag_residual: float
    problem: ProblemSpec = field(repr=False, default=None)


def spectral_data(A, tol):
    """Eigenvalues/eigenvectors of A under the purely-imaginary-pairs
    hypothesis; raises when the hypothesis fails numerically."""
    A = np.asarray(A, dtype=float)
    twon = A.shape[0]
    n = twon // 2
    if A.shape != (twon, twon) or twon != 2 * n:
        raise ValueError("A must be square of even dimension")
    evals, evecs = np.linalg.eig(A)
    worst_re = float(np.max(np.abs(evals.real)))
    if worst_re > tol:
        raise EigenvalueRealPart(
            f"max |Re lambda| = {worst_re:.3e} exceeds tolerance {tol:.3e}")
    pos = [i for i in range(twon) if evals[i].imag > 0]
    if len(pos) != n:
        raise NonSimpleSpectrum(
            f"expected {n} eigenvalues with positive imaginary part, found {len(pos)}")
    order = sorted(pos, key=lambda i: evals[i].imag)
    lambdas = np.array([evals[i].imag for i in order], dtype=float)
    if lambdas[0] <= tol:
        raise NonSimpleSpectrum(f"smallest imaginary part {lambdas[0]:.3e} not positive")
    gaps = np.diff(lambdas)
    if n > 1 and np.min(gaps) <= tol:
        raise NonSimpleSpectrum(
            f"imaginary parts closer than tolerance: min gap {np.min(gaps):.3e}")
    cols = []
    for i in order:
        v = evecs[:, i]
        v = v / np.linalg.norm(v)
        # fix the phase: first entry of nonnegligible modulus made real positive
        lead = np.argmax(np.abs(v) > 1e-12 * np.max(np.abs(v)))
        v = v * (np.abs(v[lead]) / v[lead])
        cols.append(v)
    V = np.column_stack(cols + [np.conj(v) for v in cols])
    sv = np.linalg.svd(V, compute_uv=False)
    if sv[-1] < 1e-14 * sv[0]:
        raise SingularEigenbasis(f"eigenbasis singular: sigma_min/sigma_max = {sv[-1] / sv[0]:.3e}")
    cond = float(sv[0] / sv[-1])
    return lambdas, V, cond


def diagonalize(spec, tol=None):
    """Change of variables x = V z; returns the problem in eigencoordinates.

    The lower-block data is -i * row_j(V^{-1}) applied to f and g composed
    with V; the upper block is +i * row_{n+j}(V^{-1}) of the same, which for
    real data equals the conjugate of the lower block.
    """
    if tol is None:
        tol = spec.h2_tol()
    lambdas, V, cond = spectral_data(spec.A, tol)
    n, d = spec.n, spec.d
    Vinv = np.linalg.inv(V)
    target = np.diag(np.concatenate([1j * lambdas, -1j * lambdas]))
    diag_residual = float(np.max(np.abs(Vinv @ spec.A @ V - target)))

    # original components f_i as polynomials in x, then substitute x = V z
    fx = [Poly(2 * n) for _ in range(2 * n)]
    for (a, b), vec in spec.f_coeffs.items():
        e = tuple(a) + tuple(b)
        for i in range(2 * n):
            if vec[i] != 0:
                fx[i] = fx[i] + Poly(2 * n, {e: vec[i]})
    fz = [p.subs_linear(V) for p in fx]

    f_diag = {}
    for j in range(1, n + 1):
        lower = Poly(2 * n)
        upper = Poly(2 * n)
        for i in range(2 * n):
            if Vinv[j - 1, i] != 0:
                lower = lower + fz[i] * (-1j * Vinv[j - 1, i])
            if Vinv[n + j - 1, i] != 0:
                upper = upper + fz[i] * (1j * Vinv[n + j - 1, i])
        if lower:
            f_diag[(-1, j)] = lower
        if upper:
            f_diag[(1, j)] = upper

    g_diag = FourierVector(d)
    for k, vec in spec.g_coeffs.items():
        w = Vinv @ vec
        for j in range(1, n + 1):
            g_diag.set((-1, j, k), -1j * w[j - 1])
            g_diag.set((1, j, k), 1j * w[n + j - 1])

    return DiagonalizedSpec(n=n, d=d, lambdas=lambdas, V=V, Vinv=Vinv,
                            f_diag=f_diag, g_diag=g_diag, tau=spec.tau,
                            epsilon=spec.epsilon, cond_V=cond,
                            diag_residual=diag_residual, problem=spec)


def evaluate_blocks(y, omega, t_grid, n):
    """Complex block functions z(t) from lattice data; shape (len(t), 2n)."""
    t_grid = np.asarray(t_grid, dtype=float)
    omega = np.asarray(omega, dtype=float)
    z = np.zeros((t_grid.shape[0], 2 * n), dtype=complex)
    for m, c in y.entries.items():
        kw = float(np.dot(m.k, omega))
        z[:, _var_index(m.mu, m.j, n)] += c * np.exp(1j * kw * t_grid)
    return z


def reconstruct_solution(y, omega, V, t_grid, tol=1e-9):
    """Real trajectory x(t) = V z(t) on the given time grid.

    Raises RealityViolation when the imaginary residue exceeds tol relative
    to the solution scale (the lattice vector then lacks conjugate symmetry).
    """
    V = np.asarray(V, dtype=complex)
    n = V.shape[0] // 2
    z = evaluate_blocks(y, omega, t_grid, n)
    x = z @ V.T
    scale = max(float(np.max(np.abs(x))) if x.size else 0.0, 1.0)
    worst = float(np.max(np.abs(x.imag))) if x.size else 0.0
    if worst > tol * scale:
        raise RealityViolation(
            f"imaginary residue {worst:.3e} exceeds tolerance {tol * scale:.3e}")
    return x.real
