import numpy as np
import pytest

from conftest import light_problem, operator_at, random_vector, rotation_problem
from qpdelay.errors import DegreeOverflow, OutOfRange
from qpdelay.lattice import (FourierVector, KBox, LatticeIndex, LatticeOperator,
                             assemble_diagonal, assemble_linearization,
                             check_translation, diagonal_entry, evaluate_F,
                             evaluate_W, forcing_vector, lattice_sites, truncate)
from qpdelay.model import DiagonalizedSpec, diagonalize
from qpdelay.polynomial import Poly


# -- diagonal ----------------------------------------------------------

def test_diagonal_k_zero_is_lambda():
    d = diagonal_entry(LatticeIndex(1, 1, (0,)), 0.0, np.array([1.3]), 0.7, [2.5])
    assert d == pytest.approx(2.5)


def test_diagonal_modulus_tau_independent():
    m = LatticeIndex(-1, 1, (3,))
    vals = [abs(diagonal_entry(m, 0.0, np.array([1.3]), tau, [1.0]))
            for tau in (0.1, 1.0, 5.0)]
    assert np.allclose(vals, abs(1.0 - 3 * 1.3))


def test_diagonal_direct_arithmetic():
    # omega=1.5, lambda=1, tau=1, m=(+1,1,k=2): (1*3 + 1) e^{3i}
    d = diagonal_entry(LatticeIndex(1, 1, (2,)), 0.0, np.array([1.5]), 1.0, [1.0])
    assert abs(d - 4.0 * np.exp(3.0j)) < 1e-14


def test_assemble_diagonal_covers_box():
    dm = assemble_diagonal(np.array([1.3]), 0.2, 1.0, [1.0], 3)
    assert len(dm) == 2 * 1 * 7
    m = LatticeIndex(-1, 1, (2,))
    assert dm[m] == diagonal_entry(m, 0.2, np.array([1.3]), 1.0, [1.0])


# -- W and its linearization ------------------------------------------

def _single_block_fdiag():
    # f(y, ybar) = y^2 in block (-1, 1); 2 variables (n=1)
    return {(-1, 1): Poly(2, {(2, 0): 1.0})}


def test_w_zero_input():
    assert len(evaluate_W(FourierVector(1), _single_block_fdiag(), 1, 1)) == 0


def test_w_square_of_single_mode():
    y = FourierVector(1)
    c = 0.3 + 0.4j
    y.set((-1, 1, (1,)), c)
    w = evaluate_W(y, _single_block_fdiag(), 1, 1)
    assert len(w) == 1
    assert w.get((-1, 1, (2,))) == pytest.approx(c * c)


def test_w_quadrature_oracle(rng):
    # time-domain sampling + DFT vs exact convolution
    prob = light_problem()
    ds = diagonalize(prob)
    y = random_vector(rng, radius=3, amp=0.3)
    w = evaluate_W(y, ds.f_diag, 1, 1)
    M = 64
    theta = 2 * np.pi * np.arange(M) / M
    u = np.zeros((2, M), dtype=complex)
    for m, c in y.entries.items():
        u[0 if m.mu == -1 else 1] += c * np.exp(1j * m.k[0] * theta)
    for (mu, j), poly in ds.f_diag.items():
        coeffs = np.fft.fft(poly.eval(u)) / M
        for k in range(-12, 13):
            assert abs(w.get((mu, j, (k,))) - coeffs[k % M]) < 1e-12


def test_w_degree_overflow():
    y = FourierVector(1)
    y.set((-1, 1, (600,)), 0.1)
    with pytest.raises(DegreeOverflow):
        evaluate_W(y, {(-1, 1): Poly(2, {(3, 0): 1.0})}, 1, 1, support_cap=1000)


def _square_dspec():
    # minimal spec with f(y, ybar) = y^2 in the lower block
    return DiagonalizedSpec(n=1, d=1, lambdas=np.array([1.0]),
                            V=np.eye(2, dtype=complex), Vinv=np.eye(2, dtype=complex),
                            f_diag={(-1, 1): Poly(2, {(2, 0): 1.0})},
                            g_diag=FourierVector(1), tau=1.0, epsilon=0.1,
                            cond_V=1.0, diag_residual=0.0)


def test_linearization_zero_at_origin_for_quadratic():
    op = assemble_linearization(FourierVector(1), _square_dspec(), np.array([1.3]))
    # derivative of a quadratic vanishes at 0: no kernel entries
    assert not op.kernel_map()


def test_linearization_kernel_product_rule(rng):
    # f = y^2: kernel entry at q equals 2*y(q)
    y = random_vector(rng, radius=2, amp=0.2)
    op = assemble_linearization(y, _square_dspec(), np.array([1.3]))
    for m, c in y.entries.items():
        if m.mu == -1:
            assert abs(op.kernel_entry(-1, 1, -1, 1, m.k) - 2 * c) < 1e-14


def _fd_linearization_error(y, v, ds, h):
    w0 = evaluate_W(y, ds.f_diag, ds.n, ds.d)
    w1 = evaluate_W(y + v.scale(h), ds.f_diag, ds.n, ds.d)
    fd = (w1 - w0).scale(1.0 / h)
    op = assemble_linearization(y, ds, np.array([1.37]))
    sv = op.apply(v)
    # op.apply includes the diagonal; strip it
    for m, c in v.entries.items():
        sv.set(m, sv.get(m) - op.dsigma(m) * c)
    sv = sv.scale(1.0 / ds.epsilon) if ds.epsilon else sv
    return (fd - sv).norm2()


def test_linearization_first_order(rng):
    prob = light_problem()
    ds = diagonalize(prob)
    y = random_vector(rng, radius=3, amp=0.3)
    v = random_vector(rng, radius=3, amp=1.0)
    errs = [_fd_linearization_error(y, v, ds, h) for h in (1e-4, 1e-5, 1e-6)]
    C = 2.0 * errs[0] / 1e-4
    for err, h in zip(errs, (1e-4, 1e-5, 1e-6)):
        assert err <= C * h


# -- evaluate_F --------------------------------------------------------

def _eps0_dspec(prob):
    ds = diagonalize(prob)
    return DiagonalizedSpec(n=ds.n, d=ds.d, lambdas=ds.lambdas, V=ds.V,
                            Vinv=ds.Vinv, f_diag=ds.f_diag, g_diag=ds.g_diag,
                            tau=ds.tau, epsilon=0.0, cond_V=ds.cond_V,
                            diag_residual=ds.diag_residual)


def test_f_zero_eps_zero_y():
    ds = _eps0_dspec(light_problem())
    assert len(evaluate_F(FourierVector(1), [1.3], ds)) == 0


def test_f_eps0_is_pure_diagonal(rng):
    ds = _eps0_dspec(light_problem())
    y = random_vector(rng)
    F = evaluate_F(y, [1.3], ds)
    for m, c in y.entries.items():
        want = diagonal_entry(m, 0.0, np.array([1.3]), ds.tau, ds.lambdas) * c
        assert abs(F.get(m) - want) < 1e-14
    assert len(F) == len(y)


def test_f_linear_closed_form():
    prob = rotation_problem(b3=0.0, b2=0.0)
    ds = diagonalize(prob)
    omega = np.array([1.37])
    y = FourierVector(1)
    for m, c in forcing_vector(ds, omega).entries.items():
        y.set(m, -ds.epsilon * c / diagonal_entry(m, 0.0, omega, ds.tau, ds.lambdas))
    assert evaluate_F(y, omega, ds).norm_sup() < 1e-18


# -- truncation --------------------------------------------------------

def test_truncate_idempotent(rng):
    y = random_vector(rng, radius=4)
    assert truncate(truncate(y, 2), 2).entries == truncate(y, 2).entries


def test_truncate_noop_beyond_radius(rng):
    y = random_vector(rng, radius=4)
    assert truncate(y, y.support_radius()).entries == y.entries


def test_truncate_to_zero():
    y = FourierVector(1)
    y.set((-1, 1, (1,)), 1.0)
    y.set((1, 1, (-1,)), 1.0)
    assert len(truncate(y, 0)) == 0


# -- Toeplitz structure and translation --------------------------------

def _operator(rng, omega=(1.37,), sigma_kernel_amp=0.3, N=30):
    prob = light_problem()
    y = random_vector(rng, radius=3, amp=sigma_kernel_amp)
    op, ds = operator_at(y, prob, np.array(omega), N)
    return op


def test_toeplitz_structural(rng):
    op = _operator(rng)
    sites = lattice_sites(1, KBox.centered(3, 1))
    for m in sites:
        for mp in sites:
            for q in ((1,), (-2,), (5,)):
                a = op.s_entry(m, mp)
                b = op.s_entry(LatticeIndex(m.mu, m.j, (m.k[0] + q[0],)),
                               LatticeIndex(mp.mu, mp.j, (mp.k[0] + q[0],)))
                assert a == b  # bitwise: same kernel lookup


def test_kernel_decay_scan(rng):
    prob = light_problem()
    y = random_vector(rng, radius=3, amp=0.3)
    # normalize to decay norm <= 1
    dn = y.decay_norm(0.5)
    y = y.scale(1.0 / max(dn, 1.0))
    op, _ = operator_at(y, prob, np.array([1.37]), 20)
    C = op.kernel_decay_constant(0.5)
    for (mu, j, mup, jp, q), v in op.kernel_map().items():
        assert abs(v) <= C * np.exp(-float(max(abs(x) for x in q)) ** 0.5) + 1e-15


def test_translation_identity_exact_zero_shift(rng):
    op = _operator(rng)
    assert check_translation(op, (0,), KBox.centered(4, 1), sigma=0.31) == 0.0


def test_translation_identity_random_shifts(rng):
    op = _operator(rng)
    for q in ((3,), (-7,), (11,), (19,)):
        assert check_translation(op, q, KBox.centered(4, 1), sigma=0.1) < 1e-12


def test_translation_diagonal_only():
    ds = diagonalize(rotation_problem(b3=0.0))
    op = LatticeOperator(1, 1, ds.lambdas, np.array([1.37]), ds.tau,
                         ds.epsilon, None, 40)
    for q in ((5,), (-9,)):
        assert check_translation(op, q, KBox.centered(6, 1), sigma=0.7) < 1e-12


def test_translation_out_of_range(rng):
    op = _operator(rng, N=10)
    with pytest.raises(OutOfRange):
        check_translation(op, (9,), KBox.centered(4, 1))


def test_dense_matches_entry_accessor(rng):
    op = _operator(rng, N=10)
    sites = lattice_sites(1, KBox.centered(2, 1))
    T = op.dense(sites, sigma=0.05)
    for i, m in enumerate(sites):
        for ip, mp in enumerate(sites):
            assert T[i, ip] == op.entry(m, mp, sigma=0.05)


def test_apply_matches_dense(rng):
    op = _operator(rng, N=12)
    v = random_vector(rng, radius=2)
    sites = lattice_sites(1, KBox.centered(12, 1))
    T = op.dense(sites)
    vec = np.array([v.get(m) for m in sites])
    got = op.apply(v)
    want = T @ vec
    for i, m in enumerate(sites):
        assert abs(got.get(m) - want[i]) < 1e-12


# -- serialization -----------------------------------------------------

def test_fourier_vector_text_roundtrip(rng):
    y = random_vector(rng, radius=3)
    lines = y.to_lines()
    back = FourierVector.from_lines(lines, 1)
    assert back.entries == y.entries


def test_fourier_vector_text_golden():
    y = FourierVector(2)
    y.set((-1, 1, (0, -2)), 0.5 - 0.25j)
    y.set((1, 2, (3, 1)), 1e-17 + 1.0j)
    assert y.to_lines() == ["-1 1 0 -2 0.5 -0.25", "1 2 3 1 1e-17 1.0"]


def test_norms(rng):
    y = FourierVector(1)
    y.set((-1, 1, (2,)), 3.0 + 4.0j)
    assert y.norm2() == pytest.approx(5.0)
    assert y.norm_sup() == pytest.approx(5.0)
    assert y.decay_norm(0.5) == pytest.approx(5.0 * np.exp(2 ** 0.5))
    assert y.support_radius() == 2
