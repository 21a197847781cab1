import numpy as np
import pytest

from qpdelay.lattice import FourierVector, assemble_linearization
from qpdelay.model import ProblemSpec, diagonalize
from qpdelay.newton import SolverConfig

ROT = np.array([[0.0, -1.0], [1.0, 0.0]])


def rotation_problem(b3=1.0, b2=0.0, b11=0.0, g=None, epsilon=1e-3, tau=1.0,
                     freq_box=((1.0, 2.0),)):
    """n=1 planar-rotation instance with a cubic nonlinearity."""
    f_coeffs = {}
    if b3:
        f_coeffs[((3,), (0,))] = np.array([b3, 0.0])
    if b2:
        f_coeffs[((2,), (0,))] = np.array([0.0, b2])
    if b11:
        f_coeffs[((1,), (1,))] = np.array([b11, 0.0])
    if g is None:
        g = {(1,): np.array([1.0, 0.5]), (-1,): np.array([1.0, 0.5])}
    return ProblemSpec(n=1, d=1, A=ROT, f_coeffs=f_coeffs, g_coeffs=g,
                       tau=tau, epsilon=epsilon, freq_box=np.array(freq_box))


def canonical_problem():
    """Frozen desk instance: rotation, cubic f, tau=1, eps=1e-3.

    Coefficient scales chosen so the Newton cascade resolves over four
    stages before hitting the floor (the contraction-order measurement
    needs the history).
    """
    f_coeffs = {((3,), (0,)): np.array([30.0, 0.0]),
                ((2,), (0,)): np.array([0.0, 300.0]),
                ((1,), (1,)): np.array([150.0, 0.0])}
    g_coeffs = {(1,): np.array([25.0, 12.5]), (-1,): np.array([25.0, 12.5]),
                (2,): np.array([0.0, 6.25]), (-2,): np.array([0.0, 6.25])}
    return ProblemSpec(n=1, d=1, A=ROT, f_coeffs=f_coeffs, g_coeffs=g_coeffs,
                       tau=1.0, epsilon=1e-3, freq_box=np.array([[1.0, 2.0]]))


def light_problem():
    """Small-amplitude instance: converges in two or three stages."""
    return rotation_problem(b3=1.0, b2=2.0, b11=1.0)


def random_vector(rng, d=1, n=1, radius=3, amp=0.1, conj_symmetric=False):
    y = FourierVector(d)
    ks = list(np.ndindex(*((2 * radius + 1,) * d)))
    rng.shuffle(ks)
    for idx in ks[:5]:
        k = tuple(int(i - radius) for i in idx)
        for j in range(1, n + 1):
            c = amp * complex(rng.normal(), rng.normal())
            y.set((-1, j, k), c)
            if conj_symmetric:
                y.set((1, j, tuple(-x for x in k)), np.conj(c))
            else:
                y.set((1, j, k), amp * complex(rng.normal(), rng.normal()))
    return y


def operator_at(y, problem, omega, N):
    ds = diagonalize(problem)
    return assemble_linearization(y, ds, np.atleast_1d(omega), N=N), ds


def manufactured_problem(rng, omega, amp=0.05):
    """Plant a conjugate-symmetric solution and build the forcing for it.

    y* has <= 8 entries with decay norm <= 0.1; g is chosen per frequency
    so that the lattice equation holds exactly at y*: g = -(D y* + eps W)/eps,
    pushed back to original coordinates and symmetrized to real data.
    """
    from qpdelay.lattice import diagonal_entry, evaluate_W
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    base = rotation_problem(b3=1.0, b2=2.0, b11=1.0, g={(0,): np.zeros(2)})
    ds = diagonalize(base)
    y_star = FourierVector(1)
    for k in (0, 1, -2, 3):
        c = amp * np.exp(-abs(k) ** 0.5) * complex(rng.normal(), rng.normal())
        y_star.set((-1, 1, (k,)), c)
        y_star.set((1, 1, (-k,)), np.conj(c))
    y_star = y_star.scale(0.08 / y_star.decay_norm(0.5))
    assert y_star.decay_norm(0.5) <= 0.1
    w = evaluate_W(y_star, ds.f_diag, 1, 1)
    g_diag = FourierVector(1)
    for m in set(y_star.entries) | set(w.entries):
        D = diagonal_entry(m, 0.0, omega, base.tau, ds.lambdas)
        gt = -(D * y_star.get(m) + base.epsilon * w.get(m)) / base.epsilon
        phase = np.exp(-1j * float(np.dot(m.k, omega)) * base.tau)
        g_diag.set(m, phase * gt)
    ks = sorted({m.k for m in g_diag.entries})
    g_coeffs = {}
    for k in ks:
        lower = np.array([1j * g_diag.get((-1, j, k)) for j in range(1, 2)])
        upper = np.array([-1j * g_diag.get((1, j, k)) for j in range(1, 2)])
        g_coeffs[k] = ds.V @ np.concatenate([lower, upper])
    # enforce the reality condition exactly (it holds up to rounding)
    sym = {}
    for k, v in g_coeffs.items():
        mk = tuple(-x for x in k)
        w2 = g_coeffs.get(mk, np.zeros_like(v))
        assert np.max(np.abs(v - np.conj(w2))) < 1e-12
        sym[k] = 0.5 * (v + np.conj(w2))
    prob = ProblemSpec(n=1, d=1, A=ROT, f_coeffs=dict(base.f_coeffs),
                       g_coeffs=sym, tau=base.tau, epsilon=base.epsilon,
                       freq_box=np.array([[1.0, 2.0]]))
    return prob, y_star


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def desk_config():
    return SolverConfig()
