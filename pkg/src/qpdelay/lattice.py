"""Lattice index sets, Fourier vectors, and the linearized lattice operator.

The unknown is a finitely supported map y on the index set
{(mu, j, k): mu = +-1, 1 <= j <= n, k in Z^d}.  The lower block (mu = -1)
holds the Fourier coefficients of the complex solution components, the
upper block (mu = +1) those of the conjugated components.  The linearized
operator splits as T^sigma = D^sigma + eps*S where D^sigma is the diagonal

    D^sigma(m) = (mu*<k, omega> + mu*sigma + lambda_j) * exp(i*(<k, omega> + sigma)*tau)

and S carries the derivative of the nonlinearity.  The delay phase has been
moved onto the diagonal and the forcing, so S is exactly Toeplitz in k:
S(m, m') depends on k, k' only through q = k - k'.
"""

from __future__ import annotations

import itertools
from typing import NamedTuple

import numpy as np
from scipy.signal import convolve as _convolve

from .errors import DegreeOverflow, OutOfRange


class LatticeIndex(NamedTuple):
    mu: int
    j: int
    k: tuple


def sup_norm(k):
    """|k|_infty; every |k| in this package means the sup norm."""
    return max(abs(int(x)) for x in k) if k else 0


class KBox:
    """Product interval [lo_1, hi_1] x ... x [lo_d, hi_d] in Z^d, inclusive."""

    __slots__ = ("lo", "hi")

    def __init__(self, lo, hi):
        self.lo = tuple(int(x) for x in lo)
        self.hi = tuple(int(x) for x in hi)
        if len(self.lo) != len(self.hi):
            raise ValueError("lo/hi dimension mismatch")
        if any(l > h for l, h in zip(self.lo, self.hi)):
            raise ValueError(f"empty box {self.lo}..{self.hi}")

    @classmethod
    def centered(cls, N, d):
        return cls((-N,) * d, (N,) * d)

    @classmethod
    def around(cls, k0, halfwidth, clip=None):
        box = cls(tuple(x - halfwidth for x in k0), tuple(x + halfwidth for x in k0))
        return box.intersect(clip) if clip is not None else box

    @property
    def d(self):
        return len(self.lo)

    def contains(self, k):
        return all(l <= x <= h for l, x, h in zip(self.lo, k, self.hi))

    def contains_box(self, other):
        return all(l <= ol and oh <= h for l, h, ol, oh in
                   zip(self.lo, self.hi, other.lo, other.hi))

    def intersect(self, other):
        lo = tuple(max(a, b) for a, b in zip(self.lo, other.lo))
        hi = tuple(min(a, b) for a, b in zip(self.hi, other.hi))
        if any(l > h for l, h in zip(lo, hi)):
            return None
        return KBox(lo, hi)

    def enlarge(self, r, clip=None):
        box = KBox(tuple(x - r for x in self.lo), tuple(x + r for x in self.hi))
        return box.intersect(clip) if clip is not None else box

    def shift(self, q):
        return KBox(tuple(l + x for l, x in zip(self.lo, q)),
                    tuple(h + x for h, x in zip(self.hi, q)))

    def hull(self, other):
        return KBox(tuple(min(a, b) for a, b in zip(self.lo, other.lo)),
                    tuple(max(a, b) for a, b in zip(self.hi, other.hi)))

    def diam(self):
        """Largest side length (sup-metric diameter)."""
        return max(h - l for l, h in zip(self.lo, self.hi))

    def npoints(self):
        n = 1
        for l, h in zip(self.lo, self.hi):
            n *= h - l + 1
        return n

    def ks(self):
        return itertools.product(*[range(l, h + 1) for l, h in zip(self.lo, self.hi)])

    def __eq__(self, other):
        return isinstance(other, KBox) and self.lo == other.lo and self.hi == other.hi

    def __repr__(self):
        return f"KBox({self.lo}..{self.hi})"


def lattice_sites(n, kbox):
    """All (mu, j, k) with k in the box, ordered lexicographically."""
    return [LatticeIndex(mu, j, k)
            for mu in (-1, 1)
            for j in range(1, n + 1)
            for k in kbox.ks()]


# ----------------------------------------------------------------------
# Fourier vectors


class FourierVector:
    """Finitely supported complex amplitude map on the lattice.

    Entries are stored sparsely; exact zeros are dropped.  The decay norm
    sup_m |y(m)| * exp(|k|^c) is finite by construction.
    """

    __slots__ = ("d", "entries")

    def __init__(self, d, entries=None):
        self.d = int(d)
        self.entries = {}
        if entries:
            for m, c in entries.items():
                c = complex(c)
                if c != 0:
                    mu, j, k = m
                    self.entries[LatticeIndex(int(mu), int(j), tuple(int(x) for x in k))] = c

    @classmethod
    def zero(cls, d):
        return cls(d)

    def copy(self):
        out = FourierVector(self.d)
        out.entries = dict(self.entries)
        return out

    def get(self, m):
        return self.entries.get(m, 0.0 + 0.0j)

    def set(self, m, c):
        c = complex(c)
        mu, j, k = m
        m = LatticeIndex(int(mu), int(j), tuple(int(x) for x in k))
        if c == 0:
            self.entries.pop(m, None)
        else:
            self.entries[m] = c

    def items_sorted(self):
        return sorted(self.entries.items())

    def __len__(self):
        return len(self.entries)

    def __add__(self, other):
        out = self.copy()
        for m, c in other.entries.items():
            v = out.entries.get(m, 0.0) + c
            if v == 0:
                out.entries.pop(m, None)
            else:
                out.entries[m] = v
        return out

    def __sub__(self, other):
        return self + other.scale(-1.0)

    def scale(self, a):
        out = FourierVector(self.d)
        if a != 0:
            out.entries = {m: a * c for m, c in self.entries.items()}
        return out

    def norm2(self):
        return float(np.sqrt(sum(abs(c) ** 2 for c in self.entries.values())))

    def norm_sup(self):
        return float(max((abs(c) for c in self.entries.values()), default=0.0))

    def norm1(self):
        return float(sum(abs(c) for c in self.entries.values()))

    def decay_norm(self, c):
        return float(max((abs(v) * np.exp(float(sup_norm(m.k)) ** c)
                          for m, v in self.entries.items()), default=0.0))

    def support_radius(self):
        return max((sup_norm(m.k) for m in self.entries), default=0)

    def truncate(self, N):
        """Keep entries with |k|_infty <= N; idempotent."""
        out = FourierVector(self.d)
        out.entries = {m: c for m, c in self.entries.items() if sup_norm(m.k) <= N}
        return out

    def prune(self, tol):
        out = FourierVector(self.d)
        out.entries = {m: c for m, c in self.entries.items() if abs(c) > tol}
        return out

    # -- stable line-oriented text format (one entry per line) ---------

    def to_lines(self):
        lines = []
        for m, c in self.items_sorted():
            ks = " ".join(str(x) for x in m.k)
            lines.append(f"{m.mu} {m.j} {ks} {c.real!r} {c.imag!r}")
        return lines

    @classmethod
    def from_lines(cls, lines, d):
        out = cls(d)
        for line in lines:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != d + 4:
                raise ValueError(f"bad entry line (want {d + 4} fields): {line!r}")
            mu, j = int(parts[0]), int(parts[1])
            k = tuple(int(x) for x in parts[2:2 + d])
            c = complex(float(parts[2 + d]), float(parts[3 + d]))
            out.set((mu, j, k), c)
        return out

    def __repr__(self):
        return f"FourierVector(d={self.d}, {len(self.entries)} entries, radius {self.support_radius()})"


def truncate(y, N):
    if N < 0:
        raise ValueError("truncation radius must be >= 0")
    return y.truncate(N)


# ----------------------------------------------------------------------
# Dense grids for exact sparse convolution

def _block_grid(y, mu, j, d):
    """Dense complex array of one (mu, j) block plus its lower corner."""
    ks = [m.k for m in y.entries if m.mu == mu and m.j == j]
    if not ks:
        return None
    lo = tuple(min(k[i] for k in ks) for i in range(d))
    hi = tuple(max(k[i] for k in ks) for i in range(d))
    arr = np.zeros(tuple(h - l + 1 for l, h in zip(lo, hi)), dtype=complex)
    for m, c in y.entries.items():
        if m.mu == mu and m.j == j:
            arr[tuple(x - l for x, l in zip(m.k, lo))] = c
    return arr, lo


def _conv(a, b):
    (aa, alo), (bb, blo) = a, b
    cc = _convolve(aa, bb, mode="full", method="direct")
    return cc, tuple(x + y for x, y in zip(alo, blo))


def _poly_on_grids(poly, blocks, d):
    """Fourier coefficients of P(u_1(t), ..., u_nv(t)) by exact convolution.

    blocks[v] is the (array, lo) grid of variable v, or None when that
    variable vanishes identically.  Returns (array, lo) or None.
    """
    one = (np.ones((1,) * d, dtype=complex), (0,) * d)
    pow_cache = [dict() for _ in range(poly.nv)]

    def power(v, p):
        if p == 0:
            return one
        cache = pow_cache[v]
        if p not in cache:
            if blocks[v] is None:
                cache[p] = None
            elif p == 1:
                cache[p] = blocks[v]
            else:
                half = power(v, p // 2)
                cache[p] = None if half is None else _conv(half, half)
                if cache[p] is not None and p % 2:
                    cache[p] = _conv(cache[p], blocks[v])
        return cache[p]

    total = None
    for e, c in sorted(poly.terms.items()):
        mono = one
        dead = False
        for v, p in enumerate(e):
            if p == 0:
                continue
            g = power(v, p)
            if g is None:
                dead = True
                break
            mono = _conv(mono, g)
        if dead:
            continue
        arr, lo = mono
        arr = arr * c
        if total is None:
            total = (arr.copy(), lo)
        else:
            tarr, tlo = total
            nlo = tuple(min(a, b) for a, b in zip(tlo, lo))
            nhi = tuple(max(a + s - 1, b + t - 1)
                        for a, b, s, t in zip(tlo, lo, tarr.shape, arr.shape))
            out = np.zeros(tuple(h - l + 1 for l, h in zip(nlo, nhi)), dtype=complex)
            sl1 = tuple(slice(a - l, a - l + s) for a, l, s in zip(tlo, nlo, tarr.shape))
            sl2 = tuple(slice(a - l, a - l + s) for a, l, s in zip(lo, nlo, arr.shape))
            out[sl1] += tarr
            out[sl2] += arr
            total = (out, nlo)
    return total


def _var_index(mu, j, n):
    """Variable slot of block (mu, j): lower block first, then upper."""
    return (j - 1) if mu == -1 else (n + j - 1)


def _grids_from_vector(y, n, d):
    return [_block_grid(y, mu, j, d) for mu in (-1, 1) for j in range(1, n + 1)]


# ----------------------------------------------------------------------
# Operations on the nonlinearity


def evaluate_W(y, f_diag, n, d, support_cap=8192):
    """Blockwise Fourier coefficients of the composed nonlinearity.

    f_diag maps (mu, j) to the polynomial for that block in the 2n block
    variables.  Computed by exact sparse polynomial convolution.
    """
    deg = max((p.degree() for p in f_diag.values()), default=0)
    bound = deg * y.support_radius()
    if support_cap is not None and bound > support_cap:
        raise DegreeOverflow(
            f"convolution support bound {bound} exceeds cap {support_cap}")
    blocks = _grids_from_vector(y, n, d)
    out = FourierVector(d)
    for (mu, j), poly in f_diag.items():
        g = _poly_on_grids(poly, blocks, d)
        if g is None:
            continue
        arr, lo = g
        for idx in np.argwhere(arr != 0):
            k = tuple(int(i + l) for i, l in zip(idx, lo))
            out.set((mu, j, k), arr[tuple(idx)])
    return out


def forcing_vector(dspec, omega):
    """Lattice forcing with the delay phase applied: exp(i<k,w>tau) * g."""
    out = FourierVector(dspec.d)
    omega = np.asarray(omega, dtype=float)
    for m, c in dspec.g_diag.entries.items():
        phase = np.exp(1j * float(np.dot(m.k, omega)) * dspec.tau)
        out.set(m, phase * c)
    return out


def evaluate_F(y, omega, dspec, support_cap=8192):
    """Nonlinear lattice map F[y] = D y + eps*(W[y] + phase*g).

    F[y] = 0 characterizes a quasi-periodic solution with frequency omega.
    The result is supported wherever y, W[y] or the forcing are; no
    truncation is applied here.
    """
    omega = np.asarray(omega, dtype=float)
    out = FourierVector(dspec.d)
    for m, c in y.entries.items():
        out.set(m, diagonal_entry(m, 0.0, omega, dspec.tau, dspec.lambdas) * c)
    w = evaluate_W(y, dspec.f_diag, dspec.n, dspec.d, support_cap=support_cap)
    g = forcing_vector(dspec, omega)
    return out + (w + g).scale(dspec.epsilon)


# ----------------------------------------------------------------------
# Diagonal and the Toeplitz-plus-diagonal operator


def diagonal_entry(m, sigma, omega, tau, lambdas):
    mu, j, k = m
    kw = float(np.dot(k, omega))
    return (mu * kw + mu * sigma + lambdas[j - 1]) * np.exp(1j * (kw + sigma) * tau)


def assemble_diagonal(omega, sigma, tau, lambdas, N):
    """Map m -> D^sigma(m) for every site with |k|_infty <= N."""
    if N < 0:
        raise ValueError("N must be >= 0")
    omega = np.asarray(omega, dtype=float)
    d = omega.shape[0]
    n = len(lambdas)
    box = KBox.centered(N, d)
    return {m: diagonal_entry(m, sigma, omega, tau, lambdas)
            for m in lattice_sites(n, box)}


class LatticeOperator:
    """T^sigma = D^sigma + eps*S with S Toeplitz in k.

    The kernel is stored per block pair (mu, j, mu', j') on a dense q-grid,
    which makes the Toeplitz property structural: entries are produced by
    kernel lookup at q = k - k'.  N is the truncation radius the operator
    was assembled for; requests beyond it raise OutOfRange.
    """

    def __init__(self, n, d, lambdas, omega, tau, epsilon, kernel, N):
        self.n = int(n)
        self.d = int(d)
        self.lambdas = np.asarray(lambdas, dtype=float)
        self.omega = np.asarray(omega, dtype=float)
        self.tau = float(tau)
        self.epsilon = float(epsilon)
        self.N = int(N)
        self._grids = {}
        if kernel:
            first = next(iter(kernel))
            if len(first) == 5:  # flat map (mu, j, mu', j', q) -> c
                per_pair = {}
                for (mu, j, mup, jp, q), c in kernel.items():
                    per_pair.setdefault((mu, j, mup, jp), {})[tuple(q)] = complex(c)
                for pair, entries in per_pair.items():
                    lo = tuple(min(q[i] for q in entries) for i in range(self.d))
                    hi = tuple(max(q[i] for q in entries) for i in range(self.d))
                    arr = np.zeros(tuple(h - l + 1 for l, h in zip(lo, hi)), dtype=complex)
                    for q, c in entries.items():
                        arr[tuple(x - l for x, l in zip(q, lo))] = c
                    self._grids[pair] = (arr, lo)
            else:  # already gridded: (mu, j, mu', j') -> (array, lo)
                self._grids = dict(kernel)

    @classmethod
    def from_grids(cls, n, d, lambdas, omega, tau, epsilon, grids, N):
        op = cls(n, d, lambdas, omega, tau, epsilon, None, N)
        op._grids = {pair: (np.asarray(arr, dtype=complex), tuple(lo))
                     for pair, (arr, lo) in grids.items()}
        return op

    def with_radius(self, N):
        return LatticeOperator.from_grids(self.n, self.d, self.lambdas, self.omega,
                                          self.tau, self.epsilon, self._grids, N)

    # -- entry access ---------------------------------------------------

    def dsigma(self, m, sigma=0.0):
        return diagonal_entry(m, sigma, self.omega, self.tau, self.lambdas)

    def s_entry(self, m, mp):
        g = self._grids.get((m.mu, m.j, mp.mu, mp.j))
        if g is None:
            return 0.0 + 0.0j
        arr, lo = g
        idx = tuple(a - b - l for a, b, l in zip(m.k, mp.k, lo))
        if any(i < 0 or i >= s for i, s in zip(idx, arr.shape)):
            return 0.0 + 0.0j
        return complex(arr[idx])

    def entry(self, m, mp, sigma=0.0):
        if sup_norm(m.k) > self.N or sup_norm(mp.k) > self.N:
            raise OutOfRange(f"site beyond assembled radius N={self.N}")
        v = self.epsilon * self.s_entry(m, mp)
        if m == mp:
            v += self.dsigma(m, sigma)
        return v

    def kernel_entry(self, mu, j, mup, jp, q):
        g = self._grids.get((mu, j, mup, jp))
        if g is None:
            return 0.0 + 0.0j
        arr, lo = g
        idx = tuple(a - l for a, l in zip(q, lo))
        if any(i < 0 or i >= s for i, s in zip(idx, arr.shape)):
            return 0.0 + 0.0j
        return complex(arr[idx])

    def kernel_map(self):
        """Flat map (mu, j, mu', j', q) -> complex of nonzero kernel entries."""
        out = {}
        for (mu, j, mup, jp), (arr, lo) in self._grids.items():
            for idx in np.argwhere(arr != 0):
                q = tuple(int(i + l) for i, l in zip(idx, lo))
                out[(mu, j, mup, jp, q)] = complex(arr[tuple(idx)])
        return out

    # -- dense assembly (vectorized) -------------------------------------

    def diagonal_values(self, sites, sigma=0.0):
        K = np.array([m.k for m in sites], dtype=float).reshape(len(sites), self.d)
        mu = np.array([m.mu for m in sites], dtype=float)
        lam = self.lambdas[np.array([m.j - 1 for m in sites])]
        kw = K @ self.omega
        return (mu * kw + mu * sigma + lam) * np.exp(1j * (kw + sigma) * self.tau)

    def dense(self, sites, sigma=0.0, check_range=True):
        """Dense matrix of T^sigma restricted to the given site list."""
        if check_range:
            for m in sites:
                if sup_norm(m.k) > self.N:
                    raise OutOfRange(f"site {m} beyond assembled radius N={self.N}")
        s = len(sites)
        K = np.array([m.k for m in sites], dtype=int).reshape(s, self.d)
        T = np.zeros((s, s), dtype=complex)
        groups = {}
        for i, m in enumerate(sites):
            groups.setdefault((m.mu, m.j), []).append(i)
        for (mu, j), rows in groups.items():
            for (mup, jp), cols in groups.items():
                g = self._grids.get((mu, j, mup, jp))
                if g is None:
                    continue
                arr, lo = g
                r = np.array(rows)
                cidx = np.array(cols)
                diff = K[r][:, None, :] - K[cidx][None, :, :]
                idx = diff - np.array(lo)
                ok = np.all((idx >= 0) & (idx < np.array(arr.shape)), axis=-1)
                vals = np.zeros(ok.shape, dtype=complex)
                if ok.any():
                    flat = np.ravel_multi_index(
                        tuple(np.clip(idx[..., i], 0, arr.shape[i] - 1)
                              for i in range(self.d)), arr.shape)
                    vals = np.where(ok, arr.ravel()[flat], 0.0)
                T[np.ix_(r, cidx)] = self.epsilon * vals
        T[np.diag_indices(s)] += self.diagonal_values(sites, sigma)
        return T

    def apply(self, y, sigma=0.0):
        """T^sigma y for a finitely supported y (no truncation)."""
        out = FourierVector(self.d)
        for m, c in y.entries.items():
            out.set(m, self.dsigma(m, sigma) * c)
        if not self._grids:
            return out
        blocks = _grids_from_vector(y, self.n, self.d)
        acc = FourierVector(self.d)
        for (mu, j, mup, jp), g in self._grids.items():
            v = _var_index(mup, jp, self.n)
            if blocks[v] is None:
                continue
            arr, lo = _conv(g, blocks[v])
            for idx in np.argwhere(arr != 0):
                k = tuple(int(i + l) for i, l in zip(idx, lo))
                m = LatticeIndex(mu, j, k)
                acc.set(m, acc.get(m) + arr[tuple(idx)])
        return out + acc.scale(self.epsilon)

    # -- reported bounds --------------------------------------------------

    def s_norm_bound(self):
        """Row/column-sum bound on the operator norm of S."""
        row = {}
        col = {}
        for (mu, j, mup, jp), (arr, lo) in self._grids.items():
            s = float(np.abs(arr).sum())
            row[(mu, j)] = row.get((mu, j), 0.0) + s
            col[(mup, jp)] = col.get((mup, jp), 0.0) + s
        r = max(row.values(), default=0.0)
        c = max(col.values(), default=0.0)
        return float(np.sqrt(r * c)) if r and c else max(r, c)

    def kernel_decay_constant(self, c):
        """Smallest C with |kernel(q)| <= C*exp(-|q|^c), by scanning."""
        best = 0.0
        for (arr, lo) in self._grids.values():
            for idx in np.argwhere(arr != 0):
                q = tuple(int(i + l) for i, l in zip(idx, lo))
                best = max(best, abs(arr[tuple(idx)]) * float(np.exp(sup_norm(q) ** c)))
        return best


def assemble_linearization(y, dspec, omega, N=0, support_cap=8192):
    """Toeplitz kernel of S = W'[y]: blockwise Fourier coefficients of the
    derivative polynomials composed with y."""
    n, d = dspec.n, dspec.d
    deg = max((p.degree() for p in dspec.f_diag.values()), default=0)
    bound = max(deg - 1, 0) * y.support_radius()
    if support_cap is not None and bound > support_cap:
        raise DegreeOverflow(
            f"kernel support bound {bound} exceeds cap {support_cap}")
    blocks = _grids_from_vector(y, n, d)
    grids = {}
    for (mu, j), poly in dspec.f_diag.items():
        for mup in (-1, 1):
            for jp in range(1, n + 1):
                dp = poly.diff(_var_index(mup, jp, n))
                if not dp:
                    continue
                g = _poly_on_grids(dp, blocks, d)
                if g is not None:
                    grids[(mu, j, mup, jp)] = g
    return LatticeOperator.from_grids(n, d, dspec.lambdas, omega,
                                      dspec.tau, dspec.epsilon, grids, N)


def check_translation(op, q, kbox, sigma=0.0):
    """Sup residual of the covariance identity
    T^sigma restricted to q+Lambda vs T^{sigma+<q,omega>} on Lambda."""
    if not kbox.contains((0,) * op.d):
        raise ValueError("box must contain the origin")
    q = tuple(int(x) for x in q)
    shifted = kbox.shift(q)
    for corner in (shifted.lo, shifted.hi):
        if sup_norm(corner) > op.N:
            raise OutOfRange(f"q+box corner {corner} beyond radius N={op.N}")
    sites0 = lattice_sites(op.n, kbox)
    sites1 = [LatticeIndex(m.mu, m.j, tuple(a + b for a, b in zip(m.k, q)))
              for m in sites0]
    t_shift = op.dense(sites1, sigma)
    t_sigma = op.dense(sites0, sigma + float(np.dot(q, op.omega)))
    return float(np.max(np.abs(t_shift - t_sigma)))
