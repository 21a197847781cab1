"""Sparse complex polynomials in several variables.

Used for the nonlinearity written in eigencoordinates: a polynomial in the
2n block variables (u_1..u_n for the lower block, u_{n+1}..u_{2n} for the
upper block).  Exponents are stored graded-lexicographically as tuples, one
slot per variable; coefficients are complex.  All arithmetic is exact
(dict convolution), which keeps the downstream Fourier convolutions free of
quadrature error.
"""

from __future__ import annotations

import numpy as np


class Poly:
    """Polynomial sum_e c_e * u^e with e a length-nv exponent tuple."""

    __slots__ = ("nv", "terms")

    def __init__(self, nv, terms=None):
        self.nv = int(nv)
        self.terms = {}
        if terms:
            for e, c in terms.items():
                c = complex(c)
                if c != 0:
                    self.terms[tuple(int(x) for x in e)] = c

    @classmethod
    def zero(cls, nv):
        return cls(nv)

    @classmethod
    def constant(cls, nv, c):
        return cls(nv, {(0,) * nv: c})

    @classmethod
    def variable(cls, nv, i):
        e = [0] * nv
        e[i] = 1
        return cls(nv, {tuple(e): 1.0})

    def copy(self):
        p = Poly(self.nv)
        p.terms = dict(self.terms)
        return p

    def __bool__(self):
        return bool(self.terms)

    def __eq__(self, other):
        return isinstance(other, Poly) and self.nv == other.nv and self.terms == other.terms

    def __add__(self, other):
        if isinstance(other, (int, float, complex)):
            other = Poly.constant(self.nv, other)
        out = Poly(self.nv)
        out.terms = dict(self.terms)
        for e, c in other.terms.items():
            v = out.terms.get(e, 0.0) + c
            if v == 0:
                out.terms.pop(e, None)
            else:
                out.terms[e] = v
        return out

    def __sub__(self, other):
        return self + (other * (-1.0))

    def __mul__(self, other):
        if isinstance(other, (int, float, complex)):
            out = Poly(self.nv)
            if other != 0:
                out.terms = {e: c * other for e, c in self.terms.items()}
            return out
        if self.nv != other.nv:
            raise ValueError("variable count mismatch")
        out = Poly(self.nv)
        acc = out.terms
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                v = acc.get(e, 0.0) + c1 * c2
                if v == 0:
                    acc.pop(e, None)
                else:
                    acc[e] = v
        return out

    __rmul__ = __mul__

    def __pow__(self, p):
        if p < 0:
            raise ValueError("negative power")
        out = Poly.constant(self.nv, 1.0)
        base = self
        while p:
            if p & 1:
                out = out * base
            base = base * base if p > 1 else base
            p >>= 1
        return out

    def diff(self, i):
        """Partial derivative with respect to variable i."""
        out = Poly(self.nv)
        for e, c in self.terms.items():
            if e[i] == 0:
                continue
            d = list(e)
            d[i] -= 1
            out.terms[tuple(d)] = c * e[i]
        return out

    def degree(self):
        if not self.terms:
            return 0
        return max(sum(e) for e in self.terms)

    def eval(self, point):
        """Evaluate at a complex vector (vectorized over trailing axes)."""
        point = np.asarray(point)
        total = np.zeros(point.shape[1:], dtype=complex) if point.ndim > 1 else 0.0 + 0.0j
        for e, c in self.terms.items():
            mono = c
            for i, p in enumerate(e):
                if p:
                    mono = mono * point[i] ** p
            total = total + mono
        return total

    def subs_linear(self, L):
        """Substitute u_i -> sum_l L[i, l] w_l and re-expand.

        L has shape (nv, nw); returns a Poly in nw variables.
        """
        L = np.asarray(L, dtype=complex)
        if L.shape[0] != self.nv:
            raise ValueError("row count must match variable count")
        nw = L.shape[1]
        lin = []
        for i in range(self.nv):
            t = {}
            for l in range(nw):
                if L[i, l] != 0:
                    e = [0] * nw
                    e[l] = 1
                    t[tuple(e)] = L[i, l]
            lin.append(Poly(nw, t))
        out = Poly(nw)
        pow_cache = [{} for _ in range(self.nv)]

        def power(i, p):
            if p not in pow_cache[i]:
                pow_cache[i][p] = lin[i] ** p
            return pow_cache[i][p]

        for e, c in self.terms.items():
            mono = Poly.constant(nw, c)
            for i, p in enumerate(e):
                if p:
                    mono = mono * power(i, p)
            out = out + mono
        return out

    def __repr__(self):
        items = sorted(self.terms.items())
        body = " + ".join(f"({c:.6g})*u^{e}" for e, c in items[:6])
        more = "" if len(items) <= 6 else f" + ... ({len(items)} terms)"
        return f"Poly[{self.nv}]({body}{more})"
