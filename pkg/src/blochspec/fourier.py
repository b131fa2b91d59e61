"""Finite Fourier series (trigonometric polynomials) with scalar or matrix values.

A series is ``p(x) = sum_q c_q exp(2*pi*i*q*x)`` with finitely many nonzero
coefficients ``c_q``; coefficients are complex scalars (shape ``()``) or
``(m, m)`` matrices.  Sums, products and derivatives of such series stay
finite, which keeps the coefficient algebra of the operator model exact.
"""

from __future__ import annotations

import numpy as np

_TWO_PI_I = 2j * np.pi


class TrigPoly:
    """Immutable trigonometric polynomial keyed by integer frequency."""

    __slots__ = ("coeffs", "shape")

    def __init__(self, coeffs=None, shape=()):
        clean = {}
        for q, c in (coeffs or {}).items():
            arr = np.asarray(c, dtype=complex)
            if arr.shape != () and arr.ndim != 2:
                raise ValueError(f"coefficient for q={q} has shape {arr.shape}")
            if np.any(arr != 0):
                clean[int(q)] = arr
        if clean:
            shapes = {c.shape for c in clean.values()}
            if len(shapes) != 1:
                raise ValueError(f"inconsistent coefficient shapes {shapes}")
            shape = shapes.pop()
        self.coeffs = clean
        self.shape = shape

    # -- constructors ------------------------------------------------------

    @classmethod
    def zero(cls, shape=()):
        return cls({}, shape=shape)

    @classmethod
    def constant(cls, value):
        return cls({0: value})

    @classmethod
    def from_pairs(cls, pairs):
        """Build from an iterable of (q, value) pairs, summing duplicates."""
        acc = {}
        for q, v in pairs:
            arr = np.asarray(v, dtype=complex)
            acc[q] = acc.get(q, 0) + arr
        return cls(acc)

    # -- queries -----------------------------------------------------------

    @property
    def bandwidth(self):
        """Largest |q| with a nonzero coefficient."""
        return max((abs(q) for q in self.coeffs), default=0)

    @property
    def is_zero(self):
        return not self.coeffs

    @property
    def is_scalar(self):
        return self.shape == ()

    def coeff(self, q):
        c = self.coeffs.get(q)
        if c is None:
            return np.zeros(self.shape, dtype=complex) if self.shape else 0j
        return c

    def mean(self):
        """Zero-frequency coefficient, i.e. the integral over one period."""
        return self.coeff(0)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape + self.shape, dtype=complex)
        for q, c in self.coeffs.items():
            phase = np.exp(_TWO_PI_I * q * x)
            out += phase.reshape(x.shape + (1,) * len(self.shape)) * c
        return out

    def sup_norm_bound(self):
        """Sum of coefficient norms; an upper bound for max_x ||p(x)||."""
        if self.is_scalar:
            return float(sum(abs(c) for c in self.coeffs.values()))
        return float(sum(np.linalg.norm(c, 2) for c in self.coeffs.values()))

    # -- algebra -----------------------------------------------------------

    def __add__(self, other):
        if not isinstance(other, TrigPoly):
            return NotImplemented
        acc = {q: c.copy() for q, c in self.coeffs.items()}
        for q, c in other.coeffs.items():
            acc[q] = acc.get(q, 0) + c
        return TrigPoly(acc, shape=self.shape or other.shape)

    def __sub__(self, other):
        return self + (-1.0) * other

    def __rmul__(self, scalar):
        return TrigPoly({q: scalar * c for q, c in self.coeffs.items()},
                        shape=self.shape)

    def __mul__(self, other):
        """Pointwise product; at least one factor must be scalar-valued."""
        if not isinstance(other, TrigPoly):
            return TrigPoly({q: c * other for q, c in self.coeffs.items()},
                            shape=self.shape)
        if self.shape != () and other.shape != ():
            raise ValueError("matrix*matrix trig products are not needed here")
        acc = {}
        for qa, ca in self.coeffs.items():
            for qb, cb in other.coeffs.items():
                acc[qa + qb] = acc.get(qa + qb, 0) + ca * cb
        return TrigPoly(acc, shape=self.shape or other.shape)

    def derivative(self):
        return TrigPoly({q: _TWO_PI_I * q * c for q, c in self.coeffs.items()
                         if q != 0}, shape=self.shape)

    def times_identity(self, m):
        """Promote a scalar series to s(x)*I_m."""
        if not self.is_scalar:
            raise ValueError("times_identity needs a scalar series")
        eye = np.eye(m)
        return TrigPoly({q: c * eye for q, c in self.coeffs.items()},
                        shape=(m, m))

    def allclose(self, other, tol=1e-12):
        for q in set(self.coeffs) | set(other.coeffs):
            if not np.allclose(self.coeff(q), other.coeff(q),
                               rtol=0.0, atol=tol):
                return False
        return True

    def __repr__(self):
        qs = sorted(self.coeffs)
        return f"TrigPoly(shape={self.shape}, q={qs})"
