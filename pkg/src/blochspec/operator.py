"""Operator model: periodic differential expressions of order n with m x m coefficients.

The expression acting on vector functions y is

    l(y) = y^(n) + p1(x) * y^(n-1) + P_2(x) y^(n-2) + ... + P_n(x) y,

with period-1 coefficients given as finite Fourier series.  This module owns
the mean coupling matrix C = mean(P_2) and its bi-orthogonal eigensystem, the
first-order-term removal (substitution y = exp(-(1/n) int p1) * w), and the
classification that predicts uniformly bounded far-out spectral projections
(odd order with simple C eigenvalues, or even order with simple C eigenvalues
and Re of the p1 mean nonzero).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb
from typing import Mapping

import numpy as np
import scipy.linalg as sla

from .errors import ConfigInvalid, DegenerateMeanMatrix
from .fourier import TrigPoly


@dataclass(frozen=True)
class OperatorSpec:
    """Order-n expression with m x m trigonometric-polynomial coefficients.

    ``p1`` is the scalar coefficient of y^(n-1); ``P[nu]`` (nu = 2..n) is the
    matrix coefficient of y^(n-nu).  Missing orders are zero.  Periodicity is
    structural: a Fourier representation is 1-periodic by construction.
    """

    n: int
    m: int
    p1: TrigPoly = field(default_factory=TrigPoly.zero)
    P: Mapping[int, TrigPoly] = field(default_factory=dict)

    def __post_init__(self):
        if not (isinstance(self.n, int) and self.n >= 2):
            raise ConfigInvalid("n", "order must be an integer >= 2")
        if not (isinstance(self.m, int) and self.m >= 1):
            raise ConfigInvalid("m", "dimension must be an integer >= 1")
        if not self.p1.is_scalar:
            raise ConfigInvalid("p1", "first-order coefficient must be scalar")
        clean = {}
        for nu, poly in self.P.items():
            if not (2 <= nu <= self.n):
                raise ConfigInvalid(f"P.{nu}", f"order must lie in 2..{self.n}")
            if poly.is_zero:
                continue
            if poly.shape != (self.m, self.m):
                raise ConfigInvalid(f"P.{nu}",
                                    f"coefficients must be {self.m}x{self.m}")
            clean[nu] = poly
        object.__setattr__(self, "P", clean)

    # -- helpers -----------------------------------------------------------

    @property
    def q_max(self):
        """Largest coefficient bandwidth, hence the Galerkin coupling range."""
        width = self.p1.bandwidth
        for poly in self.P.values():
            width = max(width, poly.bandwidth)
        return width

    def coefficient(self, nu):
        """Matrix coefficient of y^(n-nu); includes the p1 term for nu=1."""
        if nu == 0:
            return TrigPoly.constant(np.eye(self.m))
        if nu == 1:
            return self.p1.times_identity(self.m)
        return self.P.get(nu, TrigPoly.zero((self.m, self.m)))

    # -- factories ---------------------------------------------------------

    @classmethod
    def free(cls, n, m):
        """y^(n) alone."""
        return cls(n=n, m=m)

    @classmethod
    def constant_coupling(cls, n, C):
        """y^(n) + C y^(n-2) with a constant matrix C."""
        C = np.atleast_2d(np.asarray(C, dtype=complex))
        return cls(n=n, m=C.shape[0], P={2: TrigPoly.constant(C)})

    # -- JSON wire format ---------------------------------------------------

    @classmethod
    def from_json_dict(cls, doc):
        """Parse {"n":…, "m":…, "p1":[[q,re,im],…], "P":{"2":[[q,mat],…],…}}.

        ``mat`` is an m x m array of [re, im] pairs.  Unknown fields are
        rejected so typos fail loudly.
        """
        if not isinstance(doc, dict):
            raise ConfigInvalid("", "operator document must be a JSON object")
        unknown = set(doc) - {"n", "m", "p1", "P"}
        if unknown:
            raise ConfigInvalid(sorted(unknown)[0], "unknown field")
        try:
            n = int(doc["n"])
            m = int(doc["m"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigInvalid("n/m", f"missing or non-integer: {exc}") from exc
        p1_entries = doc.get("p1", [])
        if not isinstance(p1_entries, list):
            raise ConfigInvalid("p1", "must be a list of [q, re, im]")
        p1_acc = {}
        for pos, entry in enumerate(p1_entries):
            try:
                q, re, im = entry
                p1_acc[int(q)] = p1_acc.get(int(q), 0) + complex(re, im)
            except (TypeError, ValueError) as exc:
                raise ConfigInvalid(f"p1[{pos}]", f"expected [q, re, im]: {exc}") from exc
        P_doc = doc.get("P", {})
        if not isinstance(P_doc, dict):
            raise ConfigInvalid("P", "must be an object keyed by order")
        P = {}
        for key, entries in P_doc.items():
            try:
                nu = int(key)
            except ValueError as exc:
                raise ConfigInvalid(f"P.{key}", "order key must be an integer") from exc
            if not isinstance(entries, list):
                raise ConfigInvalid(f"P.{key}", "must be a list of [q, matrix]")
            acc = {}
            for pos, entry in enumerate(entries):
                path = f"P.{key}[{pos}]"
                try:
                    q, mat = entry
                except (TypeError, ValueError) as exc:
                    raise ConfigInvalid(path, f"expected [q, matrix]: {exc}") from exc
                arr = np.asarray(mat, dtype=float)
                if arr.shape != (m, m, 2):
                    raise ConfigInvalid(
                        path, f"matrix must be {m}x{m} of [re, im] pairs, got {arr.shape}")
                acc[int(q)] = acc.get(int(q), 0) + (arr[..., 0] + 1j * arr[..., 1])
            P[nu] = TrigPoly(acc, shape=(m, m))
        return cls(n=n, m=m, p1=TrigPoly(p1_acc), P=P)

    def to_json_dict(self):
        p1 = [[q, float(c.real), float(c.imag)]
              for q, c in sorted(self.p1.coeffs.items())]
        P = {}
        for nu, poly in sorted(self.P.items()):
            entries = []
            for q, mat in sorted(poly.coeffs.items()):
                mat = np.asarray(mat)
                entries.append([q, np.stack([mat.real, mat.imag], axis=-1).tolist()])
            P[str(nu)] = entries
        return {"n": self.n, "m": self.m, "p1": p1, "P": P}


@dataclass(frozen=True)
class MeanMatrixData:
    """Mean matrix C with its right/left eigensystem.

    Columns ``v[:, j]`` are unit right eigenvectors for ``mu[j]``; columns
    ``u[:, j]`` are eigenvectors of C* for conj(mu[j]) scaled so that
    sum_i u_j[i] * conj(v_j[i]) = 1.  ``simple`` means all eigenvalue gaps
    exceed ``deg_tol``.
    """

    C: np.ndarray
    mu: np.ndarray
    v: np.ndarray
    u: np.ndarray
    simple: bool
    min_gap: float
    deg_tol: float


@dataclass(frozen=True)
class ReducedSpec:
    """Result of removing the first-order term.

    ``r`` is (1/n) * mean(p1).  ``spec`` has no p1 term and coefficients
    ``Ptilde[nu]``; in particular Ptilde[2] = q_fn * I + P[2].  Eigenvalues
    transport along the quasimomentum shift returned by :meth:`shift`:
    the original operator at real t and the reduced operator at shift(t)
    have identical Bloch spectra.
    """

    r: complex
    q_fn: TrigPoly
    spec: OperatorSpec

    @property
    def Ptilde(self):
        return self.spec.P

    def shift(self, t):
        """Quasimomentum of the reduced operator matching the original at t.

        Derivation from the substitution gives t - i*r (the Floquet
        multiplier picks up exp(n*r/n) = exp(r) across one period), which the
        constant-coefficient closed form confirms numerically.
        """
        return t - 1j * self.r


@dataclass(frozen=True)
class ConditionReport:
    """Which (if either) of the two spectrality conditions the operator meets."""

    condition1: bool
    condition2: bool
    asymptotically_spectral_expected: bool
    re_nr: float
    note: str = ""


def default_deg_tol(C):
    # scale-invariant gap test
    return 1e-8 * (1.0 + np.linalg.norm(np.atleast_2d(C), 2))


def compute_mean_matrix(spec, deg_tol=None, force=False):
    """Mean matrix C = mean(P_2) and its bi-orthogonal eigensystem.

    Raises :class:`DegenerateMeanMatrix` when eigenvalues of C are not simple
    (gap <= deg_tol), unless ``force`` is set, in which case the data is
    returned with ``simple=False`` and u left as the conjugate eigenbasis of
    the nearest diagonalizable interpretation.
    """
    m = spec.m
    C = np.atleast_2d(np.asarray(spec.coefficient(2).mean(), dtype=complex))
    if deg_tol is None:
        deg_tol = default_deg_tol(C)
    mu, vl, vr = sla.eig(C, left=True, right=True)
    order = np.lexsort((mu.imag, mu.real))
    mu, vl, vr = mu[order], vl[:, order], vr[:, order]
    vr = vr / np.linalg.norm(vr, axis=0, keepdims=True)

    if m == 1:
        min_gap = np.inf
    else:
        diffs = np.abs(mu[:, None] - mu[None, :]) + np.diag([np.inf] * m)
        min_gap = float(diffs.min())
    simple = bool(min_gap > deg_tol)
    if not simple and not force:
        raise DegenerateMeanMatrix(
            f"mean matrix eigenvalue gap {min_gap:.3e} <= deg_tol {deg_tol:.3e}")

    # u_j = eigenvector of C* for conj(mu_j), scaled so sum u_j conj(v_j) = 1
    u = np.empty_like(vr)
    for j in range(m):
        s = np.sum(vl[:, j] * np.conj(vr[:, j]))
        if abs(s) < 1e-300:
            raise DegenerateMeanMatrix(
                f"left/right eigenvectors of C orthogonal at j={j}")
        u[:, j] = vl[:, j] / s
    return MeanMatrixData(C=C, mu=mu, v=vr, u=u, simple=simple,
                          min_gap=min_gap, deg_tol=float(deg_tol))


def reduce_p1(spec):
    """Remove the y^(n-1) term by the substitution y = exp(-(1/n) int p1) w.

    The exponential prefactor has logarithmic derivative -p1/n, so every
    derivative of the prefactor is the prefactor times a trigonometric
    polynomial; the reduced coefficients therefore stay finite Fourier series
    and are computed exactly by the recursion below (no numerical
    differentiation of p1).
    """
    n, m = spec.n, spec.m
    r = complex(spec.p1.mean()) / n
    if spec.p1.is_zero:
        return ReducedSpec(r=0j, q_fn=TrigPoly.zero(), spec=spec)

    # b_i = exp(phi) * d^i/dx^i exp(-phi), phi' = p1/n:
    #   b_0 = 1,  b_{i+1} = b_i' - phi' * b_i
    phi_prime = (1.0 / n) * spec.p1
    b = [TrigPoly.constant(1.0)]
    for _ in range(n):
        b.append(b[-1].derivative() - phi_prime * b[-1])

    q_fn = comb(n, 2) * b[2] + comb(n - 1, 1) * (spec.p1 * b[1])

    Ptilde = {}
    for nu in range(2, n + 1):
        scalar_part = comb(n, nu) * b[nu] + comb(n - 1, nu - 1) * (spec.p1 * b[nu - 1])
        acc = scalar_part.times_identity(m)
        for j in range(2, nu + 1):
            Pj = spec.P.get(j)
            if Pj is None:
                continue
            acc = acc + comb(n - j, nu - j) * (b[nu - j] * Pj)
        if not acc.is_zero:
            Ptilde[nu] = acc

    reduced = OperatorSpec(n=n, m=m, P=Ptilde)
    return ReducedSpec(r=r, q_fn=q_fn, spec=reduced)


def classify_conditions(spec, mean, reduced):
    """Evaluate the two sufficient conditions for bounded far-out projections."""
    re_nr = float(np.real(spec.n * reduced.r))
    condition1 = (spec.n % 2 == 1) and mean.simple
    condition2 = (spec.n % 2 == 0) and mean.simple and abs(re_nr) > 0.0
    note = ""
    if spec.n % 2 == 0 and abs(re_nr) == 0.0:
        note = ("even order with purely imaginary p1 mean: far-out projections "
                "may be unbounded; this regime is outside the supported theory")
    elif not mean.simple:
        note = "mean matrix eigenvalues not simple; asymptotic machinery unsupported"
    return ConditionReport(condition1=condition1,
                           condition2=condition2,
                           asymptotically_spectral_expected=condition1 or condition2,
                           re_nr=re_nr,
                           note=note)
