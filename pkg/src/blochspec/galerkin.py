"""Dense Fourier-Galerkin discretization of the one-cell Bloch operator.

The operator with boundary multiplier exp(i*t) acts invariantly on the span of
the exponentials e_j * exp(i*(2*pi*k + t)*x); truncating to |k| <= K yields a
dense non-Hermitian matrix whose entries are exact (the coefficients are
trigonometric polynomials, so no quadrature enters the assembly).  For real t
the basis is orthonormal in L2(0,1)^m and coefficient-space inner products
equal L2 inner products; complex t is supported so the first-order-term
reduction identity can be checked at shifted quasimomenta.

Inner-product convention throughout: (f, g) = integral of <f(x), g(x)> with
<a, b> = sum_i a_i conj(b_i)  (linear in the first slot).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.optimize import linear_sum_assignment

from .errors import (DegenerateMeanMatrix, DefectiveEigenvalueWarning,
                     EigensolverFailure, TruncationTooSmall)

ALPHA_FLOOR = 1e-12


def e_norm(t):
    """Normalization e(t): (e(t))^-2 = int_0^1 |exp(i t x)|^2 dx; 1 for real t."""
    b = -2.0 * np.imag(t)
    if abs(b) < 1e-14:
        return 1.0 + 0j
    return complex((np.expm1(b) / b) ** -0.5)


def l2_inner(f, g):
    """(f, g) on coefficient vectors: sum of f * conj(g)."""
    return complex(np.vdot(np.ravel(g), np.ravel(f)))


@dataclass(frozen=True)
class GalerkinMatrix:
    """Truncated matrix of the Bloch operator in the exponential basis."""

    t: complex
    K: int
    n: int
    m: int
    entries: np.ndarray

    @property
    def dim(self):
        return self.m * (2 * self.K + 1)

    def index(self, k, j):
        """Flat index of basis function e_j * exp(i(2 pi k + t) x); j is 0-based."""
        return (k + self.K) * self.m + j

    def k_of(self, idx):
        return idx // self.m - self.K

    def j_of(self, idx):
        return idx % self.m


@dataclass(eq=False)
class BlochEigenpair:
    """One eigenvalue with unit right/left eigenfunctions in coefficient form.

    ``psi`` and ``psi_star`` are unit-norm coefficient vectors of shape
    (2K+1, m); ``alpha = (psi, psi_star)`` and ``X = psi_star / conj(alpha)``
    is the bi-orthogonal partner, so (psi, X) = 1.  ``flagged`` marks pairs
    with |alpha| below the floor (degeneracy candidates); their X is None.
    """

    t: complex
    K: int
    m: int
    lam: complex
    psi: np.ndarray
    psi_star: np.ndarray
    alpha: complex
    X: np.ndarray | None
    e_norm: complex
    residual: float
    flagged: bool
    p: int | None = None
    kj: tuple[int, int] | None = None

    def k_values(self):
        return np.arange(-self.K, self.K + 1)

    def evaluate(self, x):
        """Right eigenfunction on arbitrary real x (quasi-periodic synthesis)."""
        return synthesize(self.psi, self.t, self.K, x)

    def evaluate_X(self, x):
        if self.X is None:
            return None
        return synthesize(self.X, self.t, self.K, x)


def synthesize(coeffs, t, K, x):
    """Sum_k c_k exp(i(2 pi k + t) x); valid for all real x, and automatically
    satisfies f(x+1) = exp(i t) f(x)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    k = np.arange(-K, K + 1)
    phases = np.exp(1j * np.outer(x, 2 * np.pi * k + t))
    return phases @ np.asarray(coeffs)


def evaluate_eigenfunction(pair, x_grid):
    """Values of the right eigenfunction on x_grid, extended over the line."""
    return pair.evaluate(x_grid)


def assemble_matrix(spec, t, K):
    """Dense Galerkin matrix at quasimomentum t with truncation |k| <= K.

    Entry coupling column (k', i) to row (k, j):
        (i(2 pi k' + t))^n            for k=k', i=j   (leading derivative)
      + (i(2 pi k' + t))^(n-1) p1_{k-k'} delta_ij
      + sum_nu (i(2 pi k' + t))^(n-nu) [P_{nu, k-k'}]_{j i}
    """
    if K < spec.q_max:
        raise TruncationTooSmall(f"K={K} < coefficient bandwidth {spec.q_max}")
    n, m = spec.n, spec.m
    nk = 2 * K + 1
    s = 1j * (2 * np.pi * np.arange(-K, K + 1) + t)   # per-column symbol
    A = np.zeros((nk, m, nk, m), dtype=complex)

    idx = np.arange(nk)
    A[idx, :, idx, :] = (s ** n)[:, None, None] * np.eye(m)

    def add_band(q, weight_per_col, block):
        # rows k = k' + q
        cols = np.arange(max(-K, -K - q), min(K, K - q) + 1) + K
        rows = cols + q
        A[rows, :, cols, :] += weight_per_col[cols][:, None, None] * block

    if not spec.p1.is_zero:
        w = s ** (n - 1)
        for q, c in spec.p1.coeffs.items():
            add_band(q, w, complex(c) * np.eye(m))
    for nu, poly in spec.P.items():
        w = s ** (n - nu)
        for q, block in poly.coeffs.items():
            add_band(q, w, np.asarray(block))

    return GalerkinMatrix(t=t, K=K, n=n, m=m, entries=A.reshape(nk * m, nk * m))


def _canonical_phase(vecs):
    """Rotate each column so its largest-magnitude entry is real positive."""
    idx = np.argmax(np.abs(vecs), axis=0)
    lead = vecs[idx, np.arange(vecs.shape[1])]
    phase = np.where(np.abs(lead) > 0, lead / np.abs(lead), 1.0)
    return vecs / phase[None, :]


def eig_pairs(matrix, match_tol_rel=1e-6):
    """Right/left eigen-decomposition with left vectors re-matched to rights.

    LAPACK aligns left and right vectors index-by-index; within clusters of
    eigenvalues closer than match_tol the assignment is re-derived by
    maximizing |<left, right>| so near-degenerate pairings are deterministic.
    Returns (w, vr, vl) with unit columns.
    """
    try:
        w, vl, vr = sla.eig(matrix, left=True, right=True)
    except sla.LinAlgError as exc:
        raise EigensolverFailure(str(exc)) from exc
    vr = vr / np.linalg.norm(vr, axis=0, keepdims=True)
    vl = vl / np.linalg.norm(vl, axis=0, keepdims=True)
    vr = _canonical_phase(vr)
    vl = _canonical_phase(vl)

    scale = max(1.0, float(np.max(np.abs(w))))
    match_tol = match_tol_rel * scale
    order = np.lexsort((np.angle(w), np.abs(w)))
    w, vr, vl = w[order], vr[:, order], vl[:, order]

    # re-pair lefts within eigenvalue clusters
    start = 0
    nw = len(w)
    while start < nw:
        end = start + 1
        while end < nw and abs(w[end] - w[end - 1]) <= match_tol:
            end += 1
        if end - start > 1:
            block = slice(start, end)
            overlap = np.abs(vl[:, block].conj().T @ vr[:, block])
            rows, cols = linear_sum_assignment(-overlap)
            # left vector rows[i] belongs at right position cols[i]
            order = np.empty(end - start, dtype=int)
            order[cols] = rows
            vl[:, block] = vl[:, block][:, order]
        start = end
    return w, vr, vl


def compute_alpha(psi, psi_star=None):
    """alpha = (psi, psi_star) for unit-normalized coefficient vectors."""
    if psi_star is None:  # accept a pair
        pair = psi
        return l2_inner(pair.psi, pair.psi_star)
    return l2_inner(psi, psi_star)


def solve_eigen(spec, t, K, *, alpha_floor=ALPHA_FLOOR, residual_check=True):
    """All m(2K+1) eigenpairs at quasimomentum t, sorted by |lambda| ascending.

    Pairs whose left/right overlap is below ``alpha_floor`` are flagged rather
    than dropped; they are exactly the degeneracy candidates downstream code
    must treat by huddling.
    """
    gm = assemble_matrix(spec, t, K)
    w, vr, vl = eig_pairs(gm.entries)
    en = e_norm(t)

    if residual_check:
        res = np.linalg.norm(gm.entries @ vr - vr * w[None, :], axis=0)
    else:
        res = np.zeros(len(w))

    pairs = []
    n_flagged = 0
    nk = 2 * K + 1
    for i in range(len(w)):
        psi = vr[:, i].reshape(nk, spec.m)
        psi_star = vl[:, i].reshape(nk, spec.m)
        alpha = l2_inner(psi, psi_star)
        flagged = abs(alpha) < alpha_floor
        X = None if flagged else psi_star / np.conj(alpha)
        n_flagged += flagged
        pairs.append(BlochEigenpair(
            t=t, K=K, m=spec.m, lam=complex(w[i]), psi=psi, psi_star=psi_star,
            alpha=alpha, X=X, e_norm=en, residual=float(res[i]), flagged=flagged))
    if n_flagged:
        warnings.warn(
            f"{n_flagged} eigenpair(s) at t={t} have |alpha| < {alpha_floor:g}",
            DefectiveEigenvalueWarning, stacklevel=2)
    return pairs


def reference_eigenpair(spec, k, j, t, which="free", K=None, mean=None):
    """Exact eigenpair of the unperturbed operators.

    which="free":      lambda = (i(2 pi k + t))^n, psi = e(t) e_j exp(...)
    which="constantC": lambda = (i(2 pi k + t))^n + mu_j (i(2 pi k + t))^(n-2),
                       psi = e(t) v_j exp(...), requires simple C eigenvalues.
    ``j`` is 0-based.
    """
    if K is None:
        K = abs(k) + spec.q_max + 2
    if K < abs(k):
        raise ValueError(f"K={K} cannot hold the k={k} mode")
    s = 1j * (2 * np.pi * k + t)
    en = e_norm(t)
    nk = 2 * K + 1
    psi = np.zeros((nk, spec.m), dtype=complex)
    psi_star = np.zeros((nk, spec.m), dtype=complex)

    if which == "free":
        lam = s ** spec.n
        vj = np.zeros(spec.m)
        vj[j] = 1.0
        uj = vj.copy()
    elif which == "constantC":
        from .operator import compute_mean_matrix
        if mean is None:
            mean = compute_mean_matrix(spec)   # raises DegenerateMeanMatrix
        if not mean.simple:
            raise DegenerateMeanMatrix("constantC reference needs simple C eigenvalues")
        lam = s ** spec.n + mean.mu[j] * s ** (spec.n - 2)
        vj = mean.v[:, j]
        uj = mean.u[:, j]
    else:
        raise ValueError(f"unknown reference kind {which!r}")

    psi[k + K, :] = vj
    nrm = np.linalg.norm(psi)
    psi /= nrm
    psi_star[k + K, :] = uj / np.linalg.norm(uj)
    alpha = l2_inner(psi, psi_star)
    X = psi_star / np.conj(alpha)
    # e(t) scales the analytic eigenfunction; coefficient vectors stay unit norm.
    return BlochEigenpair(t=t, K=K, m=spec.m, lam=complex(lam), psi=psi,
                          psi_star=psi_star, alpha=alpha, X=X, e_norm=en,
                          residual=0.0, flagged=False, kj=(k, j + 1))


def match_eigenvalues(values, references, rtol):
    """Pair each reference with the closest value; return max relative error."""
    values = np.asarray(values)
    worst = 0.0
    for ref in np.asarray(references):
        err = np.min(np.abs(values - ref)) / max(1.0, abs(ref))
        worst = max(worst, float(err))
    return worst, worst <= rtol
