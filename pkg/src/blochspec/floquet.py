"""Floquet oracle: monodromy matrix, characteristic determinant, degeneracy scan.

This is the verification path independent of the Galerkin engine.  The
monodromy matrix M(lambda) is the value at x=1 of the fundamental matrix of
the companion first-order system; lambda belongs to the Bloch spectrum at
quasimomentum t exactly when exp(i t) is an eigenvalue (Floquet multiplier)
of M(lambda).

Conditioning note.  For order n >= 3 the companion system has solutions
growing like exp(|lambda|^(1/n) * x), so a directly integrated M carries
absolute errors of order eps*||M|| that destroy the unimodular multipliers
once ||M|| >~ 1e12.  The stable path used here splits [0, 1] into segments
short enough that each transfer matrix stays moderate and embeds the ordered
product in a block-cyclic matrix whose eigenvalues are N-th roots of the
multipliers; the multipliers are then recovered with near machine accuracy at
any desk-scale |lambda|.  Consequently the characteristic determinant is
evaluated in the well-scaled form

    char_det = prod_i (exp(i t) - z_i) / max(1, |z_i|),

which has the same zeros in (lambda, t) as det(exp(i t) I - M) but does not
inherit the exp(nm |lambda|^(1/n)) magnitude of the raw determinant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .errors import IntegratorStall

_SEGMENT_LOG_CAP = 5.0   # max allowed exp-growth exponent per segment


# ---------------------------------------------------------------------------
# companion system and monodromy
# ---------------------------------------------------------------------------

def growth_rate_bound(spec, lam):
    """Upper bound for max Re of the characteristic roots of the symbol.

    Classic root bound |w| <= 2 max_nu |a_nu|^(1/nu) for
    w^n + a_1 w^(n-1) + ... + a_n = 0, with sup-norm coefficient bounds and
    lambda folded into a_n.
    """
    n = spec.n
    best = 0.0
    a1 = spec.p1.sup_norm_bound()
    if a1 > 0:
        best = max(best, a1)
    for nu in range(2, n + 1):
        a = spec.coefficient(nu).sup_norm_bound() if nu in spec.P else 0.0
        if nu == n:
            a += abs(lam)
        if a > 0:
            best = max(best, a ** (1.0 / nu))
    return 2.0 * best


def _companion_rhs(spec, lam):
    n, m = spec.n, spec.m
    nm = n * m
    p1 = spec.p1
    P_items = [(nu, poly) for nu, poly in spec.P.items()]
    lam_I = lam * np.eye(m)

    def rhs(x, u):
        U = u.reshape(n, m, nm)
        dU = np.empty_like(U)
        dU[:-1] = U[1:]
        last = lam_I @ U[0]
        for nu, poly in P_items:
            last -= np.asarray(poly(x)) @ U[n - nu]
        if not p1.is_zero:
            last -= complex(p1(x)) * U[n - 1]
        dU[-1] = last
        return dU.ravel()

    return rhs


def _integrate_transfer(spec, lam, x0, x1, tol):
    nm = spec.n * spec.m
    rhs = _companion_rhs(spec, lam)
    sol = solve_ivp(rhs, (x0, x1), np.eye(nm, dtype=complex).ravel(),
                    method="DOP853", rtol=tol, atol=tol)
    if not sol.success or not np.all(np.isfinite(sol.y[:, -1])):
        raise IntegratorStall(
            f"integrator failed on [{x0}, {x1}] at lambda={lam}: {sol.message}")
    return sol.y[:, -1].reshape(nm, nm)


def _integrate_transfer_with_derivative(spec, lam, x0, x1, tol):
    """Transfer matrix and its lambda-derivative from the variational system."""
    n, m = spec.n, spec.m
    nm = n * m
    rhs = _companion_rhs(spec, lam)

    def rhs_aug(x, u):
        U = u[:nm * nm]
        V = u[nm * nm:]
        dU = rhs(x, U)
        dV = rhs(x, V).reshape(n, m, nm)
        # d/dlambda of the companion matrix adds +I_m at the (n-1, 0) block:
        Ub = U.reshape(n, m, nm)
        dV[-1] += Ub[0]
        # rhs() already applied lam to V's top block; the extra term above is
        # the only lambda-derivative contribution.
        return np.concatenate([dU, dV.ravel()])

    u0 = np.concatenate([np.eye(nm, dtype=complex).ravel(),
                         np.zeros(nm * nm, dtype=complex)])
    sol = solve_ivp(rhs_aug, (x0, x1), u0, method="DOP853", rtol=tol, atol=tol)
    if not sol.success or not np.all(np.isfinite(sol.y[:, -1])):
        raise IntegratorStall(
            f"variational integrator failed on [{x0}, {x1}] at lambda={lam}")
    y = sol.y[:, -1]
    return y[:nm * nm].reshape(nm, nm), y[nm * nm:].reshape(nm, nm)


@dataclass(frozen=True)
class MonodromyResult:
    """Fundamental matrix at x=1: column blocks are the canonical solutions
    Y_j with Y_j^(k)(0) = delta_{k, j-1} I_m, rows their derivatives at 1."""

    lam: complex
    M: np.ndarray
    integrator_tol: float
    est_error: float


def monodromy(spec, lam, tol=1e-10, estimate_error=False):
    """Directly integrated monodromy matrix M(lambda) = U(1), U(0) = I.

    Fine at moderate |lambda|; for eigenvalue work at large |lambda| use
    :func:`floquet_multipliers`, which avoids the exponential dichotomy.
    """
    if not (1e-13 <= tol <= 1e-6):
        raise ValueError("tol must lie in [1e-13, 1e-6]")
    M = _integrate_transfer(spec, lam, 0.0, 1.0, tol)
    if estimate_error:
        M2 = _integrate_transfer(spec, lam, 0.0, 1.0, tol * 100)
        est = float(np.linalg.norm(M - M2) / max(1.0, np.linalg.norm(M)))
    else:
        est = 50.0 * tol   # controller heuristic; exact estimate on request
    return MonodromyResult(lam=lam, M=M, integrator_tol=tol, est_error=est)


# ---------------------------------------------------------------------------
# stable Floquet multipliers via segmented cyclic embedding
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MultiplierData:
    """Floquet multipliers of M(lambda) with optional lambda-derivatives."""

    lam: complex
    z: np.ndarray                  # (nm,) multipliers
    dz: np.ndarray | None          # (nm,) d z / d lambda, or None
    n_segments: int
    cluster_spread: float          # worst intra-cluster spread (diagnostic)


def _segment_count(spec, lam):
    rho = growth_rate_bound(spec, lam)
    return max(1, int(np.ceil(rho / _SEGMENT_LOG_CAP)))


def _cluster_roots(z_all, n_groups):
    """Group the N copies of each multiplier produced by the cyclic embedding.

    Copies of one multiplier agree to roughly N*eps relative, while distinct
    multipliers are (generically) much further apart, so single-linkage
    clustering with a growing tolerance recovers groups whose sizes are
    multiples of N; a merged group of size q*N stands for q coincident
    multipliers and contributes q copies of its mean.

    Returns (centers, spread, groups): groups[g] lists the z_all indices
    behind centers[g] (replicated for coincident multipliers).
    """
    n = len(z_all)
    per = n // n_groups
    scale = np.maximum(1.0, np.abs(z_all))
    pair_scale = np.maximum(scale[:, None], scale[None, :])
    dist = np.abs(z_all[:, None] - z_all[None, :]) / pair_scale

    tol = 1e-10
    while True:
        parent = list(range(n))

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for i in range(n):
            for j in range(i + 1, n):
                if dist[i, j] < tol:
                    ri, rj = find(i), find(j)
                    if ri != rj:
                        parent[ri] = rj
        comps = {}
        for i in range(n):
            comps.setdefault(find(i), []).append(i)
        if all(len(ix) % per == 0 for ix in comps.values()) or tol >= 1e-3:
            break
        tol *= 10

    centers, groups = [], []
    spread = 0.0
    ordered = sorted(comps.values(),
                     key=lambda ix: (np.mean(z_all[ix]).real,
                                     np.mean(z_all[ix]).imag))
    for ix in ordered:
        mean = complex(np.mean(z_all[ix]))
        copies = max(1, int(round(len(ix) / per)))
        spread = max(spread, float(np.max(np.abs(z_all[ix] - mean))
                                   / max(1.0, abs(mean))))
        for _ in range(copies):
            centers.append(mean)
            groups.append(list(ix))
    while len(centers) < n_groups:   # tolerance cap edge case
        centers.append(centers[-1])
        groups.append(groups[-1])
    return np.array(centers[:n_groups]), spread, groups[:n_groups]


def floquet_multipliers(spec, lam, tol=1e-11, derivatives=False):
    """All nm Floquet multipliers of M(lambda), stably at large |lambda|.

    [0,1] is split into N segments with bounded per-segment growth; the
    eigenvalues w of the block-cyclic matrix of segment transfers satisfy
    w^N = multiplier, so |w| stays moderate and the unimodular multipliers
    survive in double precision.  With ``derivatives`` the segment transfers
    are integrated jointly with their variational equations and
    d z / d lambda is obtained by first-order eigenvalue perturbation.
    """
    nm = spec.n * spec.m
    N = _segment_count(spec, lam)
    xs = np.linspace(0.0, 1.0, N + 1)

    if derivatives:
        seg = [_integrate_transfer_with_derivative(spec, lam, xs[i], xs[i + 1], tol)
               for i in range(N)]
        mats = [s[0] for s in seg]
        dmats = [s[1] for s in seg]
    else:
        mats = [_integrate_transfer(spec, lam, xs[i], xs[i + 1], tol)
                for i in range(N)]
        dmats = None

    if N == 1 and not derivatives:
        z = np.linalg.eigvals(mats[0])
        order = np.lexsort((z.imag, z.real))
        return MultiplierData(lam=lam, z=z[order], dz=None, n_segments=1,
                              cluster_spread=0.0)

    d = nm
    C = np.zeros((N * d, N * d), dtype=complex)
    for i, Mi in enumerate(mats):
        j = (i - 1) % N
        C[i * d:(i + 1) * d, j * d:(j + 1) * d] = Mi

    if not derivatives:
        w = np.linalg.eigvals(C)
        z_all = w ** N
        z, spread, _ = _cluster_roots(z_all, nm)
        return MultiplierData(lam=lam, z=z, dz=None, n_segments=N,
                              cluster_spread=spread)

    import scipy.linalg as sla
    w, VL, VR = sla.eig(C, left=True, right=True)
    z_all = w ** N
    # dC/dlam applied in the eigenvalue perturbation formula,
    # dw = <l, dC r> / <l, r>; exploit the block-cyclic sparsity.
    dz_all = np.empty_like(z_all)
    for idx in range(len(w)):
        r = VR[:, idx].reshape(N, d)
        l = VL[:, idx].reshape(N, d)
        num = 0j
        for i in range(N):
            j = (i - 1) % N
            num += np.vdot(l[i], dmats[i] @ r[j])
        den = np.vdot(VL[:, idx], VR[:, idx])
        if abs(den) < 1e-14:
            dz_all[idx] = np.inf   # defective direction; callers guard
        else:
            dz_all[idx] = N * w[idx] ** (N - 1) * (num / den)
    z, spread, groups = _cluster_roots(z_all, nm)
    dz = np.empty(nm, dtype=complex)
    for g, members in enumerate(groups):
        finite = np.array([dz_all[i] for i in members
                           if np.isfinite(dz_all[i])])
        if len(finite) == 0:
            dz[g] = np.inf
        else:
            med = complex(np.median(finite.real), np.median(finite.imag))
            dz[g] = finite[np.argmin(np.abs(finite - med))]
    return MultiplierData(lam=lam, z=z, dz=dz, n_segments=N,
                          cluster_spread=spread)


# ---------------------------------------------------------------------------
# characteristic determinant and its e^{it}-polynomial coefficients
# ---------------------------------------------------------------------------

def _scaled_poly_from_roots(roots):
    """Coefficients (ascending) of prod (z - z_i)/max(1, |z_i|).

    Incremental convolution with per-factor rescaling keeps every
    intermediate bounded by 2^deg, immune to overflow at large multipliers.
    """
    c = np.array([1.0 + 0j])
    log_scale = 0.0
    for z in roots:
        s = max(1.0, abs(z))
        c = np.convolve(c, np.array([-z, 1.0 + 0j])) / s
        log_scale += np.log(s)
    return c, log_scale


def char_det(spec, lam, t, tol=1e-11, multipliers=None):
    """Well-scaled characteristic determinant at (lambda, t).

    Equal to det(exp(it) I - M(lambda)) / prod_i max(1, |z_i|): same zeros,
    monic normalization in exp(it), and magnitude O(2^nm) regardless of
    |lambda|.  For unimodular-multiplier problems (e.g. order 2 at real
    spectrum) the scale factor is 1 and this is the raw monic determinant.
    """
    data = multipliers or floquet_multipliers(spec, lam, tol=tol)
    zt = np.exp(1j * t)
    val = 1.0 + 0j
    for z in data.z:
        val *= (zt - z) / max(1.0, abs(z))
    return val


def char_det_raw(spec, lam, t, tol=1e-10):
    """det(exp(it) I - M(lambda)) from the directly integrated monodromy.

    Only trustworthy at moderate |lambda|; kept for consistency checks of the
    polynomial coefficients against a plain determinant.
    """
    M = monodromy(spec, lam, tol=tol).M
    nm = M.shape[0]
    return complex(np.linalg.det(np.exp(1j * t) * np.eye(nm) - M))


@dataclass(frozen=True)
class CharPoly:
    """det(z I - M(lambda)) as a polynomial in z = exp(i t).

    ``coeffs[j]`` multiplies z^j (ascending, coeffs[nm] = 1: the exp(i nm t)
    coefficient is one).  ``scaled_coeffs`` are the same divided by
    prod max(1, |z_i|) (bounded entries, used by the resultant machinery).
    The constant term equals (-1)^nm det M; for operators without a
    first-order term det M = 1, so its magnitude is 1.
    """

    lam: complex
    coeffs: np.ndarray
    scaled_coeffs: np.ndarray
    log_scale: float
    multipliers: np.ndarray

    @property
    def degree(self):
        return len(self.coeffs) - 1

    def eval_at(self, t):
        z = np.exp(1j * t)
        return complex(np.polyval(self.coeffs[::-1], z))


def char_poly_coeffs(spec, lam, tol=1e-11, multipliers=None):
    """Coefficients of the multiplier polynomial via its root product form."""
    data = multipliers or floquet_multipliers(spec, lam, tol=tol)
    scaled, log_scale = _scaled_poly_from_roots(data.z)
    if log_scale < 600.0:   # raw coefficients representable
        coeffs = scaled * np.exp(log_scale)
    else:
        coeffs = np.full_like(scaled, np.nan)
    return CharPoly(lam=lam, coeffs=coeffs, scaled_coeffs=scaled,
                    log_scale=log_scale, multipliers=data.z)


# ---------------------------------------------------------------------------
# resultant scan for multiple eigenvalues
# ---------------------------------------------------------------------------

def _sylvester_matrix(p, q):
    p = np.asarray(p, dtype=complex)
    q = np.asarray(q, dtype=complex)
    dp, dq = len(p) - 1, len(q) - 1
    size = dp + dq
    S = np.zeros((size, size), dtype=complex)
    for i in range(dq):
        S[i, i:i + dp + 1] = p[::-1]
    for i in range(dp):
        S[dq + i, i:i + dq + 1] = q[::-1]
    return S


def sylvester_resultant(p, q):
    """Resultant of two polynomials given ascending coefficients."""
    p = np.trim_zeros(np.asarray(p, dtype=complex), "b")
    q = np.trim_zeros(np.asarray(q, dtype=complex), "b")
    dp, dq = len(p) - 1, len(q) - 1
    if dp < 1 or dq < 1:
        if dq == 0 and len(q):
            return q[0] ** max(dp, 0)
        if dp == 0 and len(p):
            return p[0] ** max(dq, 0)
        return 0j
    return complex(np.linalg.det(_sylvester_matrix(p, q)))


def sylvester_log_resultant(p, q):
    """log10 |Res(p, q)|; determinant in log form to dodge under/overflow."""
    p = np.asarray(p, dtype=complex)
    q = np.asarray(q, dtype=complex)
    if len(p) < 2 or len(q) < 2:
        r = sylvester_resultant(p, q)
        return np.log10(abs(r)) if r != 0 else -np.inf
    sign, logdet = np.linalg.slogdet(_sylvester_matrix(p, q))
    if sign == 0:
        return -np.inf
    return float(logdet / np.log(10.0))


def _char_coeffs_with_derivative(spec, lam, tol, h_rel=1e-6):
    """Scaled coefficients of det(zI - M(lambda)) and their lambda-derivative.

    The derivative comes from central differences of the stably computed
    coefficient vectors (rebased to a common scale), which stays accurate at
    multiplier branch points where the individual roots z_i(lambda) are not
    differentiable.
    """
    h = h_rel * (1.0 + abs(lam))
    d0 = floquet_multipliers(spec, lam, tol=tol)
    c0, ls0 = _scaled_poly_from_roots(d0.z)
    dp = floquet_multipliers(spec, lam + h, tol=tol)
    cp, lsp = _scaled_poly_from_roots(dp.z)
    dm = floquet_multipliers(spec, lam - h, tol=tol)
    cm, lsm = _scaled_poly_from_roots(dm.z)
    q = (cp * np.exp(lsp - ls0) - cm * np.exp(lsm - ls0)) / (2 * h)
    # leading coefficient of the rebased polynomials is identical, so the
    # derivative has degree <= nm - 1 structurally
    return d0, c0, q[:-1]


def _resultant_value(spec, lam, tol):
    """log10 |R(lambda)| for R the resultant (in z = exp(it)) of the scaled
    characteristic polynomial and its lambda-derivative."""
    data, c0, q = _char_coeffs_with_derivative(spec, lam, tol)
    return sylvester_log_resultant(c0, q), data


def _deriv_at_multiplier(q, c0, z, lam):
    """Dimensionless |d/dlambda det(zI-M)| at a near-unimodular multiplier,
    normalized by the characteristic-coefficient scale over the eigenvalue
    scale (the derivative polynomial itself may vanish identically at the
    degeneracy, so it cannot serve as its own reference)."""
    scale = float(np.sum(np.abs(c0))) + 1e-300
    return abs(np.polyval(q[::-1], z)) * (1.0 + abs(lam)) / scale


def _multiplicity_metric(spec, lam, tol, z_window=1e-3):
    """min over near-unimodular multipliers z of the normalized
    |d/dlambda det(zI-M)| at z.

    Zero exactly when lambda is a multiple eigenvalue at a real quasimomentum
    (a double lambda-root of the determinant on the unit circle); in
    particular a plain multiplier collision whose branch-point slopes blow up
    does NOT register -- such points are simple eigenvalues.
    """
    data, c0, q = _char_coeffs_with_derivative(spec, lam, tol)
    best, z_best = np.inf, None
    for z in data.z:
        if abs(abs(z) - 1.0) < z_window:
            val = _deriv_at_multiplier(q, c0, z, lam)
            if val < best:
                best, z_best = val, z
    return best, z_best, data


@dataclass(frozen=True)
class MultipleEigenvalue:
    """One multiple Bloch eigenvalue with its quasimomentum fiber."""

    a: complex
    A: tuple                   # all real t in (-pi, pi] with det = 0 at a
    degenerate_t: tuple        # subset where the multiplicity occurs
    mechanism: str             # "collision" (z_i = z_l) or "turning" (dz_i = 0)
    residual: float            # final |scaled char det| at (a, t) over A


@dataclass(frozen=True)
class DegeneracyCatalog:
    entries: tuple
    dropped: tuple             # (candidate lambda, reason) pairs
    region: tuple

    @property
    def a_values(self):
        return [e.a for e in self.entries]

    @property
    def A_union(self):
        out = []
        for e in self.entries:
            out.extend(e.A)
        return sorted(set(out))


def _wrap_angle(t):
    t = (t + np.pi) % (2 * np.pi) - np.pi
    return np.pi if t <= -np.pi + 1e-12 else t


def _unit_circle_t(z, unit_circle_tol):
    """Quasimomenta of near-unimodular multipliers, deduplicated and sorted."""
    ts = []
    for zi in z:
        if abs(abs(zi) - 1.0) < unit_circle_tol:
            ts.append(_wrap_angle(float(np.angle(zi))))
    ts.sort()
    out = []
    for t in ts:
        if not out or abs(t - out[-1]) > 1e-8:
            out.append(t)
    return out


def _collision_metric(z):
    nm = len(z)
    best, pair = np.inf, None
    for i in range(nm):
        for l in range(i + 1, nm):
            d = abs(z[i] - z[l]) / max(1.0, abs(z[i]), abs(z[l]))
            if d < best:
                best, pair = d, (i, l)
    return best, pair


def _turning_metric(z, dz, lam):
    best, idx = np.inf, None
    for i, (zi, dzi) in enumerate(zip(z, dz)):
        if not np.isfinite(dzi):
            continue
        d = abs(dzi) * (1.0 + abs(lam)) / max(1.0, abs(zi))
        if d < best:
            best, idx = d, i
    return best, idx


def _newton_polish(spec, lam0, tol, mechanism, steps=30):
    """Newton iteration on the analytic degeneracy-mechanism function.

    Collision mechanism: (z_i - z_l)^2 is a symmetric function of the branch
    pair, analytic through the square-root branch point.  Turning mechanism:
    dz_i/dlambda is analytic near a simple multiplier.  Derivatives by
    central differences; a double zero of the collision function (the generic
    case) still converges linearly, halving the distance per step.
    """
    def f(lam):
        d = floquet_multipliers(spec, lam, tol=tol,
                                derivatives=(mechanism == "turning"))
        if mechanism == "collision":
            _, pr = _collision_metric(d.z)
            v = (d.z[pr[0]] - d.z[pr[1]]) ** 2 / max(1.0, abs(d.z[pr[0]])) ** 2
            return v, d
        _, ix = _turning_metric(d.z, d.dz, lam)
        if ix is None:
            return np.inf, d
        return d.dz[ix] / max(1.0, abs(d.z[ix])), d

    lam = lam0
    val, data = f(lam)
    for _ in range(steps):
        if not np.isfinite(val):
            break
        h = 1e-7 * (1.0 + abs(lam))
        fp, _ = f(lam + h)
        fm, _ = f(lam - h)
        dfd = (fp - fm) / (2 * h)
        if dfd == 0 or not np.isfinite(dfd):
            break
        step = val / dfd
        if not np.isfinite(step):
            break
        lam_new = lam - step
        val_new, data_new = f(lam_new)
        if abs(val_new) >= abs(val):
            break
        lam, val, data = lam_new, val_new, data_new
        if abs(step) < 1e-13 * (1.0 + abs(lam)):
            break
    return lam, data


def _polish_candidate(spec, lam0, tol, accept_tol):
    """Polish with the collision mechanism first (the generic degeneracy),
    falling back to the turning mechanism; acceptance is decided by the
    multiplicity metric, not by the mechanism residual (a multiplier
    collision alone is not a multiple eigenvalue)."""
    best = None
    for mechanism in ("collision", "turning"):
        lam, _ = _newton_polish(spec, lam0, tol, mechanism)
        metric, z_at, data = _multiplicity_metric(spec, lam, tol)
        if best is None or metric < best[3]:
            best = (lam, data, mechanism, metric, z_at)
        if metric < accept_tol:
            break
    return best


def resultant_scan(spec, region, grid=(24, 24), tol=1e-11, refine_tol=1e-9,
                   unit_circle_tol=1e-6, accept_metric=1e-3):
    """Locate multiple Bloch eigenvalues in a rectangle of the lambda plane.

    The resultant (in z = exp(it)) of the multiplier polynomial and its
    lambda-derivative is evaluated on the grid via a Sylvester determinant of
    scale-normalized coefficients; local minima of log|R| seed a zoom, and
    each candidate is polished by Newton iteration on the analytic degeneracy
    mechanism.  For each accepted multiple eigenvalue a the fiber
    A = {t real : a is an eigenvalue at t} comes from the unimodular
    multipliers of M(a).
    """
    re_lo, re_hi, im_lo, im_hi = region
    nr, ni = grid
    res = np.linspace(re_lo, re_hi, nr)
    ims = np.linspace(im_lo, im_hi, ni)
    logR = np.full((nr, ni), np.nan)
    for i, x in enumerate(res):
        for j, y in enumerate(ims):
            logR[i, j], _ = _resultant_value(spec, complex(x, y), tol)

    # local minima (8-neighborhood, boundary included)
    candidates = []
    for i in range(nr):
        for j in range(ni):
            v = logR[i, j]
            if not np.isfinite(v) and v != -np.inf:
                continue
            neigh = logR[max(0, i - 1):i + 2, max(0, j - 1):j + 2]
            if v <= np.nanmin(neigh):
                candidates.append(complex(res[i], ims[j]))

    dre = (re_hi - re_lo) / max(nr - 1, 1)
    dim = (im_hi - im_lo) / max(ni - 1, 1)

    entries, dropped, seen = [], [], []
    for cand in candidates:
        lam = cand
        # zoom twice on a local 5x5 before Newton
        span_r, span_i = dre, dim
        for _ in range(2):
            xs = lam.real + np.linspace(-span_r, span_r, 5)
            ys = lam.imag + np.linspace(-span_i, span_i, 5)
            vals = np.array([[_resultant_value(spec, complex(x, y), tol)[0]
                              for y in ys] for x in xs])
            i0, j0 = np.unravel_index(np.nanargmin(vals), vals.shape)
            lam = complex(xs[i0], ys[j0])
            span_r /= 4
            span_i /= 4
        lam, data, mechanism, metric, z_at = _polish_candidate(
            spec, lam, tol, accept_metric)
        if metric > accept_metric:
            dropped.append((cand, f"multiplicity metric {metric:.2e} above "
                                  f"{accept_metric:g}"))
            continue
        if not (re_lo - dre <= lam.real <= re_hi + dre
                and im_lo - dim <= lam.imag <= im_hi + dim):
            dropped.append((cand, "polished outside region"))
            continue
        if any(abs(lam - s) < 1e-6 * (1.0 + abs(lam)) for s in seen):
            continue
        seen.append(lam)

        A = _unit_circle_t(data.z, unit_circle_tol)
        if not A:
            dropped.append((cand, "no real quasimomentum on the unit circle"))
            continue
        # quasimomenta at which the multiplicity itself sits: near-unimodular
        # multipliers where the lambda-derivative of the determinant vanishes
        _, c0, qc = _char_coeffs_with_derivative(spec, lam, tol)
        deg_t = []
        for zi in data.z:
            if abs(abs(zi) - 1.0) < unit_circle_tol and \
                    _deriv_at_multiplier(qc, c0, zi, lam) < 10 * accept_metric:
                tt = _wrap_angle(float(np.angle(zi)))
                if not any(abs(tt - d) < 1e-8 for d in deg_t):
                    deg_t.append(tt)
        residual = max(abs(char_det(spec, lam, t, multipliers=data)) for t in A)
        entries.append(MultipleEigenvalue(
            a=lam, A=tuple(A), degenerate_t=tuple(sorted(deg_t)),
            mechanism=mechanism, residual=float(residual)))

    entries.sort(key=lambda e: (e.a.real, e.a.imag))
    return DegeneracyCatalog(entries=tuple(entries), dropped=tuple(dropped),
                             region=tuple(region))


def default_scan_region(collection, pad=0.1):
    """Rectangle covering the tracked eigenvalues of a band collection."""
    lams = np.concatenate([b.lam for b in collection.bands])
    re_lo, re_hi = float(lams.real.min()), float(lams.real.max())
    im_lo, im_hi = float(lams.imag.min()), float(lams.imag.max())
    wr = max(re_hi - re_lo, 1.0)
    wi = max(im_hi - im_lo, 1.0)
    return (re_lo - pad * wr, re_hi + pad * wr,
            im_lo - pad * wi, im_hi + pad * wi)
