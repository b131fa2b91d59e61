"""Projection norms, blow-up classification, and the singular-set machinery.

The norm of the rank-one spectral projection attached to a simple Bloch
eigenvalue equals 1 / |alpha|, where alpha is the overlap of the unit right
and left eigenfunctions.  Multiple eigenvalues located by the Floquet oracle
are classified by the fitted blow-up exponent of |alpha| along the incident
branches:

  regular multiple        1/|alpha| stays bounded near the degeneracy,
  spectral singularity    |alpha| ~ c |t - t0|^beta with beta > 0,
  essential singularity   additionally the expansion integrand
                          g(t) = |a_k(t)| * ||Psi_{k,t}|| is non-integrable,
                          decided by its fitted exponent beta_g >= 1 - margin
                          (an integrable blow-up is *not* essential).

The existential "there exists f" in the essential case is approximated by a
fixed bump probe plus a few seeded random smooth probes, taking the worst
case; this is a documented approximation, not an exhaustive search.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FlaggedPair
from .galerkin import l2_inner, solve_eigen
from .quadrature import fit_power_law

BOUND_CAP = 1e6
ESS_MARGIN = 0.05
BETA_SING = 0.05     # smallest decay exponent treated as a genuine blow-up
R2_MIN = 0.9

CLASS_REGULAR = "regular_multiple"
CLASS_SINGULAR = "spectral_singularity"
CLASS_ESS = "essential_spectral_singularity"
CLASS_UNDETERMINED = "undetermined"

_SEVERITY = {CLASS_REGULAR: 0, CLASS_UNDETERMINED: 1, CLASS_SINGULAR: 2,
             CLASS_ESS: 3}


# ---------------------------------------------------------------------------
# rank-one projections
# ---------------------------------------------------------------------------

def projection_norm(pair):
    """Norm 1/|alpha| of the spectral projection of a simple eigenvalue.

    Flagged pairs (alpha below the floor) report +inf rather than raising:
    an infinite projection norm is the diagnostic, not an error.
    """
    if pair.flagged:
        return np.inf
    return 1.0 / abs(pair.alpha)


def rank1_projection_apply(pair, f):
    """Apply f -> (f, X) Psi in coefficient space."""
    if pair.flagged or pair.X is None:
        raise FlaggedPair(f"alpha ~ 0 at t={pair.t}, lambda={pair.lam}")
    f = np.asarray(f, dtype=complex).reshape(pair.psi.shape)
    return l2_inner(f, pair.X) * pair.psi


def projector_apply(pairs, f):
    """Finite-rank projection sum_{pairs} (f, X_k) Psi_k."""
    out = None
    for pair in pairs:
        term = rank1_projection_apply(pair, f)
        out = term if out is None else out + term
    if out is None:
        return np.zeros_like(np.asarray(f, dtype=complex))
    return out


def projector_norm(pairs):
    """Exact operator norm of sum psi_k (., X_k) via its low-rank factors."""
    if not pairs:
        return 0.0
    A = np.stack([p.psi.ravel() for p in pairs], axis=1)
    B = np.stack([p.X.ravel() for p in pairs], axis=1)
    ra = np.linalg.qr(A, mode="r")
    rb = np.linalg.qr(B, mode="r")
    s = np.linalg.svd(ra @ rb.conj().T, compute_uv=False)
    return float(s[0])


def empirical_rank1_norm(pair, n_probe=200, seed=0):
    """Operator norm of f -> (f, X) Psi maximized over the span of n_probe
    random unit functions (with n_probe >= dim the span is everything and the
    value equals 1/|alpha| up to roundoff)."""
    if pair.flagged:
        return np.inf
    rng = np.random.default_rng(seed)
    dim = pair.psi.size
    F = rng.standard_normal((dim, n_probe)) + 1j * rng.standard_normal((dim, n_probe))
    F /= np.linalg.norm(F, axis=0, keepdims=True)
    Q, _ = np.linalg.qr(F, mode="reduced")
    # ||P Q|| = ||psi|| * ||Q^H X|| for the rank-one P
    return float(np.linalg.norm(Q.conj().T @ pair.X.ravel()))


# ---------------------------------------------------------------------------
# randomized far-out projection scan
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProjectionScanReport:
    sup_norm: float
    M_threshold: float
    trials: int
    n_empty: int
    bounded: bool
    bound_cap: float


def _rect_contains(rect, lam):
    re0, re1, im0, im1 = rect
    return (re0 <= lam.real < re1) and (im0 <= lam.imag < im1)


def _rect_outside_disk(rect, M):
    re0, re1, im0, im1 = rect
    # closest point of the rectangle to the origin
    cx = min(max(0.0, re0), re1)
    cy = min(max(0.0, im0), im1)
    return np.hypot(cx, cy) > M


def bounded_projection_scan(collection, trials=100, seed=42, M_threshold=None,
                            bound_cap=BOUND_CAP, max_rects=3):
    """Sup of the projection norm over random finite unions of half-closed
    rectangles in {|lambda| > M} and over the quasimomentum grid.

    M defaults to 1.1x the largest modulus reached by the low/unlabeled
    branches, so every eigenvalue beyond M belongs to a labeled far pair.
    """
    far = [b for b in collection.bands
           if b.kj is not None and abs(b.kj[0]) >= collection.n0]
    low = [b for b in collection.bands if b not in far]
    if M_threshold is None:
        low_max = max((float(np.max(np.abs(b.lam))) for b in low), default=0.0)
        M_threshold = 1.1 * low_max

    # usable far eigenvalues, away from the truncation boundary
    k_ok = collection.K // 2
    cloud = []
    for b in far:
        if abs(b.kj[0]) <= k_ok:
            cloud.extend(b.lam.tolist())
    cloud = np.array([z for z in cloud if abs(z) > M_threshold])
    if len(cloud) == 0:
        return ProjectionScanReport(0.0, M_threshold, trials, trials, True,
                                    bound_cap)

    rng = np.random.default_rng(seed)
    sup_norm = 0.0
    n_empty = 0
    nt = len(collection.t_grid)
    for _ in range(trials):
        rects = []
        attempts = 0
        while len(rects) < rng.integers(1, max_rects + 1) and attempts < 50:
            attempts += 1
            center = cloud[rng.integers(len(cloud))]
            w = np.abs(center) * 10 ** rng.uniform(-3, -0.5)
            h = np.abs(center) * 10 ** rng.uniform(-3, -0.5)
            rect = (center.real - w, center.real + w,
                    center.imag - h, center.imag + h)
            if _rect_outside_disk(rect, M_threshold):
                rects.append(rect)
        i = int(rng.integers(nt))
        pairs = []
        for b in far:
            if abs(b.kj[0]) > k_ok:
                continue
            lam = b.lam[i]
            if any(_rect_contains(r, lam) for r in rects):
                pair = collection.pair(b, i)
                if not pair.flagged:
                    pairs.append(pair)
        if not pairs:
            n_empty += 1
            continue
        sup_norm = max(sup_norm, projector_norm(pairs))
    return ProjectionScanReport(sup_norm=float(sup_norm),
                                M_threshold=float(M_threshold), trials=trials,
                                n_empty=n_empty,
                                bounded=bool(sup_norm < bound_cap),
                                bound_cap=bound_cap)


# ---------------------------------------------------------------------------
# blow-up exponent fitting
# ---------------------------------------------------------------------------

def fit_blowup_exponent(alpha_fn, t0, delta0, levels=6):
    """Slope beta of log alpha vs log |t - t0| on a dyadic probe ladder.

    Probes t0 +- delta0 * 2^-l, l = 0..levels-1, both sides.  Returns
    (beta, r2); r2 < 0.9 means the power-law fit is poor and classification
    should fall back to "undetermined".
    """
    if levels < 5:
        raise ValueError("levels >= 5 required for a stable fit")
    ds, ys = [], []
    for level in range(levels):
        d = delta0 * 2.0 ** (-level)
        for sgn in (+1, -1):
            val = alpha_fn(t0 + sgn * d)
            if np.isfinite(val) and val > 0:
                ds.append(d)
                ys.append(val)
    if len(ds) < 4:
        return np.nan, 0.0
    slope, _, r2 = fit_power_law(ds, ys)
    return float(slope), float(r2)


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------

@dataclass
class BranchProbe:
    """Samplers along one branch near a degeneracy.

    ``alpha_fn(t)`` returns |alpha| on the branch; ``coeff_fn(t)`` the worst
    |a_k(t)| over the probe test functions (the expansion-integrand scale).
    Synthetic probes with injected laws exercise the same classification path
    as real branches.
    """

    branch_id: int
    alpha_fn: object
    coeff_fn: object = None


@dataclass(frozen=True)
class PointClassification:
    t0: float
    branches: tuple
    beta: float
    beta_r2: float
    beta_g: float
    beta_g_r2: float
    classification: str
    integrable: bool
    sup_inv_alpha: float
    nonintegrable_branches: tuple


@dataclass(frozen=True)
class EigenvalueEntry:
    a: complex
    A: tuple
    points: tuple


@dataclass(frozen=True)
class SingularityReport:
    entries: tuple
    E: tuple
    S: tuple
    S_i: dict
    S_ij: dict
    thresholds: dict

    def to_json_dict(self):
        def num(v):
            return float(v) if np.isfinite(v) else None

        doc = {"multiple_eigenvalues": [], "E": list(self.E),
               "S": list(self.S),
               "S_i": {str(i): list(v) for i, v in self.S_i.items()},
               "S_ij": {str(i): {str(j): list(v) for j, v in inner.items()}
                        for i, inner in self.S_ij.items()}}
        for e in self.entries:
            doc["multiple_eigenvalues"].append({
                "a": [e.a.real, e.a.imag],
                "A": list(e.A),
                "entries": [{"t0": p.t0, "beta": num(p.beta),
                             "beta_g": num(p.beta_g),
                             "class": p.classification} for p in e.points]})
        return doc


def classify_point(probes, t0, delta0, levels=6, *, ess_margin=ESS_MARGIN,
                   bound_cap=BOUND_CAP, beta_sing=BETA_SING, r2_min=R2_MIN):
    """Classify one degeneracy point from its incident branch probes."""
    betas, r2s, sup_inv = [], [], 0.0
    per_branch_beta_g = {}
    for probe in probes:
        beta, r2 = fit_blowup_exponent(probe.alpha_fn, t0, delta0, levels)
        betas.append(beta)
        r2s.append(r2)
        for level in range(levels):
            d = delta0 * 2.0 ** (-level)
            for sgn in (+1, -1):
                a = probe.alpha_fn(t0 + sgn * d)
                if np.isfinite(a) and a > 0:
                    sup_inv = max(sup_inv, 1.0 / a)
                else:
                    sup_inv = np.inf
        if probe.coeff_fn is not None:
            slope_g, r2_g = fit_blowup_exponent(probe.coeff_fn, t0, delta0,
                                                levels)
            per_branch_beta_g[probe.branch_id] = (-slope_g, r2_g)

    # worst branch decides the point
    best = int(np.nanargmax(betas)) if betas and not np.all(np.isnan(betas)) \
        else 0
    beta, beta_r2 = betas[best], r2s[best]

    alpha_flat = all(np.isfinite(b) and b < beta_sing for b in betas) \
        and np.isfinite(sup_inv)
    if alpha_flat and sup_inv < bound_cap:
        cls = CLASS_REGULAR
    elif (np.isfinite(beta) and beta >= beta_sing and beta_r2 >= r2_min) \
            or sup_inv >= bound_cap:
        cls = CLASS_SINGULAR
    else:
        cls = CLASS_UNDETERMINED

    beta_g, beta_g_r2 = np.nan, 0.0
    nonint = []
    integrable = True
    if cls == CLASS_SINGULAR and per_branch_beta_g:
        for bid, (bg, r2g) in per_branch_beta_g.items():
            if np.isfinite(bg) and bg >= 1.0 - ess_margin and r2g >= r2_min:
                nonint.append(bid)
        vals = [(bg, r2g) for bg, r2g in per_branch_beta_g.values()
                if np.isfinite(bg)]
        if vals:
            beta_g, beta_g_r2 = max(vals, key=lambda v: v[0])
        integrable = not nonint
        if nonint:
            cls = CLASS_ESS

    return PointClassification(
        t0=float(t0), branches=tuple(p.branch_id for p in probes),
        beta=float(beta) if np.isfinite(beta) else np.nan,
        beta_r2=float(beta_r2),
        beta_g=float(beta_g) if np.isfinite(beta_g) else np.nan,
        beta_g_r2=float(beta_g_r2), classification=cls,
        integrable=integrable, sup_inv_alpha=float(sup_inv),
        nonintegrable_branches=tuple(sorted(nonint)))


def assemble_report(entry_points, thresholds=None):
    """Build the report and the sets E, S, S_i, S_ij from classified points.

    ``entry_points`` maps each multiple eigenvalue a to (A, [PointClassification]).
    S_i(t_i) collects branches with non-integrable integrand at the singular
    quasimomentum t_i; S_ij partitions S_i by the degenerate eigenvalue the
    branches meet (bundles); S is the union of the S_i.
    """
    entries = []
    E = []
    S_i_raw = {}      # t value -> set of branches
    S_ij_raw = {}     # t value -> {a -> set of branches}
    for a, (A, points) in sorted(entry_points.items(),
                                 key=lambda kv: (kv[0].real, kv[0].imag)):
        entries.append(EigenvalueEntry(a=a, A=tuple(A), points=tuple(points)))
        for p in points:
            if p.classification == CLASS_ESS:
                E.append(p.t0)
                S_i_raw.setdefault(p.t0, set()).update(p.nonintegrable_branches)
                S_ij_raw.setdefault(p.t0, {}).setdefault(a, set()).update(
                    p.nonintegrable_branches)

    # merge essentially-equal singular quasimomenta
    E_sorted = []
    for t in sorted(set(E)):
        if not E_sorted or abs(t - E_sorted[-1]) > 1e-9:
            E_sorted.append(t)

    S_i, S_ij = {}, {}
    S_all = set()
    for i, t in enumerate(E_sorted, start=1):
        branches = set()
        groups = {}
        for t_raw, brs in S_i_raw.items():
            if abs(t_raw - t) <= 1e-9:
                branches |= brs
        for t_raw, by_a in S_ij_raw.items():
            if abs(t_raw - t) <= 1e-9:
                for a, brs in by_a.items():
                    groups.setdefault(a, set()).update(brs)
        S_i[i] = tuple(sorted(branches))
        S_ij[i] = {j: tuple(sorted(brs))
                   for j, (a, brs) in enumerate(
                       sorted(groups.items(),
                              key=lambda kv: (kv[0].real, kv[0].imag)),
                       start=1)}
        S_all |= branches

    return SingularityReport(entries=tuple(entries), E=tuple(E_sorted),
                             S=tuple(sorted(S_all)), S_i=S_i, S_ij=S_ij,
                             thresholds=thresholds or {})


def _branch_probe_from_collection(collection, band, f_probes, cache):
    """alpha/coefficient samplers along a real tracked branch."""
    from .expansion import gelfand_coefficients   # function-level: no cycle

    def pair_at(t):
        t = float(t)
        if t not in cache:
            cache[t] = solve_eigen(collection.spec, t, collection.K,
                                   residual_check=False)
        pairs = cache[t]
        target = band.lam_at(t)
        return min(pairs, key=lambda p: abs(p.lam - target))

    def alpha_fn(t):
        return abs(pair_at(t).alpha)

    def coeff_fn(t):
        pair = pair_at(t)
        if pair.flagged:
            return np.inf
        worst = 0.0
        for f in f_probes:
            fc = gelfand_coefficients(f, pair.t, collection.K)
            worst = max(worst, abs(l2_inner(fc, pair.X)))
        return worst

    return BranchProbe(branch_id=band.p, alpha_fn=alpha_fn, coeff_fn=coeff_fn)


def classify_singularities(catalog, collection, f_probe=None, *,
                           n_random_f=5, seed=7, delta0=None, levels=6,
                           ess_margin=ESS_MARGIN, bound_cap=BOUND_CAP,
                           involve_rtol=1e-4):
    """Classify every (multiple eigenvalue, quasimomentum) point of a catalog.

    ``f_probe`` seeds the integrability decision; it is complemented by
    ``n_random_f`` seeded random smooth probes and the worst case is taken.
    """
    from .expansion import TestFunction, random_smooth_test_function

    spec = collection.spec
    if f_probe is None:
        f_probe = TestFunction.bump((-1.0, 1.0), np.ones(spec.m))
    rng = np.random.default_rng(seed)
    f_probes = [f_probe] + [
        random_smooth_test_function(spec.m, f_probe.support, rng)
        for _ in range(n_random_f)]

    # half the minimal spacing between quasimomentum fibre points
    all_t = sorted(set(t for e in catalog.entries for t in e.A))
    if delta0 is None:
        gaps = [b - a for a, b in zip(all_t[:-1], all_t[1:])] or [np.pi]
        delta0 = min(0.1, min(gaps) / 4 if min(gaps) > 0 else 0.1)

    thresholds = {"ess_margin": ess_margin, "bound_cap": bound_cap,
                  "beta_sing": BETA_SING, "r2_min": R2_MIN, "delta0": delta0,
                  "levels": levels}
    cache = {}
    entry_points = {}
    for entry in catalog.entries:
        points = []
        for t0 in entry.A:
            # involvement decided on a fresh solve at t0: band interpolants
            # only select which eigenvalue belongs to which branch
            t0f = float(t0)
            if t0f not in cache:
                cache[t0f] = solve_eigen(collection.spec, t0f, collection.K,
                                         residual_check=False)
            lams = np.array([p.lam for p in cache[t0f]])
            involved = []
            for band in collection.bands:
                if band.truncation_suspect:
                    continue
                lam_band = lams[np.argmin(np.abs(lams - band.lam_at(t0)))]
                if abs(lam_band - entry.a) < involve_rtol * (
                        1.0 + abs(entry.a)):
                    involved.append(band)
            if not involved:
                continue
            probes = [_branch_probe_from_collection(collection, b, f_probes,
                                                    cache)
                      for b in involved]
            points.append(classify_point(probes, t0, delta0, levels,
                                         ess_margin=ess_margin,
                                         bound_cap=bound_cap))
        entry_points[entry.a] = (entry.A, points)
    return assemble_report(entry_points, thresholds)
