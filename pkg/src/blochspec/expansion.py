"""Quasimomentum decomposition and the spectral expansion of line functions.

A square-integrable vector function f on the line decomposes into
quasi-periodic components

    f_t(x) = sum_j f(x + j) exp(-i j t),   f(x) = (1/2pi) int f_t(x) dt,

(finite sums for compactly supported f).  Expansion coefficients along a
branch are a_k(t) = (f_t, X_{k,t}) against the bi-orthogonal eigenfunctions;
the reconstruction integrates a_k(t) Psi_{k,t}(x) over (-pi, pi] branch by
branch, except that branches passing through an essential spectral
singularity are non-integrable individually and must be integrated together
("huddled") over shrinking-window domains I(delta) excluding the singular
quasimomenta, where their singular parts cancel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .bands import track_bands
from .errors import ConfigInvalid, HuddleDiverged, NonIntegrableBranch
from .galerkin import l2_inner, solve_eigen, synthesize
from .quadrature import (cauchy_tail, gauss_panels, richardson_limit,
                         split_points)
from .singularities import (CLASS_ESS, classify_point,
                            _branch_probe_from_collection)


# ---------------------------------------------------------------------------
# test functions
# ---------------------------------------------------------------------------

def _bump_profile(u):
    out = np.zeros_like(u, dtype=float)
    inside = np.abs(u) < 1.0
    ui = u[inside]
    out[inside] = np.exp(-1.0 / (1.0 - ui * ui))
    return out


@dataclass(eq=False)
class TestFunction:
    """Compactly supported m-component function on the line.

    The support window is treated as half-open [lo, hi) so that a function
    occupying exactly one period is counted once under integer shifts; for
    smooth inputs vanishing at the support boundary the distinction is a
    measure-zero point.
    """

    __test__ = False   # not a pytest collection target

    support: tuple
    m: int
    kind: str
    fn: object
    norm: float = 0.0
    truncation_mass: float = 0.0

    def __post_init__(self):
        if self.norm == 0.0:
            self.norm = self._l2_norm()
        if self.norm <= 0:
            raise ConfigInvalid("test_function", "function is identically zero")

    def __call__(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        vals = np.zeros((len(x), self.m), dtype=complex)
        lo, hi = self.support
        mask = (x >= lo) & (x < hi)
        if np.any(mask):
            vals[mask] = np.asarray(self.fn(x[mask]), dtype=complex).reshape(
                -1, self.m)
        return vals

    def _l2_norm(self):
        lo, hi = self.support
        bounds = split_points(lo, hi, np.arange(np.ceil(lo), hi))
        x, w = gauss_panels(bounds, 32)
        vals = self(x)
        return float(np.sqrt(np.sum(w[:, None] * np.abs(vals) ** 2)))

    @classmethod
    def bump(cls, support, weights):
        """Smooth bump exp(-1/(1-u^2)) scaled to the support, one weight per
        component."""
        weights = np.atleast_1d(np.asarray(weights, dtype=complex))
        lo, hi = float(support[0]), float(support[1])

        def fn(x):
            u = (2.0 * x - (lo + hi)) / (hi - lo)
            return _bump_profile(u)[:, None] * weights[None, :]

        return cls(support=(lo, hi), m=len(weights), kind="bump", fn=fn)

    @classmethod
    def gaussian_truncated(cls, center, sigma, support, weights):
        weights = np.atleast_1d(np.asarray(weights, dtype=complex))
        lo, hi = float(support[0]), float(support[1])

        def fn(x):
            g = np.exp(-0.5 * ((x - center) / sigma) ** 2)
            return g[:, None] * weights[None, :]

        # relative L2 mass cut off by the truncation:
        # |f|^2 ~ exp(-(x-c)^2 / sigma^2), so the inside fraction is
        # (erf((hi-c)/sigma) - erf((lo-c)/sigma)) / 2
        inside = 0.5 * (erf((hi - center) / sigma) - erf((lo - center) / sigma))
        obj = cls(support=(lo, hi), m=len(weights), kind="gaussian_truncated",
                  fn=fn)
        obj.truncation_mass = float(max(0.0, 1.0 - inside))
        return obj

    @classmethod
    def from_samples(cls, x_samples, values):
        """Linear interpolation through samples; support is the sample range.
        Samples should decay to zero at the ends, or the reported truncation
        mass of the hard cutoff is nonzero in spirit."""
        x_samples = np.asarray(x_samples, dtype=float)
        values = np.atleast_2d(np.asarray(values, dtype=complex))
        if values.shape[0] != len(x_samples):
            values = values.T
        m = values.shape[1]

        def fn(x):
            out = np.empty((len(x), m), dtype=complex)
            for c in range(m):
                out[:, c] = (np.interp(x, x_samples, values[:, c].real)
                             + 1j * np.interp(x, x_samples, values[:, c].imag))
            return out

        return cls(support=(float(x_samples[0]), float(x_samples[-1])), m=m,
                   kind="custom_samples", fn=fn)


def random_smooth_test_function(m, support, rng):
    """Seeded random smooth probe: bump envelope times a few Fourier modes."""
    lo, hi = float(support[0]), float(support[1])
    n_modes = 4
    coef = rng.standard_normal((n_modes, m)) + 1j * rng.standard_normal((n_modes, m))

    def fn(x):
        u = (2.0 * x - (lo + hi)) / (hi - lo)
        env = _bump_profile(u)
        out = np.zeros((len(x), m), dtype=complex)
        for q in range(n_modes):
            out += np.exp(2j * np.pi * q * x)[:, None] * coef[q][None, :]
        return env[:, None] * out

    return TestFunction(support=(lo, hi), m=m, kind="random_smooth", fn=fn)


# ---------------------------------------------------------------------------
# quasimomentum decomposition
# ---------------------------------------------------------------------------

def _shift_range(f):
    lo, hi = f.support
    return int(np.floor(lo)), int(np.ceil(hi))


def gelfand_transform(f, t, x_grid):
    """f_t(x) = sum_j f(x + j) exp(-i j t) on points of [0, 1)."""
    x_grid = np.atleast_1d(np.asarray(x_grid, dtype=float))
    j_lo, j_hi = _shift_range(f)
    out = np.zeros((len(x_grid), f.m), dtype=complex)
    for j in range(j_lo - 1, j_hi + 1):
        out += f(x_grid + j) * np.exp(-1j * j * t)
    return out


def gelfand_coefficients(f, t, K, n_fft=None):
    """Coefficients of f_t in the orthonormal basis e_j exp(i(2 pi k + t) x).

    f_t(x) exp(-i t x) is 1-periodic and smooth for smooth f, so an FFT on a
    uniform grid gives its Fourier coefficients to spectral accuracy; the
    rows k = -K..K are returned as a (2K+1, m) array.
    """
    if n_fft is None:
        n_fft = max(512, 8 * K)
    x = np.arange(n_fft) / n_fft
    g = gelfand_transform(f, t, x) * np.exp(-1j * t * x)[:, None]
    c = np.fft.fft(g, axis=0) / n_fft
    rows = np.arange(-K, K + 1) % n_fft
    return c[rows]


def gelfand_inverse(f, x_grid, n_t=256):
    """(1/2pi) int f_t(x) dt by the uniform rule (exact for compact support
    once n_t exceeds the number of unit shifts covering the support)."""
    ts = -np.pi + (np.arange(n_t) + 0.5) * (2 * np.pi / n_t)
    x_grid = np.atleast_1d(np.asarray(x_grid, dtype=float))
    acc = np.zeros((len(x_grid), f.m), dtype=complex)
    j_lo, j_hi = _shift_range(f)
    for t in ts:
        # extend f_t from the fundamental cell quasi-periodically
        frac = np.mod(x_grid, 1.0)
        cell = np.floor(x_grid - frac + 0.5).astype(int)
        base = gelfand_transform(f, t, frac)
        acc += base * np.exp(1j * t * cell)[:, None]
    return acc / n_t


def coefficient_a(f, pair, mode="cell", n_fft=None, nodes_per_cell=32):
    """Expansion coefficient a_k(t) = (f_t, X_{k,t}).

    mode="cell" pairs the quasimomentum component with X over one period;
    mode="line" integrates f against the quasi-periodically extended X over
    the support of f.  The two agree identically in exact arithmetic.
    """
    if pair.flagged or pair.X is None:
        from .errors import FlaggedPair
        raise FlaggedPair(f"alpha ~ 0 at t={pair.t}, lambda={pair.lam}")
    if mode == "cell":
        fc = gelfand_coefficients(f, pair.t, pair.K, n_fft=n_fft)
        return l2_inner(fc, pair.X)
    if mode == "line":
        lo, hi = f.support
        bounds = split_points(lo, hi, np.arange(np.ceil(lo), hi))
        x, w = gauss_panels(bounds, nodes_per_cell)
        fv = f(x)
        Xv = synthesize(pair.X, pair.t, pair.K, x)
        return complex(np.sum(w[:, None] * fv * np.conj(Xv)))
    raise ValueError(f"unknown mode {mode!r}")


# ---------------------------------------------------------------------------
# quadrature grid shared by all branch integrals
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class ExpansionGrid:
    """Band tracking over the union of a coarse and a fine panel rule."""

    collection: object
    fine_idx: np.ndarray
    fine_w: np.ndarray
    coarse_idx: np.ndarray
    coarse_w: np.ndarray
    splits: tuple


def build_expansion_grid(spec, K, interior_splits=(), n_nodes=16,
                         min_panels=2, force_mean=False):
    """Composite Gauss-Legendre nodes over (-pi, pi] with boundaries at the
    supplied split points (degeneracy and singular quasimomenta), plus the
    panel-doubled rule for error estimation, tracked in one sweep."""
    base = split_points(-np.pi, np.pi, interior_splits)
    # subdivide so panels are not too long, then double for the fine rule
    bounds = [base[0]]
    max_len = np.pi / max(min_panels, 1)
    for a, b in zip(base[:-1], base[1:]):
        pieces = max(1, int(np.ceil((b - a) / max_len)))
        bounds.extend(np.linspace(a, b, pieces + 1)[1:].tolist())
    bounds = np.array(bounds)
    fine_bounds = np.sort(np.concatenate(
        [bounds, 0.5 * (bounds[:-1] + bounds[1:])]))

    x_c, w_c = gauss_panels(bounds, n_nodes)
    x_f, w_f = gauss_panels(fine_bounds, n_nodes)
    all_t = np.concatenate([x_c, x_f])
    order = np.argsort(all_t)
    t_sorted = all_t[order]
    inv = np.empty_like(order)
    inv[order] = np.arange(len(order))
    collection = track_bands(spec, K, t_sorted, force_mean=force_mean)
    return ExpansionGrid(collection=collection,
                         fine_idx=inv[len(x_c):], fine_w=w_f,
                         coarse_idx=inv[:len(x_c)], coarse_w=w_c,
                         splits=tuple(interior_splits))


def _gelfand_node_cache(f, grid):
    """Quasimomentum coefficients of f at every tracked node, computed once."""
    coll = grid.collection
    return [gelfand_coefficients(f, float(t), coll.K)
            for t in coll.t_grid]


def _rule_values(f, grid, bands, x_grid, idx, weights, fc_cache):
    """Per-branch sum_i w_i a(t_i) Psi_{t_i}(x) over one rule, node-major so
    the synthesis phase matrix is built once per node."""
    coll = grid.collection
    k = np.arange(-coll.K, coll.K + 1)
    acc = {b.p: np.zeros((len(x_grid), coll.spec.m), dtype=complex)
           for b in bands}
    a_vals = {b.p: np.empty(len(idx), dtype=complex) for b in bands}
    for pos, (i, w) in enumerate(zip(idx, weights)):
        i = int(i)
        t = float(coll.t_grid[i])
        phases = np.exp(1j * np.outer(x_grid, 2 * np.pi * k + t))
        fc = fc_cache[i]
        for b in bands:
            pair = coll.pair(b, i)
            if pair.flagged or pair.X is None:
                a_vals[b.p][pos] = np.nan
                continue
            a = l2_inner(fc, pair.X)
            a_vals[b.p][pos] = a
            acc[b.p] += (w * a) * (phases @ pair.psi)
    return acc, a_vals


def integrate_branches(f, grid, bands, x_grid, quad_tol=1e-6):
    """Branch integrals int a(t) Psi_t(x) dt with panel-doubling error
    estimates, for several branches over the shared grid.

    Raises NonIntegrableBranch for a branch whose doubled rule moves the
    value substantially while its |alpha| collapses somewhere on the grid
    (such a branch belongs in the huddled set); the exception is raised
    per branch by the caller-facing wrapper below.
    """
    fc_cache = _gelfand_node_cache(f, grid)
    fine, a_fine = _rule_values(f, grid, bands, x_grid, grid.fine_idx,
                                grid.fine_w, fc_cache)
    coarse, _ = _rule_values(f, grid, bands, x_grid, grid.coarse_idx,
                             grid.coarse_w, fc_cache)
    out = {}
    for b in bands:
        val = fine[b.p]
        err = float(np.max(np.abs(val - coarse[b.p])))
        scale = 1.0 + float(np.max(np.abs(val)))
        bad = err > max(quad_tol * scale, 1e3 * quad_tol) \
            or np.any(~np.isfinite(a_fine[b.p]))
        exc = None
        if bad:
            alphas = np.array([abs(grid.collection.pair(b, int(i)).alpha)
                               for i in grid.fine_idx])
            if alphas.min() < 1e-3:
                exc = NonIntegrableBranch(
                    f"branch p={b.p}: refinement moved the integral by "
                    f"{err:.2e} with min |alpha| = {alphas.min():.2e}; route "
                    "it through the huddled integral")
        out[b.p] = (val, err, a_fine[b.p], exc)
    return out


def integrate_branch(f, grid, band, x_grid, quad_tol=1e-6):
    """Single-branch integral; see :func:`integrate_branches`."""
    val, err, a_vals, exc = integrate_branches(f, grid, [band], x_grid,
                                               quad_tol)[band.p]
    if exc is not None:
        raise exc
    return val, err, a_vals


def ladder_integrate(fn, splits, lo=-np.pi, hi=np.pi, n_nodes=12, levels=5,
                     tol=1e-8):
    """Integrate a vectorized callable over [lo, hi] with panels split at
    ``splits``, doubling all panels per level.

    Returns (value, sequence, converged).  An integrable endpoint blow-up
    (|t - t0|^(-1/2) and the like) gives geometrically decaying refinement
    differences; a 1/(t - t0) endpoint gives near-constant differences (each
    halving adds a fixed increment), reported as converged=False -- the
    signature of a non-integrable branch.
    """
    bounds = np.array(split_points(lo, hi, splits))
    seq, seq_abs = [], []
    for _ in range(levels):
        x, w = gauss_panels(bounds, n_nodes)
        vals = fn(x)
        seq.append(np.tensordot(w, vals, axes=(0, 0)))
        # absolute-value ladder: integrability means absolute integrability,
        # so a principal-value-style cancellation must not mask divergence
        seq_abs.append(float(np.tensordot(w, np.abs(vals), axes=(0, 0)).max()))
        bounds = np.sort(np.concatenate(
            [bounds, 0.5 * (bounds[:-1] + bounds[1:])]))
    diffs = [abs(seq_abs[i + 1] - seq_abs[i]) for i in range(len(seq_abs) - 1)]
    scale = 1.0 + seq_abs[-1]
    if diffs[-1] <= tol * scale or diffs[0] <= 0:
        return seq[-1], seq, True
    mean_ratio = (diffs[-1] / diffs[0]) ** (1.0 / max(len(diffs) - 1, 1))
    return seq[-1], seq, bool(mean_ratio <= 0.85)


# ---------------------------------------------------------------------------
# huddled (shrinking-window) integral
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class HuddleResult:
    limit: np.ndarray
    sequence: list
    delta_sequence: list
    fitted_order: float
    tail: float                 # last raw Cauchy difference
    extrapolated_tail: float    # shift of the Richardson limit at the last level
    converged: bool


def huddled_integral(integrand, E, delta0, levels, *, splits=(), n_nodes=12,
                     tail_tol=1e-6, lo=-np.pi, hi=np.pi):
    """Integrals over I(delta_l) = [lo, hi] minus the windows around the
    singular quasimomenta, delta_l = delta0 * 2^-l, with Richardson
    extrapolation at the measured convergence order.

    ``integrand`` is the vectorized SUM over the huddled branches: individual
    terms may diverge at the window centers while the sum stays integrable.
    """
    E = sorted(float(t) for t in E)
    if not E:
        x, w = gauss_panels(np.array(split_points(lo, hi, splits)), n_nodes)
        val = np.tensordot(w, integrand(x), axes=(0, 0))
        return HuddleResult(limit=val, sequence=[val], delta_sequence=[0.0],
                            fitted_order=np.nan, tail=0.0,
                            extrapolated_tail=0.0, converged=True)

    gaps = [E[0] - lo] + [b - a for a, b in zip(E[:-1], E[1:])] + [hi - E[-1]]
    max_delta0 = 0.5 * min(g for g in gaps if g > 0)
    if delta0 >= max_delta0:
        raise ConfigInvalid("delta0",
                            f"must be below half the minimal window gap "
                            f"{max_delta0:.3e}")

    deltas = [delta0 * 2.0 ** (-l) for l in range(levels)]

    def window_free_integral(delta):
        pts = [lo] + [v for t in E for v in (t - delta, t + delta)] + [hi]
        acc = None
        for a, b in zip(pts[::2], pts[1::2]):
            if b - a <= 1e-14:
                continue
            x, w = gauss_panels(np.array(split_points(a, b, splits)), n_nodes)
            term = np.tensordot(w, integrand(x), axes=(0, 0))
            acc = term if acc is None else acc + term
        return acc

    # first level directly, then add dyadic shells around each window
    seq = [window_free_integral(deltas[0])]
    for l in range(1, levels):
        shell_sum = None
        for t in E:
            for a, b in ((t - deltas[l - 1], t - deltas[l]),
                         (t + deltas[l], t + deltas[l - 1])):
                x, w = gauss_panels(np.array([a, b]), n_nodes)
                term = np.tensordot(w, integrand(x), axes=(0, 0))
                shell_sum = term if shell_sum is None else shell_sum + term
        seq.append(seq[-1] + shell_sum)

    limit, order = richardson_limit(seq)
    limit_prev, _ = richardson_limit(seq[:-1])
    extrap_tail = float(np.max(np.abs(limit - limit_prev)))
    tail = cauchy_tail(seq)
    scale = 1.0 + float(np.max(np.abs(seq[-1])))
    diffs = [float(np.max(np.abs(np.asarray(b) - np.asarray(a))))
             for a, b in zip(seq[:-1], seq[1:])]
    shrinking = len(diffs) < 2 or diffs[-1] <= diffs[0]
    converged = tail <= tail_tol * scale or shrinking
    if not converged:
        raise HuddleDiverged(
            f"window sequence failed its Cauchy test (tail {tail:.3e})",
            sequence=seq)
    return HuddleResult(limit=limit, sequence=seq, delta_sequence=deltas,
                        fitted_order=order, tail=tail,
                        extrapolated_tail=extrap_tail, converged=True)


# ---------------------------------------------------------------------------
# full reconstruction
# ---------------------------------------------------------------------------

@dataclass
class ExpansionParams:
    K: int
    K_branch: int
    x_grid: np.ndarray
    windows: tuple = ((-2.0, 2.0),)
    n_nodes: int = 16
    min_panels: int = 2
    delta0: float = 0.05
    levels: int = 6
    mode: str = "huddled"          # "huddled" (windowed limit) or "separate"
    quad_tol: float = 1e-6
    singularities: object = None   # optional SingularityReport
    force_mean: bool = False

    def __post_init__(self):
        if self.K_branch * 2 > self.K:
            raise ConfigInvalid("K_branch", "must satisfy K >= 2 * K_branch")


@dataclass(eq=False)
class ExpansionResult:
    x_grid: np.ndarray
    reconstruction: np.ndarray
    branch_integrals: dict
    branch_quad_errors: dict
    huddle: HuddleResult | None
    window_errors: list
    per_branch_norms: dict
    delta_sequence: list
    K_branch: int
    S: tuple
    E: tuple
    mode: str
    f_norm: float
    tail_estimate: float
    nonintegrable: list

    def to_json_dict(self):
        return {
            "windows": [{"a": w["a"], "b": w["b"], "l2_error": w["l2_error"]}
                        for w in self.window_errors],
            "K_branch": self.K_branch,
            "delta_sequence": list(self.delta_sequence),
            "huddle_converged": bool(self.huddle.converged) if self.huddle
                                else True,
            "per_branch_norms": [self.per_branch_norms[p]
                                 for p in sorted(self.per_branch_norms)],
        }

    def csv_rows(self):
        rows = []
        for i, x in enumerate(self.x_grid):
            for c in range(self.reconstruction.shape[1]):
                v = self.reconstruction[i, c]
                rows.append((float(x), c + 1, v.real, v.imag))
        return rows


def _window_error(f, x_grid, recon, a, b):
    mask = (x_grid >= a) & (x_grid <= b)
    diff = np.abs(f(x_grid[mask]) - recon[mask]) ** 2
    total = np.trapezoid(np.sum(diff, axis=1), x_grid[mask])
    return float(np.sqrt(max(total, 0.0)))


def _detect_singular_branches(grid, f, levels=6):
    """alpha-collapse scan: branches whose overlap dips below threshold near a
    suspect get exponent-fitted; non-integrable ones populate E and S."""
    coll = grid.collection
    suspects = coll.suspects
    if not suspects:
        return (), (), {}
    E, S = set(), set()
    cache = {}
    for t0 in suspects:
        involved = []
        for band in coll.bands:
            if band.truncation_suspect or band.p is None:
                continue
            i_near = int(np.argmin(np.abs(coll.t_grid - t0)))
            if abs(coll.pair(band, i_near).alpha) < 0.1:
                involved.append(band)
        if not involved:
            continue
        gaps = [abs(t0 - s) for s in suspects if abs(t0 - s) > 1e-9]
        delta0 = min(0.05, (min(gaps) / 4) if gaps else 0.05)
        probes = [_branch_probe_from_collection(coll, b, [f], cache)
                  for b in involved]
        pc = classify_point(probes, t0, delta0, levels)
        if pc.classification == CLASS_ESS:
            E.add(round(float(t0), 12))
            S.update(pc.nonintegrable_branches)
    return tuple(sorted(E)), tuple(sorted(S)), cache


def reconstruct(f, spec, params):
    """Assemble (1/2pi) [ huddled integral over the singular branches
    + sum of individual branch integrals ] and report window L2 errors.

    mode="separate" integrates every retained branch individually (the
    no-singularity form); with a nonempty singular set this surfaces
    NonIntegrableBranch errors, which are recorded, not masked.
    """
    if f.m != spec.m:
        raise ConfigInvalid("test_function", f"needs {spec.m} components")
    report = params.singularities
    interior = tuple(report.E) if report is not None else ()
    grid = build_expansion_grid(spec, params.K, interior_splits=interior,
                                n_nodes=params.n_nodes,
                                min_panels=params.min_panels,
                                force_mean=params.force_mean)
    coll = grid.collection

    if report is not None:
        E = tuple(report.E)
        S = tuple(report.S)
    elif params.mode == "separate":
        E, S = (), ()
    else:
        E, S, _ = _detect_singular_branches(grid, f)

    retained = [b for b in coll.bands
                if b.p is not None and b.p <= params.K_branch
                and not b.truncation_suspect]
    huddle_bands = [coll.band_by_p(p) for p in S] if params.mode != "separate" \
        else []
    separate_bands = [b for b in retained if b.p not in S] \
        if params.mode != "separate" else retained

    x_grid = np.asarray(params.x_grid, dtype=float)
    branch_integrals, branch_errs, norms = {}, {}, {}
    nonintegrable = []
    total = np.zeros((len(x_grid), spec.m), dtype=complex)
    results = integrate_branches(f, grid, separate_bands, x_grid,
                                 quad_tol=params.quad_tol)
    for band in separate_bands:
        val, err, _, exc = results[band.p]
        if exc is not None:
            nonintegrable.append((band.p, str(exc)))
            continue
        branch_integrals[band.p] = val
        branch_errs[band.p] = err
        norms[band.p] = float(np.sqrt(np.trapezoid(
            np.sum(np.abs(val) ** 2, axis=1), x_grid)))
        total += val

    huddle = None
    if huddle_bands:
        # shrink the first window if the singular quasimomenta sit closer
        # together (or to the interval ends) than the configured delta0
        pts = sorted(E)
        gaps = ([pts[0] + np.pi] + [b - a for a, b in zip(pts[:-1], pts[1:])]
                + [np.pi - pts[-1]])
        delta0 = min(params.delta0,
                     0.45 * min(g for g in gaps if g > 0))
        lam_interp = {b.p: b for b in huddle_bands}

        def integrand(ts):
            out = np.zeros((len(ts), len(x_grid), spec.m), dtype=complex)
            for i, t in enumerate(ts):
                pairs = solve_eigen(spec, float(t), params.K,
                                    residual_check=False)
                lams = np.array([p.lam for p in pairs])
                used = set()
                for p_id, band in lam_interp.items():
                    target = band.lam_at(t)
                    order = np.argsort(np.abs(lams - target))
                    pick = next(ix for ix in order if ix not in used)
                    used.add(int(pick))
                    pair = pairs[int(pick)]
                    a = coefficient_a(f, pair, mode="cell")
                    out[i] += a * synthesize(pair.psi, pair.t, pair.K, x_grid)
            return out

        huddle = huddled_integral(integrand, E, delta0, params.levels,
                                  splits=(), n_nodes=max(8, params.n_nodes // 2))
        total += huddle.limit

    recon = total / (2 * np.pi)
    window_errors = [{"a": a, "b": b,
                      "l2_error": _window_error(f, x_grid, recon, a, b)}
                     for (a, b) in params.windows]

    # crude tail bound: residual coefficient energy beyond the retained
    # branches plus the s^(-1/2) remainder scale of the far-out estimate
    k_cut = max(1, params.K_branch // (2 * spec.m))
    t_mid = float(coll.t_grid[len(coll.t_grid) // 2])
    fc = gelfand_coefficients(f, t_mid, params.K)
    ks = np.abs(np.arange(-params.K, params.K + 1))
    tail_energy = float(np.sum(np.abs(fc[ks > k_cut]) ** 2))
    tail_estimate = float(np.sqrt(tail_energy + f.norm ** 2 / np.sqrt(k_cut)))

    return ExpansionResult(
        x_grid=x_grid, reconstruction=recon,
        branch_integrals=branch_integrals, branch_quad_errors=branch_errs,
        huddle=huddle, window_errors=window_errors, per_branch_norms=norms,
        delta_sequence=list(huddle.delta_sequence) if huddle else [],
        K_branch=params.K_branch, S=tuple(S), E=tuple(E), mode=params.mode,
        f_norm=f.norm, tail_estimate=tail_estimate,
        nonintegrable=nonintegrable)


# ---------------------------------------------------------------------------
# far-out remainder inequality check
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TailBoundReport:
    per_s: dict          # s -> dict(worst_c, worst_c_random, trials)
    worst_c: float
    stable: bool
    rel_change: float


def tail_bound_check(collection, s_values, trials=100, seed=42):
    """Empirical constants for the far-out projection-sum inequality.

    For random index sets J in the far zone |k| >= s and random unit f, the
    squared norm of sum_J (f, X) Psi is compared against
    sum_J |(f, e_j exp(i(2 pi k + t) x))|^2 + ||f||^2 / sqrt(s).  Each trial
    records the random-f ratio and the exact supremum over all f (a
    generalized eigenvalue problem), which is the stable statistic.
    """
    rng = np.random.default_rng(seed)
    spec = collection.spec
    K = collection.K
    k_ok = K // 2
    nt = len(collection.t_grid)
    per_s = {}
    worst_overall = 0.0
    for s in s_values:
        eligible = [b for b in collection.bands
                    if b.kj is not None and s <= abs(b.kj[0]) <= k_ok]
        worst_c, worst_rand = 0.0, 0.0
        for _ in range(trials):
            i = int(rng.integers(nt))
            size = int(rng.integers(1, len(eligible) + 1))
            sel = rng.choice(len(eligible), size=size, replace=False)
            pairs, coords = [], []
            for bi in sel:
                band = eligible[bi]
                pair = collection.pair(band, i)
                if pair.flagged:
                    continue
                pairs.append(pair)
                k, j = band.kj
                coords.append((k + K) * spec.m + (j - 1))
            if not pairs:
                continue
            dim = spec.m * (2 * K + 1)
            A = np.stack([p.psi.ravel() for p in pairs], axis=1)
            B = np.stack([p.X.ravel() for p in pairs], axis=1)

            # random unit f in the discretized space
            fvec = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
            fvec /= np.linalg.norm(fvec)
            lhs = np.linalg.norm(A @ (B.conj().T @ fvec)) ** 2
            rhs = np.sum(np.abs(fvec[coords]) ** 2) + 1.0 / np.sqrt(s)
            worst_rand = max(worst_rand, float(lhs / rhs))

            # exact sup over f: largest eigenvalue of the pencil
            #   B (A^H A) B^H  vs  diag(J) + I/sqrt(s)
            G = B @ (A.conj().T @ A) @ B.conj().T
            d = np.full(dim, 1.0 / np.sqrt(s))
            d[coords] += 1.0
            val = np.max(np.linalg.eigvalsh(
                (G + G.conj().T) / 2 / d[None, :] ** 0.5 / d[:, None] ** 0.5))
            worst_c = max(worst_c, float(val))
        per_s[int(s)] = {"worst_c": worst_c, "worst_c_random": worst_rand,
                         "trials": trials}
        worst_overall = max(worst_overall, worst_c)
    ss = sorted(per_s)
    stable, rel = True, 0.0
    for a, b in zip(ss[:-1], ss[1:]):
        ca, cb = per_s[a]["worst_c"], per_s[b]["worst_c"]
        if ca > 0:
            r = abs(cb - ca) / ca
            rel = max(rel, r)
            stable = stable and r < 0.10
    return TailBoundReport(per_s=per_s, worst_c=worst_overall, stable=stable,
                           rel_change=rel)
