"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s`.  Tolerances are pinned
here, not configurable.
"""

import time

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import roots_legendre

import blochspec as bs
from blochspec import OperatorSpec, TestFunction, TrigPoly
from blochspec.singularities import (CLASS_ESS, CLASS_SINGULAR, BranchProbe,
                                     assemble_report, classify_point)


def uniform_t(n):
    return -np.pi + (np.arange(n) + 0.5) * (2 * np.pi / n)


def report(num, ok, detail):
    line = f"ACCEPTANCE {num} {'PASS' if ok else 'FAIL'}: {detail}"
    print(line)
    return ok


@pytest.fixture(scope="module")
def free_spec():
    return OperatorSpec.free(2, 1)


@pytest.fixture(scope="module")
def constant_spec():
    return OperatorSpec.constant_coupling(3, np.diag([1.0, 4.0]))


@pytest.fixture(scope="module")
def perturbed_spec():
    B = np.array([[0.0, 1.0], [1.0, 0.0]])
    return OperatorSpec(
        n=3, m=2,
        P={2: TrigPoly({0: np.diag([1.0, 4.0]), 1: 0.1 * B, -1: 0.1 * B})})


@pytest.fixture(scope="module")
def oneharmonic_spec():
    return OperatorSpec(n=2, m=1, p1=TrigPoly({0: 1.0}),
                        P={2: TrigPoly({1: np.array([[0.35]])})})


# ---------------------------------------------------------------------------
# 1. exact-case eigenvalues
# ---------------------------------------------------------------------------

def test_criterion_1_exact_eigenvalues(free_spec, constant_spec):
    K = 32
    grid = uniform_t(64)
    k_max = K // 2   # both specs have zero coefficient bandwidth

    worst = 0.0
    for t in grid:
        lams = np.array([p.lam for p in
                         bs.solve_eigen(free_spec, float(t), K,
                                        residual_check=False)])
        for k in range(-k_max, k_max + 1):
            ref = (1j * (2 * np.pi * k + t)) ** 2
            err = np.min(np.abs(lams - ref)) / max(1.0, abs(ref))
            worst = max(worst, float(err))

    start = time.perf_counter()
    mean = bs.compute_mean_matrix(constant_spec)
    for t in grid:
        lams = np.array([p.lam for p in
                         bs.solve_eigen(constant_spec, float(t), K,
                                        residual_check=False)])
        for k in range(-k_max, k_max + 1):
            s = 1j * (2 * np.pi * k + t)
            for j in range(2):
                ref = s ** 3 + mean.mu[j] * s
                err = np.min(np.abs(lams - ref)) / max(1.0, abs(ref))
                worst = max(worst, float(err))
    elapsed = time.perf_counter() - start

    ok = worst < 1e-10 and elapsed < 60.0
    assert report(1, ok, f"closed-form eigenvalue match, worst rel err "
                         f"{worst:.2e} (tol 1e-10), n=3 m=2 K=32 sweep "
                         f"{elapsed:.1f}s (< 60s)")


# ---------------------------------------------------------------------------
# 2. monodromy-determinant cross-validation
# ---------------------------------------------------------------------------

def test_criterion_2_oracle_cross_validation(perturbed_spec):
    K = 24
    ts = uniform_t(16)
    mean = bs.compute_mean_matrix(perturbed_spec)
    worst = 0.0
    n_checked = 0
    for t in ts:
        pairs = bs.solve_eigen(perturbed_spec, float(t), K,
                               residual_check=False)
        lams = np.array([p.lam for p in pairs])
        for k in range(-8, 9):
            s = 1j * (2 * np.pi * k + t)
            for j in range(2):
                ref = s ** 3 + mean.mu[j] * s
                lam = complex(lams[np.argmin(np.abs(lams - ref))])
                val = abs(bs.char_det(perturbed_spec, lam, float(t)))
                worst = max(worst, val)
                n_checked += 1
    # the toolkit's determinant is the per-multiplier-normalized form, which
    # makes this bound strictly stronger than 1e-6 * max(1, ||M||)
    ok = worst < 1e-6
    assert report(2, ok, f"|char det| at {n_checked} Galerkin eigenvalues "
                         f"(|k|<=8, 16 t-points): worst {worst:.2e} "
                         f"(tol 1e-6, a fortiori 1e-6*max(1,||M||))")


# ---------------------------------------------------------------------------
# 3. eigenvalue / eigenfunction asymptotic laws
# ---------------------------------------------------------------------------

def test_criterion_3_asymptotic_laws(perturbed_spec):
    grid = uniform_t(8)
    coll = bs.track_bands(perturbed_spec, 36, grid)
    ev = bs.verify_eigenvalue_asymptotics(coll, 6, 16)
    ef = bs.verify_eigenfunction_asymptotics(coll, 6, 16)

    # truncation guard: residuals must dominate the truncation error
    coll44 = bs.track_bands(perturbed_spec, 44, grid)
    trunc = 0.0
    for k in (6, 11, 16):
        for j in (1, 2):
            b36 = coll.band_by_kj(k, j)
            b44 = coll44.band_by_kj(k, j)
            trunc = max(trunc, float(np.max(np.abs(b36.lam - b44.lam))))
    guard_ok = trunc < 0.01 * float(np.min(ev.residuals["lambda"]))

    slope = ev.exponents["lambda"][0]
    s_psi = ef.exponents["psi"][0]
    s_x = ef.exponents["X"][0]
    ok = guard_ok and slope <= 0.35 and s_psi <= -0.65 and s_x <= -0.65
    assert report(3, ok, f"fitted exponents over k in [6,16]: eigenvalue "
                         f"{slope:.3f} (<= 0.35), psi {s_psi:.3f}, "
                         f"X {s_x:.3f} (<= -0.65); truncation guard "
                         f"{trunc:.1e} << min residual "
                         f"{float(np.min(ev.residuals['lambda'])):.1e}")


# ---------------------------------------------------------------------------
# 4. biorthogonality and the rank-one projection identity
# ---------------------------------------------------------------------------

def test_criterion_4_biorthogonality_projection(perturbed_spec):
    pairs = bs.solve_eigen(perturbed_spec, 0.8, 16)
    clean = [p for p in pairs if not p.flagged]
    Psi = np.stack([p.psi.ravel() for p in clean], axis=1)
    X = np.stack([p.X.ravel() for p in clean], axis=1)
    gram = X.conj().T @ Psi   # entry (q, p) = (Psi_p, X_q)
    worst_bi = float(np.max(np.abs(gram.T - np.eye(len(clean)))))

    worst_norm = 0.0
    for p in clean[:10]:
        emp = bs.empirical_rank1_norm(p, n_probe=200, seed=16)
        worst_norm = max(worst_norm,
                         abs(emp - 1.0 / abs(p.alpha)) * abs(p.alpha))
    ok = worst_bi < 1e-8 and worst_norm < 0.02
    assert report(4, ok, f"biorthogonality worst |(Psi_p, X_q) - delta| = "
                         f"{worst_bi:.2e} (tol 1e-8); empirical rank-one "
                         f"norm vs 1/|alpha| rel dev {worst_norm:.2e} "
                         f"(tol 2e-2, 200 probes)")


# ---------------------------------------------------------------------------
# 5. quasimomentum-decomposition identities
# ---------------------------------------------------------------------------

def test_criterion_5_gelfand_machinery(perturbed_spec):
    f = TestFunction.bump((-1.0, 1.0), [1.0, 0.5])
    x = np.linspace(-1.8, 1.8, 41)
    inv_err = float(np.max(np.abs(bs.gelfand_inverse(f, x, n_t=160) - f(x))))

    n_t, n_x = 160, 512
    acc = 0.0
    xs = np.arange(n_x) / n_x
    for t in uniform_t(n_t):
        ft = bs.gelfand_transform(f, t, xs)
        acc += np.sum(np.abs(ft) ** 2) / n_x
    parseval_err = abs(acc / n_t - f.norm ** 2)

    pairs = bs.solve_eigen(perturbed_spec, 0.5, 8)
    mode_err = 0.0
    for pair in pairs[:6]:
        a_cell = bs.coefficient_a(f, pair, mode="cell")
        a_line = bs.coefficient_a(f, pair, mode="line")
        mode_err = max(mode_err, abs(a_cell - a_line))
    ok = inv_err < 1e-8 and parseval_err < 1e-8 and mode_err < 1e-8
    assert report(5, ok, f"inversion {inv_err:.2e}, Parseval "
                         f"{parseval_err:.2e}, cell-vs-line coefficient "
                         f"{mode_err:.2e} (all < 1e-8, 160 t-nodes)")


# ---------------------------------------------------------------------------
# 6. far-out remainder inequality constants
# ---------------------------------------------------------------------------

def test_criterion_6_tail_bound(perturbed_spec):
    # note the sup ratio carries the intrinsic 1/(1 + s^(-1/2)) profile of
    # the remainder term, so the s-stability check needs s large enough that
    # this structural drift sits inside the 10% budget (s >= 8 suffices)
    coll = bs.track_bands(perturbed_spec, 40, uniform_t(64))
    rep = bs.tail_bound_check(coll, [8, 16], trials=100, seed=42)
    c8 = rep.per_s[8]["worst_c"]
    c16 = rep.per_s[16]["worst_c"]
    rel = abs(c16 - c8) / c8
    ok = np.isfinite(rep.worst_c) and rel < 0.10
    assert report(6, ok, f"empirical remainder constants c(s=8)={c8:.4f}, "
                         f"c(s=16)={c16:.4f}, rel change {rel:.3f} (< 0.10), "
                         f"100 random (f, J, t) trials per s")


# ---------------------------------------------------------------------------
# 7. bounded far-out projections (both spectrality conditions)
# ---------------------------------------------------------------------------

def _shared_rectangle_sup(spec, K_small, K_large, seed, trials=100):
    """Sup of projector norms over one shared random rectangle family,
    evaluated on collections at two truncations."""
    grid = uniform_t(64)
    coll_a = bs.track_bands(spec, K_small, grid)
    coll_b = bs.track_bands(spec, K_large, grid)

    def far_bands(coll):
        return [b for b in coll.bands
                if b.kj is not None and abs(b.kj[0]) >= coll.n0
                and abs(b.kj[0]) <= K_small // 2]

    low_max = max(float(np.max(np.abs(b.lam))) for b in coll_a.bands
                  if b.kj is None or abs(b.kj[0]) < coll_a.n0)
    M = 1.1 * low_max
    cloud = np.array([z for b in far_bands(coll_a) for z in b.lam
                      if abs(z) > M])
    rng = np.random.default_rng(seed)
    rect_sets, t_ids = [], []
    for _ in range(trials):
        rects = []
        while len(rects) < rng.integers(1, 4):
            c = cloud[rng.integers(len(cloud))]
            w = abs(c) * 10 ** rng.uniform(-3, -0.5)
            h = abs(c) * 10 ** rng.uniform(-3, -0.5)
            rect = (c.real - w, c.real + w, c.imag - h, c.imag + h)
            cx = min(max(0.0, rect[0]), rect[1])
            cy = min(max(0.0, rect[2]), rect[3])
            if np.hypot(cx, cy) > M:
                rects.append(rect)
        rect_sets.append(rects)
        t_ids.append(int(rng.integers(len(grid))))

    sups = []
    for coll in (coll_a, coll_b):
        sup = 0.0
        for rects, i in zip(rect_sets, t_ids):
            sel = []
            for b in far_bands(coll):
                lam = b.lam[i]
                if any(r[0] <= lam.real < r[1] and r[2] <= lam.imag < r[3]
                       for r in rects):
                    pair = coll.pair(b, i)
                    if not pair.flagged:
                        sel.append(pair)
            if sel:
                sup = max(sup, bs.projector_norm(sel))
        sups.append(sup)
    return sups


def test_criterion_7_definition2_scan(perturbed_spec, oneharmonic_spec):
    sup1_a, sup1_b = _shared_rectangle_sup(perturbed_spec, 16, 24, seed=42)
    rel1 = abs(sup1_b - sup1_a) / sup1_a
    sup2_a, sup2_b = _shared_rectangle_sup(oneharmonic_spec, 16, 24, seed=43)
    rel2 = abs(sup2_b - sup2_a) / sup2_a
    ok = (sup1_a < 1e6 and sup2_a < 1e6 and rel1 < 0.05 and rel2 < 0.05)
    assert report(7, ok, f"sup ||projection|| over 100 shared rectangle "
                         f"unions: odd-order example {sup1_a:.4f} "
                         f"(K 16->24 change {rel1:.4f}), even-order example "
                         f"{sup2_a:.4f} (change {rel2:.4f}); both finite, "
                         f"changes < 5%")


# ---------------------------------------------------------------------------
# 8. reconstruction (oracle agreement, convergence, path equivalence)
# ---------------------------------------------------------------------------

def _fourier_hat(f, n_quad=400):
    xq, wq = roots_legendre(n_quad)
    lo, hi = f.support
    xg = 0.5 * (lo + hi) + 0.5 * (hi - lo) * xq
    wg = 0.5 * (hi - lo) * wq
    vals = f(xg)

    def hat(xi):
        phases = np.exp(-1j * np.outer(np.atleast_1d(xi), xg))
        return phases @ (wg[:, None] * vals)

    return hat


def _oracle_reconstruction(f, kjs, x_grid, n_nodes=48):
    """Band-limited inversion over the retained (k, component) set, computed
    by direct quadrature: the rotated one-mode eigenbasis of the unperturbed
    operators reduces the expansion to componentwise Fourier inversion."""
    hat = _fourier_hat(f)
    nodes, wts = roots_legendre(n_nodes)
    out = np.zeros((len(x_grid), f.m), dtype=complex)
    for (k, j) in kjs:
        xi = 2 * np.pi * k + np.pi * nodes
        w = np.pi * wts
        vals = hat(xi)[:, j - 1]
        out[:, j - 1] += (np.exp(1j * np.outer(x_grid, xi))
                          * (vals * w)[None, :]).sum(axis=1)
    return out / (2 * np.pi)


def _retained_kjs(res, coll):
    out = []
    for p in sorted(res.branch_integrals):
        band = coll.band_by_p(p)
        if band.kj is not None:
            out.append(band.kj)
        else:
            # low block of the unperturbed operators is k = 0
            out.append((0, (p - 1) % coll.spec.m + 1))
    return out


def test_criterion_8_reconstruction(free_spec, constant_spec, perturbed_spec):
    x = np.linspace(-2.5, 2.5, 801)
    mask = (x >= -2.0) & (x <= 2.0)

    def l2(diff):
        return float(np.sqrt(np.trapezoid(
            np.sum(np.abs(diff[mask]) ** 2, axis=1), x[mask])))

    # free operator vs direct Fourier oracle
    f1 = TestFunction.bump((-1.0, 1.0), [1.0])
    params = bs.ExpansionParams(K=64, K_branch=32, x_grid=x,
                                windows=((-2.0, 2.0),), n_nodes=12)
    res1 = bs.reconstruct(f1, free_spec, params)
    grid1 = bs.build_expansion_grid(free_spec, 16, n_nodes=8)
    kjs1 = _retained_kjs(res1, grid1.collection)
    err_free = l2(res1.reconstruction - _oracle_reconstruction(f1, kjs1, x))

    # constant-coupling operator vs the rotated-basis oracle
    f2 = TestFunction.bump((-1.0, 1.0), [1.0, 1.0])
    res2 = bs.reconstruct(f2, constant_spec, params)
    grid2 = bs.build_expansion_grid(constant_spec, 16, n_nodes=8)
    kjs2 = _retained_kjs(res2, grid2.collection)
    err_const = l2(res2.reconstruction - _oracle_reconstruction(f2, kjs2, x))

    # perturbed example: self-convergence, errors decreasing in K_branch
    res3 = bs.reconstruct(f2, perturbed_spec, params)
    errs = []
    coll3_bands = {p: v for p, v in res3.branch_integrals.items()}
    for kb in (8, 16, 32):
        partial = np.zeros_like(res3.reconstruction)
        for p, v in coll3_bands.items():
            if p <= kb:
                partial += v
        errs.append(l2(partial / (2 * np.pi) - f2(x)))

    # the no-singularity forms agree
    p_h = bs.ExpansionParams(K=16, K_branch=8, x_grid=x, mode="huddled",
                             n_nodes=10)
    p_s = bs.ExpansionParams(K=16, K_branch=8, x_grid=x, mode="separate",
                             n_nodes=10)
    ra = bs.reconstruct(f1, free_spec, p_h)
    rb = bs.reconstruct(f1, free_spec, p_s)
    path_gap = float(np.max(np.abs(ra.reconstruction - rb.reconstruction)))

    ok = (err_free < 1e-6 and err_const < 1e-5
          and errs[0] > errs[1] > errs[2] and errs[2] < 1e-3
          and path_gap < 1e-6)
    assert report(8, ok, f"free vs Fourier oracle {err_free:.2e} (<1e-6); "
                         f"constant-coupling vs rotated oracle "
                         f"{err_const:.2e} (<1e-5); perturbed errors "
                         f"{errs[0]:.2e} > {errs[1]:.2e} > {errs[2]:.2e} "
                         f"(final <1e-3); no-singularity paths agree to "
                         f"{path_gap:.1e}")


# ---------------------------------------------------------------------------
# 9. synthetic singularity suite
# ---------------------------------------------------------------------------

def test_criterion_9_synthetic_classification():
    t0 = 0.3
    p_half = BranchProbe(1, alpha_fn=lambda t: abs(t - t0) ** 0.5,
                         coeff_fn=lambda t: 2.0 / abs(t - t0) ** 0.5)
    pc_half = classify_point([p_half], t0, 0.05, levels=7)

    p_fast = BranchProbe(2, alpha_fn=lambda t: abs(t - t0) ** 1.2,
                         coeff_fn=lambda t: 1.5 / abs(t - t0) ** 1.2)
    pc_fast = classify_point([p_fast], t0, 0.05, levels=7)

    t_s = 0.4
    c = 2.0

    def pair_sum(ts):
        ts = np.asarray(ts)
        return (c / (ts - t_s) + np.cos(ts)) + (-c / (ts - t_s)
                                                + np.sin(3 * ts))

    one = lambda ts: c / (np.asarray(ts) - t_s) + np.cos(np.asarray(ts))
    _, _, conv_one = bs.ladder_integrate(one, [t_s], levels=7)
    hud = bs.huddled_integral(pair_sum, [t_s], 0.1, 9)
    ref = quad(lambda t: np.cos(t) + np.sin(3 * t), -np.pi, np.pi)[0]

    ok = (pc_half.classification == CLASS_SINGULAR
          and abs(pc_half.beta - 0.5) < 0.02 and pc_half.integrable
          and pc_fast.classification == CLASS_ESS
          and abs(pc_fast.beta - 1.2) < 0.02
          and not conv_one
          and hud.extrapolated_tail < 1e-6
          and abs(hud.limit - ref) < 1e-6)
    assert report(9, ok, f"beta=0.5 -> {pc_half.classification} "
                         f"(fit {pc_half.beta:.4f}), beta=1.2 -> "
                         f"{pc_fast.classification} (fit {pc_fast.beta:.4f}),"
                         f" cancellation pair: termwise divergent, huddled "
                         f"tail {hud.extrapolated_tail:.1e} (<1e-6), limit "
                         f"err {abs(hud.limit - ref):.1e}")


# ---------------------------------------------------------------------------
# 10. singular-set machinery on the shipped examples
# ---------------------------------------------------------------------------

def test_criterion_10_set_machinery(free_spec, constant_spec, perturbed_spec,
                                    oneharmonic_spec):
    # fibre-size bound on every shipped example
    catalogs = {
        "free": bs.resultant_scan(free_spec, (-100.0, 5.0, -5.0, 5.0),
                                  grid=(36, 11)),
        "constant": bs.resultant_scan(constant_spec,
                                      (-5.0, 5.0, -40.0, 40.0), grid=(9, 33)),
        "perturbed": bs.resultant_scan(perturbed_spec,
                                       (-5.0, 5.0, -40.0, 40.0),
                                       grid=(9, 33)),
        "oneharmonic": bs.resultant_scan(oneharmonic_spec,
                                         (-60.0, 5.0, -8.0, 8.0),
                                         grid=(24, 9)),
    }
    bounds_ok = True
    sizes = {}
    for name, cat in catalogs.items():
        spec = {"free": free_spec, "constant": constant_spec,
                "perturbed": perturbed_spec,
                "oneharmonic": oneharmonic_spec}[name]
        nm = spec.n * spec.m
        sizes[name] = [len(e.A) for e in cat.entries]
        bounds_ok = bounds_ok and all(len(e.A) <= nm for e in cat.entries)

    # union and bundle partition on a multi-point synthetic report
    mk = lambda bid, t0, beta: BranchProbe(
        bid, alpha_fn=lambda t: abs(t - t0) ** beta,
        coeff_fn=lambda t: 1.0 / abs(t - t0) ** beta)
    t1, t2 = -0.5, 0.8
    rep = assemble_report({
        1.0 + 0j: ((t1,), [classify_point([mk(1, t1, 1.1), mk(2, t1, 1.2)],
                                          t1, 0.05, levels=6)]),
        2.0 + 0j: ((t1,), [classify_point([mk(3, t1, 1.05)], t1, 0.05,
                                          levels=6)]),
        3.0 + 0j: ((t2,), [classify_point([mk(4, t2, 1.3)], t2, 0.05,
                                          levels=6)]),
    })
    union = set()
    disjoint_ok = True
    for i in rep.S_i:
        union |= set(rep.S_i[i])
        groups = list(rep.S_ij[i].values())
        for a in range(len(groups)):
            for b in range(a + 1, len(groups)):
                disjoint_ok = disjoint_ok and not (set(groups[a])
                                                   & set(groups[b]))
        covered = set().union(*map(set, groups)) if groups else set()
        disjoint_ok = disjoint_ok and covered == set(rep.S_i[i])
    union_ok = union == set(rep.S)

    ok = bounds_ok and union_ok and disjoint_ok
    assert report(10, ok, f"fibre sizes per example {sizes} all within n*m; "
                          f"S == union of S_i: {union_ok}; bundles "
                          f"partition each S_i: {disjoint_ok}")
