import numpy as np
import pytest

import blochspec as bs
from blochspec import IntegratorStall, OperatorSpec
from blochspec.floquet import sylvester_resultant


def test_monodromy_free_order2_closed_form():
    spec = OperatorSpec.free(2, 1)
    w = 2.3
    res = bs.monodromy(spec, -w ** 2, tol=1e-11)
    M_ref = np.array([[np.cos(w), np.sin(w) / w],
                      [-w * np.sin(w), np.cos(w)]])
    assert np.linalg.norm(res.M - M_ref) < 1e-9


def test_monodromy_pascal_at_lambda_zero():
    from math import factorial
    for n in (2, 3, 4):
        spec = OperatorSpec.free(n, 1)
        M = bs.monodromy(spec, 0.0, tol=1e-12).M
        ref = np.zeros((n, n))
        for i in range(n):
            for j in range(i, n):
                ref[i, j] = 1.0 / factorial(j - i)
        assert np.linalg.norm(M - ref) < 1e-10


def test_monodromy_block_diagonal_constant_oracle():
    # diagonal C decouples into scalar third-order problems; the scalar
    # monodromy follows from the roots of omega^3 + mu omega = lambda via a
    # Vandermonde similarity (independent construction)
    C = np.diag([1.0, 4.0])
    spec = OperatorSpec.constant_coupling(3, C)
    lam = 2.0 + 0.5j
    M = bs.monodromy(spec, lam, tol=1e-12).M
    for j, mu in enumerate([1.0, 4.0]):
        omegas = np.roots([1.0, 0.0, mu, -lam])
        V = np.vander(omegas, 3, increasing=True).T   # rows: w^0, w^1, w^2
        D = np.diag(np.exp(omegas))
        M_scalar = V @ D @ np.linalg.inv(V)
        idx = [k * 2 + j for k in range(3)]
        assert np.linalg.norm(M[np.ix_(idx, idx)] - M_scalar) < 1e-8


def test_monodromy_det_is_one_without_p1(constant_spec):
    M = bs.monodromy(constant_spec, 1.3 - 0.7j, tol=1e-12).M
    assert abs(np.linalg.det(M) - 1.0) < 1e-8


def test_monodromy_tol_validation(free_spec):
    with pytest.raises(ValueError):
        bs.monodromy(free_spec, 1.0, tol=1e-3)


def test_char_det_free_values(free_spec):
    # lambda = -pi^2 is an eigenvalue at t = pi and not at t = 0, where the
    # closed form gives exp(2it) - 2 cos(pi) exp(it) + 1 -> 4
    assert abs(bs.char_det(free_spec, -np.pi ** 2, np.pi)) < 1e-8
    val = bs.char_det(free_spec, -np.pi ** 2, 0.0)
    assert abs(val - 4.0) < 1e-8


def test_char_poly_free_coefficients(free_spec):
    w = 1.7
    cp = bs.char_poly_coeffs(free_spec, -w ** 2)
    assert np.allclose(cp.coeffs, [1.0, -2 * np.cos(w), 1.0], atol=1e-9)


def test_char_poly_constant_term_without_p1(constant_spec):
    # nm even here, so the monic constant term is det M = +1
    cp = bs.char_poly_coeffs(constant_spec, 0.9 + 0.3j)
    assert abs(cp.coeffs[0] - 1.0) < 1e-8
    # odd nm flips the sign but keeps |det M| = 1
    spec3 = OperatorSpec.free(3, 1)
    cp3 = bs.char_poly_coeffs(spec3, 1.0)
    assert abs(abs(cp3.coeffs[0]) - 1.0) < 1e-8


def test_char_poly_multipliers_constant_oracle():
    # order 3, trivial coefficients, lambda = 1: multipliers are exp of the
    # cube roots of unity
    spec = OperatorSpec.free(3, 1)
    cp = bs.char_poly_coeffs(spec, 1.0)
    roots = np.exp(np.roots([1.0, 0.0, 0.0, -1.0]))
    for r in roots:
        assert np.min(np.abs(cp.multipliers - r)) < 1e-9


def test_det_consistency_raw_vs_coefficients(perturbed_spec):
    rng = np.random.default_rng(7)
    nm = perturbed_spec.n * perturbed_spec.m
    for _ in range(3):
        lam = complex(rng.uniform(-20, 5), rng.uniform(-5, 5))
        t = rng.uniform(-np.pi, np.pi)
        raw = bs.char_det_raw(perturbed_spec, lam, t)
        cp = bs.char_poly_coeffs(perturbed_spec, lam)
        poly_val = np.polyval(cp.coeffs[::-1], np.exp(1j * t))
        M = bs.monodromy(perturbed_spec, lam).M
        scale = max(1.0, np.linalg.norm(M)) ** nm
        assert abs(raw - poly_val) < 1e-9 * scale


def test_multiplier_stability_at_large_lambda():
    # the unimodular Floquet multiplier survives where the direct monodromy
    # has long lost it
    spec = OperatorSpec.free(3, 1)
    s = 2 * np.pi * 8 + 0.7
    lam = (1j * s) ** 3
    data = bs.floquet_multipliers(spec, lam)
    zu = data.z[np.argmin(np.abs(np.abs(data.z) - 1.0))]
    assert abs(zu - np.exp(1j * s)) < 1e-8
    assert data.n_segments > 1


def test_galerkin_eigenvalue_is_char_det_zero(perturbed_spec):
    t = 1.0
    pairs = bs.solve_eigen(perturbed_spec, t, 16)
    ref = bs.reference_eigenpair(perturbed_spec, 2, 0, t, "free", K=4).lam
    lam = min((p.lam for p in pairs), key=lambda z: abs(z - ref))
    assert abs(bs.char_det(perturbed_spec, lam, t)) < 1e-6


def test_sylvester_resultant_against_numpy_roots():
    rng = np.random.default_rng(13)
    p = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    q = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    # Res(p, q) = lc(p)^deg q * prod q(roots of p)
    roots = np.roots(p[::-1])
    expected = p[-1] ** (len(q) - 1) * np.prod([np.polyval(q[::-1], r)
                                                for r in roots])
    got = sylvester_resultant(p, q)
    assert abs(got - expected) < 1e-10 * max(1.0, abs(expected))


def test_resultant_scan_free_operator(free_catalog):
    got = sorted(e.a.real for e in free_catalog.entries)
    expected = [-(np.pi * k) ** 2 for k in (3, 2, 1)]
    assert len(got) == 3
    assert np.allclose(got, sorted(expected), atol=1e-6)
    for e in free_catalog.entries:
        assert abs(e.a.imag) < 1e-6
        k = int(round(np.sqrt(-e.a.real) / np.pi))
        want_t = 0.0 if k % 2 == 0 else np.pi
        assert len(e.A) == 1 and abs(e.A[0] - want_t) < 1e-6
        assert len(e.A) <= 2   # nm bound
        assert e.residual < 1e-7


def test_resultant_scan_constantc_oracle(constant_spec):
    # brute-force oracle over |k| <= 2 finds exactly one multiple eigenvalue,
    # lambda = 0, attained at the five quasimomenta with 2 pi k + t in
    # {0, +-1, +-2} (the roots of mu s = s^3 for both mu)
    cat = bs.resultant_scan(constant_spec, (-5.0, 5.0, -40.0, 40.0),
                            grid=(9, 33))
    assert len(cat.entries) == 1
    e = cat.entries[0]
    assert abs(e.a) < 1e-7
    assert np.allclose(sorted(e.A), [-2.0, -1.0, 0.0, 1.0, 2.0], atol=1e-7)
    assert len(e.A) <= constant_spec.n * constant_spec.m
    assert [round(t, 8) for t in e.degenerate_t] == [0.0]
    assert e.residual < 1e-7


def test_resultant_scan_stable_under_perturbation(constant_spec,
                                                  perturbed_spec):
    region = (-5.0, 5.0, -40.0, 40.0)
    cat0 = bs.resultant_scan(constant_spec, region, grid=(9, 33))
    cat1 = bs.resultant_scan(perturbed_spec, region, grid=(9, 33))
    assert len(cat0.entries) == len(cat1.entries)
    for e0, e1 in zip(cat0.entries, cat1.entries):
        assert abs(e0.a - e1.a) < 1.0   # moved O(eps)
        assert len(e1.A) <= perturbed_spec.n * perturbed_spec.m


def test_integrator_stall():
    spec = OperatorSpec.free(3, 1)
    with np.errstate(all="ignore"), pytest.raises(IntegratorStall):
        import warnings
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            bs.monodromy(spec, 1e9 + 0j, tol=1e-12)
