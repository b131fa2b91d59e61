"""Command-line front door: config parsing, pipelines, report emission.

Subcommands: bands, oracle-check, singularities, expand, verify-asymptotics,
selfcheck.  Exit codes: 0 success, 1 configuration/validation error,
2 numerical failure; errors always emit a machine-readable JSON object on
stderr.  Randomized scans take their seed from the config (default 42) and
outputs are formatted deterministically, so identical configs give
byte-identical files.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bands import (band_csv_rows, track_bands, verify_eigenfunction_asymptotics,
                    verify_eigenvalue_asymptotics)
from .errors import (BlochspecError, ConfigInvalid, DegenerateMeanMatrix,
                     HuddleDiverged, IntegratorStall, NonIntegrableBranch)
from .expansion import ExpansionParams, TestFunction, reconstruct
from .floquet import char_det, default_scan_region, resultant_scan
from .fourier import TrigPoly
from .galerkin import match_eigenvalues, reference_eigenpair, solve_eigen
from .operator import OperatorSpec, compute_mean_matrix, reduce_p1
from .singularities import classify_singularities

_TOLERANCE_KEYS = ("quad_tol", "cross_tol", "eig_tol", "deg_tol",
                   "ess_margin", "bound_cap")
_TF_KINDS = ("bump", "gaussian_truncated", "custom_samples")


@dataclass
class RunConfig:
    operator: str
    K: int = 16
    t_grid_size: int = 64
    K_branch: int = 8
    delta0: float = 0.05
    levels: int = 6
    seed: int = 42
    quad_tol: float = 1e-6
    cross_tol: float = 1e-8
    eig_tol: float = 1e-8
    deg_tol: float = 1e-8
    ess_margin: float = 0.05
    bound_cap: float = 1e6
    test_function: dict = field(default_factory=lambda: {
        "kind": "bump", "support": [-1.0, 1.0], "weights": None})
    out_dir: str = "out"
    k_fit_range: list = field(default_factory=lambda: [6, 16])
    scan_region: list | None = None
    scan_grid: list = field(default_factory=lambda: [24, 24])
    windows: list = field(default_factory=lambda: [[-2.0, 2.0]])
    x_grid: list = field(default_factory=lambda: [-2.5, 2.5, 801])
    mode: str = "huddled"
    force: bool = False

    @classmethod
    def from_file(cls, path):
        try:
            doc = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigInvalid("config", f"file not found: {path}")
        except json.JSONDecodeError as exc:
            raise ConfigInvalid("config", f"invalid JSON: {exc}")
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ConfigInvalid(sorted(unknown)[0], "unknown config field")
        if "operator" not in doc:
            raise ConfigInvalid("operator", "missing operator path")
        cfg = cls(**doc)
        cfg.validate()
        return cfg

    def validate(self):
        for key in _TOLERANCE_KEYS:
            if not (getattr(self, key) > 0):
                raise ConfigInvalid(key, "tolerance must be positive")
        if self.t_grid_size < 64:
            raise ConfigInvalid("t_grid_size", "must be >= 64")
        if self.K < self.K_branch * 2:
            raise ConfigInvalid("K_branch", "K must be >= 2 * K_branch")
        tf = self.test_function
        if tf.get("kind") not in _TF_KINDS:
            raise ConfigInvalid("test_function.kind",
                                f"must be one of {_TF_KINDS}")
        if self.mode not in ("huddled", "separate"):
            raise ConfigInvalid("mode", "must be 'huddled' or 'separate'")

    def load_operator(self, base_dir="."):
        path = Path(self.operator)
        if not path.is_absolute():
            path = Path(base_dir) / path
        try:
            doc = json.loads(path.read_text())
        except FileNotFoundError:
            raise ConfigInvalid("operator", f"file not found: {path}")
        except json.JSONDecodeError as exc:
            raise ConfigInvalid("operator", f"invalid JSON: {exc}")
        return OperatorSpec.from_json_dict(doc)

    def build_test_function(self, m):
        tf = self.test_function
        weights = tf.get("weights")
        if weights is None:
            weights = np.ones(m)
        else:
            weights = np.asarray(weights, dtype=complex)
            if len(weights) != m:
                raise ConfigInvalid("test_function.weights",
                                    f"needs {m} entries")
        support = tuple(tf.get("support", (-1.0, 1.0)))
        kind = tf["kind"]
        if kind == "bump":
            return TestFunction.bump(support, weights)
        if kind == "gaussian_truncated":
            return TestFunction.gaussian_truncated(
                tf.get("center", 0.5 * (support[0] + support[1])),
                tf.get("sigma", 0.25 * (support[1] - support[0])),
                support, weights)
        xs = np.asarray(tf["x"], dtype=float)
        vals = np.asarray(tf["values"], dtype=float)
        return TestFunction.from_samples(xs, vals)

    def t_grid(self):
        n = self.t_grid_size
        return -np.pi + (np.arange(n) + 0.5) * (2 * np.pi / n)


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not serializable: {type(obj)}")


def _write_json(path, doc):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True,
                               default=_json_default) + "\n")


def _write_csv(path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for v in row:
            if isinstance(v, float):
                cells.append(format(v, ".17g"))
            else:
                cells.append(str(v))
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


BAND_CSV_HEADER = ["p", "k", "j", "t", "Re λ", "Im λ", "|α|",
                   "continuity_flag"]


# ---------------------------------------------------------------------------
# subcommand pipelines
# ---------------------------------------------------------------------------

def _cmd_bands(cfg, out):
    spec = cfg.load_operator()
    coll = track_bands(spec, cfg.K, cfg.t_grid(), force_mean=cfg.force)
    _write_csv(out / "bands.csv", BAND_CSV_HEADER, band_csv_rows(coll))
    _write_json(out / "bands_summary.json", {
        "n0": coll.n0, "n1": coll.n1,
        "suspects": [float(s) for s in coll.suspects],
        "n_branches": len(coll.bands),
        "K": cfg.K, "t_grid_size": cfg.t_grid_size})
    return 0


def _cmd_oracle_check(cfg, out):
    from .bands import leading_eigenvalue
    spec = cfg.load_operator()
    reduced = reduce_p1(spec)
    mean = compute_mean_matrix(reduced.spec, force=cfg.force)
    n_t = min(cfg.t_grid_size, 16)
    ts = -np.pi + (np.arange(n_t) + 0.5) * (2 * np.pi / n_t)
    k_max = min(cfg.K // 2, 8)
    worst = 0.0
    rows = []
    for t in ts:
        pairs = solve_eigen(spec, float(t), cfg.K, residual_check=False)
        lams = np.array([p.lam for p in pairs])
        for k in range(-k_max, k_max + 1):
            for j in range(1, spec.m + 1):
                ref = leading_eigenvalue(spec, mean, reduced, k, j, float(t))
                lam = lams[np.argmin(np.abs(lams - ref))]
                val = abs(char_det(spec, complex(lam), float(t)))
                worst = max(worst, val)
                rows.append((float(t), k, j, lam.real, lam.imag, val))
    ok = worst < cfg.cross_tol * 100
    _write_csv(out / "oracle_check.csv",
               ["t", "k", "j", "Re lambda", "Im lambda", "char_det"], rows)
    _write_json(out / "oracle_summary.json",
                {"worst_char_det": worst, "passed": bool(ok),
                 "n_points": len(rows)})
    return 0 if ok else 2


def _cmd_singularities(cfg, out):
    spec = cfg.load_operator()
    coll = track_bands(spec, cfg.K, cfg.t_grid(), force_mean=cfg.force)
    if cfg.scan_region is not None:
        region = tuple(cfg.scan_region)
    else:
        region = default_scan_region(coll)
    catalog = resultant_scan(spec, region, grid=tuple(cfg.scan_grid))
    f_probe = cfg.build_test_function(spec.m)
    report = classify_singularities(catalog, coll, f_probe,
                                    seed=cfg.seed,
                                    ess_margin=cfg.ess_margin,
                                    bound_cap=cfg.bound_cap)
    _write_json(out / "singularities.json", report.to_json_dict())
    return 0


def _cmd_expand(cfg, out):
    spec = cfg.load_operator()
    f = cfg.build_test_function(spec.m)
    lo, hi, n = cfg.x_grid
    params = ExpansionParams(
        K=cfg.K, K_branch=cfg.K_branch,
        x_grid=np.linspace(float(lo), float(hi), int(n)),
        windows=tuple((float(a), float(b)) for a, b in cfg.windows),
        delta0=cfg.delta0, levels=cfg.levels, mode=cfg.mode,
        quad_tol=cfg.quad_tol, force_mean=cfg.force)
    result = reconstruct(f, spec, params)
    _write_json(out / "expansion.json", result.to_json_dict())
    _write_csv(out / "reconstruction.csv",
               ["x", "component", "Re value", "Im value"], result.csv_rows())
    return 0


def _cmd_verify_asymptotics(cfg, out):
    spec = cfg.load_operator()
    reduced = reduce_p1(spec)
    target = reduced.spec if not spec.p1.is_zero else spec
    coll = track_bands(target, cfg.K, cfg.t_grid(), force_mean=cfg.force)
    k_lo, k_hi = cfg.k_fit_range
    ev = verify_eigenvalue_asymptotics(coll, k_lo, k_hi)
    ef = verify_eigenfunction_asymptotics(coll, k_lo, k_hi)
    doc = {
        "reduced": not spec.p1.is_zero,
        "eigenvalue": {"exponent": ev.exponents["lambda"][0],
                       "r2": ev.exponents["lambda"][1],
                       "threshold": ev.thresholds["lambda"],
                       "passed": ev.passed},
        "eigenfunction": {
            "psi_exponent": ef.exponents["psi"][0],
            "X_exponent": ef.exponents["X"][0],
            "threshold": ef.thresholds["psi"],
            "passed": ef.passed}}
    _write_json(out / "asymptotics.json", doc)
    return 0 if (ev.passed and ef.passed) else 2


def _cmd_selfcheck(cfg, out):
    checks = []

    def check(name, fn):
        try:
            fn()
            checks.append((name, True, ""))
            print(f"PASS {name}")
        except AssertionError as exc:
            checks.append((name, False, str(exc)))
            print(f"FAIL {name}: {exc}")

    free = OperatorSpec.free(2, 1)

    def free_eigs():
        t = np.pi / 2
        pairs = solve_eigen(free, t, 8)
        refs = [reference_eigenpair(free, k, 0, t, "free").lam
                for k in range(-4, 5)]
        worst, ok = match_eigenvalues([p.lam for p in pairs], refs, 1e-10)
        assert ok, f"free eigenvalue mismatch {worst:.2e}"

    def free_alpha():
        pairs = solve_eigen(free, 0.7, 8)
        worst = max(abs(abs(p.alpha) - 1.0) for p in pairs)
        assert worst < 1e-10, f"free |alpha| deviates by {worst:.2e}"

    def free_oracle():
        val = abs(char_det(free, -np.pi ** 2, np.pi))
        assert val < 1e-8, f"char det at a known eigenvalue: {val:.2e}"
        val4 = char_det(free, -np.pi ** 2, 0.0)
        assert abs(val4 - 4.0) < 1e-8, f"char det away from spectrum: {val4}"

    def reduction_identity():
        spec = OperatorSpec(n=2, m=1, p1=TrigPoly({0: 1.0}))
        red = reduce_p1(spec)
        w0 = sorted((p.lam for p in solve_eigen(spec, 0.3, 8)), key=abs)[:6]
        w1 = sorted((p.lam for p in solve_eigen(red.spec, red.shift(0.3), 8)),
                    key=abs)[:6]
        worst = max(abs(a - b) for a, b in zip(w0, w1))
        assert worst < 1e-8, f"reduction shift identity broke: {worst:.2e}"

    check("free operator eigenvalues exact", free_eigs)
    check("free operator alpha = 1", free_alpha)
    check("characteristic determinant oracle", free_oracle)
    check("first-order reduction shift identity", reduction_identity)

    _write_json(out / "selfcheck.json",
                {"checks": [{"name": n, "passed": p, "detail": d}
                            for n, p, d in checks]})
    return 0 if all(p for _, p, _ in checks) else 2


_COMMANDS = {
    "bands": _cmd_bands,
    "oracle-check": _cmd_oracle_check,
    "singularities": _cmd_singularities,
    "expand": _cmd_expand,
    "verify-asymptotics": _cmd_verify_asymptotics,
    "selfcheck": _cmd_selfcheck,
}


def _error_json(exc):
    return json.dumps({
        "error": type(exc).__name__,
        "message": str(exc),
        "path": getattr(exc, "path", None)})


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="blochspec",
        description="Bloch spectra, spectral singularities and spectral "
                    "expansions for periodic differential operators")
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=False,
                        help="run configuration JSON (optional for selfcheck)")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    parser.add_argument("--force", action="store_true",
                        help="proceed past a degenerate mean matrix")
    args = parser.parse_args(argv)

    try:
        if args.config is not None:
            cfg = RunConfig.from_file(args.config)
        elif args.command == "selfcheck":
            cfg = RunConfig(operator="<builtin>")
        else:
            raise ConfigInvalid("config", "--config is required")
        if args.seed is not None:
            cfg.seed = args.seed
        if args.force:
            cfg.force = True
        out = Path(args.out if args.out is not None else cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        return _COMMANDS[args.command](cfg, out)
    except ConfigInvalid as exc:
        print(_error_json(exc), file=sys.stderr)
        return 1
    except DegenerateMeanMatrix as exc:
        print(_error_json(exc), file=sys.stderr)
        return 1
    except (IntegratorStall, HuddleDiverged, NonIntegrableBranch) as exc:
        print(_error_json(exc), file=sys.stderr)
        return 2
    except BlochspecError as exc:
        print(_error_json(exc), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
