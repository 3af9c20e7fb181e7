"""Scenario configuration and the end-to-end verification pipeline.

A scenario is a TOML file with the tables ``grid``, ``equation``,
``family``, ``solver``, ``verification``, and optionally ``oracle``,
``expect`` and ``output``. :func:`run_scenario` executes

    solve -> pair -> factorize -> elliptic coefficients
          -> weak / adjoint residuals -> reverse Hoelder -> zero sets

and returns a :class:`VerificationReport` with a pass/fail entry per rule.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import adjoint_pde, generators
from .beltrami_solver import (
    BeltramiCoefficients,
    QCSolution,
    ReducedCoefficient,
    component_relations_from_derivatives,
    reduced_to_general,
    solve_principal,
    solve_reduced,
)
from .errors import BeltramiLabError, ConfigurationError, ConvergenceError, EllipticityError
from .field_grid import (
    ComplexField,
    GridSpec,
    coordinate_field,
    dump_csv,
    load_csv,
    relative_l2,
)
from .linear_family import (
    DEFAULT_TAUS,
    LinearFamilyPair,
    family_report,
    jacobian_pairing,
    pairing_scale,
)

log = logging.getLogger(__name__)

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_CONVERGENCE = 0, 1, 2, 3

DEFAULT_RULES = {
    "zero_fraction_max": 0.01,
    "zero_fraction_tau": 1e-6,
    "sign_violation_max": 1e-3,
    "chain_rule_max": 1e-4,
    "reduced_residual_max": 1e-6,
    "weak_residual_max": 1e-5,
    "adjoint_residual_max": 1e-4,
    "bridging_residual_max": 1e-4,
    "component_factor": 10.0,
    "degenerate_pairing_max": 1e-12,
    "rh_lower_slack": 1e-3,
}


def parse_complex(value) -> complex:
    """Accept a number, a ``[re, im]`` pair or a Python complex literal string."""
    if isinstance(value, (int, float, complex)) and not isinstance(value, bool):
        return complex(value)
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return complex(float(value[0]), float(value[1]))
    if isinstance(value, str):
        try:
            return complex(value.replace(" ", ""))
        except ValueError:
            pass
    raise ConfigurationError(f"cannot read {value!r} as a complex number")


@dataclass
class ScenarioConfig:
    name: str
    grid: dict
    equation: dict
    family: dict
    solver: dict = field(default_factory=dict)
    verification: dict = field(default_factory=dict)
    oracle: dict = field(default_factory=dict)
    expect: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    description: str = ""
    base_dir: Path = field(default=Path("."), repr=False)

    @classmethod
    def from_dict(cls, data: dict, base_dir=".") -> "ScenarioConfig":
        try:
            cfg = cls(
                name=str(data["name"]),
                grid=dict(data.get("grid", {})),
                equation=dict(data["equation"]),
                family=dict(data.get("family", {"kind": "solved"})),
                solver=dict(data.get("solver", {})),
                verification=dict(data.get("verification", {})),
                oracle=dict(data.get("oracle", {})),
                expect=dict(data.get("expect", {})),
                output=dict(data.get("output", {})),
                description=str(data.get("description", "")),
                base_dir=Path(base_dir),
            )
        except KeyError as exc:
            raise ConfigurationError(f"scenario is missing required key {exc}") from None
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        path = Path(path)
        try:
            with path.open("rb") as fh:
                data = tomllib.load(fh)
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ConfigurationError(f"cannot read scenario {path}: {exc}") from None
        return cls.from_dict(data, base_dir=path.parent)

    # -- derived settings -------------------------------------------------
    @property
    def spec(self) -> GridSpec:
        g = self.grid
        return GridSpec(int(g.get("n", 128)), float(g.get("side", 2 * math.pi)),
                        parse_complex(g.get("origin", 0.0)))

    @property
    def tol(self) -> float:
        return float(self.solver.get("tol", 1e-10))

    @property
    def max_iter(self) -> int:
        return int(self.solver.get("max_iter", 500))

    def rule(self, key):
        return self.expect.get(key, DEFAULT_RULES.get(key))

    def skipped_rules(self) -> set:
        return set(self.expect.get("skip_rules", []))

    def validate(self):
        self.spec  # raises on bad grids
        if not self.tol > 0:
            raise ConfigurationError("solver.tol must be positive")
        if self.max_iter < 1:
            raise ConfigurationError("solver.max_iter must be >= 1")
        etype = self.equation.get("type", "general")
        if etype not in ("general", "reduced"):
            raise ConfigurationError(f"equation.type must be general or reduced, got {etype!r}")
        kind = self.family.get("kind", "solved")
        if kind not in ("solved", "identity_partner", "affine", "polynomial"):
            raise ConfigurationError(f"unknown family kind {kind!r}")
        for key in ("k", "amplitude"):
            val = self.equation.get("params", {}).get(key)
            if val is not None and not float(val) < 1:
                raise ConfigurationError(f"equation.params.{key} must be < 1")

    def echo(self) -> dict:
        return _jsonable({
            "name": self.name, "description": self.description, "grid": self.grid,
            "equation": self.equation, "family": self.family, "solver": self.solver,
            "verification": self.verification, "oracle": self.oracle, "expect": self.expect,
        })

    def with_seed(self, seed: int) -> "ScenarioConfig":
        ver = dict(self.verification)
        for key in ("bump_seed", "disk_seed", "lambda_seed"):
            ver[key] = int(seed)
        return ScenarioConfig(self.name, self.grid, self.equation, self.family, self.solver,
                              ver, self.oracle, self.expect, self.output, self.description,
                              self.base_dir)


@dataclass
class VerificationReport:
    name: str
    scenario: dict
    fragments: dict = field(default_factory=dict)
    acceptance: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    error: dict | None = None
    exit_code: int = EXIT_OK

    @property
    def passed(self) -> bool:
        return self.exit_code == EXIT_OK

    def to_dict(self, timings: bool = True) -> dict:
        out = {"name": self.name, "scenario": self.scenario, **self.fragments,
               "acceptance": self.acceptance, "passed": self.passed,
               "exit_code": self.exit_code, "error": self.error}
        if timings:
            out["timings"] = self.timings
        return _jsonable(out)

    def to_json(self, timings: bool = True) -> str:
        return json.dumps(self.to_dict(timings), indent=2, sort_keys=True, allow_nan=False)

    def check(self, rule: str, value, threshold, op: str = "<="):
        """Record one acceptance rule."""
        if value is None or (isinstance(value, float) and math.isnan(value)):
            ok = False
        elif op == "<=":
            ok = value <= threshold
        elif op == ">=":
            ok = value >= threshold
        else:
            ok = value == threshold
        self.acceptance[rule] = {"value": value, "threshold": threshold, "op": op,
                                 "passed": bool(ok)}
        return ok


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        val = float(obj)
        return val if math.isfinite(val) else None
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, Path):
        return str(obj)
    return obj


# -- pipeline stages --------------------------------------------------------

def _load_field(cfg: ScenarioConfig, name) -> ComplexField:
    path = cfg.base_dir / name
    try:
        return load_csv(path, cfg.spec)
    except (OSError, ValueError) as exc:
        raise ConfigurationError(f"cannot read field {path}: {exc}") from None


def build_equation(cfg: ScenarioConfig):
    """Returns (general coefficients, reduced coefficient or None)."""
    spec = cfg.spec
    eq = cfg.equation
    etype = eq.get("type", "general")
    params = dict(eq.get("params", {}))
    if etype == "reduced":
        if "lambda_csv" in eq:
            lam = ReducedCoefficient(_load_field(cfg, eq["lambda_csv"]))
        else:
            for key in ("value", "center"):
                if key in params:
                    params[key] = parse_complex(params[key])
            lam = generators.reduced_coefficient(spec, eq.get("generator", "constant"), **params)
        return reduced_to_general(lam), lam
    if "mu_csv" in eq or "nu_csv" in eq:
        zero = ComplexField(spec, np.zeros((spec.n, spec.n)))
        mu = _load_field(cfg, eq["mu_csv"]) if "mu_csv" in eq else zero
        nu = _load_field(cfg, eq["nu_csv"]) if "nu_csv" in eq else zero
        return BeltramiCoefficients(mu, nu), None
    for key in ("mu", "nu", "center"):
        if key in params:
            params[key] = parse_complex(params[key])
    return generators.general_coefficients(spec, eq.get("generator", "constant"), **params), None


def build_family(cfg: ScenarioConfig, coeffs, lam):
    spec = cfg.spec
    fam = cfg.family
    kind = fam.get("kind", "solved")
    tol, max_iter = cfg.tol, cfg.max_iter

    def solve(linear):
        if lam is not None:
            return solve_reduced(lam, tol, max_iter, linear)
        return solve_principal(coeffs, tol, max_iter, linear)

    if kind == "solved":
        phi = solve(parse_complex(fam.get("phi_linear", 1.0)))
        psi = solve(parse_complex(fam.get("psi_linear", 1j)))
    elif kind == "identity_partner":
        phi = QCSolution.affine(spec)
        psi = solve(parse_complex(fam.get("psi_linear", 1j)))
    elif kind == "affine":
        phi = QCSolution.affine(spec, *[parse_complex(v) for v in fam.get("phi", [1.0, 0.0])])
        psi = QCSolution.affine(spec, *[parse_complex(v) for v in fam.get("psi", [1j, 0.0])])
    else:
        phi = QCSolution.from_polynomial(spec, [parse_complex(c) for c in fam["phi_poly"]])
        psi = QCSolution.from_polynomial(spec, [parse_complex(c) for c in fam["psi_poly"]])
    return phi, psi


def oracle_fragment(cfg: ScenarioConfig, phi: QCSolution, psi: QCSolution, coeffs, report):
    orc = cfg.oracle
    kind = orc.get("kind")
    if not kind:
        return {"skipped": "no oracle configured"}
    spec = cfg.spec
    tolerance = float(orc.get("tolerance", 1e-10))
    if kind == "radial_stretch":
        params = cfg.equation.get("params", {})
        k = float(params.get("k", 1 / 3))
        radius = float(params.get("radius", 1.0))
        exact = generators.radial_stretch_displacement(spec, k, radius)
        err = relative_l2(phi.displacement.values, exact)
        report.check("oracle_error", err, tolerance)
        return {"kind": kind, "relative_l2_displacement": err, "tolerance": tolerance,
                "antilinear": phi.antilinear}
    if kind == "affine":
        # exact solution a z + b conj(z), b = mu a + nu conj(a), constant coefficients
        mu = complex(coeffs.mu.values.flat[0])
        nu = complex(coeffs.nu.values.flat[0])
        errs = {}
        for name, m in (("phi", phi), ("psi", psi)):
            a = m.linear
            b = mu * a + nu * np.conj(a)
            z = coordinate_field(spec).values
            exact = a * z + b * np.conj(z)
            errs[name] = relative_l2(m.values, exact)
        worst = max(errs.values())
        report.check("oracle_error", worst, tolerance)
        return {"kind": kind, "relative_l2": errs, "tolerance": tolerance}
    raise ConfigurationError(f"unknown oracle kind {kind!r}")


def _solver_fragment(m: QCSolution) -> dict:
    return {"iterations": m.iterations, "residual": m.residual,
            "linear": m.linear, "antilinear": m.antilinear,
            "nonpositive_jacobian_fraction": m.nonpositive_jacobian_fraction()}


def run_scenario(cfg: ScenarioConfig) -> VerificationReport:
    """Execute the full verification chain; module errors are captured by stage."""
    report = VerificationReport(cfg.name, cfg.echo())
    ver = cfg.verification
    taus = tuple(float(t) for t in ver.get("taus", DEFAULT_TAUS))
    skip = cfg.skipped_rules()
    stage = "configure"
    clock = time.perf_counter()

    def tick(name):
        nonlocal clock
        now = time.perf_counter()
        report.timings[name] = now - clock
        clock = now

    try:
        stage = "equation"
        coeffs, lam = build_equation(cfg)
        report.fragments["equation"] = {"k": coeffs.k, "K": coeffs.K,
                                        "reduced": lam is not None}
        tick(stage)

        stage = "solve"
        phi, psi = build_family(cfg, coeffs, lam)
        report.fragments["solver"] = {"phi": _solver_fragment(phi), "psi": _solver_fragment(psi)}
        if cfg.family.get("kind", "solved") in ("solved", "identity_partner"):
            report.check("solver_residual", max(phi.residual, psi.residual), cfg.tol)
        tick(stage)

        stage = "oracle"
        report.fragments["oracle"] = oracle_fragment(cfg, phi, psi, coeffs, report)
        tick(stage)

        stage = "pair"
        pair_tol = max(cfg.tol, float(ver.get("pair_tol", cfg.tol)))
        pair = LinearFamilyPair(phi, psi, coeffs, tol=pair_tol)
        fam, fact = family_report(pair, taus, int(ver.get("lambda_samples", 100_000)),
                                  int(ver.get("lambda_seed", 0)))
        frag = fam.as_dict()
        report.fragments["linear_family"] = frag
        tick(stage)
        _family_rules(cfg, report, pair, fam, skip)

        stage = "factorize"
        if fact is None:
            report.fragments["component_relations"] = {"skipped": "degenerate family"}
            report.fragments["adjoint_pde"] = {"skipped": "degenerate family"}
        else:
            comp = component_relations_from_derivatives(
                fact.f_w, fact.f_wbar, fact.lam.imag, mask=fact.mask)
            report.fragments["component_relations"] = comp.as_dict()
            factor = cfg.rule("component_factor") * max(cfg.tol, 1e-14)
            if "component_relations" not in skip:
                report.check("component_vx_residual", comp.vx_residual, factor)
                report.check("component_uy_residual", comp.uy_residual, factor)
            tick(stage)

            stage = "adjoint_pde"
            if ver.get("adjoint", True) is False:
                report.fragments["adjoint_pde"] = {"skipped": "disabled by scenario"}
            else:
                adj = adjoint_pde.adjoint_report(
                    phi, psi, fact,
                    bump_count=int(ver.get("bump_count", 20)),
                    bump_seed=int(ver.get("bump_seed", 0)),
                    radii_h=tuple(int(r) for r in ver.get("disk_radii_h", (8, 16, 32))),
                    disk_centers=int(ver.get("disk_centers", 50)),
                    disk_seed=int(ver.get("disk_seed", 0)),
                    taus=taus,
                )
                report.fragments["adjoint_pde"] = adj.as_dict()
                _adjoint_rules(cfg, report, adj, phi, skip)
            tick(stage)
    except ConvergenceError as exc:
        report.error = {"stage": stage, "type": type(exc).__name__, "message": str(exc),
                        "residual": exc.residual}
        report.exit_code = EXIT_CONVERGENCE
        return report
    except (ConfigurationError, EllipticityError) as exc:
        # ellipticity is a precondition on the configured coefficients
        report.error = {"stage": stage, "type": type(exc).__name__, "message": str(exc)}
        report.exit_code = EXIT_CONFIG if stage == "equation" or isinstance(
            exc, ConfigurationError) else EXIT_VERIFY
        return report
    except BeltramiLabError as exc:
        report.error = {"stage": stage, "type": type(exc).__name__, "message": str(exc)}
        report.exit_code = EXIT_VERIFY
        return report

    if not all(r["passed"] for r in report.acceptance.values()):
        report.exit_code = EXIT_VERIFY
    return report


def _family_rules(cfg, report, pair, fam, skip):
    expect = cfg.expect
    if "lambda_verdict" in expect:
        report.check("lambda_verdict", fam.lambda_sign_verdict, expect["lambda_verdict"], "==")
    if "degenerate" in expect:
        report.check("degenerate", fam.degenerate is not None, bool(expect["degenerate"]), "==")
    if fam.degenerate is not None:
        scale = pairing_scale(pair.phi, pair.psi)
        report.check("pairing_vanishes", float(np.max(np.abs(pair.pairing))),
                     cfg.rule("degenerate_pairing_max") * max(scale, 1.0))
        report.check("zero_fraction_all", min(fam.zero_fractions.values()), 1.0, ">=")
        return
    if fam.lambda_sign_verdict not in ("all-negative", "all-positive"):
        # not a linear family: the dichotomy makes no claim
        return
    tau = float(cfg.rule("zero_fraction_tau"))
    zf = fam.zero_fractions.get(tau)
    if zf is None:
        zf = float(np.mean(np.abs(pair.pairing) < tau * np.max(np.abs(pair.pairing))))
    if "zero_fraction" not in skip:
        report.check("zero_fraction", zf, cfg.rule("zero_fraction_max"))
    if "sign_violation" not in skip:
        report.check("sign_violation", fam.sign_violation_fraction, cfg.rule("sign_violation_max"))
    if "chain_rule" not in skip:
        report.check("chain_rule_residual", fam.chain_rule_residual, cfg.rule("chain_rule_max"))
    if "lambda_sup" not in skip:
        report.check("lambda_sup", fam.lambda_sup, fam.k_prime_bound + 1e-10)
    if "reduced_residual" not in skip:
        report.check("reduced_residual", fam.reduced_residual, cfg.rule("reduced_residual_max"))


def _adjoint_rules(cfg, report, adj, phi, skip):
    for key in ("weak_residual", "adjoint_residual", "bridging_residual"):
        if key not in skip:
            report.check(key, getattr(adj, key), cfg.rule(f"{key}_max"))
    if adj.c0_empirical is not None and "rh_lower_bound" not in skip and adjoint_pde.is_identity(phi):
        lo = float(adj.ratios_histogram["edges"][0])
        report.check("rh_lower_bound", lo, 1 / math.sqrt(math.pi) - cfg.rule("rh_lower_slack"),
                     ">=")
    if "rh_required" in cfg.expect and cfg.expect["rh_required"]:
        report.check("rh_present", adj.c0_empirical is not None, True, "==")


# -- output -----------------------------------------------------------------

SUMMARY_COLUMNS = (
    "name", "passed", "exit_code", "pairing_min", "pairing_max", "zero_fraction_1e-06",
    "lambda_sign_verdict", "degenerate", "chain_rule_residual", "weak_residual",
    "adjoint_residual", "c0_empirical",
)


def summary_row(report: VerificationReport) -> dict:
    d = report.to_dict(timings=False)
    fam = d.get("linear_family", {}) or {}
    adj = d.get("adjoint_pde", {}) or {}
    return {
        "name": report.name,
        "passed": report.passed,
        "exit_code": report.exit_code,
        "pairing_min": fam.get("pairing_min"),
        "pairing_max": fam.get("pairing_max"),
        "zero_fraction_1e-06": (fam.get("zero_fractions") or {}).get("1e-06"),
        "lambda_sign_verdict": fam.get("lambda_sign_verdict"),
        "degenerate": fam.get("degenerate") is not None,
        "chain_rule_residual": fam.get("chain_rule_residual"),
        "weak_residual": adj.get("weak_residual"),
        "adjoint_residual": adj.get("adjoint_residual"),
        "c0_empirical": adj.get("c0_empirical"),
    }


def emit_report(report: VerificationReport, outdir, fmt: str = "json") -> Path:
    """Write ``<name>.json`` or a one-row ``<name>.csv``; returns the path."""
    outdir = Path(outdir)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        if fmt == "json":
            path = outdir / f"{report.name}.json"
            path.write_text(report.to_json() + "\n")
        elif fmt == "csv-summary":
            path = outdir / f"{report.name}.csv"
            write_summary([report], path)
        else:
            raise ConfigurationError(f"unknown report format {fmt!r}")
    except OSError as exc:
        raise OSError(f"cannot write report to {outdir}: {exc}") from exc
    return path


def write_summary(reports, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS)
        writer.writeheader()
        for rep in reports:
            row = summary_row(rep)
            writer.writerow({k: ("" if v is None else (f"{v:.17g}" if isinstance(v, float) else v))
                             for k, v in row.items()})
    return path


def dump_fields(cfg: ScenarioConfig, outdir) -> list:
    """Write coefficient, mapping and pairing fields as CSV."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    spec = cfg.spec
    coeffs, lam = build_equation(cfg)
    phi, psi = build_family(cfg, coeffs, lam)
    fields = {
        "mu": coeffs.mu,
        "nu": coeffs.nu,
        "phi": ComplexField(spec, phi.values),
        "psi": ComplexField(spec, psi.values),
        "pairing": ComplexField(spec, jacobian_pairing(phi, psi)),
        "psi_u_y": ComplexField(spec, psi.u_y),
    }
    if lam is not None:
        fields["lambda"] = lam.lam
    else:
        mu, nu = coeffs.mu.values, coeffs.nu.values
        fields["lambda"] = ComplexField(
            spec, -2j * nu / (1 + np.abs(nu) ** 2 - np.abs(mu) ** 2))
    wanted = cfg.output.get("fields")
    if wanted is True:
        wanted = None
    paths = []
    for name, fld in fields.items():
        if wanted and name not in wanted:
            continue
        paths.append(dump_csv(fld, outdir / f"{cfg.name}_{name}.csv"))
    return paths
