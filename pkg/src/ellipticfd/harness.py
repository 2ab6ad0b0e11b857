"""Experiment harness and command line interface.

Subcommands: solve, rates, delta, freeze, perturb, barrier, check. Each
takes a JSON problem config (see README for the schema) and writes CSV
(canonical machine output, fixed headers, full-precision floats) plus a
JSON sidecar with the fitted slope, or pure JSON with --format json.
Exit codes: 0 success, 1 assertion or convergence failure, 2 config error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field

import numpy as np

from .fields import (
    ScalarField,
    constant_field,
    field_from_config,
    matrix_field_from_config,
    quadratic_field,
    sin_product,
    cubic_axis,
    constant_coeff,
)
from .mesh import Ball, Mesh, MeshFunction, build_mesh, distance_to_boundary, domain_from_config
from .operators import (
    Isaacs,
    LinearVC,
    Nonlinearity,
    Pucci,
    check_ellipticity,
    field_inf,
    field_sup,
    make_isaacs,
    make_linear,
    perturb_inf,
    perturb_sup,
    pucci,
)
from .scheme import assemble, consistency_check, monotonicity_check
from .solver import holder_norm, manufactured_problem, solve_dirichlet
from .viscosity import delta_solution_check
from .regularize import inf_convolve, sup_convolve

__all__ = [
    "ConfigError",
    "ExperimentError",
    "ProblemConfig",
    "RateReport",
    "load_config",
    "parse_config",
    "setup_problem",
    "run_rates",
    "run_delta",
    "run_freeze",
    "run_perturb",
    "run_barrier",
    "BarrierReport",
    "cli_main",
    "main",
]


class ConfigError(ValueError):
    pass


class ExperimentError(RuntimeError):
    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


@dataclass
class ProblemConfig:
    domain: object
    operator: Nonlinearity
    f: ScalarField
    g: object            # ScalarField or the string "exact"
    exact: ScalarField | None
    h: float
    N: int
    method: str
    tol: float
    max_iter: int
    seed: int
    experiments: dict
    raw: dict


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON ({path}, line {e.lineno}): {e.msg}")


def _operator_from_config(cfg, domain) -> Nonlinearity:
    if not isinstance(cfg, dict) or "kind" not in cfg:
        raise ConfigError("operator: expected an object with a 'kind' field")
    kind = cfg["kind"]
    dim = domain.dim
    if kind == "laplacian":
        return make_linear(matrix_field_from_config("identity", dim), domain)
    if kind == "linear":
        return make_linear(matrix_field_from_config(cfg["coeff"], dim), domain)
    if kind == "pucci":
        return pucci(cfg["lam"], cfg["Lam"], cfg.get("sign", 1), dim, domain)
    if kind == "isaacs":
        coeffs = [[matrix_field_from_config(c, dim) for c in row] for row in cfg["coeffs"]]
        na, nb = len(coeffs), len(coeffs[0])
        if "controls_a" in cfg and cfg["controls_a"] != na:
            raise ConfigError(f"operator: controls_a = {cfg['controls_a']} but coeffs has {na} rows")
        if "controls_b" in cfg and cfg["controls_b"] != nb:
            raise ConfigError(f"operator: controls_b = {cfg['controls_b']} but coeffs has {nb} columns")
        runnings = None
        if cfg.get("runnings") is not None:
            runnings = [[field_from_config(r, dim) for r in row] for row in cfg["runnings"]]
        return make_isaacs(coeffs, domain, runnings)
    raise ConfigError(f"operator: unknown kind {kind!r}")


def parse_config(raw: dict) -> ProblemConfig:
    """Validate the JSON dict and build the continuum problem objects."""
    for key in ("domain", "operator"):
        if key not in raw:
            raise ConfigError(f"missing required field {key!r}")
    try:
        domain = domain_from_config(raw["domain"])
    except (KeyError, ValueError) as e:
        raise ConfigError(f"domain: {e}")
    dim = domain.dim
    F = _operator_from_config(raw["operator"], domain)

    exact = None
    if raw.get("exact") is not None:
        exact = field_from_config(raw["exact"], dim)

    f_spec = raw.get("f", "manufactured")
    if f_spec == "manufactured":
        if exact is None:
            raise ConfigError("f = 'manufactured' requires an 'exact' solution field")
        f, _ = manufactured_problem(exact, F)
    else:
        f = field_from_config(f_spec, dim)

    g_spec = raw.get("g", "exact" if exact is not None else "zero")
    if g_spec == "exact":
        if exact is None:
            raise ConfigError("g = 'exact' requires an 'exact' solution field")
        g = exact
    else:
        g = field_from_config(g_spec, dim)

    solver = raw.get("solver", {})
    method = solver.get("method", "policy")
    if method not in ("policy", "relax"):
        raise ConfigError(f"solver.method must be 'policy' or 'relax', got {method!r}")
    return ProblemConfig(
        domain=domain,
        operator=F,
        f=f,
        g=g,
        exact=exact,
        h=float(raw.get("h", 1 / 16)),
        N=int(raw.get("N", 2)),
        method=method,
        tol=float(solver.get("tol", 1e-10)),
        max_iter=int(solver.get("max_iter", 200_000)),
        seed=int(raw.get("seed", 0)),
        experiments=raw.get("experiments", {}),
        raw=raw,
    )


def setup_problem(p: ProblemConfig, h: float = None):
    """Mesh and assembled operator at the given (or configured) spacing."""
    mesh = build_mesh(p.domain, p.h if h is None else h, p.N)
    op = assemble(p.operator, p.f, mesh)
    return mesh, op


def _validate_operator(op, seed: int, trials: int = 500):
    """Monotonicity and consistency gate run before every experiment solve."""
    mono = monotonicity_check(op, trials, seed)
    if not mono.passed:
        raise ExperimentError(f"monotonicity violated in {mono.violations}/{mono.trials} trials")
    rng = np.random.default_rng([seed, 90210])
    dim = op.mesh.dim
    M = rng.normal(size=(dim, dim))
    quad = quadratic_field(M + M.T, rng.normal(size=dim), 0.0)
    cons = consistency_check(op, quad)
    if cons.sup_discrepancy > max(1e-10, cons.bound):
        raise ExperimentError(
            f"consistency failed on a quadratic: discrepancy {cons.sup_discrepancy:.3e}"
        )


@dataclass
class RateRow:
    param: float
    error: float
    runtime: float


@dataclass
class RateReport:
    experiment: str
    param_name: str
    rows: list
    slope: float | None = None
    r2: float | None = None
    extras: dict = dc_field(default_factory=dict)

    def fit(self):
        """Least-squares slope of log error against log parameter.

        Rows with error below 1e-13 are excluded (zero-error path); the fit
        needs at least three surviving rows. R^2 below 0.95 flags the report
        as unreliable in the extras.
        """
        pts = [(r.param, r.error) for r in self.rows if r.error > 1e-13]
        if len(pts) < 3:
            self.slope = None
            self.r2 = None
            return self
        lx = np.log([p for p, _ in pts])
        ly = np.log([e for _, e in pts])
        A = np.column_stack([lx, np.ones_like(lx)])
        coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
        pred = A @ coef
        ss_res = float(np.sum((ly - pred) ** 2))
        ss_tot = float(np.sum((ly - ly.mean()) ** 2))
        self.slope = float(coef[0])
        self.r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
        self.extras["unreliable_fit"] = self.r2 < 0.95
        return self

    def to_csv(self, path: str):
        with open(path, "w") as fh:
            fh.write(f"{self.param_name},error,runtime_s\n")
            for r in self.rows:
                fh.write(f"{r.param!r},{r.error!r},{r.runtime:.6f}\n")

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "param_name": self.param_name,
            "rows": [{self.param_name: r.param, "error": r.error, "runtime_s": r.runtime}
                     for r in self.rows],
            "slope": self.slope,
            "r2": self.r2,
            "extras": _json_safe(self.extras),
        }


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _max_workers() -> int:
    try:
        return max(1, int(os.environ.get("NONLIN_THREADS", "1")))
    except ValueError:
        return 1


def _solve_row(p: ProblemConfig, h: float):
    mesh, op = setup_problem(p, h=h)
    _validate_operator(op, p.seed)
    g = p.exact if p.g == "exact" else p.g
    v, rep = solve_dirichlet(op, g, method=p.method, tol=p.tol, max_iter=p.max_iter)
    return mesh, op, v, rep


def run_rates(p: ProblemConfig, h_list=None) -> RateReport:
    """Solve at each spacing and fit the sup-norm error rate in h."""
    exp = p.experiments.get("rates", {})
    h_list = exp.get("h_list", [1 / 8, 1 / 16, 1 / 32]) if h_list is None else list(h_list)
    if len(h_list) < 3 or any(b >= a for a, b in zip(h_list, h_list[1:])):
        raise ConfigError("rates: h_list must be strictly decreasing with at least 3 entries")
    if p.exact is None:
        raise ConfigError("rates requires a manufactured exact solution")
    report = RateReport("rates", "h", [], extras={"holder": []})

    def one(h):
        t0 = time.perf_counter()
        mesh, op, v, rep = _solve_row(p, h)
        if not rep.converged:
            raise ExperimentError(f"solver did not converge at h = {h}", partial=report)
        err = float(np.max(np.abs(np.asarray(p.exact(mesh.points)) - v.values)))
        hol = holder_norm(v, 0.5)
        return RateRow(h, err, time.perf_counter() - t0), hol

    workers = _max_workers() if exp.get("parallel", False) else 1
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, h_list))
    else:
        results = [one(h) for h in h_list]
    for row, hol in results:
        report.rows.append(row)
        report.extras["holder"].append(hol)
    return report.fit()


def run_delta(p: ProblemConfig, theta_list=None) -> RateReport:
    """Error of the inf/sup convolutions of the discrete solution against
    the exact solution, reported against the nominal radius delta = sqrt(theta).

    With verify=True each row's convolution is checked as a delta-super/
    subsolution of the matching perturbed problem (slack K h); rows failing
    verification are excluded from the fit and listed in the extras.
    """
    exp = p.experiments.get("delta", {})
    theta_list = exp.get("theta_list", [0.04, 0.01, 0.0025]) if theta_list is None else list(theta_list)
    verify = bool(exp.get("verify", False))
    samples = int(exp.get("samples", 400))
    if p.exact is None:
        raise ConfigError("delta requires a manufactured exact solution")

    mesh, op = setup_problem(p)
    _validate_operator(op, p.seed)
    g = p.exact if p.g == "exact" else p.g
    v, rep = solve_dirichlet(op, g, method=p.method, tol=p.tol, max_iter=p.max_iter)
    if not rep.converged:
        raise ExperimentError("reference solve did not converge")
    exact_vals = np.asarray(p.exact(mesh.points), dtype=float)
    delta = mesh.N * mesh.h

    report = RateReport("delta", "delta", [],
                        extras={"h": mesh.h, "N": mesh.N, "theta_list": list(theta_list),
                                "excluded": [], "verified": verify})
    for theta in theta_list:
        t0 = time.perf_counter()
        vminus = inf_convolve(v, theta)
        vplus = sup_convolve(v, theta)
        if verify:
            ok = _verify_prop_convolution(p, op, v, vminus, vplus, theta, delta, samples)
            if not ok:
                report.extras["excluded"].append(float(theta))
                continue
        err = float(max(np.max(np.abs(exact_vals - vminus.values)),
                        np.max(np.abs(exact_vals - vplus.values))))
        report.rows.append(RateRow(float(np.sqrt(theta)), err, time.perf_counter() - t0))
    return report.fit()


def _verify_prop_convolution(p, op, v, vminus, vplus, theta, delta, samples) -> bool:
    """delta-solution verification of both convolutions, slack K h."""
    mesh = op.mesh
    h = mesh.h
    nu = 4.0 * np.sqrt(theta) * np.sqrt(v.sup_norm()) + np.sqrt(mesh.dim) * h
    margin = nu + delta
    Kh = op.K_est * h
    F = p.operator
    Fnu = perturb_inf(F, nu, resolution=h)
    fnu_sup = field_sup(p.f, nu, p.domain, resolution=h)
    Fsup = perturb_sup(F, nu, resolution=h)
    fnu_inf = field_inf(p.f, nu, p.domain, resolution=h)

    def G_super(M, x):
        return Fnu(M, x) - (fnu_sup(x) + Kh)

    def G_sub(M, x):
        return Fsup(M, x) - (fnu_inf(x) - Kh)

    rs = delta_solution_check(vminus.as_mesh_function(), G_super, delta, samples,
                              slack=1e-8, seed=p.seed, margin=margin, require="super")
    rb = delta_solution_check(vplus.as_mesh_function(), G_sub, delta, samples,
                              slack=1e-8, seed=p.seed + 1, margin=margin, require="sub")
    return rs.passed and rb.passed


def _freeze_operator(F: Nonlinearity, x0, domain) -> Nonlinearity:
    x0 = np.asarray(x0, dtype=float)
    if isinstance(F, LinearVC):
        return make_linear(constant_coeff(F.coeff(x0)), domain)
    if isinstance(F, Isaacs):
        coeffs = [[constant_coeff(F.coeffs[a][b](x0)) for b in range(F.nb)] for a in range(F.na)]
        runnings = None
        if F.runnings is not None:
            runnings = [[constant_field(F.runnings[a][b](x0), F.dim) for b in range(F.nb)]
                        for a in range(F.na)]
        return make_isaacs(coeffs, domain, runnings)
    if isinstance(F, Pucci):
        return pucci(F.lam0, F.Lam0, F.sign, F.dim, domain)
    raise ExperimentError(f"freeze does not support {type(F).__name__}")


def run_freeze(p: ProblemConfig, x0=None, r_list=None) -> RateReport:
    """Frozen-coefficient comparison on shrinking balls, same lattice.

    The full problem is solved once; for each radius r the problem with
    coefficients and right-hand side frozen at x0 is re-solved on the
    lattice points inside B_r(x0) with boundary data taken from the full
    discrete solution, and the sup difference over the ball is recorded.
    For an x-independent operator the frozen problem is identical and the
    error is solver tolerance only.
    """
    exp = p.experiments.get("freeze", {})
    x0 = np.asarray(exp.get("x0", p.domain.center) if x0 is None else x0, dtype=float)
    r_list = exp.get("r_list", [0.2, 0.1, 0.05]) if r_list is None else list(r_list)
    if len(r_list) < 3 or any(b >= a for a, b in zip(r_list, r_list[1:])):
        raise ConfigError("freeze: r_list must be strictly decreasing with at least 3 entries")
    if distance_to_boundary(p.domain, x0) <= max(r_list):
        raise ExperimentError(f"ball of radius {max(r_list)} around {x0} exits the domain")

    mesh, op = setup_problem(p)
    _validate_operator(op, p.seed)
    g = p.exact if p.g == "exact" else p.g
    v, rep = solve_dirichlet(op, g, method=p.method, tol=p.tol, max_iter=p.max_iter)
    if not rep.converged:
        raise ExperimentError("full solve did not converge")

    report = RateReport("freeze", "r", [], extras={"x0": x0.tolist(), "h": mesh.h})
    f0 = constant_field(p.f(x0), p.domain.dim)
    for r in r_list:
        t0 = time.perf_counter()
        ball = Ball(x0, float(r))
        bmesh = build_mesh(ball, mesh.h, mesh.N)
        ords = mesh.lookup(bmesh.coords)
        if ords.min() < 0:
            raise ExperimentError(f"ball mesh at r = {r} is not contained in the full mesh")
        Ffrozen = _freeze_operator(p.operator, x0, ball)
        bop = assemble(Ffrozen, f0, bmesh)
        gb = v.values[ords[bmesh.boundary_idx]]
        ut, brep = solve_dirichlet(bop, gb, method=p.method, tol=p.tol, max_iter=p.max_iter)
        if not brep.converged:
            raise ExperimentError(f"frozen solve did not converge at r = {r}", partial=report)
        err = float(np.max(np.abs(ut.values - v.values[ords])))
        report.rows.append(RateRow(float(r), err, time.perf_counter() - t0))
    return report.fit()


def run_perturb(p: ProblemConfig, eps_list=None) -> RateReport:
    """Error between the base solution and the solutions of the inf/sup
    perturbed problems F_eps = f^eps; slope is expected near 1, and the
    one-sided ordering u_eps <= u holds discretely at every mesh point."""
    exp = p.experiments.get("perturb", {})
    eps_list = exp.get("eps_list", [0.2, 0.1, 0.05, 0.025]) if eps_list is None else list(eps_list)
    if len(eps_list) < 3 or any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ConfigError("perturb: eps_list must be strictly decreasing with at least 3 entries")

    mesh, op = setup_problem(p)
    _validate_operator(op, p.seed)
    g = p.exact if p.g == "exact" else p.g
    v, rep = solve_dirichlet(op, g, method=p.method, tol=p.tol, max_iter=p.max_iter)
    if not rep.converged:
        raise ExperimentError("base solve did not converge")

    report = RateReport("perturb", "eps", [], extras={"one_sided_max": [], "h": mesh.h})
    for eps in eps_list:
        t0 = time.perf_counter()
        Feps = perturb_inf(p.operator, eps)
        fsup = field_sup(p.f, eps, p.domain)
        opE = assemble(Feps, fsup, mesh)
        _validate_operator(opE, p.seed, trials=200)
        vE, repE = solve_dirichlet(opE, g, method=p.method, tol=p.tol, max_iter=p.max_iter)
        if not repE.converged:
            raise ExperimentError(f"perturbed solve did not converge at eps = {eps}", partial=report)
        err = float(np.max(np.abs(v.values - vE.values)))
        report.extras["one_sided_max"].append(float(np.max(vE.values - v.values)))
        report.rows.append(RateRow(float(eps), err, time.perf_counter() - t0))
    return report.fit()


@dataclass
class BarrierReport:
    c: float
    bound: float
    max_gap: float
    min_gap: float
    lower_ok: bool
    upper_ok: bool

    @property
    def passed(self) -> bool:
        return self.lower_ok and self.upper_ok


def run_barrier(p: ProblemConfig, c: float, tol: float = 1e-8) -> BarrierReport:
    """Sandwich between the solutions of F = f and F = f + c:

        u_bar <= u <= u_bar + c diam(U)^2 / (2 lam)   pointwise."""
    if c <= 0:
        raise ConfigError("barrier: c must be positive")
    mesh, op = setup_problem(p)
    _validate_operator(op, p.seed)
    g = p.exact if p.g == "exact" else p.g
    v, rep = solve_dirichlet(op, g, method=p.method, tol=p.tol, max_iter=p.max_iter)
    op_c = assemble(p.operator, p.f.shifted(c), mesh)
    vbar, rep2 = solve_dirichlet(op_c, g, method=p.method, tol=p.tol, max_iter=p.max_iter)
    if not (rep.converged and rep2.converged):
        raise ExperimentError("barrier solves did not converge")
    gap = v.values - vbar.values
    bound = c * p.domain.diameter**2 / (2.0 * p.operator.lam)
    return BarrierReport(
        c=float(c),
        bound=float(bound),
        max_gap=float(gap.max()),
        min_gap=float(gap.min()),
        lower_ok=bool(gap.min() >= -tol),
        upper_ok=bool(gap.max() <= bound + tol),
    )


def run_check(p: ProblemConfig, trials: int = 10_000) -> dict:
    """Full validation pipeline: ellipticity, monotonicity, consistency."""
    mesh, op = setup_problem(p)
    ell = check_ellipticity(p.operator, max(trials // 10, 100), p.seed)
    mono = monotonicity_check(op, trials, p.seed)
    rng = np.random.default_rng([p.seed, 7])
    Mq = rng.normal(size=(mesh.dim, mesh.dim))
    quad = quadratic_field(Mq + Mq.T, rng.normal(size=mesh.dim), 0.0)
    cons_q = consistency_check(op, quad)
    cons_c = consistency_check(op, cubic_axis(mesh.dim))
    cons_s = consistency_check(op, sin_product(mesh.dim))
    passed = (ell.passed and mono.passed
              and cons_q.sup_discrepancy <= 1e-10
              and cons_c.sup_discrepancy <= 1e-10
              and cons_s.passed)
    return {
        "passed": passed,
        "ellipticity": {"trials": ell.trials, "violations": ell.violations},
        "monotonicity": {"trials": mono.trials, "violations": mono.violations,
                         "worst_gap": mono.worst_gap},
        "consistency": {
            "quadratic": cons_q.sup_discrepancy,
            "cubic": cons_c.sup_discrepancy,
            "smooth": {"discrepancy": cons_s.sup_discrepancy, "bound": cons_s.bound,
                       "measured_K": cons_s.measured_K},
        },
        "K_est": op.K_est,
    }


def _write_report(report: RateReport, out: str, fmt: str):
    if fmt == "csv":
        report.to_csv(out)
        with open(out + ".json", "w") as fh:
            json.dump(_json_safe(report.to_dict()), fh, indent=2)
    else:
        with open(out, "w") as fh:
            json.dump(_json_safe(report.to_dict()), fh, indent=2)


def cli_main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ellipticfd",
        description="experiments for monotone schemes on uniformly elliptic Dirichlet problems",
    )
    sub = parser.add_subparsers(dest="cmd", required=True)
    for name in ("solve", "rates", "delta", "freeze", "perturb", "barrier", "check"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True)
        sp.add_argument("--out", default=None)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--format", choices=("csv", "json"), default="csv")
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code else 2

    try:
        p = parse_config(load_config(args.config))
        if args.seed is not None:
            p.seed = args.seed
        out = args.out or f"{args.cmd}_out.{'csv' if args.format == 'csv' else 'json'}"

        if args.cmd == "solve":
            mesh, op = setup_problem(p)
            _validate_operator(op, p.seed)
            g = p.exact if p.g == "exact" else p.g
            v, rep = solve_dirichlet(op, g, method=p.method, tol=p.tol, max_iter=p.max_iter)
            if args.format == "csv":
                with open(out, "w") as fh:
                    cols = ",".join(f"x{i}" for i in range(mesh.dim))
                    fh.write(f"{cols},value\n")
                    for pt, val in zip(mesh.points, v.values):
                        fh.write(",".join(repr(float(c)) for c in pt) + f",{val!r}\n")
            else:
                with open(out, "w") as fh:
                    json.dump({"points": mesh.points.tolist(), "values": v.values.tolist()}, fh)
            print(f"solve: residual {rep.residual:.3e} after {rep.iterations} iterations -> {out}")
            return 0 if rep.converged else 1

        if args.cmd in ("rates", "delta", "freeze", "perturb"):
            runner = {"rates": run_rates, "delta": run_delta,
                      "freeze": run_freeze, "perturb": run_perturb}[args.cmd]
            try:
                report = runner(p)
            except ExperimentError as e:
                if e.partial is not None and e.partial.rows:
                    _write_report(e.partial.fit(), out, args.format)
                    print(f"{args.cmd}: aborted ({e}); partial output in {out}", file=sys.stderr)
                else:
                    print(f"{args.cmd}: aborted ({e})", file=sys.stderr)
                return 1
            _write_report(report, out, args.format)
            slope = "n/a" if report.slope is None else f"{report.slope:.3f}"
            print(f"{args.cmd}: {len(report.rows)} rows, slope {slope} -> {out}")
            return 0

        if args.cmd == "barrier":
            c_list = p.experiments.get("barrier", {}).get("c_list", [0.1, 1.0, 10.0])
            reports = [run_barrier(p, c) for c in c_list]
            payload = [{"c": r.c, "bound": r.bound, "max_gap": r.max_gap,
                        "min_gap": r.min_gap, "passed": r.passed} for r in reports]
            with open(out if args.format == "json" else out + ".json", "w") as fh:
                json.dump(payload, fh, indent=2)
            ok = all(r.passed for r in reports)
            print(f"barrier: {'ok' if ok else 'FAILED'} for c in {c_list}")
            return 0 if ok else 1

        if args.cmd == "check":
            trials = int(p.experiments.get("check", {}).get("trials", 10_000))
            result = run_check(p, trials=trials)
            with open(out if args.format == "json" else out + ".json", "w") as fh:
                json.dump(_json_safe(result), fh, indent=2)
            print(f"check: {'ok' if result['passed'] else 'FAILED'}")
            return 0 if result["passed"] else 1

    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except ExperimentError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


def main():
    raise SystemExit(cli_main(sys.argv[1:]))
