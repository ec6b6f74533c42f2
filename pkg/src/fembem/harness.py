"""Manufactured cases, experiment drivers and CSV emission.

The two built-in cases are a unit ball with a known interior/exterior
solution pair and a unit cube driven by a constant source, where accuracy
is judged by the interface mismatch between the interior trace and the
exterior Dirichlet unknown.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import bem, coupling, fem, mesh as meshmod
from .bem import QuadratureConfig
from .coupling import InnerOptions
from .errors import DivergenceError, SolverError
from .solvers import SolverConfig

__all__ = [
    "ManufacturedCase",
    "ExperimentConfig",
    "ResultTable",
    "Problem",
    "sphere_case",
    "cube_case",
    "get_case",
    "build_problem",
    "run_convergence",
    "run_tau_sweep",
    "run_jacobi_study",
    "bisect_sigma_threshold",
    "CSV_COLUMNS",
]

CSV_COLUMNS = [
    "level", "h", "dofs_interior", "dofs_boundary", "err_L2_interior",
    "err_L2_uplus", "err_L2_lambda", "err_mismatch", "outer_iters",
    "inner_iters_interior", "inner_iters_exterior", "time_s",
]


@dataclass(frozen=True, eq=False)
class ManufacturedCase:
    """Domain generator plus (optional) exact fields and the source term."""

    name: str
    generator: object
    forcing: object
    exact_u_minus: object = None
    exact_u_plus: object = None
    exact_lambda: object = None
    default_degrees: tuple = (1, 1, 1, 1)

    @property
    def has_exact(self) -> bool:
        return self.exact_u_minus is not None


def sphere_case() -> ManufacturedCase:
    """Unit ball with a radially symmetric interior field and a decaying
    exterior field; the interface traces and fluxes match on the unit
    sphere with flux -1."""
    two_pi = 2.0 * math.pi
    const = (two_pi + 1.0) / two_pi

    def u_minus(p):
        s = p[0] * p[0] + p[1] * p[1] + p[2] * p[2]
        return (math.sin(math.pi * s) + math.cos(math.pi * s)) / two_pi + const

    def u_plus(p):
        return 1.0 / math.sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2])

    def lam(p):
        return -1.0

    def forcing(p):
        s = p[0] * p[0] + p[1] * p[1] + p[2] * p[2]
        sin, cos = math.sin(math.pi * s), math.cos(math.pi * s)
        laplace = 3.0 * (cos - sin) - two_pi * s * (sin + cos)
        return -laplace + (sin + cos) / two_pi + const

    return ManufacturedCase("sphere", meshmod.generate_ball_mesh, forcing,
                            u_minus, u_plus, lam, default_degrees=(1, 1, 1, 1))


def cube_case() -> ManufacturedCase:
    """Unit cube with unit source; no closed-form solution, so accuracy is
    reported as the interface mismatch."""
    return ManufacturedCase("cube", meshmod.generate_cube_mesh, lambda p: 1.0,
                            default_degrees=(1, 1, 0, 1))


def get_case(name: str) -> ManufacturedCase:
    if name == "sphere":
        return sphere_case()
    if name == "cube":
        return cube_case()
    raise ValueError(f"unknown case {name!r}")


@dataclass
class ExperimentConfig:
    """Run parameters; mirrors the JSON schema accepted by the CLI."""

    case: str = "sphere"
    levels: list = field(default_factory=lambda: [2, 4, 8])
    degrees: tuple | None = None
    tau: object = 10.0
    sigma: object = 2.0
    epsilon: float = 1.0
    method: str = "schur-cg"
    outer_tolerance: float = 1e-8
    inner_tolerance: float = 1e-10
    max_outer: int = 400
    max_inner: int = 5000
    max_jacobi: int = 3000
    preconditioned: bool = True
    seed: int = 0
    output: str | None = None
    quadrature: dict = field(default_factory=dict)

    @staticmethod
    def from_json(path) -> "ExperimentConfig":
        with open(path) as fh:
            data = json.load(fh)
        cfg = ExperimentConfig(**data)
        if cfg.degrees is not None:
            cfg.degrees = tuple(cfg.degrees)
        return cfg

    def to_json(self, path) -> None:
        data = asdict(self)
        with open(path, "w") as fh:
            json.dump(data, fh, indent=2)

    def quad_config(self) -> QuadratureConfig:
        return QuadratureConfig(**self.quadrature) if self.quadrature else bem.DEFAULT_QUADRATURE


@dataclass
class ResultTable:
    """Rows of experiment records, CSV-emittable with stable formatting."""

    columns: list
    rows: list = field(default_factory=list)

    def add(self, **kwargs) -> None:
        self.rows.append(kwargs)

    def column(self, name):
        return [row.get(name) for row in self.rows]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.columns)
            for row in self.rows:
                writer.writerow([_fmt(row.get(c)) for c in self.columns])

    def slope(self, y: str, x: str = "h") -> float:
        """Least-squares slope of log(y) against log(x) over all rows."""
        xs = np.array([row[x] for row in self.rows], dtype=float)
        ys = np.array([row[y] for row in self.rows], dtype=float)
        keep = np.isfinite(xs) & np.isfinite(ys) & (xs > 0) & (ys > 0)
        if keep.sum() < 2:
            return float("nan")
        return float(np.polyfit(np.log(xs[keep]), np.log(ys[keep]), 1)[0])


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return format(v, ".12g")
    return v


@dataclass(eq=False)
class Problem:
    """A fully assembled coupled problem at one refinement level."""

    case: ManufacturedCase
    n: int
    h: float
    mesh: object
    surface: object
    v_space: object
    w_space: object
    l_space: object
    m_space: object
    system: coupling.CoupledSystem


def build_problem(case: ManufacturedCase, n: int, degrees=None, tau: float = 10.0,
                  epsilon: float = 1.0, qcfg: QuadratureConfig | None = None,
                  consistency: bool = True, trace_coupling: bool = True) -> Problem:
    """Mesh, spaces and all assembled blocks for one level."""
    qcfg = qcfg or bem.DEFAULT_QUADRATURE
    j, k, l, m = degrees or case.default_degrees
    vol = case.generator(n)
    surface = meshmod.extract_boundary(vol)
    v_space = fem.build_volume_space(vol, j, surface)
    w_space = bem.build_trace_space(surface, k, "continuous")
    l_space = bem.build_trace_space(surface, l, "discontinuous")
    m_space = bem.build_trace_space(surface, m, "discontinuous")

    volume = fem.assemble_interior(v_space, epsilon)
    boundary = fem.assemble_nitsche(v_space, m_space, tau, consistency=consistency)
    load = fem.assemble_load(v_space, case.forcing)
    interior = fem.combine_interior(volume, boundary, load=load)

    ops = bem.build_boundary_operators(w_space, l_space, m_space, qcfg)
    exterior = bem.assemble_exterior(ops, tau, trace_coupling=trace_coupling)
    system = coupling.assemble_coupled(interior, exterior, m_space, tau)
    return Problem(case, n, meshmod.mesh_size(vol), vol, surface,
                   v_space, w_space, l_space, m_space, system)


def _solve_and_row(problem: Problem, config: ExperimentConfig, level,
                   method=None, tau=None) -> dict:
    method = method or config.method
    outer = SolverConfig(tolerance=config.outer_tolerance,
                         max_iterations=config.max_outer)
    inner = InnerOptions(tolerance=config.inner_tolerance,
                         max_iterations=config.max_inner,
                         preconditioned=config.preconditioned,
                         reduced_exterior=(method != "schur-gmres"))
    t0 = time.perf_counter()
    bundle = coupling.solve_coupled(problem.system, method=method,
                                    config=outer, inner=inner)
    dt = time.perf_counter() - t0
    errs = coupling.error_norms(problem.system, bundle, problem.case)
    return {
        "level": level,
        "h": problem.h,
        "dofs_interior": problem.v_space.n_dofs,
        "dofs_boundary": problem.w_space.n_dofs,
        "err_L2_interior": errs["l2_interior"],
        "err_L2_uplus": errs["l2_uplus"],
        "err_L2_lambda": errs["l2_lambda"],
        "err_mismatch": errs["mismatch"],
        "outer_iters": bundle.outer_trace.n_iterations if bundle.outer_trace else 0,
        "inner_iters_interior": bundle.inner_iters_interior,
        "inner_iters_exterior": bundle.inner_iters_exterior,
        "time_s": dt,
    }, bundle


def run_convergence(config: ExperimentConfig) -> ResultTable:
    """One solve per refinement level; rows ordered by decreasing h."""
    case = get_case(config.case)
    table = ResultTable(columns=list(CSV_COLUMNS))
    for n in config.levels:
        problem = build_problem(case, n, config.degrees, float(config.tau),
                                config.epsilon, config.quad_config())
        row, _ = _solve_and_row(problem, config, level=n)
        table.add(**row)
    table.rows.sort(key=lambda r: -r["h"])
    if config.output:
        table.to_csv(config.output)
    return table


def run_tau_sweep(config: ExperimentConfig) -> ResultTable:
    """Errors and outer iteration counts across a penalty sweep.

    Penalties below one get a robust path (direct subdomain solves, outer
    GMRES) since the trace operator may lose definiteness there; solver
    failures become 'failed' rows rather than aborts.
    """
    case = get_case(config.case)
    taus = config.tau if isinstance(config.tau, (list, tuple)) else [config.tau]
    table = ResultTable(columns=["tau", "status"] + list(CSV_COLUMNS))
    for n in config.levels:
        problem_cache = {}
        for tau in taus:
            try:
                problem = build_problem(case, n, config.degrees, float(tau),
                                        config.epsilon, config.quad_config())
                problem_cache[tau] = problem
                if tau < 1.0:
                    method = "schur-gmres"
                    inner = InnerOptions(mode="direct")
                    outer = SolverConfig(tolerance=config.outer_tolerance,
                                         max_iterations=max(config.max_outer, 1000))
                    t0 = time.perf_counter()
                    bundle = coupling.solve_coupled(problem.system, method=method,
                                                    config=outer, inner=inner)
                    dt = time.perf_counter() - t0
                    errs = coupling.error_norms(problem.system, bundle, case)
                    row = {
                        "level": n, "h": problem.h,
                        "dofs_interior": problem.v_space.n_dofs,
                        "dofs_boundary": problem.w_space.n_dofs,
                        "err_L2_interior": errs["l2_interior"],
                        "err_L2_uplus": errs["l2_uplus"],
                        "err_L2_lambda": errs["l2_lambda"],
                        "err_mismatch": errs["mismatch"],
                        "outer_iters": bundle.outer_trace.n_iterations if bundle.outer_trace else 0,
                        "inner_iters_interior": bundle.inner_iters_interior,
                        "inner_iters_exterior": bundle.inner_iters_exterior,
                        "time_s": dt,
                    }
                else:
                    row, _ = _solve_and_row(problem, config, level=n, tau=tau)
                row["tau"] = tau
                row["status"] = "ok"
                table.add(**row)
            except SolverError:
                table.add(tau=tau, status="failed", level=n,
                          h=problem_cache.get(tau).h if tau in problem_cache else float("nan"))
    if config.output:
        table.to_csv(config.output)
    return table


def run_jacobi_study(config: ExperimentConfig) -> ResultTable:
    """Relaxed trace iteration across a sweep of relaxation parameters.

    Divergence is data, not an error; converged runs are compared against
    a Schur-CG reference solution.
    """
    from .solvers import relaxed_jacobi

    case = get_case(config.case)
    sigmas = config.sigma if isinstance(config.sigma, (list, tuple)) else [config.sigma]
    n = config.levels[0]
    problem = build_problem(case, n, config.degrees, float(config.tau),
                            config.epsilon, config.quad_config())
    outer = SolverConfig(tolerance=config.outer_tolerance,
                         max_iterations=config.max_outer)
    inner = InnerOptions(tolerance=config.inner_tolerance,
                         max_iterations=config.max_inner,
                         preconditioned=config.preconditioned)
    reference = coupling.solve_coupled(problem.system, "schur-cg", outer, inner)
    ref = np.concatenate([reference.u_minus, reference.u_plus,
                          reference.lam, reference.u_tilde])
    refn = np.linalg.norm(ref)

    table = ResultTable(columns=["sigma", "converged", "iterations",
                                 "final_increment", "rel_diff_to_schur", "time_s"])
    jcfg = SolverConfig(tolerance=config.outer_tolerance,
                        max_iterations=config.max_jacobi)
    for sigma in sigmas:
        t0 = time.perf_counter()
        try:
            bundle, trace = relaxed_jacobi(problem.system, float(sigma), jcfg,
                                           inner_config=inner)
            sol = np.concatenate([bundle.u_minus, bundle.u_plus,
                                  bundle.lam, bundle.u_tilde])
            diff = float(np.linalg.norm(sol - ref) / refn) if refn > 0 else float("nan")
            table.add(sigma=sigma, converged=trace.converged,
                      iterations=trace.n_iterations,
                      final_increment=trace.increments[-1] if trace.increments else 0.0,
                      rel_diff_to_schur=diff, time_s=time.perf_counter() - t0)
            if config.output:
                trace.to_csv(f"{config.output}.sigma{sigma:g}.csv")
        except DivergenceError as exc:
            table.add(sigma=sigma, converged=False,
                      iterations=exc.trace.n_iterations if exc.trace else 0,
                      final_increment=exc.trace.increments[-1] if exc.trace else float("nan"),
                      rel_diff_to_schur=float("nan"), time_s=time.perf_counter() - t0)
    if config.output:
        table.to_csv(config.output)
    return table


def bisect_sigma_threshold(problem: Problem, config: SolverConfig,
                           inner: InnerOptions | None = None,
                           lo: float = 0.1, hi: float = 1e4,
                           iters: int = 12) -> float:
    """Smallest relaxation (log-bisection) for which the trace iteration
    converges within the configured budget; ``inf`` when none does."""
    from .solvers import relaxed_jacobi

    def converges(sigma):
        try:
            _, trace = relaxed_jacobi(problem.system, sigma, config,
                                      inner_config=inner)
            return trace.converged
        except (DivergenceError, SolverError):
            return False

    if converges(lo):
        return lo
    if not converges(hi):
        return float("inf")
    llo, lhi = math.log10(lo), math.log10(hi)
    for _ in range(iters):
        mid = 0.5 * (llo + lhi)
        if converges(10.0 ** mid):
            lhi = mid
        else:
            llo = mid
    return 10.0 ** lhi
