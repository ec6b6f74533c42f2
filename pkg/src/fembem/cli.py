"""Command line front end for the experiment harness."""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import bem, coupling, harness, mesh as meshmod
from .harness import ExperimentConfig
from .kernels import active_backend


def _base_config(args) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.from_json(args.config)
    else:
        cfg = ExperimentConfig()
    if args.out:
        cfg.output = args.out
    if args.method:
        cfg.method = args.method
    if args.tau is not None:
        cfg.tau = args.tau if len(args.tau) > 1 else args.tau[0]
    if args.sigma is not None:
        cfg.sigma = args.sigma if len(args.sigma) > 1 else args.sigma[0]
    if args.levels is not None:
        cfg.levels = args.levels
    if args.seed is not None:
        cfg.seed = args.seed
    if args.case:
        cfg.case = args.case
    return cfg


def _print_table(table) -> None:
    print(",".join(str(c) for c in table.columns))
    for row in table.rows:
        print(",".join(str(harness._fmt(row.get(c))) for c in table.columns))


def cmd_convergence(args) -> int:
    cfg = _base_config(args)
    table = harness.run_convergence(cfg)
    _print_table(table)
    for name in ("err_L2_interior", "err_L2_uplus", "err_mismatch"):
        s = table.slope(name)
        if np.isfinite(s):
            print(f"# slope {name} vs h: {s:.3f}")
    return 0


def cmd_tau_sweep(args) -> int:
    cfg = _base_config(args)
    if not isinstance(cfg.tau, (list, tuple)):
        cfg.tau = [0.1, 1.0, 10.0, 100.0, 1000.0]
    table = harness.run_tau_sweep(cfg)
    _print_table(table)
    return 0


def cmd_jacobi(args) -> int:
    cfg = _base_config(args)
    if not isinstance(cfg.sigma, (list, tuple)):
        cfg.sigma = [cfg.sigma]
    table = harness.run_jacobi_study(cfg)
    _print_table(table)
    return 0


def cmd_solve(args) -> int:
    cfg = _base_config(args)
    case = harness.get_case(cfg.case)
    n = cfg.levels[0]
    problem = harness.build_problem(case, n, cfg.degrees, float(cfg.tau),
                                    cfg.epsilon, cfg.quad_config())
    row, bundle = harness._solve_and_row(problem, cfg, level=n)
    for key in harness.CSV_COLUMNS:
        print(f"{key}: {harness._fmt(row.get(key))}")
    print(f"monolithic_residual: {problem.system.residual_norm(bundle):.3e}")
    if args.out:
        bundle.dump_json(args.out)
        print(f"bundle written to {args.out}")
    return 0


def cmd_check(args) -> int:
    """Fast operator-identity suite on a small ball mesh."""
    cfg = _base_config(args)
    rng = np.random.default_rng(cfg.seed)
    failures = 0

    def report(name, ok, detail=""):
        nonlocal failures
        status = "PASS" if ok else "FAIL"
        if not ok:
            failures += 1
        print(f"[{status}] {name}" + (f" ({detail})" if detail else ""))

    print(f"# kernel backend: {active_backend()}")
    vol = meshmod.generate_ball_mesh(3)
    surf = meshmod.extract_boundary(vol)
    w_space = bem.build_trace_space(surf, 1, "continuous")
    l_space = bem.build_trace_space(surf, 1, "discontinuous")
    qcfg = bem.DEFAULT_QUADRATURE
    V = bem.assemble_single_layer(l_space, l_space, qcfg)
    K = bem.assemble_double_layer(w_space, l_space, qcfg)
    W = bem.assemble_hypersingular(w_space, w_space, qcfg)
    M_LW = bem.surface_mass(l_space, w_space).toarray()

    sym = np.linalg.norm(V - V.T) / np.linalg.norm(V)
    report("single layer symmetric", sym < 1e-10, f"rel {sym:.2e}")
    eig = np.linalg.eigvalsh(0.5 * (V + V.T))
    report("single layer positive definite", eig.min() > 0, f"min eig {eig.min():.2e}")

    eigw = np.linalg.eigvalsh(0.5 * (W + W.T))
    report("hypersingular PSD", eigw.min() > -1e-10 * abs(eigw.max()),
           f"min eig {eigw.min():.2e}")
    ones = np.ones(w_space.n_dofs)
    report("hypersingular kills constants",
           np.linalg.norm(W @ ones) <= 1e-8 * np.linalg.norm(W),
           f"|W 1| {np.linalg.norm(W @ ones):.2e}")

    onesl = np.ones(l_space.n_dofs)
    v1 = float(onesl @ (V @ onesl))
    area = surf.total_area
    report("single layer of constant ~ surface area",
           abs(v1 - area) < 0.5 * meshmod.mesh_size(vol) ** 2 * area + 1e-8,
           f"<V1,1>={v1:.4f} area={area:.4f}")

    resid = 0.5 * (M_LW @ ones) + K @ ones
    Mll = bem.surface_mass(l_space, l_space).toarray()
    rl2 = float(np.sqrt(resid @ np.linalg.solve(Mll, resid)))
    report("interior projector constants identity", rl2 < 0.5,
           f"residual {rl2:.2e}")

    x = rng.standard_normal(l_space.n_dofs)
    y = rng.standard_normal(w_space.n_dofs)
    Kp = bem.assemble_adjoint_double_layer(l_space, w_space, qcfg)
    report("adjoint duality <K' lam, v> = <lam, K v>",
           abs(y @ (Kp @ x) - x @ (K @ y)) < 1e-10 * (1 + abs(x @ (K @ y))))

    angle = _solid_angle_sum(surf, np.zeros(3))
    report("boundary closed (solid angle 4 pi)",
           abs(angle - 4 * np.pi) < 1e-8, f"{angle:.6f}")

    print(f"# {failures} failure(s)")
    return 1 if failures else 0


def _solid_angle_sum(surface, point) -> float:
    tv = surface.vertices[surface.triangles] - point
    a, b, c = tv[:, 0], tv[:, 1], tv[:, 2]
    la = np.linalg.norm(a, axis=1)
    lb = np.linalg.norm(b, axis=1)
    lc = np.linalg.norm(c, axis=1)
    num = np.einsum("ij,ij->i", a, np.cross(b, c))
    den = la * lb * lc + np.einsum("ij,ij->i", a, b) * lc + \
        np.einsum("ij,ij->i", a, c) * lb + np.einsum("ij,ij->i", b, c) * la
    return float(np.sum(2.0 * np.arctan2(num, den)))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="fembem",
                                     description="hybrid FEM-BEM coupling experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("convergence", cmd_convergence), ("tau-sweep", cmd_tau_sweep),
                     ("jacobi", cmd_jacobi), ("solve", cmd_solve), ("check", cmd_check)):
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", help="output CSV/JSON path")
        p.add_argument("--method", choices=["schur-cg", "schur-gmres", "direct",
                                            "monolithic-direct"])
        p.add_argument("--tau", type=float, nargs="*", default=None)
        p.add_argument("--sigma", type=float, nargs="*", default=None)
        p.add_argument("--levels", type=int, nargs="*", default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--case", choices=["sphere", "cube"])
        p.set_defaults(func=fn)
    args = parser.parse_args(argv)
    if args.method == "direct":
        args.method = "monolithic-direct"
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
