"""Batch front end: solves, convergence studies, and mesh export.

Commands:

- ``mdflow run <cfg>``: solve one configuration; write per-subdomain
  pressure fields (legacy ASCII VTK), a mortar-flux CSV, a fault pressure
  profile CSV, and a mass-balance report.
- ``mdflow converge <case> [--formulation L|SL] [--levels N]``: run one
  built-in convergence study and write its CSV table.
- ``mdflow compare <case> [--levels N]``: run both formulations of a case
  and write a side-by-side error table.
- ``mdflow mesh <cfg> --export <path>``: build the mesh and export it in
  the plain-text mesh format.

Exit codes: 0 on success, 1 on solver failure, 2 on usage or configuration
errors. The MDFLOW_SOLVER environment variable (``direct`` or
``iterative``) overrides the configured linear solver.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from .config import BUILTIN_CASES, ConfigError, parse_config
from .discretize import DiscretizationError
from .mdassembly import (
    AssemblyError,
    SolverError,
    assemble_global,
    mass_balance_report,
    solve,
)
from .mdmesh import MeshError, build_cartesian_md_mesh, export_mesh
from .semilocal import InterfaceLawError
from .verify import VerifyError, run_case
from .vtkio import write_vtk

logger = logging.getLogger(__name__)

#: Errors that mean the input was wrong, not that the computation failed.
_CONFIG_ERRORS = (
    ConfigError,
    MeshError,
    AssemblyError,
    InterfaceLawError,
    DiscretizationError,
)
_SOLVE_ERRORS = (SolverError, VerifyError)

_FORMULATIONS = {"l": "local", "sl": "semilocal", "local": "local", "semilocal": "semilocal"}


def _formulation(text: str) -> str:
    try:
        return _FORMULATIONS[text.strip().lower()]
    except KeyError:
        raise argparse.ArgumentTypeError(
            f"unknown formulation {text!r} (choose local, semilocal, L, or SL)"
        ) from None


def _load_config(path: str):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from None
    return parse_config(text)


def _coord_header(dim: int) -> str:
    return ",".join("xyz"[:dim])


def cmd_run(args) -> int:
    cfg = _load_config(args.config)
    outdir = args.output if args.output is not None else cfg.output
    os.makedirs(outdir, exist_ok=True)
    mesh = build_cartesian_md_mesh(
        cfg.domain_lo, cfg.domain_hi, cfg.resolution, cfg.fault_specs()
    )
    system = assemble_global(mesh, cfg.material_set(), cfg.bcs, method=cfg.method)
    sol = solve(system, method=cfg.solver)
    report = mass_balance_report(sol)
    dim = mesh.dim

    for i, grid in enumerate(mesh.subdomains):
        path = os.path.join(outdir, f"{cfg.name}_sub{i:02d}.vtk")
        write_vtk(
            path,
            grid,
            {"pressure": sol.pressures[i]},
            title=f"{cfg.name} subdomain {i} ({mesh.info[i].kind}, {grid.dim}d)",
        )

    # Mortar exchange fluxes, positive from the lower-dimensional side into
    # the higher one, located at the mortar (= lower grid) cell centers.
    lines = [f"interface,cell,{_coord_header(dim)},flux"]
    for j, itf in enumerate(mesh.interfaces):
        centers = mesh.subdomains[itf.lower].cell_centers_global()[itf.lower_cells]
        for m in range(itf.n_mortar):
            coords = ",".join(f"{c:.10g}" for c in centers[m])
            lines.append(f"{j},{m},{coords},{sol.lambdas[j][m]:.10g}")
    mortar_path = os.path.join(outdir, f"{cfg.name}_mortar.csv")
    with open(mortar_path, "w") as fh:
        fh.write("\n".join(lines) + "\n")

    lines = [f"subdomain,{_coord_header(dim)},pressure"]
    for i, info in enumerate(mesh.info):
        if info.kind != "fault":
            continue
        centers = mesh.subdomains[i].cell_centers_global()
        for c in range(centers.shape[0]):
            coords = ",".join(f"{v:.10g}" for v in centers[c])
            lines.append(f"{i},{coords},{sol.pressures[i][c]:.10g}")
    fault_path = os.path.join(outdir, f"{cfg.name}_fault.csv")
    with open(fault_path, "w") as fh:
        fh.write("\n".join(lines) + "\n")

    lines = [f"mass balance for {cfg.name}"]
    lines.append(f"flux scale            {report['scale']:.10g}")
    lines.append(f"max cell residual     {report['max_cell_residual']:.10g}")
    lines.append(f"boundary outflow      {report['boundary_outflow']:.10g}")
    lines.append(f"total source          {report['total_source']:.10g}")
    lines.append(f"global residual       {report['global_residual']:.10g}")
    for sub in report["subdomains"]:
        i = sub["id"]
        lines.append(
            f"subdomain {i} ({mesh.info[i].kind}): max residual {sub['max_residual']:.10g}"
        )
    with open(os.path.join(outdir, f"{cfg.name}_balance.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")

    print(
        f"solved {cfg.name}: {system.n_unknowns} unknowns, "
        f"residual {sol.residual:.3e}, "
        f"max cell imbalance {report['max_cell_residual']:.3e}"
    )
    print(f"wrote fields and tables to {outdir}")
    return 0


def cmd_converge(args) -> int:
    result = run_case(args.case, formulation=args.formulation, levels=args.levels)
    os.makedirs(args.output, exist_ok=True)
    path = os.path.join(args.output, f"{args.case}_{result.formulation}.csv")
    with open(path, "w") as fh:
        fh.write(result.to_csv())
    print(result.to_csv(), end="")
    if len(result.records) >= 2:
        print(
            f"# mean EOC {result.mean_order():.4g} "
            f"(reference {result.reference})"
        )
    print(f"wrote {path}")
    return 0


def cmd_compare(args) -> int:
    local = run_case(args.case, formulation="local", levels=args.levels)
    semi = run_case(args.case, formulation="semilocal", levels=args.levels)
    os.makedirs(args.output, exist_ok=True)
    lines = ["level,h,N,N_f,error_local,eoc_local,error_semilocal,eoc_semilocal,case"]
    for rl, rs in zip(local.records, semi.records):
        ol = "" if np.isnan(rl.order) else f"{rl.order:.6g}"
        os_ = "" if np.isnan(rs.order) else f"{rs.order:.6g}"
        lines.append(
            f"{rl.level},{rl.h:.10g},{rl.n_cells},{rl.n_fault_cells},"
            f"{rl.error:.10g},{ol},{rs.error:.10g},{os_},{args.case}"
        )
    text = "\n".join(lines) + "\n"
    path = os.path.join(args.output, f"{args.case}_compare.csv")
    with open(path, "w") as fh:
        fh.write(text)
    print(text, end="")
    print(f"wrote {path}")
    return 0


def cmd_mesh(args) -> int:
    cfg = _load_config(args.config)
    mesh = build_cartesian_md_mesh(
        cfg.domain_lo, cfg.domain_hi, cfg.resolution, cfg.fault_specs()
    )
    export_mesh(mesh, args.export)
    cells = sum(g.n_cells for g in mesh.subdomains)
    print(
        f"wrote {args.export}: {mesh.n_subdomains} subdomains, "
        f"{cells} cells, {len(mesh.interfaces)} interfaces"
    )
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mdflow",
        description="Darcy flow in porous media with thin inclusions.",
    )
    parser.add_argument(
        "-v",
        "--verbose",
        action="count",
        default=0,
        help="log progress (repeat for debug output)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="solve one configuration and write fields")
    run.add_argument("config", help="configuration file")
    run.add_argument(
        "--output", default=None, help="output directory (default: the config's)"
    )
    run.set_defaults(func=cmd_run)

    conv = sub.add_parser("converge", help="run one built-in convergence study")
    conv.add_argument("case", help=f"one of: {', '.join(BUILTIN_CASES)}")
    conv.add_argument(
        "--formulation",
        type=_formulation,
        default="semilocal",
        help="local or semilocal (aliases L, SL); default semilocal",
    )
    conv.add_argument("--levels", type=int, default=None, help="number of levels")
    conv.add_argument("--output", default=".", help="output directory")
    conv.set_defaults(func=cmd_converge)

    comp = sub.add_parser("compare", help="run both formulations side by side")
    comp.add_argument("case", help=f"one of: {', '.join(BUILTIN_CASES)}")
    comp.add_argument("--levels", type=int, default=None, help="number of levels")
    comp.add_argument("--output", default=".", help="output directory")
    comp.set_defaults(func=cmd_compare)

    mesh = sub.add_parser("mesh", help="build and export the mesh of a configuration")
    mesh.add_argument("config", help="configuration file")
    mesh.add_argument("--export", required=True, metavar="PATH", help="output mesh file")
    mesh.set_defaults(func=cmd_mesh)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except _CONFIG_ERRORS as exc:
        print(f"mdflow: error: {exc}", file=sys.stderr)
        return 2
    except _SOLVE_ERRORS as exc:
        print(f"mdflow: solver error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"mdflow: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
