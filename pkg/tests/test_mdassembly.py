"""Global assembly and solve tests.

The two quantitative oracles are hand solutions. Series resistance: matrix
K=1 above and below a fault with k_perp=0.01 and aperture 0.01 gives two
interface resistances of 0.5 each on top of the two matrix half-columns,
so a unit head drop drives a flux of 0.25 per mortar cell on a 4-cell
fault. Manufactured coupled field: fault pressure 2x+5 with matrix slopes
156 above and 154 below satisfies the interface law of the case1 material
set with a constant fault source of -2; all fields are piecewise linear,
hence reproduced to machine precision.
"""

import numpy as np
import pytest
from dataclasses import replace

from mdflow.config import BcClause, CaseConfig, FaultConfig, builtin_case
from mdflow.discretize import BC_DIRICHLET
from mdflow.mdassembly import (
    AssemblyError,
    assemble_from_problems,
    assemble_global,
    build_problems,
    mass_balance_report,
    solve,
)
from mdflow.mdmesh import build_cartesian_md_mesh


def series_config(k_perp=0.01, k_t=(0.0, 0.0), n=4):
    fault = FaultConfig(
        p0=(0.0, 0.5), p1=(1.0, 0.5), aperture=0.01, k_parallel=1.0,
        k_perp=(k_perp, k_perp), k_t=k_t, name="F",
    )
    return CaseConfig(
        domain_lo=(0.0, 0.0), domain_hi=(1.0, 1.0), resolution=(n, n),
        matrix_k=1.0, matrix_regions=[], faults=[fault],
        bcs=[BcClause(2, "dirichlet", 1.0), BcClause(3, "dirichlet", 0.0)],
        name="series",
    )


def solve_config(cfg, formulation=None, method=None):
    mesh = build_cartesian_md_mesh(
        cfg.domain_lo, cfg.domain_hi, cfg.resolution, cfg.fault_specs()
    )
    system = assemble_global(mesh, cfg.material_set(formulation), cfg.bcs)
    return mesh, system, solve(system, method=method)


def test_unknown_count_case1_level0():
    cfg = builtin_case("case1")
    mesh = build_cartesian_md_mesh(
        cfg.domain_lo, cfg.domain_hi, (4, 4), cfg.fault_specs()
    )
    system = assemble_global(mesh, cfg.material_set(), cfg.bcs)
    # 16 matrix cells + 4 fault cells + 2 * 4 mortar cells
    assert system.n_unknowns == 28
    assert system.matrix.shape == (28, 28)


def test_constant_solution():
    cfg = builtin_case("case1")
    h = 3.25
    cfg = replace(cfg, bcs=[BcClause(s, "dirichlet", h) for s in range(4)])
    mesh, system, sol = solve_config(cfg)
    for p in sol.pressures:
        assert np.allclose(p, h, atol=1e-12)
    for lam in sol.lambdas:
        assert np.abs(lam).max() < 1e-12


def test_no_fault_linear_field():
    cfg = CaseConfig(
        domain_lo=(0.0, 0.0), domain_hi=(1.0, 1.0), resolution=(4, 4),
        matrix_k=2.0, matrix_regions=[], faults=[],
        bcs=[BcClause(2, "dirichlet", 1.0), BcClause(3, "dirichlet", 0.0)],
        name="plain",
    )
    mesh, system, sol = solve_config(cfg)
    y = mesh.subdomains[0].cell_centers_global()[:, 1]
    assert np.abs(sol.pressures[0] - (1.0 - y)).max() < 1e-12


def test_series_resistance():
    cfg = series_config()
    mesh, system, sol = solve_config(cfg)
    assert np.allclose(sol.pressures[1], 0.5, atol=1e-12)
    by_side = {itf.side: lam for itf, lam in zip(mesh.interfaces, sol.lambdas)}
    # positive flux runs from the fault into the upper matrix (side 1)
    assert np.allclose(by_side[1], 0.125, atol=1e-12)
    assert np.allclose(by_side[2], -0.125, atol=1e-12)
    g = mesh.subdomains[0]
    top = g.face_bnd == 3
    assert sol.fluxes[0][top].sum() == pytest.approx(0.5, abs=1e-12)
    y = g.cell_centers_global()[:, 1]
    exact = np.where(y < 0.5, 1.0 - 0.5 * y, 0.25 - 0.5 * (y - 0.5))
    assert np.abs(sol.pressures[0] - exact).max() < 1e-12


def test_manufactured_coupled_linear_field():
    cfg = builtin_case("case1")
    mesh = build_cartesian_md_mesh(
        cfg.domain_lo, cfg.domain_hi, (4, 4), cfg.fault_specs()
    )
    problems, iproblems = build_problems(mesh, cfg.material_set(), [])
    slope, offset, d_up, d_lo = 2.0, 5.0, 156.0, 154.0
    c_up, c_lo = offset - 2e-4, offset + 3e-4

    def p_matrix(x, y):
        up = slope * x + c_up + d_up * (y - 0.5)
        lo = slope * x + c_lo + d_lo * (y - 0.5)
        return np.where(y > 0.5, up, lo)

    amb, flt = problems
    ext = amb.grid.is_boundary() & (amb.bc.kind != 3)
    fc = amb.grid.face_centers_global()
    amb.bc.kind[ext] = BC_DIRICHLET
    amb.bc.value[ext] = p_matrix(fc[ext, 0], fc[ext, 1])
    extf = flt.grid.is_boundary() & (flt.bc.kind != 3)
    fcf = flt.grid.face_centers_global()
    flt.bc.kind[extf] = BC_DIRICHLET
    flt.bc.value[extf] = slope * fcf[extf, 0] + offset
    flt.source[:] = -2.0

    sol = solve(assemble_from_problems(mesh, problems, iproblems))
    cm = mesh.subdomains[0].cell_centers_global()
    assert np.abs(sol.pressures[0] - p_matrix(cm[:, 0], cm[:, 1])).max() < 1e-9
    cf = mesh.subdomains[1].cell_centers_global()
    assert np.abs(sol.pressures[1] - (slope * cf[:, 0] + offset)).max() < 1e-9
    by_side = {itf.side: lam for itf, lam in zip(mesh.interfaces, sol.lambdas)}
    assert np.allclose(by_side[1], -39.0, atol=1e-9)
    assert np.allclose(by_side[2], 38.5, atol=1e-9)
    # in-plane fault flux: -A grad p + coupling terms = -1.96 along +x
    inner = ~mesh.subdomains[1].is_boundary()
    assert np.allclose(sol.fluxes[1][inner], -1.96, atol=1e-9)


def test_local_and_semilocal_match_without_coupling():
    cfg = builtin_case("case1")
    cfg = replace(
        cfg, faults=[replace(cfg.faults[0], k_t=(0.0, 0.0))]
    )
    mesh = build_cartesian_md_mesh(
        cfg.domain_lo, cfg.domain_hi, (8, 8), cfg.fault_specs()
    )
    sys_l = assemble_global(mesh, cfg.material_set("local"), cfg.bcs)
    sys_sl = assemble_global(mesh, cfg.material_set("semilocal"), cfg.bcs)
    diff = (sys_l.matrix - sys_sl.matrix).tocoo()
    scale = np.abs(sys_l.matrix.data).max()
    assert np.abs(diff.data).max() if diff.nnz else 0.0 <= 1e-14 * scale
    assert np.abs(sys_l.rhs - sys_sl.rhs).max() <= 1e-14 * np.abs(sys_l.rhs).max()


def test_superposition():
    rng = np.random.default_rng(11)
    cfg0 = builtin_case("case1")
    for _ in range(5):
        v1, v2 = rng.uniform(-5.0, 5.0, size=2)

        def with_values(b1, b2):
            cfg = builtin_case("case1")
            bcs = [
                BcClause(2, "dirichlet", b1, box=((0.25, 0.0), (0.75, 0.0))),
                BcClause(3, "dirichlet", b2, box=((0.0, 1.0), (0.25, 1.0))),
                BcClause(3, "dirichlet", b2, box=((0.75, 1.0), (1.0, 1.0))),
            ]
            return replace(cfg, bcs=bcs)

        _, _, sol1 = solve_config(with_values(v1, 0.0))
        _, _, sol2 = solve_config(with_values(0.0, v2))
        _, _, sol12 = solve_config(with_values(v1, v2))
        for a, b, c in zip(sol1.pressures, sol2.pressures, sol12.pressures):
            assert np.abs(a + b - c).max() < 1e-12 * max(1.0, abs(v1), abs(v2))
        for a, b, c in zip(sol1.lambdas, sol2.lambdas, sol12.lambdas):
            assert np.abs(a + b - c).max() < 1e-10 * max(1.0, abs(v1), abs(v2))


def test_mirror_symmetry():
    """Reflecting the geometry about the fault plane and negating the
    tangential coupling yields the reflected pressure field."""
    rng = np.random.default_rng(5)
    kt1, kt2 = rng.uniform(20.0, 70.0, size=2)
    kp1, kp2 = rng.uniform(50.0, 150.0, size=2)
    v1, v2, v3 = rng.uniform(0.0, 10.0, size=3)
    n = 8

    def config(k_perp, k_t, bcs):
        fault = FaultConfig(
            p0=(0.0, 0.5), p1=(1.0, 0.5), aperture=0.01, k_parallel=100.0,
            k_perp=k_perp, k_t=k_t, name="F",
        )
        return CaseConfig(
            domain_lo=(0.0, 0.0), domain_hi=(1.0, 1.0), resolution=(n, n),
            matrix_k=1.0, matrix_regions=[], faults=[fault], bcs=bcs,
            name="mirror",
        )

    bcs_a = [
        BcClause(2, "dirichlet", v1, box=((0.0, 0.0), (0.5, 0.0))),
        BcClause(2, "dirichlet", v2, box=((0.5, 0.0), (1.0, 0.0))),
        BcClause(3, "dirichlet", v3),
    ]
    bcs_b = [
        BcClause(3, "dirichlet", v1, box=((0.0, 1.0), (0.5, 1.0))),
        BcClause(3, "dirichlet", v2, box=((0.5, 1.0), (1.0, 1.0))),
        BcClause(2, "dirichlet", v3),
    ]
    mesh_a, _, sol_a = solve_config(config((kp1, kp2), (kt1, kt2), bcs_a))
    mesh_b, _, sol_b = solve_config(config((kp2, kp1), (-kt2, -kt1), bcs_b))

    ca = mesh_a.subdomains[0].cell_centers_global()
    cb = mesh_b.subdomains[0].cell_centers_global()
    lookup = {
        (round(x, 9), round(y, 9)): i for i, (x, y) in enumerate(cb)
    }
    perm = [lookup[(round(x, 9), round(1.0 - y, 9))] for x, y in ca]
    assert np.abs(sol_a.pressures[0] - sol_b.pressures[0][perm]).max() < 1e-8

    fa = mesh_a.subdomains[1].cell_centers_global()[:, 0]
    fb = mesh_b.subdomains[1].cell_centers_global()[:, 0]
    order_a, order_b = np.argsort(fa), np.argsort(fb)
    assert np.abs(
        sol_a.pressures[1][order_a] - sol_b.pressures[1][order_b]
    ).max() < 1e-8

    # interface fluxes swap sides under the reflection
    def lam_by_side(mesh, sol):
        out = {}
        for itf, lam in zip(mesh.interfaces, sol.lambdas):
            xs = mesh.subdomains[itf.lower].cell_centers_global()[
                itf.lower_cells, 0
            ]
            out[itf.side] = lam[np.argsort(xs)]
        return out

    la, lb = lam_by_side(mesh_a, sol_a), lam_by_side(mesh_b, sol_b)
    assert np.abs(la[1] - lb[2]).max() < 1e-8
    assert np.abs(la[2] - lb[1]).max() < 1e-8


def test_mass_balance_solved_cases():
    for name, n in (("case1", 8), ("network2d", 8)):
        cfg = builtin_case(name)
        cfg = replace(cfg, resolution=(n, n))
        mesh, system, sol = solve_config(cfg)
        rep = mass_balance_report(sol)
        assert rep["max_cell_residual"] <= 1e-10 * rep["scale"]
        assert abs(rep["global_residual"]) <= 1e-10 * rep["scale"]
        for sub in rep["subdomains"]:
            assert sub["max_residual"] <= 1e-10 * rep["scale"]


def test_case1_bottom_inflow_equals_top_outflow():
    cfg = builtin_case("case1")
    mesh, system, sol = solve_config(cfg)
    g = mesh.subdomains[0]
    flux = sol.fluxes[0]
    bottom_in = -flux[g.face_bnd == 2].sum()
    top_out = flux[g.face_bnd == 3].sum()
    assert bottom_in == pytest.approx(top_out, rel=1e-10)
    assert bottom_in > 0.0


def test_source_sink_balance():
    cfg = series_config()
    cfg = replace(cfg, bcs=[BcClause(2, "dirichlet", 0.0)])
    mesh = build_cartesian_md_mesh(
        cfg.domain_lo, cfg.domain_hi, cfg.resolution, cfg.fault_specs()
    )
    g = mesh.subdomains[0]
    src = np.zeros(g.n_cells)
    vols = g.cell_volumes
    src[0] = 1.0 / vols[0]
    src[g.n_cells - 1] = -1.0 / vols[g.n_cells - 1]
    sources = [src, np.zeros(mesh.subdomains[1].n_cells)]
    system = assemble_global(mesh, cfg.material_set(), cfg.bcs, sources=sources)
    sol = solve(system)
    rep = mass_balance_report(sol)
    assert rep["total_source"] == pytest.approx(0.0, abs=1e-12)
    assert abs(rep["global_residual"]) <= 1e-10 * rep["scale"]


def test_flux_continuity_at_mortars():
    cfg = builtin_case("case2")
    mesh, system, sol = solve_config(cfg)
    for itf, lam in zip(mesh.interfaces, sol.lambdas):
        qh = sol.fluxes[itf.higher][itf.higher_faces]
        assert np.abs(qh + lam).max() < 1e-12 * max(1.0, np.abs(lam).max())


def test_no_dirichlet_rejected():
    cfg = series_config()
    cfg = replace(cfg, bcs=[])
    mesh = build_cartesian_md_mesh(
        cfg.domain_lo, cfg.domain_hi, cfg.resolution, cfg.fault_specs()
    )
    with pytest.raises(AssemblyError):
        assemble_global(mesh, cfg.material_set(), cfg.bcs)


def test_iterative_matches_direct():
    cfg = builtin_case("case1")
    cfg = replace(cfg, resolution=(8, 8))
    mesh = build_cartesian_md_mesh(
        cfg.domain_lo, cfg.domain_hi, cfg.resolution, cfg.fault_specs()
    )
    system = assemble_global(mesh, cfg.material_set(), cfg.bcs)
    direct = solve(system, method="direct")
    iterative = solve(system, method="iterative")
    scale = np.abs(np.concatenate(direct.pressures)).max()
    for a, b in zip(direct.pressures, iterative.pressures):
        assert np.abs(a - b).max() < 1e-8 * scale


def test_describe_and_dump(tmp_path):
    cfg = builtin_case("case1")
    mesh = build_cartesian_md_mesh(
        cfg.domain_lo, cfg.domain_hi, (4, 4), cfg.fault_specs()
    )
    system = assemble_global(mesh, cfg.material_set(), cfg.bcs)
    assert system.describe(0) == ("subdomain", 0, 0)
    assert system.describe(17) == ("subdomain", 1, 1)
    assert system.describe(27) == ("interface", 1, 3)
    with pytest.raises(IndexError):
        system.describe(28)
    path = tmp_path / "matrix.coo"
    system.dump_coo(str(path))
    lines = path.read_text().strip().splitlines()
    assert lines[0].startswith("#")
    assert len(lines) == system.matrix.nnz + 1
    r, c, v = lines[1].split()
    int(r), int(c), float(v)
