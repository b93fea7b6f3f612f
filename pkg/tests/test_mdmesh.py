"""Mixed-dimensional Cartesian mesh construction tests.

Entity counts for the reference configurations were derived by hand from
the Cartesian layout: an n x n grid cut by one full horizontal fault has
n*(n+1) vertical edges plus n*n + 2*n horizontal edges (the slit row is
duplicated), and the fault line itself carries n cells and n+1 faces.
"""

import numpy as np
import pytest

from mdflow.config import FaultConfig, builtin_case
from mdflow.mdmesh import (
    MeshError,
    build_cartesian_md_mesh,
    export_mesh,
    import_mesh,
    mortar_projection,
    refine,
)


def one_fault(aperture=0.01, k_t=(80.0, 80.0), p0=(0.0, 0.5), p1=(1.0, 0.5)):
    return FaultConfig(
        p0=p0, p1=p1, aperture=aperture, k_parallel=100.0,
        k_perp=(100.0, 100.0), k_t=k_t, name="F",
    ).spec()


def test_no_faults_single_subdomain():
    mesh = build_cartesian_md_mesh((0.0, 0.0), (1.0, 1.0), (4, 4), [])
    assert len(mesh.subdomains) == 1
    assert mesh.interfaces == []
    assert mesh.info[0].kind == "matrix"
    assert mesh.subdomains[0].n_cells == 16
    mesh.validate()


def test_one_fault_entity_counts():
    mesh = build_cartesian_md_mesh((0.0, 0.0), (1.0, 1.0), (4, 4), [one_fault()])
    amb, flt = mesh.subdomains
    assert (amb.dim, amb.n_cells, amb.n_faces) == (2, 16, 44)
    assert (flt.dim, flt.n_cells, flt.n_faces) == (1, 4, 5)
    assert mesh.info[0].kind == "matrix"
    assert mesh.info[1].kind == "fault"
    assert len(mesh.interfaces) == 2
    assert [i.side for i in mesh.interfaces] == [1, 2]
    assert [i.side_sign for i in mesh.interfaces] == [-1, 1]
    for itf in mesh.interfaces:
        assert itf.n_mortar == 4
        assert np.allclose(itf.measures, 0.25)
        assert itf.lower == 1 and itf.higher == 0
        assert itf.kind == "fault"
    mesh.validate()


def test_one_fault_geometry():
    mesh = build_cartesian_md_mesh((0.0, 0.0), (1.0, 1.0), (4, 4), [one_fault()])
    amb, flt = mesh.subdomains
    assert np.allclose(amb.cell_volumes, 0.0625)
    assert np.allclose(flt.cell_volumes, 0.25)
    cf = flt.cell_centers_global()
    assert np.allclose(cf[:, 1], 0.5)
    assert np.allclose(np.sort(cf[:, 0]), [0.125, 0.375, 0.625, 0.875])


def test_mortar_faces_flagged_on_ambient():
    mesh = build_cartesian_md_mesh((0.0, 0.0), (1.0, 1.0), (4, 4), [one_fault()])
    amb = mesh.subdomains[0]
    mask = mesh.mortar_face_mask(0)
    assert mask.sum() == 8
    # cut faces carry the fault index, ordinary faces -1
    assert np.all(amb.face_cut[mask] == 0)
    assert np.all(amb.face_cut[~mask] == -1)
    sides = sorted(amb.face_side[mask].tolist())
    assert sides == [1] * 4 + [2] * 4
    assert np.all(amb.face_side[~mask] == 0)


def test_t_junction_counts():
    faults = [
        one_fault(),
        one_fault(p0=(0.5, 0.5), p1=(0.5, 1.0)),
    ]
    mesh = build_cartesian_md_mesh((0.0, 0.0), (1.0, 1.0), (8, 8), faults)
    dims = [(g.dim, g.n_cells, g.n_faces) for g in mesh.subdomains]
    assert dims == [(2, 64, 156), (1, 8, 10), (1, 4, 5), (0, 1, 0)]
    kinds = [info.kind for info in mesh.info]
    assert kinds == ["matrix", "fault", "fault", "intersection"]
    table = sorted(
        (i.lower, i.higher, i.kind, i.n_mortar) for i in mesh.interfaces
    )
    assert table == [
        (1, 0, "fault", 8),
        (1, 0, "fault", 8),
        (2, 0, "fault", 4),
        (2, 0, "fault", 4),
        (3, 1, "intersection", 1),
        (3, 1, "intersection", 1),
        (3, 2, "intersection", 1),
    ]
    mesh.validate()


def test_three_plane_cube_counts():
    cfg = builtin_case("cube3d")
    mesh = build_cartesian_md_mesh(
        cfg.domain_lo, cfg.domain_hi, (2, 2, 2), cfg.fault_specs()
    )
    dims = sorted(((g.dim, g.n_cells, g.n_faces) for g in mesh.subdomains), reverse=True)
    assert dims == [
        (3, 8, 48),
        (2, 4, 16), (2, 4, 16), (2, 4, 16),
        (1, 2, 4), (1, 2, 4), (1, 2, 4),
        (0, 1, 0),
    ]
    assert len(mesh.interfaces) == 24
    by_kind = {}
    for itf in mesh.interfaces:
        key = (itf.kind, mesh.subdomains[itf.lower].dim, itf.n_mortar)
        by_kind[key] = by_kind.get(key, 0) + 1
    assert by_kind == {
        ("fault", 2, 4): 6,
        ("intersection", 1, 2): 12,
        ("intersection", 0, 1): 6,
    }
    mesh.validate()


def test_refine_doubles_resolution():
    cfg = builtin_case("case1")
    for level, nf in enumerate([4, 8, 16, 32, 64]):
        mesh = refine(cfg, level)
        fault = mesh.subdomains[1]
        assert fault.n_cells == nf
        assert mesh.subdomains[0].n_cells == nf * nf
        for itf in mesh.interfaces:
            assert itf.n_mortar == nf


def test_deterministic_rebuild():
    cfg = builtin_case("network2d")
    a = build_cartesian_md_mesh(cfg.domain_lo, cfg.domain_hi, (8, 8), cfg.fault_specs())
    b = build_cartesian_md_mesh(cfg.domain_lo, cfg.domain_hi, (8, 8), cfg.fault_specs())
    assert len(a.subdomains) == len(b.subdomains)
    for ga, gb in zip(a.subdomains, b.subdomains):
        assert np.array_equal(ga.cell_centers, gb.cell_centers)
        assert np.array_equal(ga.face_cells, gb.face_cells)
    for ia, ib in zip(a.interfaces, b.interfaces):
        assert np.array_equal(ia.higher_faces, ib.higher_faces)
        assert np.array_equal(ia.lower_cells, ib.lower_cells)


def test_mortar_projection_tables():
    mesh = build_cartesian_md_mesh((0.0, 0.0), (1.0, 1.0), (4, 4), [one_fault()])
    for itf in mesh.interfaces:
        low = mortar_projection(itf, "lower")
        high = mortar_projection(itf, "higher")
        assert low.shape == (4, 2)
        assert high.shape == (4, 2)
        assert np.array_equal(low[:, 0], np.arange(4))
        # matching grids: each fault cell paired exactly once per side
        assert sorted(low[:, 1].tolist()) == [0, 1, 2, 3]
        assert np.array_equal(high[:, 1], itf.higher_faces)
    with pytest.raises(ValueError):
        mortar_projection(mesh.interfaces[0], "sideways")


def test_export_import_roundtrip(tmp_path):
    faults = [one_fault(), one_fault(p0=(0.5, 0.5), p1=(0.5, 1.0))]
    mesh = build_cartesian_md_mesh((0.0, 0.0), (1.0, 1.0), (8, 8), faults)
    path = tmp_path / "mesh.txt"
    export_mesh(mesh, str(path))
    back = import_mesh(str(path))
    assert len(back.subdomains) == len(mesh.subdomains)
    assert len(back.interfaces) == len(mesh.interfaces)
    for ga, gb in zip(mesh.subdomains, back.subdomains):
        assert ga.dim == gb.dim
        assert np.allclose(ga.cell_centers, gb.cell_centers)
        assert np.allclose(ga.cell_volumes, gb.cell_volumes)
        assert np.array_equal(ga.face_cells, gb.face_cells)
        assert np.allclose(ga.frame_origin, gb.frame_origin)
        assert np.allclose(ga.frame_axes, gb.frame_axes)
    for ia, ib in zip(mesh.interfaces, back.interfaces):
        assert (ia.lower, ia.higher, ia.side, ia.kind) == (
            ib.lower, ib.higher, ib.side, ib.kind
        )
        assert np.array_equal(ia.higher_faces, ib.higher_faces)
        assert np.array_equal(ia.lower_cells, ib.lower_cells)
        assert np.allclose(ia.measures, ib.measures)
    back.validate()


def test_off_grid_fault_rejected():
    with pytest.raises(MeshError):
        build_cartesian_md_mesh(
            (0.0, 0.0), (1.0, 1.0), (4, 4), [one_fault(p0=(0.0, 0.33), p1=(1.0, 0.33))]
        )


def test_partial_fault_must_end_on_grid_line():
    with pytest.raises(MeshError):
        build_cartesian_md_mesh(
            (0.0, 0.0), (1.0, 1.0), (4, 4), [one_fault(p0=(0.1, 0.5), p1=(1.0, 0.5))]
        )


def test_overlapping_faults_rejected():
    faults = [one_fault(), one_fault(p0=(0.25, 0.5), p1=(0.75, 0.5))]
    with pytest.raises(MeshError):
        build_cartesian_md_mesh((0.0, 0.0), (1.0, 1.0), (4, 4), faults)


def test_ambient_dimension_guard():
    with pytest.raises(MeshError):
        build_cartesian_md_mesh((0.0,), (1.0,), (2,), [])
