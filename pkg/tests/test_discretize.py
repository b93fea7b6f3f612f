"""Finite-volume discretization tests: TPFA, MPFA, traces, vector sources.

Linear pressure fields are in the exact solution space of both schemes, so
patch tests assert agreement to near machine precision. The 1D grids come
from the fault subdomain of a two-dimensional mesh.
"""

import numpy as np
import pytest

from mdflow.config import FaultConfig
from mdflow.discretize import (
    BC_DIRICHLET,
    BC_NEUMANN,
    BoundaryCondition,
    DiscretizationError,
    discretize,
    discretize_vector_source,
    isotropic_perm,
    pressure_trace,
    reconstruct_gradient,
)
from mdflow.mdmesh import build_cartesian_md_mesh


def ambient_grid(n=4):
    return build_cartesian_md_mesh((0.0, 0.0), (1.0, 1.0), (n, n), []).subdomains[0]


def line_grid(n=2):
    fault = FaultConfig(
        p0=(0.0, 0.5), p1=(1.0, 0.5), aperture=0.01,
        k_parallel=1.0, k_perp=(1.0, 1.0), k_t=(0.0, 0.0), name="F",
    )
    mesh = build_cartesian_md_mesh((0.0, 0.0), (1.0, 1.0), (n, n), [fault.spec()])
    return mesh.subdomains[1]


def dirichlet_bc(grid, values):
    bc = BoundaryCondition.empty(grid)
    bnd = grid.is_boundary()
    bc.kind[bnd] = BC_DIRICHLET
    bc.value[bnd] = values(grid.face_centers_global())[bnd]
    return bc


def test_two_cell_transmissibility():
    g = line_grid(2)
    assert g.n_cells == 2
    assert np.allclose(g.cell_volumes, 0.5)
    bc = BoundaryCondition.empty(g)
    bc.kind[g.is_boundary()] = BC_DIRICHLET
    op = discretize(g, isotropic_perm(g, 1.0), bc, method="tpfa")
    interior = np.flatnonzero(~g.is_boundary())
    row = op.flux_p[interior[0]].toarray().ravel()
    assert np.allclose(sorted(row), [-2.0, 2.0])
    assert abs(row.sum()) < 1e-14


def test_constant_pressure_no_flux():
    g = ambient_grid(4)
    bc = dirichlet_bc(g, lambda x: np.full(len(x), 7.5))
    op = discretize(g, isotropic_perm(g, 2.0), bc, method="tpfa")
    flux = op.flux_p @ np.full(g.n_cells, 7.5) + op.flux_g @ bc.value
    assert np.abs(flux).max() < 1e-12


@pytest.mark.parametrize("method", ["tpfa", "mpfa"])
def test_isotropic_linear_patch(method):
    g = ambient_grid(4)
    grad = np.array([2.0, -3.0])
    exact = lambda x: x @ grad + 1.0
    bc = dirichlet_bc(g, exact)
    K = 3.0
    op = discretize(g, isotropic_perm(g, K), bc, method=method)
    p = exact(g.cell_centers_global())
    flux = op.flux_p @ p + op.flux_g @ bc.value
    qvec = -K * grad
    expect = (g.face_normals @ qvec) * g.face_areas
    assert np.abs(flux - expect).max() < 1e-12
    trace = pressure_trace(op, p, bc.value)
    assert np.abs(trace - exact(g.face_centers_global())).max() < 1e-12
    rec = reconstruct_gradient(op, flux)
    assert np.abs(rec - grad[None, :]).max() < 1e-12


def test_full_tensor_linear_patch_mpfa():
    g = ambient_grid(4)
    K = np.array([[2.0, 0.7], [0.7, 1.5]])
    grad = np.array([1.3, -0.4])
    exact = lambda x: x @ grad + 2.0
    bc = dirichlet_bc(g, exact)
    perm = np.tile(K, (g.n_cells, 1, 1))
    op = discretize(g, perm, bc, method="mpfa")
    p = exact(g.cell_centers_global())
    flux = op.flux_p @ p + op.flux_g @ bc.value
    expect = (g.face_normals @ (-K @ grad)) * g.face_areas
    assert np.abs(flux - expect).max() < 1e-12
    trace = pressure_trace(op, p, bc.value)
    assert np.abs(trace - exact(g.face_centers_global())).max() < 1e-12


def test_mpfa_reduces_to_tpfa_isotropic():
    g = ambient_grid(4)
    bc = dirichlet_bc(g, lambda x: x[:, 0])
    perm = isotropic_perm(g, 1.7)
    a = discretize(g, perm, bc, method="tpfa")
    b = discretize(g, perm, bc, method="mpfa")
    assert abs(a.flux_p - b.flux_p).max() < 1e-12
    assert abs(a.flux_g - b.flux_g).max() < 1e-12


def test_mpfa_differs_from_tpfa_full_tensor():
    g = ambient_grid(4)
    K = np.array([[1.0, 0.6], [0.6, 1.0]])
    bc = dirichlet_bc(g, lambda x: x[:, 0])
    perm = np.tile(K, (g.n_cells, 1, 1))
    a = discretize(g, perm, bc, method="tpfa")
    b = discretize(g, perm, bc, method="mpfa")
    assert abs(a.flux_p - b.flux_p).max() > 1e-3


def test_auto_method_dispatch():
    g2 = ambient_grid(4)
    bc2 = dirichlet_bc(g2, lambda x: x[:, 0])
    perm = isotropic_perm(g2, 1.0)
    auto = discretize(g2, perm, bc2, method="auto")
    mpfa = discretize(g2, perm, bc2, method="mpfa")
    assert abs(auto.flux_p - mpfa.flux_p).max() == 0.0
    g1 = line_grid(2)
    bc1 = BoundaryCondition.empty(g1)
    bc1.kind[g1.is_boundary()] = BC_DIRICHLET
    auto1 = discretize(g1, isotropic_perm(g1, 1.0), bc1, method="auto")
    tpfa1 = discretize(g1, isotropic_perm(g1, 1.0), bc1, method="tpfa")
    assert abs(auto1.flux_p - tpfa1.flux_p).max() == 0.0


def test_vector_source_cancels_gradient():
    g = ambient_grid(4)
    grad = np.array([0.8, -1.1])
    exact = lambda x: x @ grad
    bc = dirichlet_bc(g, exact)
    op = discretize(g, isotropic_perm(g, 2.5), bc, method="mpfa")
    p = exact(g.cell_centers_global())
    chi = np.tile(-grad, g.n_cells)
    flux = op.flux_p @ p + op.flux_g @ bc.value + op.flux_chi @ chi
    assert np.abs(flux).max() < 1e-12
    trace = pressure_trace(op, p, bc.value, chi=chi)
    assert np.abs(trace - exact(g.face_centers_global())).max() < 1e-12
    rec = reconstruct_gradient(op, flux, chi=chi)
    assert np.abs(rec - grad[None, :]).max() < 1e-12


def test_vector_source_line_grid():
    g = line_grid(2)
    bc = BoundaryCondition.empty(g)
    bc.kind[g.is_boundary()] = BC_NEUMANN
    op = discretize(g, isotropic_perm(g, 1.0), bc, method="tpfa")
    chi = np.ones(g.n_cells * g.dim)
    flux = op.flux_chi @ chi
    interior = ~g.is_boundary()
    assert np.allclose(flux[interior], -1.0)
    assert np.allclose(flux[~interior], 0.0)


def test_vector_source_matrix_matches_operator():
    g = ambient_grid(4)
    bc = dirichlet_bc(g, lambda x: x[:, 0])
    perm = isotropic_perm(g, 1.0)
    op = discretize(g, perm, bc, method="mpfa")
    tx = discretize_vector_source(g, perm, bc, method="mpfa")
    assert abs(tx - op.flux_chi).max() == 0.0


def test_neumann_trace_one_sided():
    g = line_grid(2)
    bc = BoundaryCondition.empty(g)
    bnd = np.flatnonzero(g.is_boundary())
    bc.kind[bnd] = BC_NEUMANN
    # exact p = x with K = 1: Darcy flux is -1 along +x, so the outward
    # flux density is +1 at the left end and -1 at the right end
    fc = g.face_centers_global()
    left = bnd[np.argmin(fc[bnd, 0])]
    right = bnd[np.argmax(fc[bnd, 0])]
    bc.value[left] = 1.0
    bc.value[right] = -1.0
    op = discretize(g, isotropic_perm(g, 1.0), bc, method="tpfa")
    p = g.cell_centers_global()[:, 0]
    trace = pressure_trace(op, p, bc.value)
    assert abs(trace[left] - 0.0) < 1e-12
    assert abs(trace[right] - 1.0) < 1e-12


def test_wrong_perm_shape_rejected():
    g = ambient_grid(2)
    bc = dirichlet_bc(g, lambda x: x[:, 0])
    with pytest.raises(DiscretizationError):
        discretize(g, np.ones((g.n_cells + 1, 2, 2)), bc, method="tpfa")


def test_bc_length_mismatch_rejected():
    g = ambient_grid(2)
    bc = BoundaryCondition(
        kind=np.zeros(3, dtype=int), value=np.zeros(3)
    )
    with pytest.raises(DiscretizationError):
        discretize(g, isotropic_perm(g, 1.0), bc, method="tpfa")


def test_unknown_method_rejected():
    g = ambient_grid(2)
    bc = dirichlet_bc(g, lambda x: x[:, 0])
    with pytest.raises(DiscretizationError):
        discretize(g, isotropic_perm(g, 1.0), bc, method="fancy")
