"""Interface law for thin inclusions with full-tensor permeability.

A fault's equi-dimensional permeability couples the normal flux through the
fault to the tangential pressure gradient inside it whenever the
normal-tangential entries are nonzero. Averaging across the aperture turns
the thin fault into a lower-dimensional subdomain endowed with

- an in-plane conductivity ``kappa_parallel`` (aperture-scaled tangential
  tensor),
- per side, a transfer coefficient ``kappa_perp`` for the pressure jump
  across each half of the fault, and
- per side, a vector ``kappa_t`` carrying the normal-tangential entries.

Eliminating the normal flux unknowns from the averaged Darcy law by a Schur
complement yields an effective in-plane tensor and exposes the interface
fluxes as a vector source inside the fault; the same elimination adds the
tangential-gradient term to each interface flux law. Side 1 is the side the
fault normal points into, side 2 the opposite one; the coupling sign of side
``s`` is ``-1`` for side 1 and ``+1`` for side 2 (the sign of the outward
normal of the neighboring domain relative to the fault normal).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps

from .mdmesh import CellGrid, MortarInterface


class InterfaceLawError(Exception):
    """Inconsistent or ill-posed fault parameters."""


@dataclass
class EquiDimFaultPerm:
    """Full-tensor fault permeability split into in-plane and normal parts.

    ``k_parallel`` is the tangential (t x t) block, ``k_perp[s]`` the
    normal-normal entry on side s, and ``k_t[s]`` the normal-tangential row
    on side s, in the fault's in-plane axes. A homogeneous fault has equal
    sides; side-dependent values describe an inclusion whose filling varies
    across the aperture midline.
    """

    k_parallel: np.ndarray
    k_perp: tuple
    k_t: tuple

    def __post_init__(self):
        self.k_parallel = np.atleast_2d(np.asarray(self.k_parallel, dtype=float))
        self.k_t = tuple(np.atleast_1d(np.asarray(v, dtype=float)) for v in self.k_t)
        t = self.k_parallel.shape[0]
        if self.k_parallel.shape != (t, t):
            raise InterfaceLawError("k_parallel must be square")
        if len(self.k_perp) != 2 or len(self.k_t) != 2:
            raise InterfaceLawError("k_perp and k_t need one entry per side")
        for v in self.k_t:
            if v.shape != (t,):
                raise InterfaceLawError("k_t entries must match the in-plane dimension")
        if min(self.k_perp) <= 0:
            raise InterfaceLawError("k_perp must be positive")


@dataclass
class MixedDimLaw:
    """Aperture-scaled coefficients of the lower-dimensional subdomain."""

    kappa_parallel: np.ndarray  # (t, t)
    kappa_perp: tuple  # per side
    kappa_t: tuple  # per side, (t,)
    codim: int
    aperture: float


@dataclass
class EffectiveTensor:
    """Schur-eliminated in-plane tensor and the per-side coupling vectors."""

    tensor: np.ndarray  # (t, t)
    coupling: tuple  # per side, kappa_t / kappa_perp


@dataclass
class InterfaceBlocks:
    """Per-mortar-cell coefficient arrays of one interface's flux law.

    With the integrated mortar flux ``lam`` (positive from the lower to the
    higher subdomain), the law reads per mortar cell

        d_inv * lam + |m| * (trace_h - p_l) + grad_coeff . grad p_l = 0

    and the eliminated normal fluxes induce the vector source
    ``chi_c = sum_m ainv_chi(c) @ chi_coeff_m * lam_m`` in the lower
    subdomain, handled by :func:`vector_source_from_mortar`.
    """

    d_inv: np.ndarray  # (n_m,)
    grad_coeff: np.ndarray  # (n_m, t)
    chi_coeff: np.ndarray  # (n_m, t)
    mg_coeff: np.ndarray  # (n_m,) imposed-density weights on higher faces


def scale_to_mixed_dim(perm: EquiDimFaultPerm, aperture: float, codim: int) -> MixedDimLaw:
    """Scale an equi-dimensional fault permeability to codimension ``codim``.

    The in-plane tensor is integrated across the collapsed directions
    (factor aperture**codim), the transfer coefficients absorb the half-width
    of the jump (factor 2 * aperture**(codim-2)), and the normal-tangential
    coupling survives only for codimension one, where a distinct tangential
    plane exists.
    """
    if codim < 1:
        raise InterfaceLawError("codimension must be at least 1")
    if aperture <= 0:
        raise InterfaceLawError("aperture must be positive")
    kpar = aperture**codim * perm.k_parallel
    kperp = tuple(2.0 * aperture ** (codim - 2) * k for k in perm.k_perp)
    if codim == 1:
        kt = tuple(np.array(v, dtype=float) for v in perm.k_t)
    else:
        kt = tuple(np.zeros_like(np.asarray(v, dtype=float)) for v in perm.k_t)
    return MixedDimLaw(
        kappa_parallel=kpar,
        kappa_perp=kperp,
        kappa_t=kt,
        codim=codim,
        aperture=aperture,
    )


def check_wellposed(law: MixedDimLaw) -> tuple:
    """Well-posedness margin of the averaged fault law.

    The eliminated normal-flux block stays positive definite iff, on each
    side, ``kappa_perp * det(kappa_parallel)`` dominates the squared
    normal-tangential coupling. Returns ``(ok, margin)`` where the margin is
    the minimum over sides; nonpositive margins make the mixed-dimensional
    operator lose coercivity and the configuration is rejected.
    """
    detp = float(np.linalg.det(law.kappa_parallel)) if law.kappa_parallel.size else 1.0
    margins = [
        kp * detp - float(np.dot(kt, kt))
        for kp, kt in zip(law.kappa_perp, law.kappa_t)
    ]
    margin = min(margins)
    return margin > 0.0, margin


def schur_effective_tensor(law: MixedDimLaw) -> EffectiveTensor:
    """Effective in-plane tensor after eliminating the normal fluxes.

    Each side removes a rank-one term kappa_t kappa_t^T / kappa_perp, the
    Schur complement of the side's transfer coefficient in its local
    permeability block; the well-posedness margin is what keeps the result
    positive definite. The coupling vectors kappa_t / kappa_perp reappear
    both in the vector source induced by the interface fluxes and in the
    gradient term of the interface law.
    """
    t = law.kappa_parallel.shape[0]
    tensor = law.kappa_parallel.copy()
    coupling = []
    for kp, kt in zip(law.kappa_perp, law.kappa_t):
        if kp <= 0:
            raise InterfaceLawError("kappa_perp must be positive")
        tensor -= np.outer(kt, kt) / kp
        coupling.append(np.asarray(kt, dtype=float) / kp)
    return EffectiveTensor(tensor=tensor, coupling=tuple(coupling))


def assemble_interface_blocks(
    itf: MortarInterface, law: MixedDimLaw, higher_grid: CellGrid
) -> InterfaceBlocks:
    """Coefficient arrays of one interface under the given law.

    The side of ``itf`` selects the transfer coefficient and coupling
    vector; the interface's permutation sign orients the tangential terms.
    """
    s = itf.side - 1
    if s not in (0, 1):
        raise InterfaceLawError(f"interface side must be 1 or 2, got {itf.side}")
    kp = law.kappa_perp[s]
    kt = np.asarray(law.kappa_t[s], dtype=float)
    if kp <= 0:
        raise InterfaceLawError("kappa_perp must be positive")
    m = itf.measures
    eps = float(itf.side_sign)
    d_inv = np.full(itf.n_mortar, 1.0 / kp)
    grad_coeff = -np.outer(m, eps * kt / kp)
    chi_coeff = np.outer(1.0 / m, eps * kt / kp)
    areas = higher_grid.face_areas[itf.higher_faces]
    mg_coeff = -1.0 / areas
    return InterfaceBlocks(
        d_inv=d_inv,
        grad_coeff=grad_coeff,
        chi_coeff=chi_coeff,
        mg_coeff=mg_coeff,
    )


def vector_source_from_mortar(
    grid: CellGrid,
    eff_inv: np.ndarray,
    contributions: list,
    n_lambda: int,
) -> sps.csr_matrix:
    """Sparse map from all mortar unknowns to a subdomain's vector source.

    ``eff_inv`` holds the per-cell inverse effective tensors (n_c, t, t);
    ``contributions`` is a list of (lower_cells, chi_coeff, col_offset)
    triples from this subdomain's higher-side interfaces; columns index the
    global mortar unknown vector of length ``n_lambda``.
    """
    t = grid.dim
    rows, cols, dat = [], [], []
    for cells, coeff, off in contributions:
        vec = np.einsum("mij,mj->mi", eff_inv[cells], coeff)  # (n_m, t)
        r = (cells[:, None] * t + np.arange(t)[None, :]).ravel()
        c = np.repeat(off + np.arange(cells.shape[0]), t)
        rows.append(r)
        cols.append(c)
        dat.append(vec.ravel())
    shape = (grid.n_cells * t, n_lambda)
    if not rows:
        return sps.csr_matrix(shape)
    return sps.csr_matrix(
        (np.concatenate(dat), (np.concatenate(rows), np.concatenate(cols))),
        shape=shape,
    )
