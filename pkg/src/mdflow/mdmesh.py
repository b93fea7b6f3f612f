"""Mixed-dimensional Cartesian meshes for domains with thin inclusions.

The ambient porous medium is kept as a single Cartesian grid in which every
face lying on a fault surface is duplicated (a "slit"): the two copies become
internal boundary faces, one attached to either side. Each fault surface is
meshed as a grid one dimension lower whose cells coincide with the slit
faces; fault-fault intersections become grids two dimensions lower, down to
0d points. Subdomains of adjacent dimension are linked by mortar interfaces
whose cells are copies of the lower-dimensional cells (matching grids).

All geometry is axis aligned. Faults must lie on grid planes and their
extents must terminate on grid nodes at the requested resolution.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)

_TOL = 1e-9


class MeshError(Exception):
    """Invalid mesh topology, geometry, or non-representable input."""


def _as_float_array(x, shape=None) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if shape is not None:
        a = a.reshape(shape)
    return a


@dataclass
class CellGrid:
    """A fixed-dimension cell grid, possibly embedded in a higher ambient space.

    Cell centers, face centers, and face normals are stored in the grid's own
    local coordinates (``dim`` components). The affine frame
    ``x_global = frame_origin + local @ frame_axes`` embeds local coordinates
    into the ambient space.

    Interior faces list two distinct cell neighbors and their normal points
    from ``face_cells[f, 0]`` to ``face_cells[f, 1]``. Boundary faces list one
    neighbor (second entry −1) and an outward normal.
    """

    dim: int
    cell_volumes: np.ndarray
    cell_centers: np.ndarray
    cell_widths: np.ndarray
    face_areas: np.ndarray
    face_centers: np.ndarray
    face_normals: np.ndarray
    face_cells: np.ndarray
    #: −1 for interior / internal faces, else 2*axis + (0 for low, 1 for high)
    #: identifying the ambient domain side the face lies on.
    face_bnd: np.ndarray
    #: index of the cut (fault/intersection trace) a slit face copy lies on,
    #: −1 elsewhere. Indices refer to the cut list used to build this grid.
    face_cut: np.ndarray
    #: 1 for the slit copy on the side the cut normal points into, 2 for the
    #: opposite side, 0 for ordinary faces.
    face_side: np.ndarray
    frame_origin: np.ndarray
    frame_axes: np.ndarray
    node_coords: Optional[np.ndarray] = None
    face_nodes: Optional[np.ndarray] = None

    @property
    def n_cells(self) -> int:
        return self.cell_volumes.shape[0]

    @property
    def n_faces(self) -> int:
        return self.face_areas.shape[0]

    @property
    def ambient_dim(self) -> int:
        return self.frame_origin.shape[0]

    def is_boundary(self) -> np.ndarray:
        """Boolean mask of faces having a single cell neighbor."""
        return self.face_cells[:, 1] < 0

    def cell_centers_global(self) -> np.ndarray:
        if self.dim == 0:
            return np.tile(self.frame_origin, (self.n_cells, 1))
        return self.frame_origin + self.cell_centers @ self.frame_axes

    def face_centers_global(self) -> np.ndarray:
        if self.dim == 0:
            return np.zeros((0, self.ambient_dim))
        return self.frame_origin + self.face_centers @ self.frame_axes

    def validate(self) -> None:
        """Assert structural grid invariants (cheap, used at build time)."""
        interior = ~self.is_boundary()
        if np.any(self.face_cells[interior, 0] == self.face_cells[interior, 1]):
            raise MeshError("interior face with identical neighbors")
        if self.dim > 0:
            norms = np.linalg.norm(self.face_normals, axis=1)
            if not np.allclose(norms, 1.0, atol=1e-12):
                raise MeshError("face normals are not unit length")
            # Closed-cell condition: signed area-weighted normals cancel.
            acc = np.zeros((self.n_cells, self.dim))
            out = self.face_areas[:, None] * self.face_normals
            np.add.at(acc, self.face_cells[:, 0], out)
            inner = self.face_cells[interior, 1]
            np.add.at(acc, inner, -out[interior])
            scale = np.abs(self.face_areas).max() + 1e-300
            if np.abs(acc).max() > 1e-10 * scale:
                raise MeshError("closed-cell condition violated")


@dataclass
class MortarInterface:
    """Interface between a lower-dimensional subdomain and a higher one.

    One mortar cell per coupled pair: ``higher_faces[m]`` is a boundary face
    of the higher grid and ``lower_cells[m]`` a cell of the lower grid, with
    equal measure. ``side_sign`` is the permutation sign of the coupling: +1
    when the higher domain's outward normal at the interface coincides with
    the stored cut normal (the side the cut normal points away from), −1 on
    the side the cut normal points into.
    """

    lower: int
    higher: int
    side: int
    side_sign: int
    higher_faces: np.ndarray
    lower_cells: np.ndarray
    measures: np.ndarray
    #: id of the fault whose material governs this coupling (for couplings
    #: between intersection objects the governing values are inherited and
    #: resolved by the material layer; ``fault_id`` is then −1).
    fault_id: int = -1
    kind: str = "fault"

    @property
    def n_mortar(self) -> int:
        return self.higher_faces.shape[0]


@dataclass
class SubdomainInfo:
    """Bookkeeping for a subdomain: its role and originating fault(s)."""

    kind: str  # "matrix" | "fault" | "intersection"
    fault_ids: tuple = ()


@dataclass
class FaultSpec:
    """Axis-aligned thin inclusion given by two corner points.

    The two corners must agree in exactly one coordinate (the fault plane).
    The fault normal points toward increasing plane coordinate; material
    side 1 is the side the normal points into, side 2 the other. ``k_t``
    entries are vectors in the fault's in-plane axes taken in increasing
    ambient-axis order.
    """

    p0: tuple
    p1: tuple
    aperture: float
    k_parallel: np.ndarray  # (dim-1) x (dim-1) in-plane tensor
    k_perp: tuple  # scalar per side (side1, side2)
    k_t: tuple  # in-plane vector per side (side1, side2)
    name: str = ""

    def __post_init__(self):
        p0 = np.asarray(self.p0, dtype=float)
        p1 = np.asarray(self.p1, dtype=float)
        if p0.shape != p1.shape:
            raise MeshError(f"fault {self.name!r}: corner dimension mismatch")
        eq = np.isclose(p0, p1, atol=_TOL)
        if eq.sum() != 1:
            raise MeshError(
                f"fault {self.name!r}: corners must agree in exactly one coordinate"
            )
        if self.aperture <= 0:
            raise MeshError(f"fault {self.name!r}: aperture must be positive")

    @property
    def axis(self) -> int:
        """The constant (plane-normal) coordinate axis."""
        p0 = np.asarray(self.p0, dtype=float)
        p1 = np.asarray(self.p1, dtype=float)
        return int(np.where(np.isclose(p0, p1, atol=_TOL))[0][0])

    @property
    def plane(self) -> float:
        return float(np.asarray(self.p0, dtype=float)[self.axis])

    @property
    def inplane_axes(self) -> tuple:
        d = len(self.p0)
        return tuple(a for a in range(d) if a != self.axis)

    def extent(self, axis: int) -> tuple:
        lo = min(self.p0[axis], self.p1[axis])
        hi = max(self.p0[axis], self.p1[axis])
        if hi - lo <= _TOL:
            raise MeshError(f"fault {self.name!r}: zero extent along axis {axis}")
        return float(lo), float(hi)


@dataclass
class MixedDimMesh:
    """DAG of subdomain grids linked by mortar interfaces.

    Subdomain ids index ``subdomains``; interfaces connect dimensions
    differing by exactly one, lower-dimensional grids listed after their
    ambient grid.
    """

    dim: int
    subdomains: list
    info: list
    interfaces: list
    domain_lo: np.ndarray = field(default_factory=lambda: np.zeros(0))
    domain_hi: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def n_subdomains(self) -> int:
        return len(self.subdomains)

    def higher_neighbors(self, i: int) -> list:
        """Interfaces where subdomain ``i`` is the lower side."""
        return [itf for itf in self.interfaces if itf.lower == i]

    def lower_neighbors(self, i: int) -> list:
        """Interfaces where subdomain ``i`` is the higher side."""
        return [itf for itf in self.interfaces if itf.higher == i]

    def mortar_face_mask(self, i: int) -> np.ndarray:
        """Faces of subdomain ``i`` that are the higher side of an interface."""
        mask = np.zeros(self.subdomains[i].n_faces, dtype=bool)
        for itf in self.lower_neighbors(i):
            mask[itf.higher_faces] = True
        return mask

    def validate(self) -> None:
        for g in self.subdomains:
            g.validate()
        for itf in self.interfaces:
            gl = self.subdomains[itf.lower]
            gh = self.subdomains[itf.higher]
            if gh.dim - gl.dim != 1:
                raise MeshError("interface must connect dimensions differing by 1")
            if itf.lower <= itf.higher:
                pass  # ordering by dimension is checked below
            if gl.dim >= gh.dim:
                raise MeshError("interface lower side must have the smaller dimension")
            if np.unique(itf.higher_faces).size != itf.n_mortar:
                raise MeshError("mortar cells must map to distinct higher faces")
            areas = gh.face_areas[itf.higher_faces]
            vols = gl.cell_volumes[itf.lower_cells]
            if not np.allclose(areas, vols, rtol=1e-10):
                raise MeshError("mortar cell measures do not match across sides")
            if not np.allclose(itf.measures, vols, rtol=1e-10):
                raise MeshError("stored mortar measures inconsistent")


# ---------------------------------------------------------------------------
# Generic Cartesian grid builder with slits.
# ---------------------------------------------------------------------------


@dataclass
class _Cut:
    """A slit locus inside a grid: a plane of constant ``coord`` on ``axis``
    bounded by open ``spans`` on the remaining local axes (empty for 1d grids,
    where the cut is a single point)."""

    axis: int
    coord: float
    spans: tuple  # ((lo, hi), ...) over the other local axes in order


def _snap_index(value: float, lo: float, h: float, name: str) -> int:
    t = (value - lo) / h
    k = round(t)
    if abs(t - k) > 1e-6:
        raise MeshError(f"{name}: coordinate {value} is not on a grid line (h={h})")
    return int(k)


def _build_cartesian_grid(
    lo: Sequence[float],
    hi: Sequence[float],
    n: Sequence[int],
    cuts: Sequence[_Cut],
    frame_origin: np.ndarray,
    frame_axes: np.ndarray,
    bnd_axis_map: Sequence[int],
    with_nodes: bool = False,
) -> CellGrid:
    """Build a uniform Cartesian grid on [lo, hi] with ``n`` cells per axis,
    duplicating every face that lies on one of ``cuts``.

    ``bnd_axis_map`` translates local axes to ambient axes for boundary-side
    tags; a value of −1 marks local box faces on that axis side pair as not on
    the ambient boundary (handled by the caller: fault tips, point contacts).
    Entries come in pairs conceptually: the tag emitted is
    ``2*bnd_axis_map[a] + (0|1)`` when ``bnd_axis_map[a] >= 0``.
    """
    dim = len(n)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    n = np.asarray(n, dtype=int)
    if np.any(n <= 0):
        raise MeshError("resolution must be positive along every axis")
    h = (hi - lo) / n

    # Cells, x-fastest lexicographic ordering: id = i + n0*(j + n1*k).
    axes_coords = [lo[a] + h[a] * (np.arange(n[a]) + 0.5) for a in range(dim)]
    grids = np.meshgrid(*axes_coords, indexing="ij")
    centers = np.stack([g.ravel(order="F") for g in grids], axis=1)
    n_cells = int(np.prod(n))
    volumes = np.full(n_cells, float(np.prod(h)))
    widths = np.tile(h, (n_cells, 1))

    strides = np.ones(dim, dtype=int)
    for a in range(1, dim):
        strides[a] = strides[a - 1] * n[a - 1]

    parts = {
        "area": [], "center": [], "normal": [], "cells": [],
        "bnd": [], "cut": [], "side": [], "nodes": [],
    }
    want_nodes = with_nodes and dim == 2

    for a in range(dim):
        others = [b for b in range(dim) if b != a]
        if others:
            ranges = [np.arange(n[b]) for b in others]
            mg = np.meshgrid(*ranges, indexing="ij")
            combo = np.stack([m.ravel(order="F") for m in mg], axis=1)
        else:
            combo = np.zeros((1, 0), dtype=int)
        k = combo.shape[0]
        P = n[a] + 1
        area = float(np.prod([h[b] for b in others])) if others else 1.0

        plane_idx = np.repeat(np.arange(P), k)
        row_idx = np.tile(np.arange(k), P)
        N0 = P * k
        cen = np.empty((N0, dim))
        cen[:, a] = lo[a] + plane_idx * h[a]
        for bi, b in enumerate(others):
            cen[:, b] = lo[b] + (combo[row_idx, bi] + 0.5) * h[b]

        cid_off = combo @ strides[others] if others else np.zeros(1, dtype=int)
        cid_lo = cid_off[row_idx] + (plane_idx - 1) * strides[a]
        cid_hi = cid_off[row_idx] + plane_idx * strides[a]

        at_lo = plane_idx == 0
        at_hi = plane_idx == n[a]
        boundary = at_lo | at_hi

        cut_of = np.full(N0, -1, dtype=int)
        for ci, cut in enumerate(cuts):
            if cut.axis != a:
                continue
            mask = np.abs(cen[:, a] - cut.coord) <= _TOL
            for sp, b in zip(cut.spans, others):
                mask &= (cen[:, b] > sp[0] + _TOL) & (cen[:, b] < sp[1] - _TOL)
            mask &= ~boundary & (cut_of < 0)
            cut_of[mask] = ci
        slit = cut_of >= 0

        # Duplicate slit positions: copy 0 attaches below (side 2, outward
        # normal +e_a), copy 1 attaches above (side 1, outward normal −e_a).
        rep = np.where(slit, 2, 1)
        src = np.repeat(np.arange(N0), rep)
        first_of = np.concatenate(([0], np.cumsum(rep)[:-1]))
        rank = np.arange(src.shape[0]) - np.repeat(first_of, rep)

        c0 = np.where(at_lo[src], cid_hi[src], cid_lo[src])
        c0 = np.where(slit[src] & (rank == 1), cid_hi[src], c0)
        c1 = np.where(boundary[src] | slit[src], -1, cid_hi[src])

        sign = np.ones(src.shape[0])
        sign[at_lo[src]] = -1.0
        sign[slit[src] & (rank == 1)] = -1.0
        nrm = np.zeros((src.shape[0], dim))
        nrm[:, a] = sign

        amb = bnd_axis_map[a]
        bnd = np.full(src.shape[0], -1, dtype=int)
        if amb >= 0:
            bnd[at_lo[src]] = 2 * amb
            bnd[at_hi[src]] = 2 * amb + 1

        cut_arr = np.where(slit[src], cut_of[src], -1)
        side_arr = np.zeros(src.shape[0], dtype=int)
        side_arr[slit[src] & (rank == 0)] = 2
        side_arr[slit[src] & (rank == 1)] = 1

        parts["area"].append(np.full(src.shape[0], area))
        parts["center"].append(cen[src])
        parts["normal"].append(nrm)
        parts["cells"].append(np.stack([c0, c1], axis=1))
        parts["bnd"].append(bnd)
        parts["cut"].append(cut_arr)
        parts["side"].append(side_arr)
        if want_nodes:
            j = combo[row_idx, 0]
            if a == 0:
                nd = np.stack(
                    [plane_idx + (n[0] + 1) * j, plane_idx + (n[0] + 1) * (j + 1)], axis=1
                )
            else:
                nd = np.stack(
                    [j + (n[0] + 1) * plane_idx, j + 1 + (n[0] + 1) * plane_idx], axis=1
                )
            parts["nodes"].append(nd[src])

    node_coords = None
    face_nodes = None
    if want_nodes:
        xs = lo[0] + h[0] * np.arange(n[0] + 1)
        ys = lo[1] + h[1] * np.arange(n[1] + 1)
        node_coords = np.stack(
            [np.tile(xs, n[1] + 1), np.repeat(ys, n[0] + 1)], axis=1
        )
        face_nodes = np.concatenate(parts["nodes"], axis=0)

    grid = CellGrid(
        dim=dim,
        cell_volumes=volumes,
        cell_centers=centers,
        cell_widths=widths,
        face_areas=np.concatenate(parts["area"]),
        face_centers=np.concatenate(parts["center"], axis=0),
        face_normals=np.concatenate(parts["normal"], axis=0),
        face_cells=np.concatenate(parts["cells"], axis=0),
        face_bnd=np.concatenate(parts["bnd"]),
        face_cut=np.concatenate(parts["cut"]),
        face_side=np.concatenate(parts["side"]),
        frame_origin=frame_origin,
        frame_axes=frame_axes,
        node_coords=node_coords,
        face_nodes=face_nodes,
    )
    return grid


def _point_grid(location: np.ndarray) -> CellGrid:
    d = location.shape[0]
    return CellGrid(
        dim=0,
        cell_volumes=np.array([1.0]),
        cell_centers=np.zeros((1, 0)),
        cell_widths=np.zeros((1, 0)),
        face_areas=np.zeros(0),
        face_centers=np.zeros((0, 0)),
        face_normals=np.zeros((0, 0)),
        face_cells=np.zeros((0, 2), dtype=int),
        face_bnd=np.zeros(0, dtype=int),
        face_cut=np.zeros(0, dtype=int),
        face_side=np.zeros(0, dtype=int),
        frame_origin=location.astype(float),
        frame_axes=np.zeros((0, d)),
    )


# ---------------------------------------------------------------------------
# Mixed-dimensional mesh construction.
# ---------------------------------------------------------------------------


def _fault_intersections_2d(faults: Sequence[FaultSpec]):
    """Intersection points of axis-aligned fault segments in 2d.

    Returns a list of (coords, contacts) sorted by coordinates, where
    contacts is a list of (fault index, 'slit'|'end') describing how each
    fault meets the point.
    """
    points = {}
    for i, fi in enumerate(faults):
        for j, fj in enumerate(faults):
            if j <= i or fi.axis == fj.axis:
                continue
            # fi constant on axis ai, fj on aj != ai.
            ai, aj = fi.axis, fj.axis
            p = np.zeros(2)
            p[ai] = fi.plane
            p[aj] = fj.plane
            lo_i, hi_i = fi.extent(aj)
            lo_j, hi_j = fj.extent(ai)
            on_i = lo_i - _TOL <= p[aj] <= hi_i + _TOL
            on_j = lo_j - _TOL <= p[ai] <= hi_j + _TOL
            if not (on_i and on_j):
                continue
            key = (round(p[0], 12), round(p[1], 12))
            contacts = points.setdefault(key, {})

            def classify(f, axis_along, coord):
                lo_f, hi_f = f.extent(axis_along)
                if coord <= lo_f + _TOL or coord >= hi_f - _TOL:
                    return "end"
                return "slit"

            contacts[i] = classify(fi, aj, p[aj])
            contacts[j] = classify(fj, ai, p[ai])
    out = []
    for key in sorted(points):
        out.append((np.array(key, dtype=float), sorted(points[key].items())))
    return out


def _check_overlaps(faults: Sequence[FaultSpec]) -> None:
    for i, fi in enumerate(faults):
        for j in range(i + 1, len(faults)):
            fj = faults[j]
            if fi.axis != fj.axis or abs(fi.plane - fj.plane) > _TOL:
                continue
            overlap = True
            for a in fi.inplane_axes:
                lo_i, hi_i = fi.extent(a)
                lo_j, hi_j = fj.extent(a)
                if min(hi_i, hi_j) - max(lo_i, lo_j) <= _TOL:
                    overlap = False
            if overlap:
                raise MeshError(
                    f"faults {fi.name or i!r} and {fj.name or j!r} overlap on a shared plane"
                )


def build_cartesian_md_mesh(
    domain_lo: Sequence[float],
    domain_hi: Sequence[float],
    resolution: Sequence[int],
    faults: Sequence[FaultSpec],
) -> MixedDimMesh:
    """Construct the mixed-dimensional mesh for an axis-aligned box.

    Parameters
    ----------
    domain_lo, domain_hi : sequence of float
        Corners of the ambient box.
    resolution : sequence of int
        Cells per axis of the ambient grid.
    faults : sequence of FaultSpec
        Thin inclusions; every fault plane must coincide with a grid face
        plane and fault endpoints must lie on grid nodes.

    Returns
    -------
    MixedDimMesh
        Ambient grid (id 0), one grid per fault, then intersection grids in
        deterministic order, linked by mortar interfaces.
    """
    dim = len(resolution)
    lo = np.asarray(domain_lo, dtype=float)
    hi = np.asarray(domain_hi, dtype=float)
    n = np.asarray(resolution, dtype=int)
    if dim not in (2, 3):
        raise MeshError("ambient dimension must be 2 or 3")
    h = (hi - lo) / n

    for k, f in enumerate(faults):
        if len(f.p0) != dim:
            raise MeshError(f"fault {f.name or k!r}: wrong coordinate dimension")
        _snap_index(f.plane, lo[f.axis], h[f.axis], f"fault {f.name or k!r}")
        for a in f.inplane_axes:
            e0, e1 = f.extent(a)
            _snap_index(e0, lo[a], h[a], f"fault {f.name or k!r}")
            _snap_index(e1, lo[a], h[a], f"fault {f.name or k!r}")
    _check_overlaps(faults)

    if dim == 2:
        return _build_md_2d(lo, hi, n, h, list(faults))
    return _build_md_3d(lo, hi, n, h, list(faults))


def _match_faces_to_cells(
    grid_h: CellGrid, faces: np.ndarray, grid_l: CellGrid
) -> np.ndarray:
    """Order ``faces`` of the higher grid to match the lower grid's cells by
    coinciding global centroids. Returns the permuted face array."""
    fc = grid_h.face_centers_global()[faces]
    cc = grid_l.cell_centers_global()
    if fc.shape[0] != cc.shape[0]:
        raise MeshError("interface face/cell count mismatch")
    # Lexicographic sort both sides, then invert the cell sort.
    key_f = np.lexsort(fc.T)
    key_c = np.lexsort(cc.T)
    if not np.allclose(fc[key_f], cc[key_c], atol=1e-9):
        raise MeshError("interface face/cell centroids do not coincide")
    out = np.empty(cc.shape[0], dtype=int)
    out[key_c] = faces[key_f]
    return out


def _interface(lower, higher, side, faces, grid_l, measures, fault_id, kind):
    sign = +1 if side == 2 else -1
    return MortarInterface(
        lower=lower,
        higher=higher,
        side=side,
        side_sign=sign,
        higher_faces=faces,
        lower_cells=np.arange(measures.shape[0]),
        measures=measures,
        fault_id=fault_id,
        kind=kind,
    )


def _tag_ambient_boundary(grid: CellGrid, lo: np.ndarray, hi: np.ndarray) -> None:
    """Mark boundary faces of an embedded grid that lie on the ambient box."""
    cand = np.where((grid.face_cells[:, 1] < 0) & (grid.face_cut < 0))[0]
    if not cand.size:
        return
    gx = grid.face_centers_global()[cand]
    for a in range(lo.shape[0]):
        grid.face_bnd[cand[np.abs(gx[:, a] - lo[a]) <= _TOL]] = 2 * a
        grid.face_bnd[cand[np.abs(gx[:, a] - hi[a]) <= _TOL]] = 2 * a + 1


def _build_md_2d(lo, hi, n, h, faults):
    dim = 2
    points = _fault_intersections_2d(faults)

    # Ambient grid: cuts are the fault traces.
    cuts = [
        _Cut(f.axis, f.plane, (f.extent(f.inplane_axes[0]),)) for f in faults
    ]
    ambient = _build_cartesian_grid(
        lo, hi, n, cuts, np.zeros(dim), np.eye(dim), bnd_axis_map=[0, 1], with_nodes=True
    )

    subdomains = [ambient]
    info = [SubdomainInfo(kind="matrix")]
    interfaces = []

    fault_sub_id = {}
    for k, f in enumerate(faults):
        b = f.inplane_axes[0]
        e0, e1 = f.extent(b)
        nb = _snap_index(e1, lo[b], h[b], "fault") - _snap_index(e0, lo[b], h[b], "fault")
        origin = np.zeros(dim)
        origin[f.axis] = f.plane
        axes = np.zeros((1, dim))
        axes[0, b] = 1.0
        # Points slitting this fault become interior cuts of its 1d grid.
        own_cuts = []
        for coords, contacts in points:
            for fi, how in contacts:
                if fi == k and how == "slit":
                    own_cuts.append(_Cut(0, float(coords[b]), ()))
        grid = _build_cartesian_grid(
            [e0], [e1], [nb], own_cuts, origin, axes, bnd_axis_map=[-1]
        )
        _tag_ambient_boundary(grid, lo, hi)
        sub_id = len(subdomains)
        subdomains.append(grid)
        info.append(SubdomainInfo(kind="fault", fault_ids=(k,)))
        fault_sub_id[k] = sub_id

        for side in (1, 2):
            faces = np.where(
                (ambient.face_cut == k) & (ambient.face_side == side)
            )[0]
            faces = _match_faces_to_cells(ambient, faces, grid)
            interfaces.append(
                _interface(sub_id, 0, side, faces, grid, grid.cell_volumes.copy(), k, "fault")
            )

    # 0d intersection subdomains and their couplings to fault branches.
    for coords, contacts in points:
        p_id = len(subdomains)
        subdomains.append(_point_grid(coords))
        info.append(
            SubdomainInfo(kind="intersection", fault_ids=tuple(fi for fi, _ in contacts))
        )
        for fi, how in contacts:
            g = subdomains[fault_sub_id[fi]]
            gx = g.face_centers_global()
            at_point = np.where(
                (g.face_cells[:, 1] < 0)
                & (np.abs(gx - coords[None, :]).max(axis=1) <= _TOL)
            )[0]
            if how == "end":
                at_point = [f for f in at_point if g.face_cut[f] < 0 and g.face_bnd[f] < 0]
            else:
                at_point = [f for f in at_point if g.face_cut[f] >= 0]
            if not len(at_point):
                raise MeshError("intersection point has no adjoining fault face")
            for bf in at_point:
                # Branch side per the universal sign rule: outward normal
                # along +axis means the branch sits on the negative side.
                side = 2 if g.face_normals[bf, 0] > 0 else 1
                interfaces.append(
                    _interface(
                        p_id,
                        fault_sub_id[fi],
                        side,
                        np.array([bf], dtype=int),
                        subdomains[p_id],
                        np.array([1.0]),
                        fi,
                        "intersection",
                    )
                )

    mesh = MixedDimMesh(
        dim=dim,
        subdomains=subdomains,
        info=info,
        interfaces=interfaces,
        domain_lo=lo,
        domain_hi=hi,
    )
    mesh.validate()
    return mesh


def _build_md_3d(lo, hi, n, h, faults):
    dim = 3

    # Pairwise fault intersections: line segments.
    lines = []  # (along_axis, const: {axis: coord}, (s0, s1), fault pair)
    for i, fi in enumerate(faults):
        for j in range(i + 1, len(faults)):
            fj = faults[j]
            if fi.axis == fj.axis:
                continue
            along = 3 - fi.axis - fj.axis
            lo_i, hi_i = fi.extent(along)
            lo_j, hi_j = fj.extent(along)
            s0, s1 = max(lo_i, lo_j), min(hi_i, hi_j)
            if s1 - s0 <= _TOL:
                continue
            pos_i_lo, pos_i_hi = fi.extent(fj.axis)
            pos_j_lo, pos_j_hi = fj.extent(fi.axis)
            if not (pos_i_lo - _TOL <= fj.plane <= pos_i_hi + _TOL):
                continue
            if not (pos_j_lo - _TOL <= fi.plane <= pos_j_hi + _TOL):
                continue
            lines.append(
                {
                    "along": along,
                    "const": {fi.axis: fi.plane, fj.axis: fj.plane},
                    "span": (s0, s1),
                    "faults": (i, j),
                }
            )
    lines.sort(key=lambda L: (L["along"], sorted(L["const"].items())))

    # Points where lines cross.
    points = {}
    for a, la in enumerate(lines):
        for b in range(a + 1, len(lines)):
            lb = lines[b]
            if la["along"] == lb["along"]:
                continue
            p = np.zeros(3)
            for ax, c in la["const"].items():
                p[ax] = c
            pa = lb["const"].get(la["along"])
            if pa is None:
                continue
            p[la["along"]] = pa
            ok = True
            for L in (la, lb):
                s0, s1 = L["span"]
                if not (s0 - _TOL <= p[L["along"]] <= s1 + _TOL):
                    ok = False
                for ax, c in L["const"].items():
                    if abs(p[ax] - c) > _TOL:
                        ok = False
            if not ok:
                continue
            key = tuple(np.round(p, 12))
            points.setdefault(key, set()).update({a, b})
    point_list = [(np.array(k, dtype=float), sorted(v)) for k, v in sorted(points.items())]

    # Ambient grid.
    cuts = [
        _Cut(
            f.axis,
            f.plane,
            tuple(f.extent(a) for a in f.inplane_axes),
        )
        for f in faults
    ]
    ambient = _build_cartesian_grid(
        lo, hi, n, cuts, np.zeros(dim), np.eye(dim), bnd_axis_map=[0, 1, 2]
    )
    subdomains = [ambient]
    info = [SubdomainInfo(kind="matrix")]
    interfaces = []

    # Fault plane grids (2d) with slits along intersection lines.
    fault_sub_id = {}
    for k, f in enumerate(faults):
        b1, b2 = f.inplane_axes
        e1 = f.extent(b1)
        e2 = f.extent(b2)
        nb1 = _snap_index(e1[1], lo[b1], h[b1], "fault") - _snap_index(e1[0], lo[b1], h[b1], "fault")
        nb2 = _snap_index(e2[1], lo[b2], h[b2], "fault") - _snap_index(e2[0], lo[b2], h[b2], "fault")
        origin = np.zeros(dim)
        origin[f.axis] = f.plane
        axes = np.zeros((2, dim))
        axes[0, b1] = 1.0
        axes[1, b2] = 1.0
        own_cuts = []
        own_cut_lines = []
        for li, L in enumerate(lines):
            if k not in L["faults"]:
                continue
            # The line is constant on the fault's local axis where the other
            # fault cuts through.
            other = L["faults"][0] if L["faults"][1] == k else L["faults"][1]
            c_ax = faults[other].axis  # global axis constant along the line
            if c_ax == b1:
                local_axis, span_axis = 0, 1
            else:
                local_axis, span_axis = 1, 0
            own_cuts.append(
                _Cut(local_axis, L["const"][c_ax], (L["span"],))
            )
            own_cut_lines.append(li)
        grid = _build_cartesian_grid(
            [e1[0], e2[0]],
            [e1[1], e2[1]],
            [nb1, nb2],
            own_cuts,
            origin,
            axes,
            bnd_axis_map=[-1, -1],
            with_nodes=True,
        )
        _tag_ambient_boundary(grid, lo, hi)
        # Remap face_cut from local cut index to global line index.
        remap = np.full(max(len(own_cut_lines), 1), -1, dtype=int)
        for loc, li in enumerate(own_cut_lines):
            remap[loc] = li
        cut_mask = grid.face_cut >= 0
        grid.face_cut[cut_mask] = remap[grid.face_cut[cut_mask]]
        sub_id = len(subdomains)
        subdomains.append(grid)
        info.append(SubdomainInfo(kind="fault", fault_ids=(k,)))
        fault_sub_id[k] = sub_id
        for side in (1, 2):
            faces = np.where((ambient.face_cut == k) & (ambient.face_side == side))[0]
            faces = _match_faces_to_cells(ambient, faces, grid)
            interfaces.append(
                _interface(sub_id, 0, side, faces, grid, grid.cell_volumes.copy(), k, "fault")
            )

    # Line grids (1d) with slits at crossing points.
    line_sub_id = {}
    for li, L in enumerate(lines):
        along = L["along"]
        s0, s1 = L["span"]
        nb = _snap_index(s1, lo[along], h[along], "line") - _snap_index(
            s0, lo[along], h[along], "line"
        )
        origin = np.zeros(dim)
        for ax, c in L["const"].items():
            origin[ax] = c
        axes = np.zeros((1, dim))
        axes[0, along] = 1.0
        own_cuts = []
        for coords, line_ids in point_list:
            if li in line_ids and s0 + _TOL < coords[along] < s1 - _TOL:
                own_cuts.append(_Cut(0, float(coords[along]), ()))
        grid = _build_cartesian_grid(
            [s0], [s1], [nb], own_cuts, origin, axes, bnd_axis_map=[-1]
        )
        _tag_ambient_boundary(grid, lo, hi)
        sub_id = len(subdomains)
        subdomains.append(grid)
        info.append(SubdomainInfo(kind="intersection", fault_ids=L["faults"]))
        line_sub_id[li] = sub_id
        # Couple to both faults containing the line, one interface per side.
        for fk in L["faults"]:
            fg = subdomains[fault_sub_id[fk]]
            for side in (1, 2):
                faces = np.where((fg.face_cut == li) & (fg.face_side == side))[0]
                faces = _match_faces_to_cells(fg, faces, grid)
                interfaces.append(
                    _interface(
                        sub_id,
                        fault_sub_id[fk],
                        side,
                        faces,
                        grid,
                        grid.cell_volumes.copy(),
                        fk,
                        "intersection",
                    )
                )

    # 0d points coupling to line branches.
    for coords, line_ids in point_list:
        p_id = len(subdomains)
        subdomains.append(_point_grid(coords))
        fset = []
        for li in line_ids:
            fset.extend(lines[li]["faults"])
        info.append(SubdomainInfo(kind="intersection", fault_ids=tuple(sorted(set(fset)))))
        for li in line_ids:
            g = subdomains[line_sub_id[li]]
            gx = g.face_centers_global()
            at_point = np.where(
                (g.face_cells[:, 1] < 0)
                & (np.abs(gx - coords[None, :]).max(axis=1) <= _TOL)
            )[0]
            at_point = [f for f in at_point if g.face_cut[f] >= 0 or g.face_bnd[f] < 0]
            for bf in at_point:
                side = 2 if g.face_normals[bf, 0] > 0 else 1
                interfaces.append(
                    _interface(
                        p_id,
                        line_sub_id[li],
                        side,
                        np.array([bf], dtype=int),
                        subdomains[p_id],
                        np.array([1.0]),
                        -1,
                        "intersection",
                    )
                )

    mesh = MixedDimMesh(
        dim=dim,
        subdomains=subdomains,
        info=info,
        interfaces=interfaces,
        domain_lo=lo,
        domain_hi=hi,
    )
    mesh.validate()
    return mesh


def refine(config, level: int) -> MixedDimMesh:
    """Rebuild the mesh of ``config`` with the resolution scaled by 2**level.

    ``config`` needs ``domain_lo``, ``domain_hi``, ``resolution``, and
    ``fault_specs()`` attributes (any case configuration object qualifies).
    """
    if level < 0:
        raise MeshError("refinement level must be nonnegative")
    res = [r * 2**level for r in config.resolution]
    return build_cartesian_md_mesh(config.domain_lo, config.domain_hi, res, config.fault_specs())


def mortar_projection(interface: MortarInterface, target: str) -> np.ndarray:
    """Pairing table of an interface as (mortar cell, entity) index pairs.

    ``target`` selects the higher grid's boundary faces or the lower grid's
    cells. With matching grids these are one-to-one with unit weights.
    """
    m = np.arange(interface.n_mortar)
    if target == "higher":
        return np.stack([m, interface.higher_faces], axis=1)
    if target == "lower":
        return np.stack([m, interface.lower_cells], axis=1)
    raise ValueError("target must be 'higher' or 'lower'")


# ---------------------------------------------------------------------------
# Plain-text mesh import/export.
# ---------------------------------------------------------------------------


def export_mesh(mesh: MixedDimMesh, path: str) -> None:
    """Write the mesh in the whitespace-separated text format.

    Layout (one entity per line):

    - header: ``mdmesh 1 <ambient dim>`` then ``domain <lo...> <hi...>``
    - per subdomain: ``subdomain <id> dim <d> kind <kind> faults <ids|->``,
      ``frame`` (origin then row-major axes), ``cells <n>`` with lines
      ``<volume> <center...> <widths...>``, ``faces <n>`` with lines
      ``<area> <center...> <normal...> <c0> <c1> <bnd> <cut> <side>``, and
      for 2d grids ``nodes <n>`` (coordinates) plus ``face_nodes`` pairs.
    - per interface: ``interface lower higher side sign fault kind`` then
      ``pairs <n>`` with lines ``<higher_face> <lower_cell> <measure>``.
    """

    def fmt(vals):
        return " ".join(f"{v:.17g}" for v in np.atleast_1d(vals))

    out = []
    out.append(f"mdmesh 1 {mesh.dim}")
    out.append(f"domain {fmt(mesh.domain_lo)} {fmt(mesh.domain_hi)}")
    out.append(f"subdomains {mesh.n_subdomains}")
    for sid, g in enumerate(mesh.subdomains):
        inf = mesh.info[sid]
        fids = ",".join(str(i) for i in inf.fault_ids) if inf.fault_ids else "-"
        out.append(f"subdomain {sid} dim {g.dim} kind {inf.kind} faults {fids}")
        out.append(f"frame {fmt(g.frame_origin)} {fmt(g.frame_axes.ravel())}")
        out.append(f"cells {g.n_cells}")
        for c in range(g.n_cells):
            out.append(
                f"{g.cell_volumes[c]:.17g} {fmt(g.cell_centers[c])} {fmt(g.cell_widths[c])}".rstrip()
            )
        out.append(f"faces {g.n_faces}")
        for f in range(g.n_faces):
            out.append(
                f"{g.face_areas[f]:.17g} {fmt(g.face_centers[f])} {fmt(g.face_normals[f])} "
                f"{g.face_cells[f, 0]} {g.face_cells[f, 1]} {g.face_bnd[f]} "
                f"{g.face_cut[f]} {g.face_side[f]}"
            )
        if g.node_coords is not None:
            out.append(f"nodes {g.node_coords.shape[0]}")
            for p in g.node_coords:
                out.append(fmt(p))
            out.append("face_nodes")
            for pair in g.face_nodes:
                out.append(f"{pair[0]} {pair[1]}")
        else:
            out.append("nodes 0")
    out.append(f"interfaces {len(mesh.interfaces)}")
    for itf in mesh.interfaces:
        out.append(
            f"interface {itf.lower} {itf.higher} {itf.side} {itf.side_sign} "
            f"{itf.fault_id} {itf.kind}"
        )
        out.append(f"pairs {itf.n_mortar}")
        for m in range(itf.n_mortar):
            out.append(
                f"{itf.higher_faces[m]} {itf.lower_cells[m]} {itf.measures[m]:.17g}"
            )
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")


def import_mesh(path: str) -> MixedDimMesh:
    """Read a mesh written by :func:`export_mesh`."""
    with open(path) as fh:
        tokens = fh.read().split("\n")
    it = iter([ln for ln in tokens if ln.strip()])

    def take():
        return next(it).split()

    head = take()
    if head[0] != "mdmesh" or head[1] != "1":
        raise MeshError(f"{path}: not a mdmesh version-1 file")
    dim = int(head[2])
    dom = take()
    assert dom[0] == "domain"
    vals = [float(v) for v in dom[1:]]
    domain_lo = np.array(vals[:dim])
    domain_hi = np.array(vals[dim:])
    nsub = int(take()[1])
    subdomains = []
    info = []
    for _ in range(nsub):
        hdr = take()
        d = int(hdr[3])
        kind = hdr[5]
        fids = () if hdr[7] == "-" else tuple(int(x) for x in hdr[7].split(","))
        fr = [float(v) for v in take()[1:]]
        origin = np.array(fr[:dim])
        axes = np.array(fr[dim:]).reshape(d, dim) if d > 0 else np.zeros((0, dim))
        nc = int(take()[1])
        vols, centers, widths = [], [], []
        for _ in range(nc):
            row = [float(v) for v in take()]
            vols.append(row[0])
            centers.append(row[1 : 1 + d])
            widths.append(row[1 + d : 1 + 2 * d])
        nf = int(take()[1])
        fa, fcn, fn, fcl, fb, fcut, fside = [], [], [], [], [], [], []
        for _ in range(nf):
            row = take()
            fa.append(float(row[0]))
            fcn.append([float(v) for v in row[1 : 1 + d]])
            fn.append([float(v) for v in row[1 + d : 1 + 2 * d]])
            rest = row[1 + 2 * d :]
            fcl.append((int(rest[0]), int(rest[1])))
            fb.append(int(rest[2]))
            fcut.append(int(rest[3]))
            fside.append(int(rest[4]))
        nn = int(take()[1])
        node_coords = None
        face_nodes = None
        if nn:
            node_coords = np.array([[float(v) for v in take()] for _ in range(nn)])
            marker = take()
            assert marker[0] == "face_nodes"
            first = [int(v) for v in marker[1:]] if len(marker) > 1 else None
            pairs = []
            if first:
                pairs.append(first)
            while len(pairs) < nf:
                pairs.append([int(v) for v in take()])
            face_nodes = np.array(pairs, dtype=int)
        grid = CellGrid(
            dim=d,
            cell_volumes=np.array(vols),
            cell_centers=np.array(centers).reshape(nc, d),
            cell_widths=np.array(widths).reshape(nc, d),
            face_areas=np.array(fa),
            face_centers=np.array(fcn).reshape(nf, d),
            face_normals=np.array(fn).reshape(nf, d),
            face_cells=np.array(fcl, dtype=int).reshape(nf, 2),
            face_bnd=np.array(fb, dtype=int),
            face_cut=np.array(fcut, dtype=int),
            face_side=np.array(fside, dtype=int),
            frame_origin=origin,
            frame_axes=axes,
            node_coords=node_coords,
            face_nodes=face_nodes,
        )
        subdomains.append(grid)
        info.append(SubdomainInfo(kind=kind, fault_ids=fids))
    nitf = int(take()[1])
    interfaces = []
    for _ in range(nitf):
        hdr = take()
        lower, higher, side, sign, fault_id = (int(v) for v in hdr[1:6])
        kind = hdr[6]
        nm = int(take()[1])
        hf, lc, ms = [], [], []
        for _ in range(nm):
            row = take()
            hf.append(int(row[0]))
            lc.append(int(row[1]))
            ms.append(float(row[2]))
        interfaces.append(
            MortarInterface(
                lower=lower,
                higher=higher,
                side=side,
                side_sign=sign,
                higher_faces=np.array(hf, dtype=int),
                lower_cells=np.array(lc, dtype=int),
                measures=np.array(ms),
                fault_id=fault_id,
                kind=kind,
            )
        )
    mesh = MixedDimMesh(
        dim=dim,
        subdomains=subdomains,
        info=info,
        interfaces=interfaces,
        domain_lo=domain_lo,
        domain_hi=domain_hi,
    )
    mesh.validate()
    return mesh
