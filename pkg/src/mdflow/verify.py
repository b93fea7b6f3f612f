"""Convergence verification: error norms, orders, and the built-in studies.

Two kinds of reference are used. The thin-strip cases (case1, case2)
compare the reduced fault pressure against a fully resolved solve on a
fine grid. The network cases (network2d, cube3d) have no affordable
resolved reference, so they self-converge against a reference run at
twice the finest studied resolution, which is excluded from the order
computation.
"""

from __future__ import annotations

import dataclasses
import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .config import CaseConfig, ConfigError, builtin_case
from .equidim import EquiDimCase, average_fault_pressure, solve_equidim
from .mdassembly import assemble_global, solve
from .mdmesh import build_cartesian_md_mesh

logger = logging.getLogger(__name__)

#: cells per axis at each study level. The 3D entries are multiples of 8 so
#: the boundary patches (quarter and seven-eighths marks) and the mid-plane
#: faults stay on grid lines at every level.
CASE_LADDERS = {
    "case1": [4, 8, 16, 32, 64],
    "case2": [4, 8, 16, 32, 64],
    "network2d": [8, 16, 32, 64],
    "cube3d": [8, 16, 24],
}

#: self-reference resolution overrides for the default ladders. The usual
#: reference is twice the finest level; the 3D study caps it at 40 cells per
#: axis, the largest aligned grid a small machine factors comfortably.
CASE_REFS = {"cube3d": 40}


class VerifyError(Exception):
    """Ill-posed error or order computation."""


def l2_fault_error(p, p_ref, sizes) -> float:
    """Relative size-weighted l2 distance between fault pressure fields.

    Both fields live on the cells of the coarse model; the reference must
    already be sampled there. The weights are the fault cell sizes, so the
    value approximates the relative L2 norm over the fault.
    """
    p = np.asarray(p, dtype=float)
    p_ref = np.asarray(p_ref, dtype=float)
    sizes = np.asarray(sizes, dtype=float)
    if p.shape != p_ref.shape or p.shape != sizes.shape:
        raise VerifyError("pressure, reference, and size arrays must match")
    denom = np.sqrt(np.sum(sizes * p_ref**2))
    if denom == 0.0:
        raise VerifyError("reference field has zero norm")
    return float(np.sqrt(np.sum(sizes * (p - p_ref) ** 2)) / denom)


def eoc(errors, h) -> list:
    """Order of convergence for each consecutive level pair.

    order_k = log(e_k / e_{k+1}) / log(h_k / h_{k+1}).
    """
    errors = np.asarray(errors, dtype=float)
    h = np.asarray(h, dtype=float)
    if errors.shape != h.shape or errors.size < 2:
        raise VerifyError("need matching error and size lists of length >= 2")
    if np.any(errors <= 0):
        raise VerifyError("orders are undefined for zero or negative errors")
    return [
        float(np.log(errors[k] / errors[k + 1]) / np.log(h[k] / h[k + 1]))
        for k in range(errors.size - 1)
    ]


def eoc_fit(errors, h) -> float:
    """Least-squares slope of log(error) against log(h)."""
    errors = np.asarray(errors, dtype=float)
    h = np.asarray(h, dtype=float)
    if errors.size < 2:
        raise VerifyError("need at least two levels to fit an order")
    if np.any(errors <= 0):
        raise VerifyError("orders are undefined for zero or negative errors")
    return float(np.polyfit(np.log(h), np.log(errors), 1)[0])


def sample_nearest(ref_points, ref_values, points) -> np.ndarray:
    """Nearest-point sampling with averaging over exact distance ties.

    On nested Cartesian grids a coarse center either coincides with a fine
    center or sits symmetrically between 2 (1D) or 4 (2D) of them; the tie
    average then equals the symmetric local mean of the fine field.
    """
    ref_points = np.atleast_2d(np.asarray(ref_points, dtype=float))
    points = np.atleast_2d(np.asarray(points, dtype=float))
    ref_values = np.asarray(ref_values, dtype=float)
    k = min(4, ref_points.shape[0])
    dist, idx = cKDTree(ref_points).query(points, k=k)
    if k == 1:
        return ref_values[idx]
    near = dist <= dist[:, :1] * (1.0 + 1e-9) + 1e-13
    num = np.where(near, ref_values[idx], 0.0).sum(axis=1)
    return num / near.sum(axis=1)


@dataclass
class LevelRecord:
    level: int
    h: float
    n_cells: int
    n_fault_cells: int
    error: float
    order: float = np.nan  # vs the previous level; nan on the first row


@dataclass
class StudyResult:
    """Per-level errors and orders of one convergence study."""

    case: str
    formulation: str
    records: list = field(default_factory=list)
    reference: str = ""

    @property
    def errors(self) -> np.ndarray:
        return np.array([r.error for r in self.records])

    @property
    def h(self) -> np.ndarray:
        return np.array([r.h for r in self.records])

    @property
    def orders(self) -> list:
        return [r.order for r in self.records[1:]]

    def mean_order(self) -> float:
        if len(self.records) < 2:
            raise VerifyError("need at least two levels for a mean order")
        return float(np.mean(self.orders))

    def to_csv(self) -> str:
        lines = ["level,h,N,N_f,error,eoc,formulation,case"]
        for r in self.records:
            order = "" if np.isnan(r.order) else f"{r.order:.6g}"
            lines.append(
                f"{r.level},{r.h:.10g},{r.n_cells},{r.n_fault_cells},"
                f"{r.error:.10g},{order},{self.formulation},{self.case}"
            )
        return "\n".join(lines) + "\n"


def fault_field(mesh, pressures):
    """Global centers, pressures, and sizes of all codimension-1 fault cells.

    Returns one (centers, values, sizes) triple per fault subdomain, in
    subdomain order. Intersection subdomains are excluded: their pressure
    is an auxiliary coupling quantity, and their measure is of lower order.
    """
    out = []
    for i, info in enumerate(mesh.info):
        if info.kind != "fault":
            continue
        g = mesh.subdomains[i]
        out.append((g.cell_centers_global(), pressures[i], g.cell_volumes))
    return out


def _ladder(cfg: CaseConfig, levels: int) -> list:
    """Per-axis cell counts of each study level.

    Built-in cases use their tuned ladders; anything else refines the
    config's own resolution dyadically. Requesting more levels than a
    ladder holds extends it by doubling the last entry.
    """
    base = CASE_LADDERS.get(cfg.name)
    if base is None:
        base = [int(max(cfg.resolution)) * 2**k for k in range(levels)]
    steps = list(base[:levels])
    while len(steps) < levels:
        steps.append(steps[-1] * 2)
    return steps


def _solve_resolution(cfg: CaseConfig, formulation: str, n: int):
    scfg = dataclasses.replace(cfg, resolution=(n,) * len(cfg.resolution))
    mesh = build_cartesian_md_mesh(
        scfg.domain_lo, scfg.domain_hi, scfg.resolution, scfg.fault_specs()
    )
    system = assemble_global(
        mesh, scfg.material_set(formulation), scfg.bcs, method=scfg.method
    )
    sol = solve(system, method=scfg.solver)
    return mesh, sol


def _study_h(cfg: CaseConfig, n: int) -> float:
    lo = np.asarray(cfg.domain_lo, dtype=float)
    hi = np.asarray(cfg.domain_hi, dtype=float)
    return float(np.max((hi - lo) / float(n)))


def equidim_oracle(cfg: CaseConfig, resolution: int = 200):
    """Resolved-strip reference profile for a single full-width fault.

    Builds the equi-dimensional configuration matching ``cfg`` (one strip
    when both fault sides share a tensor, two half-strips otherwise),
    solves it, and returns the across-fault averaged pressure profile
    (coordinates, values) taken over the two cell rows straddling the
    fault plane.
    """
    if len(cfg.faults) != 1:
        raise ConfigError("the resolved reference supports exactly one fault")
    f = cfg.faults[0]
    s = f.spec()
    ax = s.axis
    ip = s.inplane_axes[0]
    lo = np.asarray(cfg.domain_lo, dtype=float)
    hi = np.asarray(cfg.domain_hi, dtype=float)
    dim = lo.shape[0]
    if dim != 2:
        raise ConfigError("the resolved reference is two-dimensional only")
    h = (hi[ax] - lo[ax]) / resolution
    y = s.plane
    a = f.aperture

    def tensor(kt, kperp):
        t = np.zeros((dim, dim))
        t[ip, ip] = f.k_parallel
        t[ax, ax] = kperp
        t[ip, ax] = t[ax, ip] = kt
        return t

    def strip(n_lo, n_hi, kt, kperp):
        s_lo = lo.copy()
        s_hi = hi.copy()
        s_lo[ax] = n_lo
        s_hi[ax] = n_hi
        return (tuple(s_lo), tuple(s_hi), tensor(kt, kperp))

    if f.k_t[0] == f.k_t[1] and f.k_perp[0] == f.k_perp[1]:
        strips = [strip(y - a / 2, y + a / 2, f.k_t[0], f.k_perp[0])]
    else:
        strips = [
            strip(y, y + a / 2, f.k_t[0], f.k_perp[0]),  # side 1: above
            strip(y - a / 2, y, f.k_t[1], f.k_perp[1]),  # side 2: below
        ]
    case = EquiDimCase(
        domain_lo=tuple(lo),
        domain_hi=tuple(hi),
        resolution=(resolution,) * dim,
        matrix_k=cfg.matrix_k * np.eye(dim),
        strips=strips,
        bcs=cfg.bcs,
    )
    sol = solve_equidim(case)
    band_lo = lo.copy()
    band_hi = hi.copy()
    band_lo[ax] = y - h
    band_hi[ax] = y + h
    return average_fault_pressure(sol, band_lo, band_hi, axis=ip)


def _equidim_errors(cfg, formulation, steps, resolution=200):
    xs, peq = equidim_oracle(cfg, resolution)
    ref_pts = xs[:, None]
    ip = cfg.faults[0].spec().inplane_axes[0]
    records = []
    for lv, n in enumerate(steps):
        mesh, sol = _solve_resolution(cfg, formulation, n)
        parts = fault_field(mesh, sol.pressures)
        centers, values, sizes = parts[0]
        ref_vals = sample_nearest(ref_pts, peq, centers[:, ip][:, None])
        err = l2_fault_error(values, ref_vals, sizes)
        records.append(
            LevelRecord(
                level=lv,
                h=_study_h(cfg, n),
                n_cells=sum(g.n_cells for g in mesh.subdomains),
                n_fault_cells=values.shape[0],
                error=err,
            )
        )
        logger.info("%s at %d cells/axis: error %.6g", cfg.name, n, err)
    return records, f"equidim:{resolution}"


def _self_errors(cfg, formulation, steps):
    ref_n = 2 * steps[-1]
    if cfg.name in CASE_REFS and steps == CASE_LADDERS.get(cfg.name):
        ref_n = CASE_REFS[cfg.name]
    logger.info("%s: solving self-reference at %d cells/axis", cfg.name, ref_n)
    ref_mesh, ref_sol = _solve_resolution(cfg, formulation, ref_n)
    ref_parts = fault_field(ref_mesh, ref_sol.pressures)
    records = []
    for lv, n in enumerate(steps):
        mesh, sol = _solve_resolution(cfg, formulation, n)
        parts = fault_field(mesh, sol.pressures)
        if len(parts) != len(ref_parts):
            raise VerifyError("fault subdomain count changed across levels")
        diff2 = 0.0
        norm2 = 0.0
        for (c, v, w), (rc, rv, _) in zip(parts, ref_parts):
            rvals = sample_nearest(rc, rv, c)
            diff2 += np.sum(w * (v - rvals) ** 2)
            norm2 += np.sum(w * rvals**2)
        if norm2 == 0.0:
            raise VerifyError("reference field has zero norm")
        err = float(np.sqrt(diff2 / norm2))
        records.append(
            LevelRecord(
                level=lv,
                h=_study_h(cfg, n),
                n_cells=sum(g.n_cells for g in mesh.subdomains),
                n_fault_cells=sum(p[1].shape[0] for p in parts),
                error=err,
            )
        )
        logger.info("%s at %d cells/axis: error %.6g", cfg.name, n, err)
    dim = len(cfg.resolution)
    return records, "self:" + "x".join([str(ref_n)] * dim)


def run_case(case: str, formulation: str = "semilocal", levels: int = None) -> StudyResult:
    """Run one built-in convergence study and return its per-level table."""
    if formulation not in ("local", "semilocal"):
        raise ConfigError(f"unknown formulation {formulation!r}")
    cfg = builtin_case(case)
    if levels is None:
        levels = len(CASE_LADDERS[case])
    if levels < 1:
        raise ConfigError("need at least one level")
    steps = _ladder(cfg, levels)
    t0 = time.time()
    if case in ("case1", "case2"):
        records, ref = _equidim_errors(cfg, formulation, steps)
    else:
        records, ref = _self_errors(cfg, formulation, steps)
    for prev, cur in zip(records, records[1:]):
        if prev.error > 0 and cur.error > 0:
            cur.order = float(
                np.log(prev.error / cur.error) / np.log(prev.h / cur.h)
            )
    logger.info("%s (%s): %d levels in %.1fs", case, formulation, levels, time.time() - t0)
    return StudyResult(
        case=case, formulation=formulation, records=records, reference=ref
    )
