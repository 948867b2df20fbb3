"""Residual reports shared by the command line and the acceptance checks."""
from __future__ import annotations

import csv

import numpy as np

from . import loops as L
from .errors import GridTooSmall, NilSymError
from .frames import FrameField, build_alpha, flatness_residual, gauss_residual
from .grid import Grid, d_z, interior_max
from .spinors import (SpinorField, align_signs, dirac_residual, first_order_data, frame_derivatives,
                      hopf_and_ar, mean_curvature_from_mesh, phi_to_spinors)
from .sym import SurfaceMesh, frame_gauss_map, mesh_report

DEFAULT_THRESHOLDS = {
    "dirac_residual": 1e-2,
    "flatness_residual": 1e-2,
    "gauss_residual": 1e-2,
    "ar_holomorphy_residual": 1e-2,
    "mean_H_max": 1e-3,
    "dirac_real_part": 1e-8,
}


def w_from_dirac(dirac):
    """w with e^{w/2} = dirac (principal logarithm); NaN where dirac vanishes."""
    dirac = np.asarray(dirac, dtype=complex)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(dirac == 0, np.nan, 2 * np.log(dirac))


def dirac_mean_curvature(field: SpinorField):
    """H read off the Dirac equation: U = -d_z psi2 / psi1 and H = -2 Re U / e^{u/2}."""
    with np.errstate(divide="ignore", invalid="ignore"):
        U = -d_z(field.psi2, field.steps) / field.psi1
        eu2 = 2 * (np.abs(field.psi1) ** 2 + np.abs(field.psi2) ** 2)
        return -2 * U.real / eu2


def _verdict(rep, thresholds):
    bad = [k for k, t in thresholds.items() if k in rep and rep[k] is not None and not rep[k] <= t]
    return (1 if bad else 0), bad


def _edge_mask(shape, rings):
    m = np.zeros(shape, dtype=bool)
    m[rings:shape[0] - rings, rings:shape[1] - rings] = True
    return m


def spinor_report(field: SpinorField, H: float = 0.0, B=None, lambdas=(1.0,), thresholds=None,
                  mean_H=None, skip_rings: int = 0) -> dict:
    """Residuals of spinor data; B defaults to the value fitted from the spinors.

    ``skip_rings`` drops extra boundary rings, for spinors that were themselves
    obtained by one-sided differences at the edge.
    """
    thresholds = dict(DEFAULT_THRESHOLDS, **(thresholds or {}))
    d = first_order_data(field.psi1, field.psi2, H)
    ok = ~(d.vertical | d.branch)
    if skip_rings:
        ok = ok & _edge_mask(ok.shape, skip_rings)
    hop = hopf_and_ar(field, H, ok)
    Bf = hop.B if B is None else np.broadcast_to(np.asarray(B, dtype=complex), field.z.shape)
    # w is kept on skipped rings so stencils next to them see real data
    w = np.nan_to_num(np.where(d.vertical | d.branch, np.nan, w_from_dirac(d.diracPot)))
    UV = build_alpha(w, Bf, field.steps)
    if mean_H is None:
        mean_H = dirac_mean_curvature(field)
    real_part = np.abs(d.diracPot.real) / np.maximum(np.abs(d.diracPot), 1e-300)
    sup = d.support[ok]
    rep = {
        "dirac_residual": dirac_residual(field, H, ok),
        "flatness_residual": flatness_residual(UV, field.steps, lambdas, ok),
        "gauss_residual": gauss_residual(w, Bf, field.steps, ok),
        "ar_holomorphy_residual": hop.holomorphy_residual,
        "mean_H_max": interior_max(mean_H, ok & np.isfinite(mean_H)),
        "dirac_real_part": interior_max(real_part, ok) if ok.any() else None,
        "support_range": [float(sup.min()), float(sup.max())] if sup.size else [None, None],
        "vertical_count": int(d.vertical.sum()),
        "branch_count": int(d.branch.sum()),
    }
    rep["verdict"], rep["failed"] = _verdict(rep, thresholds)
    return rep


def mesh_points_report(points, grid: Grid, H: float = 0.0, lambdas=(1.0,), thresholds=None) -> dict:
    """Residuals of a bare point mesh: spinors are recovered from finite differences of the points."""
    pts = np.asarray(points, dtype=float)
    if not np.all(np.isfinite(pts)):
        raise GridTooSmall("mesh contains undefined points; verify needs a complete rectangular mesh")
    Px, Py = frame_derivatives(pts, grid.steps)
    phi = 0.5 * (Px - 1j * Py)
    scale = np.sum(np.abs(phi) ** 2, axis=-1)
    conf_defect = interior_max(np.abs(np.sum(phi ** 2, axis=-1)) / scale)
    p1, p2 = phi_to_spinors(phi, tol=np.inf)
    p1, p2 = align_signs(p1, p2)
    field = SpinorField(grid.z, p1, p2, grid.steps)
    Hm, _ = mean_curvature_from_mesh(pts, grid.steps)
    # spinors at the edge come from one-sided differences; nested stencils reach three rings in
    rep = spinor_report(field, H, None, lambdas, thresholds, mean_H=Hm, skip_rings=3)
    rep["conformality_defect"] = conf_defect
    return rep


def pipeline_report(mesh: SurfaceMesh, ff: FrameField, lambdas=(1.0,), thresholds=None, seed: int = 0) -> dict:
    """Report for one pipeline mesh f^lam, using the exact B of the potential scaled by lam^{-2}."""
    thresholds = dict(DEFAULT_THRESHOLDS, **(thresholds or {}))
    ok = mesh.defined
    field = mesh.spinor_field()
    lam = mesh.lam
    Bl = np.where(ok, ff.B * lam ** -2, 0)
    rep = spinor_report(SpinorField(field.z, np.where(ok, field.psi1, 0), np.where(ok, field.psi2, 0),
                                    field.steps),
                        0.0, Bl, lambdas, thresholds, mean_H=mesh.H)
    rep.update(mesh_report(mesh))
    rep["mean_H_max"] = interior_max(mesh.H, ok & np.isfinite(mesh.H))
    slot = ff.dirac_slot[ok]
    rep["frame_dirac_real_part"] = float(np.max(np.abs(slot.real) / np.abs(slot))) if slot.size else None
    # reality and determinant of frames at seeded sample points and lambdas
    rng = np.random.default_rng(seed)
    idx = np.argwhere(ff.ok)
    picks = idx[rng.choice(len(idx), size=min(8, len(idx)), replace=False)] if len(idx) else []
    lams = np.exp(1j * rng.uniform(-np.pi, np.pi, size=8))
    defect = det_defect = 0.0
    for j, i in picks:
        loop = ff.loop((j, i))
        defect = max(defect, L.su11_reality_defect(loop, lams))
        det_defect = max(det_defect, max(abs(np.linalg.det(loop(l)) - 1) for l in lams))
    rep["su11_reality_defect"] = defect
    rep["det_defect"] = det_defect
    _, disk, vert = frame_gauss_map(ff.frames[ff.ok], 1.0)
    rep["gauss_map_max_modulus"] = float(np.max(np.abs(disk))) if disk.size else None
    rep["verdict"], rep["failed"] = _verdict(rep, thresholds)
    return rep


def read_mesh_csv(path):
    """Read the mesh CSV format back into (grid, points); null rows become NaN."""
    rows = []
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        need = {"z_re", "z_im", "x1", "x2", "x3"}
        if rd.fieldnames is None or not need <= set(rd.fieldnames):
            raise GridTooSmall("mesh CSV needs columns z_re, z_im, x1, x2, x3")
        for r in rd:
            vals = [float("nan") if r[k] in ("null", "") else float(r[k]) for k in ("z_re", "z_im", "x1", "x2", "x3")]
            rows.append(vals)
    if not rows:
        raise GridTooSmall("empty mesh")
    arr = np.array(rows)
    xs = np.unique(np.round(arr[:, 0], 12))
    ys = np.unique(np.round(arr[:, 1], 12))
    if len(xs) * len(ys) != len(arr):
        raise GridTooSmall("mesh samples do not form a rectangular grid")
    if len(xs) < 3 or len(ys) < 3:
        raise GridTooSmall(f"grid of {len(xs)}x{len(ys)} is below 3x3")
    order = np.lexsort((arr[:, 0], arr[:, 1]))
    arr = arr[order].reshape(len(ys), len(xs), 5)
    center = complex((xs[0] + xs[-1]) / 2, (ys[0] + ys[-1]) / 2)
    grid = Grid(center, ((xs[-1] - xs[0]) / 2, (ys[-1] - ys[0]) / 2), (len(xs), len(ys)))
    return grid, arr[..., 2:]
