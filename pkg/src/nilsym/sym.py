"""Frames to surfaces: the Sym formula, spinor read-out, Gauss map and direct integration."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.interpolate import CubicSpline

from . import loops as L
from . import nil3
from .errors import IntegrabilityError, NonConformal, SingularMatrix
from .frames import FrameField, PotentialSpec, build_frames
from .grid import Grid, d_x, d_y, interior_max
from .loops import SIGMA3, TwistedLoop
from .spinors import (SpinorField, branch_mask, first_order_data, hopf_and_ar,
                      mean_curvature_from_mesh, phi_to_spinors, spinors_to_phi,
                      vertical_mask)

TAU = 0.5

# su(1,1) basis used to read off coordinates
CAL_E1 = 0.5 * np.array([[0, 1j], [-1j, 0]])
CAL_E2 = 0.5 * np.array([[0, -1], [-1, 0]], dtype=complex)
CAL_E3 = 0.5 * np.array([[-1j, 0], [0, 1j]])
SU11_BASIS = (CAL_E1, CAL_E2, CAL_E3)


def minkowski_inner(X, Y):
    """<X, Y>_m = 2 tr(XY)."""
    return 2 * np.trace(np.asarray(X) @ np.asarray(Y), axis1=-2, axis2=-1)


def su11_coordinates(X) -> np.ndarray:
    """Coefficients (x1, x2, x3) of X = x1 E1 + x2 E2 + x3 E3 (real parts returned)."""
    X = np.asarray(X)
    x1 = -1j * (X[..., 0, 1] - X[..., 1, 0])
    x2 = -(X[..., 0, 1] + X[..., 1, 0])
    x3 = 2j * X[..., 0, 0]
    return np.real(np.stack([x1, x2, x3], axis=-1))


def su11_matrix(x) -> np.ndarray:
    x = np.asarray(x)
    return (x[..., 0, None, None] * CAL_E1 + x[..., 1, None, None] * CAL_E2
            + x[..., 2, None, None] * CAL_E3)


def _inv2(M):
    return L.adjugate(M) / (M[..., 0, 0] * M[..., 1, 1] - M[..., 0, 1] * M[..., 1, 0])[..., None, None]


def sym_arrays(frames, lam):
    """Sym formula at lam for a stack of frame coefficient tables; returns (..., 3).

    Uses exact lambda-derivatives of the Laurent coefficients.
    """
    frames = np.asarray(frames, dtype=complex)
    lam = complex(lam)
    F = L.evaluate(frames, lam)
    d1 = L.dlambda(frames)
    F1 = L.evaluate(d1, lam)
    F2 = L.evaluate(L.dlambda(d1), lam)
    Fi = _inv2(F)
    A = F1 @ Fi                      # F' F^{-1}
    S = F @ SIGMA3 @ Fi              # Ad(F) sigma3
    m = -1j * lam * A - 0.5j * S
    # derivative of A: F'' F^{-1} - F' F^{-1} F' F^{-1}
    dA = F2 @ Fi - A @ A
    dS = A @ S - S @ A
    dm = -1j * A - 1j * lam * dA - 0.5j * dS
    mo = m.copy()
    mo[..., 0, 0] = 0
    mo[..., 1, 1] = 0
    dd = np.zeros_like(dm)
    dd[..., 0, 0] = dm[..., 0, 0]
    dd[..., 1, 1] = dm[..., 1, 1]
    fhat = mo - 0.5j * lam * dd
    return su11_coordinates(fhat)


def sym_matrix_arrays(frames, lam):
    return su11_matrix(sym_arrays(frames, lam))


def sym_point(F: TwistedLoop, lam) -> nil3.Nil3Point:
    lam = complex(lam)
    Fl = F(lam)
    if abs(np.linalg.det(Fl)) < 1e-300:
        raise SingularMatrix(f"frame not invertible at lambda={lam}")
    x = sym_arrays(F.coeffs, lam)
    return nil3.Nil3Point(*map(float, x))


def _half_power(lam, sign):
    """lam^{sign/2} on the unit circle with the branch of angle in (-pi, pi]."""
    return np.exp(0.5j * sign * np.angle(lam))


def frame_spinors(frames, dirac_slot, lam):
    """Generating spinors of f^lam read off the frame entries.

    With r = sqrt(2c) for the e^{w/2} slot c of the Maurer-Cartan form:
    psi1 = lam^{-1/2} r F11(lam), psi2 = i lam^{1/2} conj(r) F12(lam).
    """
    F = L.evaluate(np.asarray(frames, dtype=complex), complex(lam))
    r = np.sqrt(2 * np.asarray(dirac_slot, dtype=complex))
    psi1 = _half_power(lam, -1) * r * F[..., 0, 0]
    psi2 = 1j * _half_power(lam, 1) * np.conj(r) * F[..., 0, 1]
    return psi1, psi2


def frame_gauss_map(F, lam=1.0, vertical_tol: float = 1e-10):
    """N_m = (i/2) Ad(F) sigma3 at lam and its disk model value.

    ``F`` is a TwistedLoop or a coefficient stack.  The hyperboloid point is
    read as p + qi = -2 N12, r = -2i N11 (so the identity frame sits at r = 1)
    and projected to the disk by (p + qi)/(1 + r).  Returns (N_m, disk, vertical).
    """
    coeffs = F.coeffs if isinstance(F, TwistedLoop) else np.asarray(F, dtype=complex)
    Fl = L.evaluate(coeffs, complex(lam))
    N = 0.5j * Fl @ SIGMA3 @ _inv2(Fl)
    r = np.real(-2j * N[..., 0, 0])
    disk = -2 * N[..., 0, 1] / (1 + r)
    vertical = np.abs(1 - np.abs(disk)) <= vertical_tol
    return N, disk, vertical


# --- meshes -----------------------------------------------------------------

@dataclass
class SurfaceMesh:
    """One member f^lam of the family sampled on a grid; NaN rows at flagged nodes."""

    grid: Grid
    lam: complex
    points: np.ndarray
    psi1: np.ndarray
    psi2: np.ndarray
    bigcell_failure: np.ndarray
    H: np.ndarray = None
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.H is None:
            self.H = np.full(self.points.shape[:2], np.nan)

    @property
    def vertical(self):
        return vertical_mask(self.psi1, self.psi2) & ~self.bigcell_failure

    @property
    def branch(self):
        return branch_mask(self.psi1, self.psi2) & ~self.bigcell_failure

    @property
    def defined(self):
        return ~(self.bigcell_failure | self.vertical | self.branch) & np.all(np.isfinite(self.points), axis=-1)

    @property
    def conf(self):
        return 4 * (np.abs(self.psi1) ** 2 + np.abs(self.psi2) ** 2) ** 2

    @property
    def support(self):
        return 2 * (np.abs(self.psi1) ** 2 - np.abs(self.psi2) ** 2)

    def spinor_field(self) -> SpinorField:
        return SpinorField(self.grid.z, self.psi1, self.psi2, self.grid.steps)

    def flags(self):
        """Per-node flag string: V vertical, B branch, X big-cell failure."""
        out = np.full(self.points.shape[:2], "", dtype=object)
        for m, ch in ((self.vertical, "V"), (self.branch, "B"), (self.bigcell_failure, "X")):
            out[m] = out[m] + ch
        return out

    def to_obj(self, path):
        ok = self.defined
        index = -np.ones(ok.shape, dtype=int)
        lines = []
        k = 0
        for j, i in zip(*np.nonzero(ok)):
            k += 1
            index[j, i] = k
            x = self.points[j, i]
            lines.append(f"v {x[0]:.12g} {x[1]:.12g} {x[2]:.12g}")
        ny, nx = ok.shape
        for j in range(ny - 1):
            for i in range(nx - 1):
                q = (index[j, i], index[j, i + 1], index[j + 1, i + 1], index[j + 1, i])
                if min(q) > 0:
                    lines.append("f %d %d %d %d" % q)
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")

    def to_csv(self, path):
        z = self.grid.z
        ok = self.defined
        flags = self.flags()
        supp, conf = self.support, self.conf
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["z_re", "z_im", "x1", "x2", "x3", "support", "conf", "flags"])
            for j, i in np.ndindex(ok.shape):
                if ok[j, i]:
                    xs = [repr(float(v)) for v in self.points[j, i]]
                    row = xs + [repr(float(supp[j, i])), repr(float(conf[j, i]))]
                else:
                    row = ["null"] * 5
                wr.writerow([repr(float(z[j, i].real)), repr(float(z[j, i].imag))] + row[:3] + row[3:] + [flags[j, i]])


def mesh_from_frames(ff: FrameField, grid: Grid, lam, compute_H: bool = True) -> SurfaceMesh:
    lam = complex(lam)
    bad = ~ff.ok
    frames = np.where(bad[..., None, None, None], 0.0, np.nan_to_num(ff.frames))
    frames[bad, L._n_of(frames)] = np.eye(2)
    pts = sym_arrays(frames, lam)
    psi1, psi2 = frame_spinors(frames, np.where(bad, 1j, ff.dirac_slot), lam)
    pts[bad] = np.nan
    psi1 = np.where(bad, np.nan, psi1)
    psi2 = np.where(bad, np.nan, psi2)
    mesh = SurfaceMesh(grid, lam, pts, psi1, psi2, bad.copy())
    if compute_H:
        H, _ = mean_curvature_from_mesh(np.where(bad[..., None], 0.0, pts), grid.steps, TAU)
        mesh.H = np.where(bad, np.nan, H)
    mesh.extras["dirac_slot"] = ff.dirac_slot
    return mesh


def sample_surface(spec: PotentialSpec, grid: Grid, lambdas: Sequence = (1.0,), n: int = L.DEFAULT_N,
                   ode_tol: float = 1e-10, cond_max: float = L.BIG_CELL_COND,
                   tail_tol: float = L.DEFAULT_TAIL_TOL, compute_H: bool = True):
    """Full pipeline on a grid; returns (list of SurfaceMesh, FrameField)."""
    ff = build_frames(spec, grid.z, n, ode_tol, cond_max, tail_tol)
    return [mesh_from_frames(ff, grid, lam, compute_H) for lam in lambdas], ff


def fit_quadric(points, mask=None):
    """Least-squares c in x3 = c x1 x2 over defined points; returns (c, max residual)."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    sel = np.all(np.isfinite(pts), axis=1)
    if mask is not None:
        sel &= np.asarray(mask).reshape(-1)
    a = pts[sel, 0] * pts[sel, 1]
    b = pts[sel, 2]
    c = float(a @ b / (a @ a)) if a @ a > 0 else 0.0
    return c, float(np.max(np.abs(b - c * a))) if b.size else 0.0


def fitted_B(mesh: SurfaceMesh, H=0.0):
    """B of f^lam from finite differences of its spinors: mean and spread over interior defined points."""
    res = hopf_and_ar(mesh.spinor_field(), H, mesh.defined)
    sel = np.zeros(mesh.defined.shape, dtype=bool)
    sel[1:-1, 1:-1] = True
    sel &= mesh.defined
    vals = res.B[sel]
    return complex(np.mean(vals)), float(np.max(np.abs(vals - np.mean(vals)))), res.holomorphy_residual


def associated_family_report(meshes: Sequence[SurfaceMesh], reference: int = 0) -> dict:
    """Support and B^lam behaviour across the family; metric deviation is reported, not expected to vanish."""
    if len(meshes) < 2:
        raise ValueError("associated family report needs at least two lambda values")
    ref = meshes[reference]
    ok = np.logical_and.reduce([m.defined for m in meshes])
    sup = [m.support for m in meshes]
    dev = 0.0
    for a in range(len(meshes)):
        for b in range(a + 1, len(meshes)):
            dev = max(dev, float(np.max(np.abs(sup[a] - sup[b])[ok], initial=0.0)))
    Bs = [fitted_B(m) for m in meshes]
    B1 = Bs[reference][0]
    per = []
    ratio_err = 0.0
    metric_dev = 0.0
    for m, (B, spread, hol) in zip(meshes, Bs):
        entry = {"theta": float(np.angle(m.lam)), "B": [B.real, B.imag], "B_spread": spread,
                 "ar_holomorphy_residual": hol,
                 "support_range": [float(np.min(sup[0][ok], initial=np.nan)), float(np.max(sup[0][ok], initial=np.nan))]}
        if abs(B1) > 1e-12:
            ratio = B / B1
            err = abs(ratio - (m.lam / ref.lam) ** -2)
            entry["B_ratio"] = [ratio.real, ratio.imag]
            entry["B_ratio_error"] = err
            ratio_err = max(ratio_err, err)
        md = float(np.max(np.abs(m.conf - ref.conf)[ok], initial=0.0))
        entry["metric_deviation"] = md
        metric_dev = max(metric_dev, md)
        per.append(entry)
    return {"schema": 1, "lambdas": per, "support_deviation": dev,
            "B_reference": [B1.real, B1.imag], "B_ratio_error": ratio_err,
            "metric_deviation": metric_dev, "metric_invariant_expected": False}


# --- direct integration of f_z = f Phi ---------------------------------------

def _generator(phi, direction):
    """Real algebra coefficients of f^{-1} df along d/dx (direction 0) or d/dy (1)."""
    phi = np.asarray(phi, dtype=complex)
    return 2 * phi.real if direction == 0 else -2 * phi.imag


def _rk4_line(M0, gen: Callable, t0, t1, steps):
    """Integrate M' = M algebra_matrix(gen(t)) with RK4, returning M at the node."""
    M = M0
    h = (t1 - t0) / steps
    for s in range(steps):
        t = t0 + s * h
        k1 = M @ nil3.algebra_matrix(gen(t), TAU)
        k2 = (M + 0.5 * h * k1) @ nil3.algebra_matrix(gen(t + 0.5 * h), TAU)
        k3 = (M + 0.5 * h * k2) @ nil3.algebra_matrix(gen(t + 0.5 * h), TAU)
        k4 = (M + h * k3) @ nil3.algebra_matrix(gen(t + h), TAU)
        M = M + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return M


def phi_integrability_residual(phi, steps, mask=None) -> float:
    """max |Phi_zbar - conj(Phi)_z + [conj(Phi), Phi]| in the algebra, by centered differences."""
    Pm = nil3.algebra_matrix(np.asarray(phi, dtype=complex), TAU)
    Pb = np.conj(Pm)
    hx, hy = steps
    dz_ = lambda f: 0.5 * (d_x(f, hx) - 1j * d_y(f, hy))
    dzb = lambda f: 0.5 * (d_x(f, hx) + 1j * d_y(f, hy))
    r = dzb(Pm) - dz_(Pb) + Pb @ Pm - Pm @ Pb
    return interior_max(np.linalg.norm(r, axis=(-2, -1)), mask)


def direct_immersion(phi: Union[Callable, np.ndarray], grid: Grid, f0=None, base_index=None,
                     substeps: int = 4, integrability_tol: Optional[float] = 0.05) -> SurfaceMesh:
    """Integrate f_z = f Phi, f_zbar = f conj(Phi) in the 4x4 embedding.

    ``phi`` is either a callable z -> (..., 3) complex array or samples on the
    grid (interpolated by cubic splines along grid lines).  Integration runs
    along the row through the base node, then along every column.
    """
    ny, nx = grid.shape
    xs, ys = grid.xs + grid.center.real, grid.ys + grid.center.imag
    if base_index is None:
        base_index = (ny // 2, nx // 2)
    jb, ib = base_index
    samples = phi(grid.z) if callable(phi) else np.asarray(phi, dtype=complex)
    if integrability_tol is not None:
        res = phi_integrability_residual(samples, grid.steps)
        scale = max(1.0, float(np.max(np.abs(samples)))) ** 2
        if res > integrability_tol * scale:
            raise IntegrabilityError(f"Phi integrability residual {res:.3e} exceeds tolerance")
    f0 = nil3.IDENTITY if f0 is None else f0
    x0 = f0.as_array() if isinstance(f0, nil3.Nil3Point) else np.asarray(f0, dtype=float)
    M0 = nil3.embed_arrays(x0, TAU)

    if callable(phi):
        row_fn = lambda t: _generator(phi(np.array([t + 1j * ys[jb]]))[0], 0)
        col_fn = lambda i: (lambda t: _generator(phi(np.array([xs[i] + 1j * t]))[0], 1))
    else:
        row_sp = CubicSpline(xs, samples[jb], axis=0)
        row_fn = lambda t: _generator(row_sp(t), 0)
        col_sp = [CubicSpline(ys, samples[:, i], axis=0) for i in range(nx)]
        col_fn = lambda i: (lambda t: _generator(col_sp[i](t), 1))

    out = np.empty((ny, nx, 4, 4))
    row = [None] * nx
    row[ib] = M0
    for i in range(ib + 1, nx):
        row[i] = _rk4_line(row[i - 1], row_fn, xs[i - 1], xs[i], substeps)
    for i in range(ib - 1, -1, -1):
        row[i] = _rk4_line(row[i + 1], row_fn, xs[i + 1], xs[i], substeps)
    for i in range(nx):
        g = col_fn(i)
        out[jb, i] = row[i]
        for j in range(jb + 1, ny):
            out[j, i] = _rk4_line(out[j - 1, i], g, ys[j - 1], ys[j], substeps)
        for j in range(jb - 1, -1, -1):
            out[j, i] = _rk4_line(out[j + 1, i], g, ys[j + 1], ys[j], substeps)
    pts = nil3.unembed_arrays(out, TAU)
    mesh = SurfaceMesh(grid, 1.0 + 0j, pts, np.full((ny, nx), np.nan + 0j), np.full((ny, nx), np.nan + 0j),
                       np.zeros((ny, nx), dtype=bool))
    try:
        mesh.psi1, mesh.psi2 = phi_to_spinors(samples)
    except NonConformal:
        pass
    return mesh


def _dx4(points, j, i, h):
    """d/dx at node (j, i): fourth-order stencil when room allows."""
    nx = points.shape[1]
    if 2 <= i <= nx - 3:
        return (-points[j, i + 2] + 8 * points[j, i + 1] - 8 * points[j, i - 1] + points[j, i - 2]) / (12 * h)
    return (points[j, i + 1] - points[j, i - 1]) / (2 * h)


def align_to_base(points, grid: Grid, base_index=None):
    """Translate so the base node is the identity, then rotate about the x3-axis so f_x points along e1."""
    pts = np.asarray(points, dtype=float)
    ny, nx = pts.shape[:2]
    if base_index is None:
        base_index = (ny // 2, nx // 2)
    jb, ib = base_index
    inv = nil3.nil3_inv(nil3.Nil3Point(*pts[jb, ib])).as_array()
    moved = nil3.mul_arrays(np.broadcast_to(inv, pts.shape), pts, TAU)
    fx = _dx4(moved, jb, ib, grid.steps[0])
    theta = -np.arctan2(fx[1], fx[0])
    rot = nil3.rotation(theta)
    return rot.apply(moved)


def alignment_residual(mesh_a: SurfaceMesh, mesh_b: SurfaceMesh, base_index=None) -> float:
    """Max distance (in coordinates) between two meshes after the base-point alignment."""
    a = align_to_base(mesh_a.points, mesh_a.grid, base_index)
    b = align_to_base(mesh_b.points, mesh_b.grid, base_index)
    ok = np.all(np.isfinite(a), axis=-1) & np.all(np.isfinite(b), axis=-1)
    return float(np.max(np.abs(a - b)[ok]))


def mesh_report(mesh: SurfaceMesh) -> dict:
    d = mesh.defined
    sup = mesh.support[d]
    return {"theta": float(np.angle(mesh.lam)),
            "defined_count": int(d.sum()),
            "vertical_count": int(mesh.vertical.sum()),
            "branch_count": int(mesh.branch.sum()),
            "bigcell_failure_count": int(mesh.bigcell_failure.sum()),
            "mean_H_max": interior_max(mesh.H, d & np.isfinite(mesh.H)),
            "support_range": [float(sup.min()) if sup.size else None, float(sup.max()) if sup.size else None]}
