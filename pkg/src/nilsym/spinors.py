"""Generating spinors and the first-order data of conformal surfaces in Nil3 (tau = 1/2)."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import nil3
from .errors import GridTooSmall, NonConformal
from .grid import check_field, d_x, d_y, d_z, d_zbar, interior_max

TAU = 0.5
VERTICAL_TOL = 1e-10
BRANCH_TOL = 1e-14
INF_SENTINEL = complex(np.inf, 0.0)


@dataclass(frozen=True)
class SpinorSample:
    psi1: complex
    psi2: complex
    z: complex = 0j

    @property
    def is_branch(self) -> bool:
        return bool(branch_mask(self.psi1, self.psi2))

    @property
    def is_vertical(self) -> bool:
        return bool(vertical_mask(self.psi1, self.psi2))


def branch_mask(psi1, psi2, tol: float = BRANCH_TOL):
    return (np.abs(psi1) <= tol) & (np.abs(psi2) <= tol)


def vertical_mask(psi1, psi2, tol: float = VERTICAL_TOL):
    a, b = np.abs(psi1) ** 2, np.abs(psi2) ** 2
    return (np.abs(a - b) <= tol * (a + b)) & ~branch_mask(psi1, psi2)


def spinors_to_phi(psi1, psi2) -> np.ndarray:
    """Phi = f^{-1} f_z in the frame e1, e2, e3; last axis holds (phi1, phi2, phi3)."""
    psi1 = np.asarray(psi1, dtype=complex)
    p2b = np.conj(np.asarray(psi2, dtype=complex))
    return np.stack([p2b ** 2 - psi1 ** 2, 1j * (p2b ** 2 + psi1 ** 2), 2 * psi1 * p2b], axis=-1)


def canonical_sign(psi1, psi2, tol: float = 1e-12):
    """Global sign with Re psi1 > 0, ties broken by Im psi1 > 0 (then by psi2 if psi1 = 0).

    Real parts within tol * |psi1| of zero count as ties so that roundoff does not pick the sign.
    """
    psi1 = np.asarray(psi1, dtype=complex)
    psi2 = np.asarray(psi2, dtype=complex)
    lead = np.where(np.abs(psi1) > 0, psi1, psi2)
    tie = np.abs(lead.real) <= tol * np.abs(lead)
    flip = (~tie & (lead.real < 0)) | (tie & (lead.imag < 0))
    s = np.where(flip, -1.0, 1.0)
    return psi1 * s, psi2 * s


def phi_to_spinors(phi, tol: float = 1e-10):
    """Inverse of spinors_to_phi (canonical sign branch)."""
    phi = np.asarray(phi, dtype=complex)
    scale = np.sum(np.abs(phi) ** 2, axis=-1)
    if np.any(scale == 0):
        raise NonConformal("Phi vanishes; spinors are undefined")
    if np.any(np.abs(np.sum(phi ** 2, axis=-1)) > tol * scale):
        raise NonConformal("Phi is not isotropic (sum of squares is nonzero)")
    p1sq = -(phi[..., 0] + 1j * phi[..., 1]) / 2
    p2bsq = (phi[..., 0] - 1j * phi[..., 1]) / 2
    psi1 = np.sqrt(p1sq)
    p2b = np.sqrt(p2bsq)
    # fix the relative sign through phi3 = 2 psi1 conj(psi2), solving from the larger root
    use1 = np.abs(psi1) >= np.abs(p2b)
    safe1 = np.where(use1, psi1, 1.0)
    safe2 = np.where(use1, 1.0, p2b)
    p2b = np.where(use1, phi[..., 2] / (2 * safe1), p2b)
    psi1 = np.where(use1, psi1, phi[..., 2] / (2 * safe2))
    return canonical_sign(psi1, np.conj(p2b))


@dataclass
class GeometricData:
    conf: np.ndarray
    support: np.ndarray
    meanH: np.ndarray
    diracPot: np.ndarray
    gauss: np.ndarray
    contact_angle: np.ndarray
    normal: np.ndarray
    vertical: np.ndarray
    branch: np.ndarray
    hopfA: Optional[np.ndarray] = None
    tildeA: Optional[np.ndarray] = None
    arB: Optional[np.ndarray] = None


def first_order_data(psi1, psi2, H=0.0) -> GeometricData:
    """Pointwise data determined by the spinors alone (plus the mean curvature H)."""
    psi1 = np.asarray(psi1, dtype=complex)
    psi2 = np.asarray(psi2, dtype=complex)
    H = np.broadcast_to(np.asarray(H, dtype=float), psi1.shape)
    a, b = np.abs(psi1) ** 2, np.abs(psi2) ** 2
    conf = 4 * (a + b) ** 2
    support = 2 * (a - b)
    br = branch_mask(psi1, psi2)
    vert = vertical_mask(psi1, psi2)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(br, np.nan, a + b)
        q = psi1 * psi2
        normal = np.stack([2 * q.real / s, 2 * q.imag / s, (a - b) / s], axis=-1)
        down = (np.abs(psi1) == 0) & ~br
        gauss = np.where(down, INF_SENTINEL, psi2 / np.where(down, 1.0, np.conj(psi1)))
        gauss = np.where(br, np.nan, gauss)
        cos_t = np.clip(support / np.sqrt(conf), -1.0, 1.0)
        angle = np.where(br, np.nan, np.arccos(cos_t))
    dirac = -(H / 2) * np.sqrt(conf) + 0.25j * support
    return GeometricData(conf=conf, support=support, meanH=np.array(H), diracPot=dirac,
                         gauss=gauss, contact_angle=angle, normal=normal,
                         vertical=vert, branch=br)


def align_signs(psi1, psi2, start=None):
    """Remove pointwise sign flips by breadth-first alignment with grid neighbours.

    The start node keeps the canonical sign; every other node takes the sign
    maximizing agreement with an already aligned neighbour.
    """
    psi1 = np.array(psi1, dtype=complex)
    psi2 = np.array(psi2, dtype=complex)
    ny, nx = psi1.shape[:2]
    if start is None:
        start = (ny // 2, nx // 2)
    p1, p2 = canonical_sign(psi1[start], psi2[start])
    psi1[start], psi2[start] = p1, p2
    seen = np.zeros((ny, nx), dtype=bool)
    seen[start] = True
    queue = [start]
    head = 0
    while head < len(queue):
        j, i = queue[head]
        head += 1
        for dj, di in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            jj, ii = j + dj, i + di
            if 0 <= jj < ny and 0 <= ii < nx and not seen[jj, ii]:
                seen[jj, ii] = True
                dot = (psi1[jj, ii] * np.conj(psi1[j, i]) + psi2[jj, ii] * np.conj(psi2[j, i])).real
                if np.isfinite(dot) and dot < 0:
                    psi1[jj, ii] *= -1
                    psi2[jj, ii] *= -1
                queue.append((jj, ii))
    return psi1, psi2


@dataclass
class SpinorField:
    """Spinors on a regular z-grid (rows = y, columns = x)."""

    z: np.ndarray
    psi1: np.ndarray
    psi2: np.ndarray
    steps: tuple = field(default=None)

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=complex)
        check_field(self.z)
        if self.steps is None:
            hx = abs(self.z[0, 1] - self.z[0, 0])
            hy = abs(self.z[1, 0] - self.z[0, 0])
            self.steps = (float(hx), float(hy))

    @property
    def branch(self):
        return branch_mask(self.psi1, self.psi2)

    @property
    def vertical(self):
        return vertical_mask(self.psi1, self.psi2)

    def phi(self):
        return spinors_to_phi(self.psi1, self.psi2)

    def data(self, H=0.0) -> GeometricData:
        return first_order_data(self.psi1, self.psi2, H)

    def w_field(self, H=0.0):
        """w with e^{w/2} = diracPot (principal log); NaN at vertical/branch points."""
        d = self.data(H)
        bad = d.vertical | d.branch | (d.diracPot == 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            w = 2 * np.log(np.where(bad, np.nan, d.diracPot))
        return w

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["z_re", "z_im", "psi1_re", "psi1_im", "psi2_re", "psi2_im"])
            for zz, a, b in zip(self.z.ravel(), self.psi1.ravel(), self.psi2.ravel()):
                wr.writerow([repr(float(v)) for v in (zz.real, zz.imag, a.real, a.imag, b.real, b.imag)])

    @classmethod
    def from_csv(cls, path) -> "SpinorField":
        rows = []
        with open(path, newline="") as fh:
            rd = csv.DictReader(fh)
            for r in rd:
                rows.append([float(r[k]) for k in ("z_re", "z_im", "psi1_re", "psi1_im", "psi2_re", "psi2_im")])
        if not rows:
            raise GridTooSmall("empty spinor file")
        arr = np.array(rows)
        xs = np.unique(np.round(arr[:, 0], 12))
        ys = np.unique(np.round(arr[:, 1], 12))
        nx, ny = len(xs), len(ys)
        if nx * ny != len(arr):
            raise GridTooSmall("spinor samples do not form a rectangular grid")
        order = np.lexsort((arr[:, 0], arr[:, 1]))
        arr = arr[order].reshape(ny, nx, 6)
        z = arr[..., 0] + 1j * arr[..., 1]
        return cls(z, arr[..., 2] + 1j * arr[..., 3], arr[..., 4] + 1j * arr[..., 5])


def dirac_residual_field(field: SpinorField, H=0.0) -> np.ndarray:
    """max(|d_z psi2 + U psi1|, |-d_zbar psi1 + V psi2|) with U = V = diracPot."""
    st = field.steps
    U = first_order_data(field.psi1, field.psi2, H).diracPot
    r1 = np.abs(d_z(field.psi2, st) + U * field.psi1)
    r2 = np.abs(-d_zbar(field.psi1, st) + U * field.psi2)
    return np.maximum(r1, r2)


def dirac_residual(field: SpinorField, H=0.0, mask=None) -> float:
    return interior_max(dirac_residual_field(field, H), mask)


@dataclass
class HopfResult:
    A: np.ndarray
    tildeA: np.ndarray
    B: np.ndarray
    holomorphy_residual: float


def hopf_and_ar(field: SpinorField, H=0.0, mask=None) -> HopfResult:
    st = field.steps
    p1 = field.psi1
    p2b = np.conj(field.psi2)
    H = np.asarray(H, dtype=float)
    A = 2 * (p1 * d_z(p2b, st) - p2b * d_z(p1, st)) + 4j * p1 ** 2 * p2b ** 2
    phi3 = 2 * p1 * p2b
    tA = A + phi3 ** 2 / (2 * H + 1j)
    B = 0.25 * (2 * H + 1j) * tA
    res = interior_max(d_zbar(B, st), mask, rings=2)
    return HopfResult(A, tA, B, res)


@dataclass
class BerdinskyTerms:
    r: complex
    s: complex
    t: complex
    residual: float


def berdinsky_constraint(w, w_z, w_zbar, B, H=0.0) -> BerdinskyTerms:
    """Terms r, s, t of the integrability constraint on (w, B) and |lhs - rhs|."""
    w = np.asarray(w, dtype=complex)
    ew2 = np.exp(w / 2)
    ewb2 = np.conj(ew2)
    r = -0.5 * (2 * H + 1j) * (np.conj(w_zbar) - w_z)
    s = (2 * H + 1j) * ewb2 - (2 * H - 1j) * ew2
    t = (2 * H + 1j) * ew2 - (2 * H - 1j) * ewb2
    ew = np.abs(np.exp(w))
    lhs = np.abs(r + np.conj(r) * B / ew) ** 2
    rhs = -s * t * (1 - np.abs(B) ** 2 / np.abs(np.exp(2 * w))) ** 2
    return BerdinskyTerms(r, s, t, np.abs(lhs - rhs))


# --- mean curvature from a mesh ---------------------------------------------

def frame_derivatives(points, steps, tau: float = TAU):
    """P_x = f^{-1} f_x and P_y = f^{-1} f_y in the frame, by centered differences in the embedding."""
    points = np.asarray(points, dtype=float)
    M = nil3.embed_arrays(points, tau)
    Minv = np.linalg.inv(M)
    hx, hy = steps
    Px = nil3.algebra_coefficients(Minv @ d_x(M, hx))
    Py = nil3.algebra_coefficients(Minv @ d_y(M, hy))
    return Px, Py


def _second(f, h, axis):
    """Second derivative: compact 3-point stencil inside, repeated one-sided gradient on the edge."""
    out = np.gradient(np.gradient(f, h, axis=axis, edge_order=2), h, axis=axis, edge_order=2)
    f = np.moveaxis(f, axis, 0)
    o = np.moveaxis(out, axis, 0)
    o[1:-1] = (f[2:] - 2 * f[1:-1] + f[:-2]) / h ** 2
    return out


def mean_curvature_from_mesh(points, steps, tau: float = TAU, degenerate_tol: float = 1e-12):
    """H = <Phi_zbar + conj(Phi)_z + {Phi, conj Phi}, n> / e^u on a sampled mesh.

    With Phi = (P_x - i P_y)/2 the numerator equals
    (d_x P_x + d_y P_y + nabla_{P_x} P_x + nabla_{P_y} P_y)/2 and e^u = (|P_x|^2 + |P_y|^2)/2.
    d_x P_x is formed as M^{-1} M_xx - P_x^2 in the embedding so that interior
    nodes only see compact stencils.  Returns (H, degenerate_mask).
    """
    points = np.asarray(points, dtype=float)
    check_field(points)
    hx, hy = steps
    M = nil3.embed_arrays(points, tau)
    Minv = np.linalg.inv(M)
    Xm = Minv @ d_x(M, hx)
    Ym = Minv @ d_y(M, hy)
    lap_m = Minv @ _second(M, hx, 1) - Xm @ Xm + Minv @ _second(M, hy, 0) - Ym @ Ym
    Px = nil3.algebra_coefficients(Xm)
    Py = nil3.algebra_coefficients(Ym)
    lap = nil3.algebra_coefficients(lap_m)
    num = 0.5 * (lap + nil3.levi_civita_arrays(Px, Px, tau) + nil3.levi_civita_arrays(Py, Py, tau))
    conf = 0.5 * (np.sum(Px ** 2, axis=-1) + np.sum(Py ** 2, axis=-1))
    n = np.cross(Px, Py)
    nn = np.linalg.norm(n, axis=-1)
    degenerate = (conf <= degenerate_tol) | (nn <= degenerate_tol) | ~np.isfinite(conf)
    with np.errstate(divide="ignore", invalid="ignore"):
        n = n / nn[..., None]
        H = np.sum(num * n, axis=-1) / conf
    H = np.where(degenerate, np.nan, H)
    return H, degenerate
