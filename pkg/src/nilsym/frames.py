"""Potentials, the holomorphic ODE, Birkhoff-based frame assembly and connection residuals."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from . import loops as L
from .errors import GaugeError, OutsideBigCell, PoleEncountered, StiffIntegration, TruncationOverflow
from .grid import d_z, d_zbar, laplace_zzbar, interior_max
from .loops import SIGMA3, TwistedLoop

SQRT_I = np.exp(1j * np.pi / 4)
PHASE = np.diag([1 / SQRT_I, SQRT_I])
V_MINUS_REALITY_TOL = 1e-8


def _pairs(m):
    return [[float(np.real(v)), float(np.imag(v))] for v in np.asarray(m, dtype=complex).reshape(-1)]


def _unpairs(seq, shape=None):
    arr = np.array([complex(re, im) for re, im in seq])
    return arr.reshape(shape) if shape else arr


@dataclass(frozen=True)
class Rational:
    """num(z)/den(z), coefficients listed by ascending power of z."""

    num: Tuple[complex, ...] = (0j,)
    den: Tuple[complex, ...] = (1 + 0j,)

    @classmethod
    def constant(cls, c: complex) -> "Rational":
        return cls((complex(c),))

    def numerator(self, z):
        return np.polynomial.polynomial.polyval(z, np.asarray(self.num, dtype=complex))

    def denominator(self, z):
        return np.polynomial.polynomial.polyval(z, np.asarray(self.den, dtype=complex))

    def __call__(self, z):
        return self.numerator(z) / self.denominator(z)

    def is_zero(self) -> bool:
        return not np.any(np.asarray(self.num) != 0)

    def to_json(self) -> dict:
        return {"num": _pairs(self.num), "den": _pairs(self.den)}

    @classmethod
    def from_json(cls, obj) -> "Rational":
        return cls(tuple(_unpairs(obj["num"])), tuple(_unpairs(obj.get("den", [[1.0, 0.0]]))))


@dataclass(frozen=True)
class PotentialSpec:
    """Normalized (p, B) data or a holomorphic potential sum_d lambda^d eta_d(z) dz.

    eta maps a degree d >= -1 to a tuple of 2x2 matrices, the z-power
    coefficients of eta_d.
    """

    kind: str
    p: Optional[Rational] = None
    B: Optional[Rational] = None
    eta: Tuple[Tuple[int, Tuple[np.ndarray, ...]], ...] = ()
    base_point: complex = 0j
    initial: Optional[TwistedLoop] = None

    def __post_init__(self):
        if self.kind not in ("normalized", "holomorphic"):
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if self.kind == "normalized" and self.p is None:
            raise ValueError("normalized potential needs p")
        for d, poly in self.eta:
            if d < -1:
                raise ValueError("holomorphic potential degrees must be >= -1")
            for m in poly:
                m = np.asarray(m)
                bad = m[[0, 1], [1, 0]] if d % 2 == 0 else m[[0, 1], [0, 1]]
                if np.any(np.abs(bad) > 1e-14) or abs(np.trace(m)) > 1e-14:
                    raise ValueError(f"eta degree {d} violates the twist or is not trace-free")

    @classmethod
    def normalized(cls, p, B=0, base_point=0j, initial=None) -> "PotentialSpec":
        p = p if isinstance(p, Rational) else Rational.constant(p)
        B = B if isinstance(B, Rational) else Rational.constant(B)
        return cls("normalized", p=p, B=B, base_point=complex(base_point), initial=initial)

    @classmethod
    def holomorphic(cls, eta: dict, base_point=0j, initial=None) -> "PotentialSpec":
        items = tuple(sorted((int(d), tuple(np.asarray(m, dtype=complex) for m in poly))
                             for d, poly in eta.items()))
        return cls("holomorphic", eta=items, base_point=complex(base_point), initial=initial)

    def initial_loop(self, n: int) -> TwistedLoop:
        if self.initial is None:
            return TwistedLoop.identity(n)
        return self.initial.resized(n)

    def coefficients(self, z, n: int = 1) -> np.ndarray:
        """Coefficient stack of xi(z) over degrees [-n, n] (n >= 1)."""
        z = np.asarray(z, dtype=complex)
        out = np.zeros(z.shape + (2 * n + 1, 2, 2), dtype=complex)
        if self.kind == "normalized":
            p = self.p(z)
            b = self.B(z) if self.B is not None else 0 * z
            out[..., n - 1, 0, 1] = -p
            out[..., n - 1, 1, 0] = b / p
        else:
            for d, poly in self.eta:
                if d > n:
                    raise TruncationOverflow(f"potential degree {d} exceeds truncation {n}")
                acc = np.zeros(z.shape + (2, 2), dtype=complex)
                for m in reversed(poly):
                    acc = acc * z[..., None, None] + m
                out[..., n + d, :, :] += acc
        return out

    def singular_measure(self, z) -> np.ndarray:
        """Smallest modulus among the denominators appearing in xi at z."""
        z = np.asarray(z, dtype=complex)
        if self.kind != "normalized":
            return np.full(z.shape, np.inf)
        vals = [np.abs(self.p.denominator(z)), np.abs(self.p.numerator(z))]
        if self.B is not None:
            vals.append(np.abs(self.B.denominator(z)))
        return np.minimum.reduce(vals)

    def abresch_rosenberg(self, z) -> np.ndarray:
        """B read from the potential: minus the product of the lambda^{-1} off-diagonal entries."""
        c = self.coefficients(z, 1)[..., 0, :, :]
        return -c[..., 0, 1] * c[..., 1, 0]

    def to_json(self) -> dict:
        out = {"kind": self.kind, "base_point": [self.base_point.real, self.base_point.imag]}
        if self.kind == "normalized":
            out["p"] = self.p.to_json()
            out["B"] = (self.B or Rational()).to_json()
        else:
            out["eta"] = [{"deg": d, "poly": [_pairs(m) for m in poly]} for d, poly in self.eta]
        if self.initial is not None:
            out["initial"] = self.initial.to_json()
        return out

    @classmethod
    def from_json(cls, obj) -> "PotentialSpec":
        if isinstance(obj, str):
            obj = json.loads(obj)
        bp = obj.get("base_point", [0.0, 0.0])
        base = complex(bp[0], bp[1])
        initial = TwistedLoop.from_json(obj["initial"]) if obj.get("initial") else None
        if obj["kind"] == "normalized":
            B = Rational.from_json(obj["B"]) if obj.get("B") else Rational()
            return cls("normalized", p=Rational.from_json(obj["p"]), B=B,
                       base_point=base, initial=initial)
        eta = {int(e["deg"]): [_unpairs(m, (2, 2)) for m in e["poly"]] for e in obj["eta"]}
        return cls.holomorphic(eta, base, initial)


# --- Step I: holomorphic ODE -------------------------------------------------

@dataclass
class PotentialSolution:
    z: np.ndarray
    coeffs: np.ndarray
    steps: int
    tail: float

    def loop(self, index) -> TwistedLoop:
        return TwistedLoop(self.coeffs[index], tail=self.tail)


def _rhs(spec, C, z, dz, n, pole_tol):
    if np.any(spec.singular_measure(z) < pole_tol):
        raise PoleEncountered("potential is singular on the integration path")
    xi = spec.coefficients(z, 1) * dz[..., None, None, None]
    prod = L.conv(C, xi)
    return L.resize(prod, n)


def _rk4(spec, C0, z0, z1, n, steps, pole_tol):
    dz = z1 - z0
    h = 1.0 / steps
    C = C0
    tail = 0.0
    for k in range(steps):
        t = k * h
        k1, d1 = _rhs(spec, C, z0 + t * dz, dz, n, pole_tol)
        k2, d2 = _rhs(spec, C + 0.5 * h * k1, z0 + (t + 0.5 * h) * dz, dz, n, pole_tol)
        k3, d3 = _rhs(spec, C + 0.5 * h * k2, z0 + (t + 0.5 * h) * dz, dz, n, pole_tol)
        k4, d4 = _rhs(spec, C + h * k3, z0 + (t + h) * dz, dz, n, pole_tol)
        C = C + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        tail = max(tail, float(np.max(np.maximum.reduce([d1, d2, d3, d4]))) * h)
    return C, tail


def integrate_segment(spec: PotentialSpec, C0, z0, z1, n: int = L.DEFAULT_N, tol: float = 1e-10,
                      min_steps: int = 4, max_steps: int = 1 << 14, pole_tol: float = 1e-10,
                      tail_tol: float = L.DEFAULT_TAIL_TOL):
    """RK4 along straight segments z0 -> z1, vectorized over segments.

    The step count is raised (predicted from the fourth-order rate, then
    doubled) until the step-doubling difference, relative to the size of
    the solution, is below tol. Returns (C1, steps, tail).
    """
    z0 = np.asarray(z0, dtype=complex)
    z1 = np.asarray(z1, dtype=complex)
    shape = np.broadcast_shapes(z0.shape, z1.shape)
    C0 = np.broadcast_to(np.asarray(C0, dtype=complex), shape + (2 * n + 1, 2, 2))
    steps = min_steps
    prev, _ = _rk4(spec, C0, z0, z1, n, steps, pole_tol)
    while True:
        cur, tail = _rk4(spec, C0, z0, z1, n, 2 * steps, pole_tol)
        scale = max(1.0, float(np.max(L.coeff_norm(cur)))) if cur.size else 1.0
        err = float(np.max(L.coeff_norm(cur - prev))) / scale if cur.size else 0.0
        steps *= 2
        if err < tol:
            break
        # error of the coarse run scales like steps^-4; jump close to the target
        factor = (err / tol) ** 0.25 if np.isfinite(err) else 16.0
        grow = 1 << max(0, int(np.ceil(np.log2(max(factor, 1.0)))) - 1)
        steps *= grow
        if 2 * steps > max_steps:
            raise StiffIntegration(f"no convergence with {max_steps} steps")
        prev, _ = _rk4(spec, C0, z0, z1, n, steps, pole_tol) if grow > 1 else (cur, tail)
    if tail > tail_tol:
        raise TruncationOverflow(f"ODE solution leaks {tail:.2e} beyond degree {n}")
    return cur, steps, tail


def integrate_potential(spec: PotentialSpec, z, n: int = L.DEFAULT_N, tol: float = 1e-10,
                        tail_tol: float = L.DEFAULT_TAIL_TOL) -> PotentialSolution:
    """Solve dC = C xi along rays from the base point to every z."""
    z = np.asarray(z, dtype=complex)
    C0 = spec.initial_loop(n).coeffs
    C, steps, tail = integrate_segment(spec, C0, np.full(z.shape, spec.base_point), z, n, tol,
                                       tail_tol=tail_tol)
    return PotentialSolution(z, C, steps, tail)


def integrate_path(spec: PotentialSpec, path: Sequence[complex], C0=None, n: int = L.DEFAULT_N,
                   tol: float = 1e-10) -> np.ndarray:
    """Integrate along a polyline starting with C0 (default: the initial loop at path[0])."""
    C = spec.initial_loop(n).coeffs if C0 is None else np.asarray(C0)
    for a, b in zip(path[:-1], path[1:]):
        C, _, _ = integrate_segment(spec, C, np.asarray(a, dtype=complex), np.asarray(b, dtype=complex), n, tol)
    return C


def xi_plus_coefficients(spec: PotentialSpec, z, n: int = 1) -> np.ndarray:
    """Coefficients of the companion potential xi_+ (the d zbar form) at zbar."""
    xm = spec.coefficients(z, n)
    return -(SIGMA3 @ L.reflect_conj_transpose(xm) @ SIGMA3)


def conjugate_solution(Cminus):
    """C_+ = sigma3 conj(C_-(1/conj lambda))^{t,-1} sigma3; accepts a loop or a stack."""
    if isinstance(Cminus, TwistedLoop):
        return TwistedLoop(L.su11_star(Cminus.coeffs), Cminus.tail_tol, Cminus.tail)
    return L.su11_star(Cminus)


# --- Step II: Birkhoff + gauge ---------------------------------------------

@dataclass
class GaugeRecord:
    v_minus: complex
    branch: str  # "plain", "omega0" or "failed"


OMEGA0_TERMS = {1: np.array([[0, 1], [0, 0]], dtype=complex), -1: np.array([[0, 0], [-1, 0]], dtype=complex)}


def _omega0(n):
    return TwistedLoop.from_terms(OMEGA0_TERMS, n).coeffs


def assemble_arrays(Cm, Cp, cond_max: float = L.BIG_CELL_COND, tail_tol: float = L.DEFAULT_TAIL_TOL):
    """Vectorized Step II. Returns (frames, v_minus, branch_code, ok, a_lambda_minus1_gauge).

    branch_code: 0 plain, 1 omega0, -1 failed. The last output is the
    right gauge R with U_{-1} = R^{-1} xi_{-1} R (R = D).
    """
    Cm = np.asarray(Cm, dtype=complex)
    Cp = np.asarray(Cp, dtype=complex)
    n = L._n_of(Cm)
    Cm_inv, _ = L.loop_inverse_array(Cm, n)
    a, dropped = L.mul_trunc(Cm_inv, Cp, n)
    plus, minus, ok = L.birkhoff_arrays(a, cond_max)
    ok = ok & (dropped <= max(tail_tol, 1e-6))
    v = minus[..., n, 0, 0]
    Fhat, _ = L.mul_trunc(Cm, np.where(ok[..., None, None, None], plus, 0), n)
    shape = v.shape
    frames = np.full(Cm.shape, np.nan, dtype=complex)
    D = np.full(shape + (2, 2), np.nan, dtype=complex)
    branch = np.full(shape, -1, dtype=int)
    if ok.any():
        vr = v[ok]
        if np.any(np.abs(vr.imag) > V_MINUS_REALITY_TOL * np.maximum(1.0, np.abs(vr))):
            bad = float(np.max(np.abs(vr.imag)))
            raise GaugeError(f"v_minus has imaginary part {bad:.2e}")
        vr = vr.real
        s = np.sqrt(np.abs(vr))
        d = np.zeros(vr.shape + (2, 2), dtype=complex)
        d[..., 0, 0] = 1 / s
        d[..., 1, 1] = s
        FD = Fhat[ok] @ d[..., None, :, :]
        neg = vr < 0
        if neg.any():
            FD[neg], _ = L.mul_trunc(_omega0(n), FD[neg], n)
        frames[ok] = FD
        D[ok] = d
        branch[ok] = np.where(neg, 1, 0)
    return frames, v, branch, ok, D


def assemble_frame(Cminus: TwistedLoop, Cplus: TwistedLoop) -> Tuple[TwistedLoop, GaugeRecord]:
    frames, v, branch, ok, _ = assemble_arrays(Cminus.coeffs, Cplus.coeffs, tail_tol=Cminus.tail_tol)
    if not bool(ok):
        raise OutsideBigCell("C_-^{-1} C_+ is outside the big cell")
    rec = GaugeRecord(complex(v), "omega0" if int(branch) == 1 else "plain")
    return TwistedLoop(frames, Cminus.tail_tol, Cminus.tail), rec


@dataclass
class FrameField:
    """Extended frames on a set of z values plus the gauge bookkeeping."""

    z: np.ndarray
    frames: np.ndarray          # (..., 2N+1, 2, 2), NaN where failed
    v_minus: np.ndarray
    branch: np.ndarray          # 0 plain, 1 omega0, -1 big-cell failure
    dirac_slot: np.ndarray      # e^{w/2} slot of the Maurer-Cartan form, per point
    B: np.ndarray               # Abresch-Rosenberg coefficient from the potential
    phase_fixed: bool
    ode_steps: int
    tail: float
    extras: dict = field(default_factory=dict)

    @property
    def ok(self) -> np.ndarray:
        return self.branch >= 0

    @property
    def truncation(self) -> int:
        return L._n_of(self.frames)

    def loop(self, index) -> TwistedLoop:
        return TwistedLoop(self.frames[index], tail=self.tail)

    def gauge_record(self, index) -> GaugeRecord:
        b = int(self.branch[index])
        return GaugeRecord(complex(self.v_minus[index]), {0: "plain", 1: "omega0"}.get(b, "failed"))


def build_frames(spec: PotentialSpec, z, n: int = L.DEFAULT_N, ode_tol: float = 1e-10,
                 cond_max: float = L.BIG_CELL_COND, tail_tol: float = L.DEFAULT_TAIL_TOL) -> FrameField:
    """Steps I and II on arbitrary z values, with the global phase convention applied."""
    z = np.asarray(z, dtype=complex)
    pts = np.concatenate([z.reshape(-1), [spec.base_point]])
    sol = integrate_potential(spec, pts, n, ode_tol, tail_tol)
    Cm = sol.coeffs
    Cp = conjugate_solution(Cm)
    frames, v, branch, ok, D = assemble_arrays(Cm, Cp, cond_max, tail_tol)
    xim1 = spec.coefficients(pts, 1)[..., 0, :, :]
    Dinv = np.linalg.inv(np.where(ok[..., None, None], D, np.eye(2)))
    Um1 = Dinv @ xim1 @ np.where(ok[..., None, None], D, np.eye(2))
    c = -Um1[..., 0, 1]
    c = np.where(ok, c, np.nan)
    # phase convention decided once, at the base point
    cb = c[-1]
    fix = bool(ok[-1]) and abs(cb) > 0 and abs(cb.imag) <= 1e-8 * abs(cb)
    if fix:
        frames = PHASE @ frames @ np.linalg.inv(PHASE)
        c = -1j * c
    B = spec.abresch_rosenberg(pts)
    shape = z.shape
    return FrameField(z=z, frames=frames[:-1].reshape(shape + frames.shape[-3:]),
                      v_minus=v[:-1].reshape(shape), branch=branch[:-1].reshape(shape),
                      dirac_slot=c[:-1].reshape(shape), B=B[:-1].reshape(shape),
                      phase_fixed=fix, ode_steps=sol.steps, tail=sol.tail)


def maurer_cartan_lowest(field: FrameField, spec: PotentialSpec) -> np.ndarray:
    """Exact lambda^{-1} coefficient of F^{-1}F_z (up to the diagonal gauge)."""
    c = field.dirac_slot
    B = field.B
    out = np.zeros(c.shape + (2, 2), dtype=complex)
    out[..., 0, 1] = -c
    out[..., 1, 0] = B / c
    return out


# --- connection forms and residuals ----------------------------------------

def build_alpha(wfield, Bfield, steps):
    """Coefficient stacks (degrees -1, 0, 1) of U(lambda) and V(lambda) for minimal/CMC data."""
    w = np.asarray(wfield, dtype=complex)
    B = np.asarray(Bfield, dtype=complex)
    wz = d_z(w, steps)
    wzb = d_zbar(w, steps)
    e = np.exp(w / 2)
    U = np.zeros(w.shape + (3, 2, 2), dtype=complex)
    V = np.zeros(w.shape + (3, 2, 2), dtype=complex)
    U[..., 0, 0, 1] = -e
    U[..., 0, 1, 0] = B / e
    U[..., 1, 0, 0] = wz / 4
    U[..., 1, 1, 1] = -wz / 4
    V[..., 1, 0, 0] = -wzb / 4
    V[..., 1, 1, 1] = wzb / 4
    V[..., 2, 0, 1] = -np.conj(B) / e
    V[..., 2, 1, 0] = e
    return U, V


def alpha_at(UV, lam):
    U, V = UV
    return L.evaluate(U, lam), L.evaluate(V, lam)


def flatness_field(UV, steps, lam):
    U, V = alpha_at(UV, lam)
    return d_zbar(U, steps) - d_z(V, steps) + (V @ U - U @ V)


def flatness_residual(UV, steps, lambdas=(1.0,), mask=None) -> float:
    """Max Frobenius norm of the zero-curvature defect over lambda samples.

    The connection already carries first differences of w, so the outer two
    rings (where one-sided stencils would be nested) are skipped.
    """
    worst = 0.0
    for lam in lambdas:
        r = flatness_field(UV, steps, lam)
        worst = max(worst, interior_max(np.linalg.norm(r, axis=(-2, -1)), mask, rings=2))
    return worst


def gauss_field(wfield, Bfield, steps):
    w = np.asarray(wfield, dtype=complex)
    B = np.asarray(Bfield, dtype=complex)
    return laplace_zzbar(w, steps) + 2 * np.exp(w) - 2 * np.abs(B) ** 2 * np.exp(-w)


def gauss_residual(wfield, Bfield, steps, mask=None) -> float:
    return interior_max(gauss_field(wfield, Bfield, steps), mask)


# --- Wu's formula -------------------------------------------------------------

def _series_exp(c, degree):
    """Taylor coefficients of exp(sum c_k z^k) up to z^degree (c_0 handled separately)."""
    c = np.zeros(degree + 1, dtype=complex) if len(c) == 0 else np.asarray(c, dtype=complex)
    a = np.zeros(degree + 1, dtype=complex)
    a[: min(len(c), degree + 1)] = c[: degree + 1]
    out = np.zeros(degree + 1, dtype=complex)
    out[0] = np.exp(a[0])
    # f' = a' f  =>  k f_k = sum_{j=1}^k j a_j f_{k-j}
    for k in range(1, degree + 1):
        out[k] = sum(j * a[j] * out[k - j] for j in range(1, k + 1)) / k
    return out


def wu_potential(Bseries, hatw_series, degree: int = 24, base_point: complex = 0j,
                 initial: Optional[TwistedLoop] = None) -> PotentialSpec:
    """Normalized potential with p = exp(w(z) - w(0)/2) and B, both as truncated series.

    Series are in powers of (z - base_point) only when base_point is 0; other
    base points are supported by re-expanding the polynomials.
    """
    w = np.asarray(hatw_series, dtype=complex)
    if len(w) == 0:
        w = np.zeros(1, dtype=complex)
    shifted = w.copy()
    shifted[0] = w[0] - w[0] / 2
    p = _series_exp(shifted, degree)
    B = np.asarray(Bseries, dtype=complex) if len(Bseries) else np.zeros(1, dtype=complex)
    if base_point != 0:
        p = _reexpand(p, base_point)
        B = _reexpand(B, base_point)
    return PotentialSpec.normalized(Rational(tuple(p)), Rational(tuple(B)), base_point, initial)


def _reexpand(c, z0):
    """Coefficients in z of a polynomial given in powers of (z - z0)."""
    P = np.polynomial.Polynomial(np.asarray(c, dtype=complex))
    shift = np.polynomial.Polynomial([-z0, 1.0])
    return P(shift).coef
