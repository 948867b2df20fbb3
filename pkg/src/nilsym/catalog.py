"""Named example surfaces: potentials, closed forms and helicoid monodromy."""
from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from . import nil3
from .errors import ParameterOutOfRange, UnknownPreset
from .frames import SQRT_I, PotentialSpec
from .loops import TwistedLoop, loop_exp, loop_inv, loop_theta_derivative

NAMES = ("umbrella", "paraboloid", "helicoid", "catenoid")
HELICOID_N = 24
DEFAULT_N = 16

# x3 = c x1 x2 for the paraboloid family, as produced by the pipeline
PARABOLOID_QUADRIC = 0.5

# reference Abresch-Rosenberg coefficients at lambda = 1 (the pipeline recovers half of these)
REFERENCE_B = {"umbrella": lambda p: 0.0,
             "paraboloid": lambda p: 1.0 / 8.0,
             "helicoid": lambda p: -2.0 * p["a"] ** 2}


def phase_matrix():
    return np.diag([1 / SQRT_I, SQRT_I])


@dataclass(frozen=True)
class ExampleSpec:
    name: str
    params: dict = field(default_factory=dict)
    initial: TwistedLoop | None = None

    def __post_init__(self):
        if self.name not in NAMES:
            raise UnknownPreset(f"unknown example {self.name!r}; known: {', '.join(NAMES)}")
        if self.name in ("helicoid", "catenoid"):
            a = self.params.get("a")
            if a is None or not np.isfinite(a) or a == 0:
                raise ParameterOutOfRange(f"{self.name} needs a real nonzero 'a'")

    @property
    def a(self) -> float:
        return float(self.params["a"])

    @property
    def k(self) -> float:
        return float(self.params.get("k", 1.0))

    @property
    def truncation(self) -> int:
        return HELICOID_N if self.name in ("helicoid", "catenoid") else DEFAULT_N

    def label(self) -> str:
        if not self.params:
            return self.name
        return self.name + ":" + ",".join(f"{k}={v:g}" for k, v in sorted(self.params.items()))


_PRESET = re.compile(r"^\s*([a-z]+)\s*(?::\s*(.*))?$")


def parse_preset(text: str) -> ExampleSpec:
    """'umbrella', 'paraboloid', 'helicoid:a=0.3,k=0.5', 'catenoid:a=0.3[,t=0.5]'."""
    m = _PRESET.match(text or "")
    if not m:
        raise UnknownPreset(f"cannot parse preset {text!r}")
    name, rest = m.group(1), m.group(2)
    params = {}
    if rest:
        for item in rest.split(","):
            if "=" not in item:
                raise UnknownPreset(f"bad preset parameter {item!r}")
            key, val = (s.strip() for s in item.split("=", 1))
            try:
                params[key] = float(val)
            except ValueError:
                raise UnknownPreset(f"parameter {key} is not a number: {val!r}") from None
    allowed = {"umbrella": set(), "paraboloid": set(), "helicoid": {"a", "k"}, "catenoid": {"a", "t"}}
    if name in allowed and set(params) - allowed[name]:
        raise UnknownPreset(f"unexpected parameters for {name}: {sorted(set(params) - allowed[name])}")
    return ExampleSpec(name, params)


def helicoid_generator(a: float, n: int = HELICOID_N) -> TwistedLoop:
    """D(lambda) = [[1/2, a(1/lambda - lambda)], [a(1/lambda - lambda), -1/2]]."""
    off = np.array([[0, a], [a, 0]], dtype=complex)
    return TwistedLoop.from_terms({-1: off, 0: np.diag([0.5, -0.5]), 1: -off}, n)


def catenoid_initial(t: float, n: int = HELICOID_N) -> TwistedLoop:
    """The SU(1,1)-loop [[cosh t, sinh t / lambda], [lambda sinh t, cosh t]]."""
    s, c = np.sinh(t), np.cosh(t)
    return TwistedLoop.from_terms({-1: [[0, s], [0, 0]], 0: np.diag([c, c]), 1: [[0, 0], [s, 0]]}, n)


def catalog_potential(e: ExampleSpec) -> PotentialSpec:
    n = e.truncation
    if e.name == "umbrella":
        init = e.initial or TwistedLoop.constant(phase_matrix(), n)
        return PotentialSpec.normalized(1j, 0.0, initial=init)
    if e.name == "paraboloid":
        init = e.initial or TwistedLoop.constant(phase_matrix(), n)
        return PotentialSpec.normalized(0.25j, 1.0 / 16.0, initial=init)
    D = helicoid_generator(e.a, 1).coeffs
    eta = {d: [D[d + 1]] for d in (-1, 0, 1)}
    if e.name == "helicoid":
        return PotentialSpec.holomorphic(eta, initial=e.initial)
    init = e.initial or catenoid_initial(float(e.params.get("t", 0.5)), n)
    return PotentialSpec.holomorphic(eta, initial=init)


def closed_form(e: ExampleSpec, z, lam=1.0) -> nil3.Nil3Point:
    """Known parametrizations of the umbrella and paraboloid families."""
    z = complex(z)
    lam = complex(lam)
    if e.name == "umbrella":
        r2 = abs(z) ** 2
        if r2 >= 1:
            raise ParameterOutOfRange("umbrella closed form needs |z| < 1")
        s = -2 / (1 - r2)
        zb = z.conjugate()
        return nil3.Nil3Point(float((s * (z / lam + lam * zb)).real),
                              float((s * 1j * (lam * zb - z / lam)).real), 0.0)
    if e.name == "paraboloid":
        p = -0.25j * z / lam
        u = (-2j * (p - p.conjugate())).real
        v = -np.sinh(2 * (p + p.conjugate()).real)
        return nil3.Nil3Point(float(u), float(v), PARABOLOID_QUADRIC * float(u * v))
    raise ParameterOutOfRange(f"no closed form for {e.name}")


def closed_form_arrays(e: ExampleSpec, z, lam=1.0) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    flat = [closed_form(e, zz, lam).as_array() for zz in z.ravel()]
    return np.array(flat).reshape(z.shape + (3,))


# --- helicoid symmetry --------------------------------------------------------

def helicoid_monodromy(a: float, k: float, lam=1.0, n: int = 48):
    """M = exp(2 pi i k D), X = i lam M' M^{-1}, Y = i lam X' evaluated at lam."""
    if a == 0:
        raise ParameterOutOfRange("helicoid needs a != 0")
    D = helicoid_generator(a, n)
    M = loop_exp(D.scale(2j * np.pi * k))
    X = loop_theta_derivative(M) @ loop_inv(M)
    Y = loop_theta_derivative(X)
    return M(lam), X(lam), Y(lam)


def reference_monodromy(a: float, k: float):
    """The lambda = 1 values of (M, X, Y) in closed form."""
    e = np.exp(2j * np.pi * k)
    M = np.diag([np.exp(1j * np.pi * k), np.exp(-1j * np.pi * k)])
    X = np.array([[0, 2j * a * (1 - e)], [-2j * a * (1 - 1 / e), 0]])
    d = (e - 1 / e) - 4j * np.pi * k
    Y = 4 * a * a * np.diag([d, -d])
    return M, X, Y


def helicoid_axis_point(a: float) -> nil3.Nil3Point:
    """Point on the screw axis for frames normalized by the global phase convention."""
    return nil3.Nil3Point(0.0, 4.0 * a, 0.0)


def helicoid_symmetry(a: float, k: float) -> nil3.IsometryElement:
    """Image of the shift z -> z + 2 pi i k: screw motion of pitch 8a^2 and angle 2 pi k."""
    return nil3.helicoidal_motion(8 * a * a, 2 * np.pi * k, helicoid_axis_point(a))


# --- isometry fitting -----------------------------------------------------------

@dataclass
class IsometryFit:
    angle: float
    translation: np.ndarray
    residual: float
    axis: np.ndarray | None
    pitch_shift: float | None

    @property
    def element(self) -> nil3.IsometryElement:
        return nil3.IsometryElement(nil3.Nil3Point(*self.translation), self.angle)


def _fit_at(p, q, th):
    rp0 = nil3.rotation(th).apply(p[0])
    T = nil3.mul_arrays(q[0], nil3.nil3_inv(nil3.Nil3Point(*rp0)).as_array())
    g = nil3.IsometryElement(nil3.Nil3Point(*T), th)
    return T, float(np.max(np.abs(g.apply(p) - q)))


def fit_isometry(p, q, samples: int = 720) -> IsometryFit:
    """Orientation-preserving isometry (T, theta) with T R_theta p ~ q.

    For theta != 0 the motion is a screw about a vertical axis; the axis
    point and the vertical shift along it (zero for a pure rotation) are
    reported.
    """
    p = np.asarray(p, dtype=float).reshape(-1, 3)
    q = np.asarray(q, dtype=float).reshape(-1, 3)
    ths = np.linspace(-np.pi, np.pi, samples, endpoint=False)
    errs = [_fit_at(p, q, t)[1] for t in ths]
    i = int(np.argmin(errs))
    h = ths[1] - ths[0]
    opt = minimize_scalar(lambda t: _fit_at(p, q, t)[1], bracket=(ths[i] - h, ths[i], ths[i] + h),
                          tol=1e-12)
    th = float(opt.x) if opt.fun <= errs[i] else float(ths[i])
    th = (th + np.pi) % (2 * np.pi) - np.pi
    T, err = _fit_at(p, q, th)
    axis = shift = None
    c, s = np.cos(th), np.sin(th)
    A = np.eye(2) - np.array([[c, -s], [s, c]])
    if abs(np.linalg.det(A)) > 1e-10:
        qh = np.linalg.solve(A, T[:2])
        Q = np.array([qh[0], qh[1], 0.0])
        base = nil3.mul_arrays(Q, nil3.rotation(th).apply(nil3.nil3_inv(nil3.Nil3Point(*Q)).as_array()))
        axis, shift = qh, float(T[2] - base[2])
    return IsometryFit(th, T, err, axis, shift)
