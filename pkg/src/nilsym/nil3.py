"""Heisenberg group Nil3(tau): group law, metric, connection, embedding, isometries.

Points are stored in exponential coordinates, so the exponential map of the
Lie algebra is the identity on coefficient triples. Tangent vectors are
always expressed in the orthonormal left-invariant frame e1, e2, e3.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import TauMismatch

DEFAULT_TAU = 0.5


@dataclass(frozen=True)
class Nil3Point:
    x1: float
    x2: float
    x3: float
    tau: float = DEFAULT_TAU

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.x2, self.x3], dtype=float)

    @classmethod
    def from_array(cls, v, tau: float = DEFAULT_TAU) -> "Nil3Point":
        return cls(float(v[0]), float(v[1]), float(v[2]), tau)


IDENTITY = Nil3Point(0.0, 0.0, 0.0)


@dataclass(frozen=True)
class Nil3Tangent:
    """Complex coefficients of a tangent vector in the frame e1, e2, e3."""

    a1: complex
    a2: complex
    a3: complex

    def as_array(self) -> np.ndarray:
        return np.array([self.a1, self.a2, self.a3], dtype=complex)

    @classmethod
    def from_array(cls, v) -> "Nil3Tangent":
        return cls(complex(v[0]), complex(v[1]), complex(v[2]))

    def is_real(self, tol: float = 1e-12) -> bool:
        return bool(np.all(np.abs(self.as_array().imag) <= tol))


E1 = Nil3Tangent(1, 0, 0)
E2 = Nil3Tangent(0, 1, 0)
E3 = Nil3Tangent(0, 0, 1)


def _check_tau(p: Nil3Point, q: Nil3Point) -> float:
    if p.tau != q.tau:
        raise TauMismatch(f"tau mismatch: {p.tau} vs {q.tau}")
    return p.tau


# --- group law -------------------------------------------------------------

def mul_arrays(x, y, tau: float = DEFAULT_TAU) -> np.ndarray:
    """Group law on arrays of shape (..., 3)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    out = x + y
    out[..., 2] += tau * (x[..., 0] * y[..., 1] - y[..., 0] * x[..., 1])
    return out


def nil3_mul(p: Nil3Point, q: Nil3Point) -> Nil3Point:
    tau = _check_tau(p, q)
    return Nil3Point.from_array(mul_arrays(p.as_array(), q.as_array(), tau), tau)


def nil3_inv(p: Nil3Point) -> Nil3Point:
    return Nil3Point(-p.x1, -p.x2, -p.x3, p.tau)


def nil3_exp(v, tau: float = DEFAULT_TAU) -> Nil3Point:
    # exponential coordinates: exp(v1 e1 + v2 e2 + v3 e3) has coordinates v
    return Nil3Point.from_array(np.real(np.asarray(v)), tau)


def nil3_log(p: Nil3Point) -> np.ndarray:
    return p.as_array()


# --- matrix embedding ----------------------------------------------------------

def embed_arrays(x, tau: float = DEFAULT_TAU) -> np.ndarray:
    """The homomorphism into 4x4 real matrices, vectorized over (..., 3)."""
    x = np.asarray(x, dtype=float)
    m = np.zeros(x.shape[:-1] + (4, 4))
    m[..., 0, 0] = np.exp(x[..., 0])
    m[..., 1, 1] = m[..., 2, 2] = m[..., 3, 3] = 1.0
    m[..., 1, 2] = 2 * tau * x[..., 0]
    m[..., 1, 3] = x[..., 2] + tau * x[..., 0] * x[..., 1]
    m[..., 2, 3] = x[..., 1]
    return m


def unembed_arrays(m, tau: float = DEFAULT_TAU) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    x1 = np.log(m[..., 0, 0])
    x2 = m[..., 2, 3]
    x3 = m[..., 1, 3] - tau * x1 * x2
    return np.stack([x1, x2, x3], axis=-1)


def nil3_embed(p: Nil3Point) -> np.ndarray:
    return embed_arrays(p.as_array(), p.tau)


def algebra_matrix(v, tau: float = DEFAULT_TAU) -> np.ndarray:
    """Image of v1 e1 + v2 e2 + v3 e3 under the differential of the embedding.

    Works for complex coefficients and arrays of shape (..., 3).
    """
    v = np.asarray(v)
    m = np.zeros(v.shape[:-1] + (4, 4), dtype=v.dtype)
    m[..., 0, 0] = v[..., 0]
    m[..., 1, 2] = 2 * tau * v[..., 0]
    m[..., 2, 3] = v[..., 1]
    m[..., 1, 3] = v[..., 2]
    return m


def algebra_coefficients(m) -> np.ndarray:
    """Inverse of algebra_matrix (reads the e1, e2, e3 slots)."""
    m = np.asarray(m)
    return np.stack([m[..., 0, 0], m[..., 2, 3], m[..., 1, 3]], axis=-1)


# --- metric and connection -----------------------------------------------------

def contact_form(x, dx, tau: float = DEFAULT_TAU):
    """omega = dx3 + tau (x2 dx1 - x1 dx2) evaluated on coordinate vectors dx."""
    x = np.asarray(x)
    dx = np.asarray(dx)
    return dx[..., 2] + tau * (x[..., 1] * dx[..., 0] - x[..., 0] * dx[..., 1])


def coordinate_to_frame(x, dx, tau: float = DEFAULT_TAU) -> np.ndarray:
    """Coordinate components of a tangent at x -> frame coefficients."""
    dx = np.asarray(dx)
    return np.stack([dx[..., 0], dx[..., 1], contact_form(x, dx, tau)], axis=-1)


def frame_to_coordinate(x, a, tau: float = DEFAULT_TAU) -> np.ndarray:
    x = np.asarray(x)
    a = np.asarray(a)
    d3 = a[..., 2] - tau * (x[..., 1] * a[..., 0] - x[..., 0] * a[..., 1])
    return np.stack([a[..., 0], a[..., 1], d3], axis=-1)


def metric(x, u, v, tau: float = DEFAULT_TAU):
    """ds^2 = dx1^2 + dx2^2 + omega^2 on coordinate vectors u, v at x."""
    u = np.asarray(u)
    v = np.asarray(v)
    return (u[..., 0] * v[..., 0] + u[..., 1] * v[..., 1]
            + contact_form(x, u, tau) * contact_form(x, v, tau))


def inner(X, Y):
    """Bilinear (not Hermitian) pairing in the orthonormal frame."""
    return np.sum(np.asarray(X) * np.asarray(Y), axis=-1)


def levi_civita_arrays(X, Y, tau: float = DEFAULT_TAU) -> np.ndarray:
    """nabla_X Y for left-invariant X, Y given by frame coefficients."""
    X = np.asarray(X)
    Y = np.asarray(Y)
    a1, a2, a3 = X[..., 0], X[..., 1], X[..., 2]
    b1, b2, b3 = Y[..., 0], Y[..., 1], Y[..., 2]
    c1 = tau * (a2 * b3 + a3 * b2)
    c2 = -tau * (a1 * b3 + a3 * b1)
    c3 = tau * (a1 * b2 - a2 * b1)
    return np.stack([c1, c2, c3], axis=-1)


def brace_arrays(X, Y, tau: float = DEFAULT_TAU) -> np.ndarray:
    return levi_civita_arrays(X, Y, tau) + levi_civita_arrays(Y, X, tau)


def levi_civita(X: Nil3Tangent, Y: Nil3Tangent, tau: float = DEFAULT_TAU) -> Nil3Tangent:
    return Nil3Tangent.from_array(levi_civita_arrays(X.as_array(), Y.as_array(), tau))


def brace(X: Nil3Tangent, Y: Nil3Tangent, tau: float = DEFAULT_TAU) -> Nil3Tangent:
    return Nil3Tangent.from_array(brace_arrays(X.as_array(), Y.as_array(), tau))


def lie_bracket_arrays(X, Y, tau: float = DEFAULT_TAU) -> np.ndarray:
    X = np.asarray(X)
    Y = np.asarray(Y)
    z = np.zeros(np.broadcast(X[..., 0], Y[..., 0]).shape, dtype=np.result_type(X, Y))
    c3 = 2 * tau * (X[..., 0] * Y[..., 1] - X[..., 1] * Y[..., 0])
    return np.stack([z, z, c3], axis=-1)


def vector_product(X: Nil3Tangent, Y: Nil3Tangent) -> Nil3Tangent:
    return Nil3Tangent.from_array(np.cross(X.as_array(), Y.as_array()))


# --- isometries ------------------------------------------------------------

@dataclass(frozen=True)
class IsometryElement:
    """Element (translation, e^{i angle}) of the identity component Nil3 x| U(1).

    Acts by x -> translation . rot(angle) x, where rot turns (x1, x2) and
    fixes x3.
    """

    translation: Nil3Point = IDENTITY
    angle: float = 0.0

    def apply(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        c, s = np.cos(self.angle), np.sin(self.angle)
        r = np.stack([c * x[..., 0] - s * x[..., 1],
                      s * x[..., 0] + c * x[..., 1],
                      x[..., 2]], axis=-1)
        return mul_arrays(self.translation.as_array(), r, self.translation.tau)

    def compose(self, other: "IsometryElement") -> "IsometryElement":
        """self after other."""
        t = self.apply(other.translation.as_array())
        return IsometryElement(Nil3Point.from_array(t, self.translation.tau),
                               self.angle + other.angle)

    def inverse(self) -> "IsometryElement":
        c, s = np.cos(-self.angle), np.sin(-self.angle)
        t = nil3_inv(self.translation).as_array()
        rt = np.array([c * t[0] - s * t[1], s * t[0] + c * t[1], t[2]])
        return IsometryElement(Nil3Point.from_array(rt, self.translation.tau), -self.angle)


def apply_isometry(g: IsometryElement, p: Nil3Point) -> Nil3Point:
    return Nil3Point.from_array(g.apply(p.as_array()), p.tau)


def rotation(theta: float) -> IsometryElement:
    return IsometryElement(IDENTITY, theta)


def left_translation(p: Nil3Point) -> IsometryElement:
    return IsometryElement(p, 0.0)


def helicoidal_motion(mu: float, t: float, axis_point: Nil3Point | None = None) -> IsometryElement:
    """Screw motion ((0,0,mu t), e^{it}); optionally about a vertical axis through axis_point."""
    g = IsometryElement(Nil3Point(0.0, 0.0, mu * t), t)
    if axis_point is None:
        return g
    q = left_translation(axis_point)
    return q.compose(g).compose(q.inverse())


def killing_fields(x) -> np.ndarray:
    """Coordinate components of E1..E4 at x; shape (4, ..., 3), tau = 1/2.

    E1..E3 generate left translations, E4 the rotation about the x3-axis.
    """
    x = np.asarray(x, dtype=float)
    x1, x2 = x[..., 0], x[..., 1]
    one, zero = np.ones_like(x1), np.zeros_like(x1)
    k1 = np.stack([one, zero, x2 / 2], axis=-1)
    k2 = np.stack([zero, one, -x1 / 2], axis=-1)
    k3 = np.stack([zero, zero, one], axis=-1)
    k4 = np.stack([-x2, x1, zero], axis=-1)
    return np.stack([k1, k2, k3, k4])
