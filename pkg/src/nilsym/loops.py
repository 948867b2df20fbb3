"""Truncated twisted 2x2 matrix Laurent loops in the spectral parameter lambda.

A loop is a dense coefficient table over degrees [-N, N]. Most routines come
in two flavours: methods on TwistedLoop for single loops, and module-level
array functions working on stacks of coefficient tables of shape
(..., 2N+1, 2, 2) so that whole grids can be processed at once.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .errors import NonInvertibleLoop, NotTwisted, OutsideBigCell, TruncationOverflow

DEFAULT_N = 16
DEFAULT_TAIL_TOL = 1e-10
BIG_CELL_COND = 1e10
TWIST_TOL = 1e-9

SIGMA3 = np.diag([1.0 + 0j, -1.0 + 0j])
IDENTITY2 = np.eye(2, dtype=complex)


# --- array-level kernels ---------------------------------------------------

def _n_of(c) -> int:
    return (c.shape[-3] - 1) // 2


def coeff_norm(c) -> np.ndarray:
    """Max over degrees of the Frobenius norm; reduces the last three axes."""
    c = np.asarray(c)
    if c.shape[-3] == 0:
        return np.zeros(c.shape[:-3])
    return np.sqrt(np.sum(np.abs(c) ** 2, axis=(-2, -1))).max(axis=-1)


def resize(c, n: int):
    """Pad or cut a coefficient stack to degrees [-n, n]; returns (stack, dropped mass)."""
    c = np.asarray(c)
    m = _n_of(c)
    if n >= m:
        pad = [(0, 0)] * (c.ndim - 3) + [(n - m, n - m), (0, 0), (0, 0)]
        return np.pad(c, pad), np.zeros(c.shape[:-3])
    keep = c[..., m - n:m + n + 1, :, :]
    dropped = np.concatenate([c[..., :m - n, :, :], c[..., m + n + 1:, :, :]], axis=-3)
    return keep, coeff_norm(dropped)


def mat2(a, b):
    """Batched 2x2 product written out entrywise (faster than matmul for 2x2)."""
    out = np.empty(np.broadcast_shapes(a.shape, b.shape), dtype=np.result_type(a, b))
    out[..., 0, 0] = a[..., 0, 0] * b[..., 0, 0] + a[..., 0, 1] * b[..., 1, 0]
    out[..., 0, 1] = a[..., 0, 0] * b[..., 0, 1] + a[..., 0, 1] * b[..., 1, 1]
    out[..., 1, 0] = a[..., 1, 0] * b[..., 0, 0] + a[..., 1, 1] * b[..., 1, 0]
    out[..., 1, 1] = a[..., 1, 0] * b[..., 0, 1] + a[..., 1, 1] * b[..., 1, 1]
    return out


def conv(a, b):
    """Exact Cauchy product of coefficient stacks; output degrees [-(Na+Nb), Na+Nb]."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    la, lb = a.shape[-3], b.shape[-3]
    if min(la, lb) <= 3:
        # short factor: direct sum is cheaper and exact
        out_shape = np.broadcast_shapes(a.shape[:-3], b.shape[:-3]) + (la + lb - 1, 2, 2)
        out = np.zeros(out_shape, dtype=complex)
        if la <= lb:
            for i in range(la):
                ai = a[..., i:i + 1, :, :]
                if np.any(ai):
                    out[..., i:i + lb, :, :] += mat2(ai, b)
        else:
            for j in range(lb):
                bj = b[..., j:j + 1, :, :]
                if np.any(bj):
                    out[..., j:j + la, :, :] += mat2(a, bj)
        return out
    L = la + lb - 1
    fa = np.fft.fft(a, n=L, axis=-3)
    fb = np.fft.fft(b, n=L, axis=-3)
    return np.fft.ifft(mat2(fa, fb), axis=-3)


def mul_trunc(a, b, n: Optional[int] = None):
    """Product truncated to degrees [-n, n]; returns (stack, dropped mass)."""
    if n is None:
        n = max(_n_of(np.asarray(a)), _n_of(np.asarray(b)))
    return resize(conv(a, b), n)


def evaluate(c, lam) -> np.ndarray:
    """Laurent sum at lam (scalar or array broadcast against the stack)."""
    c = np.asarray(c)
    n = _n_of(c)
    deg = np.arange(-n, n + 1)
    lam = np.asarray(lam, dtype=complex)
    powers = lam[..., None] ** deg
    return np.einsum("...d,...dij->...ij", powers, c)


def dlambda(c) -> np.ndarray:
    """Exact lambda-derivative; output degrees [-(N+1), N+1]."""
    c = np.asarray(c)
    n = _n_of(c)
    deg = np.arange(-n, n + 1)
    out = np.zeros(c.shape[:-3] + (2 * n + 3, 2, 2), dtype=complex)
    out[..., 0:2 * n + 1, :, :] = deg[:, None, None] * c
    return out


def lambda_dlambda(c) -> np.ndarray:
    """lambda d/dlambda keeps the degree (and hence the twist)."""
    c = np.asarray(c)
    n = _n_of(c)
    return np.arange(-n, n + 1)[:, None, None] * c


def adjugate(c) -> np.ndarray:
    c = np.asarray(c)
    out = np.empty_like(c)
    out[..., 0, 0] = c[..., 1, 1]
    out[..., 1, 1] = c[..., 0, 0]
    out[..., 0, 1] = -c[..., 0, 1]
    out[..., 1, 0] = -c[..., 1, 0]
    return out


def _sconv(x, y):
    L = x.shape[-1] + y.shape[-1] - 1
    return np.fft.ifft(np.fft.fft(x, n=L, axis=-1) * np.fft.fft(y, n=L, axis=-1), axis=-1)


def det_loop(c) -> np.ndarray:
    """Scalar Laurent coefficients of the determinant, degrees [-2N, 2N]."""
    c = np.asarray(c, dtype=complex)
    return (_sconv(c[..., 0, 0], c[..., 1, 1]) - _sconv(c[..., 0, 1], c[..., 1, 0]))


def reflect_conj_transpose(c) -> np.ndarray:
    """Coefficients of lambda -> conj(g(1/conj(lambda)))^t."""
    c = np.asarray(c)
    return np.conj(np.swapaxes(c[..., ::-1, :, :], -1, -2))


def twist_defect(c) -> np.ndarray:
    """Largest entry violating the even-diagonal / odd-off-diagonal pattern."""
    c = np.asarray(c)
    n = _n_of(c)
    deg = np.arange(-n, n + 1)
    even = (deg % 2 == 0)
    bad = np.zeros(c.shape[:-3])
    if even.any():
        e = c[..., even, :, :]
        bad = np.maximum(bad, np.abs(e[..., [0, 1], [1, 0]]).max(axis=(-2, -1)))
    if (~even).any():
        o = c[..., ~even, :, :]
        bad = np.maximum(bad, np.abs(o[..., [0, 1], [0, 1]]).max(axis=(-2, -1)))
    return bad


def identity_stack(n: int, shape=()) -> np.ndarray:
    c = np.zeros(tuple(shape) + (2 * n + 1, 2, 2), dtype=complex)
    c[..., n, :, :] = IDENTITY2
    return c


def sample_inverse(c, n: int, oversample: int = 8):
    """Inverse by pointwise inversion on roots of unity; returns (stack, dropped mass).

    Equivalent to solving the circulant (periodized) convolution system; the
    aliasing error is negligible once the inverse's coefficients decay.
    """
    c = np.asarray(c, dtype=complex)
    m = _n_of(c)
    K = oversample * (max(m, n) + 1)
    L = 2 * K + 1
    # coefficient of degree d sits at FFT index d mod L
    buf = np.zeros(c.shape[:-3] + (L, 2, 2), dtype=complex)
    deg = np.arange(-m, m + 1)
    buf[..., deg % L, :, :] = c
    vals = np.fft.fft(buf, axis=-3)  # values at exp(-2 pi i j / L)
    d = vals[..., 0, 0] * vals[..., 1, 1] - vals[..., 0, 1] * vals[..., 1, 0]
    scale = np.sqrt(np.sum(np.abs(vals) ** 2, axis=(-2, -1)))
    if np.any(np.abs(d) <= 1e-12 * np.maximum(scale, 1e-300) ** 2):
        raise NonInvertibleLoop("loop is singular on the unit circle")
    inv_vals = adjugate(vals) / d[..., None, None]
    inv = np.fft.ifft(inv_vals, axis=-3)
    full_deg = np.arange(-K, K + 1)
    full = inv[..., full_deg % L, :, :]
    return resize(full, n)


def loop_inverse_array(c, n: Optional[int] = None, tail_tol: float = DEFAULT_TAIL_TOL):
    """Inverse of a coefficient stack; exact adjugate when det is a nonzero constant."""
    c = np.asarray(c, dtype=complex)
    if n is None:
        n = _n_of(c)
    dl = det_loop(c)
    nd = (dl.shape[-1] - 1) // 2
    d0 = dl[..., nd]
    off = np.abs(np.delete(dl, nd, axis=-1)).max(axis=-1) if dl.shape[-1] > 1 else np.zeros(d0.shape)
    if np.all(np.abs(d0) > 1e-12) and np.all(off <= 1e-13 * np.maximum(1.0, np.abs(d0))):
        inv = adjugate(c) / d0[..., None, None, None]
        return resize(inv, n)
    return sample_inverse(c, n)


def su11_star(c, n: Optional[int] = None) -> np.ndarray:
    """The involution g -> sigma3 conj(g(1/conj lambda))^{t,-1} sigma3 on coefficient stacks."""
    c = np.asarray(c, dtype=complex)
    if n is None:
        n = _n_of(c)
    h = reflect_conj_transpose(c)
    hinv, _ = loop_inverse_array(h, n)
    return SIGMA3 @ hinv @ SIGMA3


def birkhoff_arrays(a, cond_max: float = BIG_CELL_COND):
    """Factor a = plus . minus^{-1} for a stack of loops.

    Returns (plus, minus, ok) where ok flags loops that lie numerically in
    the big cell; factors of failed entries are filled with NaN.
    The minus coefficients m_0, m_{-1}, ..., m_{-N} solve the block Toeplitz
    system (a . minus)_k = delta_{k0} I for k in [-N, 0].
    """
    a = np.asarray(a, dtype=complex)
    n = _n_of(a)
    batch = a.shape[:-3]
    flat = a.reshape((-1, 2 * n + 1, 2, 2))
    P = flat.shape[0]
    size = 2 * (n + 1)
    # block (row r, col s) with k = -r, j = -s uses a_{k-j} = a_{s-r}
    T = np.zeros((P, size, size), dtype=complex)
    for r in range(n + 1):
        for s in range(n + 1):
            T[:, 2 * r:2 * r + 2, 2 * s:2 * s + 2] = flat[:, n + s - r]
    rhs = np.zeros((size, 2), dtype=complex)
    rhs[0:2, :] = IDENTITY2
    cond = np.linalg.cond(T)
    ok = np.isfinite(cond) & (cond < cond_max)
    minus = np.full((P, 2 * n + 1, 2, 2), np.nan, dtype=complex)
    plus = np.full((P, 2 * n + 1, 2, 2), np.nan, dtype=complex)
    if ok.any():
        sol = np.linalg.solve(T[ok], np.broadcast_to(rhs, (int(ok.sum()), size, 2)))
        m = np.zeros((int(ok.sum()), 2 * n + 1, 2, 2), dtype=complex)
        for s in range(n + 1):
            m[:, n - s] = sol[:, 2 * s:2 * s + 2, :]
        prod = conv(flat[ok], m)  # degrees [-2N, 2N]
        p = np.zeros_like(m)
        p[:, n:] = prod[:, 2 * n:3 * n + 1]
        p[:, n] = IDENTITY2
        minus[ok] = m
        plus[ok] = p
    return (plus.reshape(batch + (2 * n + 1, 2, 2)),
            minus.reshape(batch + (2 * n + 1, 2, 2)),
            ok.reshape(batch))


# --- single-loop API -------------------------------------------------------

class TwistedLoop:
    """Truncated Laurent loop sum_{|d|<=N} c_d lambda^d with 2x2 complex c_d.

    tail records the largest discarded coefficient norm accumulated by
    truncating operations.
    """

    __slots__ = ("coeffs", "tail_tol", "tail")

    def __init__(self, coeffs, tail_tol: float = DEFAULT_TAIL_TOL, tail: float = 0.0, check: bool = True):
        c = np.array(coeffs, dtype=complex)
        if c.ndim != 3 or c.shape[1:] != (2, 2) or c.shape[0] % 2 != 1:
            raise ValueError("coeffs must have shape (2N+1, 2, 2)")
        if check:
            scale = max(1.0, float(np.nanmax(np.abs(c), initial=0.0)))
            if float(twist_defect(c)) > TWIST_TOL * scale:
                raise NotTwisted("even degrees must be diagonal and odd degrees off-diagonal")
        c.setflags(write=False)
        self.coeffs = c
        self.tail_tol = float(tail_tol)
        self.tail = float(tail)

    # construction
    @classmethod
    def zeros(cls, n: int = DEFAULT_N, **kw) -> "TwistedLoop":
        return cls(np.zeros((2 * n + 1, 2, 2)), **kw)

    @classmethod
    def identity(cls, n: int = DEFAULT_N, **kw) -> "TwistedLoop":
        return cls(identity_stack(n), **kw)

    @classmethod
    def constant(cls, m, n: int = DEFAULT_N, **kw) -> "TwistedLoop":
        return cls.from_terms({0: m}, n, **kw)

    @classmethod
    def from_terms(cls, terms: dict, n: int = DEFAULT_N, **kw) -> "TwistedLoop":
        c = np.zeros((2 * n + 1, 2, 2), dtype=complex)
        for d, m in terms.items():
            if abs(d) > n:
                raise TruncationOverflow(f"degree {d} outside [-{n}, {n}]")
            c[d + n] = np.asarray(m, dtype=complex)
        return cls(c, **kw)

    @property
    def truncation(self) -> int:
        return _n_of(self.coeffs)

    def coeff(self, d: int) -> np.ndarray:
        n = self.truncation
        if abs(d) > n:
            return np.zeros((2, 2), dtype=complex)
        return self.coeffs[d + n]

    def _wrap(self, c, dropped=0.0, tail_tol=None) -> "TwistedLoop":
        tol = self.tail_tol if tail_tol is None else tail_tol
        tail = max(self.tail, float(dropped))
        if dropped > tol:
            raise TruncationOverflow(f"discarded tail {float(dropped):.3e} exceeds {tol:.1e}")
        return TwistedLoop(c, tol, tail)

    def resized(self, n: int) -> "TwistedLoop":
        c, dropped = resize(self.coeffs, n)
        return self._wrap(c, dropped)

    # arithmetic
    def __matmul__(self, other: "TwistedLoop") -> "TwistedLoop":
        return loop_mul(self, other)

    def __add__(self, other: "TwistedLoop") -> "TwistedLoop":
        n = max(self.truncation, other.truncation)
        return TwistedLoop(resize(self.coeffs, n)[0] + resize(other.coeffs, n)[0],
                           min(self.tail_tol, other.tail_tol), max(self.tail, other.tail))

    def __sub__(self, other: "TwistedLoop") -> "TwistedLoop":
        return self + other.scale(-1)

    def scale(self, s: complex) -> "TwistedLoop":
        return TwistedLoop(self.coeffs * s, self.tail_tol, self.tail)

    def left(self, m) -> "TwistedLoop":
        return TwistedLoop(np.asarray(m) @ self.coeffs, self.tail_tol, self.tail)

    def right(self, m) -> "TwistedLoop":
        return TwistedLoop(self.coeffs @ np.asarray(m), self.tail_tol, self.tail)

    def norm(self) -> float:
        return float(coeff_norm(self.coeffs))

    def __call__(self, lam) -> np.ndarray:
        return evaluate(self.coeffs, lam)

    def twist_defect(self) -> float:
        return float(twist_defect(self.coeffs))

    def is_twisted(self, tol: float = 1e-12) -> bool:
        return self.twist_defect() <= tol

    def __repr__(self) -> str:
        nz = [d for d in range(-self.truncation, self.truncation + 1)
              if np.abs(self.coeff(d)).max() > 0]
        return f"TwistedLoop(N={self.truncation}, nonzero degrees={nz})"

    # serialization
    def to_json(self) -> dict:
        n = self.truncation
        out = []
        for d in range(-n, n + 1):
            m = self.coeff(d)
            if np.abs(m).max() == 0:
                continue
            out.append({"deg": d, "m": [[float(v.real), float(v.imag)] for v in m.reshape(-1)]})
        return {"truncation": n, "coeffs": out}

    @classmethod
    def from_json(cls, obj, **kw) -> "TwistedLoop":
        if isinstance(obj, str):
            obj = json.loads(obj)
        n = int(obj["truncation"])
        terms = {}
        for entry in obj["coeffs"]:
            vals = [complex(re, im) for re, im in entry["m"]]
            terms[int(entry["deg"])] = np.array(vals).reshape(2, 2)
        return cls.from_terms(terms, n, **kw)


@dataclass(frozen=True)
class FactorPair:
    plus: TwistedLoop
    minus: TwistedLoop


def loop_mul(a: TwistedLoop, b: TwistedLoop) -> TwistedLoop:
    n = max(a.truncation, b.truncation)
    c, dropped = mul_trunc(a.coeffs, b.coeffs, n)
    tol = min(a.tail_tol, b.tail_tol)
    if dropped > tol:
        raise TruncationOverflow(f"discarded tail {float(dropped):.3e} exceeds {tol:.1e}")
    return TwistedLoop(c, tol, max(a.tail, b.tail, float(dropped)))


def loop_inv(a: TwistedLoop) -> TwistedLoop:
    c, dropped = loop_inverse_array(a.coeffs, a.truncation, a.tail_tol)
    inv = TwistedLoop(c, a.tail_tol, max(a.tail, float(dropped)))
    check, _ = mul_trunc(a.coeffs, inv.coeffs, a.truncation)
    err = float(coeff_norm(check - identity_stack(a.truncation)))
    if not np.isfinite(err):
        raise NonInvertibleLoop("inverse is not finite")
    if err > max(a.tail_tol, 1e3 * np.finfo(float).eps * max(1.0, a.norm() * inv.norm())):
        raise NonInvertibleLoop(f"truncated inverse misses identity by {err:.3e}")
    return inv


def loop_eval(a: TwistedLoop, lam: complex) -> np.ndarray:
    return a(lam)


def loop_dlambda(a: TwistedLoop) -> TwistedLoop:
    """Exact derivative; the truncation grows by one so nothing is dropped.

    The derivative of a twisted loop is anti-twisted (parities swap); use
    loop_theta_derivative for a twist-preserving derivative.
    """
    return TwistedLoop(dlambda(a.coeffs), a.tail_tol, a.tail, check=False)


def loop_theta_derivative(a: TwistedLoop) -> TwistedLoop:
    """i lambda d/dlambda, the derivative along lambda = e^{i theta}."""
    return TwistedLoop(1j * lambda_dlambda(a.coeffs), a.tail_tol, a.tail)


def su11_reality_defect(a: TwistedLoop, samples: Iterable[complex]) -> float:
    worst = 0.0
    for lam in samples:
        lam = complex(lam)
        g = a(lam)
        h = a(1.0 / np.conj(lam))
        hs = np.conj(h).T
        if abs(np.linalg.det(hs)) < 1e-300:
            raise NonInvertibleLoop(f"singular evaluation at lambda={lam}")
        star = SIGMA3 @ np.linalg.inv(hs) @ SIGMA3
        worst = max(worst, float(np.linalg.norm(star - g)))
    return worst


def su11_reality_defect_arrays(c, samples: Iterable[complex]) -> np.ndarray:
    """Vectorized reality defect of coefficient stacks (..., 2N+1, 2, 2), max over samples."""
    c = np.asarray(c, dtype=complex)
    worst = np.zeros(c.shape[:-3])
    for lam in samples:
        lam = complex(lam)
        g = evaluate(c, lam)
        hs = np.conj(np.swapaxes(evaluate(c, 1.0 / np.conj(lam)), -1, -2))
        det = hs[..., 0, 0] * hs[..., 1, 1] - hs[..., 0, 1] * hs[..., 1, 0]
        star = SIGMA3 @ (adjugate(hs) / det[..., None, None]) @ SIGMA3
        worst = np.maximum(worst, np.linalg.norm(star - g, axis=(-2, -1)))
    return worst


def loop_exp(x: TwistedLoop, n: Optional[int] = None) -> TwistedLoop:
    """exp of a loop by scaling and squaring with a Taylor kernel."""
    n = x.truncation if n is None else n
    c, _ = resize(x.coeffs, n)
    nrm = float(np.sum(np.sqrt(np.sum(np.abs(c) ** 2, axis=(-2, -1)))))
    s = max(0, int(np.ceil(np.log2(max(nrm, 1e-300)))) + 1)
    c = c / 2 ** s
    term = identity_stack(n)
    total = identity_stack(n)
    for k in range(1, 30):
        term, _ = mul_trunc(term, c, n)
        term = term / k
        total = total + term
        if coeff_norm(term) < 1e-18:
            break
    dropped = 0.0
    for _ in range(s):
        total, d = mul_trunc(total, total, n)
        dropped = max(dropped, float(d))
    return x._wrap(total, dropped)


def birkhoff(a: TwistedLoop, cond_max: float = BIG_CELL_COND) -> FactorPair:
    plus, minus, ok = birkhoff_arrays(a.coeffs, cond_max)
    if not bool(ok):
        raise OutsideBigCell("block Toeplitz system is singular or ill-conditioned")
    return FactorPair(TwistedLoop(plus, a.tail_tol, a.tail), TwistedLoop(minus, a.tail_tol, a.tail))
