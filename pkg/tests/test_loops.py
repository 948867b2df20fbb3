import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm

from helpers import random_sl2_loop, random_su11_loop, random_twisted
from nilsym import loops as L
from nilsym.errors import NonInvertibleLoop, NotTwisted, OutsideBigCell, TruncationOverflow
from nilsym.loops import TwistedLoop, birkhoff, loop_dlambda, loop_exp, loop_inv, loop_theta_derivative

seeds = st.integers(0, 2 ** 31)
unit = st.floats(-np.pi, np.pi).map(lambda t: complex(np.exp(1j * t)))


def test_untwisted_coefficients_rejected():
    with pytest.raises(NotTwisted):
        TwistedLoop.from_terms({1: np.eye(2)}, 4)


def test_constant_and_identity():
    I = TwistedLoop.identity(4)
    assert np.allclose(I(0.3 + 0.1j), np.eye(2))
    assert I.is_twisted()


@given(seeds, unit)
def test_product_evaluates_pointwise(seed, lam):
    rng = np.random.default_rng(seed)
    a, b = random_twisted(rng, 16, 2, 0.3), random_twisted(rng, 16, 2, 0.3)
    assert np.allclose((a @ b)(lam), a(lam) @ b(lam), atol=1e-12)


@given(seeds)
def test_product_associative_and_twisted(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (random_twisted(rng, 16, 2, 0.3) for _ in range(3))
    assert ((a @ b) @ c - a @ (b @ c)).norm() < 1e-12
    assert (a @ b).twist_defect() < 1e-14


@given(seeds)
def test_inverse_roundtrip(seed):
    rng = np.random.default_rng(seed)
    a = random_twisted(rng, 16, 3, 0.15) + TwistedLoop.identity(16).scale(5)
    ai = loop_inv(a)
    assert (a @ ai - TwistedLoop.identity(16)).norm() < 1e-10
    assert ai.is_twisted(1e-12)


def test_exact_inverse_for_unimodular_loops(rng):
    g = random_sl2_loop(rng, 16, (-1, 1))
    gi = loop_inv(g)
    assert (g @ gi - TwistedLoop.identity(16)).norm() < 1e-13


def test_singular_loop_not_invertible():
    z = TwistedLoop.from_terms({0: np.diag([1.0, 0.0])}, 4)
    with pytest.raises(NonInvertibleLoop):
        loop_inv(z)


def test_truncation_overflow_reported():
    a = TwistedLoop.from_terms({3: [[0, 1], [1, 0]], 0: np.eye(2)}, 4, tail_tol=1e-12)
    with pytest.raises(TruncationOverflow):
        a @ a @ a


@given(seeds, unit)
def test_dlambda_matches_difference_quotient(seed, lam):
    rng = np.random.default_rng(seed)
    a = random_twisted(rng, 8, 3, 0.5)
    h = 1e-6
    fd = (a(lam * (1 + h)) - a(lam * (1 - h))) / (2 * h * lam)
    assert np.allclose(loop_dlambda(a)(lam), fd, atol=1e-6)


@given(seeds)
def test_theta_derivative_preserves_twist(seed):
    rng = np.random.default_rng(seed)
    a = random_twisted(rng, 8, 3, 0.5)
    assert loop_theta_derivative(a).is_twisted()
    # the plain lambda-derivative swaps parities: lambda^1 (off-diagonal) feeds degree 0
    d = loop_dlambda(a)
    assert np.allclose(d.coeff(0), a.coeff(1))


@given(seeds, unit)
def test_loop_exp_matches_matrix_exponential(seed, lam):
    rng = np.random.default_rng(seed)
    x = random_twisted(rng, 24, 1, 0.7)
    assert np.allclose(loop_exp(x)(lam), expm(x(lam)), atol=1e-10)


def test_birkhoff_identity():
    fp = birkhoff(TwistedLoop.identity(8))
    assert (fp.plus - TwistedLoop.identity(8)).norm() < 1e-14
    assert (fp.minus - TwistedLoop.identity(8)).norm() < 1e-14


@given(seeds)
def test_birkhoff_roundtrip_and_idempotence(seed):
    g = random_sl2_loop(np.random.default_rng(seed))
    fp = birkhoff(g)
    assert (fp.plus @ loop_inv(fp.minus) - g).norm() < 1e-8
    # degrees of the factors
    n = g.truncation
    assert np.abs(fp.plus.coeffs[:n]).max() == 0
    assert np.abs(fp.minus.coeffs[n + 1:]).max() == 0
    assert np.allclose(fp.plus.coeff(0), np.eye(2))
    again = birkhoff(fp.plus @ loop_inv(fp.minus))
    assert (again.plus - fp.plus).norm() < 1e-10
    assert (again.minus - fp.minus).norm() < 1e-10


def test_birkhoff_of_pure_factors():
    rng = np.random.default_rng(7)
    minus = random_sl2_loop(rng, 16, (-1, -3, -1))
    fp = birkhoff(loop_inv(minus))
    assert (fp.minus - minus).norm() < 1e-10
    assert (fp.plus - TwistedLoop.identity(16)).norm() < 1e-10


def test_outside_big_cell():
    # omega0-type loop [[0, lambda], [-1/lambda, 0]] lies in the second cell
    w = TwistedLoop.from_terms({1: [[0, 1], [0, 0]], -1: [[0, 0], [-1, 0]]}, 8)
    with pytest.raises(OutsideBigCell):
        birkhoff(w)


@given(seeds)
def test_su11_loops_pass_reality_check(seed):
    rng = np.random.default_rng(seed)
    u = random_su11_loop(rng)
    lams = np.exp(1j * rng.uniform(-np.pi, np.pi, 8))
    assert L.su11_reality_defect(u, lams) < 1e-10
    assert np.all(L.su11_reality_defect_arrays(u.coeffs, lams) < 1e-10)
    star = L.su11_star(u.coeffs)
    assert np.abs(star - u.coeffs).max() < 1e-10


def test_json_roundtrip(rng):
    a = random_twisted(rng, 6, 3, 0.5)
    b = TwistedLoop.from_json(json.dumps(a.to_json()))
    assert (a - b).norm() == 0
    assert a.to_json()["truncation"] == 6
