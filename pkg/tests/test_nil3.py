import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nilsym import nil3
from nilsym.errors import TauMismatch

coord = st.floats(-3, 3, allow_nan=False)
point = st.tuples(coord, coord, coord).map(np.array)
angle = st.floats(-np.pi, np.pi, allow_nan=False)


def test_group_law_spot_value():
    p = nil3.Nil3Point(1.0, 2.0, 3.0)
    q = nil3.Nil3Point(-1.0, 0.5, 0.25)
    r = nil3.nil3_mul(p, q)
    # x3 + y3 + tau (x1 y2 - y1 x2) = 3.25 + 0.5 * (0.5 + 2)
    assert (r.x1, r.x2, r.x3) == pytest.approx((0.0, 2.5, 4.5))


def test_identity_and_inverse():
    p = nil3.Nil3Point(0.3, -1.2, 2.0)
    assert nil3.nil3_mul(p, nil3.IDENTITY) == p
    e = nil3.nil3_mul(p, nil3.nil3_inv(p))
    assert np.allclose(e.as_array(), 0)


def test_tau_mismatch():
    with pytest.raises(TauMismatch):
        nil3.nil3_mul(nil3.Nil3Point(0, 0, 0, tau=0.5), nil3.Nil3Point(0, 0, 0, tau=1.0))


@given(point, point, point)
def test_associativity(x, y, z):
    a = nil3.mul_arrays(nil3.mul_arrays(x, y), z)
    b = nil3.mul_arrays(x, nil3.mul_arrays(y, z))
    assert np.allclose(a, b, atol=1e-10)


@given(point, point)
def test_embedding_is_homomorphism(x, y):
    lhs = nil3.embed_arrays(nil3.mul_arrays(x, y))
    rhs = nil3.embed_arrays(x) @ nil3.embed_arrays(y)
    assert np.allclose(lhs, rhs, rtol=1e-10, atol=1e-9)
    assert np.allclose(nil3.unembed_arrays(nil3.embed_arrays(x)), x, atol=1e-12)


@given(point)
def test_exp_log_roundtrip(x):
    p = nil3.nil3_exp(x)
    assert np.allclose(nil3.nil3_log(p), x)


def test_exp_matches_matrix_exponential():
    from scipy.linalg import expm
    v = np.array([0.4, -0.7, 1.1])
    assert np.allclose(expm(nil3.algebra_matrix(v)), nil3.embed_arrays(nil3.nil3_exp(v).as_array()))


@given(point, point, point)
def test_levi_civita_metric_and_torsion(X, Y, Z):
    # metric compatibility on left-invariant fields: <nabla_Z X, Y> + <X, nabla_Z Y> = 0
    lc = nil3.levi_civita_arrays
    assert abs(np.dot(lc(Z, X), Y) + np.dot(X, lc(Z, Y))) < 1e-9
    # torsion free: nabla_X Y - nabla_Y X = [X, Y]
    assert np.allclose(lc(X, Y) - lc(Y, X), nil3.lie_bracket_arrays(X, Y), atol=1e-9)


def test_lie_bracket_basis():
    assert np.allclose(nil3.lie_bracket_arrays(nil3.E1.as_array(), nil3.E2.as_array()), [0, 0, 1])
    assert np.allclose(nil3.lie_bracket_arrays(nil3.E1.as_array(), nil3.E3.as_array()), 0)


def test_bracket_matches_matrix_commutator():
    X, Y = np.array([0.3, 1.0, -2.0]), np.array([-1.5, 0.2, 0.7])
    mX, mY = nil3.algebra_matrix(X), nil3.algebra_matrix(Y)
    assert np.allclose(nil3.algebra_coefficients(mX @ mY - mY @ mX), nil3.lie_bracket_arrays(X, Y))


def _field_bracket(F, G, x, h=1e-5):
    # [F, G] = DG.F - DF.G by central differences
    J = lambda V: np.stack([(V(x + h * e) - V(x - h * e)) / (2 * h) for e in np.eye(3)], axis=-1)
    return J(G) @ F(x) - J(F) @ G(x)


def test_killing_field_commutators():
    x = np.array([0.3, -0.8, 0.5])
    K = lambda i: (lambda p: nil3.killing_fields(p)[i])
    E1, E2, E3, E4 = (K(i) for i in range(4))
    # vector-field brackets are the negatives of the Lie algebra relations
    assert np.allclose(_field_bracket(E4, E1, x), -E2(x), atol=1e-8)
    assert np.allclose(_field_bracket(E4, E2, x), E1(x), atol=1e-8)
    assert np.allclose(_field_bracket(E1, E2, x), -E3(x), atol=1e-8)


def _metric_jacobian_defect(g, x, h=1e-6):
    J = np.stack([(g.apply(x + h * e) - g.apply(x - h * e)) / (2 * h) for e in np.eye(3)], axis=-1)
    y = g.apply(x)
    defect = 0.0
    for u in np.eye(3):
        for v in np.eye(3):
            defect = max(defect, abs(nil3.metric(x, u, v) - nil3.metric(y, J @ u, J @ v)))
    return defect


@given(point, point, angle)
def test_isometries_preserve_metric(x, T, th):
    g = nil3.IsometryElement(nil3.Nil3Point(*T), th)
    assert _metric_jacobian_defect(g, x) < 1e-5


@given(point, point, angle, angle, point)
def test_isometry_compose_and_inverse(T1, T2, a1, a2, x):
    g = nil3.IsometryElement(nil3.Nil3Point(*T1), a1)
    h = nil3.IsometryElement(nil3.Nil3Point(*T2), a2)
    assert np.allclose(g.compose(h).apply(x), g.apply(h.apply(x)), atol=1e-8)
    assert np.allclose(g.inverse().apply(g.apply(x)), x, atol=1e-8)


def test_helicoidal_motion_fixes_axis_and_shifts():
    q = nil3.Nil3Point(0.0, 1.2, 0.0)
    g = nil3.helicoidal_motion(0.72, np.pi / 3, q)
    on_axis = np.array([0.0, 1.2, 5.0])
    assert np.allclose(g.apply(on_axis), on_axis + [0, 0, 0.72 * np.pi / 3])
    # a full turn is a pure vertical translation by 2 pi mu
    full = nil3.helicoidal_motion(0.5, 2 * np.pi)
    assert np.allclose(full.apply(np.array([1.0, 2.0, 3.0])), [1.0, 2.0, 3.0 + np.pi])


def test_contact_form_vanishes_on_horizontal_lift():
    x = np.array([1.0, -2.0, 0.3])
    v = nil3.frame_to_coordinate(x, np.array([0.4, 0.9, 0.0]))
    assert abs(nil3.contact_form(x, v)) < 1e-14
    assert np.allclose(nil3.coordinate_to_frame(x, v), [0.4, 0.9, 0.0])
