import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nilsym import nil3
from nilsym.catalog import (HELICOID_N, REFERENCE_B, catalog_potential, catenoid_initial, closed_form,
                            fit_isometry, helicoid_monodromy, helicoid_symmetry, parse_preset,
                            reference_monodromy)
from nilsym.errors import ParameterOutOfRange, UnknownPreset
from nilsym.grid import Grid
from nilsym.loops import su11_reality_defect
from nilsym.sym import mesh_report, sample_surface


def test_parse_presets():
    e = parse_preset("helicoid:a=0.3,k=0.5")
    assert e.a == 0.3 and e.k == 0.5 and e.truncation == HELICOID_N
    assert parse_preset("umbrella").label() == "umbrella"
    assert parse_preset(" catenoid : a=0.2, t=0.1 ").params == {"a": 0.2, "t": 0.1}


@pytest.mark.parametrize("text,err", [
    ("sphere", UnknownPreset), ("helicoid:b=1,a=1", UnknownPreset), ("helicoid:a=x", UnknownPreset),
    ("helicoid:a", UnknownPreset), ("", UnknownPreset), ("helicoid", ParameterOutOfRange),
    ("helicoid:a=0", ParameterOutOfRange), ("catenoid:t=1", ParameterOutOfRange),
])
def test_bad_presets(text, err):
    with pytest.raises(err):
        parse_preset(text)


def test_umbrella_closed_form_domain():
    with pytest.raises(ParameterOutOfRange):
        closed_form(parse_preset("umbrella"), 1.0)
    with pytest.raises(ParameterOutOfRange):
        closed_form(parse_preset("helicoid:a=1"), 0.1)


def test_reference_B_table():
    assert REFERENCE_B["umbrella"]({}) == 0
    assert REFERENCE_B["paraboloid"]({}) == 0.125
    assert REFERENCE_B["helicoid"]({"a": 0.3}) == pytest.approx(-0.18)


def test_catenoid_initial_is_su11():
    u = catenoid_initial(0.7, 8)
    lams = np.exp(1j * np.linspace(0, 6, 7))
    assert su11_reality_defect(u, lams) < 1e-14
    for lam in lams:
        assert np.linalg.det(u(lam)) == pytest.approx(1)


@pytest.mark.parametrize("a,k", [(0.3, 0.5), (0.3, 1.0), (0.7, 0.25), (-0.2, 1.5)])
def test_monodromy_matches_reference(a, k):
    got = helicoid_monodromy(a, k)
    for g, p in zip(got, reference_monodromy(a, k)):
        assert np.abs(g - p).max() < 1e-9


def _cosh_oracle(a, k, lam):
    """exp(2 pi i k D) from D^2 = s^2 I, s^2 = 1/4 + a^2 (1/lam - lam)^2."""
    m = a * (1 / lam - lam)
    D = np.array([[0.5, m], [m, -0.5]])
    s = np.sqrt(0.25 + m * m + 0j)
    t = 2j * np.pi * k
    return np.cosh(t * s) * np.eye(2) + np.sinh(t * s) / s * D


# truncation 48 resolves exp(2 pi i k D) while 2 pi k a stays moderate
@given(st.floats(0.05, 0.4), st.floats(0.1, 0.8), st.floats(-np.pi, np.pi))
def test_monodromy_matches_cosh_oracle(a, k, th):
    lam = np.exp(1j * th)
    M, _, _ = helicoid_monodromy(a, k, lam)
    assert np.abs(M - _cosh_oracle(a, k, lam)).max() < 1e-8 * max(1, np.abs(M).max())


def test_monodromy_rejects_zero_a():
    with pytest.raises(ParameterOutOfRange):
        helicoid_monodromy(0.0, 1.0)


@pytest.mark.parametrize("a,k", [(0.3, 0.5), (0.2, 1.0)])
def test_helicoid_period_shift_is_screw_motion(a, k):
    e = parse_preset(f"helicoid:a={a},k={k}")
    spec = catalog_potential(e)
    g = Grid(0.2 + 0.1j, (0.1, 0.1), (3, 3))
    (m0,), _ = sample_surface(spec, g, [1.0], n=e.truncation, compute_H=False)
    (m1,), _ = sample_surface(spec, g.shifted(2j * np.pi * k), [1.0], n=e.truncation, compute_H=False)
    img = helicoid_symmetry(a, k).apply(m0.points)
    assert np.abs(img - m1.points).max() < 1e-8
    fit = fit_isometry(m0.points, m1.points)
    assert fit.residual < 1e-7
    if fit.axis is not None:
        assert np.allclose(fit.axis, [0, 4 * a], atol=1e-6)
    else:
        # whole turn: pure vertical translation by the pitch
        assert np.allclose(fit.translation, [0, 0, 8 * a * a * 2 * np.pi * k], atol=1e-6)


angles = st.floats(-3.0, 3.0)
coords = st.floats(-2, 2)


@given(angles, coords, coords, coords)
def test_fit_isometry_recovers_random_element(th, t1, t2, t3):
    rng = np.random.default_rng(7)
    p = rng.normal(size=(12, 3))
    g = nil3.IsometryElement(nil3.Nil3Point(t1, t2, t3), th)
    fit = fit_isometry(p, g.apply(p))
    assert fit.residual < 1e-8
    assert abs(np.angle(np.exp(1j * (fit.angle - th)))) < 1e-7
    assert np.allclose(fit.translation, [t1, t2, t3], atol=1e-6)


def test_fit_isometry_reports_misfit():
    rng = np.random.default_rng(3)
    p = rng.normal(size=(12, 3))
    assert fit_isometry(p, p * 1.3).residual > 1e-2


def test_catenoid_slot_is_minimal_and_su11():
    e = parse_preset("catenoid:a=0.3,t=0.5")
    g = Grid(0.2 + 0.1j, (0.1, 0.1), (21, 21))
    meshes, ff = sample_surface(catalog_potential(e), g, [1.0, 1j], n=e.truncation)
    for m in meshes:
        assert mesh_report(m)["mean_H_max"] < 1e-3
    assert np.abs(meshes[0].support - meshes[1].support).max() < 1e-9
    assert su11_reality_defect(ff.loop((10, 10)), [1, 1j, np.exp(0.4j)]) < 1e-9


def test_catenoid_initial_changes_surface():
    g = Grid(0.2 + 0.1j, (0.1, 0.1), (3, 3))
    pts = []
    for text in ("helicoid:a=0.3", "catenoid:a=0.3,t=0.5"):
        e = parse_preset(text)
        (m,), _ = sample_surface(catalog_potential(e), g, [1.0], n=e.truncation, compute_H=False)
        pts.append(m.points)
    # not an isometric copy of the helicoid patch
    assert fit_isometry(pts[0], pts[1]).residual > 1e-3
