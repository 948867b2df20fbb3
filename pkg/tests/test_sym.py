import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nilsym.catalog import catalog_potential, closed_form, closed_form_arrays, parse_preset
from nilsym.errors import IntegrabilityError, SingularMatrix
from nilsym.grid import Grid
from nilsym.loops import SIGMA3, TwistedLoop
from nilsym.spinors import spinors_to_phi
from nilsym.sym import (CAL_E1, CAL_E2, CAL_E3, SurfaceMesh, alignment_residual, associated_family_report,
                        direct_immersion, fit_quadric, frame_gauss_map, minkowski_inner, mesh_report,
                        su11_coordinates, su11_matrix, sym_arrays, sym_point)

real = st.floats(-5, 5, allow_nan=False)


def test_su11_basis_signature():
    E = (CAL_E1, CAL_E2, CAL_E3)
    G = np.array([[minkowski_inner(a, b) for b in E] for a in E])
    assert np.allclose(G, np.diag([1, 1, -1]))
    for X in E:
        # X in su(1,1): X^* sigma3 + sigma3 X = 0, trace free
        assert np.allclose(X.conj().T @ SIGMA3 + SIGMA3 @ X, 0)
        assert abs(np.trace(X)) < 1e-15


@given(real, real, real)
def test_su11_coordinates_roundtrip(a, b, c):
    x = np.array([a, b, c])
    assert np.allclose(su11_coordinates(su11_matrix(x)), x)


def test_constant_diagonal_frame_maps_to_origin():
    for F in (TwistedLoop.identity(8), TwistedLoop.constant(np.diag([np.exp(0.3j), np.exp(-0.3j)]), 8)):
        p = sym_point(F, np.exp(0.2j))
        assert np.allclose(p.as_array(), 0, atol=1e-14)


def test_sym_point_rejects_singular_frame():
    with pytest.raises(SingularMatrix):
        sym_point(TwistedLoop.zeros(8), 1.0)


def test_closed_form_values():
    assert np.allclose(closed_form(parse_preset("umbrella"), 0.5).as_array(), [-8 / 3, 0, 0])
    assert np.allclose(closed_form(parse_preset("paraboloid"), 1j).as_array(), [0, -np.sinh(1), 0])


@pytest.mark.parametrize("name", ["umbrella", "paraboloid"])
def test_pipeline_matches_closed_form(name):
    e = parse_preset(name)
    g = Grid(0.1j, (0.3, 0.3), (7, 7))
    from nilsym.sym import sample_surface
    meshes, _ = sample_surface(catalog_potential(e), g, [1.0, 1j, np.exp(0.5j)], compute_H=False)
    for m in meshes:
        assert np.abs(m.points - closed_form_arrays(e, g.z, m.lam)).max() < 1e-9


def test_paraboloid_quadric(paraboloid_small):
    _, meshes, _ = paraboloid_small
    for m in meshes:
        c, res = fit_quadric(m.points, m.defined)
        assert c == pytest.approx(0.5, abs=1e-9) and res < 1e-9


def test_umbrella_is_horizontal_plane(umbrella_small):
    _, meshes, _ = umbrella_small
    for m in meshes:
        assert np.abs(m.points[..., 2]).max() < 1e-12


def test_gauss_map_agrees_with_spinors(umbrella_small, paraboloid_small):
    for _, meshes, ff in (umbrella_small, paraboloid_small):
        for m in meshes:
            _, disk, vert = frame_gauss_map(ff.frames, m.lam)
            ok = m.defined
            assert np.abs(disk - m.psi2 / np.conj(m.psi1))[ok].max() < 1e-12
            assert np.all(np.abs(disk[ok]) < 1) and not vert[ok].any()


def test_identity_frame_gauss_map():
    N, disk, vert = frame_gauss_map(TwistedLoop.identity(4))
    assert np.allclose(N, 0.5j * SIGMA3) and disk == 0 and not vert


def test_mean_curvature_on_sym_meshes(umbrella_small, paraboloid_small):
    for _, meshes, _ in (umbrella_small, paraboloid_small):
        for m in meshes:
            assert mesh_report(m)["mean_H_max"] < 1e-3


def test_direct_immersion_of_vertical_plane():
    g = Grid(0.2 + 0.1j, (0.5, 0.5), (9, 9))
    phi = lambda z: np.broadcast_to(np.array([0.5, 0, -0.5j]), np.shape(z) + (3,))
    m = direct_immersion(phi, g, f0=np.array([0.2, 0.0, 0.1]))
    x, y = g.z.real, g.z.imag
    assert np.abs(m.points - np.stack([x, 0 * x, y], axis=-1)).max() < 1e-7


def test_direct_immersion_rejects_non_integrable_phi():
    g = Grid(0j, (0.5, 0.5), (11, 11))
    phi = spinors_to_phi(np.ones(g.shape), 0.8 * g.z.real + 0.5)
    with pytest.raises(IntegrabilityError):
        direct_immersion(phi, g)


@pytest.mark.parametrize("fixture", ["umbrella_small", "paraboloid_small"])
def test_direct_immersion_matches_sym(fixture, request):
    grid, meshes, _ = request.getfixturevalue(fixture)
    for m in meshes:
        d = direct_immersion(m.spinor_field().phi(), grid)
        assert alignment_residual(m, d) < 1e-5


def _flagged_mesh():
    g = Grid(0j, (0.2, 0.2), (3, 3))
    pts = np.stack([g.z.real, g.z.imag, 0 * g.z.real], axis=-1)
    p1 = np.ones(g.shape, complex)
    p2 = 0.5 * np.ones(g.shape, complex)
    p2[0, 0] = 1j           # vertical node
    bad = np.zeros(g.shape, bool)
    bad[2, 2] = True
    pts[2, 2] = np.nan
    return SurfaceMesh(g, 1.0, pts, p1, p2, bad)


def test_flags_and_obj_export(tmp_path):
    m = _flagged_mesh()
    f = m.flags()
    assert f[0, 0] == "V" and f[2, 2] == "X" and f[1, 1] == ""
    m.to_obj(tmp_path / "m.obj")
    lines = (tmp_path / "m.obj").read_text().splitlines()
    assert sum(l.startswith("v ") for l in lines) == 7
    faces = [l for l in lines if l.startswith("f ")]
    assert len(faces) == 2
    for fl in faces:
        assert all(1 <= int(k) <= 7 for k in fl.split()[1:])


def test_csv_export_nulls_flagged(tmp_path):
    import csv
    m = _flagged_mesh()
    m.to_csv(tmp_path / "m.csv")
    rows = list(csv.DictReader(open(tmp_path / "m.csv")))
    assert len(rows) == 9
    assert rows[0]["x1"] == "null" and rows[0]["flags"] == "V"
    assert rows[8]["support"] == "null" and rows[8]["flags"] == "X"
    assert float(rows[4]["support"]) == pytest.approx(2 * (1 - 0.25))


def test_family_report(paraboloid_small, umbrella_small):
    rep = associated_family_report(paraboloid_small[1])
    assert rep["schema"] == 1
    assert rep["support_deviation"] < 1e-9
    assert rep["B_ratio_error"] < 1e-3
    assert rep["metric_deviation"] > 0.01 and rep["metric_invariant_expected"] is False
    rep = associated_family_report(umbrella_small[1])
    assert rep["support_deviation"] < 1e-9
    with pytest.raises(ValueError):
        associated_family_report(umbrella_small[1][:1])
