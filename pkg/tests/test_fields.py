import numpy as np
import pytest

from fcap.bodies import Wulff
from fcap.norms import DualNorm, NormSpec
from fcap.pde.fields import LevelSetError, ScalarField, boundary_trace, extract_level_set, gradient_field
from fcap.pde.grid import build_grid
from fcap.directions import sphere_directions

H = NormSpec.euclidean(3)
D = DualNorm.of(H)


def exact_field(n, R=4.0):
    g = build_grid(Wulff(D, 1.0), D, R, n)
    rho = g.rho.reshape(-1)[g.unknown]
    return ScalarField.from_unknowns(g, 1.0 / rho, outer_coef=1.0, q=-1.0, dual=D)


def gradient_error(n):
    gs = gradient_field(exact_field(n), H)
    sel = (gs.rho >= 1.5) & (gs.rho <= 3.0)
    return np.max(np.abs(gs.h_du[sel] - 1.0 / gs.rho[sel] ** 2))


def test_constant_field_has_zero_gradient():
    g = build_grid(Wulff(D, 1.0), D, 4.0, 16)
    f = ScalarField(g, np.full(g.shape, 0.7))
    assert np.all(gradient_field(f, H).h_du == 0.0)


def test_gradient_second_order():
    e1, e2 = gradient_error(33), gradient_error(65)
    assert e2 < e1 < 0.05
    assert e1 / e2 == pytest.approx(4.0, rel=0.25)


def test_interpolation_and_tail():
    f = exact_field(33)
    assert f([2.0, 0.0, 0.0]) == pytest.approx(0.5, rel=0.02)
    # outside the box the radial profile takes over
    assert f([10.0, 0.0, 0.0]) == pytest.approx(0.1, rel=1e-12)


def test_radial_level_sets():
    f = exact_field(49)
    U, pts = extract_level_set(f, 0.5, 256)
    np.testing.assert_allclose(np.linalg.norm(pts, axis=1), 2.0, rtol=0.01)
    np.testing.assert_allclose(U.values, 2.0, rtol=0.01)
    # near t = 1 the level set hugs the body
    _, near = extract_level_set(f, 0.98, 256)
    h = f.grid.spacing[0]
    assert np.all(np.abs(np.linalg.norm(near, axis=1) - 1.0) <= h)


def test_level_sets_nest(small_cube):
    f = small_cube.field
    outer, _ = extract_level_set(f, 0.4, 256)
    inner, _ = extract_level_set(f, 0.6, 256)
    assert np.all(inner.values <= outer.values + 1e-12)


@pytest.mark.parametrize("t", [0.0, 1.0, 1.5])
def test_level_out_of_range(small_wulff, t):
    with pytest.raises(LevelSetError):
        extract_level_set(small_wulff.field, t)


def test_level_not_bracketed(small_wulff):
    # the outer data of policy A sits above 0.05 inside the box
    with pytest.raises(LevelSetError):
        extract_level_set(small_wulff.field, 0.05)


def test_boundary_trace_of_exact_annulus():
    g = build_grid(Wulff(D, 0.5), D, 2.0, 48)
    rho = g.rho.reshape(-1)[g.unknown]
    f = ScalarField.from_unknowns(g, (1 / rho - 0.5) / 1.5)
    trace = boundary_trace(f, D, 2.0, sphere_directions(64, 3), norm=H)
    np.testing.assert_allclose(trace, 1 / 6, rtol=1e-2)
    assert np.std(trace) / np.mean(trace) < 1e-3
    np.testing.assert_allclose(boundary_trace(f, D, 2.0, sphere_directions(64, 3)), trace, rtol=1e-12)


def test_csv_export(tmp_path, small_annulus):
    stem = tmp_path / "field"
    small_annulus.field.save(str(stem))
    lines = (tmp_path / "field.csv").read_text().splitlines()
    assert lines[0] == "x,y,z,u"
    assert len(lines) == small_annulus.field.values.size + 1
    assert '"R_out": 2.0' in (tmp_path / "field.json").read_text()
