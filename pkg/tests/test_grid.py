import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fcap.bodies import Box, Wulff
from fcap.norms import DualNorm, NormSpec
from fcap.pde.grid import BODY, OUTER, UNKNOWN, DiscreteEnergy, GridError, build_grid
from fcap.pde.radial import radial_capacity

H = NormSpec.euclidean(3)
D = DualNorm.of(H)
HE = NormSpec.ellipsoid(np.diag([1.0, 2.0, 4.0]))
DE = DualNorm.of(HE)


@pytest.fixture(scope="module")
def grid():
    return build_grid(Wulff(D, 1.0), D, 4.0, 24)


def test_masks_partition_nodes(grid):
    c = grid.counts()
    assert sum(c.values()) == grid.status.size
    assert c["unknown"] == grid.n_unknowns > 0
    assert c["body"] > 0 and c["outer"] > 0


def test_mask_definitions(grid):
    pos = grid.node_positions()
    r = np.linalg.norm(pos, axis=-1)
    assert np.all(r[grid.status == BODY] <= 1.0 + 1e-12)
    assert np.all(r[grid.status == UNKNOWN] > 1.0)
    assert np.all(r[grid.status == UNKNOWN] < 4.0)
    assert np.all(r[grid.status == OUTER] >= 4.0)


def test_body_not_inside():
    with pytest.raises(GridError):
        build_grid(Wulff(D, 2.0), D, 1.5, 24)
    with pytest.raises(GridError):
        build_grid(Wulff(D, 1.0), D, 4.0, 2)


def test_translated_body_uses_its_center():
    g = build_grid(Wulff(D, 1.0, [5.0, 0, 0]), D, 4.0, 16)
    np.testing.assert_allclose(g.origin, [5.0, 0, 0])
    assert g.node_positions(absolute=True)[..., 0].min() == pytest.approx(1.0)


def test_classification_settles_under_refinement():
    pt = np.array([1.3, 0.2, -0.4])
    labels = []
    for n in (33, 65, 129):
        g = build_grid(Box([1.0, 1.0, 1.0]), D, 4.0, n)
        idx = np.round((pt - g.lower) / g.spacing).astype(int)
        labels.append(g.status[tuple(idx)])
    assert labels[-1] == labels[-2] == UNKNOWN


def test_total_volume_is_truncated_exterior(grid):
    exact = 4 / 3 * np.pi * (4.0 ** 3 - 1.0)
    assert grid.total_volume == pytest.approx(exact, rel=0.01)


def test_constant_field_energy(grid):
    x = np.full(grid.n_unknowns, 0.3)
    # u = 1 everywhere, including the outer data, has zero gradient
    assert DiscreteEnergy(grid, H, 2.0, outer_value=1.0).value(np.ones(grid.n_unknowns)) == pytest.approx(0, abs=1e-20)
    eps, s, p = 0.1, 2.0, 1.5
    E = DiscreteEnergy(grid, H, p, eps=eps, scale=s, outer_value=1.0)
    assert E.value(np.ones(grid.n_unknowns)) == pytest.approx((eps * s) ** p / p * grid.total_volume, rel=1e-12)
    assert DiscreteEnergy(grid, H, 2.0).value(x) > 0


@pytest.mark.parametrize("norm,dual", [(H, D), (HE, DE)])
def test_sampled_radial_field_energy(norm, dual):
    # policy-B style: the annulus potential between H0 = 1 and H0 = 4
    g = build_grid(Wulff(dual, 1.0), dual, 4.0, 64)
    rho = g.rho.reshape(-1)[g.unknown]
    u = (1 / rho - 1 / 4) / (1 - 1 / 4)
    exact = radial_capacity(dual, 1.0, 2.0) / (1 - 1 / 4)
    assert DiscreteEnergy(g, norm, 2.0).value(u) == pytest.approx(exact, rel=0.03)


def test_gradient_matches_finite_differences(grid):
    rng = np.random.default_rng(1)
    x = rng.uniform(0, 1, grid.n_unknowns)
    v = rng.standard_normal(grid.n_unknowns)
    for p in (2.0, 1.5, 2.5):
        E = DiscreteEnergy(grid, H, p, eps=1e-2, outer_value=0.1)
        _, g = E.value_and_grad(x)
        h = 1e-6
        fd = (E.value(x + h * v) - E.value(x - h * v)) / (2 * h)
        assert g @ v == pytest.approx(fd, rel=1e-6)


@settings(max_examples=25)
@given(st.integers(0, 2 ** 31), st.floats(1.2, 2.8))
def test_energy_convex_on_segments(seed, p):
    g = build_grid(Wulff(D, 1.0), D, 4.0, 12)
    rng = np.random.default_rng(seed)
    a, b = rng.uniform(0, 1, (2, g.n_unknowns))
    E = DiscreteEnergy(g, H, p)
    assert E.value(0.5 * (a + b)) <= 0.5 * (E.value(a) + E.value(b)) * (1 + 1e-12)
