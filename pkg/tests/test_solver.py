import json
import math

import numpy as np
import pytest

from fcap.bodies import Box, Wulff
from fcap.pde import radial
from fcap.pde.ncg import minimize_ncg
from fcap.pde.solver import SolveError, SolverOptions, discrete_energy, solve_annulus, solve_exterior


def test_ncg_quadratic():
    rng = np.random.default_rng(0)
    M = rng.standard_normal((30, 30))
    A = M @ M.T + 30 * np.eye(30)
    b = rng.standard_normal(30)

    def f(x):
        return 0.5 * x @ A @ x - b @ x, A @ x - b

    res = minimize_ncg(f, np.zeros(30), lambda x: np.diag(A), gtol=1e-10)
    assert res.converged
    np.testing.assert_allclose(res.x, np.linalg.solve(A, b), rtol=1e-6, atol=1e-8)
    assert np.all(np.diff(res.history) <= 0)


def test_max_principle_and_history(small_wulff):
    v = small_wulff.field.values
    assert v.min() >= 0.0 and v.max() <= 1.0
    for run in small_wulff.runs:
        assert np.all(np.diff(run.history) <= 1e-12 * abs(run.history[0]))
    assert small_wulff.converged


def test_coarse_capacity(small_wulff):
    assert small_wulff.capacity == pytest.approx(2 * math.pi, rel=0.05)
    lo, hi = small_wulff.gamma_bounds
    assert 0 < lo <= 1 <= hi < 1.2


def test_monotone_in_the_body(small_wulff, small_cube):
    # wulff(1) is inscribed in the cube of half-width 1, which sits inside wulff(sqrt 3)
    assert small_wulff.capacity <= small_cube.capacity <= 2 * math.pi * math.sqrt(3)


def test_dilation_scaling(euclid, small_cube):
    H, D = euclid
    big = solve_exterior(H, D, Box([2.0, 2.0, 2.0]), 2.0, resolution=40)
    assert big.capacity / small_cube.capacity == pytest.approx(2.0, rel=0.03)


def test_policies_agree(euclid, small_wulff):
    H, D = euclid
    b = solve_exterior(H, D, Wulff(D, 1.0), 2.0, resolution=32, options=SolverOptions(policy="B"))
    # both extrapolations are exact for the radial condenser
    assert b.capacity == pytest.approx(small_wulff.capacity, rel=1e-3)
    assert b.field.values.min() == 0.0
    assert b.runs[0].capacity > b.runs[1].capacity > b.capacity


def test_annulus(small_annulus, euclid):
    H, D = euclid
    res = small_annulus
    # no extrapolation or tail here, so the capacity is the field's energy
    assert res.capacity == pytest.approx(discrete_energy(res.field, H, 2.0), rel=1e-12)
    assert res.capacity == pytest.approx(radial.annulus_capacity(D, 0.5, 2.0, 2.0), rel=0.05)
    assert 0.0 <= res.field.values.min() and res.field.values.max() <= 1.0
    u = res.field([[1.25, 0.0, 0.0], [0.0, -1.25, 0.0]])
    np.testing.assert_allclose(u, radial.annulus_potential(D, 0.5, 2.0, 2.0, [1.25, 0, 0]), atol=0.01)


def test_body_must_fit(euclid):
    H, D = euclid
    with pytest.raises(SolveError):
        solve_exterior(H, D, Wulff(D, 1.0), 2.0, R_out_list=[0.9], resolution=16)
    with pytest.raises(SolveError):
        solve_annulus(H, D, Wulff(D, 1.0), 2.0, 1.0, resolution=16)


def test_bad_policy():
    with pytest.raises(ValueError):
        SolverOptions(policy="C")


def test_eps_continuation_consistent(euclid):
    H, D = euclid
    body = Wulff(D, 1.0)
    a = solve_exterior(H, D, body, 1.5, resolution=20)
    b = solve_exterior(H, D, body, 1.5, resolution=20,
                       options=SolverOptions(eps_schedule=(1e-2, 1e-3, 1e-4, 5e-5)))
    assert a.epsilon_schedule == [1e-2, 1e-3, 1e-4]
    assert b.capacity == pytest.approx(a.capacity, rel=1e-4)


def test_deterministic_and_serializable(euclid):
    H, D = euclid
    a = solve_exterior(H, D, Wulff(D, 1.0), 2.0, resolution=16)
    b = solve_exterior(H, D, Wulff(D, 1.0), 2.0, resolution=16)
    assert a.capacity == b.capacity
    d = a.to_dict(histories=False)
    json.dumps(d)
    assert d["policy"] == "A" and len(d["per_radius_capacity"]) == 2 and "energy_history" not in d
