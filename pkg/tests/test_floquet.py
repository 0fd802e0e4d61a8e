import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad, solve_ivp

from rpsde import floquet, noise, problems
from rpsde.errors import ConditionError, GridAlignmentError, LogarithmExistenceError
from rpsde.pullback import pullback_rps
from rpsde.schemes import EULER_MARUYAMA, SchemeConfig, integrate

A0, W = -math.pi, 2 * math.pi


@pytest.fixture(scope="module")
def cosine():
    return floquet.floquet_data(problems.mathieu().A_of_t, 1.0, 1e-3)


def test_scalar_cosine_against_closed_form(cosine):
    # Phi(t) = exp(a0 t + sin(w t) / w), so C = exp(a0) and S(t) = exp(sin(w t) / w)
    assert cosine.C[0, 0] == pytest.approx(math.exp(A0), rel=1e-11)
    assert cosine.B[0, 0] == pytest.approx(A0, abs=1e-10)
    assert cosine.residual <= 1e-10
    t = np.arange(cosine.n_nodes + 1) * cosine.h
    np.testing.assert_allclose(cosine.s_grid[:, 0, 0], np.exp(np.sin(W * t) / W), atol=1e-11)
    assert np.max(np.abs(cosine.s_grid[-1] - cosine.s_grid[0])) < 1e-8
    assert cosine.gamma == pytest.approx(1.0)


def test_off_node_interpolation(cosine):
    for t in (0.1234, 1.777, -0.31):
        assert cosine.S(t)[0, 0] == pytest.approx(math.exp(math.sin(W * t) / W), abs=1e-9)
        assert cosine.S_inv(t)[0, 0] == pytest.approx(math.exp(-math.sin(W * t) / W), abs=1e-9)
    with pytest.raises(GridAlignmentError):
        cosine.S(0.1234, interpolate_off_node=False)
    assert cosine.S(2.5)[0, 0] == cosine.s_grid[500, 0, 0]


@given(st.floats(-3, -0.2), st.floats(-3, -0.2), st.floats(-1, 1))
def test_constant_symmetric_A_gives_identity(d1, d2, off):
    A = np.array([[d1, off], [off, d2]])
    data = floquet.floquet_data(lambda t: A, 1.0, 1e-2)
    np.testing.assert_allclose(data.B, A, atol=1e-9)
    np.testing.assert_allclose(data.s_grid, np.broadcast_to(np.eye(2), data.s_grid.shape),
                               atol=1e-9)


def test_matrix_case_against_ivp():
    def A(t):
        return np.array([[-2.0 + math.cos(W * t), 0.5 * math.sin(W * t)],
                         [0.5 * math.sin(W * t), -1.5]])

    data = floquet.floquet_data(A, 1.0, 1e-3)
    sol = solve_ivp(lambda t, y: (A(t) @ y.reshape(2, 2)).ravel(), (0, 1), np.eye(2).ravel(),
                    rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(data.C, sol.y[:, -1].reshape(2, 2), rtol=1e-9, atol=1e-12)
    assert data.residual < 1e-10
    assert np.max(np.abs(data.s_grid[-1] - data.s_grid[0])) < 1e-8


def test_negative_axis_raises():
    with pytest.raises(LogarithmExistenceError) as exc:
        floquet.floquet_data(lambda t: np.array([[0.0, -math.pi / 2], [math.pi / 2, 0.0]]),
                             1.0, 1e-2)
    assert exc.value.eigenvalue.real == pytest.approx(-1.0)


def test_transform_rejects_nonsymmetric_B():
    p = problems.constant_matrix([[-1.0, 2.0], [0.0, -1.0]])
    data = floquet.floquet_data(p.A_of_t, 1.0, 1e-2)
    with pytest.raises(ConditionError) as exc:
        floquet.lf_transform(p, data)
    assert exc.value.condition == "A'"


def test_transform_margin(cosine):
    tr = floquet.lf_transform(problems.mathieu(), cosine)
    assert tr.problem.tau == 2.0
    assert tr.report.margin == pytest.approx(math.pi - 0.005, abs=1e-9)
    z = tr.to_z(0.3, np.array([1.0]))
    np.testing.assert_allclose(tr.to_x(0.3, z), [1.0])


def mathieu_oracle(t):
    fn = lambda s: math.exp(A0 * (t - s) + (math.sin(W * t) - math.sin(W * s)) / W) * math.sin(W * s)
    return quad(fn, t - 14, t, limit=400, epsabs=1e-14, epsrel=1e-13)[0]


@pytest.mark.parametrize("t", [0.0, 0.25, 1.37])
def test_forced_periodic_solution(cosine, t):
    x = floquet.forced_periodic_solution(cosine, lambda s: math.sin(W * s), t)
    assert x[0] == pytest.approx(mathieu_oracle(t), abs=1e-10)


def test_pullback_through_transform_is_first_order():
    p = problems.mathieu(c=0.0)
    errs = []
    for dt in (1e-3, 5e-4):
        data = floquet.floquet_data(p.A_of_t, 1.0, dt)
        tr = floquet.lf_transform(p, data)
        sc = SchemeConfig.build(EULER_MARUYAMA, dt, dt, tau=2.0)
        path = noise.build_path(0, 1, dt, 0.0, -6.0, 0.0)
        z = pullback_rps(tr.problem, sc, [path], 0.0, 3, tol=0.0).values[0]
        errs.append(abs(tr.to_x(0.0, z)[0] - mathieu_oracle(0.0)))
    assert errs[0] < 1e-3
    assert errs[1] / errs[0] == pytest.approx(0.5, abs=0.05)


def test_map_back_and_forward(cosine):
    tr = floquet.lf_transform(problems.mathieu(), cosine)
    sc = SchemeConfig.build(EULER_MARUYAMA, 0.01, 0.001, tau=2.0)
    path = noise.build_path(1, 1, 0.001, 0.0, -2.0, 0.0)
    ztr = integrate(tr.problem, sc, path, -2.0, 0.0, 0.5)
    xtr = floquet.map_back(cosine, ztr)
    np.testing.assert_allclose(xtr.states[:, 0],
                               ztr.states[:, 0] * np.exp(np.sin(W * ztr.times) / W), rtol=1e-10)
    np.testing.assert_allclose(floquet.map_forward(cosine, xtr).states, ztr.states, rtol=1e-12)
    off = integrate(tr.problem, sc, path, -2.0, -1.995, 0.5)
    with pytest.raises(GridAlignmentError):
        floquet.map_back(floquet.floquet_data(problems.mathieu().A_of_t, 1.0, 0.01), off)


def test_json_round_trip(cosine, tmp_path):
    out = tmp_path / "f.json"
    cosine.write_json(out)
    d = json.loads(out.read_text())
    assert d["B"] == cosine.B.tolist()
    assert len(d["t"]) == len(d["S"]) <= 2001
