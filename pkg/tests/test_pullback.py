import math
from pathlib import Path

import numpy as np
import pytest

from rpsde import noise, problems
from rpsde.errors import DivergenceError, DomainError
from rpsde.model import SdeProblem
from rpsde.pullback import (contraction_bound, contraction_ratio, ensemble_flow,
                            periodicity_diagnostic,
                            periodicity_identity_gap, pullback_rps, shifted_pair)
from rpsde.schemes import EULER_MARUYAMA, MILSTEIN, SchemeConfig

DATA = Path(__file__).parent / "data"


def paths_for(seeds, t_min=-10.0, t_max=2.0, dt=0.01):
    return [noise.build_path(s, 1, dt, 0.0, t_min, t_max) for s in seeds]


@pytest.fixture(scope="module")
def em():
    return SchemeConfig.build(EULER_MARUYAMA, 0.01, 0.01, tau=2.0)


def test_converges_and_gaps_shrink(ex1_problem, em):
    res = pullback_rps(ex1_problem, em, paths_for(range(100)), 0.0, 5, tol=1e-6)
    assert res.converged
    assert res.k_used == len(res.cauchy_gaps) + 1
    assert res.cauchy_gaps[-1] < 1e-6 <= res.cauchy_gaps[-2]
    assert all(b < a for a, b in zip(res.cauchy_gaps, res.cauchy_gaps[1:]))
    assert res.values.shape == (100, 1)


def test_not_converged_is_reported(ex1_problem, em):
    res = pullback_rps(ex1_problem, em, paths_for(range(10)), 0.0, 2, tol=0.0)
    assert not res.converged and res.k_used == 2 and len(res.cauchy_gaps) == 1


def test_warm_restart_and_threads_are_bitwise_equal(ex1_problem, em):
    ps = paths_for(range(300))
    base = pullback_rps(ex1_problem, em, ps, 0.5, 4, tol=0.0)
    warm = pullback_rps(ex1_problem, em, ps, 0.5, 4, tol=0.0, warm_restart=True)
    par = pullback_rps(ex1_problem, em, ps, 0.5, 4, tol=0.0, threads=4)
    np.testing.assert_array_equal(base.values, warm.values)
    np.testing.assert_array_equal(base.values, par.values)
    assert base.cauchy_gaps == warm.cauchy_gaps == par.cauchy_gaps


def test_initial_value_is_forgotten(ex1_problem, em):
    ps = paths_for(range(200))
    a = pullback_rps(ex1_problem, em, ps, 0.0, 4, tol=0.0, xi=0.5)
    b = pullback_rps(ex1_problem, em, ps, 0.0, 4, tol=0.0, xi=-3.0)
    assert np.sqrt(np.mean((a.values - b.values) ** 2)) < 1e-6


def test_contraction_rate_respects_bound(ex1_problem, em):
    res = pullback_rps(ex1_problem, em, paths_for(range(200)), 0.0, 5, tol=0.0)
    bound = contraction_bound(ex1_problem)
    assert bound == pytest.approx(math.exp((0.5 - math.pi) * 2))
    assert contraction_ratio(res.cauchy_gaps) <= 2 * bound
    with pytest.raises(DomainError):
        contraction_ratio([1e-3, 1e-5])


def test_deterministic_pullback_hits_periodic_orbit():
    # x' = a x + sin(w t); EM is first order, so the error shrinks with dt
    a, tau = -math.pi, 2.0
    w = math.pi
    p = problems.linear_family(a=a, c=0.0, tau=tau).to_problem()
    x_star = -w / (a * a + w * w)  # value at r = 0
    errs = []
    for dt in (0.01, 0.005, 0.0025):
        sc = SchemeConfig.build(EULER_MARUYAMA, dt, dt, tau=tau)
        ps = [noise.build_path(0, 1, dt, 0.0, -10.0, 0.0)]
        errs.append(abs(pullback_rps(p, sc, ps, 0.0, 5, tol=1e-12).values[0, 0] - x_star))
    assert errs[0] < 0.02
    assert errs[1] / errs[0] == pytest.approx(0.5, abs=0.05)
    assert errs[2] / errs[1] == pytest.approx(0.5, abs=0.05)


@pytest.mark.parametrize("kind", [EULER_MARUYAMA, MILSTEIN])
def test_periodicity_identity(ex1_problem, kind):
    sc = SchemeConfig.build(kind, 0.01, 0.01, tau=2.0)
    ps = paths_for(range(100), t_min=-8.0, t_max=3.0)
    assert periodicity_identity_gap(ex1_problem, sc, ps, 0.3, 3) < 2e-3
    # starting one period earlier on the shifted noise reproduces the run exactly
    x0 = np.full((5, 1), 0.5)
    lhs = ensemble_flow(ex1_problem, sc, ps[:5], -2.0, 2.3, x0)
    moved = [noise.shift_by_time(p, 2.0) for p in ps[:5]]
    rhs = ensemble_flow(ex1_problem, sc, moved, -4.0, 0.3, x0)
    np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-12)


def test_diagnostic_series_is_periodic(ex1_problem, em):
    t_grid = np.arange(0, 121) * 0.05
    ps = paths_for([0, 1], t_min=-12.1, t_max=0.0)
    series = periodicity_diagnostic(ex1_problem, em, ps, t_grid, depth=3)
    assert series.values.shape == (121, 2, 1)
    assert series.periodicity_defect(2.0) < 1e-2
    assert np.std(series.values[:, 0, 0]) > 1e-2


def test_shifted_pair_defect_decays(ex1_problem, em):
    ps = noise.build_path(0, 1, 0.01, 0.0, -8.0, 0.0)
    pair = shifted_pair(ex1_problem, em, ps, (-5.0, 0.0), -6.0)
    assert pair.base.times[0] == pytest.approx(-5.0)
    assert pair.shifted.times[-1] == pytest.approx(2.0)
    late = np.abs(pair.defect[pair.compare_times > 0.0])
    assert late.max() < 1e-3 < np.abs(pair.defect).max()


def test_shifted_pair_golden(ex1_problem, em, tmp_path):
    ps = noise.build_path(0, 1, 0.01, 0.0, -8.0, 0.0)
    pair = shifted_pair(ex1_problem, em, ps, (-5.0, 0.0), -6.0)
    out = tmp_path / "fig1_pair.csv"
    pair.to_csv(out)
    golden = np.genfromtxt(DATA / "fig1_pair_seed0.csv", delimiter=",", names=True,
                           dtype=None, encoding="ascii")
    got = np.genfromtxt(out, delimiter=",", names=True, dtype=None, encoding="ascii")
    assert list(got["trajectory"]) == list(golden["trajectory"])
    np.testing.assert_allclose(got["t"], golden["t"], atol=1e-12)
    np.testing.assert_allclose(got["value"], golden["value"], rtol=1e-9, atol=1e-12)


def test_errors(ex1_problem, em):
    with pytest.raises(DomainError):
        pullback_rps(ex1_problem, em, paths_for([0]), -1.0, 3)
    with pytest.raises(DomainError):
        pullback_rps(ex1_problem, em, paths_for([0]), 0.0, 0)
    bad = SdeProblem(m=1, d=1, tau=2.0, A=[[-1.0]], f=lambda t, x: x ** 3,
                     g=lambda t, x: np.zeros(np.shape(x) + (1,)), beta1=0.1)
    sc = SchemeConfig.build(EULER_MARUYAMA, 0.1, 0.01, tau=2.0)
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(DivergenceError) as exc:
            pullback_rps(bad, sc, paths_for([0, 1]), 0.0, 3, xi=30.0)
    assert exc.value.depth == 1
