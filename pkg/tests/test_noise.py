import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rpsde import noise
from rpsde.errors import DomainError, ExtentError, GridAlignmentError


def make(seed=3, dim=1, dt=0.01, t_min=-4.0, t_max=2.0, anchor=0.0):
    return noise.build_path(seed, dim, dt, anchor, t_min, t_max)


def test_anchor_is_zero_and_extent():
    p = make()
    assert np.all(noise.value_at(p, 0.0) == 0.0)
    assert p.t_min == pytest.approx(-4.0)
    assert p.t_max == pytest.approx(2.0)
    assert p.increments.shape == (600, 1)


def test_same_seed_same_path_and_streams_differ():
    a, b = make(seed=11), make(seed=11)
    np.testing.assert_array_equal(a.increments, b.increments)
    assert not np.array_equal(a.increments, make(seed=12).increments)
    assert not np.array_equal(a.increments, a.aux_increments)


def test_increment_moments():
    p = make(seed=0, dt=1e-3, t_min=-50.0, t_max=50.0)
    inc = p.increments[:, 0]
    n = len(inc)
    assert abs(inc.mean()) < 4 * math.sqrt(1e-3 / n)
    # sample variance of normals has sd var*sqrt(2/n)
    assert abs(inc.var() - 1e-3) < 4 * 1e-3 * math.sqrt(2.0 / n)
    pos, neg = inc[n // 2:], inc[:n // 2]
    assert abs(np.corrcoef(pos, neg[::-1])[0, 1]) < 4 / math.sqrt(n // 2)


def test_wider_extent_keeps_overlap():
    small = make(seed=5, t_min=-1.0, t_max=1.0)
    big = make(seed=5, t_min=-3.0, t_max=2.5)
    _, ws = noise.values_on_grid(small, -1.0, 1.0)
    _, wb = noise.values_on_grid(big, -1.0, 1.0)
    np.testing.assert_array_equal(ws, wb)


@given(st.integers(0, 2 ** 31), st.integers(1, 50), st.integers(0, 40))
def test_coarse_increment_telescopes(seed, m, start):
    p = make(seed=seed, t_min=-3.0, t_max=3.0)
    t0 = -3.0 + start * p.dt_fine
    fine = noise.coarse_increments(p, t0, 1, m)
    assert np.all(noise.coarse_increment(p, t0, m) == fine.sum(axis=0))
    t1 = p.node_time(p.node_index(t0) + m)
    assert np.all(noise.value_at(p, t1) - noise.value_at(p, t0) == fine.sum(axis=0))


@given(st.integers(0, 2 ** 31), st.integers(-140, 70), st.integers(-140, 70))
def test_shift_composition_is_exact(seed, a, b):
    p = make(seed=seed)
    one = noise.shift(noise.shift(p, a), b)
    two = noise.shift(p, a + b)
    _, w1 = noise.values_on_grid(one, -1.0, 0.5)
    _, w2 = noise.values_on_grid(two, -1.0, 0.5)
    np.testing.assert_array_equal(w1, w2)


@given(st.integers(0, 2 ** 31), st.integers(-100, 100), st.integers(-100, 50))
def test_shift_matches_definition(seed, n, k):
    p = make(seed=seed, dim=2)
    q = noise.shift(p, n)
    t = n * p.dt_fine
    s = k * p.dt_fine
    want = noise.value_at(p, s + t) - noise.value_at(p, t)
    assert np.all(noise.value_at(q, s) == want)


def test_shift_by_time_and_inverse():
    p = make()
    q = noise.shift_by_time(noise.shift_by_time(p, 2.0), -2.0)
    np.testing.assert_array_equal(noise.values_on_grid(q, -2.0, 0.0)[1],
                                  noise.values_on_grid(p, -2.0, 0.0)[1])


def test_delta_z_formula():
    p = make(seed=9)
    dW = noise.coarse_increment(p, -1.0, 10)
    dV = noise.coarse_increments(p, -1.0, 10, 1, aux=True)[0]
    dt = 0.1
    assert noise.delta_z(p, -1.0, 10) == pytest.approx(0.5 * dt * (dW + dV / math.sqrt(3.0)))


def test_delta_z_moments_small_sample():
    dt = 0.01
    rng = np.random.default_rng(1)
    dW = rng.normal(0, math.sqrt(dt), 200_000)
    dV = rng.normal(0, math.sqrt(dt), 200_000)
    dZ = noise.mixed_integrals(dW, dV, dt)
    assert dZ.var() == pytest.approx(dt ** 3 / 3, rel=0.02)
    assert np.mean(dZ * dW) == pytest.approx(dt ** 2 / 2, rel=0.02)


def test_grid_errors():
    with pytest.raises(GridAlignmentError):
        noise.grid_steps(2.0, 0.3)
    with pytest.raises(DomainError):
        noise.grid_steps(2.0, 0.0)
    assert noise.grid_steps(2.0, 0.01) == 200
    p = make()
    with pytest.raises(ExtentError):
        noise.value_at(p, 2.5)
    with pytest.raises(GridAlignmentError):
        noise.value_at(p, 0.005)
    with pytest.raises(ExtentError):
        noise.coarse_increments(p, 1.0, 10, 11)
    with pytest.raises(ExtentError):
        noise.shift(p, 1000)
    with pytest.raises(DomainError):
        noise.build_path(-1, 1, 0.01, 0.0, -1.0, 1.0)
    with pytest.raises(DomainError):
        noise.build_path(0, 1, 0.01, 2.0, -1.0, 1.0)
