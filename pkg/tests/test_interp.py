import numpy as np
import pytest
from hypothesis import given, strategies as st

from bkrescale.interp import SpaceTimeSheet, interp_space, interp_space_time


def sheet_from(f, I, h, t0, tau):
    x = np.arange(-I, I + 1) * h
    return SpaceTimeSheet(f(x, t0), f(x, t0 + tau), h, t0, tau), x


def test_nodes_reproduced():
    rng = np.random.default_rng(0)
    s = SpaceTimeSheet(rng.normal(size=11), rng.normal(size=11), 0.1, 2.0, 0.01)
    for i in range(-5, 6):
        assert interp_space_time(s, i * 0.1, 2.0) == s.prev[i + 5]
        assert interp_space_time(s, i * 0.1, 2.01) == s.cur[i + 5]


def test_cell_centre_average():
    s = SpaceTimeSheet(np.array([9.0, 0.0, 1.0]), np.array([9.0, 2.0, 3.0]), 1.0, 0.0, 1.0)
    assert interp_space_time(s, 0.5, 0.5) == 1.5


def test_affine_exact():
    s, _ = sheet_from(lambda x, t: 2 * x + 3 * t, 8, 0.125, 0.0, 0.01)
    for x, t in [(0.3, 0.004), (-0.77, 0.0091), (0.0, 0.005), (1.0, 0.01)]:
        assert interp_space_time(s, x, t) == pytest.approx(2 * x + 3 * t, abs=1e-15)


def test_interp_space_examples():
    v = np.array([7.0, 0.0, 4.0])
    assert interp_space(v, 1.0, 0.25) == 1.0
    assert interp_space(v, 1.0, 1.0) == 4.0
    sym = np.array([1.0, 3.0, 5.0, 3.0, 1.0])
    assert interp_space(sym, 0.5, 0.37) == interp_space(sym, 0.5, -0.37)


def test_out_of_range():
    s = SpaceTimeSheet(np.zeros(5), np.zeros(5), 0.5, 0.0, 0.1)
    with pytest.raises(ValueError):
        interp_space_time(s, 1.2, 0.05)
    with pytest.raises(ValueError):
        interp_space_time(s, 0.2, 0.2)
    with pytest.raises(ValueError):
        SpaceTimeSheet(np.zeros(5), np.zeros(3), 0.5, 0.0, 0.1)
    with pytest.raises(ValueError):
        SpaceTimeSheet(np.zeros(5), np.zeros(5), 0.5, 0.0, 0.0)


def test_vectorised_matches_scalar():
    rng = np.random.default_rng(1)
    s = SpaceTimeSheet(rng.normal(size=21), rng.normal(size=21), 0.1, 0.0, 1.0)
    xs = rng.uniform(-1, 1, 50)
    vec = interp_space_time(s, xs, 0.3)
    assert all(vec[j] == interp_space_time(s, xs[j], 0.3) for j in range(50))


_I = st.integers(1, 60)
_seed = st.integers(0, 10**6)
_u = st.floats(0.0, 1.0)


@given(_I, _seed, _u, _u)
def test_corner_bound(I, seed, fx, ft):
    rng = np.random.default_rng(seed)
    h = 1.0 / I
    s = SpaceTimeSheet(rng.normal(size=2 * I + 1), rng.normal(size=2 * I + 1), h, 0.0, 0.25 * h * h)
    j = int(rng.integers(-I, I))
    x = (j + fx) * h
    x = min(x, I * h)
    t = ft * s.tau
    v = interp_space_time(s, x, t)
    corners = [s.prev[j + I], s.prev[j + I + 1], s.cur[j + I], s.cur[j + I + 1]]
    assert min(corners) - 1e-13 <= v <= max(corners) + 1e-13


@given(_I, st.lists(st.floats(-10, 10), min_size=4, max_size=4), _u, st.floats(-1.0, 1.0))
def test_bilinear_exact(I, c, ft, x):
    h = 1.0 / I
    tau = 0.25 * h * h
    f = lambda x, t: c[0] + c[1] * x + c[2] * t + c[3] * x * t
    s, _ = sheet_from(f, I, h, 1.0, tau)
    t = 1.0 + ft * tau
    exact = f(x, t)
    got = interp_space_time(s, x, t)
    assert abs(got - exact) <= 1e-13 * max(1.0, sum(abs(ci) for ci in c))


@given(_I, _seed, st.floats(0.0, 1.0), _u)
def test_mirror_symmetry(I, seed, x, ft):
    rng = np.random.default_rng(seed)
    half_a, half_b = rng.normal(size=I + 1), rng.normal(size=I + 1)
    m = lambda v: np.concatenate([v[:0:-1], v])
    s = SpaceTimeSheet(m(half_a), m(half_b), 1.0 / I, 0.0, 1.0)
    assert interp_space_time(s, x, ft) == interp_space_time(s, -x, ft)
