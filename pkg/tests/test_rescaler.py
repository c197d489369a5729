import math

import numpy as np
import pytest

from bkrescale.interp import SpaceTimeSheet
from bkrescale.pde_core import RunConfig, default_initial_data
from bkrescale.rescaler import (
    DegenerateProfile, Level, LevelStack, blowup_time, boundary_feed, composite_eval,
    composite_jumps, find_crossing_time, interval_from_profile, run, spawn_level, tail_bound,
    update_coarse,
)
from bkrescale.stepper import advance


def level_with(prev, cur, tau=0.1, n=1, h=0.25):
    lv = Level.from_values(np.asarray(cur, dtype=float), h, tau)
    lv.prev = np.asarray(prev, dtype=float)
    lv.n = n
    return lv


@pytest.fixture(scope="module")
def small_run():
    cfg = RunConfig(p=5, I=40, K_max=12)
    return run(cfg, record_history=True)


# --- crossing and interval ------------------------------------------------------------

def test_crossing_linear_root():
    M = 2.0
    lv = level_with([0, 0.9 * M, 0], [0, 1.1 * M, 0], tau=0.1, n=1)
    assert find_crossing_time(lv, M) == pytest.approx(0.05, abs=1e-15)


def test_crossing_at_step_start():
    M = 2.0
    lv = level_with([0, M, 0], [0, 1.5 * M, 0], tau=0.1, n=7)
    assert find_crossing_time(lv, M) == pytest.approx(0.6, abs=1e-15)


def test_crossing_earliest_node():
    M = 1.0
    prev = [0, 0.5, 0.8, 0.5, 0]
    cur = [0, 1.5, 1.1, 0.2, 0]
    lv = level_with(prev, cur, tau=1.0, n=1)
    # node -1 crosses at 0.5, centre at 2/3
    assert find_crossing_time(lv, M) == pytest.approx(0.5)


def test_crossing_not_bracketed():
    lv = level_with([0, 0.5, 0], [0, 0.9, 0])
    with pytest.raises(ValueError):
        find_crossing_time(lv, 1.0)


def test_interval_example():
    M = 1.0
    g = M * np.array([0.1, 0.3, 0.5, 1.0, 0.5, 0.3, 0.1])
    i_minus, i_plus = interval_from_profile(g, 0.4, M)
    # bracketing: g(i+ + 1) < alpha M <= g(i+)
    assert (i_minus, i_plus) == (-1, 1)
    assert g[3 + i_plus + 1] < 0.4 <= g[3 + i_plus]


def test_interval_symmetric_and_small_alpha():
    g = np.array([0.0, 0.2, 0.6, 1.0, 0.6, 0.2, 0.0])
    assert interval_from_profile(g, 0.5, 1.0) == (-1, 1)
    assert interval_from_profile(g, 1e-9, 1.0) == (-2, 2)


def test_interval_degenerate():
    with pytest.raises(DegenerateProfile):
        interval_from_profile(np.array([0.0, 0.1, 1.0, 0.1, 0.0]), 0.4, 1.0)
    with pytest.raises(DegenerateProfile):
        interval_from_profile(np.array([0.9, 1.0, 0.9]), 0.4, 1.0)


def test_interval_asymmetric():
    g = np.array([0.0, 0.5, 0.6, 1.0, 0.3, 0.2, 0.0])
    assert interval_from_profile(g, 0.4, 1.0, symmetric=False) == (-2, 0)


# --- spawn, feed, injection -------------------------------------------------------------

def _crossed_level(I=8):
    cfg = RunConfig(p=5, I=I, tau_ratio=0.25)
    lv = Level.from_values(default_initial_data(cfg), cfg.h, cfg.tau)
    M = cfg.threshold
    while np.abs(lv.cur).max() < M:
        lv.prev, lv.cur = lv.cur, advance(lv.cur, cfg, 0.0)
        lv.n += 1
    lv.tau_star = find_crossing_time(lv, M)
    lv.crossing = SpaceTimeSheet(lv.prev.copy(), lv.cur.copy(), lv.h, (lv.n - 1) * lv.tau, lv.tau)
    return cfg, lv


def test_spawn_grid_size():
    cfg, lv = _crossed_level()
    lv.i_minus, lv.i_plus = -2, 2
    child = spawn_level(lv, lv.tau_star, (-2, 2), cfg)
    assert child.I == 4 and child.cur.size == 9
    assert child.anchor == 2 * lv.h
    assert child.n == 0 and child.h == lv.h and child.tau == lv.tau


def test_spawn_sup_is_twice_amplitude():
    cfg, lv = _crossed_level(I=40)
    interval = interval_from_profile(lv.profile_at(lv.tau_star), cfg.alpha, cfg.threshold)
    child = spawn_level(lv, lv.tau_star, interval, cfg)
    assert child.spawn_sup == pytest.approx(2 * cfg.amplitude, rel=1e-12)


def test_spawn_reproduces_affine_parent():
    cfg = RunConfig(p=5, I=8)
    x = np.arange(-8, 9) * cfg.h
    parent = Level.from_values(1.0 + 0.5 * np.abs(x), cfg.h, cfg.tau)
    parent.prev = parent.cur.copy()
    parent.n = 1
    child = spawn_level(parent, cfg.tau, (-4, 4), cfg)
    xs = np.arange(-8, 9) * cfg.h * cfg.lam
    expect = cfg.lam ** cfg.scale_exponent * (1.0 + 0.5 * np.abs(xs))
    assert np.allclose(child.cur, expect, rtol=0, atol=1e-15)


def test_feed_reads_parent_linearly():
    cfg = RunConfig(p=5, I=8)
    prev = np.linspace(0, 1, 17)
    prev = prev + prev[::-1]
    parent = level_with(prev, 2 * prev, tau=cfg.tau, n=5, h=cfg.h)
    parent.i_plus = 3
    t0 = 4 * cfg.tau
    scale = cfg.lam ** cfg.scale_exponent
    val = [boundary_feed(parent, t0, n, cfg)[1] for n in range(5)]
    assert val[0] == pytest.approx(scale * prev[8 + 3])
    steps = np.diff(val)
    assert np.allclose(steps, scale * prev[11] * cfg.lam**2, rtol=1e-12)
    left, right = boundary_feed(parent, t0, 2, cfg)
    assert left == right


def test_feed_constant_parent():
    cfg = RunConfig(p=5, I=8)
    v = np.full(17, 0.7)
    parent = level_with(v, v, tau=cfg.tau, n=3, h=cfg.h)
    parent.i_plus = 2
    vals = {boundary_feed(parent, 2 * cfg.tau, n, cfg)[1] for n in range(5)}
    assert len(vals) == 1


def test_update_coarse_injects_scaled_values():
    cfg = RunConfig(p=5, I=8)
    coarse = Level.from_values(np.zeros(17), cfg.h, cfg.tau)
    fine = Level.from_values(np.ones(13), cfg.h, cfg.tau, k=1)
    update_coarse(fine, coarse, cfg)
    m = fine.I // 2
    assert np.allclose(coarse.cur[8 - (m - 1): 8 + m], 2**0.5, rtol=1e-15)
    assert coarse.cur[8 + m] == 0.0 and coarse.cur[8 - m] == 0.0
    fine.cur[:] = 0.0
    update_coarse(fine, coarse, cfg)
    assert not coarse.cur.any()


# --- whole runs --------------------------------------------------------------------------

def test_blowup_time_sums():
    assert blowup_time([0.3], 0.5) == 0.3
    K = 30
    c = 0.2
    assert blowup_time([c] * (K + 1), 0.5) == pytest.approx(4 * c / 3 * (1 - 4.0 ** -(K + 1)), rel=1e-14)
    assert tail_bound([c, c], 0.5) == pytest.approx(0.5**4 * c / 0.75)
    with pytest.raises(ValueError):
        blowup_time([], 0.5)


def test_k_max_zero():
    stack, outcome, _ = run(RunConfig(p=5, I=20, K_max=0))
    assert outcome.blew_up and len(stack.tau_stars) == 1


def test_single_level_is_plain_stepping():
    cfg = RunConfig(p=5, I=20, K_max=0)
    stack, _, _ = run(cfg)
    u = default_initial_data(cfg)
    for _ in range(stack.levels[0].n):
        u = advance(u, cfg, 0.0)
    assert np.array_equal(u, stack.levels[0].cur)


def test_run_invariants(small_run):
    stack, outcome, diag = small_run
    cfg = stack.config
    assert outcome.blew_up and outcome.K_reached == 12
    for lv in stack.levels:
        assert (lv.n_star - 1) * lv.tau < lv.tau_star <= lv.n_star * lv.tau
        assert lv.I % cfg.lambda_inv == 0 or lv.k == 0
    assert all(diag["interval_checks"])
    assert max(abs(r) for r in diag["spawn_residuals"]) < 1e-10
    mu = stack.mu
    assert all(b > a for a, b in zip(mu, mu[1:]))
    assert mu[-1] <= max(stack.tau_stars) / (1 - cfg.lam**2)


def test_ratio_of_step_counts(small_run):
    stack, _, _ = small_run
    # each level spans lam^2 of its parent's clock per step
    parent, child = stack.levels[3], stack.levels[4]
    t_child_end = child.start + child.n_star * child.tau * stack.config.lam**2
    assert parent.time >= t_child_end - 1e-12


def test_deterministic():
    cfg = RunConfig(p=7, I=30, K_max=10)
    a = run(cfg)[0].tau_stars
    b = run(cfg)[0].tau_stars
    assert a == b


def test_no_blowup_detected():
    # the first levels still cross before the growth stalls
    cfg = RunConfig(equation="cgl", p=5, delta=3.0, I=50, K_max=80, step_cap=20000)
    stack, outcome, _ = run(cfg)
    assert not outcome.blew_up and outcome.step_cap_hit == 20000
    assert outcome.level == len(stack.tau_stars)


def test_composite_eval(small_run):
    stack, _, _ = small_run
    cfg = stack.config
    lv0 = stack.levels[0]
    t = 0.5 * lv0.tau_star
    at = lambda lv, t: lv.sheet_at(t).at_time(t)
    assert composite_eval(stack, 0.0, t) == pytest.approx(at(lv0, t)[cfg.I])
    # outside the first refined region level 0 is used at any time
    x = 0.95
    t1 = stack.mu[0] + 0.3 * cfg.lam**2 * stack.levels[1].tau_star
    assert composite_eval(stack, x, t1) == pytest.approx(
        float(np.interp(x, np.arange(-cfg.I, cfg.I + 1) * cfg.h, at(lv0, t1))), rel=1e-12)
    with pytest.raises(ValueError):
        composite_eval(stack, 1.5, t)
    jumps = composite_jumps(stack, t1)
    assert all(math.isfinite(j) for j in jumps)


def test_composite_centre_scaling(small_run):
    stack, _, _ = small_run
    cfg = stack.config
    k = 3
    lv = stack.levels[k]
    t_local = 0.5 * lv.tau_star
    t = stack.mu[k - 1] + cfg.lam ** (2 * k) * t_local
    expect = cfg.lam ** (-cfg.scale_exponent * k) * lv.sheet_at(t_local).at_time(t_local)[lv.I]
    assert composite_eval(stack, 0.0, t) == pytest.approx(expect, rel=1e-12)


def test_omega_shrinks(small_run):
    stack, _, _ = small_run
    widths = [b - a for a, b in stack.omega]
    assert all(w2 < w1 for w1, w2 in zip(widths, widths[1:]))
