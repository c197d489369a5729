"""Multilevel rescaling driver.

Each level ``k`` solves the same scheme with the same ``(h, tau)`` on its own
centred grid. When the finest level's sup-norm reaches ``M`` a new level is
spawned on the zoomed region where the profile exceeds ``alpha*M``; coarser
levels keep running and are advanced lazily, only when the finer level needs
a boundary value beyond their latest time slice. Right before a coarse
level steps, its nodes strictly inside the refined region are overwritten by
the (amplitude-rescaled) values of the finer level at coinciding nodes.
"""

from __future__ import annotations

import bisect
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Union

import numpy as np

from .interp import SpaceTimeSheet, interp_space_time
from .pde_core import RunConfig, default_initial_data, threshold_M
from .stepper import CGLState, HeatState, NumericalOverflow, advance

logger = logging.getLogger(__name__)

_EPS = 1e-9


class DegenerateProfile(RuntimeError):
    """No grid interval brackets ``alpha*M`` around the maximum."""


class SchedulingError(RuntimeError):
    """A level requested data outside its parent's retained time window."""


@dataclass
class Level:
    """One rescaled solution ``U^(k)`` and its bookkeeping.

    ``start`` is the parent time at which the level begins (``tau*_{k-1}``)
    and ``anchor`` the parent coordinate of its right edge (``xi_{k-1,i+}``).
    """

    k: int
    I: int
    h: float
    tau: float
    cur: np.ndarray
    prev: Optional[np.ndarray] = None
    n: int = 0
    start: float = 0.0
    anchor: Optional[float] = None
    tau_star: Optional[float] = None
    n_star: Optional[int] = None
    i_minus: Optional[int] = None
    i_plus: Optional[int] = None
    crossing: Optional[SpaceTimeSheet] = None
    spawn_sup: Optional[float] = None
    history: Optional[list] = None

    @classmethod
    def from_values(cls, values, h: float, tau: float, k: int = 0, **kw) -> "Level":
        values = np.asarray(values)
        return cls(k=k, I=values.size // 2, h=h, tau=tau, cur=values.copy(), **kw)

    @property
    def time(self) -> float:
        return self.n * self.tau

    @property
    def sheet(self) -> SpaceTimeSheet:
        if self.prev is None:
            raise SchedulingError(f"level {self.k} has no previous slice yet")
        return SpaceTimeSheet(self.prev, self.cur, self.h, (self.n - 1) * self.tau, self.tau)

    @property
    def state(self) -> Union[HeatState, CGLState]:
        b = self.cur[-1]
        if np.iscomplexobj(self.cur):
            return CGLState.from_complex(self.cur, self.n, b)
        return HeatState(self.cur, self.n, float(b))

    @property
    def xi_plus(self) -> Optional[float]:
        return None if self.i_plus is None else self.i_plus * self.h

    @property
    def xi_minus(self) -> Optional[float]:
        return None if self.i_minus is None else self.i_minus * self.h

    def profile_at(self, t: float) -> np.ndarray:
        """Nodal magnitudes at local time ``t`` inside the crossing or current sheet."""
        for sheet in (self.crossing, self._sheet_or_none()):
            if sheet is not None and sheet.t_n - _EPS * self.tau <= t <= sheet.t_end + _EPS * self.tau:
                return np.abs(sheet.at_time(min(max(t, sheet.t_n), sheet.t_end)))
        raise SchedulingError(f"time {t} not retained on level {self.k}")

    def sheet_at(self, t: float) -> SpaceTimeSheet:
        """A two-slice sheet containing local time ``t``."""
        if self.history is not None and len(self.history) >= 2:
            times = [e[0] for e in self.history]
            j = bisect.bisect_left(times, t - _EPS * self.tau)
            j = min(max(j, 1), len(times) - 1)
            (t0, a), (t1, b) = self.history[j - 1], self.history[j]
            if t0 - _EPS * self.tau <= t <= t1 + _EPS * self.tau:
                return SpaceTimeSheet(a, b, self.h, t0, t1 - t0)
        for sheet in (self._sheet_or_none(), self.crossing):
            if sheet is not None and sheet.t_n - _EPS * self.tau <= t <= sheet.t_end + _EPS * self.tau:
                return sheet
        raise SchedulingError(f"time {t} not retained on level {self.k}")

    def _sheet_or_none(self):
        return None if self.prev is None else self.sheet


@dataclass(frozen=True)
class BlewUp:
    T_htau: float
    K_reached: int
    blew_up: bool = field(default=True, init=False)


@dataclass(frozen=True)
class NoBlowupDetected:
    step_cap_hit: int
    level: int
    blew_up: bool = field(default=False, init=False)


BlowupOutcome = Union[BlewUp, NoBlowupDetected]


def blowup_time(tau_stars: Sequence[float], lam: float) -> float:
    """Physical duration ``sum_k lam^(2k) tau_k*`` of the recorded levels."""
    if len(tau_stars) == 0:
        raise ValueError("blowup_time needs at least one crossing time")
    return math.fsum(lam ** (2 * k) * t for k, t in enumerate(tau_stars))


def tail_bound(tau_stars: Sequence[float], lam: float) -> float:
    """Upper bound ``lam^(2(K+1)) max tau* / (1 - lam^2)`` on the unrecorded remainder."""
    K = len(tau_stars) - 1
    return lam ** (2 * (K + 1)) * max(tau_stars) / (1.0 - lam * lam)


def find_crossing_time(level: Level, M: float) -> float:
    """Earliest time in the level's last step where a node's linear-in-time magnitude hits ``M``.

    Ties go to the node closest to the centre.
    """
    a = np.abs(level.prev) if level.prev is not None else None
    b = np.abs(level.cur)
    if a is None or b.max() < M:
        raise ValueError("no threshold crossing bracketed by the level's last step")
    with np.errstate(divide="ignore", invalid="ignore"):
        theta = np.where(a >= M, 0.0, (M - a) / (b - a))
    theta = np.where(b >= M, theta, np.inf)
    best = theta.min()
    hits = np.flatnonzero(theta == best)
    i = hits[np.argmin(np.abs(hits - level.I))]
    best = float(np.clip(theta[i], 0.0, 1.0))
    return (level.n - 1) * level.tau + best * level.tau


def interval_from_profile(g: np.ndarray, alpha: float, M: float, symmetric: bool = True):
    """Indices ``(i-, i+)`` (centred) bracketing ``alpha*M`` around the maximum of ``g``."""
    g = np.asarray(g)
    I = g.size // 2
    level = alpha * M
    peak = np.flatnonzero(g == g.max())
    c = int(peak[np.argmin(np.abs(peak - I))])
    if g[c] < level:
        raise DegenerateProfile("profile maximum below alpha*M")
    below = np.flatnonzero(g[c:] < level)
    if below.size == 0:
        raise DegenerateProfile("profile stays above alpha*M up to the right boundary")
    right = c + int(below[0]) - 1
    i_plus = right - I
    if symmetric:
        i_minus = -i_plus
    else:
        below = np.flatnonzero(g[: c + 1][::-1] < level)
        if below.size == 0:
            raise DegenerateProfile("profile stays above alpha*M up to the left boundary")
        i_minus = (c - int(below[0]) + 1) - I
    if i_plus <= 0 and i_minus >= 0:
        raise DegenerateProfile("rescale interval collapsed to a single node")
    return i_minus, i_plus


def find_rescale_interval(level: Level, tau_star: float, alpha: float, M: float, symmetric: bool = True):
    """Rescale interval of ``level`` at its crossing time ``tau_star``."""
    return interval_from_profile(level.profile_at(tau_star), alpha, M, symmetric)


def spawn_level(parent: Level, tau_star: float, interval, config: RunConfig) -> Level:
    """Build level ``k+1`` from the parent's interpolant at ``tau_star``."""
    i_minus, i_plus = interval
    half = max(i_plus, -i_minus)
    if half <= 0:
        raise DegenerateProfile("degenerate rescale interval")
    I_child = config.lambda_inv * half
    lam = config.lam
    xs = lam * (np.arange(-I_child, I_child + 1) * parent.h)
    sheet = parent.crossing if parent.crossing is not None else parent.sheet
    values = lam ** config.scale_exponent * interp_space_time(sheet, xs, tau_star)
    child = Level(
        k=parent.k + 1, I=I_child, h=parent.h, tau=parent.tau, cur=np.asarray(values),
        start=tau_star, anchor=half * parent.h,
    )
    child.spawn_sup = float(np.max(np.abs(child.cur)))
    return child


def boundary_feed(parent: Level, tau_star: float, n: int, config: RunConfig, anchor: Optional[float] = None):
    """Child boundary value(s) at child step ``n`` from the parent's interpolant.

    Returns ``(left, right)``; both come from the right anchor in symmetric mode.
    """
    anchor = parent.xi_plus if anchor is None else anchor
    t = tau_star + config.lam**2 * n * parent.tau
    sheet = parent.sheet_at(t)
    scale = config.lam ** config.scale_exponent
    right = scale * interp_space_time(sheet, anchor, t)
    if config.symmetric:
        return right, right
    return scale * interp_space_time(sheet, -anchor, t), right


def update_coarse(fine: Level, coarse: Level, config: RunConfig) -> Level:
    """Overwrite coarse nodes strictly inside the fine region with rescaled fine values."""
    r = config.lambda_inv
    m = fine.I // r
    if m * r != fine.I:
        raise AssertionError("fine grid count is not a multiple of lambda^-1")
    if m < 2:
        return coarse
    inner = fine.cur[fine.I - r * (m - 1): fine.I + r * (m - 1) + 1: r]
    new = coarse.cur.copy()
    new[coarse.I - (m - 1): coarse.I + m] = config.lam ** (-config.scale_exponent) * inner
    coarse.cur = new
    if coarse.history is not None and coarse.history:
        coarse.history[-1] = (coarse.history[-1][0], new)
    return coarse


@dataclass
class LevelStack:
    config: RunConfig
    levels: List[Level] = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    @property
    def tau_stars(self) -> List[float]:
        return [lv.tau_star for lv in self.levels if lv.tau_star is not None]

    @property
    def mu(self) -> List[float]:
        lam2 = self.config.lam**2
        out, acc = [], []
        for k, t in enumerate(self.tau_stars):
            acc.append(lam2**k * t)
            out.append(math.fsum(acc))
        return out

    @property
    def omega(self) -> List[tuple]:
        """Physical refined intervals ``Omega_k`` for ``k >= 1``."""
        lam = self.config.lam
        return [(-lam**lv.k * lv.I * lv.h, lam**lv.k * lv.I * lv.h) for lv in self.levels[1:]]

    @property
    def K(self) -> int:
        return len(self.tau_stars) - 1

    def _feed(self, parent: Level, child: Level, n: int):
        # the anchor is always a parent node, so only time interpolation is needed
        cfg = self.config
        j = child.I // cfg.lambda_inv
        theta = (child.start + cfg.lam**2 * n * child.tau) / parent.tau - (parent.n - 1)
        if not -_EPS <= theta <= 1.0 + _EPS:
            raise SchedulingError(f"feed time outside level {parent.k}'s sheet (theta={theta})")
        scale = cfg.lam ** cfg.scale_exponent
        pr, pc = parent.prev, parent.cur
        right = scale * ((1.0 - theta) * pr[parent.I + j] + theta * pc[parent.I + j])
        if cfg.symmetric:
            return right, right
        left = scale * ((1.0 - theta) * pr[parent.I - j] + theta * pc[parent.I - j])
        return left, right

    def step(self, k: int) -> None:
        """Advance level ``k`` one step, first advancing its ancestors as needed."""
        cfg = self.config
        lv = self.levels[k]
        n_next = lv.n + 1
        if k == 0:
            zero = 0j if np.iscomplexobj(lv.cur) else 0.0
            left = right = zero
        else:
            parent = self.levels[k - 1]
            need = lv.start / lv.tau + cfg.lam**2 * n_next
            while parent.n < need - _EPS:
                update_coarse(lv, parent, cfg)
                self.step(k - 1)
            left, right = self._feed(parent, lv, n_next)
        # nodes covered by the finer level are refreshed by injection, not stepped
        skip = self.levels[k + 1].I // cfg.lambda_inv if k + 1 < len(self.levels) else 0
        new = advance(lv.cur, cfg, left, right, skip_inner=skip)
        lv.prev, lv.cur, lv.n = lv.cur, new, n_next
        if lv.history is not None:
            lv.history.append((lv.time, new))


def run(config: RunConfig, *, initial=None, record_history: bool = False,
        progress: Optional[Callable[[Level], None]] = None):
    """Run the rescaling algorithm until ``K_max`` rescalings or a step-cap miss.

    Returns ``(stack, outcome, diagnostics)``.
    """
    t0 = time.perf_counter()
    M = threshold_M(config)
    u0 = default_initial_data(config) if initial is None else np.asarray(initial)
    if config.is_complex:
        u0 = u0.astype(np.complex128)
    if u0.size != 2 * config.I + 1:
        raise ValueError("initial data length does not match 2I+1")
    symmetric_data = bool(np.array_equal(u0, u0[::-1]))
    stack = LevelStack(config)
    base = Level.from_values(u0, config.h, config.tau)
    if record_history:
        base.history = [(0.0, base.cur)]
    stack.levels.append(base)
    diag = stack.diagnostics
    diag.update(asymmetric=not symmetric_data, spawn_residuals=[], interval_checks=[],
                overflow=False, levels=[])
    if not symmetric_data:
        logger.warning("asymmetric initial data: rescale intervals and feeds assume symmetric data")

    outcome: BlowupOutcome
    while True:
        k = len(stack.levels) - 1
        lv = stack.levels[k]
        while np.abs(lv.cur).max() < M:
            if lv.n >= config.step_cap:
                outcome = NoBlowupDetected(step_cap_hit=lv.n, level=k)
                diag["runtime_s"] = time.perf_counter() - t0
                return stack, outcome, diag
            stack.step(k)
        lv.n_star = lv.n
        lv.tau_star = find_crossing_time(lv, M)
        lv.crossing = SpaceTimeSheet(lv.prev.copy(), lv.cur.copy(), lv.h, (lv.n - 1) * lv.tau, lv.tau)
        profile = lv.profile_at(lv.tau_star)
        try:
            lv.i_minus, lv.i_plus = interval_from_profile(profile, config.alpha, M, config.symmetric)
        except DegenerateProfile:
            if k == config.K_max:
                lv.i_minus = lv.i_plus = None
            else:
                raise
        diag["levels"].append(dict(k=k, n_k=lv.n_star, tau_star=lv.tau_star, I_k=lv.I,
                                   i_minus=lv.i_minus, i_plus=lv.i_plus))
        if lv.i_plus is not None:
            diag["interval_checks"].append(_interval_ok(profile, lv.i_minus, lv.i_plus, config.alpha * M))
        if progress is not None:
            progress(lv)
        if k >= config.K_max:
            break
        child = spawn_level(lv, lv.tau_star, (lv.i_minus, lv.i_plus), config)
        diag["spawn_residuals"].append(child.spawn_sup - config.lam ** config.scale_exponent * M)
        if record_history:
            child.history = [(0.0, child.cur)]
        stack.levels.append(child)

    taus = stack.tau_stars
    outcome = BlewUp(T_htau=blowup_time(taus, config.lam), K_reached=len(taus) - 1)
    diag["tail_bound"] = tail_bound(taus, config.lam)
    diag["runtime_s"] = time.perf_counter() - t0
    return stack, outcome, diag


def _interval_ok(g, i_minus, i_plus, level) -> bool:
    I = g.size // 2
    lo, hi = I + i_minus, I + i_plus
    return bool(g[lo - 1] < level <= g[lo] and g[hi + 1] < level <= g[hi])


def composite_eval(stack: LevelStack, x: float, t: float):
    """Global solution assembled from the levels by undoing the zooms.

    Needs the level data at the requested times: either the run kept full
    history, or ``t`` falls inside a retained sheet.
    """
    cfg = stack.config
    lam, a = cfg.lam, cfg.scale_exponent
    if not -1.0 <= x <= 1.0:
        raise ValueError("x outside [-1, 1]")
    mu = stack.mu
    if t < 0 or (mu and t > mu[-1] * (1 + 1e-12) and len(stack.levels) == len(mu)):
        raise ValueError(f"t={t} beyond the computed horizon")
    K = bisect.bisect_right(mu, t)
    K = min(K, len(stack.levels) - 1)
    k = 0
    for j in range(1, K + 1):
        lvj = stack.levels[j]
        if abs(x) < lam**j * lvj.I * lvj.h:
            k = j
        else:
            break
    lvk = stack.levels[k]
    local_t = (t - (mu[k - 1] if k > 0 else 0.0)) / lam ** (2 * k)
    sheet = lvk.sheet_at(local_t)
    xi = x / lam**k
    return lam ** (-a * k) * interp_space_time(sheet, xi, min(max(local_t, sheet.t_n), sheet.t_end))


def composite_jumps(stack: LevelStack, t: float) -> List[float]:
    """Jump magnitudes of the composite solution across each ``Omega_k`` edge at time ``t``."""
    out = []
    for k, (lo, hi) in enumerate(stack.omega, start=1):
        if k >= len(stack.mu) + 1:
            break
        eps = 1e-9 * hi
        try:
            inside = composite_eval(stack, hi - eps, t)
            outside = composite_eval(stack, hi + eps, t)
        except (SchedulingError, ValueError):
            continue
        out.append(float(abs(inside - outside)))
    return out
