"""Post-processing of completed runs: crossing-time asymptotics, blow-up
rate, rescaled profiles against their closed forms, and profile-coefficient
estimates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .interp import interp_space_time
from .pde_core import RunConfig, b_theory, default_initial_data, tau_star_limit_value
from .rescaler import LevelStack
from .stepper import advance

DEFAULT_Z = np.linspace(-0.995, 0.995, 201)
NEAR_SINGULAR_FRACTION = 0.1


class InsufficientData(ValueError):
    """Not enough levels or samples for the requested estimate."""


class PhaseUnwrapError(ValueError):
    pass


def tau_star_limit(p: float, M: float, lam: float) -> float:
    """Limit of the per-level crossing time as the level index grows."""
    if not (p > 1 and M > 0 and 0 < lam < 1):
        raise ValueError("need p > 1, M > 0 and 0 < lambda < 1")
    return tau_star_limit_value(p, M, lam)


# --- blow-up time and rate ---------------------------------------------------

@dataclass(frozen=True)
class BlowupTimes:
    partial: float      # sum over recorded levels
    tail_bound: float   # bound on the unrecorded remainder
    estimate: float     # partial sum plus geometric extrapolation of the last level
    t: np.ndarray       # t_k, physical time of each crossing


def blowup_times(stack: LevelStack) -> BlowupTimes:
    taus = stack.tau_stars
    lam2 = stack.config.lam ** 2
    t = np.array(stack.mu)
    K = len(taus) - 1
    partial = float(t[-1])
    bound = lam2 ** (K + 1) * max(taus) / (1.0 - lam2)
    extrap = lam2 ** (K + 1) * taus[-1] / (1.0 - lam2)
    return BlowupTimes(partial, bound, partial + extrap, t)


@dataclass
class RateSeries:
    t: np.ndarray
    T_minus_t: np.ndarray
    sup_norm: np.ndarray

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.T_minus_t = np.asarray(self.T_minus_t, dtype=float)
        self.sup_norm = np.asarray(self.sup_norm, dtype=float)
        d = self.T_minus_t
        if np.any(d <= 0) or np.any(np.diff(d) >= 0):
            raise ValueError("T - t must be positive and strictly decreasing")

    @property
    def samples(self):
        return list(zip(self.T_minus_t.tolist(), self.sup_norm.tolist()))


def time_to_blowup(stack: LevelStack) -> np.ndarray:
    """``T - t_k`` for every recorded level, summed from the tail.

    Subtracting ``t_k`` from ``T`` directly loses everything once
    ``T - t_k`` falls below machine precision relative to ``T``.
    """
    taus = np.array(stack.tau_stars)
    lam2 = stack.config.lam ** 2
    k = np.arange(taus.size)
    contrib = lam2 ** k * taus
    extrap = lam2 ** taus.size * taus[-1] / (1.0 - lam2)
    tail = np.cumsum(contrib[::-1])[::-1]
    return np.concatenate([tail[1:], [0.0]]) + extrap


def rate_series(stack: LevelStack) -> RateSeries:
    """Composite sup-norm ``lam^(-2k/(p-1)) M`` at every crossing time ``t_k``.

    ``T - t_k`` is measured against the extrapolated numerical blow-up time.
    """
    cfg = stack.config
    t = np.array(stack.mu)
    k = np.arange(t.size)
    sup = cfg.threshold * cfg.lam ** (-cfg.scale_exponent * k)
    return RateSeries(t, time_to_blowup(stack), sup)


def blowup_rate_fit(series: RateSeries, fit_fraction: float = 0.5) -> float:
    """Least-squares slope of ``log sup-norm`` against ``log(T - t)`` over the last samples.

    Expected near ``-1/(p-1)``.
    """
    d, s = series.T_minus_t, series.sup_norm
    if d.size < 10:
        raise InsufficientData(f"need at least 10 samples, got {d.size}")
    if math.log10(d.max() / d.min()) < 3.0:
        raise InsufficientData("samples span fewer than 3 decades of T - t")
    start = int(math.floor(d.size * (1.0 - fit_fraction)))
    x, y = np.log(d[start:]), np.log(s[start:])
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)


# --- profiles ------------------------------------------------------------------

def _profile_base(z, alpha, lam, p):
    return 1.0 + (alpha ** (1.0 - p) - 1.0) * z * z / (lam * lam)


def predicted_profile_heat(z, M: float, alpha: float, lam: float, p: float):
    """``M (1 + (alpha^(1-p) - 1) z^2 / lam^2)^(-1/(p-1))``; equals ``alpha*M`` at ``z = +-lam``."""
    z = np.asarray(z, dtype=float)
    out = M * _profile_base(z, alpha, lam, p) ** (-1.0 / (p - 1.0))
    return out[()] if out.ndim == 0 else out


def predicted_profile_cgl(z, k: int, theta: float, config: RunConfig, phase_drift: str = "alpha"):
    """Predicted modulus and phase of the level-``k`` rescaled CGL profile.

    ``phase_drift`` picks the logarithm in the level-dependent phase term:
    ``"alpha"`` uses ``-2k ln(alpha)``, ``"lambda"`` uses ``-2k ln(lambda)``.
    """
    if phase_drift not in ("alpha", "lambda"):
        raise ValueError("phase_drift must be 'alpha' or 'lambda'")
    p, alpha, lam, delta = config.p, config.alpha, config.lam, config.delta
    M = config.threshold
    z = np.asarray(z, dtype=float)
    base = _profile_base(z, alpha, lam, p)
    modulus = M * base ** (-1.0 / (p - 1.0))
    log_drift = math.log(alpha) if phase_drift == "alpha" else math.log(lam)
    c = delta / (p - 1.0)
    phase = theta + c * (math.log(M) + math.log(p - 1.0) - 2.0 * k * log_drift) - c * np.log(base)
    return modulus, phase


def unwrap_from_centre(z, phase):
    """Unwrap a phase sampled on ``z`` starting at the sample nearest ``z = 0``."""
    z = np.asarray(z)
    phase = np.asarray(phase, dtype=float)
    c = int(np.argmin(np.abs(z)))
    right = np.unwrap(phase[c:])
    left = np.unwrap(phase[c::-1])[::-1]
    return np.concatenate([left[:-1], right])


def fit_phase_offset(computed_phase, predicted_phase_shape) -> float:
    """Least-squares constant offset between two unwrapped phase samplings."""
    a = np.asarray(computed_phase, dtype=float)
    b = np.asarray(predicted_phase_shape, dtype=float)
    if a.shape != b.shape:
        raise ValueError("phase samplings differ in shape")
    for arr in (a, b):
        if arr.size > 1 and np.max(np.abs(np.diff(arr))) > math.pi:
            raise PhaseUnwrapError("jump larger than pi between adjacent samples")
    return float(np.mean(a - b))


@dataclass
class ProfileReport:
    k: int
    z: np.ndarray
    computed: np.ndarray
    predicted: np.ndarray
    error_sup: float
    computed_phase: Optional[np.ndarray] = None
    predicted_phase: Optional[np.ndarray] = None
    theta: Optional[float] = None
    phase_error: Optional[float] = None
    phase_drift: Optional[str] = None


def rescaled_profile(stack: LevelStack, k: int, z=None, phase_drift: str = "lambda") -> ProfileReport:
    """Sample level ``k`` at ``(z lam^-1 xi+_{k-1}, tau_k*)`` and compare with the closed form.

    For CGL the comparison is on the modulus; the phase is unwrapped from
    ``z = 0`` and matched to the predicted phase after fitting the free
    rotation ``theta``.
    """
    if k < 1:
        raise ValueError("level 0 has no parent interval; rescaled profiles start at k = 1")
    cfg = stack.config
    if k >= len(stack.levels) or stack.levels[k].tau_star is None:
        raise InsufficientData(f"level {k} has no recorded crossing")
    lv, parent = stack.levels[k], stack.levels[k - 1]
    z = DEFAULT_Z if z is None else np.asarray(z, dtype=float)
    if np.any(np.abs(z) >= 1):
        raise ValueError("profile samples need |z| < 1")
    xs = z * parent.xi_plus / cfg.lam
    values = interp_space_time(lv.crossing, xs, lv.tau_star)
    M = cfg.threshold
    if not cfg.is_complex:
        pred = predicted_profile_heat(z, M, cfg.alpha, cfg.lam, cfg.p)
        comp = np.asarray(values, dtype=float)
        return ProfileReport(k, z, comp, pred, float(np.max(np.abs(comp - pred))))
    modulus = np.abs(values)
    phase = unwrap_from_centre(z, np.angle(values))
    pred_mod, pred_shape = predicted_profile_cgl(z, k, 0.0, cfg, phase_drift)
    theta = fit_phase_offset(phase, pred_shape)
    pred_phase = pred_shape + theta
    return ProfileReport(
        k, z, modulus, pred_mod, float(np.max(np.abs(modulus - pred_mod))),
        computed_phase=phase, predicted_phase=pred_phase, theta=theta,
        phase_error=float(np.max(np.abs(phase - pred_phase))), phase_drift=phase_drift,
    )


def profile_error(report: ProfileReport) -> float:
    return float(np.max(np.abs(np.asarray(report.computed) - np.asarray(report.predicted))))


def phase_drift_spread(stack: LevelStack, ks: Sequence[int], phase_drift: str) -> float:
    """Largest circular deviation of the fitted rotation ``theta_k`` across levels ``ks``.

    A drift variant that matches the data leaves ``theta_k`` nearly constant.
    """
    thetas = np.array([rescaled_profile(stack, k, phase_drift=phase_drift).theta for k in ks])
    dev = np.angle(np.exp(1j * (thetas - thetas[-1])))
    return float(np.max(np.abs(dev)))


def choose_phase_drift(stack: LevelStack, ks: Sequence[int]) -> dict:
    spreads = {v: phase_drift_spread(stack, ks, v) for v in ("alpha", "lambda")}
    return {"variant": min(spreads, key=spreads.get), "spread": spreads}


# --- profile coefficient -------------------------------------------------------

@dataclass
class BCoefficientReport:
    params: dict
    K: int
    xi_plus_K: float
    xi_plus_ref: float
    zeta_K: float
    zeta_limit: float
    b_estimate: float
    b_theory: Optional[float]
    settled: bool
    ratio_change: float
    near_singular: bool = False
    ratios: List[float] = field(default_factory=list)


def _T_minus_t(stack: LevelStack, k: int) -> float:
    return float(time_to_blowup(stack)[k])


def s_ratio_series(stack: LevelStack, ks: Sequence[int]) -> List[float]:
    """``s_k / (xi+_{k-1})^2`` with ``s_k = -log(T - t_k)``."""
    out = []
    for k in ks:
        xi = stack.levels[k - 1].xi_plus
        out.append(-math.log(_T_minus_t(stack, k)) / (xi * xi))
    return out


def zeta(stack: LevelStack, k: int) -> float:
    """``(p-1) (kappa U^(k)(xi+_{k-1}, tau_k*)^(1-p) - lam^(-2k) (T - t_k))``."""
    cfg = stack.config
    p, lam = cfg.p, cfg.lam
    kappa = (p - 1.0) ** (-1.0 / (p - 1.0))
    lv = stack.levels[k]
    u = abs(interp_space_time(lv.crossing, stack.levels[k - 1].xi_plus, lv.tau_star))
    return (p - 1.0) * (kappa * u ** (1.0 - p) - lam ** (-2 * k) * _T_minus_t(stack, k))


def zeta_limit(config: RunConfig) -> float:
    p = config.p
    kappa = (p - 1.0) ** (-1.0 / (p - 1.0))
    return config.threshold ** (1.0 - p) * ((p - 1.0) * kappa * config.alpha ** (1.0 - p) - 1.0)


def b_theory_for(config: RunConfig) -> Optional[float]:
    """Theory value of the profile coefficient for a configuration, when one exists."""
    if config.is_complex:
        return b_theory(config.p, config.delta, config.gamma)
    return b_theory(config.p) if config.beta == 0 else None


def _b_report(stack, reference, K, theory, params, window=10, require_settled=False):
    cfg = stack.config
    ref_cfg = reference.config
    for name in ("p", "lambda_inv", "alpha", "I", "amplitude", "tau_ratio"):
        if getattr(cfg, name) != getattr(ref_cfg, name):
            raise ValueError(f"runs differ in {name}; the calibration needs identical mechanics")
    for st in (stack, reference):
        if len(st.tau_stars) <= K:
            raise InsufficientData(f"run did not reach level {K}")
    if K < window + 1:
        raise InsufficientData(f"K must exceed the settling window ({window})")
    xi_b = stack.levels[K - 1].xi_plus
    xi_0 = reference.levels[K - 1].xi_plus
    b0 = (cfg.p - 1.0) ** 2 / (4.0 * cfg.p)
    b_est = b0 * (xi_0 / xi_b) ** 2
    ratios = s_ratio_series(stack, range(K - window, K + 1))
    change = abs(ratios[-1] - ratios[0]) / abs(ratios[-1])
    settled = change < 0.01
    if require_settled and not settled:
        raise InsufficientData(f"s_k/xi^2 still drifting ({change:.2%} over {window} levels)")
    denom = cfg.p - cfg.delta**2 - cfg.gamma * cfg.delta * (cfg.p + 1.0)
    near = cfg.is_complex and denom < NEAR_SINGULAR_FRACTION * cfg.p
    return BCoefficientReport(
        params=params, K=K, xi_plus_K=xi_b, xi_plus_ref=xi_0,
        zeta_K=zeta(stack, K) if K < len(stack.tau_stars) else float("nan"),
        zeta_limit=zeta_limit(cfg), b_estimate=b_est, b_theory=theory,
        settled=settled, ratio_change=change, near_singular=bool(near), ratios=ratios,
    )


def estimate_b_beta(run_beta: LevelStack, run_zero: LevelStack, K: int, **kw) -> BCoefficientReport:
    """``b(beta) = b(0) [xi+_{K-1}(0) / xi+_{K-1}(beta)]^2`` with ``b(0) = (p-1)^2/(4p)``."""
    cfg = run_beta.config
    if run_zero.config.beta != 0:
        raise ValueError("calibration run must have beta = 0")
    theory = b_theory(cfg.p) if cfg.beta == 0 else None
    return _b_report(run_beta, run_zero, K, theory, {"beta": cfg.beta}, **kw)


def estimate_b_cgl(run: LevelStack, calibration: LevelStack, K: int, **kw) -> BCoefficientReport:
    """CGL analogue of the beta estimator, calibrated on a ``delta = gamma = 0`` run."""
    cfg = run.config
    cal = calibration.config
    if cal.delta != 0 or cal.gamma != 0:
        raise ValueError("calibration run must have delta = gamma = 0")
    return _b_report(run, calibration, K, b_theory(cfg.p, cfg.delta, cfg.gamma),
                     {"delta": cfg.delta, "gamma": cfg.gamma}, **kw)


# --- grid convergence ------------------------------------------------------------

@dataclass(frozen=True)
class ConvergenceResult:
    I_list: tuple
    t_end: float
    E1: float      # |U_I - U_4I| at shared nodes
    E2: float      # |U_2I - U_4I| at shared nodes
    E12: float     # |U_I - U_2I| at shared nodes
    order: float


def _first_crossing_time(config: RunConfig) -> float:
    u = default_initial_data(config)
    M = config.threshold
    n = 0
    while np.abs(u).max() < M:
        if n >= config.step_cap:
            raise InsufficientData("base run never reaches the threshold")
        prev, u = u, advance(u, config, 0.0)
        n += 1
    a, b = np.abs(prev).max(), np.abs(u).max()
    return (n - 1 + (M - a) / (b - a)) * config.tau


def convergence_study(config: RunConfig, I_list: Sequence[int], t_end: Optional[float] = None) -> ConvergenceResult:
    """Observed spatial order of the un-rescaled scheme from three nested grids.

    With ``tau`` tied to ``h^2`` the time error is of the same order. The
    window ends before the coarsest grid first reaches the threshold.
    """
    I_list = tuple(int(i) for i in I_list)
    if len(I_list) != 3 or len(set(I_list)) != 3:
        raise ValueError("need three distinct grids")
    I0, I1, I2 = I_list
    if I1 != 2 * I0 or I2 != 4 * I0:
        raise ValueError("grids must be nested as [I, 2I, 4I]")
    coarse = config.replace(I=I0, K_max=0)
    tau0 = coarse.tau
    t_star = _first_crossing_time(coarse)
    if t_end is None:
        t_end = 0.5 * t_star
    if t_end >= t_star:
        raise ValueError("t_end reaches past the first rescale of the coarsest run")
    n0 = int(math.floor(t_end / tau0 + 1e-9))
    if n0 < 1:
        raise ValueError("grid too coarse: the comparison window holds no time step")
    t_end = n0 * tau0
    sols = []
    for j, I in enumerate(I_list):
        cfg = config.replace(I=I, K_max=0)
        u = default_initial_data(cfg)
        for _ in range(n0 * 4**j):
            u = advance(u, cfg, 0.0)
        if np.abs(u).max() >= cfg.threshold:
            raise ValueError("comparison window crosses a rescale")
        sols.append(u[:: 2**j])
    E1 = float(np.max(np.abs(sols[0] - sols[2])))
    E2 = float(np.max(np.abs(sols[1] - sols[2])))
    E12 = float(np.max(np.abs(sols[0] - sols[1])))
    if E2 == 0.0 or E1 <= E2:
        raise ZeroDivisionError("degenerate error ratio; grids do not refine")
    # for order r, E1/E2 = 2^r + 1
    order = math.log2(E1 / E2 - 1.0)
    return ConvergenceResult(I_list, t_end, E1, E2, E12, order)
