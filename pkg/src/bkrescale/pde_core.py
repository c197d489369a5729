"""Problem definitions, run configuration and the scaling transformation.

Both model problems live on the interval (-1, 1) with homogeneous Dirichlet
data and are invariant under ``u -> lam**(2/(p-1)) * u(lam*x, lam**2*t)``:

* heat: ``u_t = u_xx + |u|^(p-1) u + beta |u_x|^q``
* cgl:  ``u_t = (1 + i gamma) u_xx + (1 + i delta) |u|^(p-1) u``
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np


class ConfigError(ValueError):
    """Raised for invalid or incomplete run configurations."""


class EquationKind(enum.Enum):
    HEAT = "heat"
    CGL = "cgl"

    @classmethod
    def parse(cls, value) -> "EquationKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ConfigError(f"unknown equation kind {value!r} (expected 'heat' or 'cgl')") from None


@dataclass(frozen=True)
class RunConfig:
    """Every parameter of a rescaling run, validated on construction.

    ``q`` defaults to the scale-critical exponent ``2p/(p+1)`` and
    ``step_cap`` (per-level step budget) to ten times the expected number of
    steps per level, floored at one million.
    """

    equation: EquationKind = EquationKind.HEAT
    p: float = 5.0
    beta: float = 0.0
    q: Optional[float] = None
    gamma: float = 0.0
    delta: float = 0.0
    lambda_inv: int = 2
    alpha: float = 0.4
    amplitude: float = 1.2
    I: int = 50
    tau_ratio: float = 0.25
    K_max: int = 80
    step_cap: Optional[int] = None
    symmetric: bool = True

    def __post_init__(self):
        object.__setattr__(self, "equation", EquationKind.parse(self.equation))
        if not self.p > 1:
            raise ConfigError(f"p must be > 1, got {self.p}")
        if self.q is None:
            object.__setattr__(self, "q", 2.0 * self.p / (self.p + 1.0))
        if not 1.0 <= self.q < 2.0:
            raise ConfigError(f"q must lie in [1, 2), got {self.q}")
        if int(self.lambda_inv) != self.lambda_inv or self.lambda_inv < 2:
            raise ConfigError(f"lambda_inv must be an integer >= 2, got {self.lambda_inv}")
        object.__setattr__(self, "lambda_inv", int(self.lambda_inv))
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.amplitude > 0:
            raise ConfigError(f"amplitude must be > 0, got {self.amplitude}")
        if int(self.I) != self.I or self.I < 2:
            raise ConfigError(f"I must be an integer >= 2, got {self.I}")
        object.__setattr__(self, "I", int(self.I))
        if not 0.0 < self.tau_ratio <= 0.5:
            raise ConfigError(f"tau_ratio must lie in (0, 1/2], got {self.tau_ratio}")
        if int(self.K_max) != self.K_max or self.K_max < 0:
            raise ConfigError(f"K_max must be a non-negative integer, got {self.K_max}")
        object.__setattr__(self, "K_max", int(self.K_max))
        if self.step_cap is None:
            expected = tau_star_limit_value(self.p, self.threshold, self.lam) / self.tau
            object.__setattr__(self, "step_cap", max(10 * int(math.ceil(expected)), 10**6))
        if int(self.step_cap) != self.step_cap or self.step_cap < 1:
            raise ConfigError(f"step_cap must be a positive integer, got {self.step_cap}")
        object.__setattr__(self, "step_cap", int(self.step_cap))

    @property
    def lam(self) -> float:
        return 1.0 / self.lambda_inv

    @property
    def h(self) -> float:
        return 1.0 / self.I

    @property
    def tau(self) -> float:
        return self.tau_ratio * self.h * self.h

    @property
    def scale_exponent(self) -> float:
        """Amplitude exponent ``2/(p-1)`` of the scaling map."""
        return 2.0 / (self.p - 1.0)

    @property
    def threshold(self) -> float:
        return threshold_M(self)

    @property
    def is_complex(self) -> bool:
        return self.equation is EquationKind.CGL

    def replace(self, **changes) -> "RunConfig":
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        if "p" in changes and "q" not in changes:
            # keep q tied to p unless it was set explicitly away from the critical value
            if math.isclose(values["q"], 2.0 * values["p"] / (values["p"] + 1.0)):
                values["q"] = None
        if any(k in changes for k in ("p", "I", "tau_ratio", "lambda_inv", "amplitude")):
            values["step_cap"] = changes.get("step_cap")
        unknown = set(changes) - set(values)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        values.update(changes)
        return RunConfig(**values)

    def as_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = v.value if isinstance(v, EquationKind) else v
        return out


@dataclass(frozen=True)
class DerivedConstants:
    M: float
    kappa: float
    b_theory: Optional[float]
    mu_cgl: Optional[float]
    lam: float = field(repr=False, default=0.5)


def b_theory(p: float, delta: float = 0.0, gamma: float = 0.0) -> Optional[float]:
    """Quadratic profile coefficient ``(p-1)^2 / (4 (p - delta^2 - gamma delta (p+1))))``.

    Returns None when the denominator is not positive.
    """
    denom = p - delta * delta - gamma * delta * (p + 1.0)
    if denom <= 0:
        return None
    return (p - 1.0) ** 2 / (4.0 * denom)


def derived_constants(config: RunConfig) -> DerivedConstants:
    p = config.p
    kappa = (p - 1.0) ** (-1.0 / (p - 1.0))
    if config.is_complex:
        b = b_theory(p, config.delta, config.gamma)
    else:
        b = b_theory(p) if config.beta == 0 else None
    mu = None
    if config.is_complex and b is not None:
        mu = -2.0 * config.gamma * b * (1.0 + config.delta**2) / (p - 1.0) ** 2
    return DerivedConstants(M=threshold_M(config), kappa=kappa, b_theory=b, mu_cgl=mu, lam=config.lam)


def grid(config: RunConfig, I: Optional[int] = None) -> np.ndarray:
    """Nodes ``x_i = i*h`` for ``-I <= i <= I``."""
    I = config.I if I is None else I
    return np.arange(-I, I + 1) * config.h


def default_initial_data(config: RunConfig) -> np.ndarray:
    """Sample ``A (1 + cos(pi x))`` on the base grid.

    Returns a complex array (zero imaginary part) for the CGL problem. The
    endpoints are exactly zero and the vector is symmetric bit-for-bit.
    """
    I = config.I
    half = config.amplitude * (1.0 + np.cos(np.pi * (np.arange(0, I + 1) / I)))
    half[-1] = 0.0
    u0 = np.concatenate([half[:0:-1], half])
    if config.is_complex:
        return u0.astype(np.complex128)
    return u0


def rescale_state(state, lam: float, p: float):
    """Apply the amplitude part of the scaling map, ``lam**(2/(p-1)) * state``."""
    if not lam > 0:
        raise ValueError(f"lambda must be > 0, got {lam}")
    if not p > 1:
        raise ValueError(f"p must be > 1, got {p}")
    return lam ** (2.0 / (p - 1.0)) * np.asarray(state)


def threshold_M(config: RunConfig) -> float:
    """Rescaling threshold chosen so every spawned level starts at ``2A``."""
    return 2.0 * config.amplitude * config.lam ** (-2.0 / (config.p - 1.0))


def tau_star_limit_value(p: float, M: float, lam: float) -> float:
    """Asymptotic per-level crossing time ``M^(1-p) (lam^-2 - 1) / (p-1)``."""
    return M ** (1.0 - p) * (lam**-2 - 1.0) / (p - 1.0)
