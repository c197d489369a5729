"""Explicit Euler stepping for the heat and complex Ginzburg-Landau schemes.

The CGL unknown is carried internally as a complex array ``V + iW``; in that
form one step reads ``U + tau[(1 + i gamma) D2 U + (1 + i delta) |U|^(p-1) U]``,
which is the real/imaginary pair update written out termwise.

In symmetric mode only the nodes ``i >= 0`` are evaluated, with the centre
stencil ``D1 U_0 = 0`` and ``D2 U_0 = 2 (U_1 - U_0) / h^2``, and the result is
mirrored, so symmetric input stays symmetric bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .pde_core import RunConfig


class NumericalOverflow(ArithmeticError):
    """A step produced a non-finite value."""


@dataclass(frozen=True)
class HeatState:
    values: np.ndarray
    n: int = 0
    boundary: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size % 2 != 1 or v.size < 3:
            raise ValueError("heat state needs an odd number (>= 3) of nodes")
        object.__setattr__(self, "values", v)

    @property
    def I(self) -> int:
        return self.values.size // 2


@dataclass(frozen=True)
class CGLState:
    re: np.ndarray
    im: np.ndarray
    n: int = 0
    boundary_re: float = 0.0
    boundary_im: float = 0.0

    def __post_init__(self):
        re = np.asarray(self.re, dtype=float)
        im = np.asarray(self.im, dtype=float)
        if re.shape != im.shape or re.ndim != 1 or re.size % 2 != 1 or re.size < 3:
            raise ValueError("re and im must be 1-D with the same odd length (>= 3)")
        object.__setattr__(self, "re", re)
        object.__setattr__(self, "im", im)

    @classmethod
    def from_complex(cls, u, n: int = 0, boundary: complex = 0.0) -> "CGLState":
        u = np.asarray(u, dtype=complex)
        return cls(u.real.copy(), u.imag.copy(), n, complex(boundary).real, complex(boundary).imag)

    def as_complex(self) -> np.ndarray:
        return self.re + 1j * self.im

    @property
    def modulus(self) -> np.ndarray:
        return np.hypot(self.re, self.im)

    @property
    def I(self) -> int:
        return self.re.size // 2


def _check_interior(values, i: int) -> int:
    I = len(values) // 2
    if not -I < i < I:
        raise IndexError(f"index {i} outside the interior range ({-I}, {I})")
    return i + I


def central_diff(values, h: float, i: int) -> float:
    """``(U_{i+1} - U_{i-1}) / (2h)``, with ``i`` counted from the centre node."""
    j = _check_interior(values, i)
    return (values[j + 1] - values[j - 1]) / (2.0 * h)


def second_diff(values, h: float, i: int) -> float:
    """``(U_{i-1} - 2 U_i + U_{i+1}) / h^2``, with ``i`` counted from the centre node."""
    j = _check_interior(values, i)
    return (values[j - 1] - 2.0 * values[j] + values[j + 1]) / (h * h)


def _source(u, p, beta, q, delta, grad, is_complex):
    if is_complex:
        return (1.0 + 1j * delta) * (np.abs(u) ** (p - 1.0) * u)
    s = np.abs(u) ** (p - 1.0) * u
    if beta != 0.0:
        s = s + beta * np.abs(grad) ** q
    return s


def advance(u: np.ndarray, config: RunConfig, left, right=None, *, h: Optional[float] = None,
            tau: Optional[float] = None, symmetric: Optional[bool] = None,
            skip_inner: int = 0) -> np.ndarray:
    """One Euler step of the configured scheme on a full nodal vector.

    ``left``/``right`` are the Dirichlet values imposed at the new time
    level (``right`` defaults to ``left``). Nodes with ``|i| < skip_inner``
    are copied unchanged. Raises NumericalOverflow when the result is not
    finite.
    """
    h = config.h if h is None else h
    tau = config.tau if tau is None else tau
    symmetric = config.symmetric if symmetric is None else symmetric
    right = left if right is None else right
    is_complex = np.iscomplexobj(u)
    p, beta, q = config.p, config.beta, config.q
    diff = (1.0 + 1j * config.gamma) if is_complex else 1.0
    need_grad = (not is_complex) and beta != 0.0
    inv_h2 = 1.0 / (h * h)
    I = u.size // 2
    m = max(int(skip_inner), 0)
    if m >= I:
        raise ValueError("skip_inner leaves no node to update")
    with np.errstate(over="ignore", invalid="ignore"):
        return _advance(u, left, right, h, tau, symmetric, m, I, p, beta, q, config.delta,
                        diff, need_grad, inv_h2, is_complex)


def _advance(u, left, right, h, tau, symmetric, m, I, p, beta, q, delta, diff, need_grad,
             inv_h2, is_complex):

    if symmetric and left == right:
        half = u[I:]
        new_half = half.copy()
        if m == 0:
            core = half[:-1]
            d2 = np.empty_like(core)
            d2[0] = 2.0 * (half[1] - half[0]) * inv_h2
            d2[1:] = (half[:-2] - 2.0 * half[1:-1] + half[2:]) * inv_h2
            grad = None
            if need_grad:
                grad = np.empty_like(core)
                grad[0] = 0.0
                grad[1:] = (half[2:] - half[:-2]) / (2.0 * h)
        else:
            core = half[m:-1]
            d2 = (half[m - 1:-2] - 2.0 * core + half[m + 1:]) * inv_h2
            grad = (half[m + 1:] - half[m - 1:-2]) / (2.0 * h) if need_grad else None
        upd = core + tau * (diff * d2 + _source(core, p, beta, q, delta, grad, is_complex))
        if not np.isfinite(upd).all():
            raise NumericalOverflow("non-finite value produced by the Euler step")
        new_half[m:-1] = upd
        new_half[-1] = right
        return np.concatenate([new_half[:0:-1], new_half])

    new = u.copy()
    if m == 0:
        spans = [(1, 2 * I)]
    else:
        spans = [(1, I - m + 1), (I + m, 2 * I)]
    for lo, hi in spans:
        core = u[lo:hi]
        d2 = (u[lo - 1:hi - 1] - 2.0 * core + u[lo + 1:hi + 1]) * inv_h2
        grad = (u[lo + 1:hi + 1] - u[lo - 1:hi - 1]) / (2.0 * h) if need_grad else None
        upd = core + tau * (diff * d2 + _source(core, p, beta, q, delta, grad, is_complex))
        if not np.isfinite(upd).all():
            raise NumericalOverflow("non-finite value produced by the Euler step")
        new[lo:hi] = upd
    new[0] = left
    new[-1] = right
    return new


def heat_step(state: HeatState, config: RunConfig, next_boundary: float, **kw) -> HeatState:
    """Advance a heat state one step; keyword overrides ``h``, ``tau``, ``symmetric``."""
    if config.is_complex:
        raise ValueError("heat_step called with a CGL configuration")
    new = advance(state.values, config, float(next_boundary), **kw)
    return replace(state, values=new, n=state.n + 1, boundary=float(next_boundary))


def cgl_step(state: CGLState, config: RunConfig, next_boundary=(0.0, 0.0), **kw) -> CGLState:
    """Advance a CGL state one step; ``next_boundary`` is a (re, im) pair."""
    if not config.is_complex:
        raise ValueError("cgl_step called with a heat configuration")
    b = complex(next_boundary[0], next_boundary[1])
    new = advance(state.as_complex(), config, b, **kw)
    return CGLState(new.real.copy(), new.imag.copy(), state.n + 1, b.real, b.imag)


def sup_norm(state) -> float:
    """Max-abs (heat) or max-modulus (CGL) over all nodes."""
    if isinstance(state, HeatState):
        return float(np.max(np.abs(state.values)))
    if isinstance(state, CGLState):
        return float(np.max(np.hypot(state.re, state.im)))
    return float(np.max(np.abs(np.asarray(state))))
