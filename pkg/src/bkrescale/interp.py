"""Piecewise-linear interpolation in space and time of centred grid data.

Grids are ``x_i = i*h`` with ``-I <= i <= I``. Positions are located by
their offset from the centre node and the two signs are handled by mirrored
code paths, so a symmetric slice interpolates to identical values at ``x``
and ``-x``. Nodes are reproduced exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# round-off allowance for computed positions and times, relative to their magnitude
_SNAP = 16 * np.finfo(float).eps


@dataclass(frozen=True)
class SpaceTimeSheet:
    """Two consecutive time slices: ``prev`` at ``t_n`` and ``cur`` at ``t_n + tau``."""

    prev: np.ndarray
    cur: np.ndarray
    h: float
    t_n: float
    tau: float

    def __post_init__(self):
        if np.shape(self.prev) != np.shape(self.cur):
            raise ValueError("sheet slices must have identical length")
        if not self.tau > 0:
            raise ValueError("sheet tau must be > 0")

    @property
    def t_end(self) -> float:
        return self.t_n + self.tau

    @property
    def I(self) -> int:
        return len(self.cur) // 2

    def at_time(self, t: float) -> np.ndarray:
        """Whole slice interpolated linearly in time."""
        theta = _time_weight(self, t)
        if theta == 0.0:
            return np.array(self.prev, copy=True)
        if theta == 1.0:
            return np.array(self.cur, copy=True)
        return (1.0 - theta) * self.prev + theta * self.cur


def _time_weight(sheet: SpaceTimeSheet, t: float) -> float:
    tol = _SNAP * max(abs(sheet.t_n), abs(sheet.t_end), sheet.tau)
    if abs(t - sheet.t_n) <= tol:
        return 0.0
    if abs(t - sheet.t_end) <= tol:
        return 1.0
    theta = (t - sheet.t_n) / sheet.tau
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"time {t} outside sheet [{sheet.t_n}, {sheet.t_end}]")
    return theta


def _locate(I: int, h: float, x):
    """Cell index pairs ``(near, far)`` (array positions) and weight on ``far``."""
    r = np.asarray(x, dtype=float) / h
    a = np.abs(r)
    nearest = np.rint(a)
    a = np.where(np.abs(a - nearest) < _SNAP * np.maximum(1.0, nearest), nearest, a)
    if np.any(a > I):
        raise ValueError(f"position outside the grid extent [-{I * h}, {I * h}]")
    j = np.maximum(np.ceil(a) - 1.0, 0.0)
    w = a - j
    j = j.astype(np.intp)
    sign = np.where(r < 0, -1, 1)
    near = I + sign * j
    far = I + sign * (j + 1)
    far = np.minimum(np.maximum(far, 0), 2 * I)
    return near, far, w


def interp_space(values, h: float, x):
    """Linear interpolation of one slice at position(s) ``x``."""
    values = np.asarray(values)
    near, far, w = _locate(len(values) // 2, h, x)
    out = (1.0 - w) * values[near] + w * values[far]
    return out[()] if np.ndim(out) == 0 else out


def interp_space_time(sheet: SpaceTimeSheet, x, t: float):
    """Bilinear space-time value of the sheet at ``(x, t)``."""
    theta = _time_weight(sheet, t)
    near, far, w = _locate(sheet.I, sheet.h, x)
    a = (1.0 - w) * sheet.prev[near] + w * sheet.prev[far]
    b = (1.0 - w) * sheet.cur[near] + w * sheet.cur[far]
    if theta == 0.0:
        out = a
    elif theta == 1.0:
        out = b
    else:
        out = (1.0 - theta) * a + theta * b
    return out[()] if np.ndim(out) == 0 else out
