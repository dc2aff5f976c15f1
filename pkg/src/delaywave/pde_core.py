"""Finite-difference substrate on the unit interval.

Wave-type fields are advanced with the velocity-Verlet form of the
central-difference scheme (second order in space and time). Robin ends use
ghost-node elimination, Dirichlet ends are imposed strongly at the node.
Transport fields ``Y_s = -Y_x`` use first-order upwinding.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from . import _core

# Boundary data: a constant, a callable of time, or an ``(old, new)`` pair
# giving the values at the two time levels of a step.
Scalar = Union[float, Callable[[float], float], tuple]


class CFLError(ValueError):
    """Time step violates the explicit stability bound."""


class NonFiniteError(FloatingPointError):
    """A field picked up NaN or inf entries."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


def _value(spec, t, level=1):
    if callable(spec):
        return float(spec(t))
    if isinstance(spec, tuple):
        return float(spec[level])
    return float(spec)


@dataclass(frozen=True)
class Grid1D:
    n_cells: int

    def __post_init__(self):
        if self.n_cells < 2:
            raise ValueError("grid needs at least 2 cells")

    @property
    def h(self) -> float:
        return 1.0 / self.n_cells

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n_cells + 1)

    @property
    def n_nodes(self) -> int:
        return self.n_cells + 1


@dataclass(frozen=True)
class WaveState:
    disp: np.ndarray
    vel: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        if self.disp.shape != self.vel.shape:
            raise ValueError("displacement and velocity live on different grids")

    @property
    def grid(self) -> Grid1D:
        return Grid1D(self.disp.shape[0] - 1)

    @classmethod
    def zeros(cls, grid: Grid1D, t: float = 0.0) -> "WaveState":
        return cls(np.zeros(grid.n_nodes), np.zeros(grid.n_nodes), t)

    def copy(self) -> "WaveState":
        return WaveState(self.disp.copy(), self.vel.copy(), self.t)


# Boundary conditions. Coefficients may be constants or callables of time.

@dataclass(frozen=True)
class RobinLeft:
    """``w_x(0) = a * w(0) + b``."""

    a: Scalar = 0.0
    b: Scalar = 0.0


@dataclass(frozen=True)
class DirichletRight:
    """``w(1) = g``."""

    g: Scalar = 0.0


@dataclass(frozen=True)
class RobinRight:
    """``w_x(1) = a * w_t(1) + b``."""

    a: Scalar = 0.0
    b: Scalar = 0.0


def check_cfl(dt: float, h: float, limit: float = 1.0) -> None:
    if not dt > 0 or dt > limit * h * (1.0 + 1e-12):
        raise CFLError(f"dt={dt:g} exceeds CFL bound {limit:g}*h={limit * h:g}")


def _accel(w, v, h, left, right, t, f, level):
    inv_h2 = 1.0 / (h * h)
    acc = np.empty_like(w)
    acc[1:-1] = (w[2:] - 2.0 * w[1:-1] + w[:-2]) * inv_h2
    a, b = _value(left.a, t, level), _value(left.b, t, level)
    acc[0] = (2.0 * w[1] - 2.0 * w[0] - 2.0 * h * (a * w[0] + b)) * inv_h2
    if isinstance(right, RobinRight):
        a, b = _value(right.a, t, level), _value(right.b, t, level)
        acc[-1] = (2.0 * w[-2] - 2.0 * w[-1] + 2.0 * h * (a * v[-1] + b)) * inv_h2
    else:
        acc[-1] = 0.0
    if f is not None:
        if callable(f):
            acc += f(t)
        elif isinstance(f, tuple):
            acc += f[level]
        else:
            acc += f
    return acc


def wave_step(state: WaveState, left: RobinLeft, right, forcing=None,
              dt: float = None, cfl_limit: float = 1.0,
              damping: float = 0.0) -> WaveState:
    """Advance ``w_tt = w_xx + forcing`` by one step.

    ``forcing`` is ``None``, an array on the grid, an ``(old, new)`` pair of
    arrays, or a callable of time returning one. Boundary data are read at
    both the old and the new time level; a Dirichlet trace only at the new
    level (the old one is the current node value).

    ``damping`` adds the split substep ``v += dt * damping * delta^2 v``, a
    grid-scaled Kelvin-Voigt term ``damping * h^2 * w_xxt`` that removes
    grid-scale noise and leaves the scheme second order.
    """
    h = state.grid.h
    check_cfl(dt, h, cfl_limit)
    t0, t1 = state.t, state.t + dt
    w, v = state.disp.copy(), state.vel.copy()
    half = 0.5 * dt

    v += half * _accel(w, v, h, left, right, t0, forcing, 0)
    if isinstance(right, DirichletRight):
        g0 = w[-1]
        w[:-1] += dt * v[:-1]
        g1 = _value(right.g, t1, 1)
        w[-1] = g1
        v[:-1] += half * _accel(w, v, h, left, right, t1, forcing, 1)[:-1]
        v[-1] = (g1 - g0) / dt
    else:
        w += dt * v
        acc = _accel(w, v, h, left, RobinRight(0.0, right.b), t1, forcing, 1)
        v[:-1] += half * acc[:-1]
        # implicit in the damping coefficient at the node
        a1 = _value(right.a, t1, 1)
        v[-1] = (v[-1] + half * acc[-1]) / (1.0 - dt * a1 / h)
    if damping:
        _smooth_velocity(v, dt * damping, isinstance(right, DirichletRight))
    if not (np.all(np.isfinite(w)) and np.all(np.isfinite(v))):
        raise NonFiniteError("non-finite wave field", t1)
    return WaveState(w, v, t1)


def _smooth_velocity(v, k, dirichlet):
    lap = np.empty_like(v)
    lap[1:-1] = v[2:] - 2.0 * v[1:-1] + v[:-2]
    lap[0] = 2.0 * (v[1] - v[0])
    lap[-1] = 0.0 if dirichlet else 2.0 * (v[-2] - v[-1])
    v += k * lap


def dirichlet_response(grid: Grid1D, dt: float, damping: float = 0.0):
    """Change of one Dirichlet step per unit of the new right trace.

    A step with trace ``g`` equals the step with trace 0 plus ``g`` times
    this ``(disp, vel)`` pair, for both ``wave_step`` and ``wave_window``.
    """
    d = np.zeros(grid.n_nodes)
    v = np.zeros(grid.n_nodes)
    d[-1] = 1.0
    v[-1] = 1.0 / dt
    v[-2] = 0.5 * dt / grid.h ** 2
    if damping:
        # the smoothing substep is linear, so it acts on the response directly
        _smooth_velocity(v, dt * damping, True)
    return d, v


def wave_window(state: WaveState, a_left: float, b_left, g_right,
                dt: float, damping: float = 0.0) -> WaveState:
    """Run ``len(g_right) - 1`` steps with a Robin left and Dirichlet right end.

    Forcing-free fast path backed by the compiled kernel. ``b_left`` and
    ``g_right`` hold the boundary data at every time level, level 0 first.
    """
    check_cfl(dt, state.grid.h)
    g_right = np.asarray(g_right, dtype=float)
    b_left = np.array(np.broadcast_to(np.asarray(b_left, dtype=float), g_right.shape))
    w = np.ascontiguousarray(state.disp, dtype=float).copy()
    v = np.ascontiguousarray(state.vel, dtype=float).copy()
    _core.wave_window(w, v, state.grid.h, dt, float(a_left), b_left, g_right,
                      float(damping))
    if not (np.all(np.isfinite(w)) and np.all(np.isfinite(v))):
        raise NonFiniteError("non-finite wave field in window", state.t)
    return WaveState(w, v, state.t + (g_right.shape[0] - 1) * dt)


def transport_step(field_: np.ndarray, inflow: float, dt: float,
                   h: float = None) -> np.ndarray:
    """Upwind step of ``Y_s = -Y_x`` with ``Y(0) = inflow``."""
    if h is None:
        h = 1.0 / (field_.shape[0] - 1)
    check_cfl(dt, h)
    out = np.ascontiguousarray(field_, dtype=float).copy()
    _core.upwind_shift(out, float(inflow), dt / h)
    return out


def trapezoid(values: np.ndarray, h: float) -> float:
    return h * (values.sum() - 0.5 * (values[0] + values[-1]))


def weighted_integral(f: np.ndarray, q: float, grid: Grid1D = None) -> float:
    """Trapezoid value of ``int_0^1 exp(q (1 - x)) f(x) dx``."""
    grid = grid or Grid1D(f.shape[0] - 1)
    return trapezoid(np.exp(q * (1.0 - grid.nodes)) * f, grid.h)


def ddx_boundary(f: np.ndarray, end: str, h: float = None) -> float:
    """Three-point one-sided first derivative at ``end`` ('left' or 'right')."""
    if f.shape[0] < 3:
        raise ValueError("need at least 3 nodes")
    if h is None:
        h = 1.0 / (f.shape[0] - 1)
    if end == "left":
        return (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h)
    if end == "right":
        return (3.0 * f[-1] - 4.0 * f[-2] + f[-3]) / (2.0 * h)
    raise ValueError(f"unknown end {end!r}")


def energy(state: WaveState, q: float = 0.0) -> float:
    """``0.5 * int(w_x^2 + w_t^2) + 0.5 * q * w(0)^2``.

    ``w_x^2`` uses cell differences, so the trapezoid reduces to a midpoint
    sum over cells.
    """
    h = state.grid.h
    wx = np.diff(state.disp) / h
    return 0.5 * (h * np.sum(wx * wx) + trapezoid(state.vel ** 2, h)) \
        + 0.5 * q * state.disp[0] ** 2


class OutOfSpanError(LookupError):
    pass


class HistoryBuffer:
    """Time-stamped scalar samples with linear interpolation.

    ``push`` evicts samples older than ``retention`` before the newest one,
    keeping the last sample at or before that cut so the whole retention
    window stays bracketed.
    """

    def __init__(self, retention: float, capacity: int = 1024):
        self.retention = float(retention)
        self._t = np.empty(max(capacity, 8))
        self._v = np.empty(max(capacity, 8))
        self._lo = 0
        self._hi = 0

    def push(self, t: float, value: float) -> None:
        if self._hi > self._lo and t <= self._t[self._hi - 1]:
            raise ValueError(f"timestamp {t} not after {self._t[self._hi - 1]}")
        if self._hi == self._t.shape[0]:
            n = self._hi - self._lo
            if 2 * n > self._t.shape[0]:
                self._t = np.concatenate([self._t, np.empty_like(self._t)])
                self._v = np.concatenate([self._v, np.empty_like(self._v)])
            self._t[:n] = self._t[self._lo:self._hi]
            self._v[:n] = self._v[self._lo:self._hi]
            self._lo, self._hi = 0, n
        self._t[self._hi] = t
        self._v[self._hi] = value
        self._hi += 1
        cut = t - self.retention
        while self._hi - self._lo > 2 and self._t[self._lo + 1] <= cut:
            self._lo += 1

    @property
    def span(self) -> tuple:
        if self._hi == self._lo:
            return (np.nan, np.nan)
        return (float(self._t[self._lo]), float(self._t[self._hi - 1]))

    @property
    def times(self) -> np.ndarray:
        return self._t[self._lo:self._hi].copy()

    @property
    def values(self) -> np.ndarray:
        return self._v[self._lo:self._hi].copy()

    def __len__(self):
        return self._hi - self._lo

    def sample(self, t_query):
        """Interpolated value(s) at ``t_query`` (scalar or array)."""
        if self._hi == self._lo:
            raise OutOfSpanError("empty history")
        ts = self._t[self._lo:self._hi]
        tq = np.asarray(t_query, dtype=float)
        lo, hi = ts[0], ts[-1]
        eps = 1e-9 * max(1.0, abs(hi))
        if np.any(tq < lo - eps) or np.any(tq > hi + eps):
            raise OutOfSpanError(
                f"query outside stored span [{lo:g}, {hi:g}]")
        out = np.interp(tq, ts, self._v[self._lo:self._hi])
        return float(out) if out.ndim == 0 else out
