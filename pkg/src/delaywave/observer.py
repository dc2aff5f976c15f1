"""Measurement-side estimators, run in the shifted time ``s = t - tau``.

The live error sample ``e(t)`` is the measurement ``e(s + tau)`` of the
state at ``s``. Per step the stack is advanced in this order: adaptive
frequency observer (on the previous ``yd``), transport compensator ``Y1``,
state observer ``(zhat, Y2hat)``, then the new ``yd`` is formed.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .exosystem import companion
from .kernels import cos_sin_like
from .pde_core import (DirichletRight, NonFiniteError, RobinLeft, WaveState,
                       check_cfl, transport_step, wave_step)


class GainError(ValueError):
    pass


@dataclass(frozen=True)
class CompensatorState:
    Y1: np.ndarray
    c2: float

    def __post_init__(self):
        if not 0.0 < self.c2 < 1.0:
            raise GainError("compensator gain needs 0 < c2 < 1")


def compensator_step(c: CompensatorState, e_now: float, dt: float) -> CompensatorState:
    return replace(c, Y1=transport_step(c.Y1, -c.c2 * e_now, dt))


@dataclass(frozen=True)
class StateObserver:
    """Copy of the decoupled wave/transport pair driven by the measurement.

    ``e_last`` is the error sample that set the current left flux.
    """

    zhat: WaveState
    Y2hat: np.ndarray
    e_last: float = 0.0


def observer_step(o: StateObserver, e_now: float, u_now: float, Y1_right: float,
                  q: float, c2: float, dt: float, damping: float = 0.0) -> StateObserver:
    """One step of the state observer.

    ``Y1_right`` is the compensator trace at the new time level and
    ``u_now`` the control applied at the observer's time ``s``.
    """
    h = o.zhat.grid.h
    check_cfl(dt, h)
    Y2 = o.Y2hat
    courant = dt / h
    # upwind trace at x=1 does not depend on this step's inflow
    Y2_right = Y2[-1] - courant * (Y2[-1] - Y2[-2])
    left = RobinLeft(0.0, (-q * o.e_last, -q * e_now))
    right = DirichletRight(u_now - (Y2_right - Y1_right))
    zhat = wave_step(o.zhat, left, right, dt=dt, damping=damping)
    Y2_new = transport_step(Y2, -c2 * zhat.disp[0], dt, h)
    return StateObserver(zhat, Y2_new, float(e_now))


def yd_measure(e_now: float, zhat0: float) -> float:
    return e_now - zhat0


@dataclass(frozen=True)
class AdaptiveState:
    """Frequency-adaptive observer states and gains."""

    xi: float = 0.0
    chi1_hat: float = 0.0
    phi_hat: float = 0.0
    theta_hat: float = 0.0
    iota: float = 1.0
    k0: float = 5.0
    k1: float = 10.0

    def __post_init__(self):
        if not self.iota > 0:
            raise GainError("adaptive gains need iota > 0")
        if not self.k0 > 1.0 / (4.0 * self.iota):
            raise GainError("adaptive gains need k0 > 1/(4 iota)")
        if not self.k1 > 0:
            raise GainError("adaptive gains need k1 > 0")

    def as_array(self) -> np.ndarray:
        return np.array([self.xi, self.chi1_hat, self.phi_hat, self.theta_hat])


def _adaptive_rhs(x, yd, iota, k0, k1):
    xi, chi1, phi, theta = x
    innov = yd - chi1
    return np.array([
        -iota * xi - yd,
        phi + iota * yd + theta * xi + k0 * innov,
        -iota * phi - iota * iota * yd,
        k1 * xi * innov,
    ])


def adaptive_step(a: AdaptiveState, yd, dt: float, s: float = 0.0) -> AdaptiveState:
    """Classical RK4 step of the adaptive observer.

    A float ``yd`` is held over the step (zero-order hold). A callable is
    sampled at ``s``, ``s + dt/2`` and ``s + dt`` instead.
    """
    if callable(yd):
        y0, ym, y1 = yd(s), yd(s + 0.5 * dt), yd(s + dt)
    else:
        y0 = ym = y1 = yd
    g = (a.iota, a.k0, a.k1)
    x = a.as_array()
    k1_ = _adaptive_rhs(x, y0, *g)
    k2_ = _adaptive_rhs(x + 0.5 * dt * k1_, ym, *g)
    k3_ = _adaptive_rhs(x + 0.5 * dt * k2_, ym, *g)
    k4_ = _adaptive_rhs(x + dt * k3_, y1, *g)
    x = x + dt / 6.0 * (k1_ + 2.0 * k2_ + 2.0 * k3_ + k4_)
    if not np.all(np.isfinite(x)):
        raise NonFiniteError("adaptive observer diverged")
    return replace(a, xi=x[0], chi1_hat=x[1], phi_hat=x[2], theta_hat=x[3])


def dhat(a: AdaptiveState) -> np.ndarray:
    """Estimate of the canonical disturbance coordinates ``d``."""
    return np.array([a.chi1_hat,
                     a.phi_hat + a.xi * a.theta_hat + a.iota * a.chi1_hat])


def reconstruct_eps(zhat: WaveState, d_hat, theta_hat: float, nodes=None):
    """Wave-state estimate ``zhat + f1(x, theta) d`` and its time derivative.

    ``f1 = (C, 0)``, so only the first row of ``d`` and of ``S_c d`` enter.
    """
    if nodes is None:
        nodes = zhat.grid.nodes
    C, _ = cos_sin_like(theta_hat, nodes)
    d_hat = np.asarray(d_hat, dtype=float)
    d_dot = companion(theta_hat) @ d_hat
    return zhat.disp + C * d_hat[0], zhat.vel + C * d_dot[0]


@dataclass
class ObserverBundle:
    """All measurement-side state of one simulation."""

    compensator: CompensatorState
    observer: StateObserver
    adaptive: AdaptiveState
    q: float
    yd: float = 0.0
    damping: float = 0.0

    @property
    def s(self) -> float:
        return self.observer.zhat.t

    def start(self, e0: float) -> None:
        """Feed the first measurement, at ``s = 0``."""
        self.observer = replace(self.observer, e_last=float(e0))
        self.yd = yd_measure(e0, self.observer.zhat.disp[0])

    def step(self, e_now: float, u_now: float, dt: float) -> None:
        c2 = self.compensator.c2
        # yd is held at its value from the start of the step
        self.adaptive = adaptive_step(self.adaptive, self.yd, dt)
        self.compensator = compensator_step(self.compensator, e_now, dt)
        self.observer = observer_step(self.observer, e_now, u_now,
                                      self.compensator.Y1[-1], self.q, c2, dt,
                                      self.damping)
        self.yd = yd_measure(e_now, self.observer.zhat.disp[0])

    def d_hat(self) -> np.ndarray:
        return dhat(self.adaptive)

    def eps_hat(self):
        return reconstruct_eps(self.observer.zhat, self.d_hat(),
                               self.adaptive.theta_hat)
