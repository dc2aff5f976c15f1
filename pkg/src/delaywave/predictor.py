"""Delay compensation over ``[t - tau, t]`` and the boundary feedback law."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .exosystem import GAMMA_ETA
from .kernels import expm_companion, make_theta_kernels
from .pde_core import (Grid1D, WaveState, ddx_boundary, dirichlet_response,
                       wave_window, weighted_integral)


@dataclass(frozen=True)
class ControlLawParams:
    c0: float
    c1: float
    q: float

    def __post_init__(self):
        for name in ("c0", "c1", "q"):
            if not getattr(self, name) > 0:
                raise ValueError(f"control law needs {name} > 0")


def predict_d(d0, theta_frozen: float, elapsed) -> np.ndarray:
    """``expm(S_c(theta) * elapsed) @ d0``; rows per entry of an array ``elapsed``."""
    return expm_companion(theta_frozen, elapsed) @ np.asarray(d0, dtype=float)


def predicted_D(theta_frozen: float, d_pred, c2: float):
    """Predicted boundary disturbance ``-(f1(1) + f2(1)) d``."""
    return np.asarray(d_pred, dtype=float) @ make_theta_kernels(theta_frozen, c2).boundary_row()


@dataclass(frozen=True)
class PredictorRun:
    frozen_theta: float
    s: np.ndarray        # window time levels, s[0] = t - tau
    d_path: np.ndarray   # (len(s), 2)
    D_path: np.ndarray
    eps_pred: WaveState  # advanced to s[-1] = t

    @property
    def D_now(self) -> float:
        return float(self.D_path[-1])


def predict_eps(eps0, eps_s0, u_window, D_window, q: float, dt: float,
                t0: float = 0.0, damping: float = 0.0) -> WaveState:
    """Re-integrate the wave model across the window.

    ``u_window[k]`` and ``D_window[k]`` are the control and predicted
    disturbance at level ``k``; the right trace is ``u - D``, the left end
    keeps the anti-damped condition ``w_x(0) = -q w(0)``.
    """
    state = WaveState(np.array(eps0, dtype=float), np.array(eps_s0, dtype=float), t0)
    g = np.asarray(u_window, dtype=float) - np.asarray(D_window, dtype=float)
    if g.shape[0] <= 1:
        return state
    return wave_window(state, -q, 0.0, g, dt, damping)


def run_predictor(eps0, eps_s0, d0, theta_frozen: float, c2: float, q: float,
                  u_window, dt: float, t0: float, damping: float = 0.0) -> PredictorRun:
    u_window = np.asarray(u_window, dtype=float)
    s = t0 + dt * np.arange(u_window.shape[0])
    d_path = predict_d(d0, theta_frozen, s - t0)
    D_path = predicted_D(theta_frozen, d_path, c2)
    eps = predict_eps(eps0, eps_s0, u_window, D_path, q, dt, t0, damping)
    return PredictorRun(float(theta_frozen), s, d_path, D_path, eps)


def solve_boundary_control(base_eps, base_eps_t, sens, law: ControlLawParams,
                           offset: float) -> float:
    """Control consistent with its own effect on the boundary trace.

    The state at the control instant is ``base + u * sens``; the law is
    ``u = F(state) + offset`` with ``F`` linear, so
    ``u = (F(base) + offset) / (1 - F(sens))``.
    """
    F0 = linear_feedback(base_eps, base_eps_t, law)
    lam = linear_feedback(sens[0], sens[1], law)
    return (F0 + offset) / (1.0 - lam)


def linear_feedback(eps, eps_t, law: ControlLawParams) -> float:
    """Feedback part of the law (everything except the disturbance term)."""
    terms = feedback_terms(eps, eps_t, law)
    return terms["boundary"] + terms["integral"]


def feedback_terms(eps: np.ndarray, eps_t: np.ndarray, law: ControlLawParams,
                   grid: Grid1D = None) -> dict:
    """Pieces of the backstepping law evaluated on a wave state."""
    grid = grid or Grid1D(eps.shape[0] - 1)
    dx1 = ddx_boundary(eps, "right", grid.h)
    boundary = -(dx1 + law.c1 * eps_t[-1]) / (law.c0 + law.q)
    integral = -weighted_integral(law.q * eps + law.c1 * eps_t, law.q, grid)
    return {"eps_x1": dx1, "boundary": boundary, "integral": integral}


def predict_and_control(eps0, eps_s0, d0, theta_frozen: float, c2: float,
                        u_past, dt: float, t0: float, law: ControlLawParams,
                        damping: float = 0.0):
    """Predictor run whose last boundary level carries the control it yields.

    ``u_past`` holds the applied controls at levels ``0 .. m-1`` of the
    window; the control at level ``m`` (time ``t``) solves the discrete
    coupling exactly. Returns ``(u, PredictorRun)``.
    """
    u_window = np.append(np.asarray(u_past, dtype=float), 0.0)
    base = run_predictor(eps0, eps_s0, d0, theta_frozen, c2, law.q, u_window, dt, t0,
                         damping)
    if u_window.shape[0] == 1:
        u = control_eq69(base, law)
        return u, base
    sens = dirichlet_response(base.eps_pred.grid, dt, damping)
    u = solve_boundary_control(base.eps_pred.disp, base.eps_pred.vel, sens,
                               law, base.D_now)
    eps = WaveState(base.eps_pred.disp + u * sens[0],
                    base.eps_pred.vel + u * sens[1], base.eps_pred.t)
    return u, replace(base, eps_pred=eps)


def control_eq69(pred: PredictorRun, law: ControlLawParams, t: float = None,
                 tau: float = 0.0, D_now: float = None) -> float:
    """Output-feedback control from a predictor run ending at ``t``.

    Zero while ``t <= tau``. ``D_now`` defaults to the run's last level.
    """
    if t is not None and t <= tau:
        return 0.0
    terms = feedback_terms(pred.eps_pred.disp, pred.eps_pred.vel, law)
    D = pred.D_now if D_now is None else D_now
    return terms["boundary"] + terms["integral"] + D


def control_ff(eps: np.ndarray, eps_t: np.ndarray, eta_now, law: ControlLawParams) -> float:
    """Full-information law with the true wave state and disturbance phase."""
    terms = feedback_terms(eps, eps_t, law)
    return terms["boundary"] + terms["integral"] + float(GAMMA_ETA @ np.asarray(eta_now))
