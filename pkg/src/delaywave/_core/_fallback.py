"""Pure numpy implementation of the hot wave kernels."""

import numpy as np


def _accel(w, h, a_left, b_left, out):
    inv_h2 = 1.0 / (h * h)
    out[1:-1] = (w[2:] - 2.0 * w[1:-1] + w[:-2]) * inv_h2
    out[0] = (2.0 * w[1] - 2.0 * w[0] - 2.0 * h * (a_left * w[0] + b_left)) * inv_h2
    out[-1] = 0.0
    return out


def wave_window(disp, vel, h, dt, a_left, b_left, g_right, damping=0.0):
    """Advance ``(disp, vel)`` in place over ``len(g_right) - 1`` Verlet steps.

    Left end carries ``w_x(0) = a_left * w(0) + b_left[k]``, right end the
    Dirichlet trace ``w(1) = g_right[k]``; both sequences are indexed by
    time level, level 0 being the current state. A nonzero ``damping``
    follows each step with ``vel += dt * damping * delta^2 vel``.
    """
    b_left = np.asarray(b_left, dtype=float)
    g_right = np.asarray(g_right, dtype=float)
    nsteps = g_right.shape[0] - 1
    acc = np.empty_like(disp)
    half = 0.5 * dt
    k_damp = dt * damping
    lap = np.empty_like(vel)
    _accel(disp, h, a_left, b_left[0], acc)
    for k in range(nsteps):
        vel[:-1] += half * acc[:-1]
        disp[:-1] += dt * vel[:-1]
        disp[-1] = g_right[k + 1]
        _accel(disp, h, a_left, b_left[k + 1], acc)
        vel[:-1] += half * acc[:-1]
        vel[-1] = (g_right[k + 1] - g_right[k]) / dt
        if k_damp:
            lap[1:-1] = vel[2:] - 2.0 * vel[1:-1] + vel[:-2]
            lap[0] = 2.0 * (vel[1] - vel[0])
            vel[:-1] += k_damp * lap[:-1]


def upwind_shift(field, inflow, courant):
    """First-order upwind update for ``Y_s = -Y_x`` in place."""
    field[1:] -= courant * (field[1:] - field[:-1])
    field[0] = inflow
