# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled wave kernels; same contract as ``_fallback``."""

import numpy as np


cdef inline void _accel(double[::1] w, double h, double a_left, double b_left,
                        double[::1] out) noexcept nogil:
    cdef Py_ssize_t i, n = w.shape[0]
    cdef double inv_h2 = 1.0 / (h * h)
    for i in range(1, n - 1):
        out[i] = (w[i + 1] - 2.0 * w[i] + w[i - 1]) * inv_h2
    out[0] = (2.0 * w[1] - 2.0 * w[0] - 2.0 * h * (a_left * w[0] + b_left)) * inv_h2
    out[n - 1] = 0.0


def wave_window(double[::1] disp, double[::1] vel, double h, double dt,
                double a_left, b_left, g_right, double damping=0.0):
    cdef double[::1] b = np.ascontiguousarray(b_left, dtype=np.float64)
    cdef double[::1] g = np.ascontiguousarray(g_right, dtype=np.float64)
    cdef Py_ssize_t n = disp.shape[0]
    cdef Py_ssize_t nsteps = g.shape[0] - 1
    cdef Py_ssize_t i, k
    cdef double half = 0.5 * dt
    cdef double k_damp = dt * damping
    cdef double left_old, mid_old
    cdef double[::1] acc = np.empty(n, dtype=np.float64)
    with nogil:
        _accel(disp, h, a_left, b[0], acc)
        for k in range(nsteps):
            for i in range(n - 1):
                vel[i] += half * acc[i]
                disp[i] += dt * vel[i]
            disp[n - 1] = g[k + 1]
            _accel(disp, h, a_left, b[k + 1], acc)
            for i in range(n - 1):
                vel[i] += half * acc[i]
            vel[n - 1] = (g[k + 1] - g[k]) / dt
            if k_damp != 0.0:
                # in-place sweep keeping the pre-update left neighbour
                left_old = vel[0]
                vel[0] += k_damp * 2.0 * (vel[1] - vel[0])
                for i in range(1, n - 1):
                    mid_old = vel[i]
                    vel[i] += k_damp * (vel[i + 1] - 2.0 * mid_old + left_old)
                    left_old = mid_old


def upwind_shift(double[::1] field, double inflow, double courant):
    cdef Py_ssize_t i
    cdef Py_ssize_t n = field.shape[0]
    with nogil:
        for i in range(n - 1, 0, -1):
            field[i] -= courant * (field[i] - field[i - 1])
        field[0] = inflow
