"""Regulator, decoupling and backstepping kernels.

* ``Pi`` solves ``Pi'' = Pi S^2 - p1`` with Cauchy data at ``x = 0``; it maps
  the exosystem state onto the plant's steady-state profile.
* ``g1``, ``g2`` decouple the boundary disturbance from the wave and the
  transport compensator; ``f1``, ``f2`` are the same kernels written in the
  observer-canonical coordinates and parameterised by ``theta = omega**2``.
* ``backstep_forward`` / ``backstep_inverse`` are the Volterra pair mapping
  the anti-damped wave onto the exponentially stable target system.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import expm

from .exosystem import GAMMA_ETA, S_eta, companion, rotation_expm
from .pde_core import Grid1D

THETA_EPS = 1e-8


class QuadratureError(RuntimeError):
    pass


class DegenerateKernelError(ZeroDivisionError):
    pass


# --- regulator equations ----------------------------------------------------

def block_generator(S: np.ndarray) -> np.ndarray:
    """4x4 generator ``[[0, S^2], [I, 0]]`` of the first-order form."""
    S = np.asarray(S, dtype=float)
    Sbar = np.zeros((4, 4))
    Sbar[:2, 2:] = S @ S
    Sbar[2:, :2] = np.eye(2)
    return Sbar


def _p1_rows(p1: Callable, x: np.ndarray) -> np.ndarray:
    out = np.asarray(p1(x), dtype=float)
    return np.broadcast_to(out, (x.shape[0], 2))


def _cumulative_simpson(p1, Sbar, nodes):
    """``int_0^{x_i} [0, p1(h)] expm(-Sbar h) dh`` for every node."""
    mids = 0.5 * (nodes[1:] + nodes[:-1])

    def integrand(x):
        rows = np.zeros((x.shape[0], 4))
        rows[:, 2:] = _p1_rows(p1, x)
        return np.einsum("ni,nij->nj", rows, expm(-Sbar * x[:, None, None]))

    f_nodes, f_mids = integrand(nodes), integrand(mids)
    widths = np.diff(nodes)[:, None]
    cells = widths / 6.0 * (f_nodes[:-1] + 4.0 * f_mids + f_nodes[1:])
    return np.vstack([np.zeros((1, 4)), np.cumsum(cells, axis=0)])


def solve_Pi(S, q: float, tau: float, p1: Callable, p2, p4, grid: Grid1D,
             tol: float = 1e-8):
    """Regulator-equation solution ``(Pi, Pi')`` sampled on ``grid``.

    ``p1`` maps an array of positions to an ``(n, 2)`` array of rows. The
    homogeneous part uses ``expm`` of the block generator; the convolution
    with ``p1`` is integrated with composite Simpson (cell midpoints).
    Raises ``QuadratureError`` when a Richardson estimate of the quadrature
    error exceeds ``tol``.
    """
    S = np.asarray(S, dtype=float)
    p2 = np.asarray(p2, dtype=float).reshape(2)
    p4 = np.asarray(p4, dtype=float).reshape(2)
    Sbar = block_generator(S)
    x = grid.nodes

    Pi0 = p4 @ expm(tau * S)
    row0 = np.concatenate([Pi0, p2 - q * Pi0])
    E = expm(Sbar * x[:, None, None])
    conv = _cumulative_simpson(p1, Sbar, x)
    if grid.n_cells % 2 == 0:
        coarse = _cumulative_simpson(p1, Sbar, x[::2])
        err = np.abs(conv[::2] - coarse).max() / 15.0
        if err > tol:
            raise QuadratureError(
                f"Simpson error estimate {err:.2e} exceeds tol {tol:.0e}; "
                "refine the grid")
    full = np.einsum("j,njk->nk", row0, E) - np.einsum("nj,njk->nk", conv, E)
    return full[:, :2].copy(), full[:, 2:].copy()


# --- decoupling kernels -------------------------------------------------------

_PSI = np.array([[1.0, 1.0], [1.0j, -1.0j]])


def g_kernels_at(omega: float, c2: float, x):
    """Closed-form ``(g1, g1', g2)`` at positions ``x`` (rows per position).

    Built in the eigenbasis ``Psi = [(1, i), (1, -i)]`` of ``S_eta`` and
    mapped back; the imaginary residue is checked, then dropped.
    """
    if not 0.0 < c2 < 1.0:
        raise ValueError("c2 must lie in (0, 1)")
    if not omega > 0:
        raise ValueError("omega must be positive")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    lam = np.array([1.0j * omega, -1.0j * omega])
    denom = (2.0 * c2 - 1.0) * np.exp(-lam) - np.exp(lam)
    if np.any(np.abs(denom) < 1e-12):
        raise DegenerateKernelError(
            f"kernel denominator vanishes for omega={omega}, c2={c2}")
    C = 1.0 / denom
    ep, em = np.exp(np.outer(x, lam)), np.exp(-np.outer(x, lam))
    gbar = C * (ep + em)
    gbar_p = C * lam * (ep - em)
    psi_inv = np.linalg.inv(_PSI)
    g1c, g1pc = gbar @ psi_inv, gbar_p @ psi_inv
    scale = max(1.0, np.abs(g1c).max())
    if np.abs(g1c.imag).max() > 1e-12 * scale or np.abs(g1pc.imag).max() > 1e-12 * scale * omega:
        raise ArithmeticError("complex kernel reconstruction is not real")
    g1, g1p = g1c.real, g1pc.real
    g1_0 = ((2.0 * C) @ psi_inv).real
    g2 = -c2 * np.einsum("j,njk->nk", g1_0, rotation_expm(S_eta(omega), omega, -x))
    return g1, g1p, g2


@dataclass(frozen=True)
class KernelTable:
    grid: Grid1D
    Pi: np.ndarray
    Pi_prime: np.ndarray
    g1: np.ndarray
    g1_prime: np.ndarray
    g2: np.ndarray
    gamma1: np.ndarray
    omega: float
    c2: float


def solve_g_kernels(omega: float, c2: float, grid: Grid1D):
    return g_kernels_at(omega, c2, grid.nodes)


def build_kernel_table(S, q, tau, p1, p2, p3, p4, c2, grid: Grid1D) -> KernelTable:
    Pi, Pi_p = solve_Pi(S, q, tau, p1, p2, p4, grid)
    omega = float(np.sqrt(np.linalg.det(np.asarray(S, dtype=float))))
    g1, g1p, g2 = solve_g_kernels(omega, c2, grid)
    gamma1 = Pi[-1] - np.asarray(p3, dtype=float).reshape(2)
    return KernelTable(grid, Pi, Pi_p, g1, g1p, g2, gamma1, omega, c2)


# --- theta-parameterised kernels ------------------------------------------------

def cos_sin_like(theta: float, x):
    """``(C, Sn)`` with ``C'' = -theta C``, ``C(0)=1``, ``Sn(0)=0``, ``Sn'(0)=1``.

    Trigonometric, polynomial or hyperbolic by the sign of ``theta``.
    """
    x = np.asarray(x, dtype=float)
    if theta > THETA_EPS:
        r = np.sqrt(theta)
        return np.cos(r * x), np.sin(r * x) / r
    if theta < -THETA_EPS:
        r = np.sqrt(-theta)
        return np.cosh(r * x), np.sinh(r * x) / r
    x2 = x * x
    return (1.0 - theta * x2 / 2.0 + theta ** 2 * x2 * x2 / 24.0,
            x * (1.0 - theta * x2 / 6.0 + theta ** 2 * x2 * x2 / 120.0))


def expm_companion(theta: float, t) -> np.ndarray:
    """``expm(S_c(theta) t)``, stacked along the leading axis for array ``t``."""
    C, Sn = cos_sin_like(theta, t)
    C, Sn = np.asarray(C), np.asarray(Sn)
    out = np.empty(C.shape + (2, 2))
    out[..., 0, 0] = C
    out[..., 0, 1] = Sn
    out[..., 1, 0] = -theta * Sn
    out[..., 1, 1] = C
    return out


@dataclass(frozen=True)
class ThetaKernels:
    theta: float
    c2: float

    @property
    def S_c(self) -> np.ndarray:
        return companion(self.theta)

    def f1(self, x) -> np.ndarray:
        C, _ = cos_sin_like(self.theta, x)
        C = np.asarray(C)
        return np.stack([C, np.zeros_like(C)], axis=-1)

    def f1_prime(self, x) -> np.ndarray:
        _, Sn = cos_sin_like(self.theta, x)
        Sn = np.asarray(Sn)
        return np.stack([-self.theta * Sn, np.zeros_like(Sn)], axis=-1)

    def f2(self, x) -> np.ndarray:
        # row (1, 0) times expm(-S_c x) = (C(x), -Sn(x))
        C, Sn = cos_sin_like(self.theta, x)
        return -self.c2 * np.stack([np.asarray(C), -np.asarray(Sn)], axis=-1)

    def boundary_row(self) -> np.ndarray:
        """``-(f1(1) + f2(1))``: maps ``d`` onto the boundary disturbance."""
        return -(self.f1(1.0) + self.f2(1.0))


def make_theta_kernels(theta: float, c2: float) -> ThetaKernels:
    return ThetaKernels(float(theta), float(c2))


def verify_f_g_identity(tk: ThetaKernels, grid: Grid1D, g1, g2, T,
                        eta0=None, omega=None, n_samples: int = 257) -> dict:
    """Max-norm residuals of ``f = g T^{-1}`` and of the boundary identity.

    The boundary identity ``gamma_eta eta(s) = -(f1(1) + f2(1)) T eta(s)`` is
    sampled along the exact trajectory from ``eta0`` over one period.
    """
    T_inv = np.linalg.inv(T)
    x = grid.nodes
    out = {
        "f1_vs_g1": float(np.abs(tk.f1(x) - g1 @ T_inv).max()),
        "f2_vs_g2": float(np.abs(tk.f2(x) - g2 @ T_inv).max()),
    }
    if eta0 is not None:
        eta0 = np.asarray(eta0, dtype=float)
        if not np.any(eta0):
            out["boundary_identity"] = 0.0
        else:
            s = np.linspace(0.0, 2.0 * np.pi / omega, n_samples)
            eta = rotation_expm(S_eta(omega), omega, s) @ eta0
            lhs = eta @ GAMMA_ETA
            rhs = (eta @ T.T) @ tk.boundary_row()
            out["boundary_identity"] = float(np.abs(lhs - rhs).max())
    return out


# --- backstepping pair ----------------------------------------------------------

def _exp_weights(rate: float, h: float):
    """Weights of ``int_0^h exp(rate (h - u)) f(u) du`` for ``f`` linear on the cell.

    Exponentially fitted trapezoid: exact for piecewise-linear ``f``, so a
    stiff kernel (``|rate| h`` of order one) keeps its accuracy.
    """
    a = rate * h
    if abs(a) < 1e-4:
        return h * (0.5 + a / 3.0 + a * a / 8.0), h * (0.5 + a / 6.0 + a * a / 24.0)
    em1 = np.expm1(a)
    w_old = h * (np.exp(a) / a - em1 / (a * a))
    w_new = h * (em1 / (a * a) - 1.0 / a)
    return w_old, w_new


def _volterra_exp(f: np.ndarray, rate: float, h: float) -> np.ndarray:
    """Values of ``int_0^{x_i} exp(rate (x_i - s)) f(s) ds`` on every node."""
    out = np.zeros_like(f, dtype=float)
    decay = np.exp(rate * h)
    w_old, w_new = _exp_weights(rate, h)
    for i in range(1, f.shape[0]):
        out[i] = decay * out[i - 1] + w_old * f[i - 1] + w_new * f[i]
    return out


def backstep_forward(eps: np.ndarray, eps_t: np.ndarray, c0: float, q: float):
    """``eps + (c0 + q) int_0^x exp(q (x - s)) eps(s) ds`` for both fields."""
    h = 1.0 / (eps.shape[0] - 1)
    k = c0 + q
    return (eps + k * _volterra_exp(eps, q, h),
            eps_t + k * _volterra_exp(eps_t, q, h))


def backstep_inverse(epsbar: np.ndarray, epsbar_t: np.ndarray, c0: float, q: float):
    """``epsbar - (c0 + q) int_0^x exp(-c0 (x - s)) epsbar(s) ds`` for both fields."""
    h = 1.0 / (epsbar.shape[0] - 1)
    k = c0 + q
    return (epsbar - k * _volterra_exp(epsbar, -c0, h),
            epsbar_t - k * _volterra_exp(epsbar_t, -c0, h))
