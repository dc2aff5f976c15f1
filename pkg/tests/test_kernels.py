import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from delaywave.exosystem import (GAMMA_ETA, ExoParams, S_eta, canonical_form,
                                 eta_initial)
from delaywave.kernels import (THETA_EPS, DegenerateKernelError, QuadratureError,
                               backstep_forward, backstep_inverse,
                               build_kernel_table, cos_sin_like, expm_companion,
                               g_kernels_at, make_theta_kernels, solve_g_kernels,
                               solve_Pi, verify_f_g_identity)
from delaywave.pde_core import Grid1D

S4 = np.array([[0.0, 0.25], [-1.0, 0.0]])
P1_SEC4 = lambda x: np.outer(2.0 * np.asarray(x), [1.0, 0.0])
ZERO_P1 = lambda x: np.zeros((np.asarray(x).shape[0], 2))


def _d2(f, h):
    return (f[2:] - 2 * f[1:-1] + f[:-2]) / h ** 2


def test_pi_zero_data():
    Pi, dPi = solve_Pi(S4, 1.0, 0.1, ZERO_P1, [0, 0], [0, 0], Grid1D(50))
    assert np.all(Pi == 0) and np.all(dPi == 0)


def test_pi_boundary_rows_exact(sec4):
    g = Grid1D(200)
    Pi, dPi = solve_Pi(S4, 1.0, 0.1, P1_SEC4, [0, 0], [2, 0], g)
    from scipy.linalg import expm
    Pi0 = np.array([2.0, 0.0]) @ expm(0.1 * S4)
    np.testing.assert_allclose(Pi[0], Pi0, atol=1e-14)
    np.testing.assert_allclose(dPi[0], -1.0 * Pi0, atol=1e-14)


def test_pi_interior_residual_second_order():
    res = []
    for n in (100, 200, 400):
        g = Grid1D(n)
        Pi, _ = solve_Pi(S4, 1.0, 0.1, P1_SEC4, [0, 0], [2, 0], g)
        r = _d2(Pi, g.h) - Pi[1:-1] @ (S4 @ S4) + P1_SEC4(g.nodes[1:-1])
        res.append(np.abs(r).max())
    orders = np.log2(np.array(res[:-1]) / np.array(res[1:]))
    assert np.all(orders >= 1.9)


def test_pi_tau0_matches_ivp():
    g = Grid1D(100)
    p2, p4, q = np.array([0.3, -0.2]), np.array([1.0, 0.5]), 1.0
    Pi, _ = solve_Pi(S4, q, 0.0, ZERO_P1, p2, p4, g)
    y0 = np.concatenate([p4, p2 - q * p4])
    sol = solve_ivp(lambda x, y: np.concatenate([y[2:], y[:2] @ (S4 @ S4)]),
                    (0, 1), y0, t_eval=g.nodes[::10], method="DOP853",
                    rtol=1e-13, atol=1e-14)
    np.testing.assert_allclose(Pi[::10], sol.y[:2].T, atol=1e-8)


def test_pi_quadrature_error_on_rough_grid():
    rough = lambda x: np.outer(np.sin(400 * np.asarray(x)), [1.0, 0.0])
    with pytest.raises(QuadratureError):
        solve_Pi(S4, 1.0, 0.1, rough, [0, 0], [2, 0], Grid1D(8), tol=1e-10)


def test_g_kernels_properties():
    g = Grid1D(200)
    w, c2 = 0.5, 0.1
    g1, g1p, g2 = solve_g_kernels(w, c2, g)
    # g1'' = g1 S_eta^2 = -w^2 g1 holds exactly for the closed form
    x = g.nodes
    np.testing.assert_allclose(g1p[0], 0.0, atol=1e-10)
    np.testing.assert_allclose(g1[-1] + GAMMA_ETA + g2[-1], 0.0, atol=1e-10)
    np.testing.assert_allclose(g2[0], -c2 * g1[0], atol=1e-15)
    # analytic second derivative by differentiating the closed form via probes
    hh = 1e-4
    xs = np.array([0.2, 0.5, 0.8])
    gm, g0, gp = (g_kernels_at(w, c2, xs + d)[0] for d in (-hh, 0.0, hh))
    d2 = (gp - 2 * g0 + gm) / hh ** 2
    np.testing.assert_allclose(d2, -w * w * g0, atol=1e-5)


def test_g_kernels_second_derivative_exact_from_first():
    # g1' is returned in closed form; differentiate it once more numerically
    w, c2 = 1.7, 0.4
    xs = np.linspace(0.1, 0.9, 9)
    hh = 1e-6
    d2 = (g_kernels_at(w, c2, xs + hh)[1] - g_kernels_at(w, c2, xs - hh)[1]) / (2 * hh)
    np.testing.assert_allclose(d2, -w * w * g_kernels_at(w, c2, xs)[0], atol=1e-7)


@pytest.mark.parametrize("c2", [0.0, 1.0, -0.2])
def test_g_kernels_reject_gain(c2):
    with pytest.raises(ValueError):
        g_kernels_at(0.5, c2, [0.0])


def test_g_kernels_degenerate_denominator():
    # |2 c2 - 1| < 1 keeps the denominator away from zero inside (0, 1); as
    # c2 -> 0 it tends to -2 cos(w), which vanishes at w = pi/2
    with pytest.raises(DegenerateKernelError):
        g_kernels_at(np.pi / 2, 1e-14, [0.0])


def test_theta_kernels_initial_and_ode():
    for theta in (0.25, 0.0, -0.3, 3.0):
        tk = make_theta_kernels(theta, 0.1)
        np.testing.assert_array_equal(tk.f1(0.0), [1.0, 0.0])
        np.testing.assert_allclose(tk.f1_prime(0.0), [0.0, 0.0], atol=0)
        np.testing.assert_allclose(tk.f2(0.0), [-0.1, 0.0], atol=0)
    tk = make_theta_kernels(0.0, 0.1)
    np.testing.assert_allclose(tk.f1(np.linspace(0, 1, 11))[:, 0], 1.0, atol=0)


@pytest.mark.parametrize("theta", [0.25, -0.7, 4.0])
def test_f_kernels_against_ivp(theta):
    c2 = 0.1
    tk = make_theta_kernels(theta, c2)
    Sc = np.array([[0.0, 1.0], [-theta, 0.0]])
    x = np.linspace(0, 1, 11)
    sol = solve_ivp(lambda _, y: np.concatenate([y[2:4], -theta * y[:2], -y[4:] @ Sc]),
                    (0, 1), [1, 0, 0, 0, -c2, 0], t_eval=x, method="DOP853",
                    rtol=1e-13, atol=1e-14)
    np.testing.assert_allclose(tk.f1(x), sol.y[:2].T, atol=1e-8)
    np.testing.assert_allclose(tk.f2(x), sol.y[4:].T, atol=1e-8)


def test_f1_continuous_across_branches():
    x = np.linspace(0, 1, 101)
    a = make_theta_kernels(THETA_EPS, 0.1).f1(x)
    b = make_theta_kernels(-THETA_EPS, 0.1).f1(x)
    c = make_theta_kernels(0.0, 0.1).f1(x)
    assert np.abs(a - b).max() <= 1e-7 and np.abs(a - c).max() <= 1e-7
    # just outside the band the branches must agree as well
    d = make_theta_kernels(2 * THETA_EPS, 0.1).f1(x)
    assert np.abs(d - c).max() <= 1e-7


@settings(max_examples=50, deadline=None)
@given(theta=st.floats(-4, 4), t=st.floats(-3, 3))
def test_expm_companion_matches_scipy(theta, t):
    from scipy.linalg import expm
    Sc = np.array([[0.0, 1.0], [-theta, 0.0]])
    np.testing.assert_allclose(expm_companion(theta, t), expm(Sc * t), atol=1e-9,
                               rtol=1e-9)


def test_f_g_identity_sec4_and_sensitivity():
    g = Grid1D(200)
    w, c2 = 0.5, 0.1
    exo = ExoParams(S4, [0.0, 2.0], [2.0, 0.0])
    kt = build_kernel_table(S4, 1.0, 0.1, P1_SEC4, [0, 0], [0, 0], [2, 0], c2, g)
    cf = canonical_form(S_eta(w), kt.g1[0])
    eta = eta_initial(kt.gamma1, exo)
    good = verify_f_g_identity(make_theta_kernels(w * w, c2), g, kt.g1, kt.g2, cf.T,
                               eta.eta0, w)
    assert max(good.values()) <= 1e-8
    zero = verify_f_g_identity(make_theta_kernels(w * w, c2), g, kt.g1, kt.g2, cf.T,
                               [0.0, 0.0], w)
    assert zero["boundary_identity"] == 0.0
    bad = verify_f_g_identity(make_theta_kernels(w * w + 0.1, c2), g, kt.g1, kt.g2,
                              cf.T, eta.eta0, w)
    assert bad["f1_vs_g1"] > 1e-3


def test_gamma1_two_ways():
    from scipy.linalg import expm
    g = Grid1D(400)
    exo = ExoParams(S4, [0.0, 2.0], [2.0, 0.0])
    kt = build_kernel_table(S4, 1.0, 0.1, P1_SEC4, [0, 0], [0.2, -0.1], [2, 0], 0.1, g)
    np.testing.assert_allclose(kt.gamma1, kt.Pi[-1] - np.array([0.2, -0.1]), atol=0)
    t = np.linspace(0, 30, 300)
    y = np.array([kt.gamma1 @ expm(S4 * ti) @ exo.v0 for ti in t])
    ab, *_ = np.linalg.lstsq(np.column_stack([np.cos(0.5 * t), np.sin(0.5 * t)]), y,
                             rcond=None)
    np.testing.assert_allclose(ab, eta_initial(kt.gamma1, exo).eta0, atol=1e-8)


def test_backstep_trivial_and_analytic():
    x = Grid1D(100).nodes
    z = np.zeros_like(x)
    for f in (backstep_forward, backstep_inverse):
        a, b = f(z, z, 200.0, 1.0)
        assert np.all(a == 0) and np.all(b == 0)
    one = np.ones_like(x)
    fwd, _ = backstep_forward(one, one, 200.0, 0.0)
    np.testing.assert_allclose(fwd, 1.0 + 200.0 * x, atol=1e-10)
    inv, _ = backstep_inverse(one, one, 200.0, 0.0)
    np.testing.assert_allclose(inv, np.exp(-200.0 * x), atol=1e-10)


def test_backstep_roundtrip_second_order():
    errs = []
    for n in (100, 200, 400, 800):
        x = Grid1D(n).nodes
        eps = np.cos(np.pi * x) + x ** 2
        back, _ = backstep_inverse(*backstep_forward(eps, eps, 200.0, 1.0), 200.0, 1.0)
        err = np.abs(back - eps).max() / np.abs(eps).max()
        assert err <= 100.0 / n ** 2
        errs.append(err)
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 1.9)


def test_cos_sin_like_branches():
    x = np.linspace(0, 1, 5)
    C, Sn = cos_sin_like(4.0, x)
    np.testing.assert_allclose(C, np.cos(2 * x))
    np.testing.assert_allclose(Sn, np.sin(2 * x) / 2)
    C, Sn = cos_sin_like(-4.0, x)
    np.testing.assert_allclose(C, np.cosh(2 * x))
    np.testing.assert_allclose(Sn, np.sinh(2 * x) / 2)
