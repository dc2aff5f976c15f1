import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from delaywave import _core
from delaywave._core import _fallback
from delaywave.pde_core import (CFLError, DirichletRight, Grid1D, HistoryBuffer,
                                NonFiniteError, OutOfSpanError, RobinLeft,
                                RobinRight, WaveState, ddx_boundary,
                                dirichlet_response, energy, transport_step,
                                wave_step, wave_window, weighted_integral)

NEUMANN = (RobinLeft(0.0, 0.0), RobinRight(0.0, 0.0))


def standing_mode_error(n, t_end=0.7, cfl=0.5):
    g = Grid1D(n)
    x = g.nodes
    dt = cfl * g.h
    st_ = WaveState(np.cos(np.pi * x), np.zeros_like(x))
    for _ in range(int(round(t_end / dt))):
        st_ = wave_step(st_, *NEUMANN, dt=dt)
    return np.abs(st_.disp - np.cos(np.pi * x) * np.cos(np.pi * st_.t)).max()


def test_grid():
    g = Grid1D(200)
    assert abs(g.h * g.n_cells - 1.0) <= 1e-15
    assert g.nodes[0] == 0.0 and g.nodes[-1] == 1.0 and g.n_nodes == 201


def test_zero_state_stays_zero():
    g = Grid1D(40)
    s = WaveState.zeros(g)
    for right in (DirichletRight(0.0), RobinRight(0.0, 0.0)):
        out = wave_step(s, RobinLeft(-1.0, 0.0), right, None, 0.5 * g.h)
        assert np.all(out.disp == 0) and np.all(out.vel == 0)


def test_standing_mode_second_order():
    errs = [standing_mode_error(n) for n in (50, 100, 200)]
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all((ratios >= 3.5) & (ratios <= 4.5)), ratios
    orders = np.log2(ratios)
    assert np.all((orders >= 1.8) & (orders <= 2.2))


def test_conservative_energy_drift():
    g = Grid1D(100)
    x = g.nodes
    s = WaveState(np.cos(np.pi * x) + 0.3 * np.cos(3 * np.pi * x), np.sin(np.pi * x))
    dt = 0.5 * g.h
    e0 = energy(s)
    worst = 0.0
    for _ in range(int(round(10.0 / dt))):
        s = wave_step(s, *NEUMANN, dt=dt)
        worst = max(worst, abs(energy(s) - e0) / e0)
    assert worst <= 0.01


def test_cfl_and_nonfinite():
    g = Grid1D(10)
    with pytest.raises(CFLError):
        wave_step(WaveState.zeros(g), *NEUMANN, dt=1.5 * g.h)
    with pytest.raises(CFLError):
        transport_step(np.zeros(11), 0.0, 0.2)
    bad = WaveState(np.full(11, np.nan), np.zeros(11))
    with pytest.raises(NonFiniteError):
        wave_step(bad, *NEUMANN, dt=0.5 * g.h)


def test_robin_left_first_order_exactness():
    # w = a + b x is static under w_x(0) = b and w_x(1) = b
    g = Grid1D(20)
    x = g.nodes
    s = WaveState(2.0 + 0.7 * x, np.zeros_like(x))
    out = wave_step(s, RobinLeft(0.0, 0.7), RobinRight(0.0, 0.7), dt=0.5 * g.h)
    np.testing.assert_allclose(out.disp, s.disp, atol=1e-13)
    np.testing.assert_allclose(out.vel, 0.0, atol=1e-11)


@pytest.mark.parametrize("damping", [0.0, 0.25])
def test_dirichlet_response_superposition(damping):
    rng = np.random.default_rng(3)
    g = Grid1D(30)
    s = WaveState(rng.standard_normal(31), rng.standard_normal(31), 0.0)
    dt = 0.5 * g.h
    left = RobinLeft(-1.0, (0.2, 0.3))
    base = wave_step(s, left, DirichletRight(0.0), dt=dt, damping=damping)
    u = 1.7
    out = wave_step(s, left, DirichletRight(u), dt=dt, damping=damping)
    d, v = dirichlet_response(g, dt, damping)
    np.testing.assert_allclose(out.disp, base.disp + u * d, atol=1e-12)
    np.testing.assert_allclose(out.vel, base.vel + u * v, atol=1e-10)


def _window_by_steps(s, a, b, gr, dt, damping):
    for k in range(len(gr) - 1):
        s = wave_step(s, RobinLeft(a, (b[k], b[k + 1])), DirichletRight(gr[k + 1]),
                      dt=dt, damping=damping)
    return s


@pytest.mark.parametrize("damping", [0.0, 0.25])
def test_wave_window_matches_wave_step(damping):
    rng = np.random.default_rng(7)
    g = Grid1D(40)
    s = WaveState(rng.standard_normal(41), rng.standard_normal(41), 0.0)
    dt = 0.5 * g.h
    b = rng.standard_normal(9)
    gr = np.concatenate([[s.disp[-1]], rng.standard_normal(8)])
    fast = wave_window(s, -1.0, b, gr, dt, damping)
    slow = _window_by_steps(s, -1.0, b, gr, dt, damping)
    np.testing.assert_allclose(fast.disp, slow.disp, atol=1e-11)
    np.testing.assert_allclose(fast.vel, slow.vel, atol=1e-9)
    assert fast.t == pytest.approx(slow.t)


@pytest.mark.skipif(_core.BACKEND != "cython", reason="compiled core not built")
@pytest.mark.parametrize("damping", [0.0, 0.25])
def test_backends_agree(damping):
    from delaywave._core import _wave
    rng = np.random.default_rng(11)
    n = 64
    w, v = rng.standard_normal(n + 1), rng.standard_normal(n + 1)
    b, gr = rng.standard_normal(20), rng.standard_normal(20)
    outs = []
    for mod in (_fallback, _wave):
        ww, vv = w.copy(), v.copy()
        mod.wave_window(ww, vv, 1.0 / n, 0.5 / n, -1.0, b, gr, damping)
        outs.append((ww, vv))
    np.testing.assert_allclose(outs[0][0], outs[1][0], rtol=0, atol=1e-12)
    np.testing.assert_allclose(outs[0][1], outs[1][1], rtol=0, atol=1e-10)
    f = rng.standard_normal(n + 1)
    a, c = f.copy(), f.copy()
    _fallback.upwind_shift(a, 0.4, 0.5)
    _wave.upwind_shift(c, 0.4, 0.5)
    np.testing.assert_allclose(a, c, atol=1e-15)


def test_transport_constant_and_unit_cfl_shift():
    f = np.full(21, 3.0)
    np.testing.assert_array_equal(transport_step(f, 3.0, 0.5 / 20), f)
    g = np.arange(21.0)
    out = transport_step(g, -5.0, 1.0 / 20)
    np.testing.assert_array_equal(out[1:], g[:-1])
    assert out[0] == -5.0


def test_transport_step_input_front():
    n = 200
    h = 1.0 / n
    x = np.linspace(0, 1, n + 1)
    f = np.zeros(n + 1)
    dt = 0.5 * h
    for _ in range(int(round(0.5 / dt))):
        f = transport_step(f, 1.0, dt)
    front = x[np.argmin(np.abs(f - 0.5))]
    assert abs(front - 0.5) <= 2 * h
    # unit Courant number: sharp front
    f = np.zeros(n + 1)
    for _ in range(n // 2):
        f = transport_step(f, 1.0, h)
    np.testing.assert_array_equal(f, (x <= 0.5 - 1e-12).astype(float))


def test_weighted_integral():
    g = Grid1D(100)
    assert weighted_integral(np.zeros(101), 1.0, g) == 0.0
    errs = [abs(weighted_integral(np.ones(n + 1), 1.0) - (np.e - 1)) for n in (50, 100)]
    assert errs[1] <= 1e-4 and 3.5 <= errs[0] / errs[1] <= 4.5
    rng = np.random.default_rng(0)
    f, h = rng.standard_normal(101), rng.standard_normal(101)
    assert weighted_integral(2 * f - 3 * h, 1.0) == pytest.approx(
        2 * weighted_integral(f, 1.0) - 3 * weighted_integral(h, 1.0), abs=1e-12)


def test_ddx_boundary():
    x = np.linspace(0, 1, 51)
    for end in ("left", "right"):
        assert ddx_boundary(1.5 - 0.4 * x, end) == pytest.approx(-0.4, abs=1e-12)
        assert ddx_boundary(np.full(51, 2.0), end) == pytest.approx(0.0, abs=1e-12)
        assert ddx_boundary(x ** 2, end) == pytest.approx(2 * x[0 if end == "left" else -1],
                                                           abs=1e-11)
    errs = [abs(ddx_boundary(np.sin(np.pi * np.linspace(0, 1, n + 1)), "right") + np.pi)
            for n in (50, 100)]
    assert 3.5 <= errs[0] / errs[1] <= 4.5
    with pytest.raises(ValueError):
        ddx_boundary(np.zeros(2), "left")
    with pytest.raises(ValueError):
        ddx_boundary(x, "middle")


def test_energy():
    g = Grid1D(100)
    assert energy(WaveState.zeros(g), 1.0) == 0.0
    errs = []
    for n in (100, 200):
        x = Grid1D(n).nodes
        errs.append(abs(energy(WaveState(np.sin(np.pi * x), np.zeros_like(x)))
                        - np.pi ** 2 / 4))
    assert errs[1] <= 1e-3 and 3.5 <= errs[0] / errs[1] <= 4.5
    x = g.nodes
    assert energy(WaveState(np.ones(101), np.zeros(101)), 2.0) == pytest.approx(1.0)


def test_history_buffer():
    hb = HistoryBuffer(retention=0.5, capacity=8)
    for k in range(100):
        hb.push(0.01 * k, 0.01 * k)
    lo, hi = hb.span
    assert hi == pytest.approx(0.99) and lo <= 0.49 + 1e-12
    assert hb.sample(0.9) == pytest.approx(0.9, abs=1e-15)
    assert hb.sample(0.73) == pytest.approx(0.73, abs=1e-14)
    np.testing.assert_allclose(hb.sample(np.array([0.6, 0.95])), [0.6, 0.95], atol=1e-14)
    with pytest.raises(OutOfSpanError):
        hb.sample(0.1)
    with pytest.raises(OutOfSpanError):
        hb.sample(1.5)
    with pytest.raises(ValueError):
        hb.push(0.5, 0.0)
    with pytest.raises(OutOfSpanError):
        HistoryBuffer(1.0).sample(0.0)


def test_history_stored_value_exact_and_sine_bound():
    dt = 0.05
    hb = HistoryBuffer(retention=100.0)
    ts = dt * np.arange(200)
    for t in ts:
        hb.push(t, np.sin(t))
    assert hb.sample(ts[37]) == np.sin(ts[37])
    q = np.linspace(0, ts[-1], 3001)
    assert np.abs(hb.sample(q) - np.sin(q)).max() <= dt ** 2 / 8


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_wave_step_deterministic_and_linear(seed):
    rng = np.random.default_rng(seed)
    g = Grid1D(16)
    a = WaveState(rng.standard_normal(17), rng.standard_normal(17))
    b = WaveState(rng.standard_normal(17), rng.standard_normal(17))
    step = lambda s: wave_step(s, RobinLeft(-1.0, 0.0), DirichletRight(0.0),
                               dt=0.5 * g.h, damping=0.25)
    s1, s2 = step(a), step(a)
    assert np.array_equal(s1.disp, s2.disp) and np.array_equal(s1.vel, s2.vel)
    ab = step(WaveState(a.disp + 2 * b.disp, a.vel + 2 * b.vel))
    sb = step(b)
    np.testing.assert_allclose(ab.disp, s1.disp + 2 * sb.disp, atol=1e-12)
    np.testing.assert_allclose(ab.vel, s1.vel + 2 * sb.vel, atol=1e-10)


def test_pure_python_backend_selected_by_env(sec4):
    """The fallback chosen at import reproduces the compiled closed loop."""
    import json
    import os
    import subprocess
    import sys

    from delaywave import run_mode
    code = ("import json; from delaywave import BACKEND, bundled, run_mode; "
            "o = run_mode(bundled('sec4_tau01').replace(n_cells=50, t_final=2.0), 'full', "
            "diagnostics=False); print(json.dumps([BACKEND, list(o.column('u'))]))")
    env = dict(os.environ, DELAYWAVE_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                         text=True, check=True)
    backend, u = json.loads(out.stdout)
    assert backend == "python"
    here = run_mode(sec4.replace(n_cells=50, t_final=2.0), "full", diagnostics=False)
    np.testing.assert_allclose(u, here.column("u"), rtol=1e-10, atol=1e-10)
