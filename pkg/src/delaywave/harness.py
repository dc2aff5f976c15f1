"""Closed-loop runner, diagnostic modes, decay fits and CSV export."""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import find_peaks

from .exosystem import GAMMA_ETA, ExoParams, eta_initial, exo_state
from .kernels import build_kernel_table
from .observer import (AdaptiveState, CompensatorState, ObserverBundle,
                       StateObserver, adaptive_step, dhat, observer_step)
from .pde_core import (DirichletRight, Grid1D, HistoryBuffer, NonFiniteError,
                       RobinLeft, WaveState, dirichlet_response, energy,
                       wave_step)
from .predictor import (ControlLawParams, linear_feedback, predict_and_control,
                        predicted_D, run_predictor, solve_boundary_control)
from .scenario import ConfigError, ScenarioParams, random_field
from .verify import verify_all  # noqa: F401  (harness-level entry point)

log = logging.getLogger(__name__)

MODES = ("full", "open_loop", "state_feedback", "observer_error", "adaptive_only")
CSV_COLUMNS = ("t", "e", "u", "theta_hat", "yd", "w0t", "yref",
               "energy_plant", "energy_obs_err", "pred_err")
# recorded in full mode but kept out of the CSV
EXTRA_COLUMNS = ("D_now", "D_true", "eps_obs_err")


class SimulationBlowUp(RuntimeError):
    def __init__(self, message, t):
        super().__init__(message)
        self.t = t


class InsufficientPeaksError(ValueError):
    pass


@dataclass
class RunOutput:
    mode: str
    series: dict
    snapshots: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return np.asarray(self.series[name], dtype=float)

    def window(self, name: str, t0: float, t1: float) -> np.ndarray:
        t = self.column("t")
        mask = (t >= t0 - 1e-12) & (t <= t1 + 1e-12)
        return self.column(name)[mask]


class _Recorder:
    def __init__(self, stride: int):
        self.stride = stride
        self.rows = {c: [] for c in CSV_COLUMNS + EXTRA_COLUMNS}

    def add(self, step: int, **values):
        if step % self.stride:
            return
        for c in self.rows:
            v = values.get(c)
            self.rows[c].append(np.nan if v is None else float(v))


class ClosedLoop:
    """Plant, exosystem, observers, predictor and control on one clock.

    Wave fields advance with ``dt = cfl_factor * h``; the measurement stack
    starts at ``t = tau`` in its own time ``s = t - tau``.
    """

    def __init__(self, s: ScenarioParams, diagnostics: bool = False):
        self.s = s
        self.grid = Grid1D(s.n_cells)
        self.x = self.grid.nodes
        self.dt = s.dt
        self.exo = ExoParams(np.array(s.S), np.array(s.v0), np.array(s.p4))
        self.p1 = s.p1_func()
        self.kt = build_kernel_table(s.S, s.q, s.tau, self.p1, s.p2, s.p3, s.p4,
                                     s.c2, self.grid)
        self.eta = eta_initial(self.kt.gamma1, self.exo)
        self.law = ControlLawParams(s.c0, s.c1, s.q)
        self.F = self.p1(self.x)
        self.p2 = np.asarray(s.p2, dtype=float)
        self.p3 = np.asarray(s.p3, dtype=float)
        self.diagnostics = diagnostics
        self.n_delay = int(round(s.tau / self.dt))
        if abs(self.n_delay * self.dt - s.tau) > 1e-9:
            raise ConfigError(f"tau={s.tau} is not a multiple of dt={self.dt}")

    # --- ground truth -----------------------------------------------------

    def v(self, t):
        return exo_state(self.exo, t)

    def eps_true(self, plant: WaveState):
        v = self.v(plant.t)
        return (plant.disp - self.kt.Pi @ v,
                plant.vel - self.kt.Pi @ (self.exo.S @ v))

    def initial_plant(self) -> WaveState:
        return WaveState(self.s.initial_field("w0", self.x),
                         self.s.initial_field("w1", self.x), 0.0)

    def new_bundle(self, w0: np.ndarray) -> ObserverBundle:
        s = self.s
        zhat = WaveState(w0.copy() if s.zhat0 == "w0" else np.zeros_like(self.x),
                         np.full_like(self.x, s.zhat_s0), 0.0)
        return ObserverBundle(
            CompensatorState(np.full_like(self.x, s.Y10), s.c2),
            StateObserver(zhat, np.full_like(self.x, s.Y2hat0)),
            AdaptiveState(s.xi0, s.chi1_hat0, s.phi_hat0, s.theta_hat0,
                          s.iota, s.k0, s.k1),
            s.q, damping=s.damping)

    def plant_step(self, plant: WaveState, u_new: float) -> WaveState:
        v0, v1 = self.v(plant.t), self.v(plant.t + self.dt)
        left = RobinLeft(-self.s.q, (self.p2 @ v0, self.p2 @ v1))
        right = DirichletRight(u_new + self.p3 @ v1)
        return wave_step(plant, left, right, (self.F @ v0, self.F @ v1), self.dt,
                         damping=self.s.damping)

    # --- modes ---------------------------------------------------------------

    def run(self, mode: str = "full") -> RunOutput:
        if mode not in MODES:
            raise ConfigError(f"unknown mode {mode!r}; choose from {MODES}")
        wall = time.perf_counter()
        runner = getattr(self, f"_run_{mode}")
        try:
            out = runner()
        except NonFiniteError as exc:
            raise SimulationBlowUp(f"simulation blew up at t={exc.t}", exc.t) from exc
        out.meta.update(scenario=self.s.name, digest=self.s.digest(),
                        n_cells=self.s.n_cells, dt=self.dt,
                        wall_time=time.perf_counter() - wall)
        return out

    def _n_steps(self):
        return int(round(self.s.t_final / self.dt))

    def _run_open_loop(self) -> RunOutput:
        return self._run_plant(controller=lambda base: 0.0, mode="open_loop")

    def _run_state_feedback(self) -> RunOutput:
        sens = dirichlet_response(self.grid, self.dt, self.s.damping)

        def controller(base):
            eps, eps_t = self.eps_true(base)
            return solve_boundary_control(eps, eps_t, sens, self.law,
                                          float(GAMMA_ETA @ self.eta.at(base.t)))
        return self._run_plant(controller, mode="state_feedback")

    def compatible_initial(self, plant: WaveState) -> WaveState:
        """Nearest plant data matching both boundary conditions at ``t = 0``.

        Adds ``beta x (1-x)^2`` to fix the left Robin condition and then
        ``alpha x^3`` so that ``eps(1)`` equals the feedback law, which keeps
        the initial energy of the closed loop finite under refinement.
        """
        x, h = self.x, self.grid.h
        eps, eps_t = self.eps_true(plant)
        # ghost-free one-sided slope, same stencil as ddx_boundary
        slope0 = (-3.0 * eps[0] + 4.0 * eps[1] - eps[2]) / (2.0 * h)
        beta = -self.s.q * eps[0] - slope0
        eps = eps + beta * x * (1.0 - x) ** 2
        cube = x ** 3
        lam = linear_feedback(cube, np.zeros_like(x), self.law)
        alpha = (linear_feedback(eps, eps_t, self.law) - eps[-1]) / (1.0 - lam)
        shift = beta * x * (1.0 - x) ** 2 + alpha * cube
        return WaveState(plant.disp + shift, plant.vel.copy(), plant.t)

    def _run_plant(self, controller, mode) -> RunOutput:
        """Plant under ``controller(base)``.

        ``base`` is the next plant state computed with zero control; the new
        state is ``base + u * dirichlet_response``, so the controller can
        resolve its own effect on the boundary.
        """
        sens = dirichlet_response(self.grid, self.dt, self.s.damping)
        rec = _Recorder(self.s.export_stride)
        plant = self.initial_plant()
        if mode == "state_feedback":
            plant = self.compatible_initial(plant)
        q = self.s.q
        u = 0.0

        def record(step, plant, u):
            eps, eps_t = self.eps_true(plant)
            t = plant.t
            rec.add(step, t=t, u=u, e=eps[0], w0t=plant.disp[0],
                    yref=self.exo.p4 @ self.v(t),
                    energy_plant=energy(WaveState(eps, eps_t), q))

        record(0, plant, u)
        for n in range(self._n_steps()):
            base = self.plant_step(plant, 0.0)
            u = controller(base)
            plant = WaveState(base.disp + u * sens[0], base.vel + u * sens[1], base.t)
            record(n + 1, plant, u)
        return RunOutput(mode, rec.rows, {"w": plant.disp, "w_t": plant.vel})

    def _run_observer_error(self) -> RunOutput:
        """Error system of the state observer from random compatible data."""
        s = self.s
        rng = np.random.default_rng(s.seed)
        z = random_field(rng, self.x)
        zs = random_field(rng, self.x)
        Y2 = random_field(rng, self.x)
        # ramps that fix the two corner conditions without disturbing each other
        Y2 += (-s.c2 * z[0] - Y2[0]) * (1.0 - self.x)
        z += (-Y2[-1] - z[-1]) * self.x
        obs = StateObserver(WaveState(z, zs, 0.0), Y2)
        rec = _Recorder(s.export_stride)

        def err_energy(o):
            return observer_error_energy(o.zhat.disp, o.zhat.vel, o.Y2hat)

        rec.add(0, t=0.0, energy_obs_err=err_energy(obs))
        for n in range(self._n_steps()):
            obs = observer_step(obs, 0.0, 0.0, 0.0, s.q, s.c2, self.dt, s.damping)
            rec.add(n + 1, t=obs.zhat.t, energy_obs_err=err_energy(obs))
        return RunOutput("observer_error", rec.rows,
                         {"z": obs.zhat.disp, "Y2": obs.Y2hat})

    def _run_adaptive_only(self) -> RunOutput:
        """Adaptive observer fed the clean disturbance ``g1(0) eta(s)``."""
        s = self.s
        g1_0 = self.kt.g1[0]
        yd = lambda t: float(g1_0 @ self.eta.at(t))
        a = self.new_bundle(np.zeros_like(self.x)).adaptive
        rec = _Recorder(s.export_stride)
        rec.add(0, t=0.0, theta_hat=a.theta_hat, yd=yd(0.0))
        for n in range(self._n_steps()):
            a = adaptive_step(a, yd, self.dt, n * self.dt)
            t1 = (n + 1) * self.dt
            rec.add(n + 1, t=t1, theta_hat=a.theta_hat, yd=yd(t1))
        return RunOutput("adaptive_only", rec.rows, {"d_hat": dhat(a)})

    def _run_full(self) -> RunOutput:
        s, dt = self.s, self.dt
        q = s.q
        nd = self.n_delay
        plant = self.initial_plant()
        w0_hist = HistoryBuffer(s.tau + 4 * dt)
        u_hist = HistoryBuffer(s.tau + 4 * dt)
        w0_hist.push(0.0, plant.disp[0])
        u_hist.push(0.0, 0.0)
        bundle = None
        rec = _Recorder(s.export_stride)
        diag = self.diagnostics
        # plant fields over the delay window, for observer-error truth
        past = deque(maxlen=nd + 1)
        if diag:
            past.append(plant)

        u = 0.0
        rec.add(0, t=0.0, e=-self.exo.p4 @ self.v(0.0), u=0.0, w0t=plant.disp[0],
                yref=self.exo.p4 @ self.v(0.0),
                energy_plant=energy(WaveState(*self.eps_true(plant)), q))
        if nd == 0:
            bundle = self.new_bundle(plant.disp)
            bundle.start(plant.disp[0] - self.exo.p4 @ self.v(0.0))
        for n in range(self._n_steps()):
            t1 = (n + 1) * dt
            yref = self.exo.p4 @ self.v(t1)
            if n + 1 >= nd:
                w_delayed = (w0_hist.sample(t1 - s.tau) if nd > 0
                             else _peek_left(plant, q, self.p2 @ self.v(plant.t),
                                             self.F @ self.v(plant.t), dt))
                e = w_delayed - yref
            else:
                e = -yref
            if n + 1 == nd:
                bundle = self.new_bundle(self.initial_plant().disp)
                bundle.start(e)
            elif nd == 0:
                u, last_pred = self._control_without_delay(bundle, e, t1)
            elif n + 1 > nd:
                s1 = t1 - s.tau
                bundle.step(e, u_hist.sample(s1), dt)
                if (n + 1 - nd) % s.predictor_stride == 0 or n + 1 - nd == 1:
                    eps0, eps_s0 = bundle.eps_hat()
                    levels = s1 + dt * np.arange(nd + 1)
                    u_past = u_hist.sample(levels[:nd])
                    u, last_pred = predict_and_control(
                        eps0, eps_s0, bundle.d_hat(), bundle.adaptive.theta_hat,
                        s.c2, u_past, dt, s1, self.law, s.damping)
            plant = self.plant_step(plant, u)
            w0_hist.push(t1, plant.disp[0])
            u_hist.push(t1, u)
            if diag:
                past.append(plant)
            row = dict(t=t1, e=e, u=u, w0t=plant.disp[0], yref=yref)
            if bundle is not None:
                row.update(theta_hat=bundle.adaptive.theta_hat, yd=bundle.yd)
            if n + 1 > nd:
                row.update(D_now=last_pred.D_now,
                           D_true=float(GAMMA_ETA @ self.eta.at(t1)))
            if (n + 1) % s.export_stride == 0:
                row["energy_plant"] = energy(WaveState(*self.eps_true(plant)), q)
                if diag and bundle is not None and n + 1 >= nd:
                    row["energy_obs_err"], row["eps_obs_err"] = \
                        self._observer_error(bundle, past[0])
                    if n + 1 > nd:
                        eps, eps_t = self.eps_true(plant)
                        diff = WaveState(last_pred.eps_pred.disp - eps,
                                         last_pred.eps_pred.vel - eps_t)
                        row["pred_err"] = math.sqrt(2.0 * energy(diff, q))
            rec.add(n + 1, **row)
        snaps = {"w": plant.disp, "w_t": plant.vel}
        if bundle is not None:
            snaps.update(zhat=bundle.observer.zhat.disp, d_hat=bundle.d_hat())
        return RunOutput("full", rec.rows, snaps)

    def _control_without_delay(self, bundle: ObserverBundle, e: float, t1: float):
        """With ``tau = 0`` the observer itself is the predictor.

        Its Dirichlet trace must carry the control being computed, so the
        observer is stepped with a zero trace and the law is solved through
        the trace response, as in the state-feedback mode.
        """
        s = self.s
        bundle.step(e, 0.0, self.dt)
        sens = dirichlet_response(self.grid, self.dt, s.damping)
        theta, d = bundle.adaptive.theta_hat, bundle.d_hat()
        eps0, eps_s0 = bundle.eps_hat()
        u = solve_boundary_control(eps0, eps_s0, sens, self.law,
                                   float(predicted_D(theta, d, s.c2)))
        z = bundle.observer.zhat
        bundle.observer = replace(bundle.observer, zhat=WaveState(
            z.disp + u * sens[0], z.vel + u * sens[1], z.t))
        eps0, eps_s0 = bundle.eps_hat()
        return u, run_predictor(eps0, eps_s0, d, theta, s.c2, s.q, [u], self.dt, t1)

    def _observer_error(self, bundle: ObserverBundle, plant_s: WaveState):
        """Observer-error energies at observer time.

        Returns the energy of ``(z - zhat, z_s - zhat_s, Y2 - Y2hat)`` and the
        wave energy of the reconstruction error ``(eps_hat - eps, ...)``.
        """
        eta = self.eta.at(plant_s.t)
        eps, eps_t = self.eps_true(plant_s)
        z = eps - self.kt.g1 @ eta
        z_s = eps_t - self.kt.g1 @ (self.eta.S_eta @ eta)
        Y2 = bundle.compensator.Y1 - self.kt.g2 @ eta
        o = bundle.observer
        eps_hat, eps_hat_s = bundle.eps_hat()
        return (observer_error_energy(z - o.zhat.disp, z_s - o.zhat.vel, Y2 - o.Y2hat),
                energy(WaveState(eps_hat - eps, eps_hat_s - eps_t), 0.0))


def observer_error_energy(z, z_s, Y2) -> float:
    """``0.5 * int(z_x^2 + z_s^2 + Y2^2 + Y2_x^2)`` on a uniform grid."""
    h = 1.0 / (z.shape[0] - 1)
    zx, yx = np.diff(z) / h, np.diff(Y2) / h
    trap = lambda f: h * (f.sum() - 0.5 * (f[0] + f[-1]))
    return 0.5 * (h * np.sum(zx * zx) + trap(z_s ** 2) + trap(Y2 ** 2) + h * np.sum(yx * yx))


def _peek_left(plant: WaveState, q, b, f, dt):
    """Left-node displacement one step ahead (independent of the right trace)."""
    h = plant.grid.h
    w, v = plant.disp, plant.vel
    acc0 = (2.0 * w[1] - 2.0 * w[0] - 2.0 * h * (-q * w[0] + b)) / (h * h) + f[0]
    return w[0] + dt * (v[0] + 0.5 * dt * acc0)


def run_closed_loop(s: ScenarioParams, diagnostics: bool = False) -> RunOutput:
    return ClosedLoop(s, diagnostics).run("full")


def run_mode(s: ScenarioParams, mode: str, diagnostics: bool = True) -> RunOutput:
    return ClosedLoop(s, diagnostics).run(mode)


# --- metrics ---------------------------------------------------------------

@dataclass(frozen=True)
class DecayFit:
    M: float
    mu: float
    fit_window: tuple
    residual: float
    n_peaks: int


def envelope_peaks(t: np.ndarray, y: np.ndarray):
    """Local maxima of ``|y|``; monotone series fall back to 20 chunk maxima."""
    a = np.abs(np.asarray(y, dtype=float))
    idx, _ = find_peaks(a)
    if idx.shape[0] >= 5:
        return t[idx], a[idx]
    d = np.diff(a)
    if np.all(d >= -1e-15 * a.max(initial=1.0)) or np.all(d <= 1e-15 * a.max(initial=1.0)):
        chunks = [c for c in np.array_split(np.arange(a.shape[0]), 20) if c.size]
        picks = np.array([c[np.argmax(a[c])] for c in chunks])
        return t[picks], a[picks]
    return t[idx], a[idx]


def fit_decay(t, y, window) -> DecayFit:
    """Least-squares fit of ``log |peak| = log M - mu t`` over ``window``."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    t0, t1 = window
    mask = (t >= t0) & (t <= t1) & np.isfinite(y)
    tp, ap = envelope_peaks(t[mask], y[mask])
    if tp.shape[0] < 5:
        raise InsufficientPeaksError(
            f"only {tp.shape[0]} envelope peaks in [{t0}, {t1}]; need 5")
    logs = np.log(np.maximum(ap, 1e-300))
    A = np.vstack([np.ones_like(tp), -tp]).T
    coef, *_ = np.linalg.lstsq(A, logs, rcond=None)
    resid = logs - A @ coef
    return DecayFit(float(np.exp(coef[0])), float(coef[1]), (t0, t1),
                    float(np.sqrt(np.mean(resid ** 2))), int(tp.shape[0]))


# --- CSV ------------------------------------------------------------------------

def _fmt(v) -> str:
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else repr(float(v))


def csv_text(out: RunOutput) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    cols = [out.series[c] for c in CSV_COLUMNS]
    for row in zip(*cols):
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def export_csv(out: RunOutput, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(csv_text(out))


def read_csv(path) -> dict:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    return {k: np.array([float(r[k]) if r[k] != "" else np.nan for r in rows])
            for k in reader.fieldnames}
