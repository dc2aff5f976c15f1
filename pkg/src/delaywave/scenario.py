"""Scenario parameters and their on-disk form.

A scenario file holds one ``dotted.key = value`` pair per line; values are
JSON literals (numbers, strings, lists). Lines starting with ``#`` are
comments. Field
tables (tabulated ``p1``, ``w0``, ``w1``) are sidecar CSV files with
columns ``x,value`` (or ``x,value0,value1`` for ``p1``), resolved relative
to the scenario file.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class ConfigError(ValueError):
    pass


class HypothesisError(ConfigError):
    """A closed-loop stability hypothesis is violated."""


@dataclass
class ScenarioParams:
    name: str = "scenario"
    # plant
    q: float = 1.0
    tau: float = 0.1
    p1_kind: str = "poly"
    p1_coeffs: list = field(default_factory=lambda: [0.0, 2.0])
    p1_direction: list = field(default_factory=lambda: [1.0, 0.0])
    p1_table: str = ""
    p2: list = field(default_factory=lambda: [0.0, 0.0])
    p3: list = field(default_factory=lambda: [0.0, 0.0])
    # exosystem
    S: list = field(default_factory=lambda: [[0.0, 0.25], [-1.0, 0.0]])
    v0: list = field(default_factory=lambda: [0.0, 2.0])
    p4: list = field(default_factory=lambda: [2.0, 0.0])
    # controller, compensator, adaptive observer
    c0: float = 200.0
    c1: float = 1.0
    c2: float = 0.1
    iota: float = 1.0
    k0: float = 5.0
    k1: float = 10.0
    # numerics
    n_cells: int = 200
    cfl_factor: float = 0.5
    damping: float = 0.25
    t_final: float = 60.0
    predictor_stride: int = 1
    export_stride: int = 10
    seed: int = 0
    # initial plant data
    w0_kind: str = "cosine"
    w0_amplitude: float = 10.0
    w0_wavenumber: float = 1.0
    w0_table: str = ""
    w1_kind: str = "zero"
    w1_amplitude: float = 0.0
    w1_wavenumber: float = 1.0
    w1_table: str = ""
    # initial observer data
    zhat0: str = "w0"
    zhat_s0: float = 0.0
    Y2hat0: float = -0.1
    Y10: float = 0.0
    xi0: float = 0.0
    chi1_hat0: float = 0.0
    phi_hat0: float = 0.0
    theta_hat0: float = 0.0

    base_dir: str = field(default=".", compare=False, repr=False)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        checks = [
            (self.q > 0, "q > 0"),
            (self.c0 > 0, "c0 > 0"),
            (self.c1 > 0, "c1 > 0"),
            (0 < self.c2 < 1, "0 < c2 < 1"),
            (self.iota > 0, "iota > 0"),
            (self.k1 > 0, "k1 > 0"),
            (self.iota > 0 and self.k0 > 1.0 / (4.0 * self.iota), "k0 > 1/(4 iota)"),
            (self.tau >= 0, "tau >= 0"),
        ]
        for ok, hypothesis in checks:
            if not ok:
                raise HypothesisError(f"hypothesis violated: {hypothesis}")
        S = np.asarray(self.S, dtype=float)
        if S.shape != (2, 2):
            raise ConfigError("S must be 2x2")
        if abs(np.trace(S)) > 1e-12 * max(np.linalg.norm(S), 1.0) or not np.linalg.det(S) > 0:
            raise HypothesisError(
                "hypothesis violated: eigenvalues of S are +-i*omega, omega > 0")
        if not 0 < self.cfl_factor <= 1:
            raise ConfigError("cfl_factor must lie in (0, 1]")
        if not 0 <= self.damping <= 1:
            raise ConfigError("damping must lie in [0, 1]")
        if self.n_cells < 4:
            raise ConfigError("n_cells must be at least 4")
        if self.predictor_stride < 1 or self.export_stride < 1:
            raise ConfigError("strides must be positive")
        if self.p1_kind not in ("poly", "table"):
            raise ConfigError(f"unknown p1 kind {self.p1_kind!r}")
        for which in ("w0", "w1"):
            if getattr(self, f"{which}_kind") not in ("zero", "cosine", "random", "table"):
                raise ConfigError(f"unknown {which} kind")
        if self.zhat0 not in ("w0", "zero"):
            raise ConfigError("zhat0 must be 'w0' or 'zero'")

    # --- derived quantities ----------------------------------------------

    @property
    def omega(self) -> float:
        return float(np.sqrt(np.linalg.det(np.asarray(self.S, dtype=float))))

    @property
    def dt(self) -> float:
        return self.cfl_factor / self.n_cells

    def p1_func(self):
        """Callable ``x -> (n, 2)`` rows of the in-domain disturbance."""
        if self.p1_kind == "poly":
            coeffs = np.asarray(self.p1_coeffs, dtype=float)
            direction = np.asarray(self.p1_direction, dtype=float)
            poly = np.polynomial.Polynomial(coeffs)
            return lambda x: np.outer(poly(np.asarray(x, dtype=float)), direction)
        table = _read_table(self._resolve(self.p1_table), 2)
        xs = table[:, 0]
        return lambda x: np.stack(
            [np.interp(x, xs, table[:, 1]), np.interp(x, xs, table[:, 2])], axis=-1)

    def initial_field(self, which: str, nodes: np.ndarray) -> np.ndarray:
        kind = getattr(self, f"{which}_kind")
        if kind == "zero":
            return np.zeros_like(nodes)
        if kind == "random":
            # independent streams per field, reproducible from the seed
            stream = {"w0": 0, "w1": 1}[which]
            rng = np.random.default_rng([self.seed, stream])
            amp = getattr(self, f"{which}_amplitude")
            return random_field(rng, nodes, amplitude=amp)
        if kind == "cosine":
            amp = getattr(self, f"{which}_amplitude")
            k = getattr(self, f"{which}_wavenumber")
            return amp * (np.cos(2.0 * np.pi * k * nodes) - 1.0)
        table = _read_table(self._resolve(getattr(self, f"{which}_table")), 1)
        return np.interp(nodes, table[:, 0], table[:, 1])

    def _resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def replace(self, **changes) -> "ScenarioParams":
        return dataclasses.replace(self, **changes)

    def digest(self) -> str:
        return hashlib.sha256(dumps(self).encode()).hexdigest()[:16]


def random_field(rng: np.random.Generator, nodes: np.ndarray, n_modes: int = 5,
                 amplitude: float = 1.0) -> np.ndarray:
    """Smooth random profile: a few cosine modes with decaying weights."""
    k = np.arange(n_modes)
    coeffs = rng.standard_normal(n_modes) / (1.0 + k)
    return amplitude * np.cos(np.pi * np.outer(nodes, k)) @ coeffs


def _read_table(path: Path, n_values: int) -> np.ndarray:
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    except OSError as exc:
        raise ConfigError(f"cannot read table {path}: {exc}") from exc
    try:
        data = np.array([[float(c) for c in r] for r in rows
                         if not r[0].strip().lower().startswith("x")])
    except ValueError as exc:
        raise ConfigError(f"bad number in table {path}: {exc}") from exc
    if data.ndim != 2 or data.shape[1] != n_values + 1:
        raise ConfigError(f"table {path} needs {n_values + 1} columns")
    return data


# Dotted file keys, in write order, and the fields they populate.
KEYS = {
    "name": "name",
    "plant.q": "q",
    "plant.tau": "tau",
    "plant.p1.kind": "p1_kind",
    "plant.p1.coeffs": "p1_coeffs",
    "plant.p1.direction": "p1_direction",
    "plant.p1.table": "p1_table",
    "plant.p2": "p2",
    "plant.p3": "p3",
    "exo.S": "S",
    "exo.v0": "v0",
    "exo.p4": "p4",
    "control.c0": "c0",
    "control.c1": "c1",
    "control.c2": "c2",
    "adaptive.iota": "iota",
    "adaptive.k0": "k0",
    "adaptive.k1": "k1",
    "numerics.n_cells": "n_cells",
    "numerics.cfl_factor": "cfl_factor",
    "numerics.damping": "damping",
    "numerics.t_final": "t_final",
    "numerics.predictor_stride": "predictor_stride",
    "numerics.export_stride": "export_stride",
    "numerics.seed": "seed",
    "init.w0.kind": "w0_kind",
    "init.w0.amplitude": "w0_amplitude",
    "init.w0.wavenumber": "w0_wavenumber",
    "init.w0.table": "w0_table",
    "init.w1.kind": "w1_kind",
    "init.w1.amplitude": "w1_amplitude",
    "init.w1.wavenumber": "w1_wavenumber",
    "init.w1.table": "w1_table",
    "observer.zhat0": "zhat0",
    "observer.zhat_s0": "zhat_s0",
    "observer.Y2hat0": "Y2hat0",
    "observer.Y10": "Y10",
    "observer.xi0": "xi0",
    "observer.chi1_hat0": "chi1_hat0",
    "observer.phi_hat0": "phi_hat0",
    "observer.theta_hat0": "theta_hat0",
}

_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(ScenarioParams)}


def _coerce(name, value, lineno):
    kind = _FIELD_TYPES[name]
    try:
        if kind == "float":
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise TypeError
            return float(value)
        if kind == "int":
            if isinstance(value, bool) or not float(value).is_integer():
                raise TypeError
            return int(value)
        if kind == "str":
            if not isinstance(value, str):
                raise TypeError
            return value
        if kind == "list":
            if not isinstance(value, list):
                raise TypeError
            return json.loads(json.dumps(value), parse_int=float)
    except (TypeError, ValueError):
        raise ConfigError(f"line {lineno}: bad {kind} value for {name}: {value!r}") from None
    return value


def loads(text: str, base_dir=".") -> ScenarioParams:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, _, rhs = line.partition("=")
        key = key.strip()
        if key not in KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            value = json.loads(rhs.strip())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"line {lineno}: cannot parse value for {key}: {exc.msg}") from None
        name = KEYS[key]
        if name in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[name] = _coerce(name, value, lineno)
    missing = [k for k, name in KEYS.items() if name not in values]
    if missing:
        raise ConfigError(f"missing field: {missing[0]}"
                          + (f" (and {len(missing) - 1} more)" if len(missing) > 1 else ""))
    return ScenarioParams(**values, base_dir=str(base_dir))


def load_scenario(path) -> ScenarioParams:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return loads(text, base_dir=path.parent)


def dumps(s: ScenarioParams) -> str:
    lines = []
    for key, name in KEYS.items():
        lines.append(f"{key} = {json.dumps(getattr(s, name))}")
    return "\n".join(lines) + "\n"


def save_scenario(s: ScenarioParams, path) -> None:
    Path(path).write_text(f"# scenario {s.name}\n" + dumps(s))


def bundled_path(name: str) -> Path:
    return Path(__file__).parent / "scenarios" / f"{name}.cfg"


def bundled(name: str) -> ScenarioParams:
    return load_scenario(bundled_path(name))
