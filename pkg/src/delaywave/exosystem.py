"""Harmonic exosystem ``v' = S v`` and its coordinate changes.

Everything here is propagated in closed form: for ``S`` with eigenvalues
``+-i*omega`` one has ``S @ S = -omega**2 I`` and therefore
``expm(S t) = cos(omega t) I + sin(omega t) / omega * S``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

GAMMA_ETA = np.array([1.0, 0.0])


class ExosystemError(ValueError):
    pass


class SingularTransformError(np.linalg.LinAlgError):
    pass


def _as_row(x) -> np.ndarray:
    return np.asarray(x, dtype=float).reshape(2)


@dataclass(frozen=True)
class ExoParams:
    """Exosystem matrix, initial state and reference row."""

    S: np.ndarray
    v0: np.ndarray
    p4: np.ndarray

    def __post_init__(self):
        S = np.asarray(self.S, dtype=float).reshape(2, 2)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "v0", _as_row(self.v0))
        object.__setattr__(self, "p4", _as_row(self.p4))
        if abs(np.trace(S)) > 1e-12 * max(np.linalg.norm(S), 1.0):
            raise ExosystemError(
                f"trace(S) = {np.trace(S):g}; eigenvalues must be +-i*omega")
        if not np.linalg.det(S) > 0:
            raise ExosystemError(
                f"det(S) = {np.linalg.det(S):g}; eigenvalues must be +-i*omega")

    @property
    def omega(self) -> float:
        return float(np.sqrt(np.linalg.det(self.S)))

    @property
    def theta(self) -> float:
        return self.omega ** 2


def rotation_expm(M: np.ndarray, omega: float, t) -> np.ndarray:
    """``expm(M t)`` for any square ``M`` with ``M @ M = -omega**2 I``.

    ``t`` may be an array; the result then stacks along the leading axis.
    """
    t = np.asarray(t, dtype=float)
    eye = np.eye(M.shape[0])
    c = np.cos(omega * t)[..., None, None]
    s = (np.sin(omega * t) / omega)[..., None, None]
    return c * eye + s * M


def step_exo(params: ExoParams, v, dt: float) -> np.ndarray:
    if not np.isfinite(dt):
        raise ValueError("dt must be finite")
    return rotation_expm(params.S, params.omega, dt) @ _as_row(v)


def exo_state(params: ExoParams, t) -> np.ndarray:
    """Exact ``v(t)``; vectorised over ``t`` (rows are states)."""
    return rotation_expm(params.S, params.omega, t) @ params.v0


def reference_signal(params: ExoParams, v) -> float:
    return float(params.p4 @ _as_row(v))


def S_eta(omega: float) -> np.ndarray:
    return np.array([[0.0, omega], [-omega, 0.0]])


@dataclass(frozen=True)
class EtaState:
    """Rotating coordinates of the boundary disturbance ``gamma1 @ v(t)``."""

    eta0: np.ndarray
    omega: float

    @property
    def S_eta(self) -> np.ndarray:
        return S_eta(self.omega)

    @property
    def gamma_eta(self) -> np.ndarray:
        return GAMMA_ETA

    def at(self, t) -> np.ndarray:
        return rotation_expm(self.S_eta, self.omega, t) @ self.eta0


def eta_initial(gamma1, params: ExoParams) -> EtaState:
    """Match ``eta1 = gamma1 v`` and ``eta2 = (gamma1 v)' / omega`` at t = 0."""
    gamma1 = _as_row(gamma1)
    w = params.omega
    A = gamma1 @ params.v0
    B = gamma1 @ params.S @ params.v0 / w
    return EtaState(np.array([A, B]), w)


def companion(theta: float) -> np.ndarray:
    """Observer-canonical matrix ``[[0, 1], [-theta, 0]]``."""
    return np.array([[0.0, 1.0], [-theta, 0.0]])


@dataclass(frozen=True)
class CanonicalForm:
    S_c: np.ndarray
    T: np.ndarray

    @property
    def T_inv(self) -> np.ndarray:
        return np.linalg.inv(self.T)


def observability_matrix(S: np.ndarray, c) -> np.ndarray:
    c = _as_row(c)
    return np.vstack([c, c @ S])


def canonical_form(S_eta_: np.ndarray, g1_0) -> CanonicalForm:
    """Similarity ``T`` taking ``(S_eta, g1(0))`` to ``(S_c, [1, 0])``.

    ``T`` is the observability matrix of the pair; it satisfies
    ``S_c T = T S_eta`` and ``g1(0) = [1, 0] T``.
    """
    T = observability_matrix(S_eta_, g1_0)
    scale = max(np.abs(T).max(), 1e-300)
    if abs(np.linalg.det(T)) <= 1e-14 * scale * scale:
        raise SingularTransformError("(S_eta, g1(0)) is not observable")
    theta = float(-(S_eta_ @ S_eta_)[0, 0])
    return CanonicalForm(companion(theta), T)


def hautus_observable(omega: float, g1_0) -> tuple:
    """Rank test of ``[g1(0); g1(0) S_eta]``; returns ``(observable, cond)``."""
    O = observability_matrix(S_eta(omega), g1_0)
    sv = np.linalg.svd(O, compute_uv=False)
    if sv[0] == 0.0:
        return False, np.inf
    rank = int(np.sum(sv > sv[0] * 1e-12))
    cond = sv[0] / sv[-1] if sv[-1] > 0 else np.inf
    return rank == 2, float(cond)


def d_from_eta(T: np.ndarray, eta) -> np.ndarray:
    return np.asarray(T) @ np.asarray(eta, dtype=float)
