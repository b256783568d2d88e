"""Continuous-time reference: the coupled mechanical/entropy ODE, a fixed-step
RK4 integrator, and the closed-form solution of the mass-spring-gas benchmark.
"""

from __future__ import annotations

import math

import numpy as np
from dataclasses import dataclass

from .errors import AssumptionViolation, InputError, RegimeError
from .models import (
    IdealGasParams,
    MassSpringParams,
    SystemModel,
    ThermoState,
    dot,
    matvec,
)
from .records import TrajectoryRecord


def _rhs(model: SystemModel, q, v, S, t):
    Uq, T = model.potential_grad(q, S)
    if not T > 0.0:
        raise AssumptionViolation(q, S, T)
    Ffr = model.friction(q, v, S)
    F = Ffr if model.external is None else Ffr + model.external(q, v, S)
    a = matvec(model.mass_inv, F - Uq)
    Sdot = (model.heat_power(t) - dot(Ffr, v)) / T
    return v, a, Sdot


def evolution_rhs(model: SystemModel, state: ThermoState, t: float = 0.0):
    """Time derivative ``(qdot, vdot, Sdot)`` of the simple-system equations.

    ``M vdot = -dU/dq + F_ext + F_fr`` and ``T Sdot = P_H - <F_fr, v>``.
    """
    if state.dim != model.dim:
        raise InputError("state/model dimension mismatch")
    return _rhs(model, state.q, state.v, state.S, t)


def _record(model, k, t, q, v, S, E0=None):
    T = model.temperature(q, S)
    E = model.kinetic(v) + model.potential(q, S)
    if E0 is None:
        E0 = E
    return TrajectoryRecord(k, t, q, v, S, T, model.internal(q, S), E, abs(E - E0) / abs(E0))


def rk4_trajectory(model: SystemModel, init: ThermoState, h: float, N: int) -> list[TrajectoryRecord]:
    """Classical fixed-step RK4; returns ``N + 1`` records (``t = 0 .. N h``)."""
    if not h > 0 or N < 1:
        raise InputError("need h > 0 and N >= 1")
    if init.dim != model.dim:
        raise InputError("state/model dimension mismatch")
    q, v, S = init.q, init.v, init.S
    first = _record(model, 0, 0.0, q, v, S)
    E0 = first.E
    out = [first]
    h2 = 0.5 * h
    for k in range(N):
        t = k * h
        try:
            k1q, k1v, k1s = _rhs(model, q, v, S, t)
            k2q, k2v, k2s = _rhs(model, q + h2 * k1q, v + h2 * k1v, S + h2 * k1s, t + h2)
            k3q, k3v, k3s = _rhs(model, q + h2 * k2q, v + h2 * k2v, S + h2 * k2s, t + h2)
            k4q, k4v, k4s = _rhs(model, q + h * k3q, v + h * k3v, S + h * k3s, t + h)
        except AssumptionViolation as exc:
            raise AssumptionViolation(exc.q, exc.S, exc.T, f"RK4 step {k}: non-positive temperature T={exc.T!r}") from exc
        q = q + (h / 6.0) * (k1q + 2.0 * k2q + 2.0 * k3q + k4q)
        v = v + (h / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        S = S + (h / 6.0) * (k1s + 2.0 * k2s + 2.0 * k3s + k4s)
        out.append(_record(model, k + 1, (k + 1) * h, q, v, S, E0))
    return out


# --------------------------------------------------------------------------
# closed-form benchmark solution
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ExactSolutionParams:
    """Underdamped mass-spring-gas system without external force."""

    mp: MassSpringParams
    gp: IdealGasParams
    x0: float
    v0: float = 0.0

    def __post_init__(self):
        if not self.kappa < self.omega0:
            raise RegimeError(
                f"closed form needs kappa < omega0 (kappa={self.kappa}, omega0={self.omega0}); "
                "critically damped and overdamped motion are not covered"
            )

    @property
    def kappa(self) -> float:
        return self.mp.lam / (2.0 * self.mp.m)

    @property
    def omega0(self) -> float:
        return math.sqrt(self.mp.k / self.mp.m)

    @property
    def omega(self) -> float:
        return math.sqrt(self.omega0**2 - self.kappa**2)

    @property
    def mechanical_energy(self) -> float:
        return 0.5 * self.mp.m * self.v0**2 + 0.5 * self.mp.k * self.x0**2


def exact_position(p: ExactSolutionParams, t: float) -> tuple[float, float]:
    """Position and velocity of the damped oscillator at time ``t`` (scalar or array)."""
    kap, w, x0, v0 = p.kappa, p.omega, p.x0, p.v0
    decay = np.exp(-kap * t)
    c, s = np.cos(w * t), np.sin(w * t)
    b = (v0 + kap * x0) / w
    x = decay * (x0 * c + b * s)
    xdot = decay * (v0 * c - (kap * b + x0 * w) * s)
    return x, xdot


def exact_dissipated(p: ExactSolutionParams, t: float) -> float:
    """Work dissipated by friction up to ``t``: ``lambda * int_0^t xdot^2``."""
    m, k, lam = p.mp.m, p.mp.k, p.mp.lam
    x0, v0 = p.x0, p.v0
    disc = 4.0 * k * m - lam * lam
    if disc == 0.0:
        raise RegimeError("lambda^2 = 4 k m: degenerate (critically damped) regime")
    w2t = 2.0 * p.omega * t
    bracket = (
        4.0 * k * m * (m * v0 * v0 + lam * v0 * x0 + k * x0 * x0)
        - lam * (v0 * v0 * lam * m + 4.0 * v0 * m * k * x0 + lam * k * x0 * x0) * np.cos(w2t)
        - lam * (m * v0 * v0 - k * x0 * x0) * math.sqrt(disc) * np.sin(w2t)
    )
    return p.mechanical_energy - np.exp(-lam * t / m) * bracket / (2.0 * disc)


def exact_temperature(p: ExactSolutionParams, t: float) -> float:
    return p.gp.T0 + exact_dissipated(p, t) / p.gp.heat_capacity


def exact_entropy(p: ExactSolutionParams, t: float) -> float:
    C = p.gp.heat_capacity
    return p.gp.S0 + C * np.log(exact_temperature(p, t) / p.gp.T0)


def exact_internal_energy(p: ExactSolutionParams, t: float) -> float:
    return p.gp.U0 + exact_dissipated(p, t)
