"""Simple thermodynamic systems: a Lagrangian ``K - U`` plus friction, external
force and heat power, and the mass-spring-friction-in-ideal-gas benchmark.

Positions and velocities use a *native* representation: a Python ``float`` when
the configuration space is one-dimensional, a 1-D ``numpy`` array otherwise.
Model callables receive and return values in that representation (scalars for
``n = 1``, arrays/matrices for ``n > 1``); this keeps the scalar benchmark fast
enough to integrate 10^5 implicit steps in well under a second per scheme.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import AssumptionViolation, InputError, ModelError, RangeError

GAS_CONSTANT = 8.314462618  # J/(mol K)
MONATOMIC_C = 1.5


# --------------------------------------------------------------------------
# native representation helpers
# --------------------------------------------------------------------------


def as_native(x, dim: int):
    """Convert array-like ``x`` to the native representation for ``dim``."""
    if dim == 1:
        arr = np.asarray(x, dtype=float).reshape(-1)
        if arr.size != 1:
            raise InputError(f"expected a scalar, got shape {np.shape(x)}")
        return float(arr[0])
    arr = np.array(x, dtype=float).reshape(-1)
    if arr.size != dim:
        raise InputError(f"expected dimension {dim}, got {arr.size}")
    return arr


def as_array(x) -> np.ndarray:
    return np.atleast_1d(np.asarray(x, dtype=float))


def dot(a, b) -> float:
    if isinstance(a, float):
        return a * b
    return float(np.dot(a, b))


def matvec(A, x):
    if isinstance(x, float):
        return A * x
    return A @ x


def vecmat(x, A):
    """Row vector times matrix, i.e. ``A^T x``."""
    if isinstance(x, float):
        return x * A
    return x @ A


def _is_finite(x) -> bool:
    if isinstance(x, float):
        return math.isfinite(x)
    return bool(np.all(np.isfinite(x)))


# --------------------------------------------------------------------------
# state
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ThermoState:
    """Continuous state ``(q, v, S)`` of a simple system."""

    q: object
    v: object
    S: float

    def __post_init__(self):
        q = as_array(self.q)
        v = as_array(self.v)
        if q.shape != v.shape:
            raise InputError(f"q and v dimensions differ: {q.shape} vs {v.shape}")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(v)) and math.isfinite(self.S)):
            raise InputError("state has non-finite components")
        dim = q.size
        object.__setattr__(self, "q", as_native(q, dim))
        object.__setattr__(self, "v", as_native(v, dim))
        object.__setattr__(self, "S", float(self.S))

    @property
    def dim(self) -> int:
        return 1 if isinstance(self.q, float) else self.q.size


# --------------------------------------------------------------------------
# finite-difference fallback for user-defined models
# --------------------------------------------------------------------------


def _fd_step(x, rel=1e-6):
    return rel * (1.0 + abs(x))


def _fd_scalar_partials(f, x, dim, rel=1e-6):
    """Central differences of scalar/vector valued ``f`` w.r.t. native ``x``.

    Returns the derivative in native shape: for ``dim == 1`` the plain
    derivative, otherwise an array stacking partials along the last axis.
    """
    if dim == 1:
        e = _fd_step(x, rel)
        return (f(x + e) - f(x - e)) / (2 * e)
    cols = []
    for i in range(dim):
        e = _fd_step(x[i], rel)
        xp = x.copy()
        xm = x.copy()
        xp[i] += e
        xm[i] -= e
        cols.append((np.asarray(f(xp)) - np.asarray(f(xm))) / (2 * e))
    return np.stack(cols, axis=-1)


def fd_potential_grad(U, dim):
    def grad(q, S):
        Uq = _fd_scalar_partials(lambda x: U(x, S), q, dim)
        e = _fd_step(S)
        US = (U(q, S + e) - U(q, S - e)) / (2 * e)
        return Uq, US

    return grad


def fd_potential_hess(grad, dim, rel=1e-4):
    """Second partials by differencing ``grad``.

    The larger default step balances truncation against the rounding noise of
    a finite-difference ``grad``; expect roughly three correct digits then.
    """

    def hess(q, S):
        Uqq = _fd_scalar_partials(lambda x: grad(x, S)[0], q, dim, rel)
        e = _fd_step(S, rel)
        gp = grad(q, S + e)
        gm = grad(q, S - e)
        if dim == 1:
            UqS = (gp[0] - gm[0]) / (2 * e)
        else:
            UqS = (np.asarray(gp[0]) - np.asarray(gm[0])) / (2 * e)
        USS = (gp[1] - gm[1]) / (2 * e)
        return Uqq, UqS, USS

    return hess


def fd_force_jac(F, dim):
    def jac(q, v, S):
        Fq = _fd_scalar_partials(lambda x: F(x, v, S), q, dim)
        Fv = _fd_scalar_partials(lambda x: F(q, x, S), v, dim)
        e = _fd_step(S)
        if dim == 1:
            FS = (F(q, v, S + e) - F(q, v, S - e)) / (2 * e)
        else:
            FS = (np.asarray(F(q, v, S + e)) - np.asarray(F(q, v, S - e))) / (2 * e)
        return Fq, Fv, FS

    return jac


def _zero_heat(t: float) -> float:
    return 0.0


# --------------------------------------------------------------------------
# system model
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SystemModel:
    """Lagrangian ``L(q, v, S) = 1/2 v^T M v - U(q, S)`` with forces.

    Use :meth:`create` rather than the raw constructor; it validates the mass
    matrix and fills in finite-difference partials for anything not supplied.

    ``potential_grad(q, S)`` returns ``(dU/dq, dU/dS)``;
    ``potential_hess(q, S)`` returns ``(d2U/dq2, d2U/dSdq, d2U/dS2)``;
    ``friction_jac`` / ``external_jac`` return ``(dF/dq, dF/dv, dF/dS)`` with
    ``dF/dq[i, j] = dF_i/dq_j``.
    """

    dim: int
    mass: object
    potential: Callable
    potential_grad: Callable
    potential_hess: Callable
    friction: Callable
    friction_jac: Callable
    external: Optional[Callable] = None
    external_jac: Optional[Callable] = None
    heat_power: Callable[[float], float] = _zero_heat
    internal_energy: Optional[Callable[[float], float]] = None
    check_dissipation: bool = False
    mass_inv: object = field(default=None, repr=False)

    @classmethod
    def create(
        cls,
        mass,
        potential,
        friction=None,
        *,
        potential_grad=None,
        potential_hess=None,
        friction_jac=None,
        external=None,
        external_jac=None,
        heat_power=None,
        internal_energy=None,
        check_dissipation=False,
    ) -> "SystemModel":
        M = np.atleast_2d(np.asarray(mass, dtype=float))
        if M.shape[0] != M.shape[1]:
            raise ModelError(f"mass matrix must be square, got {M.shape}")
        if not np.all(np.isfinite(M)) or not np.allclose(M, M.T):
            raise ModelError("mass matrix must be finite and symmetric")
        try:
            np.linalg.cholesky(M)
        except np.linalg.LinAlgError:
            raise ModelError("mass matrix is not positive definite") from None
        dim = M.shape[0]
        if dim == 1:
            mass_native = float(M[0, 0])
            mass_inv = 1.0 / mass_native
        else:
            mass_native = M
            mass_inv = np.linalg.inv(M)

        if potential_grad is None:
            potential_grad = fd_potential_grad(potential, dim)
        if potential_hess is None:
            potential_hess = fd_potential_hess(potential_grad, dim)
        if friction is None:
            zero = 0.0 if dim == 1 else np.zeros(dim)
            zjac = (0.0, 0.0, 0.0) if dim == 1 else (np.zeros((dim, dim)), np.zeros((dim, dim)), np.zeros(dim))
            friction = lambda q, v, S: zero  # noqa: E731
            friction_jac = lambda q, v, S: zjac  # noqa: E731
        elif friction_jac is None:
            friction_jac = fd_force_jac(friction, dim)
        if external is not None and external_jac is None:
            external_jac = fd_force_jac(external, dim)
        return cls(
            dim=dim,
            mass=mass_native,
            potential=potential,
            potential_grad=potential_grad,
            potential_hess=potential_hess,
            friction=friction,
            friction_jac=friction_jac,
            external=external,
            external_jac=external_jac,
            heat_power=heat_power or _zero_heat,
            internal_energy=internal_energy,
            check_dissipation=check_dissipation,
            mass_inv=mass_inv,
        )

    # --- evaluations -----------------------------------------------------

    def kinetic(self, v) -> float:
        return 0.5 * dot(v, matvec(self.mass, v))

    def temperature(self, q, S) -> float:
        T = self.potential_grad(q, S)[1]
        if not T > 0.0:
            raise AssumptionViolation(q, S, T)
        return T

    def total_force(self, q, v, S):
        F = self.friction(q, v, S)
        if self.external is not None:
            F = F + self.external(q, v, S)
        return F

    def check_dissipative(self, q, v, S, tol: float = 0.0) -> None:
        power = dot(self.friction(q, v, S), v)
        if power > tol:
            raise AssumptionViolation(q, S, None, f"friction is not dissipative: <F_fr, v> = {power!r} > 0")

    def internal(self, q, S) -> float:
        """Internal energy if the model defines one, else the potential."""
        if self.internal_energy is not None:
            return self.internal_energy(S)
        return self.potential(q, S)


def _check_state(model: SystemModel, state: ThermoState) -> None:
    if state.dim != model.dim:
        raise InputError(f"state dimension {state.dim} does not match model dimension {model.dim}")


def lagrangian(model: SystemModel, state: ThermoState) -> float:
    _check_state(model, state)
    return model.kinetic(state.v) - model.potential(state.q, state.S)


def total_energy(model: SystemModel, state: ThermoState) -> float:
    _check_state(model, state)
    return model.kinetic(state.v) + model.potential(state.q, state.S)


def temperature(model: SystemModel, q, S: float) -> float:
    """``T = dU/dS``; raises :class:`AssumptionViolation` when ``T <= 0``."""
    q = as_native(q, model.dim)
    if not (_is_finite(q) and math.isfinite(S)):
        raise InputError("non-finite position or entropy")
    return model.temperature(q, float(S))


# --------------------------------------------------------------------------
# ideal gas + mass-spring benchmark
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class IdealGasParams:
    """Ideal gas at fixed volume and mole number; ``U0 = c N0 R T0``."""

    U0: float
    c: float
    N0: float
    R: float
    S0: float
    T0: float
    V0: float

    def __post_init__(self):
        for name in ("U0", "c", "N0", "R", "S0", "T0", "V0"):
            if not math.isfinite(getattr(self, name)):
                raise ModelError(f"{name} must be finite")
        if self.c <= 0 or self.N0 <= 0 or self.R <= 0 or self.T0 <= 0:
            raise ModelError("c, N0, R and T0 must be positive")
        expected = self.c * self.N0 * self.R * self.T0
        if not math.isclose(self.U0, expected, rel_tol=1e-12):
            raise ModelError(f"U0={self.U0} inconsistent with c*N0*R*T0={expected}")

    @classmethod
    def from_temperature(cls, T0, N0, V0, *, c=MONATOMIC_C, R=GAS_CONSTANT, S0=0.0) -> "IdealGasParams":
        return cls(U0=c * N0 * R * T0, c=c, N0=N0, R=R, S0=S0, T0=T0, V0=V0)

    @property
    def heat_capacity(self) -> float:
        """``c N0 R``, the constant-volume heat capacity (J/K)."""
        return self.c * self.N0 * self.R


def internal_energy(params: IdealGasParams, S: float) -> float:
    """``U0 exp((S - S0) / (c R N0))`` on the ``N = N0, V = V0`` slice."""
    try:
        return params.U0 * math.exp((S - params.S0) / params.heat_capacity)
    except OverflowError:
        raise RangeError(f"internal energy overflows at S={S!r}") from None


def internal_energy_full(params: IdealGasParams, S: float, N: float, V: float) -> float:
    """Ideal-gas internal energy ``U(S, N, V)`` for arbitrary mole number and volume."""
    if N <= 0 or V <= 0:
        raise InputError("N and V must be positive")
    c, R = params.c, params.R
    try:
        expo = math.exp((S / N - params.S0 / params.N0) / (c * R))
    except OverflowError:
        raise RangeError(f"internal energy overflows at S={S!r}") from None
    return params.U0 * expo * (N / params.N0) ** (1.0 / c + 1.0) * (params.V0 / V) ** (1.0 / c)


def gas_temperature(params: IdealGasParams, S: float) -> float:
    return internal_energy(params, S) / params.heat_capacity


@dataclass(frozen=True)
class MassSpringParams:
    m: float
    k: float
    lam: float

    def __post_init__(self):
        if not (self.m > 0 and self.k > 0 and self.lam >= 0):
            raise ModelError(f"need m > 0, k > 0, lambda >= 0 (got m={self.m}, k={self.k}, lambda={self.lam})")


@dataclass(frozen=True)
class ExternalForce:
    """Affine external force ``F = constant + stiffness * x + damping * v``."""

    constant: float = 0.0
    stiffness: float = 0.0
    damping: float = 0.0

    @property
    def is_zero(self) -> bool:
        return self.constant == 0.0 and self.stiffness == 0.0 and self.damping == 0.0


def mass_spring_gas_model(
    mp: MassSpringParams,
    gp: IdealGasParams,
    fext: Optional[ExternalForce] = None,
    *,
    check_dissipation: bool = False,
) -> SystemModel:
    """Mass on a spring with viscous friction, inside a rigid room of ideal gas.

    ``U(x, S) = k x^2 / 2 + U_gas(S)`` and ``F_fr = -lambda xdot``.  The solid's
    own internal energy is neglected.
    """
    k, lam = mp.k, mp.lam
    U0, S0, C = gp.U0, gp.S0, gp.heat_capacity

    def gas(S):
        try:
            return U0 * math.exp((S - S0) / C)
        except OverflowError:
            raise RangeError(f"internal energy overflows at S={S!r}") from None

    def potential(x, S):
        return 0.5 * k * x * x + gas(S)

    def potential_grad(x, S):
        return k * x, gas(S) / C

    def potential_hess(x, S):
        return k, 0.0, gas(S) / (C * C)

    def friction(x, v, S):
        return -lam * v

    jac_fr = (0.0, -lam, 0.0)

    def friction_jac(x, v, S):
        return jac_fr

    external = external_jac = None
    if fext is not None and not fext.is_zero:
        f0, fx, fv = fext.constant, fext.stiffness, fext.damping
        jac_ext = (fx, fv, 0.0)

        def external(x, v, S):
            return f0 + fx * x + fv * v

        def external_jac(x, v, S):
            return jac_ext

    return SystemModel.create(
        [[mp.m]],
        potential,
        friction,
        potential_grad=potential_grad,
        potential_hess=potential_hess,
        friction_jac=friction_jac,
        external=external,
        external_jac=external_jac,
        internal_energy=gas,
        check_dissipation=check_dissipation,
    )
