"""Discrete one-forms, flow pullbacks and the structure-preservation identity.

Everything is evaluated in the flat chart ``c = (q0, q1, S0)`` of the discrete
constraint set ``{P_d = 0}``: the missing entropy ``S1`` is recovered by the
lift (a scalar Newton solve, see :func:`integrators.initialize`).  Pullbacks
commute with ``d``, so exterior derivatives are taken on pulled-back chart
forms by central finite differences.

With ``G_k`` the chart map to the ``k``-th window, the action sum
``S_hat(c) = sum_k L_d(G_k(c))`` satisfies ``dS_hat = a_plus - a_minus - beta``
where ``a_plus = G_{N-1}^* Theta^+``, ``a_minus = G_0^* Theta^-`` and
``beta = sum_k G_k^* omega``.  Applying ``d`` gives the identity checked here:
``-d a_plus + d a_minus = -d beta``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import InputError
from .integrators import SchemeOps, StepWindow, initialize, iterate, legendre_minus, legendre_plus
from .models import as_native, dot

FLOW_EPS = 1e-6
DERIV_EPS = 1e-5
IDENTITY_TOL = 1e-4

FORMS = ("theta_minus", "theta_plus", "omega_fr", "omega_ext", "omega_tau", "omega_total")


class NumericalError(ArithmeticError):
    """Non-finite value met while differencing."""


# --------------------------------------------------------------------------
# chart
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ConstraintChart:
    """Chart ``(q0, q1, S0) -> (q0, q1, S0, S1)`` with ``P_d = 0``."""

    scheme: SchemeOps

    @property
    def dim(self) -> int:
        return 2 * self.scheme.dim + 1

    def split(self, c):
        n = self.scheme.dim
        c = np.asarray(c, dtype=float).reshape(-1)
        if c.size != 2 * n + 1:
            raise InputError(f"chart point must have {2 * n + 1} components, got {c.size}")
        return as_native(c[:n], n), as_native(c[n : 2 * n], n), float(c[2 * n])

    def point(self, window: StepWindow) -> np.ndarray:
        return np.concatenate([np.atleast_1d(window.q0), np.atleast_1d(window.q1), [window.S0]]).astype(float)

    def lift(self, c) -> StepWindow:
        q0, q1, S0 = self.split(c)
        return initialize(self.scheme, q0, q1, S0)


def window_vector(r: StepWindow) -> np.ndarray:
    """Flatten ``(q0, q1, S0, S1)``."""
    return np.concatenate([np.atleast_1d(r.q0), np.atleast_1d(r.q1), [r.S0, r.S1]]).astype(float)


def _as_tangent(scheme: SchemeOps, w):
    """Split a flat window tangent or accept a 4-tuple ``(dq0, dq1, dS0, dS1)``."""
    n = scheme.dim
    if isinstance(w, tuple) and len(w) == 4:
        return as_native(w[0], n), as_native(w[1], n), float(w[2]), float(w[3])
    w = np.asarray(w, dtype=float).reshape(-1)
    if w.size != 2 * n + 2:
        raise InputError(f"window tangent must have {2 * n + 2} components")
    return as_native(w[:n], n), as_native(w[n : 2 * n], n), float(w[2 * n]), float(w[2 * n + 1])


def chart_flow(scheme: SchemeOps, chart_point, N: int):
    """Lift and apply the discrete flow ``N - 1`` times.

    Returns ``(final chart point, windows)`` where ``windows`` holds ``r_0 .. r_{N-1}``.
    """
    chart = ConstraintChart(scheme)
    ws = list(iterate(scheme, chart.lift(chart_point), N))
    return chart.point(ws[-1]), ws


# --------------------------------------------------------------------------
# discrete one-forms on the window space
# --------------------------------------------------------------------------


def discrete_legendre(scheme: SchemeOps, window: StepWindow, sign: str):
    """``'-'``: ``(q0, -D1 L_d - F_d^-)``; ``'+'``: ``(q1, D2 L_d + F_d^+)``."""
    if sign in ("-", "minus", -1):
        return legendre_minus(scheme, window)
    if sign in ("+", "plus", 1):
        return legendre_plus(scheme, window)
    raise InputError(f"sign must be '+' or '-', got {sign!r}")


def one_form_eval(form: str, scheme: SchemeOps, window: StepWindow, w) -> float:
    """Evaluate a discrete one-form at ``window`` on the tangent ``w``."""
    dq0, dq1, dS0, dS1 = _as_tangent(scheme, w)
    if form == "theta_minus":
        return dot(discrete_legendre(scheme, window, "-")[1], dq0)
    if form == "theta_plus":
        return dot(discrete_legendre(scheme, window, "+")[1], dq1)
    if form == "omega_fr":
        fm, fp = scheme.friction_forces(window)
        return dot(fm, dq0) + dot(fp, dq1)
    if form == "omega_ext":
        em, ep = scheme.external_forces(window)
        return dot(em, dq0) + dot(ep, dq1)
    if form == "omega_tau":
        _, _, D3, D4 = scheme.lagrangian_partials(window)
        return -D3 * dS0 - D4 * dS1
    if form == "omega_total":
        fm, fp = scheme.forces(window)
        _, _, D3, D4 = scheme.lagrangian_partials(window)
        return dot(fm, dq0) + dot(fp, dq1) - D3 * dS0 - D4 * dS1
    raise InputError(f"unknown form {form!r}; expected one of {FORMS}")


# --------------------------------------------------------------------------
# exterior derivative
# --------------------------------------------------------------------------


def _step_size(p: np.ndarray, eps: float) -> float:
    return eps * (1.0 + float(np.max(np.abs(p))))


def two_form_eval(alpha: Callable, p, u, v, eps: float = DERIV_EPS):
    """``d alpha(u, v) = D_u[alpha(.)(v)] - D_v[alpha(.)(u)]`` by central differences.

    ``alpha(point, vector)`` may return a scalar or an array (several forms at once).
    """
    p = np.asarray(p, dtype=float)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    e = _step_size(p, eps)
    with np.errstate(invalid="ignore", over="ignore"):
        du = (np.asarray(alpha(p + e * u, v)) - np.asarray(alpha(p - e * u, v))) / (2.0 * e)
        dv = (np.asarray(alpha(p + e * v, u)) - np.asarray(alpha(p - e * v, u))) / (2.0 * e)
        out = du - dv
    if not np.all(np.isfinite(out)):
        raise NumericalError("non-finite value in exterior derivative")
    return float(out) if np.ndim(out) == 0 else out


# --------------------------------------------------------------------------
# pullbacks along the chart flow
# --------------------------------------------------------------------------


def flow_differential(scheme: SchemeOps, c, w, N: int, eps: float = FLOW_EPS):
    """Windows ``r_k(c)`` and their tangents ``DG_k(c) w`` (flat, central differences)."""
    c = np.asarray(c, dtype=float)
    w = np.asarray(w, dtype=float)
    e = _step_size(c, eps)
    _, base = chart_flow(scheme, c, N)
    _, plus = chart_flow(scheme, c + e * w, N)
    _, minus = chart_flow(scheme, c - e * w, N)
    tangents = [(window_vector(a) - window_vector(b)) / (2.0 * e) for a, b in zip(plus, minus)]
    return base, tangents


def pulled_back_forms(scheme: SchemeOps, N: int, eps: float = FLOW_EPS) -> Callable:
    """Chart one-form returning ``[G_{N-1}^* Theta^+, G_0^* Theta^-, sum_k G_k^* omega]``."""

    def alpha(c, w):
        base, tangents = flow_differential(scheme, c, w, N, eps)
        a_plus = one_form_eval("theta_plus", scheme, base[-1], tangents[-1])
        a_minus = one_form_eval("theta_minus", scheme, base[0], tangents[0])
        beta = 0.0
        for r, t in zip(base, tangents):
            beta += one_form_eval("omega_total", scheme, r, t)
        return np.array([a_plus, a_minus, beta])

    return alpha


@dataclass(frozen=True)
class StructureCheckReport:
    N: int
    lhs: float
    rhs: float
    residual: float
    scale: float

    @property
    def relative(self) -> float:
        return self.residual / self.scale

    def passed(self, tol: float = IDENTITY_TOL) -> bool:
        return self.relative <= tol


def structure_identity_check(
    scheme: SchemeOps,
    chart_point,
    N: int,
    u,
    v,
    *,
    flow_eps: float = FLOW_EPS,
    deriv_eps: float = DERIV_EPS,
) -> StructureCheckReport:
    """Compare ``(G_{N-1}^* Omega^+ - Omega^-)(u, v)`` with ``(-d beta)(u, v)``."""
    if N < 1:
        raise InputError("N must be >= 1")
    d_plus, d_minus, d_beta = two_form_eval(pulled_back_forms(scheme, N, flow_eps), chart_point, u, v, deriv_eps)
    lhs = -d_plus + d_minus
    rhs = -d_beta
    residual = abs(lhs - rhs)
    return StructureCheckReport(N, float(lhs), float(rhs), float(residual), max(abs(lhs), abs(rhs), 1.0))


def mechanical_directions(scheme: SchemeOps, u) -> np.ndarray:
    """Drop the entropy component of a chart tangent."""
    u = np.array(u, dtype=float)
    u[2 * scheme.dim] = 0.0
    return u


def random_tangent_pairs(rng: np.random.Generator, dim: int, count: int, mechanical: bool = False) -> list[tuple[np.ndarray, np.ndarray]]:
    """Seeded unit tangent pairs; with ``mechanical`` the entropy slot is zero."""
    pairs = []
    for _ in range(count):
        u, v = rng.standard_normal(dim), rng.standard_normal(dim)
        if mechanical:
            u[-1] = v[-1] = 0.0
        pairs.append((u / np.linalg.norm(u), v / np.linalg.norm(v)))
    return pairs


def structure_sweep(
    scheme: SchemeOps, chart_point, N: int, pairs: Sequence[tuple[np.ndarray, np.ndarray]]
) -> list[StructureCheckReport]:
    return [structure_identity_check(scheme, chart_point, N, u, v) for u, v in pairs]
