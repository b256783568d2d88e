"""Variational integrators for simple closed thermodynamic systems.

A discrete Lagrangian is assembled from *nodes*: each node samples the
continuous Lagrangian at ``qbar = (1 - alpha) q0 + alpha q1``,
``Sbar = (1 - alpha) S0 + alpha S1`` with the finite-difference velocity
``(q1 - q0) / h``.  The three classical choices are

* scheme 1 (extended Verlet): one node at ``alpha = 0``;
* scheme 2 (variational midpoint): one node at ``alpha = 1/2``;
* scheme 3 (symmetrized): nodes at ``alpha = 0`` and ``alpha = 1``, weight 1/2.

Discrete forces follow the node weights (``F^- = h sum w (1 - alpha) F``,
``F^+ = h sum w alpha F``).  The discrete phenomenological constraint is
``P_d = sum p [T(qbar, Sbar) (S1 - S0)/h + <F_fr(qbar, v, Sbar), v>]`` with its
own node weights ``p`` (they may differ from the Lagrangian nodes), so
``P_d = 0`` is the discrete statement ``T Sdot = -<F_fr, v>``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np

from .errors import AssumptionViolation, InitializationError, InputError, RegularityError, StepFailure
from .models import SystemModel, as_native, dot, matvec, vecmat
from .records import TrajectoryRecord

NEWTON_TOL = 1e-12
MAX_ITER = 50


class SchemeKind(enum.Enum):
    VERLET1 = 1
    MIDPOINT2 = 2
    SYMMETRIZED3 = 3

    @classmethod
    def parse(cls, value) -> "SchemeKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(int(value))
        except (ValueError, TypeError):
            pass
        try:
            return cls[str(value).upper()]
        except KeyError:
            raise InputError(f"unknown scheme {value!r}; expected 1, 2 or 3") from None


@dataclass(frozen=True)
class Node:
    """Quadrature sample at ``alpha`` with the given weight."""

    alpha: float
    weight: float


@dataclass(frozen=True)
class StepWindow:
    """Point ``(q0, q1, S0, S1)`` of the discrete state space."""

    q0: object
    q1: object
    S0: float
    S1: float

    def shifted(self, q2, S2) -> "StepWindow":
        return StepWindow(self.q1, q2, self.S1, S2)


@dataclass(frozen=True)
class _MergedNode:
    a: float  # weight on the left endpoint, 1 - alpha
    b: float  # alpha
    wl: float  # Lagrangian weight
    pc: float  # constraint weight


def _merge(lagrangian: Sequence[Node], constraint: Sequence[Node]) -> tuple[_MergedNode, ...]:
    table: dict[float, list[float]] = {}
    for n in lagrangian:
        table.setdefault(float(n.alpha), [0.0, 0.0])[0] += n.weight
    for n in constraint:
        table.setdefault(float(n.alpha), [0.0, 0.0])[1] += n.weight
    return tuple(_MergedNode(1.0 - al, al, wl, pc) for al, (wl, pc) in sorted(table.items()))


@dataclass(frozen=True)
class RegularityReport:
    window: StepWindow
    matrix: np.ndarray
    determinant: float
    invertible: bool
    schur_entry: object
    constraint_slope: float


@dataclass(frozen=True)
class SchemeOps:
    """Discrete Lagrangian, forces and constraint for one time step ``h``."""

    model: SystemModel
    h: float
    lagrangian_nodes: tuple[Node, ...]
    constraint_nodes: tuple[Node, ...]
    kind: Optional[SchemeKind] = None
    nodes: tuple[_MergedNode, ...] = field(init=False, repr=False)

    def __post_init__(self):
        if not self.h > 0 or not math.isfinite(self.h):
            raise InputError(f"time step must be positive, got {self.h!r}")
        if not self.lagrangian_nodes or not self.constraint_nodes:
            raise InputError("need at least one Lagrangian node and one constraint node")
        if not math.isclose(sum(n.weight for n in self.lagrangian_nodes), 1.0, rel_tol=1e-12):
            raise InputError("Lagrangian node weights must sum to 1")
        if any(not 0.0 <= n.alpha <= 1.0 for n in (*self.lagrangian_nodes, *self.constraint_nodes)):
            raise InputError("node alphas must lie in [0, 1]")
        object.__setattr__(self, "nodes", _merge(self.lagrangian_nodes, self.constraint_nodes))

    @property
    def dim(self) -> int:
        return self.model.dim

    # ------------------------------------------------------------------
    # pointwise evaluations (public, window based)
    # ------------------------------------------------------------------

    def _node_state(self, nd: _MergedNode, q0, q1, S0, S1):
        return nd.a * q0 + nd.b * q1, nd.a * S0 + nd.b * S1

    def _temperature(self, qb, Sb):
        Uq, T = self.model.potential_grad(qb, Sb)
        if not T > 0.0:
            raise AssumptionViolation(qb, Sb, T)
        return Uq, T

    def discrete_lagrangian(self, r: StepWindow) -> float:
        h, model = self.h, self.model
        v = (r.q1 - r.q0) / h
        total = 0.0
        for nd in self.nodes:
            if nd.wl:
                qb, Sb = self._node_state(nd, r.q0, r.q1, r.S0, r.S1)
                total += nd.wl * model.potential(qb, Sb)
        return h * (model.kinetic(v) - total)

    def lagrangian_partials(self, r: StepWindow):
        """``(D1 L_d, D2 L_d, D3 L_d, D4 L_d)``."""
        h = self.h
        v = (r.q1 - r.q0) / h
        p = matvec(self.model.mass, v)
        D1, D2 = -p, p
        D3 = D4 = 0.0
        for nd in self.nodes:
            if nd.wl:
                qb, Sb = self._node_state(nd, r.q0, r.q1, r.S0, r.S1)
                Uq, T = self._temperature(qb, Sb)
                D1 = D1 - (h * nd.wl * nd.a) * Uq
                D2 = D2 - (h * nd.wl * nd.b) * Uq
                D3 -= h * nd.wl * nd.a * T
                D4 -= h * nd.wl * nd.b * T
        return D1, D2, D3, D4

    def _discrete_force(self, r: StepWindow, fn):
        h = self.h
        v = (r.q1 - r.q0) / h
        zero = 0.0 if self.dim == 1 else np.zeros(self.dim)
        Fm, Fp = zero, zero
        if fn is None:
            return Fm, Fp
        for nd in self.nodes:
            if nd.wl:
                qb, Sb = self._node_state(nd, r.q0, r.q1, r.S0, r.S1)
                F = fn(qb, v, Sb)
                Fm = Fm + (h * nd.wl * nd.a) * F
                Fp = Fp + (h * nd.wl * nd.b) * F
        return Fm, Fp

    def friction_forces(self, r: StepWindow):
        """``(F^{fr-}, F^{fr+})`` attached at ``q0`` and ``q1``."""
        return self._discrete_force(r, self.model.friction)

    def external_forces(self, r: StepWindow):
        """``(F^{ext-}, F^{ext+})``."""
        return self._discrete_force(r, self.model.external)

    def forces(self, r: StepWindow):
        """Total discrete forces ``(F_d^-, F_d^+)``."""
        fm, fp = self.friction_forces(r)
        em, ep = self.external_forces(r)
        return fm + em, fp + ep

    def constraint(self, r: StepWindow) -> float:
        h = self.h
        v = (r.q1 - r.q0) / h
        dS = (r.S1 - r.S0) / h
        P = 0.0
        for nd in self.nodes:
            if nd.pc:
                qb, Sb = self._node_state(nd, r.q0, r.q1, r.S0, r.S1)
                _, T = self._temperature(qb, Sb)
                P += nd.pc * (T * dS + dot(self.model.friction(qb, v, Sb), v))
        return P

    def constraint_partials(self, r: StepWindow):
        """``(D1 P_d, D2 P_d, D3 P_d, D4 P_d)``."""
        h, model = self.h, self.model
        v = (r.q1 - r.q0) / h
        dS = (r.S1 - r.S0) / h
        zero = 0.0 if self.dim == 1 else np.zeros(self.dim)
        P1, P2, P3, P4 = zero, zero, 0.0, 0.0
        for nd in self.nodes:
            if not nd.pc:
                continue
            qb, Sb = self._node_state(nd, r.q0, r.q1, r.S0, r.S1)
            _, T = self._temperature(qb, Sb)
            _, UqS, USS = model.potential_hess(qb, Sb)
            F = model.friction(qb, v, Sb)
            Fq, Fv, FS = model.friction_jac(qb, v, Sb)
            Fv_v = vecmat(v, Fv) / h
            Fq_v = vecmat(v, Fq)
            FSv = dot(FS, v)
            p = nd.pc
            P1 = P1 + p * (nd.a * UqS * dS + nd.a * Fq_v - Fv_v - F / h)
            P2 = P2 + p * (nd.b * UqS * dS + nd.b * Fq_v + Fv_v + F / h)
            P3 += p * (nd.a * USS * dS - T / h + nd.a * FSv)
            P4 += p * (nd.b * USS * dS + T / h + nd.b * FSv)
        return P1, P2, P3, P4

    def energy(self, r: StepWindow) -> float:
        """Scheme-consistent sample of ``E = K + U`` through the Lagrangian nodes."""
        v = (r.q1 - r.q0) / self.h
        total = 0.0
        for nd in self.nodes:
            if nd.wl:
                qb, Sb = self._node_state(nd, r.q0, r.q1, r.S0, r.S1)
                total += nd.wl * self.model.potential(qb, Sb)
        return self.model.kinetic(v) + total

    # ------------------------------------------------------------------
    # fused evaluation used by the Newton solver
    # ------------------------------------------------------------------

    def _terms(self, q0, q1, S0, S1, jac=True):
        """Momentum pieces, constraint and (optionally) the regularity blocks.

        Returns ``(D1 L_d + F_d^-, D2 L_d + F_d^+, P_d, A11, A12, A21, A22)``.
        """
        h, model = self.h, self.model
        ext, ext_jac = model.external, model.external_jac
        v = (q1 - q0) / h
        dS = (S1 - S0) / h
        p = matvec(model.mass, v)
        left, right = -p, p
        P = 0.0
        if jac:
            A11 = -model.mass / h
            A12 = 0.0 if self.dim == 1 else np.zeros(self.dim)
            A21 = A12
            A22 = 0.0
        for nd in self.nodes:
            a, b, wl, pc = nd.a, nd.b, nd.wl, nd.pc
            qb = a * q0 + b * q1
            Sb = a * S0 + b * S1
            Uq, T = model.potential_grad(qb, Sb)
            if not T > 0.0:
                raise AssumptionViolation(qb, Sb, T)
            Ffr = model.friction(qb, v, Sb)
            F = Ffr if ext is None else Ffr + ext(qb, v, Sb)
            if jac:
                Uqq, UqS, USS = model.potential_hess(qb, Sb)
                Fq, Fv, FS = model.friction_jac(qb, v, Sb)
            if wl:
                hw = h * wl
                left = left + (hw * a) * (F - Uq)
                right = right + (hw * b) * (F - Uq)
                if jac:
                    if ext is not None:
                        Eq, Ev, ES = ext_jac(qb, v, Sb)
                        Gq, Gv, GS = Fq + Eq, Fv + Ev, FS + ES
                    else:
                        Gq, Gv, GS = Fq, Fv, FS
                    hwa = hw * a
                    A11 = A11 + hwa * (b * (Gq - Uqq) + Gv / h)
                    A12 = A12 + (hwa * b) * (GS - UqS)
            if pc:
                P += pc * (T * dS + dot(Ffr, v))
                if jac:
                    Fv_v = vecmat(v, Fv) / h
                    A21 = A21 + pc * (b * UqS * dS + b * vecmat(v, Fq) + Fv_v + Ffr / h)
                    A22 += pc * (b * USS * dS + T / h + b * dot(FS, v))
        if jac:
            return left, right, P, A11, A12, A21, A22
        return left, right, P

    def regularity_blocks(self, r: StepWindow):
        """Analytic ``(A11, A12, A21, A22)`` of the step Jacobian at ``r``."""
        return self._terms(r.q0, r.q1, r.S0, r.S1, jac=True)[3:]


# --------------------------------------------------------------------------
# scheme builders
# --------------------------------------------------------------------------


def compose_scheme(
    model: SystemModel,
    h: float,
    lagrangian_nodes: Sequence[Node],
    constraint_nodes: Optional[Sequence[Node]] = None,
    kind: Optional[SchemeKind] = None,
) -> SchemeOps:
    """Assemble a scheme from arbitrary nodes.

    The constraint nodes default to the Lagrangian nodes; they may be chosen
    independently of the discretizing map used for ``L_d``.
    """
    if constraint_nodes is None:
        constraint_nodes = lagrangian_nodes
    return SchemeOps(model, float(h), tuple(lagrangian_nodes), tuple(constraint_nodes), kind)


def alpha_scheme(model: SystemModel, h: float, alpha: float, constraint_alpha: Optional[float] = None) -> SchemeOps:
    """Scheme from the finite-difference map ``((1-a) q0 + a q1, (q1-q0)/h, ...)``."""
    ca = alpha if constraint_alpha is None else constraint_alpha
    return compose_scheme(model, h, [Node(alpha, 1.0)], [Node(ca, 1.0)])


def build_scheme(kind, model: SystemModel, h: float) -> SchemeOps:
    kind = SchemeKind.parse(kind)
    if kind is SchemeKind.VERLET1:
        return compose_scheme(model, h, [Node(0.0, 1.0)], kind=kind)
    if kind is SchemeKind.MIDPOINT2:
        return compose_scheme(model, h, [Node(0.5, 1.0)], kind=kind)
    # symmetrized: the constraint adds both endpoint terms without the 1/2
    return compose_scheme(model, h, [Node(0.0, 0.5), Node(1.0, 0.5)], [Node(0.0, 1.0), Node(1.0, 1.0)], kind=kind)


# --------------------------------------------------------------------------
# linear algebra on native blocks
# --------------------------------------------------------------------------


def _assemble(A11, A12, A21, A22) -> np.ndarray:
    if isinstance(A22, float) and isinstance(A11, float):
        return np.array([[A11, A12], [A21, A22]])
    n = np.shape(A11)[0]
    J = np.empty((n + 1, n + 1))
    J[:n, :n] = A11
    J[:n, n] = A12
    J[n, :n] = A21
    J[n, n] = A22
    return J


def _det_is_regular(det: float, J: np.ndarray, tol: float = 1e-14) -> bool:
    scale = float(np.prod(np.max(np.abs(J), axis=1)))
    return math.isfinite(det) and abs(det) > tol * scale


def _solve(A11, A12, A21, A22, r1, r2):
    """Solve the bordered system by eliminating ``dS`` (Schur complement on ``A22``).

    When ``A12 = A21 = 0`` this reduces exactly to ``dq = r1 / A11``, so the
    reversible limit reproduces the purely mechanical Newton iterates bit for bit.
    """
    if not A22 != 0.0 or not math.isfinite(A22):
        raise RegularityError(f"D4 P_d vanishes (A22={A22!r})")
    if isinstance(A11, float):
        schur = A11 - A12 * A21 / A22
        if not abs(schur) > 1e-14 * (abs(A11) + abs(A12 * A21 / A22)):
            raise RegularityError(f"singular regularity matrix (Schur entry {schur!r})")
        dq = (r1 - A12 * r2 / A22) / schur
        return dq, (r2 - A21 * dq) / A22
    schur = A11 - np.outer(A12, A21) / A22
    J = _assemble(A11, A12, A21, A22)
    if not _det_is_regular(float(np.linalg.det(J)), J):
        raise RegularityError("singular regularity matrix")
    dq = np.linalg.solve(schur, r1 - A12 * (r2 / A22))
    return dq, float((r2 - A21 @ dq) / A22)


def _maxabs(x) -> float:
    if isinstance(x, float):
        return abs(x)
    return float(np.max(np.abs(x)))


# --------------------------------------------------------------------------
# stepping
# --------------------------------------------------------------------------


def _newton(scheme: SchemeOps, q1, S1, q2, S2, const, tol, max_iter):
    """Coupled damped Newton for ``(q2, S2)``; ``const = D2 L_d + F^+`` of the old window."""
    left, _, P, A11, A12, A21, A22 = scheme._terms(q1, q2, S1, S2)
    r1 = left + const
    res = max(_maxabs(r1), abs(P))
    for _ in range(max_iter):
        if res <= tol:
            return q2, S2, res
        dq, dS = _solve(A11, A12, A21, A22, r1, P)
        t = 1.0
        while True:
            qn = q2 - t * dq
            Sn = S2 - t * dS
            left, _, Pn, B11, B12, B21, B22 = scheme._terms(q1, qn, S1, Sn)
            rn1 = left + const
            resn = max(_maxabs(rn1), abs(Pn))
            if resn < res or t < 1.0 / 64:
                break
            t *= 0.5
        tiny = _maxabs(t * dq) <= 4e-16 * (1.0 + _maxabs(q2)) and abs(t * dS) <= 4e-16 * (1.0 + abs(S2))
        q2, S2, r1, P, res = qn, Sn, rn1, Pn, resn
        A11, A12, A21, A22 = B11, B12, B21, B22
        if tiny and math.isfinite(res):
            # update at rounding level: residual is at its floating-point floor
            return q2, S2, res
    if res <= tol:
        return q2, S2, res
    raise StepFailure(f"Newton did not converge in {max_iter} iterations (residual {res:.3e})", residual=res)


def step(scheme: SchemeOps, prev: StepWindow, tol: float = NEWTON_TOL, max_iter: int = MAX_ITER) -> StepWindow:
    """Advance ``(q0, q1, S0, S1)`` to ``(q1, q2, S1, S2)``.

    Solves ``D1 L_d(q1,q2,S1,S2) + D2 L_d(q0,q1,S0,S1) + F_d^-(new) + F_d^+(old) = 0``
    together with ``P_d(q1, q2, S1, S2) = 0``.
    """
    q0, q1, S0, S1 = prev.q0, prev.q1, prev.S0, prev.S1
    _, const, _ = scheme._terms(q0, q1, S0, S1, jac=False)
    q2, S2, _ = _newton(scheme, q1, S1, 2.0 * q1 - q0, S1 + (S1 - S0), const, tol, max_iter)
    return StepWindow(q1, q2, S1, S2)


def step_staggered(scheme: SchemeOps, prev: StepWindow, tol: float = NEWTON_TOL, max_iter: int = MAX_ITER) -> StepWindow:
    """Scheme-1 fast path: solve momentum for ``q2`` alone, then ``S2`` explicitly.

    Valid whenever the momentum equation does not involve ``S2`` and the
    constraint only samples the left endpoint, which is the case for scheme 1.
    """
    if not all(nd.b == 0.0 for nd in scheme.nodes):
        raise InputError("staggered update requires all nodes at alpha = 0")
    model, h = scheme.model, scheme.h
    q0, q1, S0, S1 = prev.q0, prev.q1, prev.S0, prev.S1
    _, const, _ = scheme._terms(q0, q1, S0, S1, jac=False)
    q2 = 2.0 * q1 - q0
    for _ in range(max_iter):
        left, _, _, A11, _, _, _ = scheme._terms(q1, q2, S1, S1)
        r = left + const
        if _maxabs(r) <= tol:
            break
        dq = r / A11 if isinstance(A11, float) else np.linalg.solve(A11, r)
        q2 = q2 - dq
        if _maxabs(dq) <= 4e-16 * (1.0 + _maxabs(q2)):
            break
    else:
        raise StepFailure("staggered momentum solve did not converge")
    v = (q2 - q1) / h
    _, T = model.potential_grad(q1, S1)
    if not T > 0.0:
        raise AssumptionViolation(q1, S1, T)
    # every constraint node sits at the left endpoint: T (S2 - S1)/h + <F_fr, v> = 0
    S2 = S1 - h * dot(model.friction(q1, v, S1), v) / T
    return StepWindow(q1, q2, S1, S2)


def initialize(scheme: SchemeOps, x0, x1, S0: float, tol: float = NEWTON_TOL, max_iter: int = MAX_ITER) -> StepWindow:
    """Solve ``P_d(x0, x1, S0, S1) = 0`` for ``S1`` by scalar Newton from ``S1 = S0``."""
    dim = scheme.dim
    q0, q1 = as_native(x0, dim), as_native(x1, dim)
    S0 = float(S0)
    S1 = S0
    for _ in range(max_iter):
        r = StepWindow(q0, q1, S0, S1)
        P = scheme.constraint(r)
        if abs(P) <= tol:
            return r
        D4 = scheme.constraint_partials(r)[3]
        if D4 == 0.0 or not math.isfinite(D4):
            raise InitializationError(f"D4 P_d vanishes at S1={S1!r}")
        dS = P / D4
        S1 -= dS
        if abs(dS) <= 4e-16 * (1.0 + abs(S1)):
            return StepWindow(q0, q1, S0, S1)
    raise InitializationError(f"constraint solve for S1 did not converge (residual {abs(P):.3e})")


def iterate(scheme: SchemeOps, init: StepWindow, N: int, tol: float = NEWTON_TOL, max_iter: int = MAX_ITER) -> Iterator[StepWindow]:
    """Yield ``N`` windows ``r_0 = init, r_1, ..., r_{N-1}``."""
    if N < 1:
        raise InputError("N must be >= 1")
    r = init
    yield r
    for k in range(1, N):
        try:
            r = step(scheme, r, tol, max_iter)
        except StepFailure as exc:
            raise type(exc)(str(exc), index=k, residual=exc.residual) from exc
        except AssumptionViolation as exc:
            raise AssumptionViolation(exc.q, exc.S, exc.T, f"step {k}: non-positive temperature T={exc.T!r}") from exc
        yield r


def run(scheme: SchemeOps, init: StepWindow, N: int, tol: float = NEWTON_TOL, max_iter: int = MAX_ITER) -> list[TrajectoryRecord]:
    """Integrate and record ``N`` rows of diagnostics (one per window)."""
    model, h = scheme.model, scheme.h
    out: list[TrajectoryRecord] = []
    E0 = None
    for k, r in enumerate(iterate(scheme, init, N, tol, max_iter)):
        v = (r.q1 - r.q0) / h
        if model.check_dissipation:
            model.check_dissipative(r.q0, v, r.S0)
        E = scheme.energy(r)
        if E0 is None:
            E0 = E
        T = model.temperature(r.q0, r.S0)
        out.append(TrajectoryRecord(k, k * h, r.q0, v, r.S0, T, model.internal(r.q0, r.S0), E, abs(E - E0) / abs(E0)))
    return out


def windows(scheme: SchemeOps, init: StepWindow, N: int, **kw) -> list[StepWindow]:
    return list(iterate(scheme, init, N, **kw))


# --------------------------------------------------------------------------
# regularity
# --------------------------------------------------------------------------


def regularity_report(scheme: SchemeOps, window: StepWindow) -> RegularityReport:
    A11, A12, A21, A22 = scheme.regularity_blocks(window)
    J = _assemble(A11, A12, A21, A22)
    det = float(np.linalg.det(J))
    if isinstance(A11, float):
        schur = A11 - A12 * A21 / A22 if A22 != 0.0 else float("nan")
    else:
        schur = A11 - np.outer(A12, A21) / A22 if A22 != 0.0 else np.full_like(A11, np.nan)
    return RegularityReport(window, J, det, _det_is_regular(det, J), schur, float(A22))


def regularity_matrix(kind, model: SystemModel, h: float, window: StepWindow) -> RegularityReport:
    return regularity_report(build_scheme(kind, model, h), window)


def step_residual(scheme: SchemeOps, prev: StepWindow, q2, S2):
    """Residual of the step equations at a trial ``(q2, S2)``; used for Jacobian checks."""
    _, const, _ = scheme._terms(prev.q0, prev.q1, prev.S0, prev.S1, jac=False)
    left, _, P = scheme._terms(prev.q1, q2, prev.S1, S2, jac=False)
    return left + const, P


# --------------------------------------------------------------------------
# Legendre transforms
# --------------------------------------------------------------------------


def legendre_minus(scheme: SchemeOps, r: StepWindow):
    """``(q0, -D1 L_d - F_d^-)``."""
    left, _, _ = scheme._terms(r.q0, r.q1, r.S0, r.S1, jac=False)
    return r.q0, -left


def legendre_plus(scheme: SchemeOps, r: StepWindow):
    """``(q1, D2 L_d + F_d^+)``."""
    _, right, _ = scheme._terms(r.q0, r.q1, r.S0, r.S1, jac=False)
    return r.q1, right


def initial_velocity(scheme: SchemeOps, r: StepWindow):
    """Continuous velocity ``M^{-1} p0`` matching the discrete initial data."""
    _, p0 = legendre_minus(scheme, r)
    return matvec(scheme.model.mass_inv, p0)
