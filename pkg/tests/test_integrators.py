import math

import numpy as np
import pytest

from thermovi.errors import AssumptionViolation, InitializationError, InputError, RegularityError, StepFailure
from thermovi.integrators import (
    Node,
    SchemeKind,
    StepWindow,
    alpha_scheme,
    build_scheme,
    compose_scheme,
    initial_velocity,
    initialize,
    iterate,
    legendre_minus,
    legendre_plus,
    regularity_matrix,
    regularity_report,
    run,
    step,
    step_residual,
    step_staggered,
)
from thermovi.models import ExternalForce, SystemModel, ThermoState, lagrangian, total_energy

from conftest import R, model_for, two_dof_model

H = 1e-3
KINDS = [SchemeKind.VERLET1, SchemeKind.MIDPOINT2, SchemeKind.SYMMETRIZED3]


def random_window(rng, dim=1):
    if dim == 1:
        q0 = rng.uniform(-0.5, 0.5)
        return StepWindow(q0, q0 + rng.uniform(-1, 1) * 1e-3, rng.uniform(-0.01, 0.01), rng.uniform(-0.01, 0.01))
    q0 = rng.uniform(-0.5, 0.5, dim)
    return StepWindow(q0, q0 + rng.uniform(-1, 1, dim) * 1e-3, rng.uniform(-0.01, 0.01), rng.uniform(-0.01, 0.01))


def flat(r):
    return np.concatenate([np.atleast_1d(r.q0), np.atleast_1d(r.q1), [r.S0, r.S1]])


def unflat(x, dim):
    if dim == 1:
        return StepWindow(float(x[0]), float(x[1]), float(x[2]), float(x[3]))
    return StepWindow(x[:dim].copy(), x[dim : 2 * dim].copy(), float(x[2 * dim]), float(x[2 * dim + 1]))


def fd_gradient(f, x, rel=1e-6):
    g = np.zeros(x.size)
    for i in range(x.size):
        e = rel * (1 + abs(x[i]))
        xp, xm = x.copy(), x.copy()
        xp[i] += e
        xm[i] -= e
        g[i] = (f(xp) - f(xm)) / (2 * e)
    return g


class TestSchemeConstruction:
    @pytest.mark.parametrize("value,kind", [(1, SchemeKind.VERLET1), ("2", SchemeKind.MIDPOINT2), ("symmetrized3", SchemeKind.SYMMETRIZED3)])
    def test_parse(self, value, kind):
        assert SchemeKind.parse(value) is kind

    @pytest.mark.parametrize("value", [0, 4, "rk4", None])
    def test_parse_rejects(self, value):
        with pytest.raises(InputError):
            SchemeKind.parse(value)

    @pytest.mark.parametrize("h", [0.0, -1e-3, float("nan"), float("inf")])
    def test_bad_step(self, case1_model, h):
        with pytest.raises(InputError):
            build_scheme(1, case1_model, h)

    def test_bad_nodes(self, case1_model):
        with pytest.raises(InputError):
            compose_scheme(case1_model, H, [Node(0.0, 0.7)])
        with pytest.raises(InputError):
            compose_scheme(case1_model, H, [Node(1.5, 1.0)])
        with pytest.raises(InputError):
            compose_scheme(case1_model, H, [])

    def test_scheme1_zero_velocity_sample(self, case1_model):
        sc = build_scheme(1, case1_model, H)
        r = StepWindow(0.3, 0.3, 0.01, 0.02)
        assert sc.discrete_lagrangian(r) == pytest.approx(H * lagrangian(case1_model, ThermoState(0.3, 0.0, 0.01)), rel=1e-15)

    def test_scheme3_reversal_symmetry(self, case1_model, rng):
        sc = build_scheme(3, case1_model, H)
        for _ in range(20):
            r = random_window(rng)
            rev = StepWindow(r.q1, r.q0, r.S1, r.S0)
            assert sc.discrete_lagrangian(r) == pytest.approx(sc.discrete_lagrangian(rev), rel=1e-14)

    def test_alpha_family_matches_named_schemes(self, case1_model, rng):
        r = random_window(rng)
        for alpha, kind in ((0.0, 1), (0.5, 2)):
            a = alpha_scheme(case1_model, H, alpha).regularity_blocks(r)
            b = build_scheme(kind, case1_model, H).regularity_blocks(r)
            assert a == pytest.approx(b, rel=1e-15)

    def test_independent_constraint_map(self, case1_model, rng):
        sc = alpha_scheme(case1_model, H, 0.5, constraint_alpha=0.0)
        r = random_window(rng)
        v = (r.q1 - r.q0) / H
        T0 = case1_model.temperature(r.q0, r.S0)
        assert sc.constraint(r) == pytest.approx(T0 * (r.S1 - r.S0) / H - 0.2 * v * v, rel=1e-12)


class TestDiscreteOperators:
    @pytest.mark.parametrize("kind", KINDS)
    @pytest.mark.parametrize("dim", [1, 2])
    def test_partials_match_finite_differences(self, kind, dim, rng):
        model = model_for("case1", 0.7, ExternalForce(0.1, 0.2, -0.3)) if dim == 1 else two_dof_model()
        sc = build_scheme(kind, model, H)
        for _ in range(10):
            r = random_window(rng, dim)
            x = flat(r)
            gL = fd_gradient(lambda y: sc.discrete_lagrangian(unflat(y, dim)), x)
            gP = fd_gradient(lambda y: sc.constraint(unflat(y, dim)), x)
            L_an = np.concatenate([np.atleast_1d(p) for p in sc.lagrangian_partials(r)])
            P_an = np.concatenate([np.atleast_1d(p) for p in sc.constraint_partials(r)])
            np.testing.assert_allclose(L_an, gL, rtol=1e-6, atol=1e-9 * np.max(np.abs(gL)))
            np.testing.assert_allclose(P_an, gP, rtol=1e-6, atol=1e-6 * np.max(np.abs(gP)))

    def test_scheme1_forces_one_sided(self, case1_model):
        sc = build_scheme(1, case1_model, H)
        r = StepWindow(0.3, 0.3005, 0.0, 0.0)
        fm, fp = sc.friction_forces(r)
        assert fm == pytest.approx(H * -0.2 * 0.5, rel=1e-12) and fp == 0.0

    def test_scheme2_forces_split(self, case1_model):
        sc = build_scheme(2, case1_model, H)
        r = StepWindow(0.3, 0.3005, 0.0, 0.0)
        fm, fp = sc.friction_forces(r)
        assert fm == fp == pytest.approx(0.5 * H * -0.2 * 0.5, rel=1e-12)

    def test_scheme3_forces_endpoint_average(self):
        model = model_for("case1", 0.0, ExternalForce(0.0, 2.0, 0.0))
        sc = build_scheme(3, model, H)
        em, ep = sc.external_forces(StepWindow(0.2, 0.4, 0.0, 0.0))
        assert em == pytest.approx(0.5 * H * 2.0 * 0.2) and ep == pytest.approx(0.5 * H * 2.0 * 0.4)

    def test_scheme1_constraint_form(self, case1_model, rng):
        sc = build_scheme(1, case1_model, H)
        r = random_window(rng)
        v = (r.q1 - r.q0) / H
        T0 = case1_model.temperature(r.q0, r.S0)
        assert sc.constraint(r) == pytest.approx(T0 * (r.S1 - r.S0) / H - 0.2 * v * v, rel=1e-12)

    def test_energy_sampling(self, case1_model):
        r = StepWindow(0.3, 0.31, 0.0, 0.002)
        v = 10.0
        E = lambda q, S: total_energy(case1_model, ThermoState(q, v, S))  # noqa: E731
        assert build_scheme(1, case1_model, H).energy(r) == pytest.approx(E(0.3, 0.0), rel=1e-14)
        assert build_scheme(2, case1_model, H).energy(r) == pytest.approx(E(0.305, 0.001), rel=1e-14)
        assert build_scheme(3, case1_model, H).energy(r) == pytest.approx(0.5 * (E(0.3, 0.0) + E(0.31, 0.002)), rel=1e-14)


class TestLegendre:
    def test_scheme1_plus_momentum(self, case1_model):
        sc = build_scheme(1, case1_model, H)
        q, p = legendre_plus(sc, StepWindow(0.3, 0.3004, 0.0, 0.0))
        assert q == 0.3004 and p == pytest.approx(5.0 * 0.0004 / H, rel=1e-12)

    @pytest.mark.parametrize("kind,factor", [(1, 1.0), (2, 0.5), (3, 0.5)])
    def test_initial_velocity_at_rest(self, kind, factor):
        sc = build_scheme(kind, model_for("case1", 0.0), H)
        assert initial_velocity(sc, StepWindow(0.3, 0.3, 0.0, 0.0)) == pytest.approx(factor * H * 5.0 * 0.3 / 5.0, rel=1e-12)

    def test_reversible_minus_momentum(self):
        model = model_for("case1", 0.0)
        sc = build_scheme(1, model, H)
        r = StepWindow(0.3, 0.3004, 0.0, 0.0)
        fd = fd_gradient(lambda y: sc.discrete_lagrangian(unflat(y, 1)), flat(r))[0]
        assert legendre_minus(sc, r)[1] == pytest.approx(-fd, rel=1e-7)


class TestInitialize:
    @pytest.mark.parametrize("kind", KINDS)
    def test_rest_keeps_entropy(self, kind, case1_model):
        assert initialize(build_scheme(kind, case1_model, H), 0.3, 0.3, 0.0).S1 == 0.0

    def test_scheme1_closed_form(self):
        model = model_for("case2", 5.0)
        r = initialize(build_scheme(1, model, H), 0.1, 0.1002, 0.0)
        v = 0.0002 / H
        assert r.S1 == pytest.approx(H * 5.0 * v * v / 300.0, rel=1e-12)

    def test_scheme3_bisection_oracle(self):
        lam, x0, x1 = 5.0, 0.3, 0.32
        C = 1.5 * R
        T = lambda S: 300.0 * math.exp(S / C)  # noqa: E731
        v = (x1 - x0) / H

        def g(S1):  # summed endpoint form written out by hand
            return (T(0.0) + T(S1)) * S1 / H - 2.0 * lam * v * v

        lo, hi = 0.0, 1.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if g(mid) < 0 else (lo, mid)
        r = initialize(build_scheme(3, model_for("case1", lam), H), x0, x1, 0.0)
        assert r.S1 == pytest.approx(0.5 * (lo + hi), rel=1e-12)

    def test_failure(self):
        model = model_for("case1", 5.0)
        with pytest.raises(InitializationError):
            initialize(build_scheme(2, model, H), 0.0, 0.5, 0.0, max_iter=1)


class TestStep:
    @pytest.mark.parametrize("kind", KINDS)
    def test_reversible_entropy_frozen(self, kind):
        sc = build_scheme(kind, model_for("case2", 0.0), H)
        r = initialize(sc, 0.1, 0.1003, 0.0)
        for _ in range(50):
            r = step(sc, r)
            assert r.S1 == r.S0 == 0.0

    def test_scheme1_linear_oracle(self, case1_model):
        sc = build_scheme(1, case1_model, H)
        r = step(sc, initialize(sc, 0.3, 0.3, 0.0))
        # 5 (q2 - 0.6 + 0.3)/1e-6 + 5*0.3 = -0.2 (q2 - 0.3)/1e-3
        q2 = (5 * 0.3 / 1e-6 - 5 * 0.3 + 0.2 * 0.3 / 1e-3) / (5 / 1e-6 + 0.2 / 1e-3)
        assert r.q1 == pytest.approx(q2, abs=1e-15)
        v = (r.q1 - 0.3) / H
        assert r.S1 == pytest.approx(H * 0.2 * v * v / 300.0, rel=1e-12)

    @pytest.mark.parametrize("kind", KINDS)
    @pytest.mark.parametrize("dim", [1, 2])
    def test_residual_and_constraint(self, kind, dim, rng):
        model = model_for("case1", 5.0, ExternalForce(0.3, -0.5, 0.1)) if dim == 1 else two_dof_model()
        sc = build_scheme(kind, model, H)
        x0 = 0.3 if dim == 1 else np.array([0.3, -0.2])
        r = initialize(sc, x0, x0 + (0.0005 if dim == 1 else np.array([0.0005, 0.0002])), 0.0)
        for _ in range(200):
            new = step(sc, r)
            r1, P = step_residual(sc, r, new.q1, new.S1)
            assert np.max(np.abs(r1)) <= 1e-12 and abs(P) <= 1e-12
            assert abs(sc.constraint(new)) <= 1e-11
            r = new

    @pytest.mark.parametrize("lam,fext", [(0.2, None), (5.0, None), (10.0, ExternalForce(0.5, -1.0, 0.2))])
    def test_staggered_fast_path_agrees(self, lam, fext):
        sc = build_scheme(1, model_for("case1", lam, fext), H)
        r = initialize(sc, 0.3, 0.3, 0.0)
        for _ in range(2000):
            a, b = step(sc, r), step_staggered(sc, r)
            assert abs(a.q1 - b.q1) <= 1e-12 and abs(a.S1 - b.S1) <= 1e-12
            r = a

    def test_staggered_rejects_other_schemes(self, case1_model):
        with pytest.raises(InputError):
            step_staggered(build_scheme(2, case1_model, H), StepWindow(0.3, 0.3, 0.0, 0.0))

    @pytest.mark.parametrize("kind", KINDS)
    def test_reversible_matches_mechanical_integrator(self, kind):
        """With lambda = 0 the coupled solve reproduces a momentum-only Newton bit for bit."""
        sc = build_scheme(kind, model_for("case1", 0.0), H)

        def mech_step(q0, q1, S):
            _, const, _ = sc._terms(q0, q1, S, S, jac=False)
            q2 = 2.0 * q1 - q0
            left, _, _, A11, _, _, _ = sc._terms(q1, q2, S, S)
            r = left + const
            res = abs(r)
            while res > 1e-12:
                dq = r / A11
                t = 1.0
                while True:
                    qn = q2 - t * dq
                    left, _, _, B11, _, _, _ = sc._terms(q1, qn, S, S)
                    rn = left + const
                    if abs(rn) < res or t < 1.0 / 64:
                        break
                    t *= 0.5
                tiny = abs(t * dq) <= 4e-16 * (1.0 + abs(q2))
                q2, r, res, A11 = qn, rn, abs(rn), B11
                if tiny:
                    break
            return q2

        r = initialize(sc, 0.3, 0.3, 0.0)
        q0, q1 = r.q0, r.q1
        for _ in range(3000):
            r = step(sc, r)
            q0, q1 = q1, mech_step(q0, q1, 0.0)
            assert r.q1 == q1

    def test_newton_failure_reports_residual(self, case1_model):
        sc = build_scheme(2, case1_model, H)
        with pytest.raises(StepFailure) as info:
            list(iterate(sc, initialize(sc, 0.3, 0.3, 0.0), 3, max_iter=0))
        assert info.value.index == 1 and info.value.residual > 0

    def test_degenerate_constraint_is_regularity_error(self, case1_model):
        sc = compose_scheme(case1_model, H, [Node(0.5, 1.0)], [Node(0.5, 0.0)])
        with pytest.raises(RegularityError):
            step(sc, StepWindow(0.3, 0.3001, 0.0, 0.0))

    def test_temperature_violation_carries_step(self):
        # pumping friction removes entropy until T = exp(S) - 0.999 turns negative
        model = SystemModel.create([[1.0]], lambda q, S: 0.5 * q * q + math.exp(S) - 0.999 * S, lambda q, v, S: 0.5 * v)
        sc = build_scheme(1, model, 0.05)
        with pytest.raises(AssumptionViolation, match="step"):
            run(sc, initialize(sc, 1.0, 1.0, 0.0), 2000)

    def test_dissipation_check_in_run(self):
        model = SystemModel.create([[1.0]], lambda q, S: 0.5 * q * q + math.exp(S), lambda q, v, S: 0.01 * v, check_dissipation=True)
        sc = build_scheme(2, model, 0.01)
        with pytest.raises(AssumptionViolation, match="not dissipative"):
            run(sc, initialize(sc, 1.0, 1.0, 0.0), 10)


class TestRun:
    @pytest.mark.parametrize("kind", KINDS)
    def test_records(self, kind, case1_model):
        sc = build_scheme(kind, case1_model, H)
        recs = run(sc, initialize(sc, 0.3, 0.3, 0.0), 500)
        assert len(recs) == 500 and [r.k for r in recs] == list(range(500))
        assert recs[0].rel_energy_err == 0.0 and recs[0].T == pytest.approx(300.0)
        E0 = recs[0].E
        for r in recs:
            assert r.t == pytest.approx(r.k * H)
            assert r.rel_energy_err == abs(r.E - E0) / abs(E0)
            assert r.U == pytest.approx(1.5 * R * 300.0 * math.exp(r.S / (1.5 * R)), rel=1e-14)

    def test_single_window(self, case1_model):
        sc = build_scheme(1, case1_model, H)
        assert len(run(sc, initialize(sc, 0.3, 0.3, 0.0), 1)) == 1
        with pytest.raises(InputError):
            run(sc, initialize(sc, 0.3, 0.3, 0.0), 0)

    @pytest.mark.parametrize("kind", KINDS)
    @pytest.mark.parametrize("lam", [0.2, 5.0, 10.0])
    def test_entropy_monotone(self, kind, lam):
        sc = build_scheme(kind, model_for("case2", lam), H)
        S = np.array([r.S for r in run(sc, initialize(sc, 0.1, 0.1, 0.0), 5000)])
        assert np.all(np.diff(S) >= -1e-12)

    def test_two_dof_energy_and_entropy(self):
        sc = build_scheme(2, two_dof_model(), H)
        recs = run(sc, initialize(sc, np.array([0.3, -0.2]), np.array([0.3, -0.2]), 0.0), 3000)
        S = np.array([r.S for r in recs])
        assert np.all(np.diff(S) >= -1e-12) and S[-1] > 0
        assert max(r.rel_energy_err for r in recs) < 1e-8


class TestRegularity:
    def test_scheme1_display(self):
        m, lam = 5.0, 0.2
        rep = regularity_matrix(1, model_for("case1", lam), H, StepWindow(0.3, 0.3, 0.0, 0.0))
        assert rep.matrix[0, 0] == pytest.approx(-m / H - lam, rel=1e-15)
        assert rep.matrix[0, 1] == 0.0
        assert rep.matrix[1, 1] == pytest.approx(300.0 / H, rel=1e-14)
        assert rep.determinant < -1e8 and rep.invertible

    def test_scheme2_display(self):
        lam, x0, x1, S0, S1 = 5.0, 0.1, 0.1004, 0.001, 0.0013
        C = 1.5 * 2.0 * R
        rep = regularity_matrix(2, model_for("case2", lam), H, StepWindow(x0, x1, S0, S1))
        T = 300.0 * math.exp(0.5 * (S0 + S1) / C)
        assert rep.matrix[1, 1] == pytest.approx(T / H * ((S1 - S0) / (2 * C) + 1), rel=1e-13)
        assert rep.matrix[1, 0] == pytest.approx(-2 * lam * (x1 - x0) / H**2, rel=1e-12)

    def test_scheme3_display(self):
        lam, x0, x1, S0, S1 = 5.0, 0.3, 0.3004, 0.001, 0.0013
        C = 1.5 * R
        rep = regularity_matrix(3, model_for("case1", lam), H, StepWindow(x0, x1, S0, S1))
        T0, T1 = 300.0 * math.exp(S0 / C), 300.0 * math.exp(S1 / C)
        assert rep.matrix[1, 1] == pytest.approx(T1 / C * (S1 - S0) / H + (T0 + T1) / H, rel=1e-13)
        assert rep.matrix[1, 0] == pytest.approx(-4 * lam * (x1 - x0) / H**2, rel=1e-12)

    @pytest.mark.parametrize("kind", KINDS)
    def test_reversible_rest_offdiagonal(self, kind):
        rep = regularity_matrix(kind, model_for("case1", 0.0), H, StepWindow(0.3, 0.3, 0.0, 0.0))
        assert rep.matrix[1, 0] == 0.0 and rep.invertible

    @pytest.mark.parametrize("kind", KINDS)
    def test_schur_criterion(self, kind, rng):
        sc = build_scheme(kind, model_for("case2", 5.0), H)
        rep = regularity_report(sc, random_window(rng))
        A = rep.matrix
        assert rep.determinant == pytest.approx(A[1, 1] * rep.schur_entry, rel=1e-10)

    @pytest.mark.parametrize("kind", KINDS)
    def test_two_dof_block_jacobian(self, kind, rng):
        sc = build_scheme(kind, two_dof_model(), H)
        for _ in range(5):
            prev = random_window(rng, 2)
            new = StepWindow(prev.q1, prev.q1 + rng.uniform(-1, 1, 2) * 1e-3, prev.S1, prev.S1 + rng.uniform(0, 1e-3))
            J = regularity_report(sc, new).matrix
            x = np.append(new.q1, new.S1)
            fd = np.zeros((3, 3))
            for j in range(3):
                e = 1e-6 * (1 + abs(x[j]))
                xp, xm = x.copy(), x.copy()
                xp[j] += e
                xm[j] -= e
                rp = np.append(*step_residual(sc, prev, xp[:2], xp[2]))
                rm = np.append(*step_residual(sc, prev, xm[:2], xm[2]))
                fd[:, j] = (rp - rm) / (2 * e)
            assert np.max(np.abs(J - fd)) / np.max(np.abs(fd)) <= 1e-6
            assert abs(np.linalg.det(J)) > 0 and regularity_report(sc, new).invertible
