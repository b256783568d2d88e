import numpy as np
import pytest

from thermovi.models import IdealGasParams, MassSpringParams, SystemModel, mass_spring_gas_model

R = 8.314462618

CASES = {
    "case1": dict(m=5.0, k=5.0, N0=1.0, V0=2.494e-2, x0=0.3, T0=300.0),
    "case2": dict(m=10.0, k=20.0, N0=2.0, V0=9.9775e-2, x0=0.1, T0=300.0),
}


def gas_for(case, c=1.5):
    p = CASES[case]
    return IdealGasParams.from_temperature(p["T0"], p["N0"], p["V0"], c=c)


def model_for(case, lam, fext=None, c=1.5):
    p = CASES[case]
    return mass_spring_gas_model(MassSpringParams(p["m"], p["k"], lam), gas_for(case, c), fext)


def two_dof_model(lam=0.3):
    """Two coupled masses in a gas whose spring stiffness softens with temperature."""
    M = np.array([[2.0, 0.3], [0.3, 1.0]])
    K = np.array([[3.0, -1.0], [-1.0, 2.0]])
    C = 1.5 * R
    U0 = C * 300.0
    D = lam * np.array([[1.0, 0.2], [0.2, 0.5]])

    def U(q, S):
        return 0.5 * q @ K @ q * (1.0 + 0.01 * S) + U0 * np.exp(S / C)

    def grad(q, S):
        return K @ q * (1.0 + 0.01 * S), 0.005 * q @ K @ q + U0 * np.exp(S / C) / C

    def hess(q, S):
        return K * (1.0 + 0.01 * S), 0.01 * K @ q, U0 * np.exp(S / C) / C**2

    def fr(q, v, S):
        return -(D @ v) * (1.0 + 0.1 * np.tanh(S))

    return SystemModel.create(M, U, fr, potential_grad=grad, potential_hess=hess)


@pytest.fixture
def case1_model():
    return model_for("case1", 0.2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
