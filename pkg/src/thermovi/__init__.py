"""Variational integrators for simple closed thermodynamic systems."""

from .continuous import (
    ExactSolutionParams,
    evolution_rhs,
    exact_dissipated,
    exact_entropy,
    exact_internal_energy,
    exact_position,
    exact_temperature,
    rk4_trajectory,
)
from .errors import (
    AssumptionViolation,
    ConfigError,
    InitializationError,
    InputError,
    ModelError,
    RangeError,
    RegimeError,
    RegularityError,
    StepFailure,
    ThermoError,
)
from .geometry import (
    ConstraintChart,
    StructureCheckReport,
    chart_flow,
    discrete_legendre,
    one_form_eval,
    structure_identity_check,
    two_form_eval,
)
from .integrators import (
    Node,
    RegularityReport,
    SchemeKind,
    SchemeOps,
    StepWindow,
    alpha_scheme,
    build_scheme,
    compose_scheme,
    initialize,
    regularity_matrix,
    run,
    step,
)
from .models import (
    ExternalForce,
    IdealGasParams,
    MassSpringParams,
    SystemModel,
    ThermoState,
    internal_energy,
    lagrangian,
    mass_spring_gas_model,
    temperature,
    total_energy,
)
from .records import COLUMNS, TrajectoryRecord, write_csv

__version__ = "0.1.0"
