"""Structure-preserving discretizations and mechanical feedback linearization."""

from .errors import (
    AngleAtPi,
    DimensionMismatch,
    MechliftError,
    MultiInputUnsupported,
    NoConvergence,
    NonFinite,
    NotLinearityPreserving,
    NotSkew,
    OutsideChart,
    SingularFeedback,
    SingularStep,
    StepUnderflow,
    Uncontrollable,
    UnknownSystem,
    WrongDimensions,
)
from .geometry import (
    AngularVelocity,
    CoordState,
    DoubleTangent,
    Rotation,
    devectorize,
    hat,
    kappa,
    numeric_jacobian,
    so3_exp,
    so3_log,
    vectorize,
    vee,
)
from .discretization import (
    AxiomReport,
    Diffeomorphism,
    DiscretizationMap,
    identity_diffeomorphism,
    lift_by_diffeo,
    make_explicit_euler,
    make_implicit_euler,
    make_midpoint,
    tangent_lift,
    tangent_map,
    verify_axioms,
)
from .mechanics import (
    LinearMechanicalSystem,
    MFTransform,
    MechanicalSystem,
    PendulumParams,
    RigidBodySystem,
    SystemBundle,
    apply_feedback,
    pendulum_system,
    rigid_body_system,
    sode_field,
    verify_mf_equivalence,
)
from .linearizability import (
    ConditionReport,
    ConditionResult,
    check_general,
    check_planar,
    covariant_derivative,
    curvature_tensor,
    lie_bracket,
    second_covariant_derivative,
)
from .integrators import (
    OrderStudy,
    StepResult,
    Trajectory,
    cayley_matrix,
    cayley_step,
    fl_discretize,
    linear_one_step,
    linear_two_step,
    order_study,
    pole_place,
    reference_integrate,
    so3_closed_loop_step,
    step_first_order,
    step_sode,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
