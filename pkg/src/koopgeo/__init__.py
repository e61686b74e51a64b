"""Symbolic and numeric tools for Koopman lifts of control-affine systems."""

from .controllability import (
    LieAlgebraBasis,
    RankReport,
    controllability_verdict,
    generate_lie_algebra,
    larc_rank,
)
from .expr import Expr, diff, evaluate, parse_expr, to_string
from .feedback import (
    BrunovskyRealization,
    FeedbackLaw,
    RelativeDegreeReport,
    brunovsky_realization,
    feedback_law,
    independence_check,
    relative_degree,
    verify_linearization,
)
from .fields import (
    Box,
    ControlAffineSystem,
    VectorField,
    iterated_lie_derivative,
    lie_bracket,
    lie_derivative,
    zero_certificate,
)
from .lift import (
    LiftedBilinearSystem,
    ObservableDictionary,
    bilinearize,
    build_monomial_dictionary,
    exp_generator,
    generator_matrix,
    lift_error,
    simulate_lift,
)
from .numerics import (
    ControlSignal,
    Trajectory,
    check_commutation,
    check_generator,
    check_group_law,
    integrate_flow,
    koopman_apply,
    milnor_check,
)
from .sysfile import load_system, parse_system

__version__ = "0.1.0"
