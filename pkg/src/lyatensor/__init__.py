"""Covariant Lyapunov tensor, metric-relative stability certificates and Lyapunov exponents
for non-autonomous ODEs."""

__version__ = "0.1.0"

from .core import (
    BlowUpError,
    ContractViolation,
    DegenerateInputError,
    DerivativeProvenance,
    FibreMetric,
    LyatensorError,
    NumericFailure,
    RangeError,
    SymmetricForm,
    VectorField,
    classify,
    eigen_extremes,
    fd_jacobian,
    jacobi_eigenvalues,
)
from .integrate import (
    DEFAULT_CONFIG,
    IntegratorConfig,
    JacobiFrame,
    Trajectory,
    advance,
    flow_jacobian,
    integrate_trajectory,
    integrate_with_variation,
)
from .tensor import (
    FibreChart,
    TensorEvaluation,
    covariant_lyapunov_tensor,
    lyapunov_matrix,
    push_through_chart,
    tensoriality_defects,
    variation_identity_residual,
)
from .metrics import (
    ScalarProfile,
    constant_profile,
    euclidean,
    exponent_profile,
    flow_pullback,
    quadratic_warp,
    scaled,
)
from .stability import (
    StabilityCertificate,
    certify_asymptotic,
    certify_local,
    chord_distance,
    chord_distance_rate,
)
from .exponents import ExponentEstimate, exponent_spectrum, jacobi_exponent, two_trajectory_exponent
from .systems import REGISTRY, get_system
