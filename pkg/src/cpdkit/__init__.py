"""Dense CP decomposition with ALS, AMDM and thresholded AMDM solvers."""
from ._kernels import BACKEND
from .conditioning import (
    condition_number,
    condition_number_compressed,
    condition_number_direct,
    terracini_matrix,
)
from .diagnostics import (
    InsufficientSamplesError,
    RateEstimate,
    backward_error,
    empirical_order,
    orthonormality_defect,
    pooled_order,
    rank1_singular_tuple,
    spectral_diagonalization_defect,
    stationarity_residual,
    theoretical_rate,
)
from .generators import (
    GeneratorSpec,
    add_gaussian_noise,
    collinear_cp,
    generate,
    perturb_model,
    planted_orthogonal_cp,
    random_cp,
)
from .linalg import (
    ThinSVD,
    column_space_basis,
    normalize_columns,
    orthonormal_complement,
    pseudoinverse,
    solve_gram_system,
    thin_svd,
)
from .model import (
    KruskalModel,
    aligned_factor_errors,
    factor_recovery_error,
    match_components,
    normalize_model,
    reconstruct,
    residual_and_fitness,
)
from .solvers import (
    CPResult,
    NonFiniteError,
    SolverConfig,
    SolverError,
    SolverState,
    ThresholdSchedule,
    TraceRecord,
    als_update,
    amdm_update,
    evaluate_schedule,
    general_amdm_update,
    initial_model,
    pseudo_spectrum,
    run,
)
from .tensor import (
    hadamard,
    inner,
    khatri_rao,
    matricize,
    mttkrp,
    multilinear_eval,
    multimode_transform,
    norm,
    tensorize,
)

__version__ = "0.1.0"
