"""Training dynamics of gradient descent and spectral gradient descent on
anisotropic phase retrieval: exact population dynamics, their reduction to
three coefficients on an invariant manifold, minibatch training, and the
experiment harness that cross-validates all three against each other.
"""

from .covariance import (
    CovarianceSpec,
    PowerLawCovariance,
    ProblemSpec,
    SpikedCovariance,
    build_covariance,
    covariance_sqrt,
    gaussian_init,
    haar_orthogonal,
    manifold_init,
    newton_schulz_orthogonalize,
    polar,
    power_law_eigensystem,
    power_law_problem,
    spiked_problem,
    stiefel_init,
    theta_squared,
)
from .empirical import (
    Batch,
    BatchSampler,
    empirical_gd_step,
    empirical_gradient,
    empirical_loss,
    empirical_loss_and_gradient,
    empirical_specgd_step,
    sample_batch,
)
from .matrix import (
    PopulationGradient,
    WeightState,
    alignment,
    gd_step,
    manifold_coefficients,
    manifold_projection_residual,
    population_gradient,
    population_loss,
    specgd_step,
)
from .reduced import (
    BarrierReport,
    PreGradients,
    ReducedState,
    ReducedTrajectory,
    SpecBoundConstants,
    SpecTrapReport,
    StageThresholds,
    StageTimes,
    detect_stages,
    gd_flow_step,
    gd_reduced_step,
    gd_safe_eta,
    gd_turning_predicate,
    isotropic_state,
    pre_gradients,
    reduced_alignment,
    reduced_loss,
    simulate_reduced,
    spec_flow_step,
    specgd_reduced_step,
    verify_gd_barriers,
    verify_spec_traps,
)
from .runs import (
    CellResult,
    RunConfig,
    StageScalingResult,
    SweepConfig,
    SweepResult,
    TrajectoryRecord,
    TrajectoryResult,
    VerificationReport,
    config_digest,
    read_csv_columns,
    resolve_eta,
    run_stage_scaling,
    run_sweep,
    run_trajectory,
    run_verification_suite,
)

__version__ = "0.1.0"
