"""Wave-domain DFT fitting and energy-only 2D direction finding toolkit."""

__version__ = "0.1.0"

from .geometry import (
    SimGeometry,
    PropagationSet,
    SteeringVector,
    DftTarget,
    FeasibilityReport,
    linear_to_grid,
    grid_to_linear,
    intra_sim_distance,
    input_to_first_distance,
    rs_coefficient,
    build_propagation_matrices,
    steering_vector,
    dft_matrix,
    check_feasibility,
)
from .wavemodel import (
    PhaseStack,
    ZerothLayerConfig,
    SimResponse,
    DB_FLOOR,
    forward_response,
    optimal_scale,
    fitting_loss,
    synthesize_received,
    random_stack,
    cn_noise,
)
from .trainer import (
    TrainConfig,
    TrainReport,
    TrainingDiverged,
    layer_inputs,
    gradient,
    finite_diff_gradient,
    train,
    train_restarts,
)
from .estimator import (
    ProtocolConfig,
    EnergyMap,
    DoaEstimate,
    UnrealizableAngle,
    zeroth_layer_phase,
    zeroth_layer_config,
    collect_snapshots,
    peak_index,
    electrical_angles,
    physical_angles,
    estimate_from_map,
    angular_spectrum,
    wrapped_angle_error,
    steering_for,
)
from .analysis import (
    DegenerateField,
    BoundInputs,
    MomentTriple,
    q_function,
    clean_field,
    noncentrality_map,
    noncentrality,
    peak_index_noiseless,
    moments,
    detection_prob_bound,
    mse_bound,
    quantization_floor,
)
from .experiments import (
    SourceTruth,
    McConfig,
    McPoint,
    SweepSpec,
    SweepCell,
    ReceiverCell,
    effective_rho,
    sample_source,
    digital_baseline,
    paired_trial,
    run_monte_carlo,
    ablation_sweep,
    receiver_study,
    fit_reference,
)
from .cli import (
    ConfigError,
    RunManifest,
    parse_config,
    save_stack,
    load_stack,
    main,
)
