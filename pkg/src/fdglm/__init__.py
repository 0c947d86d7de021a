"""Feature-distributed GLM training via a primal-dual saddle-point iteration.

Features are split across agents on a connected communication graph; each
round every agent updates its primal block and dual estimate from its own
columns and its neighbors' messages, and the running primal average enjoys
an O(1/T) objective guarantee with explicitly computable constants.

Modules: ``losses`` (losses, conjugate machinery, scalar dual solve),
``regularizers`` (prox library), ``graphs`` (families, Laplacian spectra),
``data`` (synthesis, partition, operator norm), ``solver`` (the engine and
the single-agent baseline), ``metrics`` (objectives, reference optima,
error curves, guarantee bounds, cost model), ``cli`` (experiment runner).
"""

from .errors import (
    FdglmError,
    ParameterError,
    DomainError,
    GenerationError,
    CapabilityError,
    ProtocolError,
    NumericalError,
    DivergenceError,
)
from .losses import (
    LossKind,
    SQUARED,
    ABSOLUTE,
    LOGISTIC,
    huber,
    parse_loss,
    loss_value,
    loss_grad,
    LipschitzReport,
    lipschitz_report,
    dual_coordinate_update,
    dual_coordinate_update_array,
    ConvexQuadratic,
    conjugate_duality_gap,
)
from .regularizers import RegKind, ZERO, l1, squared_l2, parse_reg, reg_value, prox
from .graphs import (
    NetworkGraph,
    from_edges,
    load_edge_csv,
    parse_graph,
    generate,
    generate_from_spec,
    laplacian,
    SpectralConstants,
    spectral_constants,
    mohar_lower,
    mckay_upper,
    laplacian_consensus_residual,
)
from .data import (
    Dataset,
    generate_synthetic,
    FeaturePartition,
    partition_features,
    operator_norm,
    ProblemConstants,
    estimate_R,
    save_csv,
    load_csv,
)
from .solver import (
    StepSizes,
    step_sizes_from_theorem,
    primal_update_theta,
    primal_update_v,
    dual_update_follower,
    dual_update_leader,
    RunResult,
    run,
    baseline_single_agent,
    save_history_csv,
)
from .metrics import (
    objective,
    RefOptimum,
    reference_optimum,
    relative_error_curve,
    theorem_bound,
    sqrt_lip_min_rounds,
    CostModel,
    cost_model,
    save_curve_csv,
)

__version__ = "0.1.0"

__all__ = [
    "FdglmError", "ParameterError", "DomainError", "GenerationError",
    "CapabilityError", "ProtocolError", "NumericalError", "DivergenceError",
    "LossKind", "SQUARED", "ABSOLUTE", "LOGISTIC", "huber", "parse_loss",
    "loss_value", "loss_grad", "LipschitzReport", "lipschitz_report",
    "dual_coordinate_update", "dual_coordinate_update_array",
    "ConvexQuadratic", "conjugate_duality_gap",
    "RegKind", "ZERO", "l1", "squared_l2", "parse_reg", "reg_value", "prox",
    "NetworkGraph", "from_edges", "load_edge_csv", "parse_graph", "generate",
    "generate_from_spec", "laplacian", "SpectralConstants", "spectral_constants",
    "mohar_lower", "mckay_upper", "laplacian_consensus_residual",
    "Dataset", "generate_synthetic", "FeaturePartition", "partition_features",
    "operator_norm", "ProblemConstants", "estimate_R", "save_csv", "load_csv",
    "StepSizes", "step_sizes_from_theorem", "primal_update_theta",
    "primal_update_v", "dual_update_follower", "dual_update_leader",
    "RunResult", "run", "baseline_single_agent", "save_history_csv",
    "objective", "RefOptimum", "reference_optimum", "relative_error_curve",
    "theorem_bound", "sqrt_lip_min_rounds", "CostModel", "cost_model",
    "save_curve_csv",
    "__version__",
]
