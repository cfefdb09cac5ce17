"""levset: learn bijective coordinate transformations that concentrate a
scalar function's variation into a few active inputs.

The transform is an additive-coupling reversible network trained from
function-value and gradient samples; linear baselines (active subspace,
sliced inverse regression), per-coordinate sensitivity reports, and a small
surrogate-network evaluation harness round out the toolkit.
"""

__version__ = "0.1.0"

from .analysis import SensitivityReport, compare_methods, sensitivity
from .baselines import (
    LinearMap,
    active_subspace,
    apply_linear,
    apply_linear_inverse,
    load_linear_map,
    save_linear_map,
    sliced_inverse_regression,
)
from .calculus import (
    det_jacobian,
    det_jacobian_svd,
    forward_with_jacobian,
    jacobian_inverse_analytic,
    jacobian_inverse_fd,
    transformed_directional_derivs,
)
from .datasets import GradientSample, stack_samples
from .functions import (
    DomainBox,
    FUNCTIONS,
    TestFunction,
    evaluate,
    get_function,
    gradient,
    load_tabulated_dataset,
    sample_dataset,
    sample_points,
    save_tabulated_dataset,
)
from .losses import (
    AnisotropyWeights,
    LossBreakdown,
    ParamGradients,
    l1_loss,
    l2_loss,
    loss_gradient,
    total_loss,
)
from .regression import FitReport, MLPConfig, fit, predict, reduce_inputs, relative_rmse
from .revnet import (
    RevNetConfig,
    RevNetParams,
    SplitState,
    forward,
    forward_batch,
    init_params,
    inverse,
    inverse_batch,
    load_checkpoint,
    save_checkpoint,
)
from .training import TrainConfig, TrainReport, resume, train

__all__ = [
    "AnisotropyWeights",
    "DomainBox",
    "FUNCTIONS",
    "FitReport",
    "GradientSample",
    "LinearMap",
    "LossBreakdown",
    "MLPConfig",
    "ParamGradients",
    "RevNetConfig",
    "RevNetParams",
    "SensitivityReport",
    "SplitState",
    "TestFunction",
    "TrainConfig",
    "TrainReport",
    "active_subspace",
    "apply_linear",
    "apply_linear_inverse",
    "compare_methods",
    "det_jacobian",
    "det_jacobian_svd",
    "evaluate",
    "fit",
    "forward",
    "forward_batch",
    "forward_with_jacobian",
    "get_function",
    "gradient",
    "init_params",
    "inverse",
    "inverse_batch",
    "jacobian_inverse_analytic",
    "jacobian_inverse_fd",
    "l1_loss",
    "l2_loss",
    "load_checkpoint",
    "load_linear_map",
    "load_tabulated_dataset",
    "loss_gradient",
    "predict",
    "reduce_inputs",
    "relative_rmse",
    "resume",
    "sample_dataset",
    "sample_points",
    "save_checkpoint",
    "save_linear_map",
    "save_tabulated_dataset",
    "sensitivity",
    "sliced_inverse_regression",
    "stack_samples",
    "total_loss",
    "train",
    "transformed_directional_derivs",
]
