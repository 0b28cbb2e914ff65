"""Channel-wise lateral connectivity for convolutional feature maps.

The core object is a length-f connectivity profile (a damped Mexican-hat
wavelet by default) turned into a circulant coupling matrix over the
channel axis; the package solves the resulting linear dynamics at their
analytic equilibrium, trains small CNNs with that stage plugged in after
the first convolution, and measures the filter ordering the coupling
induces.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DataFormatError,
    DivergedLoss,
    LengthTooSmall,
    PathMismatch,
    SemlcError,
    ShapeMismatch,
    UnstableOperator,
    ZeroNormFilter,
)
from .profiles import ConnectivityProfile, ProfileParams, discretize, profile_gradient, ricker
from .operators import (
    LateralOperator,
    apply_equilibrium_dense,
    apply_equilibrium_fft,
    build_circulant,
    equilibrium_backward,
    equilibrium_param_backward,
)
from .layers import LrnLayer, SemlcLayer, lrn_forward, make_semlc_layer, semlc_backward, semlc_forward
from .dynamics import DynamicsConfig, IntegrationResult, integrate
from .net import (
    ConvBlockSpec,
    FilterBank,
    Network,
    NetworkSpec,
    StageSpec,
    TrainConfig,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .analysis import OrderReport, correlation_profile, msd, order_metric, order_report, two_opt_order
from .bench import BenchConfig, run_bench

__all__ = [
    "__version__",
    "SemlcError",
    "ConfigError",
    "DataFormatError",
    "DivergedLoss",
    "LengthTooSmall",
    "PathMismatch",
    "ShapeMismatch",
    "UnstableOperator",
    "ZeroNormFilter",
    "ConnectivityProfile",
    "ProfileParams",
    "discretize",
    "profile_gradient",
    "ricker",
    "LateralOperator",
    "build_circulant",
    "apply_equilibrium_dense",
    "apply_equilibrium_fft",
    "equilibrium_backward",
    "equilibrium_param_backward",
    "SemlcLayer",
    "LrnLayer",
    "make_semlc_layer",
    "semlc_forward",
    "semlc_backward",
    "lrn_forward",
    "DynamicsConfig",
    "IntegrationResult",
    "integrate",
    "NetworkSpec",
    "ConvBlockSpec",
    "StageSpec",
    "TrainConfig",
    "Network",
    "FilterBank",
    "train",
    "save_checkpoint",
    "load_checkpoint",
    "OrderReport",
    "msd",
    "order_metric",
    "two_opt_order",
    "correlation_profile",
    "order_report",
    "BenchConfig",
    "run_bench",
]
