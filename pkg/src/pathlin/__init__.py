"""pathlin: partial linearization of trained networks and path-length analytics."""

from ._kernels import BACKEND
from .autodiff import (
    Tensor,
    add,
    add_bias,
    backward,
    cross_entropy,
    l05_penalty,
    matmul,
    mul_columns,
    prelu,
    relu,
    scale,
    ssum,
)
from .checkpoint import CheckpointError, load, save
from .config import ExperimentConfig, read_config, reference_config, write_config
from .data import Dataset, generate_synthetic, load_idx
from .gradcheck import grad_check
from .harness import base_train, report, run_experiment
from .linearize import (
    PostTrainConfig,
    SweepRecord,
    choose_omega_grid,
    freeze_pass,
    omega_sweep,
    post_post_train,
    post_train,
)
from .network import (
    LayerSpec,
    Network,
    NetworkSpec,
    append_channel_multiplier,
    build,
    relu_to_prelu,
    replace_nonlinear_layerwise_with_channelwise,
)
from .optim import SGD, ParamSlot, SGDConfig
from .pathmetrics import (
    PathLengthDistribution,
    PathProfile,
    Span,
    Stage,
    average_slope,
    enumerate_paths_oracle,
    napl,
    path_length_distribution,
    profile_of,
    proportion_disabled,
)
from .reparam import (
    ACTIVATIONS,
    ActivationDescriptor,
    FeedforwardBlockParams,
    ResidualBlockParams,
    Witness,
    WitnessError,
    noninjectivity_witness,
    reparam_local_linear,
    reparam_relu,
    verify_reparam,
)

__version__ = "0.1.0"
