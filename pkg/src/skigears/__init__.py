"""skigears: from-scratch deep sequence classifiers for cross-country
skiing gear detection from tri-axial accelerometer windows."""

__version__ = "0.1.0"

from .data import (  # noqa: F401
    Record,
    SynthSpec,
    Window,
    WindowedDataset,
    load_csv,
    normalize,
    save_csv,
    segment,
    split,
    synth_generate,
)
from .gradcheck import GradReport, central_difference, check_layer  # noqa: F401
from .kernels import active_backend, set_backend  # noqa: F401
from .layers import (  # noqa: F401
    ConvFilterBank,
    LstmState,
    LstmWeights,
    bilstm_sequence,
    conv1d_forward,
    dense_forward,
    lstm_sequence,
    lstm_step,
    maxpool1d,
    xent_loss,
)
from .models import (  # noqa: F401
    GearClassifier,
    ModelConfig,
    build_model,
    enumerate_grid,
    load_model,
)
from .tensor import Tensor, hadamard, matmul, sigmoid, softmax, tanh_act  # noqa: F401
from .training import (  # noqa: F401
    ExperimentReport,
    TrainConfig,
    TrainHistory,
    evaluate,
    run_experiment,
    train,
)
