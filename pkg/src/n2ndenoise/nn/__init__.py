from .adam import AdamState, adam_step
from .kernels import backend, set_backend
from .layers import (
    Activation,
    BatchNormLayer,
    ConvLayer,
    activation_backward,
    activation_forward,
    batchnorm_backward,
    batchnorm_forward,
    conv1d_backward,
    conv1d_forward,
)
from .model import (
    ArchConfig,
    FcnnModel,
    fcnn_backward,
    fcnn_forward,
    forward_with_cache,
    init_model,
    loss_and_grads,
    mse_loss,
)
from .serialize import load_model, model_from_bytes, model_to_bytes, save_model
