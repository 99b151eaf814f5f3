"""Small float64 neural-network substrate with manual backpropagation."""

from .functional import (
    adaptive_avg_pool,
    adaptive_avg_pool_backward,
    bigru_backward,
    bigru_forward,
    conv2d,
    conv2d_backward,
    fully_connected,
    fully_connected_backward,
    gru_backward,
    gru_cell,
    gru_forward,
    kaiming_uniform,
    l2_normalize,
    l2_normalize_backward,
    pool_matrix,
    relu,
    relu_backward,
    softmax,
    softmax_backward,
    tensor,
)
from .gradcheck import grad_check
from .layers import AdaptiveAvgPool, BiGRU, Conv2d, Dense, L2Normalize, Layer, ReLU, Reshape, Sequential
from .losses import cross_entropy, one_hot, recon_loss, supcon_loss
from .params import ParamStore, adam_step, load_params, save_params

__all__ = [
    "AdaptiveAvgPool", "BiGRU", "Conv2d", "Dense", "L2Normalize", "Layer", "ParamStore", "ReLU",
    "Reshape", "Sequential", "adam_step", "adaptive_avg_pool", "adaptive_avg_pool_backward",
    "bigru_backward", "bigru_forward", "conv2d", "conv2d_backward", "cross_entropy",
    "fully_connected", "fully_connected_backward", "grad_check", "gru_backward", "gru_cell",
    "gru_forward", "kaiming_uniform", "l2_normalize", "l2_normalize_backward", "load_params",
    "one_hot", "pool_matrix", "recon_loss", "relu", "relu_backward", "save_params", "softmax",
    "softmax_backward", "supcon_loss", "tensor",
]
