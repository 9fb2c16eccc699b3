from . import kernels
from .network import (
    GradientReport,
    LayerSpec,
    NetworkParams,
    backward,
    conv_output_extent,
    default_architecture,
    forward,
    gradient_check,
    init_network,
    layer_shapes,
    loss_and_gradient,
    mac_count,
    sgd_step,
)

__all__ = [
    "GradientReport",
    "LayerSpec",
    "NetworkParams",
    "backward",
    "conv_output_extent",
    "default_architecture",
    "forward",
    "gradient_check",
    "init_network",
    "kernels",
    "layer_shapes",
    "loss_and_gradient",
    "mac_count",
    "sgd_step",
]
