"""Minimal dense tensor engine: tape autodiff, 3-D convolution, Adam, reversible chains."""
from .tensor import METER, Tensor, backward, enable_grad, is_grad_enabled, no_grad
from .ops import (add, concat_channels, conv3d, conv3d_backward, conv3d_forward,
                  leaky_relu, mosaic_rggb, mse, mul, project_measurement, scale,
                  slice_channels, split_channels, sub, total, upsample2x)
from .optim import Adam, AdamState, adam_step, clip_grad_norm, global_norm
from .reversible import (RevGrads, block_forward, block_inverse, reversible_backward,
                         reversible_chain, stored_chain)

nn_upsample2x_spatial = upsample2x
from .gradcheck import gradcheck, relative_error
