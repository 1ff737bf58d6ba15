from trajvid.nn.autograd import Tensor, no_grad
from trajvid.nn import functional
from trajvid.nn.layers import (
    Conv2d,
    Conv3d,
    GroupNorm,
    Linear,
    Module,
    ModuleList,
)
from trajvid.nn.optim import AdamW

__all__ = [
    "Tensor",
    "no_grad",
    "functional",
    "Module",
    "ModuleList",
    "Conv2d",
    "Conv3d",
    "Linear",
    "GroupNorm",
    "AdamW",
]
