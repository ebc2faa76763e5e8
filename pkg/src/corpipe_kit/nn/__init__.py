from .encoder import HashedEncoder, stable_hash
from .optim import Optimizer, OptimizerConfig, adafactor_step, adam_step, lr_at
from .tensor import MASK_VALUE, NonFiniteError, Tensor, param, rng_for

__all__ = [
    "HashedEncoder", "MASK_VALUE", "NonFiniteError", "Optimizer", "OptimizerConfig", "Tensor",
    "adafactor_step", "adam_step", "lr_at", "param", "rng_for", "stable_hash",
]
