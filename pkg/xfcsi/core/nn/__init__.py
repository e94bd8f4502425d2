from .tensor import Parameter, Tensor, backward, no_grad
from .layers import ParameterSet
from .optim import AdamState, adam_update, init_adam, zero_grad

__all__ = [
    "Parameter",
    "Tensor",
    "backward",
    "no_grad",
    "ParameterSet",
    "AdamState",
    "adam_update",
    "init_adam",
    "zero_grad",
]
