from .gradcheck import grad_check
from .optim import AdamConfig, ParamStore, adam_step
from .tape import Tape, Var

__all__ = ["AdamConfig", "ParamStore", "Tape", "Var", "adam_step", "grad_check"]
