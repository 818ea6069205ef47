from __future__ import annotations

from .analysis import cka
from .analysis import cka_first_last
from .analysis import reconstruction_demo
from .analysis import representation_gap
from .checkpoint import Checkpoint
from .checkpoint import load_checkpoint
from .checkpoint import save_checkpoint
from .config import RunConfig
from .configbox import ConfigBox
from .configfile_loader import ConfigFileLoader
from .environ_loader import EnvironLoader
from .override_loader import OverrideLoader
from .tensor import Tensor
from .tensor import no_grad
from .training import finetune_classify
from .training import finetune_forecast
from .training import pretrain

__all__ = [
    "Checkpoint",
    "ConfigBox",
    "ConfigFileLoader",
    "EnvironLoader",
    "OverrideLoader",
    "RunConfig",
    "Tensor",
    "cka",
    "cka_first_last",
    "finetune_classify",
    "finetune_forecast",
    "load_checkpoint",
    "no_grad",
    "pretrain",
    "reconstruction_demo",
    "representation_gap",
    "save_checkpoint",
]
