from .attention import export_attention, read_attention_csv, write_attention_csv
from .autodiff import Tensor, no_grad
from .batches import TrainingSet
from .checkpoint import load_checkpoint, save_checkpoint
from .policy import (
    ModelConfig,
    attention_maps,
    encode,
    flow_velocity,
    grounding_head,
    init_params,
    predict_pose,
    sample_normalized,
    total_loss,
)
from .train import TrainConfig, TrainState, fit, grad_check, init_train_state, learning_rate, train_step

__all__ = [
    "ModelConfig",
    "Tensor",
    "TrainConfig",
    "TrainState",
    "TrainingSet",
    "attention_maps",
    "encode",
    "export_attention",
    "fit",
    "flow_velocity",
    "grad_check",
    "grounding_head",
    "init_params",
    "init_train_state",
    "learning_rate",
    "load_checkpoint",
    "no_grad",
    "predict_pose",
    "read_attention_csv",
    "sample_normalized",
    "save_checkpoint",
    "total_loss",
    "train_step",
    "write_attention_csv",
]
