"""Mini-CNN with exact reverse-mode gradients and transfer-learning mechanics."""

from .layers import Conv3x3, Dense, GlobalAvgPool, Layer, MaxPool2, ReLU, ResidualBlock
from .model import (
    CnnModel,
    ForwardState,
    build_mini_cnn,
    cross_entropy,
    embed_batch,
    extract_embedding,
    log_softmax,
    loss_ce_l2sp,
    predict_logits,
    replace_head,
    softmax,
)
from .training import AdamState, TrainConfig, adam_step, evaluate, train

__all__ = [
    "AdamState",
    "CnnModel",
    "Conv3x3",
    "Dense",
    "ForwardState",
    "GlobalAvgPool",
    "Layer",
    "MaxPool2",
    "ReLU",
    "ResidualBlock",
    "TrainConfig",
    "adam_step",
    "build_mini_cnn",
    "cross_entropy",
    "embed_batch",
    "evaluate",
    "extract_embedding",
    "log_softmax",
    "loss_ce_l2sp",
    "predict_logits",
    "replace_head",
    "softmax",
    "train",
]
