"""Encoder-decoder network with manual backpropagation and RMSprop."""

from .model import (
    NetworkConfig,
    NetworkParameters,
    backward,
    build_network,
    correct,
    forward,
    mse_loss,
)
from .training import RmsState, TrainConfig, load_loss_csv, rmsprop_step, save_loss_csv, train
from .weights_io import load_weights, save_weights

__all__ = [
    "NetworkConfig",
    "NetworkParameters",
    "RmsState",
    "TrainConfig",
    "backward",
    "build_network",
    "correct",
    "forward",
    "load_loss_csv",
    "load_weights",
    "mse_loss",
    "rmsprop_step",
    "save_loss_csv",
    "save_weights",
    "train",
]
