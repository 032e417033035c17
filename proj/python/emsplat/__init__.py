# Copyright Contributors to the emsplat Project
# SPDX-License-Identifier: Apache-2.0
#
"""Gaussian-mixture cryo-EM reconstruction (Python bindings)."""

from ._core import (
    CtfParams,
    Dataset,
    DivergenceError,
    Error,
    FormatError,
    InvalidArgument,
    ShapeMismatch,
    GaussianMixture,
    GridSpec,
    TrainConfig,
    activate,
    apply_ctf,
    ctf_evaluate,
    fsc,
    inverse_activate,
    learning_rate_for_epoch,
    make_phantom,
    param_count,
    read_checkpoint,
    read_volume,
    render,
    simulate,
    train,
    voxelize,
    write_checkpoint,
    write_volume,
)

__version__ = "0.1.0"

__all__ = [
    "CtfParams",
    "Dataset",
    "DivergenceError",
    "Error",
    "FormatError",
    "InvalidArgument",
    "ShapeMismatch",
    "GaussianMixture",
    "GridSpec",
    "TrainConfig",
    "activate",
    "apply_ctf",
    "ctf_evaluate",
    "fsc",
    "inverse_activate",
    "learning_rate_for_epoch",
    "make_phantom",
    "param_count",
    "read_checkpoint",
    "read_volume",
    "render",
    "simulate",
    "train",
    "voxelize",
    "write_checkpoint",
    "write_volume",
]
