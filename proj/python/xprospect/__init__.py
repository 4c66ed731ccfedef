"""Biplanar X-ray to CT reconstruction toolkit."""

from ._core import (
    ConfigError,
    Error,
    FormatError,
    InvalidInput,
    ModelConfig,
    NonFiniteError,
    back_project,
    cycle_loss,
    export_slice,
    forward,
    fuse_backprojections,
    grad_check,
    init_params,
    load_image,
    load_volume,
    make_phantom,
    mean_project,
    normalize_hu,
    resize_volume,
    run_cli,
    save_image,
    save_volume,
    selu,
    train,
)

__all__ = [
    "ConfigError",
    "Error",
    "FormatError",
    "InvalidInput",
    "ModelConfig",
    "NonFiniteError",
    "back_project",
    "cycle_loss",
    "export_slice",
    "forward",
    "fuse_backprojections",
    "grad_check",
    "init_params",
    "load_image",
    "load_volume",
    "make_phantom",
    "mean_project",
    "normalize_hu",
    "resize_volume",
    "run_cli",
    "save_image",
    "save_volume",
    "selu",
    "train",
]
