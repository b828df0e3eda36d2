"""Neural volume representations with uncertainty estimates."""

from ._core import (
    ConfigError,
    Error,
    FileNotFound,
    FormatError,
    InvalidArgument,
    IoError,
    Model,
    NumericError,
    VersionError,
    default_config,
    demo_volume,
    gaussian_nll,
    jaccard_spatial_tolerance,
    lambda_at,
    load_model,
    load_volume,
    normalize,
    pearson,
    psnr,
    run_cli,
    sample_trilinear,
    train,
)

__all__ = [name for name in dir() if not name.startswith("_")]
