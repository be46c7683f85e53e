"""Python access to the uiess core: synthesis, metrics, latent algebra and the CLI."""

from ._uiess import (
    DataError,
    NumericError,
    UsageError,
    build_dataset,
    degrade_jaffe,
    manipulate_style,
    psnr,
    render_clean_scene,
    run_cli,
    silhouette,
    spearman,
    ssim,
    uciqe,
    uiqm,
)

__all__ = [
    "DataError",
    "NumericError",
    "UsageError",
    "build_dataset",
    "degrade_jaffe",
    "manipulate_style",
    "psnr",
    "render_clean_scene",
    "run_cli",
    "silhouette",
    "spearman",
    "ssim",
    "uciqe",
    "uiqm",
]
