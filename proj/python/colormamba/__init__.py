"""NIR-to-RGB spectral translation core operations."""

from ._colormamba import (  # noqa: F401
    __version__,
    ae,
    colorize,
    discretize,
    ergas,
    hsv_to_rgb,
    laplacian_edge,
    mse,
    ms_ssim,
    psnr,
    rgb_to_hsv,
    sam,
    scan2d,
    scan_parallel,
    scan_sequential,
    ssim,
)
