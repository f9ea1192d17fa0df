"""Low-light image enhancement with separate luminance and chrominance stages.

Luminance is brightened by a learned illumination map, denoised at several
noise strengths and fused; chrominance is corrected by a guided colour net.
"""

from .errors import (
    BreadError,
    BundleError,
    ConfigError,
    DataError,
    DependencyError,
    FormatError,
    NumericError,
)
from .imagecore import YCbCr, read_png, rgb_to_ycbcr, write_png, ycbcr_to_rgb

__version__ = "0.1.0"

__all__ = [
    "BreadError",
    "BundleError",
    "ConfigError",
    "DataError",
    "DependencyError",
    "FormatError",
    "NumericError",
    "YCbCr",
    "read_png",
    "rgb_to_ycbcr",
    "write_png",
    "ycbcr_to_rgb",
]
