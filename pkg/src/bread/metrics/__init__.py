from .color import ciede2000, delta_e, srgb_to_lab
from .fullref import gamma_align, mse, psnr, ssim
from .loe import loe
from .niqe import NiqeModel, fit_niqe_model, load_default_model, niqe
from .report import MetricReport

__all__ = [
    "MetricReport",
    "NiqeModel",
    "ciede2000",
    "delta_e",
    "fit_niqe_model",
    "gamma_align",
    "load_default_model",
    "loe",
    "mse",
    "niqe",
    "psnr",
    "srgb_to_lab",
    "ssim",
]
