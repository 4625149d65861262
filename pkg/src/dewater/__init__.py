"""Underwater image restoration: formation-model physics, a dual-generator
conditional GAN, the paired-data pipeline and quality metrics."""

from .errors import RejectedInputError, TrainingAbort
from .metrics import build_report, euclidean_distance, psnr, ssim, uiqm
from .physics import (
    DENOM_EPS,
    T_FLOOR,
    DuntleyParams,
    compose_underwater,
    duntley_radiance,
    estimate_transmission,
    estimate_veiling_light,
    transmission_from_depth,
)

__version__ = "0.1.0"
