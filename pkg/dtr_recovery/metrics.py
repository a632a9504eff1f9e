"""Image quality metrics: PSNR and SSIM per band.

Both metrics assume data normalized to ``[0, 1]`` (peak and dynamic range
1.0).  Scores are computed per frontal slice and averaged over bands;
``mode="volume"`` instead reports one PSNR from the whole-volume MSE.
SSIM is the single-scale Gaussian-window variant (11×11, σ=1.5,
K1=0.01, K2=0.03).
"""

from __future__ import annotations

from typing import Literal

import numpy as np
from pydantic import BaseModel
from skimage.metrics import structural_similarity

from dtr_recovery.errors import ShapeError, check_same_dims

PsnrMode = Literal["band", "volume"]

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


class MetricsReport(BaseModel):
    """Per-band and mean PSNR (dB) and SSIM."""

    psnr_bands: list[float]
    psnr_mean: float
    ssim_bands: list[float]
    ssim_mean: float
    mode: PsnrMode = "band"


def _psnr_from_mse(mse: float) -> float:
    return float("inf") if mse == 0.0 else float(10.0 * np.log10(1.0 / mse))


def psnr(x: np.ndarray, ref: np.ndarray, mode: PsnrMode = "band") -> tuple[list[float], float]:
    """Per-band PSNR with peak 1.0 and its aggregate.

    Returns:
        ``(per_band, mean)``; in ``volume`` mode the aggregate comes from the
        MSE of the whole volume.  Zero error yields ``inf``.
    """
    check_same_dims(("x", x.shape), ("ref", ref.shape))
    sq = (x - ref) ** 2
    bands = [_psnr_from_mse(float(v)) for v in sq.mean(axis=(0, 1))]
    if mode == "volume":
        return bands, _psnr_from_mse(float(sq.mean()))
    return bands, float(np.mean(bands))


def ssim(x: np.ndarray, ref: np.ndarray) -> tuple[list[float], float]:
    """Per-band SSIM and its mean.

    Raises:
        ShapeError: if dims differ or a band is smaller than the window.
    """
    check_same_dims(("x", x.shape), ("ref", ref.shape))
    if min(x.shape[:2]) < SSIM_WINDOW:
        raise ShapeError(
            f"SSIM needs bands of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {x.shape[:2]}."
        )
    bands = [
        float(
            structural_similarity(
                x[:, :, k],
                ref[:, :, k],
                data_range=1.0,
                gaussian_weights=True,
                sigma=SSIM_SIGMA,
                use_sample_covariance=False,
                K1=SSIM_K1,
                K2=SSIM_K2,
            )
        )
        for k in range(x.shape[2])
    ]
    return bands, float(np.mean(bands))


def evaluate(x: np.ndarray, ref: np.ndarray, mode: PsnrMode = "band") -> MetricsReport:
    """PSNR and SSIM of ``x`` against ``ref``."""
    psnr_bands, psnr_mean = psnr(x, ref, mode)
    ssim_bands, ssim_mean = ssim(x, ref)
    return MetricsReport(
        psnr_bands=psnr_bands,
        psnr_mean=psnr_mean,
        ssim_bands=ssim_bands,
        ssim_mean=ssim_mean,
        mode=mode,
    )


def relative_error(x: np.ndarray, ref: np.ndarray) -> float:
    """``||x - ref||_F / ||ref||_F`` (absolute error when ``ref`` is zero)."""
    check_same_dims(("x", x.shape), ("ref", ref.shape))
    denom = float(np.linalg.norm(ref))
    err = float(np.linalg.norm(x - ref))
    return err / denom if denom > 0 else err
