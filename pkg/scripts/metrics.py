"""Métriques de qualité : PSNR et MS-SSIM."""
import logging
import math

import numpy as np
from scipy.signal import convolve2d

from scripts.core import check_same_geometry

logger = logging.getLogger(__name__)

PSNR_CAP = 100.0
MSSSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
_WINDOW_SIZE = 11
_WINDOW_SIGMA = 1.5
_K1, _K2, _PEAK = 0.01, 0.03, 255.0


def mse(a, b):
    check_same_geometry(a, b)
    diff = a.samples.astype(np.float64) - b.samples.astype(np.float64)
    return float(np.mean(diff * diff))


def psnr_from_mse(value):
    if value < 1e-10:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(_PEAK * _PEAK / value))


def psnr(a, b):
    """PSNR en dB, MSE calculée sur tous les canaux ; plafonné à 100 dB."""
    return psnr_from_mse(mse(a, b))


def _gaussian_window():
    coords = np.arange(_WINDOW_SIZE, dtype=np.float64) - (_WINDOW_SIZE - 1) / 2.0
    g = np.exp(-(coords ** 2) / (2.0 * _WINDOW_SIGMA ** 2))
    g /= g.sum()
    return np.outer(g, g)


_WINDOW = _gaussian_window()


def _filter(x):
    return convolve2d(x, _WINDOW, mode="valid")


def _ssim_terms(a, b):
    """(ssim moyen, contraste-structure moyen) sur une échelle."""
    c1 = (_K1 * _PEAK) ** 2
    c2 = (_K2 * _PEAK) ** 2
    mu_a, mu_b = _filter(a), _filter(b)
    var_a = _filter(a * a) - mu_a * mu_a
    var_b = _filter(b * b) - mu_b * mu_b
    cov = _filter(a * b) - mu_a * mu_b
    cs_map = (2.0 * cov + c2) / (var_a + var_b + c2)
    lum_map = (2.0 * mu_a * mu_b + c1) / (mu_a * mu_a + mu_b * mu_b + c1)
    return float(np.mean(lum_map * cs_map)), float(np.mean(cs_map))


def _downsample(x):
    h, w = (x.shape[0] // 2) * 2, (x.shape[1] // 2) * 2
    x = x[:h, :w]
    return 0.25 * (x[0::2, 0::2] + x[1::2, 0::2] + x[0::2, 1::2] + x[1::2, 1::2])


def msssim_scales(width, height):
    """Nombre d'échelles utilisables (5 dès que le petit côté atteint 176 pixels)."""
    smallest = min(width, height)
    scales = len(MSSSIM_WEIGHTS)
    while scales > 1 and smallest < _WINDOW_SIZE * 2 ** (scales - 1):
        scales -= 1
    if smallest < _WINDOW_SIZE:
        raise ValueError(f"image trop petite pour MS-SSIM: {width}x{height}")
    return scales


def _msssim_plane(a, b, scales):
    weights = np.array(MSSSIM_WEIGHTS[:scales])
    weights /= weights.sum()
    score = 1.0
    for level in range(scales):
        ssim_val, cs_val = _ssim_terms(a, b)
        if level == scales - 1:
            score *= max(ssim_val, 0.0) ** weights[level]
        else:
            score *= max(cs_val, 0.0) ** weights[level]
            a, b = _downsample(a), _downsample(b)
    return score


def ms_ssim(a, b):
    """MS-SSIM moyen sur les canaux (fenêtre gaussienne 11x11, σ = 1.5)."""
    check_same_geometry(a, b)
    scales = msssim_scales(a.width, a.height)
    if scales < len(MSSSIM_WEIGHTS):
        logger.warning(f"MS-SSIM sur {scales} échelles seulement (image {a.width}x{a.height})")
    scores = [
        _msssim_plane(a.samples[c].astype(np.float64), b.samples[c].astype(np.float64), scales)
        for c in range(a.channels)
    ]
    return float(np.mean(scores))


def msssim_db(score):
    """Échelle logarithmique −10·log10(1 − MS-SSIM), plafonnée comme le PSNR."""
    if score >= 1.0 - 1e-10:
        return PSNR_CAP
    return -10.0 * math.log10(1.0 - score)
