"""
Image quality measures: point-response PSLR and -3 dB widths, entropy, peak-to-noise ratio and correlation
with the truth.
"""
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy import ndimage, signal

from common.utils import SPEED_OF_LIGHT, linear_to_db
from common.model_core import RadarParams, ScenarioGeometry, Scene, closest_approach
from common.echo_synth import Stage, StageError


@dataclass(eq=False)
class ImageResult:
    magnitude: np.ndarray  # N x Q, non-negative
    peaks: List[Tuple[int, int, float]] = field(default_factory=list)
    metrics: dict = field(default_factory=dict)
    echo: Optional[object] = None  # complex EchoMatrix in stage 'image'

    @property
    def data(self) -> Optional[np.ndarray]:
        return None if self.echo is None else self.echo.data


def find_peaks(magnitude: np.ndarray, k: int = 10, size: Tuple[int, int] = (5, 5)) -> List[Tuple[int, int, float]]:
    """Strongest k local maxima as (n, q, amplitude), descending."""
    if magnitude.size == 0:
        return []
    local = (magnitude == ndimage.maximum_filter(magnitude, size=size, mode="constant")) & (magnitude > 0)
    nn, qq = np.nonzero(local)
    order = np.argsort(-magnitude[nn, qq], kind="stable")[:k]
    return [(int(nn[i]), int(qq[i]), float(magnitude[nn[i], qq[i]])) for i in order]


#
# Point response
#

def cut_profile(cut: np.ndarray, upsample: int = 16, bandpass: bool = False) -> np.ndarray:
    """
    Magnitude of a 1-D cut interpolated by FFT zero padding.
    Band-pass cuts (range cuts of the [0, B) chirp) are demodulated to base band first.
    """
    cut = np.asarray(cut)
    if bandpass:
        cut = cut * np.exp(-1j * np.pi * np.arange(len(cut)))
    return np.abs(signal.resample(cut, len(cut) * upsample))


def width_3db(profile: np.ndarray, peak: int) -> float:
    """Width (in profile samples) of the main lobe above -3 dB, edges linearly interpolated."""
    level = profile[peak] / np.sqrt(2.0)
    left = peak
    while left > 0 and profile[left - 1] >= level:
        left -= 1
    right = peak
    while right < len(profile) - 1 and profile[right + 1] >= level:
        right += 1
    x_left = float(left)
    if left > 0:
        x_left = left - (profile[left] - level) / (profile[left] - profile[left - 1])
    x_right = float(right)
    if right < len(profile) - 1:
        x_right = right + (profile[right] - level) / (profile[right] - profile[right + 1])
    return x_right - x_left


def pslr(profile: np.ndarray, peak: int) -> float:
    """Peak-to-sidelobe ratio (dB): highest level beyond the first nulls next to the main lobe."""
    left = peak
    while left > 0 and profile[left - 1] < profile[left]:
        left -= 1
    right = peak
    while right < len(profile) - 1 and profile[right + 1] < profile[right]:
        right += 1
    side = np.concatenate([profile[:left], profile[right + 1:]])
    if side.size == 0:
        return float("-inf")
    return float(linear_to_db(np.max(side) ** 2 / profile[peak] ** 2))


def point_response_metrics(
        image: np.ndarray, peak: Tuple[int, int], params: RadarParams,
        upsample: int = 16, range_half: int = 32, azimuth_half: int = 128,
) -> dict:
    """
    PSLR and -3 dB widths around one peak. Complex images are interpolated as complex data,
    magnitude images as magnitude.
    """
    n0, q0 = peak
    N, Q = image.shape
    q_lo, q_hi = max(q0 - range_half, 0), min(q0 + range_half + 1, Q)
    n_lo, n_hi = max(n0 - azimuth_half, 0), min(n0 + azimuth_half + 1, N)

    range_cut = image[n0, q_lo:q_hi]
    azimuth_cut = image[n_lo:n_hi, q0]
    range_profile = cut_profile(range_cut, upsample, bandpass=np.iscomplexobj(image))
    azimuth_profile = cut_profile(azimuth_cut, upsample)

    r_peak = int(np.argmax(range_profile))
    a_peak = int(np.argmax(azimuth_profile))
    range_bin = SPEED_OF_LIGHT * params.delta_tau / 2.0
    return dict(
        pslr_db=pslr(range_profile, r_peak),
        azimuth_pslr_db=pslr(azimuth_profile, a_peak),
        range_width_m=width_3db(range_profile, r_peak) / upsample * range_bin,
        azimuth_width_bins=width_3db(azimuth_profile, a_peak) / upsample,
    )


#
# Whole image
#

def entropy(magnitude: np.ndarray) -> float:
    total = magnitude.sum()
    if not total > 0:
        raise ValueError("Entropy of an empty image")
    p = magnitude.ravel() / total
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def peak_to_noise(magnitude: np.ndarray) -> float:
    """Strongest pixel power over the median pixel power (dB). For sparse scenes the median is the noise floor."""
    power = np.asarray(magnitude, dtype=float) ** 2
    floor = float(np.median(power))
    if not floor > 0:
        return float("inf")
    return float(linear_to_db(power.max() / floor))


def ncc(a: np.ndarray, b: np.ndarray) -> float:
    """Zero-mean normalized cross-correlation. Constant inputs give 0."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    a = a - a.mean()
    b = b - b.mean()
    denom = np.sqrt(np.dot(a, a) * np.dot(b, b))
    if denom == 0:
        return 0.0
    return float(np.dot(a, b) / denom)


def cell_pixels(geom: ScenarioGeometry, params: RadarParams) -> Tuple[np.ndarray, np.ndarray]:
    """Fractional image coordinates (slot, range sample) where each cell is focused."""
    R0, t_zero = closest_approach(geom)
    return t_zero / params.delta_t, 2.0 * R0 / (SPEED_OF_LIGHT * params.delta_tau)


def sample_at_cells(magnitude: np.ndarray, geom: ScenarioGeometry, params: RadarParams) -> np.ndarray:
    """Image magnitude at the nearest pixel of every cell, Na x Nr."""
    n_pix, q_pix = cell_pixels(geom, params)
    n_idx = np.clip(np.round(n_pix).astype(int), 0, magnitude.shape[0] - 1)
    q_idx = np.clip(np.round(q_pix).astype(int), 0, magnitude.shape[1] - 1)
    return magnitude[n_idx, q_idx]


def truth_map(
        scene: Scene, geom: ScenarioGeometry, params: RadarParams, k_a: Optional[float] = None,
        spread: bool = True,
) -> np.ndarray:
    """
    Scene rasterized into image coordinates.

    With spread, every cell contributes |g| times the ideal separable point response |sinc| in range and
    azimuth (azimuth resolution 1/(k_a*T_a)), otherwise |g| at the nearest pixel.
    """
    N, Q = params.N, params.Q
    ii, jj, g = scene.nonzero()
    out = np.zeros((N, Q))
    if len(g) == 0:
        return out
    n_pix, q_pix = cell_pixels(geom, params)
    n_pix, q_pix = n_pix[ii, jj], q_pix[ii, jj]
    amp = np.abs(g)
    if not spread:
        n_idx = np.clip(np.round(n_pix).astype(int), 0, N - 1)
        q_idx = np.clip(np.round(q_pix).astype(int), 0, Q - 1)
        np.add.at(out, (n_idx, q_idx), amp)
        return out
    if k_a is None:
        raise ValueError("Spread truth map needs the azimuth modulation rate k_a")
    resolution_slots = 1.0 / (abs(k_a) * geom.aperture_time * params.delta_t)
    p_a = np.abs(np.sinc((np.arange(N)[:, None] - n_pix[None, :]) / resolution_slots))  # N x C
    p_r = np.abs(np.sinc(np.arange(Q)[:, None] - q_pix[None, :]))  # Q x C
    return (p_a * amp[None, :]) @ p_r.T


def image_metrics(
        img: ImageResult, truth: Scene, geom: ScenarioGeometry, params: RadarParams, k_a: float,
) -> dict:
    """Point-response quality of the strongest peak plus entropy and correlation with the truth."""
    if img.echo is not None and img.echo.stage != Stage.IMAGE:
        raise StageError(f"Metrics need a formed image, got stage '{img.echo.stage.name.lower()}'")
    magnitude = img.magnitude
    if magnitude.size == 0 or not np.max(magnitude) > 0:
        raise ValueError("Image is empty")
    peaks = img.peaks or find_peaks(magnitude, 1)
    n0, q0, _ = peaks[0]
    source = img.data if img.data is not None else magnitude
    metrics = point_response_metrics(source, (n0, q0), params)
    metrics["entropy"] = entropy(magnitude)
    metrics["peak_to_noise_db"] = peak_to_noise(magnitude)
    metrics["ncc_vs_truth"] = ncc(magnitude, truth_map(truth, geom, params, k_a=k_a))
    metrics["ncc_cells"] = ncc(sample_at_cells(magnitude, geom, params), np.abs(truth.g))
    img.metrics = metrics
    return metrics
