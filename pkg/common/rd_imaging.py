"""
Range-Doppler image formation adapted to the radar -> ARIS -> scene relay path.

    raw (down-converted) -> range_compress -> remove_relay_delay -> azimuth_fft -> rcmc -> azimuth_compress

Every stage takes and returns an EchoMatrix and refuses data in any other stage.
The compressed range response of the [0, B) chirp is band-pass (centered at B/2 in the sampled band),
so fractional shifts use the true [0, B) frequencies and the RCMC interpolator works on the
demodulated signal.
"""
from typing import Optional, Sequence, Union
import logging

import numpy as np

from common.utils import SPEED_OF_LIGHT, next_pow2
from common.model_core import RadarParams, ScenarioGeometry, SlotGeometry, track_ranges
from common.waveform import MatchedFilters, compress_rows, matched_filters
from common.echo_synth import EchoMatrix, Stage, StageError, downconvert
from common.image_metrics import ImageResult, find_peaks

log = logging.getLogger('rd_imaging')


def range_compress(Y: EchoMatrix, params: RadarParams) -> EchoMatrix:
    Y.require(Stage.RAW, "range_compress")
    if not Y.meta.get("downconverted"):
        raise StageError("'range_compress' expects down-converted raw data")
    return Y.advance(compress_rows(Y.data, params), Stage.RANGE_COMPRESSED)


def relay_ranges(slots: Union[Sequence[SlotGeometry], np.ndarray]) -> np.ndarray:
    """Radar -> ARIS distance per slot from slot geometries or a plain array."""
    if len(slots) and isinstance(slots[0], SlotGeometry):
        return np.array([s.R_sr for s in slots], dtype=float)
    return np.asarray(slots, dtype=float)


def remove_relay_delay(
        Yrc: EchoMatrix, slots: Union[Sequence[SlotGeometry], np.ndarray], params: RadarParams,
        fractional: bool = True,
) -> EchoMatrix:
    """
    Shift row n earlier by round(2*R_sr,n/(c*dtau)) samples and multiply it by exp{+j*4*pi*f0*R_sr,n/c},
    leaving the ARIS -> scene signature of every target.

    :param fractional: also remove the sub-sample remainder of the shift with a range-frequency phase ramp
    """
    Yrc.require(Stage.RANGE_COMPRESSED, "remove_relay_delay")
    R_sr = relay_ranges(slots)
    N, Q = Yrc.shape
    if len(R_sr) != N:
        raise ValueError(f"Expected {N} relay ranges, got {len(R_sr)}")

    delay = 2.0 * R_sr / (SPEED_OF_LIGHT * params.delta_tau)
    shift = np.round(delay).astype(int)
    if np.any(shift < 0) or np.any(shift >= Q):
        raise ValueError(f"Relay delay shift {shift.max()} exceeds the row length {Q}")

    q = np.arange(Q)
    idx = q[None, :] + shift[:, None]
    valid = idx < Q
    out = np.where(valid, np.take_along_axis(Yrc.data, np.minimum(idx, Q - 1), axis=1), 0.0)

    if fractional:
        out = fractional_shift(out, delay - shift)

    out = out * np.exp(4j * np.pi * params.f0 * R_sr / SPEED_OF_LIGHT)[:, None]
    return Yrc.advance(out, Stage.DELAY_REMOVED, relay_shift_max=int(shift.max()), fractional_delay=bool(fractional))


def fractional_shift(rows: np.ndarray, frac: np.ndarray) -> np.ndarray:
    """
    Move every row earlier by frac (samples, |frac| <= 0.5) with exp{j*2*pi*k*frac/nfft}.
    Bins k = 0..nfft-1 stand for the [0, B) band of the compressed chirp.
    """
    Q = rows.shape[1]
    nfft = next_pow2(2 * Q)
    k = np.arange(nfft)
    spectrum = np.fft.fft(rows, n=nfft, axis=1) * np.exp(2j * np.pi * np.outer(frac, k) / nfft)
    return np.fft.ifft(spectrum, axis=1)[:, :Q]


def azimuth_fft(Yd: EchoMatrix) -> EchoMatrix:
    """Column FFT with the zero Doppler bin moved to N//2. Orthonormal, so column energy is preserved."""
    Yd.require(Stage.DELAY_REMOVED, "azimuth_fft")
    data = np.fft.fftshift(np.fft.fft(Yd.data, axis=0, norm="ortho"), axes=0)
    return Yd.advance(data, Stage.AZIMUTH_FREQ)


def migration_shift(filters: MatchedFilters, delta_tau: float, R_ref: Optional[float] = None) -> np.ndarray:
    """Range migration per centered Doppler bin in samples: 2*dR/(c*dtau), dR = lambda^2*R*f^2/(8*v^2)."""
    R_ref = filters.R_ref if R_ref is None else R_ref
    dR = filters.wavelength ** 2 * R_ref * filters.doppler ** 2 / (8.0 * filters.velocity ** 2)
    return 2.0 * dR / (SPEED_OF_LIGHT * delta_tau)


def rcmc(
        Yf: EchoMatrix, filters: MatchedFilters, slots: Optional[Sequence[SlotGeometry]] = None,
        taps: int = 8,
) -> EchoMatrix:
    """
    Range cell migration correction in the range-Doppler domain with a truncated-sinc interpolator.

    Each Doppler row is resampled at q + s(f). Interpolation is done on the demodulated (base-band) row and
    the band-pass phase is restored at the new position. Taps falling outside the row are clamped to the
    nearest edge sample; their count is stored in meta["rcmc_clamped"].
    """
    Yf.require(Stage.AZIMUTH_FREQ, "rcmc")
    if taps < 2 or taps % 2:
        raise ValueError(f"RCMC kernel length must be even and at least 2, got {taps}")
    N, Q = Yf.shape
    R_ref = slots[0].R_ref if slots else None
    shift = migration_shift(filters, Yf.meta["delta_tau"], R_ref)

    q = np.arange(Q)
    baseband = Yf.data * np.exp(-1j * np.pi * q)[None, :]
    pos = q[None, :] + shift[:, None]
    base = np.floor(pos).astype(int)
    rows = np.arange(N)[:, None]

    acc = np.zeros((N, Q), dtype=complex)
    wsum = np.zeros((N, Q))
    clamped = np.zeros((N, Q), dtype=bool)
    for k in range(-taps // 2 + 1, taps // 2 + 1):
        idx = base + k
        w = np.sinc(pos - idx)
        outside = (idx < 0) | (idx >= Q)
        clamped |= outside & (np.abs(w) > 1e-12)
        acc += w * baseband[rows, np.clip(idx, 0, Q - 1)]
        wsum += w

    out = acc / wsum * np.exp(1j * np.pi * pos)
    n_clamped = int(clamped.sum())
    if n_clamped:
        log.debug(f"RCMC used nearest-neighbor fallback for {n_clamped} samples at the row edges")
    return Yf.advance(out, Stage.RCMC_DONE, rcmc_clamped=n_clamped, rcmc_taps=taps)


def azimuth_compress(Ys: EchoMatrix, filters: MatchedFilters, peaks: int = 10) -> ImageResult:
    """Multiply every column by h_a and return to slow time. The target peak lands on its zero-Doppler slot."""
    Ys.require(Stage.RCMC_DONE, "azimuth_compress")
    data = Ys.data * filters.h_a[:, None]
    data = np.fft.ifft(np.fft.ifftshift(data, axes=0), axis=0, norm="ortho")
    image = Ys.advance(data, Stage.IMAGE)
    magnitude = np.abs(data)
    return ImageResult(magnitude=magnitude, peaks=find_peaks(magnitude, peaks), metrics={}, echo=image)


def form_image(
        echo: EchoMatrix, params: RadarParams, geom: ScenarioGeometry,
        filters: Optional[MatchedFilters] = None, fractional_delay: bool = True, rcmc_taps: int = 8,
) -> ImageResult:
    """Run the whole pipeline on a raw echo matrix (down-converting it first if necessary)."""
    if not echo.meta.get("downconverted"):
        echo = downconvert(echo)
    if filters is None:
        filters = matched_filters(params, geom)
    R_sr, _ = track_ranges(geom, np.zeros((0, 3)))

    Yrc = range_compress(echo, params)
    Yd = remove_relay_delay(Yrc, R_sr, params, fractional=fractional_delay)
    Yf = azimuth_fft(Yd)
    Ys = rcmc(Yf, filters, taps=rcmc_taps)
    return azimuth_compress(Ys, filters)
