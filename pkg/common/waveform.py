from dataclasses import dataclass
from typing import Union

import numpy as np

from common.utils import SPEED_OF_LIGHT, next_pow2
from common.model_core import RadarParams, ScenarioGeometry, reference_range


@dataclass(frozen=True, eq=False)
class MatchedFilters:
    h_r: np.ndarray  # length Q range filter
    h_a: np.ndarray  # length N azimuth filter over centered Doppler bins
    k_a: float  # azimuth modulation rate (Hz/s)
    delta_f: float  # Doppler bin width (Hz)
    wavelength: float
    doppler: np.ndarray  # centered Doppler frequencies of the h_a bins (Hz)
    velocity: float
    R_ref: float


#
# Transmitted pulse
#

def chirp_sample(params: RadarParams, q: Union[int, np.ndarray]):
    """
    Transmitted chirp A0*w_r(q)*exp{j2*pi*f0*q*dtau + j*pi*k_r*(q*dtau)^2} where w_r is the rectangular
    envelope over the pulse duration.
    """
    q = np.asarray(q)
    t = q * params.delta_tau
    inside = (q >= 0) & (q < params.pulse_samples)
    value = np.where(
        inside,
        params.A0 * np.exp(1j * (2.0 * np.pi * params.f0 * t + np.pi * params.k_r * t ** 2)),
        0.0,
    )
    return value[()] if value.ndim == 0 else value


def baseband_chirp(params: RadarParams, length: int = None) -> np.ndarray:
    """Unit-amplitude down-converted pulse exp{j*pi*k_r*(q*dtau)^2} over the pulse support."""
    length = params.Q if length is None else length
    q = np.arange(length)
    t = q * params.delta_tau
    return np.where(q < params.pulse_samples, np.exp(1j * np.pi * params.k_r * t ** 2), 0.0)


def delayed_baseband(params: RadarParams, R: float, amplitude: complex = 1.0, length: int = None) -> np.ndarray:
    """
    Down-converted echo of a point at two-way path 2R: amplitude*exp{-j*4*pi*f0*R/c + j*pi*k_r*r^2}
    with r = q*dtau - 2R/c inside the pulse support.
    """
    length = params.Q if length is None else length
    tau = 2.0 * R / SPEED_OF_LIGHT
    q = np.arange(length)
    r = q * params.delta_tau - tau
    # support in whole samples, so an integer delay does not lose its first sample to rounding
    d = tau / params.delta_tau
    inside = (q >= np.ceil(d - 1e-9)) & (q < np.ceil(d + params.pulse_samples - 1e-9))
    phase = -2.0 * np.pi * params.f0 * tau + np.pi * params.k_r * r ** 2
    return np.where(inside, amplitude * np.exp(1j * phase), 0.0)


def range_filter(params: RadarParams) -> np.ndarray:
    """h_r(q) = exp{-j*pi*k_r*(q*dtau)^2} over the pulse support, zero elsewhere."""
    return np.conj(baseband_chirp(params))


def compression_size(params: RadarParams) -> int:
    """FFT length without circular wrap for a Q-sample row and the pulse."""
    return next_pow2(params.Q + params.pulse_samples - 1)


def compress_rows(Y: np.ndarray, params: RadarParams) -> np.ndarray:
    """
    Match-filter every row: out[q] = sum_p Y[q+p] * h_r[p].

    Computed in the frequency domain. The filter is applied as a correlation (not a literal convolution
    with the unreversed h_r) so that a target delayed by d samples peaks at sample d.
    """
    L = params.pulse_samples
    nfft = compression_size(params)
    ref = np.conj(range_filter(params)[:L])
    spectrum = np.fft.fft(Y, n=nfft, axis=-1) * np.conj(np.fft.fft(ref, n=nfft))
    out = np.fft.ifft(spectrum, axis=-1)
    return out[..., :Y.shape[-1]]


def direct_compress(y: np.ndarray, params: RadarParams) -> np.ndarray:
    """Time-domain version of compress_rows for one row."""
    h_r = range_filter(params)
    Q = len(y)
    out = np.zeros(Q, dtype=complex)
    for p in range(params.pulse_samples):
        out[:Q - p] += y[p:] * h_r[p]
    return out


#
# Azimuth
#

def doppler_bins(N: int, delta_t: float) -> np.ndarray:
    """Centered Doppler frequencies, bin N//2 is zero."""
    return np.fft.fftshift(np.fft.fftfreq(N, delta_t))


def azimuth_rate(wavelength: float, velocity: float, R_ref: float) -> float:
    return 2.0 * velocity ** 2 / (wavelength * R_ref)


def azimuth_filter(filters: MatchedFilters) -> np.ndarray:
    """h_a = exp{-j*pi*f^2/k_a} over centered Doppler bins."""
    if filters.k_a == 0:
        raise ValueError("Azimuth modulation rate is zero (zero platform velocity)")
    return np.exp(-1j * np.pi * filters.doppler ** 2 / filters.k_a)


def matched_filters(params: RadarParams, geom: ScenarioGeometry) -> MatchedFilters:
    R_ref = reference_range(geom)
    wavelength = params.wavelength
    k_a = azimuth_rate(wavelength, geom.velocity, R_ref)
    doppler = doppler_bins(params.N, params.delta_t)
    filters = MatchedFilters(
        h_r=range_filter(params), h_a=np.ones(params.N, dtype=complex), k_a=k_a,
        delta_f=1.0 / (params.N * params.delta_t), wavelength=wavelength, doppler=doppler,
        velocity=geom.velocity, R_ref=R_ref,
    )
    object.__setattr__(filters, "h_a", azimuth_filter(filters))
    return filters


#
# Analytic point-response signatures
#

@dataclass(frozen=True)
class AnalyticSignatures:
    """
    Closed-form point response after compression.

    The compressed pulse of a [0, B) chirp is a sinc modulated by exp{j*pi*u}, u being the offset from
    the delay in samples. p_r carries the compression gain L (the peak value for a unit pulse).
    """
    f0: float
    bandwidth: float
    delta_tau: float
    pulse_samples: int
    k_a: float
    aperture_time: float

    def p_r(self, q, R):
        u = np.asarray(q) - 2.0 * np.asarray(R) / (SPEED_OF_LIGHT * self.delta_tau)
        return self.pulse_samples * np.sinc(u) * np.exp(1j * np.pi * u)

    def phi_r(self, R):
        return np.exp(-4j * np.pi * self.f0 * np.asarray(R) / SPEED_OF_LIGHT)

    def p_a(self, t, t_zero):
        """Normalized azimuth envelope of a target with rectangular aperture T_a."""
        return np.sinc(self.k_a * self.aperture_time * (np.asarray(t) - np.asarray(t_zero)))

    def phi_a(self, f, t):
        return np.exp(2j * np.pi * np.asarray(f) * np.asarray(t))

    @property
    def range_resolution(self) -> float:
        return SPEED_OF_LIGHT / (2.0 * self.bandwidth)

    @property
    def azimuth_resolution_time(self) -> float:
        return 1.0 / (abs(self.k_a) * self.aperture_time)


def analytic_signatures(params: RadarParams, filters: MatchedFilters, aperture_time: float) -> AnalyticSignatures:
    return AnalyticSignatures(
        f0=params.f0, bandwidth=params.bandwidth, delta_tau=params.delta_tau,
        pulse_samples=params.pulse_samples, k_a=filters.k_a, aperture_time=aperture_time,
    )
