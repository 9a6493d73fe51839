import pytest
import numpy as np
import numpy.testing as npt

from common.utils import SPEED_OF_LIGHT
from common.model_core import RadarParams, build_geometry, reference_range
from common.waveform import *


@pytest.fixture
def params():
	return RadarParams()


def test_chirp_sample(params):
	q = np.arange(-2, params.pulse_samples + 2)
	x = chirp_sample(params, q)
	inside = (q >= 0) & (q < params.pulse_samples)
	npt.assert_allclose(np.abs(x[inside]), params.A0)
	assert np.all(x[~inside] == 0)
	assert chirp_sample(params, 0) == pytest.approx(params.A0)


def test_range_filter(params):
	h_r = range_filter(params)
	L = params.pulse_samples
	assert h_r.shape == (params.Q,)
	npt.assert_allclose(np.abs(h_r[:L]), 1.0)
	assert np.all(h_r[L:] == 0)
	q = np.arange(L)
	npt.assert_allclose(h_r[:L] * chirp_sample(params, q) / params.A0, np.exp(2j * np.pi * params.f0 * q * params.delta_tau), atol=1e-9)


def test_fft_compression_matches_direct(params):
	rng = np.random.default_rng(1)
	y = rng.standard_normal(params.Q) + 1j * rng.standard_normal(params.Q)
	fast = compress_rows(y[None, :], params)[0]
	slow = direct_compress(y, params)
	npt.assert_allclose(fast, slow, rtol=0, atol=1e-9 * np.max(np.abs(slow)))


def test_point_compression(params):
	k = 400  # integer delay in samples
	R = k * SPEED_OF_LIGHT / (2.0 * params.bandwidth)
	y = delayed_baseband(params, R, amplitude=2.0)
	out = compress_rows(y[None, :], params)[0]

	assert int(np.argmax(np.abs(out))) == k
	filters = matched_filters(params, build_geometry(params))
	sig = analytic_signatures(params, filters, aperture_time=0.2)
	expected = 2.0 * sig.p_r(k, R) * sig.phi_r(R)
	npt.assert_allclose(out[k], expected, rtol=1e-6)
	npt.assert_allclose(np.abs(out[k]), 2.0 * params.pulse_samples, rtol=1e-9)

	# Energy is concentrated: neighbours of the integer-delay peak are close to the sinc zeros
	assert np.abs(out[k + 1]) < 0.05 * np.abs(out[k])
	assert np.abs(out[k - 1]) < 0.05 * np.abs(out[k])


def test_compression_size(params):
	assert compression_size(params) == 2048  # 1024 + 300 - 1 without wrap


def test_matched_filters(params):
	geom = build_geometry(params)
	f = matched_filters(params, geom)

	npt.assert_allclose(f.k_a, 2.0 * 30.0 ** 2 / (params.wavelength * reference_range(geom)))
	npt.assert_allclose(np.abs(f.h_a), 1.0)
	npt.assert_allclose(np.abs(f.h_r[:params.pulse_samples]), 1.0)
	assert np.all(f.h_r[params.pulse_samples:] == 0)
	assert f.doppler[params.N // 2] == 0
	npt.assert_allclose(f.delta_f, params.prf / params.N)
	npt.assert_allclose(f.h_a, np.exp(-1j * np.pi * f.doppler ** 2 / f.k_a))


def test_azimuth_filter_zero_rate(params):
	f = matched_filters(params, build_geometry(params))
	still = MatchedFilters(h_r=f.h_r, h_a=f.h_a, k_a=0.0, delta_f=f.delta_f, wavelength=f.wavelength,
						   doppler=f.doppler, velocity=0.0, R_ref=f.R_ref)
	with pytest.raises(ValueError, match="zero"):
		azimuth_filter(still)


def test_analytic_signatures(params):
	f = matched_filters(params, build_geometry(params))
	sig = analytic_signatures(params, f, aperture_time=0.2)
	npt.assert_allclose(sig.range_resolution, SPEED_OF_LIGHT / 600e6)
	npt.assert_allclose(sig.azimuth_resolution_time, 1.0 / (f.k_a * 0.2))

	# envelopes peak at the target and vanish at the first null
	assert sig.p_a(1.0, 1.0) == pytest.approx(1.0)
	assert abs(sig.p_a(1.0 + sig.azimuth_resolution_time, 1.0)) < 1e-12
	assert abs(sig.phi_a(10.0, 0.3)) == pytest.approx(1.0)
