import pytest
import numpy as np
import numpy.testing as npt

from common.utils import SPEED_OF_LIGHT
from common.model_core import *
from common.channel import ChannelSlot
from common.waveform import compress_rows, delayed_baseband, matched_filters
from common.echo_synth import EchoMatrix, Stage, StageError, synthesize_echo, downconvert
from common.image_metrics import cell_pixels, cut_profile, image_metrics, point_response_metrics
from common.rd_imaging import *


def unit_channels(N):
	slots = [ChannelSlot(n=n, h_sr=np.ones(1, dtype=complex), h_rt=np.ones(1, dtype=complex),
						 sigma2=1e-11, sigma0_2=1e-11, sigma1_2=1e-11) for n in range(N)]
	return slots, [np.ones(1, dtype=complex)] * N


@pytest.fixture(scope="module")
def point_image():
	params = RadarParams()
	geom = build_geometry(params)
	channels, phis = unit_channels(params.N)
	scene = point_scene(geom.Na, geom.Nr)
	echo = synthesize_echo(scene, geom, channels, phis, params, noise=False)
	return params, geom, form_image(echo, params, geom)


def test_point_target_position(point_image):
	params, geom, img = point_image
	n0, q0, _ = img.peaks[0]
	R0, t_zero = closest_approach(geom)
	i, j = geom.Na // 2, geom.Nr // 2
	assert abs(q0 - round(2.0 * R0[i, j] / (SPEED_OF_LIGHT * params.delta_tau))) <= 1
	assert abs(n0 - t_zero[i, j] / params.delta_t) <= 1

	n_pix, q_pix = cell_pixels(geom, params)
	assert abs(n0 - n_pix[i, j]) <= 1 and abs(q0 - q_pix[i, j]) <= 1


def test_point_target_response(point_image):
	params, geom, img = point_image
	n0, q0, _ = img.peaks[0]
	m = point_response_metrics(img.data, (n0, q0), params)

	resolution = SPEED_OF_LIGHT / (2.0 * params.bandwidth)
	assert abs(m["range_width_m"] - resolution) <= 0.2 * resolution
	assert abs(m["pslr_db"] - (-13.26)) <= 1.0


def test_pipeline_meta(point_image):
	params, geom, img = point_image
	assert img.echo.stage == Stage.IMAGE
	assert img.magnitude.shape == (params.N, params.Q)
	assert img.echo.meta["rcmc_taps"] == 8
	assert img.echo.meta["fractional_delay"] is True
	assert "rcmc_clamped" in img.echo.meta
	assert len(img.peaks) <= 10


def test_stage_checks():
	params = RadarParams(N=8, Q=64, T_p=2e-8)
	raw = EchoMatrix(data=np.zeros((8, 64), dtype=complex), meta=dict(f0=params.f0, delta_tau=params.delta_tau, downconverted=False))
	with pytest.raises(StageError, match="down-converted"):
		range_compress(raw, params)
	with pytest.raises(StageError):
		azimuth_fft(raw)
	rc = range_compress(downconvert(raw), params)
	assert rc.stage == Stage.RANGE_COMPRESSED
	with pytest.raises(StageError):
		range_compress(rc, params)


def test_relay_delay_removal():
	params = RadarParams(N=2, Q=256, T_p=2e-8)
	k = 40
	R_sr = k * SPEED_OF_LIGHT / (2.0 * params.bandwidth)
	data = np.zeros((2, 256), dtype=complex)
	data[:, 100 + k] = 1.0
	rc = EchoMatrix(data=data, stage=Stage.RANGE_COMPRESSED, meta=dict(delta_tau=params.delta_tau))

	out = remove_relay_delay(rc, np.array([R_sr, R_sr]), params, fractional=False)
	assert out.stage == Stage.DELAY_REMOVED
	assert out.meta["relay_shift_max"] == k
	expected = np.exp(4j * np.pi * params.f0 * R_sr / SPEED_OF_LIGHT)
	npt.assert_allclose(out.data[:, 100], expected)
	assert np.count_nonzero(out.data[0]) == 1
	# samples shifted in from beyond the row are zero
	assert np.all(out.data[:, 256 - k:] == 0)

	far = np.array([300.0, 300.0])  # 600 samples
	with pytest.raises(ValueError, match="exceeds"):
		remove_relay_delay(rc, far, params)
	with pytest.raises(ValueError, match="relay ranges"):
		remove_relay_delay(rc, np.array([R_sr]), params)


def test_fractional_shift():
	params = RadarParams(N=1, Q=1024)
	rows = np.zeros((1, 1024), dtype=complex)
	npt.assert_allclose(fractional_shift(rows + 1.0, np.array([0.0])), 1.0, atol=1e-12)

	frac = 0.3
	R = (400 + frac) * SPEED_OF_LIGHT / (2.0 * params.bandwidth)
	rc = compress_rows(delayed_baseband(params, R)[None, :], params)
	shifted = fractional_shift(rc, np.array([frac]))
	L = params.pulse_samples
	assert int(np.argmax(np.abs(shifted[0]))) == 400
	assert np.abs(shifted[0, 400]) > 0.95 * L
	assert np.abs(shifted[0, 400]) > np.abs(rc[0, 400])


def test_azimuth_fft_energy():
	rng = np.random.default_rng(0)
	data = rng.standard_normal((16, 8)) + 1j * rng.standard_normal((16, 8))
	Yd = EchoMatrix(data=data, stage=Stage.DELAY_REMOVED)
	Yf = azimuth_fft(Yd)
	npt.assert_allclose(np.sum(np.abs(Yf.data) ** 2), np.sum(np.abs(data) ** 2))


def test_rcmc():
	params = RadarParams(N=64, Q=128)
	geom = build_geometry(params, grid_size=(4, 4), grid_spacing=(0.5, 0.5))
	filters = matched_filters(params, geom)
	shift = migration_shift(filters, params.delta_tau)
	assert shift[params.N // 2] == 0
	assert np.all(shift >= 0)

	Yf = EchoMatrix(data=np.ones((64, 128), dtype=complex), stage=Stage.AZIMUTH_FREQ, meta=dict(delta_tau=params.delta_tau))
	out = rcmc(Yf, filters, taps=8)
	assert out.stage == Stage.RCMC_DONE
	assert out.meta["rcmc_taps"] == 8
	assert out.meta["rcmc_clamped"] >= 0
	with pytest.raises(ValueError, match="even"):
		rcmc(Yf, filters, taps=5)


def test_azimuth_compress():
	params = RadarParams()
	filters = matched_filters(params, build_geometry(params))
	N = params.N
	data = np.zeros((N, 64), dtype=complex)
	data[:, 20] = np.conj(filters.h_a)
	Ys = EchoMatrix(data=data, stage=Stage.RCMC_DONE)
	img = azimuth_compress(Ys, filters)
	assert img.echo.stage == Stage.IMAGE
	assert img.magnitude.shape == (N, 64)
	assert img.peaks[0][:2] == (0, 20)
	npt.assert_allclose(img.magnitude[0, 20], np.sqrt(N))
	with pytest.raises(StageError):
		azimuth_compress(img.echo, filters)


def focus(scene):
	params = RadarParams()
	geom = build_geometry(params)
	channels, phis = unit_channels(params.N)
	echo = synthesize_echo(scene, geom, channels, phis, params, noise=False)
	filters = matched_filters(params, geom)
	return params, geom, filters, form_image(echo, params, geom, filters=filters)


def local_peak(img, n, q, half=3, span=16):
	"""Interpolated range-cut peak near pixel (n, q), free of the scalloping loss of off-grid targets."""
	n, q = int(round(n)), int(round(q))
	window = img.magnitude[n - half:n + half + 1, q - half:q + half + 1]
	dn, dq = np.unravel_index(np.argmax(window), window.shape)
	n, q = n - half + dn, q - half + dq
	return float(cut_profile(img.data[n, q - span:q + span + 1], 16, bandpass=True).max())


def test_multi_point_scene():
	scene = grid3x3_scene(32, 32)
	params, geom, filters, img = focus(scene)
	metrics = image_metrics(img, scene, geom, params, filters.k_a)
	assert metrics["ncc_vs_truth"] >= 0.9

	# all nine targets come out with the same strength
	n_pix, q_pix = cell_pixels(geom, params)
	ii, jj, _ = scene.nonzero()
	peaks = np.array([local_peak(img, n_pix[i, j], q_pix[i, j]) for i, j in zip(ii, jj)])
	npt.assert_allclose(peaks / peaks.max(), 1.0, atol=0.1)


def test_relative_amplitudes():
	g = np.zeros((32, 32), dtype=complex)
	g[16, 8] = 1.0
	g[16, 24] = 0.5j
	params, geom, _, img = focus(Scene(g=g))
	n_pix, q_pix = cell_pixels(geom, params)
	strong = local_peak(img, n_pix[16, 8], q_pix[16, 8])
	weak = local_peak(img, n_pix[16, 24], q_pix[16, 24])
	npt.assert_allclose(weak / strong, 0.5, rtol=0.1)
