import json

import pytest
import numpy as np
import pandas as pd

from lab.App import normalize_config, parse_config, resolve_path, scenario_geometry, radar_params
from lab.artifacts import read_table, to_gray8, write_float32, write_pgm, write_table
from lab.experiments import *


def small_config(**sections):
	with open(resolve_path("configs/config-smoke.json"), encoding="utf-8") as f:
		conf = parse_config(f.read())
	conf["experiment"].update(seeds=1, slot_stride=64)
	conf["aris"]["max_outer"] = 5
	for key, value in sections.items():
		conf.setdefault(key, {}).update(value)
	return normalize_config(conf)


def test_snr_rows():
	config = small_config()
	df = slot_snr_rows(config, seed=0)
	assert list(df["slot"]) == [0, 64, 128, 192]
	assert np.all(df["power_w"] <= config["aris"]["P_aris"] * (1 + 1e-6))
	assert np.all(df["max_amplitude"] <= config["aris"]["a_max"] * (1 + 1e-9))
	assert np.all(df["snr_aris_db"] > df["snr_pris_db"])
	assert np.all(df["snr_pris_db"] >= df["snr_random_db"])
	assert np.all(np.diff(df["R_sr"]) > 0)


def test_snr_vs_time_is_deterministic(tmp_path):
	config = small_config(experiment=dict(seeds=2, slot_stride=16))
	first = run_experiment(config, "snr-vs-time", out_dir=tmp_path / "a", workers=1, progress=False)
	second = run_experiment(config, "snr-vs-time", out_dir=tmp_path / "b", workers=2, progress=False)

	a = (first.directory / "results.csv").read_bytes()
	b = (second.directory / "results.csv").read_bytes()
	assert a == b
	assert len(first.results) == 2 * 16
	assert list(first.summary["seed"]) == [0, 1]
	assert not first.failures

	meta = json.loads((first.directory / "metadata.json").read_text())
	assert meta["experiment"] == "snr-vs-time"
	assert meta["seed"] == config["seed"]
	assert set(meta) >= {"config", "params_hash", "versions", "created", "mean_gain_db"}
	assert meta["mean_gain_db"] >= 10.0
	# SNR falls as the radar -> ARIS distance grows
	assert np.all(first.summary["spearman_distance"] < 0)


def test_failed_points_are_recorded():
	points = [
		Point("ok", slot_indexes, dict(N=8, stride=4)),
		Point("bad", slot_indexes, dict(N=8, stride=0)),
		Point("ok again", slot_indexes, dict(N=4, stride=2)),
	]
	outcomes = run_points(points, workers=1, progress=False)
	assert outcomes[0] == (True, [0, 4])
	assert outcomes[2] == (True, [0, 2])
	ok, failure = outcomes[1]
	assert not ok
	assert failure["point"] == "bad"
	assert failure["error"].startswith("ValueError")
	assert "Traceback" in failure["traceback"]


def test_unknown_experiment(tmp_path):
	with pytest.raises(ValueError, match="Unknown experiment"):
		run_experiment(small_config(), "snr-vs-weather", out_dir=tmp_path)


def test_elements_per_amplitude_cap(tmp_path):
	config = small_config(experiment=dict(elements=[4, 8], a_max_values=[5.0, 20.0]))
	artifacts = run_experiment(config, "snr-vs-elements", out_dir=tmp_path, progress=False)
	summary = artifacts.summary
	assert list(summary["M"]) == [4, 8]
	assert {"snr_aris_db_a5", "snr_aris_db_a20", "snr_pris_db", "snr_random_db", "gap_random_db"} <= set(summary.columns)
	assert len(artifacts.results) == 2 * 2 * 4
	assert artifacts.metadata["a_max_values"] == [5.0, 20.0]

	# a higher cap helps while the budget is not binding, and more elements help for every cap
	assert np.all(summary["snr_aris_db_a20"] > summary["snr_aris_db_a5"])
	assert np.all(np.diff(summary["snr_aris_db_a5"]) > 0)
	assert np.all(np.diff(summary["snr_aris_db_a20"]) > 0)
	assert np.all(summary["gap_random_db"] > 0)
	assert read_table(tmp_path / "snr-vs-elements" / "summary.csv").shape == summary.shape


def test_elements_gap_widens(tmp_path):
	# cap 5 keeps every slot amplitude-limited, where the optimized SNR grows as M^4 and the random one as M^2
	config = small_config(experiment=dict(seeds=2, slot_stride=4, elements=[8, 16, 32, 64], a_max_values=[5.0]))
	summary = run_experiment(config, "snr-vs-elements", out_dir=tmp_path, progress=False).summary
	assert list(summary["M"]) == [8, 16, 32, 64]
	assert np.all(np.diff(summary["snr_aris_db_a5"]) > 0)
	assert np.all(np.diff(summary["gap_random_db"]) > 0)
	assert np.all(np.diff(summary["gap_pris_random_db"]) > 0)


def test_power_saturation_metadata(tmp_path):
	config = small_config(experiment=dict(powers=[1.0, 10.0, 100.0], a_max_values=[5.0]))
	artifacts = run_experiment(config, "snr-vs-power", out_dir=tmp_path, progress=False)
	saturation = artifacts.metadata["saturation"]
	assert set(saturation) == {"5.0"}
	assert set(saturation["5.0"]) == {"slope_bottom_db", "slope_top_db", "ratio"}
	assert len(artifacts.results) == 3 * 4


def test_power_saturates(tmp_path):
	config = small_config(
		channel=dict(M=32), aris=dict(max_outer=30),
		experiment=dict(seeds=2, powers=[1.0, 10.0, 100.0, 1000.0], a_max_values=[20.0]),
	)
	artifacts = run_experiment(config, "snr-vs-power", out_dir=tmp_path, progress=False)
	saturation = artifacts.metadata["saturation"]["20.0"]
	# SNR follows P_s while the cap binds and stops following it once the ARIS budget binds
	assert saturation["slope_bottom_db"] > 5.0
	assert saturation["ratio"] < 0.25


def test_decade_slope():
	x = np.array([1.0, 10.0, 100.0, 1000.0])
	y = np.array([0.0, 10.0, 15.0, 16.0])
	assert decade_slope(x, y, top=False) == 10.0
	assert decade_slope(x, y, top=True) == 1.0


def test_velocity_raises_receive_window():
	config = normalize_config({})
	aperture = scenario_geometry(config, radar_params(config)).aperture_time
	assert fitted_radar_params(config, 30.0, aperture).Q == 1024
	assert fitted_radar_params(config, 120.0, aperture).Q == 2048


def run_images(config, tmp_path, name="image"):
	artifacts = run_experiment(config, name, out_dir=tmp_path, progress=False)
	assert not artifacts.failures
	return artifacts


def test_image_variants(tmp_path):
	config = small_config(experiment=dict(seeds=2, a_max_values=[5.0, 20.0]), aris=dict(max_outer=3))
	artifacts = run_images(config, tmp_path)
	assert len(artifacts.results) == 3 * 2
	assert np.all(artifacts.results["scatter_gain_db"] > 60.0)

	summary = artifacts.summary
	mean = lambda variant, a_max, key: float(summary[(summary["variant"] == variant) & (
		summary["a_max"].isna() if a_max is None else summary["a_max"] == a_max)][key].iloc[0])

	# the focused scene stands above the noise, and the image follows the slot SNR ordering
	assert mean("aris", 20.0, "ncc_vs_truth") > 0.4
	assert mean("aris", 20.0, "ncc_vs_truth") > mean("pris", None, "ncc_vs_truth") + 0.2
	assert mean("aris", 20.0, "peak_to_noise_db") > mean("aris", 5.0, "peak_to_noise_db") + 6.0
	assert mean("aris", 5.0, "peak_to_noise_db") > mean("pris", None, "peak_to_noise_db") + 6.0

	out = tmp_path / "image"
	for seed in (0, 1):
		for name in (f"image_aris_a20_seed{seed}", f"image_aris_a5_seed{seed}", f"image_pris_seed{seed}"):
			assert (out / f"{name}.pgm").exists()
			assert (out / f"{name}.f32").stat().st_size == 256 * 1024 * 4
			sidecar = json.loads((out / f"{name}.json").read_text())
			assert sidecar["rows"] == 256 and sidecar["cols"] == 1024


def test_noise_free_images(tmp_path):
	config = small_config(echo=dict(noise=False), experiment=dict(seeds=2, a_max_values=[20.0]), aris=dict(max_outer=3))
	results = run_images(config, tmp_path).results
	assert len(results) == 4
	assert np.all(results["ncc_vs_truth"] >= 0.7)


def test_images_are_deterministic(tmp_path):
	config = small_config(experiment=dict(a_max_values=[20.0]), aris=dict(max_outer=2))
	first = run_experiment(config, "image", out_dir=tmp_path / "a", workers=1, progress=False)
	second = run_experiment(config, "image", out_dir=tmp_path / "b", workers=2, progress=False)
	names = sorted(p.name for p in first.directory.glob("image_*"))
	assert names == sorted(p.name for p in second.directory.glob("image_*"))
	assert "image_pris_seed0.f32" in names
	for name in names + ["results.csv"]:
		assert (first.directory / name).read_bytes() == (second.directory / name).read_bytes()


def test_velocity_degrades_images(tmp_path):
	# a smaller cross section lets the noise set the image quality at every speed
	config = small_config(experiment=dict(seeds=2, velocities=[30.0, 60.0, 90.0]), aris=dict(max_outer=3),
						  scene=dict(rcs_dbsm=20.0))
	artifacts = run_images(config, tmp_path, "velocity-sweep")
	summary = artifacts.summary
	assert list(summary["velocity"]) == [30.0, 60.0, 90.0]
	assert artifacts.metadata["aperture_held_fixed"]
	# the radar -> ARIS distance at mid-track grows with the speed
	assert np.all(np.diff(summary["peak_to_noise_db"]) < 0)
	assert np.all(np.diff(summary["ncc_vs_truth"]) < 0.02)
	assert summary["ncc_vs_truth"].iloc[0] > summary["ncc_vs_truth"].iloc[-1]


def test_image_point_rejects_unknown_variant():
	with pytest.raises(ValueError, match="variant"):
		image_point(small_config(), seed=0, variant="mirror")


def test_artifact_writers(tmp_path):
	df = pd.DataFrame(dict(a=[1, 2], b=[0.5, 0.25]))
	write_table(df, tmp_path / "t.csv")
	write_table(df, tmp_path / "t.parquet")
	pd.testing.assert_frame_equal(read_table(tmp_path / "t.csv"), df)
	pd.testing.assert_frame_equal(read_table(tmp_path / "t.parquet"), df)
	with pytest.raises(ValueError, match="extension"):
		write_table(df, tmp_path / "t.xlsx")
	assert not list(tmp_path.glob(".*.tmp"))

	magnitude = np.array([[0.0, 1.0], [2.0, 4.0]])
	assert list(to_gray8(magnitude).ravel()) == [0, 64, 128, 255]
	assert not to_gray8(np.ones((2, 2))).any()
	path = write_pgm(magnitude, tmp_path / "m.pgm")
	assert path.read_bytes() == b"P5\n2 2\n255\n" + bytes([0, 64, 128, 255])

	write_float32(magnitude, tmp_path / "m.f32", seed=1)
	data = np.fromfile(tmp_path / "m.f32", dtype="<f4").reshape(2, 2)
	assert np.array_equal(data, magnitude)
	sidecar = json.loads((tmp_path / "m.json").read_text())
	assert sidecar["seed"] == 1 and sidecar["dtype"] == "float32"
