"""
Experiment families. Each family is a list of independent points (seed x swept value). Points run
sequentially or in a process pool; results are collected in point order so the artifacts do not depend on
the degree of parallelism. A failing point is recorded and skipped.
"""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, List, Optional
import logging
import traceback

import numpy as np
import pandas as pd
from scipy.stats import spearmanr
from tqdm import tqdm

from common.utils import linear_to_db, next_pow2, params_hash
from common.model_core import (
    RadarParams, cell_positions, make_scene, required_samples, scattering_gain, slot_geometry,
)
from common.channel import sample_channel_slot, sample_channels
from common.aris_opt import (
    SnrModel, compute_snr, aris_power, optimize_slot, optimize_slots, pris_baseline,
    random_pris_baseline, random_baseline_rng,
)
from common.echo_synth import ReflectionVector, synthesize_echo
from common.rd_imaging import form_image
from common.waveform import matched_filters
from common.image_metrics import image_metrics
from lab.App import (
    EXPERIMENTS, aris_options, channel_params, radar_params, resolve_path, scenario_geometry,
)
from lab.artifacts import run_metadata, write_float32, write_json, write_pgm, write_table

log = logging.getLogger('experiments')


@dataclass(eq=False)
class ArtifactSet:
    directory: Path
    files: List[Path] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    failures: List[dict] = field(default_factory=list)
    results: Optional[pd.DataFrame] = None
    summary: Optional[pd.DataFrame] = None


@dataclass(eq=False)
class Point:
    """One unit of work: function name and keyword arguments (both picklable)."""
    label: str
    func: Callable
    kwargs: dict


#
# Shared building blocks
#

def slot_indexes(N: int, stride: int) -> List[int]:
    return list(range(0, N, stride))


def slot_snr_rows(config: dict, seed: int, M: Optional[int] = None, P_s: Optional[float] = None,
                  a_max: Optional[float] = None, slots: Optional[List[int]] = None) -> pd.DataFrame:
    """Optimized ARIS, aligned PRIS and random PRIS SNR for the requested slots of one seed."""
    params = radar_params(config) if P_s is None else radar_params(config, P_s=P_s)
    geom = scenario_geometry(config, params)
    channel = channel_params(config, seed) if M is None else channel_params(config, seed, M=M)
    P_aris = config["aris"]["P_aris"]
    a_max = config["aris"]["a_max"] if a_max is None else a_max
    options = aris_options(config, seed)
    slots = slot_indexes(params.N, config["experiment"]["slot_stride"]) if slots is None else slots

    rows = []
    for n in slots:
        slot = sample_channel_slot(channel, geom, n, seed=seed)
        model = SnrModel.from_slot(slot, params.P_s)
        phi, trace = optimize_slot(model, P_aris, a_max, replace(options, slot=n))
        phi_pris, model_pris = pris_baseline(model, params.P_s + P_aris)
        phi_rand = random_pris_baseline(model_pris, random_baseline_rng(seed, n))
        rows.append(dict(
            seed=seed, slot=n, t=n * params.delta_t, R_sr=slot_geometry(geom, n).R_sr,
            M=channel.M, P_s=params.P_s, a_max=a_max,
            snr_aris_db=float(linear_to_db(compute_snr(phi, model))),
            snr_pris_db=float(linear_to_db(compute_snr(phi_pris, model_pris))),
            snr_random_db=float(linear_to_db(compute_snr(phi_rand, model_pris))),
            power_w=aris_power(phi, model),
            max_amplitude=float(np.max(np.abs(phi))),
            outer_iterations=len(trace.l_history),
            converged=trace.converged,
        ))
    return pd.DataFrame(rows)


def fitted_radar_params(config: dict, geom_velocity: float, aperture_time: Optional[float]) -> RadarParams:
    """Radar parameters with Q raised to the next power of two if the receive window is too short."""
    params = radar_params(config)
    geom = scenario_geometry(config, params, velocity=geom_velocity, aperture_time=aperture_time)
    need = required_samples(params, geom)
    if need > params.Q:
        Q = next_pow2(need)
        log.info(f"Velocity {geom_velocity} m/s needs {need} fast-time samples, raising Q from {params.Q} to {Q}")
        params = radar_params(config, Q=Q)
    return params


def image_point(config: dict, seed: int, variant: str, a_max: Optional[float] = None,
                velocity: Optional[float] = None, aperture_time: Optional[float] = None,
                params: Optional[RadarParams] = None, keep_echo: bool = False) -> dict:
    """
    Synthesize and focus the configured scene with one surface variant.

    :param variant: 'aris' (per-slot optimized) or 'pris' (phase-aligned, whole budget on the radar)
    :return: metrics, magnitude image and the parameters actually used
    """
    params = radar_params(config) if params is None else params
    overrides = {}
    if velocity is not None:
        overrides["velocity"] = velocity
    if aperture_time is not None:
        overrides["aperture_time"] = aperture_time
    geom = scenario_geometry(config, params, **overrides)
    channel = channel_params(config, seed)
    scene_conf = config["scene"]
    raster = resolve_path(scene_conf["raster_file"]) if scene_conf["raster_file"] else None
    scene = make_scene(scene_conf["pattern"], geom.Na, geom.Nr, raster_file=raster)
    gain = scattering_gain(scene_conf["rcs_dbsm"], params.wavelength)
    scene = scene.scaled(gain)

    cells = None
    if config["echo"]["per_cell_channels"]:
        ii, jj, _ = scene.nonzero()
        cells = cell_positions(geom)[ii, jj]
    channels = sample_channels(channel, geom, seed=seed, cells=cells)
    P_aris = config["aris"]["P_aris"]

    if variant == "aris":
        a_max = config["aris"]["a_max"] if a_max is None else a_max
        models = [SnrModel.from_slot(slot, params.P_s) for slot in channels]
        results = optimize_slots(models, P_aris, a_max, aris_options(config, seed))
        phis = [ReflectionVector(phi, a_max, P_aris).validate(model) for (phi, _), model in zip(results, models)]
        echo_params = params
    elif variant == "pris":
        total = params.P_s + P_aris
        phis = [pris_baseline(SnrModel.from_slot(slot, params.P_s), total)[0] for slot in channels]
        channels = [replace(slot, sigma0_2=0.0, sigma1_2=0.0) for slot in channels]
        echo_params = replace(params, P_s=total, A0=config["radar"]["A0"])
    else:
        raise ValueError(f"Unknown surface variant '{variant}'. Use 'aris' or 'pris'.")

    echo = synthesize_echo(
        scene, geom, channels, phis, echo_params,
        noise=config["echo"]["noise"], seed=seed,
        once_reflected_noise=config["echo"]["once_reflected_noise"],
        per_cell=config["echo"]["per_cell_channels"],
        params_hash=params_hash(config),
    )
    filters = matched_filters(echo_params, geom)
    img = form_image(echo, echo_params, geom, filters=filters,
                     fractional_delay=config["imaging"]["fractional_delay"], rcmc_taps=config["imaging"]["rcmc_taps"])
    metrics = image_metrics(img, scene, geom, echo_params, filters.k_a)
    result = dict(
        metrics=dict(seed=seed, variant=variant, a_max=a_max, velocity=geom.velocity, Q=params.Q,
                     scatter_gain_db=float(linear_to_db(gain ** 2)),
                     aperture_time=geom.aperture_time, rcmc_clamped=img.echo.meta.get("rcmc_clamped", 0), **metrics),
        magnitude=img.magnitude,
    )
    if keep_echo:
        result["echo"] = echo
    return result


#
# Point execution
#

def _run_point(point: Point):
    try:
        return True, point.func(**point.kwargs)
    except Exception as e:
        log.warning(f"Point {point.label} failed: {e}")
        return False, dict(point=point.label, error=f"{type(e).__name__}: {e}", traceback=traceback.format_exc())


def run_points(points: List[Point], workers: int = 1, progress: bool = True, desc: str = "POINTS") -> list:
    """Results in point order. Failed points yield (False, failure record)."""
    if workers > 1 and len(points) > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            futures = [executor.submit(_run_point, p) for p in points]
            return [f.result() for f in tqdm(futures, desc=desc, disable=not progress)]
    return [_run_point(p) for p in tqdm(points, desc=desc, disable=not progress)]


def collect_frames(outcomes: list, failures: list) -> pd.DataFrame:
    frames = []
    for ok, value in outcomes:
        if ok:
            frames.append(value)
        else:
            failures.append(value)
    return pd.concat(frames, ignore_index=True) if frames else pd.DataFrame()


#
# Families
#

def snr_vs_time(config: dict, workers: int, progress: bool, failures: list):
    seeds = range(config["seed"], config["seed"] + config["experiment"]["seeds"])
    points = [Point(f"seed={s}", slot_snr_rows, dict(config=config, seed=s)) for s in seeds]
    results = collect_frames(run_points(points, workers, progress, "SEEDS"), failures)
    if results.empty:
        return results, pd.DataFrame(), {}

    summary = []
    for seed, df in results.groupby("seed", sort=True):
        rho = spearmanr(df["R_sr"], df["snr_aris_db"])[0] if len(df) > 2 else np.nan
        summary.append(dict(
            seed=seed,
            snr_aris_db=df["snr_aris_db"].mean(), snr_pris_db=df["snr_pris_db"].mean(),
            snr_random_db=df["snr_random_db"].mean(),
            gain_db=(df["snr_aris_db"] - df["snr_pris_db"]).mean(),
            spearman_distance=rho,
        ))
    summary = pd.DataFrame(summary)
    return results, summary, dict(mean_gain_db=float(summary["gain_db"].mean()))


def snr_vs_elements(config: dict, workers: int, progress: bool, failures: list):
    """One ARIS column per amplitude cap (snr_aris_db_a<cap>) next to the aligned and random PRIS baselines."""
    seeds = range(config["seed"], config["seed"] + config["experiment"]["seeds"])
    a_max_values = config["experiment"]["a_max_values"]
    points = [
        Point(f"M={M} a_max={a} seed={s}", slot_snr_rows, dict(config=config, seed=s, M=M, a_max=a))
        for M in config["experiment"]["elements"] for a in a_max_values for s in seeds
    ]
    results = collect_frames(run_points(points, workers, progress, "ELEMENTS"), failures)
    if results.empty:
        return results, pd.DataFrame(), {}

    aris = results.pivot_table(index="M", columns="a_max", values="snr_aris_db", aggfunc="mean").sort_index()
    aris.columns = [f"snr_aris_db_a{a:g}" for a in aris.columns]
    # PRIS baselines do not depend on the cap
    baselines = results.groupby("M", sort=True)[["snr_pris_db", "snr_random_db"]].mean()
    summary = aris.join(baselines).reset_index()
    top = f"snr_aris_db_a{max(a_max_values):g}"
    if top in summary:
        summary["gap_random_db"] = summary[top] - summary["snr_random_db"]
    summary["gap_pris_random_db"] = summary["snr_pris_db"] - summary["snr_random_db"]
    return results, summary, dict(a_max_values=list(a_max_values))


def decade_slope(x: np.ndarray, y: np.ndarray, top: bool) -> float:
    """dB per decade of x over the first (or last) decade of the sweep."""
    logx = np.log10(x)
    if top:
        i1 = len(x) - 1
        i0 = int(np.searchsorted(logx, logx[i1] - 1.0 + 1e-12, side="left"))
        i0 = min(i0, i1 - 1)
    else:
        i0 = 0
        i1 = int(np.searchsorted(logx, logx[0] + 1.0 - 1e-12, side="left"))
        i1 = max(min(i1, len(x) - 1), 1)
    return float((y[i1] - y[i0]) / (logx[i1] - logx[i0]))


def snr_vs_power(config: dict, workers: int, progress: bool, failures: list):
    seeds = range(config["seed"], config["seed"] + config["experiment"]["seeds"])
    points = [
        Point(f"a_max={a} P_s={p} seed={s}", slot_snr_rows, dict(config=config, seed=s, P_s=p, a_max=a))
        for a in config["experiment"]["a_max_values"] for p in config["experiment"]["powers"] for s in seeds
    ]
    results = collect_frames(run_points(points, workers, progress, "POWERS"), failures)
    if results.empty:
        return results, pd.DataFrame(), {}
    summary = results.groupby(["a_max", "P_s"], sort=True)[["snr_aris_db", "snr_pris_db"]].mean().reset_index()

    saturation = {}
    for a_max, df in summary.groupby("a_max", sort=True):
        if len(df) < 2:
            continue
        x, y = df["P_s"].to_numpy(), df["snr_aris_db"].to_numpy()
        bottom, top = decade_slope(x, y, top=False), decade_slope(x, y, top=True)
        saturation[str(a_max)] = dict(slope_bottom_db=bottom, slope_top_db=top,
                                      ratio=top / bottom if bottom != 0 else np.nan)
    return results, summary, dict(saturation=saturation)


IMAGE_SUMMARY = ["ncc_vs_truth", "ncc_cells", "peak_to_noise_db", "entropy"]


def image_family(config: dict, workers: int, progress: bool, failures: list, out: Path):
    seeds = range(config["seed"], config["seed"] + config["experiment"]["seeds"])
    points = [
        Point(f"aris a_max={a} seed={s}", image_point, dict(config=config, seed=s, variant="aris", a_max=a))
        for a in config["experiment"]["a_max_values"] for s in seeds
    ]
    points += [Point(f"pris seed={s}", image_point, dict(config=config, seed=s, variant="pris")) for s in seeds]
    outcomes = run_points(points, workers, progress, "IMAGES")
    results = collect_images(outcomes, failures, out, lambda m: f"{m['variant']}" + (f"_a{m['a_max']:g}" if m["a_max"] else ""))
    if results.empty:
        return results, pd.DataFrame(), {}
    summary = results.groupby(["variant", "a_max"], dropna=False, sort=True)[IMAGE_SUMMARY].mean().reset_index()
    return results, summary, {}


def velocity_sweep(config: dict, workers: int, progress: bool, failures: list, out: Path):
    """Aperture time is held at the value of the configured base velocity for every swept velocity."""
    base = radar_params(config)
    aperture = scenario_geometry(config, base).aperture_time
    seeds = range(config["seed"], config["seed"] + config["experiment"]["seeds"])
    points = []
    q_raised = {}
    for v in config["experiment"]["velocities"]:
        params = fitted_radar_params(config, v, aperture)
        if params.Q != base.Q:
            q_raised[str(v)] = params.Q
        points += [
            Point(f"v={v} seed={s}", image_point,
                  dict(config=config, seed=s, variant="aris", velocity=v, aperture_time=aperture, params=params))
            for s in seeds
        ]
    outcomes = run_points(points, workers, progress, "VELOCITIES")
    results = collect_images(outcomes, failures, out, lambda m: f"v{m['velocity']:g}")
    if results.empty:
        return results, pd.DataFrame(), {}
    summary = results.groupby("velocity", sort=True)[IMAGE_SUMMARY].mean().reset_index()
    return results, summary, dict(aperture_time=aperture, aperture_held_fixed=True, q_raised=q_raised)


def collect_images(outcomes: list, failures: list, out: Path, stem: Callable) -> pd.DataFrame:
    rows = []
    for ok, value in outcomes:
        if not ok:
            failures.append(value)
            continue
        m = value["metrics"]
        name = f"image_{stem(m)}_seed{m['seed']}"
        write_pgm(value["magnitude"], out / f"{name}.pgm")
        write_float32(value["magnitude"], out / f"{name}.f32", seed=m["seed"], variant=m["variant"])
        rows.append(m)
    return pd.DataFrame(rows)


FAMILIES = {
    "snr-vs-time": snr_vs_time,
    "snr-vs-elements": snr_vs_elements,
    "snr-vs-power": snr_vs_power,
    "image": image_family,
    "velocity-sweep": velocity_sweep,
}


def run_experiment(config: dict, name: Optional[str] = None, out_dir: Optional[Path] = None,
                   workers: Optional[int] = None, progress: bool = True) -> ArtifactSet:
    """
    Run one experiment family and write results.csv, summary.csv, images and metadata.json
    into <out_dir>/<name>.
    """
    name = name or config["experiment"]["name"]
    if name not in FAMILIES:
        raise ValueError(f"Unknown experiment '{name}'. Use one of {', '.join(EXPERIMENTS)}")
    workers = config["experiment"]["workers"] if workers is None else workers
    out = Path(out_dir or config["out_dir"]) / name
    out.mkdir(parents=True, exist_ok=True)

    failures = []
    family = FAMILIES[name]
    if name in ("image", "velocity-sweep"):
        results, summary, extra = family(config, workers, progress, failures, out)
    else:
        results, summary, extra = family(config, workers, progress, failures)

    artifacts = ArtifactSet(directory=out, failures=failures, results=results, summary=summary)
    if not results.empty:
        artifacts.files.append(write_table(results, out / "results.csv"))
    if not summary.empty:
        artifacts.files.append(write_table(summary, out / "summary.csv"))
    artifacts.files.extend(sorted(out.glob("image_*")))

    metadata = run_metadata(config, params_hash(config), experiment=name, failures=failures, **extra)
    artifacts.metadata = metadata
    artifacts.files.append(write_json(metadata, out / "metadata.json"))
    if failures:
        log.warning(f"Experiment '{name}': {len(failures)} point(s) failed, see metadata.json")
    return artifacts
