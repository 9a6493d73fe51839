from pathlib import Path
from typing import List, Optional
import copy
import json
import re

from common.utils import db_to_linear, dbm_to_watts
from common.model_core import RadarParams, ScenarioGeometry, build_geometry
from common.channel import ChannelParams
from common.aris_opt import OptimizerOptions

PACKAGE_ROOT = Path(__file__).parent.parent

SCENE_PATTERNS = ("point", "grid3x3", "house", "raster")
EXPERIMENTS = ("snr-vs-time", "snr-vs-elements", "snr-vs-power", "image", "velocity-sweep")


class ConfigError(ValueError):
    """Unreadable or invalid configuration. All violations are collected in errors."""

    def __init__(self, errors: List[str], line: Optional[int] = None, column: Optional[int] = None):
        self.errors = list(errors)
        self.line = line
        self.column = column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"Invalid configuration{where}: " + "; ".join(self.errors))


class App:
    """Globally visible variables."""

    config_file = None  # file the current configuration was loaded from
    config_text = None  # its raw text, comments included

    #
    # Constant configuration parameters
    #
    config = {
        "seed": 0,
        "out_dir": "RUNS",
        "threads": 0,  # numba threads, 0 keeps the numba default

        # =============
        # === RADAR ===
        "radar": {
            "f0": 6e9,  # carrier (Hz)
            "bandwidth": 300e6,  # Hz, also the fast-time sampling rate
            "T_p": 1e-6,  # pulse duration (s)
            "prf": 720.0,  # Hz
            "N": 512,  # slow-time slots
            "Q": 1024,  # fast-time samples per slot
            "P_s": 85.0,  # radar transmit power (W)
            "A0": None,  # chirp amplitude, sqrt(P_s) if null
        },

        # ================
        # === GEOMETRY ===
        "geometry": {
            "initial_distance": 5.0,  # radar -> UAV at slot 0 (m)
            "uav_height": 20.0,
            "radar_height": None,  # mast height, equal to the UAV height if null
            "standoff": 300.0,  # UAV -> grid center distance at mid-track (m)
            "velocity": 30.0,  # m/s
            "grid_size": [32, 32],  # [Na, Nr]
            "grid_spacing": [0.5, 0.5],  # [dx, dy] (m)
            "aperture_time": None,  # azimuth window (s), longest fully observed window if null
        },

        # ===============
        # === CHANNEL ===
        "channel": {
            "M": 32,  # ARIS elements
            "kappa_db": 3.0,  # Rician factor
            "eps_sr": 2.2,  # path-loss exponents
            "eps_rt": 2.2,
            "C0_db": -30.0,  # path loss at 1 m
            "noise_dbm": -80.0,  # receiver noise
            "sigma0_dbm": -80.0,  # ARIS noise, return path
            "sigma1_dbm": -80.0,  # ARIS noise, forward path
        },

        # ============
        # === ARIS ===
        "aris": {
            "P_aris": 15.0,  # ARIS power budget (W)
            "a_max": 20.0,  # amplitude cap per element
            "max_outer": 100,
            "tol": 1e-6,  # relative SNR change
            "damping_attempts": 10,
            "init_fill": 0.9,  # initial power share of P_aris
        },

        # ============
        # === ECHO ===
        "echo": {
            "noise": True,
            "once_reflected_noise": True,
            "per_cell_channels": False,
        },

        # ===============
        # === IMAGING ===
        "imaging": {
            "rcmc_taps": 8,
            "fractional_delay": True,
        },

        # =============
        # === SCENE ===
        "scene": {
            "pattern": "point",  # point grid3x3 house raster
            "raster_file": None,  # 8-bit PGM for the raster pattern
            "rcs_dbsm": 30.0,  # radar cross section of every scatterer, unit coefficients if null
        },

        # ==================
        # === EXPERIMENT ===
        "experiment": {
            "name": "snr-vs-time",
            "seeds": 20,
            "slot_stride": 8,  # optimize every k-th slot in SNR experiments
            "elements": [8, 16, 32, 64],
            "powers": [1.0, 3.0, 10.0, 30.0, 100.0, 300.0, 1000.0],
            "a_max_values": [5.0, 20.0],
            "velocities": [30.0, 60.0, 90.0, 120.0],
            "workers": 1,
        },
    }


DEFAULTS = copy.deepcopy(App.config)


def strip_comments(text: str) -> str:
    """Remove everything from // to the line end except inside strings."""
    return re.sub(r'("(?:\\.|[^"\\])*")|//[^\n]*', lambda m: m.group(1) or "", text)


def parse_config(text: str) -> dict:
    text = strip_comments(text)
    if not text.strip():
        return {}
    try:
        conf_json = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError([e.msg], line=e.lineno, column=e.colno) from e
    if not isinstance(conf_json, dict):
        raise ConfigError([f"Top level must be an object, got {type(conf_json).__name__}"])
    return conf_json


def normalize_config(conf: Optional[dict]) -> dict:
    """Defaults overlaid with the given (partial) configuration, validated."""
    conf = conf or {}
    errors = unknown_keys(conf, DEFAULTS)
    if errors:
        raise ConfigError(errors)
    result = copy.deepcopy(DEFAULTS)
    for key, value in conf.items():
        if isinstance(DEFAULTS[key], dict) and isinstance(value, dict):
            result[key].update(copy.deepcopy(value))
        else:
            result[key] = copy.deepcopy(value)
    errors = validate_config(result)
    if errors:
        raise ConfigError(errors)
    return result


def serialize_config(config: dict) -> str:
    return json.dumps(config, indent=2, sort_keys=True)


def load_config(config_file) -> dict:
    """
    Read a JSON configuration with // comments, fill defaults and validate it.
    Relative paths are resolved against the package root. The result replaces App.config, the file name
    and its raw text are kept in App.config_file and App.config_text.
    """
    conf_json = {}
    text = None
    if config_file:
        config_file_path = PACKAGE_ROOT / config_file
        with open(config_file_path, encoding='utf-8') as json_file:
            text = json_file.read()
        conf_json = parse_config(text)
    App.config = normalize_config(conf_json)
    App.config_file = str(config_file) if config_file else None
    App.config_text = text
    return App.config


#
# Validation
#

def unknown_keys(conf: dict, reference: dict, prefix: str = "") -> List[str]:
    errors = []
    for key, value in conf.items():
        if key not in reference:
            errors.append(f"Unknown key '{prefix}{key}'")
        elif isinstance(reference[key], dict):
            if not isinstance(value, dict):
                errors.append(f"'{prefix}{key}' must be an object")
            else:
                errors.extend(unknown_keys(value, reference[key], prefix=f"{prefix}{key}."))
    return errors


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _is_int(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def validate_config(config: dict) -> List[str]:
    errors = []

    def check(section, key, ok, requirement):
        value = config[section][key] if section else config[key]
        name = f"{section}.{key}" if section else key
        if not ok(value):
            errors.append(f"'{name}' must be {requirement}, got {value!r}")

    positive = lambda v: _is_number(v) and v > 0
    positive_int = lambda v: _is_int(v) and v > 0
    number = _is_number
    flag = lambda v: isinstance(v, bool)
    optional_positive = lambda v: v is None or positive(v)
    positive_list = lambda v: isinstance(v, list) and len(v) > 0 and all(positive(x) for x in v)

    check(None, "seed", lambda v: _is_int(v) and v >= 0, "a non-negative integer")
    check(None, "out_dir", lambda v: isinstance(v, str) and len(v) > 0, "a non-empty string")
    check(None, "threads", lambda v: _is_int(v) and v >= 0, "a non-negative integer")

    for key in ("f0", "bandwidth", "T_p", "prf", "P_s"):
        check("radar", key, positive, "positive")
    for key in ("N", "Q"):
        check("radar", key, positive_int, "a positive integer")
    check("radar", "A0", optional_positive, "positive or null")

    for key in ("initial_distance", "uav_height", "standoff", "velocity"):
        check("geometry", key, positive, "positive")
    check("geometry", "radar_height", lambda v: v is None or (number(v) and v >= 0), "non-negative or null")
    check("geometry", "grid_size", lambda v: isinstance(v, list) and len(v) == 2 and all(positive_int(x) for x in v),
          "two positive integers")
    check("geometry", "grid_spacing", lambda v: isinstance(v, list) and len(v) == 2 and all(positive(x) for x in v),
          "two positive numbers")
    check("geometry", "aperture_time", optional_positive, "positive or null")

    check("channel", "M", positive_int, "a positive integer")
    for key in ("kappa_db", "C0_db", "noise_dbm", "sigma0_dbm", "sigma1_dbm"):
        check("channel", key, number, "a number")
    for key in ("eps_sr", "eps_rt"):
        check("channel", key, positive, "positive")

    for key in ("P_aris", "a_max", "tol"):
        check("aris", key, positive, "positive")
    check("aris", "max_outer", positive_int, "a positive integer")
    check("aris", "damping_attempts", lambda v: _is_int(v) and v >= 0, "a non-negative integer")
    check("aris", "init_fill", lambda v: number(v) and 0 < v <= 1, "in (0, 1]")

    for key in ("noise", "once_reflected_noise", "per_cell_channels"):
        check("echo", key, flag, "true or false")

    check("imaging", "rcmc_taps", lambda v: _is_int(v) and v >= 2 and v % 2 == 0, "an even integer >= 2")
    check("imaging", "fractional_delay", flag, "true or false")

    check("scene", "pattern", lambda v: v in SCENE_PATTERNS, f"one of {', '.join(SCENE_PATTERNS)}")
    if config["scene"]["pattern"] == "raster":
        check("scene", "raster_file", lambda v: isinstance(v, str) and len(v) > 0, "a file name for the raster pattern")
    check("scene", "rcs_dbsm", lambda v: v is None or number(v), "a number or null")

    check("experiment", "name", lambda v: v in EXPERIMENTS, f"one of {', '.join(EXPERIMENTS)}")
    for key in ("seeds", "slot_stride", "workers"):
        check("experiment", key, positive_int, "a positive integer")
    check("experiment", "elements", lambda v: isinstance(v, list) and len(v) > 0 and all(positive_int(x) for x in v),
          "a non-empty list of positive integers")
    for key in ("powers", "a_max_values", "velocities"):
        check("experiment", key, positive_list, "a non-empty list of positive numbers")

    return errors


#
# Typed views
#

def radar_params(config: dict, **overrides) -> RadarParams:
    return RadarParams(**{**config["radar"], **overrides})


def scenario_geometry(config: dict, params: RadarParams, **overrides) -> ScenarioGeometry:
    geometry = {**config["geometry"], **overrides}
    return build_geometry(
        params,
        initial_distance=geometry["initial_distance"],
        uav_height=geometry["uav_height"],
        standoff=geometry["standoff"],
        velocity=geometry["velocity"],
        grid_size=tuple(geometry["grid_size"]),
        grid_spacing=tuple(geometry["grid_spacing"]),
        radar_height=geometry["radar_height"],
        aperture_time=geometry["aperture_time"],
    )


def channel_params(config: dict, seed: Optional[int] = None, **overrides) -> ChannelParams:
    channel = {**config["channel"], **overrides}
    return ChannelParams(
        M=channel["M"],
        kappa=float(db_to_linear(channel["kappa_db"])),
        eps_sr=channel["eps_sr"],
        eps_rt=channel["eps_rt"],
        C0=float(db_to_linear(channel["C0_db"])),
        sigma2=float(dbm_to_watts(channel["noise_dbm"])),
        sigma0_2=float(dbm_to_watts(channel["sigma0_dbm"])),
        sigma1_2=float(dbm_to_watts(channel["sigma1_dbm"])),
        seed=config["seed"] if seed is None else seed,
    )


def aris_options(config: dict, seed: Optional[int] = None) -> OptimizerOptions:
    aris = config["aris"]
    return OptimizerOptions(
        max_outer=aris["max_outer"],
        tol=aris["tol"],
        damping_attempts=aris["damping_attempts"],
        init_fill=aris["init_fill"],
        seed=config["seed"] if seed is None else seed,
    )


def resolve_path(path) -> Path:
    return PACKAGE_ROOT / path


if __name__ == "__main__":
    pass
