"""
Scenario parameters, geometry and scenes shared by all other modules.

Coordinates: the radar is mast-mounted at (0, 0, radar_height). The UAV carrying the ARIS starts at
horizontal distance `initial_distance` from the radar and flies along +x at constant height.
The imaging grid lies on the z=0 plane with its azimuth axis (i) parallel to the track and its
range axis (j) along +y. The grid center is placed at the mid-observation point of the track
at the configured standoff (closest slant range from the ARIS).
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Tuple, Union
import logging

import numpy as np

from common.utils import SPEED_OF_LIGHT

log = logging.getLogger('model_core')


class GeometryError(ValueError):
    """Configuration whose geometry cannot be simulated (degenerate track or receive window overflow)."""


@dataclass(frozen=True)
class RadarParams:
    f0: float = 6e9  # carrier (Hz)
    bandwidth: float = 300e6  # Hz
    T_p: float = 1e-6  # pulse duration (s)
    prf: float = 720.0  # Hz
    N: int = 512  # slow-time slots
    Q: int = 1024  # fast-time samples
    P_s: float = 85.0  # radar transmit power (W)
    A0: Optional[float] = None  # chirp amplitude, sqrt(P_s) if not set

    # Derived
    k_r: float = field(init=False)
    delta_tau: float = field(init=False)
    delta_t: float = field(init=False)
    pulse_samples: int = field(init=False)
    wavelength: float = field(init=False)

    def __post_init__(self):
        bad = [name for name in ("f0", "bandwidth", "T_p", "prf", "P_s") if not getattr(self, name) > 0]
        if self.N < 1:
            bad.append("N")
        if self.Q < 1:
            bad.append("Q")
        if self.A0 is not None and not self.A0 > 0:
            bad.append("A0")
        if bad:
            raise ValueError(f"Radar parameters must be positive: {', '.join(bad)}")

        delta_tau = 1.0 / self.bandwidth  # complex baseband, critically sampled
        pulse_samples = int(round(self.T_p / delta_tau))
        if pulse_samples < 1:
            raise ValueError(f"Pulse duration {self.T_p} s is shorter than one fast-time sample {delta_tau} s")

        object.__setattr__(self, "A0", float(np.sqrt(self.P_s)) if self.A0 is None else float(self.A0))
        object.__setattr__(self, "k_r", self.bandwidth / self.T_p)
        object.__setattr__(self, "delta_tau", delta_tau)
        object.__setattr__(self, "delta_t", 1.0 / self.prf)
        object.__setattr__(self, "pulse_samples", pulse_samples)
        object.__setattr__(self, "wavelength", SPEED_OF_LIGHT / self.f0)


@dataclass(frozen=True, eq=False)
class ScenarioGeometry:
    radar_pos: np.ndarray
    uav_start: np.ndarray
    velocity: float  # m/s along +x
    uav_height: float
    grid_origin: np.ndarray  # position of cell (0, 0)
    grid_spacing: Tuple[float, float]  # (azimuth, range) in m
    Na: int
    Nr: int
    delta_t: float  # slow-time interval copied from the radar parameters
    N: int
    aperture_time: float  # duration T_a of the azimuth window around each zero-Doppler time

    @property
    def grid_center(self) -> np.ndarray:
        dx, dy = self.grid_spacing
        return self.grid_origin + np.array([(self.Na - 1) * dx / 2.0, (self.Nr - 1) * dy / 2.0, 0.0])


@dataclass(frozen=True, eq=False)
class SlotGeometry:
    n: int
    t: float  # slow time n*delta_t
    position: np.ndarray
    R_sr: float
    R_rt: np.ndarray  # Na x Nr
    R_total: np.ndarray  # R_sr + R_rt
    R0: np.ndarray  # closest-approach slant ranges
    t_zero: np.ndarray  # zero-Doppler times (s)
    R_ref: float  # closest slant range to the grid center


@dataclass(eq=False)
class Scene:
    """Complex scattering coefficients g on the Na x Nr grid."""
    g: np.ndarray
    name: str = ""

    @property
    def shape(self):
        return self.g.shape

    def is_binary(self) -> bool:
        return bool(np.all((self.g == 0) | (self.g == 1)))

    def nonzero(self):
        """Indexes (i, j) and values of non-zero cells."""
        ii, jj = np.nonzero(self.g)
        return ii, jj, self.g[ii, jj]

    def scaled(self, gain: complex) -> "Scene":
        return Scene(g=self.g * gain, name=self.name)


def scattering_gain(rcs_dbsm: Optional[float], wavelength: float) -> float:
    """
    Amplitude gain sqrt(4*pi*sigma) / lambda of a scatterer with radar cross section sigma (dBsm).
    None leaves the scene coefficients as they are.
    """
    if rcs_dbsm is None:
        return 1.0
    if not wavelength > 0:
        raise ValueError(f"Wavelength must be positive, got {wavelength}")
    sigma = 10.0 ** (rcs_dbsm / 10.0)
    return float(np.sqrt(4.0 * np.pi * sigma) / wavelength)


#
# Geometry construction
#

def build_geometry(
        params: RadarParams,
        initial_distance: float = 5.0,
        uav_height: float = 20.0,
        standoff: float = 300.0,
        velocity: float = 30.0,
        grid_size: Tuple[int, int] = (32, 32),
        grid_spacing: Tuple[float, float] = (0.5, 0.5),
        radar_height: Optional[float] = None,
        aperture_time: Optional[float] = None,
) -> ScenarioGeometry:
    """
    Place radar, track and grid from the scenario description.

    The initial radar-ARIS distance and the standoff are exact by construction. The grid center is
    at the track point reached after half of the observation time.
    """
    if radar_height is None:
        radar_height = uav_height
    Na, Nr = int(grid_size[0]), int(grid_size[1])
    dx, dy = float(grid_spacing[0]), float(grid_spacing[1])

    errors = []
    if not velocity > 0:
        errors.append(f"velocity must be positive, got {velocity}")
    if Na < 1 or Nr < 1:
        errors.append(f"grid_size must be positive, got {grid_size}")
    if not (dx > 0 and dy > 0):
        errors.append(f"grid_spacing must be positive, got {grid_spacing}")
    dz = uav_height - radar_height
    if not initial_distance > abs(dz):
        errors.append(f"initial_distance {initial_distance} must exceed the height difference {abs(dz)}")
    if not standoff > uav_height:
        errors.append(f"standoff {standoff} must exceed the UAV height {uav_height}")
    if errors:
        raise GeometryError("; ".join(errors))

    radar_pos = np.array([0.0, 0.0, float(radar_height)])
    uav_start = radar_pos + np.array([0.0, np.sqrt(initial_distance ** 2 - dz ** 2), dz])

    observation = params.N * params.delta_t
    center = np.array([
        uav_start[0] + velocity * observation / 2.0,
        uav_start[1] + np.sqrt(standoff ** 2 - uav_height ** 2),
        0.0,
    ])
    grid_origin = center - np.array([(Na - 1) * dx / 2.0, (Nr - 1) * dy / 2.0, 0.0])

    if aperture_time is None:
        aperture_time = default_aperture_time(params, velocity, Na, dx)
    if not aperture_time > 0:
        raise GeometryError(
            f"Aperture time {aperture_time:.4f} s is not positive: the grid azimuth extent {(Na - 1) * dx} m "
            f"cannot be observed in {observation:.4f} s at {velocity} m/s"
        )

    return ScenarioGeometry(
        radar_pos=radar_pos, uav_start=uav_start, velocity=float(velocity), uav_height=float(uav_height),
        grid_origin=grid_origin, grid_spacing=(dx, dy), Na=Na, Nr=Nr,
        delta_t=params.delta_t, N=params.N, aperture_time=float(aperture_time),
    )


def default_aperture_time(params: RadarParams, velocity: float, Na: int, dx: float) -> float:
    """Longest window which keeps every grid cell fully illuminated within the observation time."""
    return params.N * params.delta_t - (Na - 1) * dx / velocity


def slot_times(geom: ScenarioGeometry) -> np.ndarray:
    return np.arange(geom.N) * geom.delta_t


def aris_position(geom: ScenarioGeometry, n: int) -> np.ndarray:
    if not 0 <= n < geom.N:
        raise ValueError(f"Slot index {n} out of range [0, {geom.N})")
    return geom.uav_start + np.array([geom.velocity * n * geom.delta_t, 0.0, 0.0])


def aris_positions(geom: ScenarioGeometry) -> np.ndarray:
    """N x 3 track positions."""
    t = slot_times(geom)
    pos = np.repeat(geom.uav_start[None, :], geom.N, axis=0)
    pos[:, 0] += geom.velocity * t
    return pos


def cell_positions(geom: ScenarioGeometry) -> np.ndarray:
    """Na x Nr x 3 grid cell positions."""
    dx, dy = geom.grid_spacing
    ii, jj = np.meshgrid(np.arange(geom.Na), np.arange(geom.Nr), indexing="ij")
    pos = np.zeros((geom.Na, geom.Nr, 3))
    pos[..., 0] = geom.grid_origin[0] + ii * dx
    pos[..., 1] = geom.grid_origin[1] + jj * dy
    pos[..., 2] = geom.grid_origin[2]
    return pos


def closest_approach(geom: ScenarioGeometry) -> Tuple[np.ndarray, np.ndarray]:
    """
    Closest-approach slant ranges R0 and zero-Doppler times t_zero of all cells.
    The cell is projected onto the (continuous) track line, so t_zero is not quantized to slots.
    """
    cells = cell_positions(geom)
    t_zero = (cells[..., 0] - geom.uav_start[0]) / geom.velocity
    dy = cells[..., 1] - geom.uav_start[1]
    dz = cells[..., 2] - geom.uav_start[2]
    R0 = np.sqrt(dy ** 2 + dz ** 2)
    if np.min(R0) <= 1e-9:
        raise GeometryError("UAV track passes through a grid point")
    return R0, t_zero


def reference_range(geom: ScenarioGeometry) -> float:
    """Closest slant range from the track to the grid center."""
    c = geom.grid_center
    return float(np.hypot(c[1] - geom.uav_start[1], c[2] - geom.uav_start[2]))


def slot_geometry(geom: ScenarioGeometry, n: int) -> SlotGeometry:
    pos = aris_position(geom, n)
    R0, t_zero = closest_approach(geom)
    cells = cell_positions(geom)
    R_sr = float(np.linalg.norm(pos - geom.radar_pos))
    R_rt = np.linalg.norm(cells - pos, axis=-1)
    return SlotGeometry(
        n=n, t=n * geom.delta_t, position=pos,
        R_sr=R_sr, R_rt=R_rt, R_total=R_sr + R_rt,
        R0=R0, t_zero=t_zero, R_ref=reference_range(geom),
    )


def track_ranges(geom: ScenarioGeometry, cells: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Vectorized ranges over the whole track.

    :return: R_sr of shape (N,) and R_rt of shape (N, C) for the C given cell positions (all cells flattened if None)
    """
    if cells is None:
        cells = cell_positions(geom).reshape(-1, 3)
    pos = aris_positions(geom)
    R_sr = np.linalg.norm(pos - geom.radar_pos, axis=-1)
    R_rt = np.linalg.norm(cells[None, :, :] - pos[:, None, :], axis=-1)
    return R_sr, R_rt


def aperture_window(geom: ScenarioGeometry, t_zero: np.ndarray) -> np.ndarray:
    """
    Rectangular azimuth envelope: True where slot time lies within T_a/2 of the zero-Doppler time.
    :return: boolean (N, ...) array broadcasting t_zero over slots
    """
    t = slot_times(geom).reshape((-1,) + (1,) * np.ndim(t_zero))
    return np.abs(t - t_zero) <= geom.aperture_time / 2.0


def required_samples(params: RadarParams, geom: ScenarioGeometry) -> int:
    """Smallest receive window (in samples) holding every echo which falls into its aperture window."""
    _, t_zero = closest_approach(geom)
    R_sr, R_rt = track_ranges(geom)
    active = aperture_window(geom, t_zero.reshape(-1))
    R_total = np.where(active, R_sr[:, None] + R_rt, 0.0)
    max_delay = 2.0 * np.max(R_total) / SPEED_OF_LIGHT
    return int(np.ceil((max_delay + params.T_p) / params.delta_tau))


def validate_support(params: RadarParams, geom: ScenarioGeometry):
    """Q*delta_tau must hold the pulse plus the largest two-way delay of the scene."""
    closest_approach(geom)  # degenerate track check
    need = required_samples(params, geom)
    if need > params.Q:
        raise GeometryError(f"Receive window of Q={params.Q} samples is too short, at least {need} are required")


#
# Scenes
#

HOUSE_TEMPLATE = [
    "................",
    ".......##.......",
    "......####......",
    ".....##..##.....",
    "....##....##....",
    "...##......##...",
    "..############..",
    "...#........#...",
    "...#.##.....#...",
    "...#.##.###.#...",
    "...#....#.#.#...",
    "...#....#.#.#...",
    "...#....#.#.#...",
    "...##########...",
    "................",
    "................",
]


def point_scene(Na: int, Nr: int, i: Optional[int] = None, j: Optional[int] = None, value: complex = 1.0) -> Scene:
    """Single scatterer, at the grid center by default."""
    g = np.zeros((Na, Nr), dtype=complex)
    g[Na // 2 if i is None else i, Nr // 2 if j is None else j] = value
    return Scene(g=g, name="point")


def grid3x3_scene(Na: int, Nr: int, step: Optional[Tuple[int, int]] = None) -> Scene:
    """Nine unit scatterers on a regular lattice around the grid center."""
    if step is None:
        step = (max(Na // 4, 1), max(Nr // 4, 1))
    g = np.zeros((Na, Nr), dtype=complex)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            i = Na // 2 + di * step[0]
            j = Nr // 2 + dj * step[1]
            if not (0 <= i < Na and 0 <= j < Nr):
                raise ValueError(f"3x3 lattice with step {step} does not fit the {Na}x{Nr} grid")
            g[i, j] = 1.0
    return Scene(g=g, name="grid3x3")


def mask_scene(mask: np.ndarray, Na: int, Nr: int, name: str) -> Scene:
    """Resample a boolean mask to the grid by nearest neighbor."""
    mask = np.asarray(mask, dtype=bool)
    rows = (np.arange(Na) * mask.shape[0] / Na).astype(int)
    cols = (np.arange(Nr) * mask.shape[1] / Nr).astype(int)
    g = mask[np.ix_(rows, cols)].astype(complex)
    return Scene(g=g, name=name)


def house_scene(Na: int, Nr: int) -> Scene:
    mask = np.array([[ch == "#" for ch in row] for row in HOUSE_TEMPLATE])
    return mask_scene(mask, Na, Nr, "house")


def read_pgm(path: Union[str, Path]) -> np.ndarray:
    """Read an 8-bit grayscale PGM (P5 binary or P2 text) into a float array in [0, 1]."""
    data = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    magic, width, height, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval < 1 or maxval > 255:
        raise ValueError(f"Only 8-bit PGM files are supported, maxval={maxval} in {path}")
    if magic == b"P5":
        pixels = np.frombuffer(data[pos + 1:pos + 1 + width * height], dtype=np.uint8)
    elif magic == b"P2":
        pixels = np.array(data[pos:].split(), dtype=np.int64)[:width * height]
    else:
        raise ValueError(f"Unknown PGM format {magic!r} in {path}")
    if pixels.size != width * height:
        raise ValueError(f"Truncated PGM file {path}")
    return pixels.reshape(height, width).astype(float) / maxval


def raster_scene(path: Union[str, Path], Na: int, Nr: int, threshold: float = 0.5) -> Scene:
    """Binary scene from a grayscale raster: pixels brighter than the threshold are scatterers."""
    image = read_pgm(path)
    return mask_scene(image > threshold, Na, Nr, Path(path).stem)


def make_scene(pattern: str, Na: int, Nr: int, raster_file: Optional[str] = None) -> Scene:
    if pattern == "point":
        return point_scene(Na, Nr)
    elif pattern == "grid3x3":
        return grid3x3_scene(Na, Nr)
    elif pattern == "house":
        return house_scene(Na, Nr)
    elif pattern == "raster":
        if not raster_file:
            raise ValueError("Scene pattern 'raster' requires 'raster_file'")
        return raster_scene(raster_file, Na, Nr)
    else:
        raise ValueError(f"Unknown scene pattern '{pattern}'. Use 'point', 'grid3x3', 'house' or 'raster'.")
