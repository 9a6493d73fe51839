"""
Raw echo synthesis.

Each slot n receives, for every non-zero cell, the transmitted chirp delayed by the two-way relay path
2*(R_sr + R_rt)/c and weighted by g * h_n inside the azimuth window of the cell. The delayed chirp is
evaluated analytically at the shifted time argument, so sub-sample delays keep their exact phase.
"""
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Optional, Sequence, Union
import json
import math
import logging

import numpy as np
from numba import njit, prange

from common.utils import SPEED_OF_LIGHT, Stream, rng_stream, complex_normal
from common.model_core import (
    RadarParams, ScenarioGeometry, Scene, cell_positions, closest_approach,
    track_ranges, aperture_window, validate_support,
)
from common.channel import ChannelSlot, equivalent_channels
from common.aris_opt import SnrModel, aris_power

log = logging.getLogger('echo_synth')


class StageError(ValueError):
    """Pipeline operation applied to data in the wrong processing stage."""


class Stage(IntEnum):
    RAW = 0
    RANGE_COMPRESSED = 1
    DELAY_REMOVED = 2
    AZIMUTH_FREQ = 3
    RCMC_DONE = 4
    IMAGE = 5


@dataclass(eq=False)
class EchoMatrix:
    data: np.ndarray  # N x Q complex
    stage: Stage = Stage.RAW
    meta: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.data.shape

    def require(self, stage: Stage, operation: str):
        if self.stage != stage:
            raise StageError(f"'{operation}' expects stage '{stage.name.lower()}' but data is in stage '{self.stage.name.lower()}'")

    def advance(self, data: np.ndarray, stage: Stage, **meta) -> "EchoMatrix":
        """New matrix in the next pipeline stage. Dimensions are preserved."""
        if stage != self.stage + 1:
            raise StageError(f"Cannot move from stage '{self.stage.name.lower()}' to '{stage.name.lower()}'")
        if data.shape != self.data.shape:
            raise StageError(f"Stage '{stage.name.lower()}' changed dimensions {self.data.shape} -> {data.shape}")
        return EchoMatrix(data=data, stage=stage, meta={**self.meta, **meta})


@dataclass(eq=False)
class ReflectionVector:
    """Coefficients of one slot together with the amplitude cap and the power budget they must respect."""
    phi: np.ndarray
    a_max: float
    P_aris: float

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=complex)
        if not self.a_max > 0 or not self.P_aris > 0:
            raise ValueError(f"a_max and P_aris must be positive, got {self.a_max} and {self.P_aris}")

    @property
    def M(self) -> int:
        return len(self.phi)

    def within_cap(self, rtol: float = 1e-9) -> bool:
        return bool(np.all(np.abs(self.phi) <= self.a_max * (1.0 + rtol)))

    def power(self, model: SnrModel) -> float:
        return aris_power(self.phi, model)

    def within_budget(self, model: SnrModel, rtol: float = 1e-6) -> bool:
        return self.power(model) <= self.P_aris * (1.0 + rtol)

    def validate(self, model: SnrModel, rtol: float = 1e-6) -> "ReflectionVector":
        """
        :raises ValueError: if an element exceeds a_max or the ARIS would draw more than P_aris
        """
        errors = []
        if self.M != model.M:
            errors.append(f"{self.M} coefficients for a {model.M}-element surface")
        elif not self.within_budget(model, rtol):
            errors.append(f"power {self.power(model):.6g} W exceeds the budget {self.P_aris:.6g} W")
        if not self.within_cap(rtol):
            errors.append(f"amplitude {np.abs(self.phi).max():.6g} exceeds the cap {self.a_max:.6g}")
        if errors:
            raise ValueError("Invalid reflection vector: " + "; ".join(errors))
        return self


@njit(parallel=True, cache=True)
def _synth_kernel(out, R_total, weights, f0, k_r, dtau, L, c):
    N, Q = out.shape
    C = R_total.shape[1]
    for n in prange(N):
        for k in range(C):
            w = weights[n, k]
            if w == 0:
                continue
            tau = 2.0 * R_total[n, k] / c
            d = tau / dtau
            q_start = max(int(math.ceil(d - 1e-9)), 0)
            q_end = min(int(math.ceil(d + L - 1e-9)), Q)  # support q*dtau - tau in [0, T_p), whole samples
            for q in range(q_start, q_end):
                r = q * dtau - tau
                phase = 2.0 * math.pi * f0 * (q * dtau) - 2.0 * math.pi * f0 * tau + math.pi * k_r * r * r
                out[n, q] += w * complex(math.cos(phase), math.sin(phase))


def slot_gains(
        channels: Sequence[ChannelSlot], phis: Sequence, per_cell: bool = False, n_cells: int = 1,
) -> np.ndarray:
    """
    Equivalent channel h_n of every slot, N x C. With per-cell channels h_n is evaluated against each
    cell's own ARIS -> cell vector, otherwise the grid-center value is used for all cells.
    """
    N = len(channels)
    gains = np.zeros((N, n_cells), dtype=complex)
    for n, (slot, phi) in enumerate(zip(channels, phis)):
        phi = np.asarray(getattr(phi, "phi", phi))
        if per_cell and slot.h_rt_cell is not None:
            s = (slot.h_sr * phi) @ slot.h_rt_cell
            gains[n, :] = s * s
        else:
            h_n, _, _ = equivalent_channels(phi, slot)
            gains[n, :] = h_n
    return gains


def noise_variance(slot: ChannelSlot, phi, g_sum: complex = 0.0, once_reflected: bool = True) -> float:
    """Per-sample noise power sigma^2 + sigma1^2 ||h1||^2 + |sum w_a g|^2 sigma0^2 ||h0||^2"""
    _, h0, h1 = equivalent_channels(phi, slot)
    var = slot.sigma2 + slot.sigma1_2 * np.vdot(h1, h1).real
    if once_reflected:
        var += abs(g_sum) ** 2 * slot.sigma0_2 * np.vdot(h0, h0).real
    return float(var)


def synthesize_echo(
        scene: Scene,
        geom: ScenarioGeometry,
        channels: Sequence[ChannelSlot],
        phis: Sequence,
        params: RadarParams,
        noise: bool = True,
        seed: int = 0,
        once_reflected_noise: bool = True,
        per_cell: bool = False,
        params_hash: str = "",
) -> EchoMatrix:
    """
    Raw N x Q echo matrix of the scene seen through the ARIS.

    :param channels: one ChannelSlot per slow-time slot
    :param phis: one reflection vector (ReflectionVector or array) per slot
    :param once_reflected_noise: include the ARIS return-path noise term weighted by the windowed scene sum
    :param per_cell: use per-cell ARIS -> cell channels if the slots carry them
    """
    if scene.g.size == 0:
        raise ValueError("Scene is empty")
    if scene.g.shape != (geom.Na, geom.Nr):
        raise ValueError(f"Scene shape {scene.g.shape} does not match the grid {(geom.Na, geom.Nr)}")
    if len(channels) != params.N or len(phis) != params.N:
        raise ValueError(f"Expected {params.N} channel slots and reflection vectors, got {len(channels)} and {len(phis)}")
    validate_support(params, geom)

    N, Q = params.N, params.Q
    ii, jj, g = scene.nonzero()
    out = np.zeros((N, Q), dtype=np.complex128)

    window = np.zeros((N, 0), dtype=bool)
    if len(g) > 0:
        cells = cell_positions(geom)[ii, jj]
        _, t_zero = closest_approach(geom)
        window = aperture_window(geom, t_zero[ii, jj])  # N x C
        R_sr, R_rt = track_ranges(geom, cells)
        R_total = R_sr[:, None] + R_rt

        gains = slot_gains(channels, phis, per_cell=per_cell, n_cells=len(g))
        weights = params.A0 * g[None, :] * gains * window
        _synth_kernel(
            out, np.ascontiguousarray(R_total), np.ascontiguousarray(weights),
            params.f0, params.k_r, params.delta_tau, params.pulse_samples, SPEED_OF_LIGHT,
        )

    if noise:
        g_sums = window.astype(float) @ g if len(g) > 0 else np.zeros(N, dtype=complex)
        for n in range(N):
            out[n] += slot_noise(channels[n], phis[n], g_sums[n], Q, seed, n, once_reflected_noise)

    meta = dict(
        seed=int(seed), params_hash=params_hash, noise=bool(noise),
        once_reflected_noise=bool(once_reflected_noise), per_cell=bool(per_cell),
        f0=params.f0, delta_tau=params.delta_tau, downconverted=False,
    )
    return EchoMatrix(data=out, stage=Stage.RAW, meta=meta)


def slot_noise(slot: ChannelSlot, phi, g_sum: complex, Q: int, seed: int, n: int, once_reflected: bool) -> np.ndarray:
    """
    Noise row of slot n: z + h1^T z1 + (sum w_a g) h0^T z0, drawn i.i.d. per fast-time sample.
    The projections of the ARIS noise vectors are drawn directly as scalars with the same distribution.
    """
    _, h0, h1 = equivalent_channels(phi, slot)
    rng = rng_stream(seed, Stream.NOISE, n)
    row = complex_normal(rng, Q, slot.sigma2)
    row += complex_normal(rng, Q, slot.sigma1_2 * np.vdot(h1, h1).real)
    z0 = complex_normal(rng, Q, slot.sigma0_2 * np.vdot(h0, h0).real)
    if once_reflected:
        row += g_sum * z0
    return row


def downconvert(raw: EchoMatrix) -> EchoMatrix:
    """Remove the carrier exp{j*2*pi*f0*q*dtau} from every row. The stage stays 'raw'."""
    raw.require(Stage.RAW, "downconvert")
    if raw.meta.get("downconverted"):
        raise StageError("Echo matrix is already down-converted")
    f0 = raw.meta["f0"]
    dtau = raw.meta["delta_tau"]
    q = np.arange(raw.shape[1])
    carrier = np.exp(-1j * (2.0 * np.pi * f0 * (q * dtau)))
    return EchoMatrix(data=raw.data * carrier[None, :], stage=Stage.RAW, meta={**raw.meta, "downconverted": True})


def dump_raw(echo: EchoMatrix, path: Union[str, Path]) -> Path:
    """Little-endian complex64 row-major matrix with a JSON sidecar (same name, .json)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    echo.data.astype("<c8").tofile(path)
    sidecar = path.with_suffix(".json")
    info = dict(
        rows=echo.shape[0], cols=echo.shape[1], dtype="complex64", byteorder="little", order="row-major",
        stage=echo.stage.name.lower(),
        **{k: v for k, v in echo.meta.items() if isinstance(v, (int, float, str, bool))},
    )
    with open(sidecar, "w", encoding="utf-8") as f:
        json.dump(info, f, indent=2, sort_keys=True)
    return sidecar


def load_raw(path: Union[str, Path]) -> EchoMatrix:
    path = Path(path)
    with open(path.with_suffix(".json"), encoding="utf-8") as f:
        info = json.load(f)
    data = np.fromfile(path, dtype="<c8").reshape(info["rows"], info["cols"]).astype(np.complex128)
    return EchoMatrix(data=data, stage=Stage[info["stage"].upper()], meta=info)
