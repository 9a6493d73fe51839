from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple
import logging

import numpy as np

from common.utils import Stream, rng_stream, complex_normal
from common.model_core import ScenarioGeometry, aris_position

log = logging.getLogger('channel')


@dataclass(frozen=True)
class ChannelParams:
    M: int = 32  # ARIS elements
    kappa: float = 10 ** 0.3  # Rician factor (linear), 3 dB
    eps_sr: float = 2.2  # path-loss exponent radar -> ARIS
    eps_rt: float = 2.2  # path-loss exponent ARIS -> grid
    C0: float = 1e-3  # path gain at 1 m, -30 dB
    sigma2: float = 1e-11  # receiver noise (W), -80 dBm
    sigma0_2: float = 1e-11  # ARIS noise on the return path (W)
    sigma1_2: float = 1e-11  # ARIS noise on the forward path (W)
    seed: int = 0

    def __post_init__(self):
        errors = []
        if self.M < 1:
            errors.append(f"M must be at least 1, got {self.M}")
        if not self.kappa >= 0:
            errors.append(f"kappa must be non-negative, got {self.kappa}")
        if not self.C0 > 0:
            errors.append(f"C0 must be positive, got {self.C0}")
        for name in ("sigma2", "sigma0_2", "sigma1_2"):
            if not getattr(self, name) > 0:
                errors.append(f"{name} must be positive, got {getattr(self, name)}")
        if errors:
            raise ValueError("; ".join(errors))


@dataclass(eq=False)
class ChannelSlot:
    n: int
    h_sr: np.ndarray  # radar -> ARIS, length M
    h_rt: np.ndarray  # ARIS -> grid center, length M
    sigma2: float
    sigma0_2: float
    sigma1_2: float
    h_rt_cell: Optional[np.ndarray] = None  # M x C, ARIS -> each non-zero scene cell

    @property
    def M(self) -> int:
        return len(self.h_sr)


def steering_vector(theta, M: int) -> np.ndarray:
    """
    Half-wavelength uniform linear array response exp{j*pi*m*sin(theta)}.
    A vector of C angles gives an M x C matrix, one column per angle.
    """
    m = np.arange(M)
    return np.exp(1j * np.pi * np.multiply.outer(m, np.sin(np.asarray(theta, dtype=float))))


def direction_sine(direction: np.ndarray) -> np.ndarray:
    """Sine of the angle from broadside for an array laid along the x axis."""
    direction = np.asarray(direction, dtype=float)
    return direction[..., 0] / np.linalg.norm(direction, axis=-1)


def direction_angle(direction: np.ndarray) -> np.ndarray:
    return np.arcsin(np.clip(direction_sine(direction), -1.0, 1.0))


def path_loss(d, eps: float, C0: float):
    """Amplitude sqrt(C0 * d^-eps)."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError(f"Path-loss distance must be positive, got {d.min()}")
    value = np.sqrt(C0 * d ** (-eps))
    return value[()] if value.ndim == 0 else value


def rician_vector(alpha, los: np.ndarray, kappa: float, nlos: np.ndarray) -> np.ndarray:
    """alpha*(sqrt(kappa/(kappa+1))*los + sqrt(1/(kappa+1))*nlos)"""
    if np.isinf(kappa):
        return alpha * los
    return alpha * (np.sqrt(kappa / (kappa + 1.0)) * los + np.sqrt(1.0 / (kappa + 1.0)) * nlos)


def sample_channel_slot(
        params: ChannelParams, geom: ScenarioGeometry, n: int,
        seed: Optional[int] = None, cells: Optional[np.ndarray] = None,
) -> ChannelSlot:
    """
    Rician channels of slot n. NLoS parts come from the (seed, link, n) streams so any slot can be
    regenerated alone. If cell positions (C x 3) are given, per-cell ARIS -> cell channels are added
    which reuse the grid-center NLoS draw with their own path loss and steering angle.
    """
    seed = params.seed if seed is None else seed
    M = params.M
    pos = aris_position(geom, n)
    to_radar = geom.radar_pos - pos
    to_center = geom.grid_center - pos

    nlos_sr = complex_normal(rng_stream(seed, Stream.SR, n), M)
    nlos_rt = complex_normal(rng_stream(seed, Stream.RT, n), M)

    a_sr = steering_vector(direction_angle(to_radar), M)
    a_rt = steering_vector(direction_angle(to_center), M)
    h_sr = rician_vector(path_loss(np.linalg.norm(to_radar), params.eps_sr, params.C0), a_sr, params.kappa, nlos_sr)
    h_rt = rician_vector(path_loss(np.linalg.norm(to_center), params.eps_rt, params.C0), a_rt, params.kappa, nlos_rt)

    h_rt_cell = None
    if cells is not None:
        to_cells = np.asarray(cells, dtype=float) - pos  # C x 3
        alpha = path_loss(np.linalg.norm(to_cells, axis=-1), params.eps_rt, params.C0)  # C
        los = steering_vector(direction_angle(to_cells), M)  # M x C
        h_rt_cell = rician_vector(alpha[None, :], los, params.kappa, nlos_rt[:, None])

    return ChannelSlot(
        n=n, h_sr=h_sr, h_rt=h_rt,
        sigma2=params.sigma2, sigma0_2=params.sigma0_2, sigma1_2=params.sigma1_2,
        h_rt_cell=h_rt_cell,
    )


def sample_channels(
        params: ChannelParams, geom: ScenarioGeometry,
        slots: Optional[Sequence[int]] = None, seed: Optional[int] = None, cells: Optional[np.ndarray] = None,
) -> List[ChannelSlot]:
    slots = range(geom.N) if slots is None else slots
    return [sample_channel_slot(params, geom, n, seed=seed, cells=cells) for n in slots]


def cascade(phi, slot: ChannelSlot) -> complex:
    """s = sum_m h_sr,m * h_rt,m * phi_m"""
    phi = np.asarray(getattr(phi, "phi", phi))
    return complex(np.sum(slot.h_sr * slot.h_rt * phi))


def equivalent_channels(phi, slot: ChannelSlot) -> Tuple[complex, np.ndarray, np.ndarray]:
    """
    Equivalent channels of the target return with Phi = diag(phi):
      h_n = h_sr^T Phi h_rt h_rt^T Phi h_sr,  h0 = Phi h_rt h_rt^T Phi h_sr,  h1 = Phi h_sr
    Evaluated through s = h_rt^T Phi h_sr, so that h_n = s^2 and h0 = s * Phi h_rt.
    """
    phi = np.asarray(getattr(phi, "phi", phi))
    if phi.shape != slot.h_sr.shape or slot.h_rt.shape != slot.h_sr.shape:
        raise ValueError(f"Dimension mismatch: phi {phi.shape}, h_sr {slot.h_sr.shape}, h_rt {slot.h_rt.shape}")
    s = cascade(phi, slot)
    h0 = s * (phi * slot.h_rt)
    h1 = phi * slot.h_sr
    return s * s, h0, h1


def random_phases(M: int, rng: np.random.Generator) -> np.ndarray:
    """Unit-modulus coefficients with uniform phases."""
    return np.exp(2j * np.pi * rng.random(M))
