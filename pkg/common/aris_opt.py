"""
Per-slot ARIS reflection design.

The slot SNR P_s|s|^4 / (sigma^2 + sigma0^2 |s|^2 ||Phi h_rt||^2 + sigma1^2 ||Phi h_sr||^2) is maximized under
the ARIS power budget and the amplitude cap. The ratio is handled with the quadratic transform (auxiliary l
equal to the current SNR), the resulting quartic problem with MM surrogates, and every surrogate problem with
the dual-bisection solver.
"""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple
import logging

import numpy as np
import pandas as pd

from common.utils import Stream, rng_stream, linear_to_db
from common.channel import ChannelSlot, random_phases
from common.surrogates import build_surrogates
from common.subproblem import SubproblemInfeasible, solve_subproblem

log = logging.getLogger('aris_opt')


@dataclass(frozen=True, eq=False)
class SnrModel:
    P_s: float
    sigma2: float
    sigma0_2: float
    sigma1_2: float
    h_sr: np.ndarray
    h_rt: np.ndarray
    passive: bool = False  # PRIS: no ARIS noise

    def __post_init__(self):
        errors = []
        if not self.P_s > 0:
            errors.append(f"P_s must be positive, got {self.P_s}")
        if not self.sigma2 > 0:
            errors.append(f"sigma2 must be positive, got {self.sigma2}")
        for name in ("sigma0_2", "sigma1_2"):
            value = getattr(self, name)
            if self.passive and value != 0:
                errors.append(f"{name} must be zero for a passive surface, got {value}")
            if not self.passive and not value > 0:
                errors.append(f"{name} must be positive, got {value}")
        if np.shape(self.h_sr) != np.shape(self.h_rt):
            errors.append(f"Channel dimensions differ: {np.shape(self.h_sr)} and {np.shape(self.h_rt)}")
        if errors:
            raise ValueError("; ".join(errors))

    @property
    def M(self) -> int:
        return len(self.h_sr)

    @property
    def w(self) -> np.ndarray:
        return self.h_sr * self.h_rt

    @classmethod
    def from_slot(cls, slot: ChannelSlot, P_s: float) -> "SnrModel":
        return cls(P_s=P_s, sigma2=slot.sigma2, sigma0_2=slot.sigma0_2, sigma1_2=slot.sigma1_2,
                   h_sr=np.asarray(slot.h_sr), h_rt=np.asarray(slot.h_rt))


@dataclass(eq=False)
class OptimizerOptions:
    max_outer: int = 100
    tol: float = 1e-6  # relative SNR change
    damping_attempts: int = 10
    init_fill: float = 0.9  # initial ARIS power as a share of P_aris
    seed: int = 0
    slot: int = 0  # initial phase stream index
    bisection_tol: float = 1e-8
    max_bisection: int = 200


@dataclass(eq=False)
class SolverTrace:
    l_history: List[float] = field(default_factory=list)
    snr_history: List[float] = field(default_factory=list)  # dB, entry 0 is the initial point
    constraint_slack: List[float] = field(default_factory=list)  # P_aris - aris_power (W)
    inner_iterations: List[int] = field(default_factory=list)
    power_history: List[float] = field(default_factory=list)
    mu_history: List[float] = field(default_factory=list)
    damping: List[int] = field(default_factory=list)
    converged: bool = False


#
# SNR and power
#

def snr_terms(phi: np.ndarray, model: SnrModel) -> Tuple[float, float]:
    """Numerator P_s|s|^4 and denominator of the slot SNR."""
    phi = np.asarray(phi)
    if not np.all(np.isfinite(phi)):
        raise ValueError("Non-finite reflection coefficients")
    s2 = abs(np.sum(model.w * phi)) ** 2
    rt = float(np.sum(np.abs(phi * model.h_rt) ** 2))
    sr = float(np.sum(np.abs(phi * model.h_sr) ** 2))
    return model.P_s * s2 * s2, model.sigma2 + model.sigma0_2 * s2 * rt + model.sigma1_2 * sr


def compute_snr(phi: np.ndarray, model: SnrModel) -> float:
    num, den = snr_terms(phi, model)
    return float(num / den)


def aris_power(phi: np.ndarray, model: SnrModel) -> float:
    """
    Power drawn by the ARIS:
    P_s||Phi h_sr||^2 + sigma0^2 ||Phi h_rt||^4 + P_s|s|^2 ||Phi h_rt||^2 + (sigma0^2 + sigma1^2)||phi||^2
    """
    phi = np.asarray(phi)
    s2 = abs(np.sum(model.w * phi)) ** 2
    rt = float(np.sum(np.abs(phi * model.h_rt) ** 2))
    sr = float(np.sum(np.abs(phi * model.h_sr) ** 2))
    amp = float(np.sum(np.abs(phi) ** 2))
    return model.P_s * sr + model.sigma0_2 * rt * rt + model.P_s * s2 * rt + (model.sigma0_2 + model.sigma1_2) * amp


def fp_update_l(phi: np.ndarray, model: SnrModel) -> float:
    """Optimal auxiliary variable of the quadratic transform: the current SNR."""
    return compute_snr(phi, model)


def fp_objective(phi: np.ndarray, l: float, model: SnrModel) -> float:
    num, den = snr_terms(phi, model)
    return float(num - l * den)


#
# Optimization
#

def initial_phases(model: SnrModel, P_aris: float, a_max: float, rng: np.random.Generator, fill: float = 0.9) -> np.ndarray:
    """
    Random phases with a common amplitude a chosen so that aris_power = fill * P_aris, capped at a_max.
    The power is G2 a^2 + Q4 a^4 for a fixed phase pattern, so a^2 is the positive root of that quadratic.
    """
    phases = random_phases(model.M, rng)
    target = fill * P_aris
    G2 = model.P_s * np.sum(np.abs(model.h_sr) ** 2) + model.M * (model.sigma0_2 + model.sigma1_2)
    rt2 = np.sum(np.abs(model.h_rt) ** 2)
    s_u2 = abs(np.sum(model.w * phases)) ** 2
    Q4 = model.sigma0_2 * rt2 ** 2 + model.P_s * s_u2 * rt2
    a2 = 2.0 * target / (G2 + np.sqrt(G2 ** 2 + 4.0 * Q4 * target))
    return min(np.sqrt(a2), a_max) * phases


def normalize_phase(phi: np.ndarray, model: SnrModel) -> np.ndarray:
    """Rotate phi so that s is real and positive. SNR and power do not change."""
    s = np.sum(model.w * phi)
    if abs(s) == 0:
        return phi
    return phi * np.exp(-1j * np.angle(s))


def optimize_slot(
        model: SnrModel, P_aris: float, a_max: float, options: Optional[OptimizerOptions] = None,
) -> Tuple[np.ndarray, SolverTrace]:
    """
    Alternate the quadratic-transform update of l with one MM step until the relative SNR change falls below
    options.tol. A step that would lower the SNR is rejected and ends the loop.

    :raises SubproblemInfeasible: if the surrogate stays infeasible after all damping attempts
    """
    options = options or OptimizerOptions()
    if not P_aris > 0 or not a_max > 0:
        raise ValueError(f"P_aris and a_max must be positive, got {P_aris} and {a_max}")

    rng = rng_stream(options.seed, Stream.INIT, options.slot)
    phi = initial_phases(model, P_aris, a_max, rng, options.init_fill)
    snr = compute_snr(phi, model)
    trace = SolverTrace()
    trace.snr_history.append(float(linear_to_db(snr)))
    trace.power_history.append(aris_power(phi, model))
    trace.constraint_slack.append(P_aris - trace.power_history[-1])

    for k in range(options.max_outer):
        base = phi
        l = fp_update_l(base, model)
        for attempt in range(options.damping_attempts + 1):
            forms = build_surrogates(base, l, model, a_max)
            try:
                solution = solve_subproblem(forms, P_aris, a_max, options.bisection_tol, options.max_bisection)
                break
            except SubproblemInfeasible:
                if attempt == options.damping_attempts:
                    raise
                log.debug(f"Slot {options.slot} iteration {k}: surrogate infeasible, damping step {attempt + 1}")
                base = 0.5 * base
                l = fp_update_l(base, model)

        candidate = solution.phi
        candidate_snr = compute_snr(candidate, model)
        power = aris_power(candidate, model)
        if power > P_aris * (1.0 + 1e-6) or candidate_snr < snr:
            trace.converged = True
            break

        change = (candidate_snr - snr) / max(snr, 1e-300)
        phi, snr = candidate, candidate_snr
        trace.l_history.append(l)
        trace.snr_history.append(float(linear_to_db(snr)))
        trace.power_history.append(power)
        trace.constraint_slack.append(P_aris - power)
        trace.inner_iterations.append(solution.iterations)
        trace.mu_history.append(solution.mu)
        trace.damping.append(attempt)
        if change < options.tol:
            trace.converged = True
            break
    else:
        log.info(f"Slot {options.slot}: no convergence in {options.max_outer} outer iterations")

    return normalize_phase(phi, model), trace


def _optimize_job(args):
    model, P_aris, a_max, options = args
    return optimize_slot(model, P_aris, a_max, options)


def optimize_slots(
        models: Sequence[SnrModel], P_aris: float, a_max: float, options: Optional[OptimizerOptions] = None,
        slots: Optional[Sequence[int]] = None, workers: int = 1,
) -> List[Tuple[np.ndarray, SolverTrace]]:
    """Independent per-slot optimizations, in a process pool if workers > 1. Result order follows models."""
    options = options or OptimizerOptions()
    slots = range(len(models)) if slots is None else slots
    jobs = [(m, P_aris, a_max, replace(options, slot=n)) for m, n in zip(models, slots)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            return list(executor.map(_optimize_job, jobs))
    return [_optimize_job(job) for job in jobs]


def trace_frame(trace: SolverTrace) -> pd.DataFrame:
    """One row per accepted outer iteration; iteration 0 is the initial point."""
    n = len(trace.snr_history)
    return pd.DataFrame({
        "iteration": np.arange(n),
        "l": [np.nan] + trace.l_history,
        "snr_db": trace.snr_history,
        "power_w": trace.power_history,
        "slack_w": trace.constraint_slack,
        "inner_iterations": [0] + trace.inner_iterations,
        "mu": [np.nan] + trace.mu_history,
    })


#
# Baselines
#

def pris_baseline(model: SnrModel, total_power: float) -> Tuple[np.ndarray, SnrModel]:
    """
    Unit-modulus phases aligning every cascaded path, phi_m = exp{-j*arg(h_sr,m*h_rt,m)}, and the model of
    the passive surface with the whole budget on the radar.
    """
    return np.exp(-1j * np.angle(model.w)), pris_model(model, total_power)


def pris_model(model: SnrModel, total_power: float) -> SnrModel:
    """The passive surface: radar power raised to the combined budget, no ARIS noise."""
    return replace(model, P_s=total_power, sigma0_2=0.0, sigma1_2=0.0, passive=True)


def random_pris_baseline(model: SnrModel, rng: np.random.Generator) -> np.ndarray:
    return random_phases(model.M, rng)


def random_baseline_rng(seed: int, slot: int) -> np.random.Generator:
    return rng_stream(seed, Stream.RANDOM_BASELINE, slot)
