"""
Convex subproblem of one MM step:

    max  -phi^H V phi + Re{phi^H f_bar}
    s.t.  phi^H K phi + Re{phi^H p_hat} + c2 + c3 <= P_aris,   |phi_m| <= a_max

V and K are diagonal, so for a fixed multiplier mu >= 0 of the power constraint the Lagrangian separates
per element. The multiplier is found by bisection on the constraint value, which is non-increasing in mu.
"""
from dataclasses import dataclass, field
import logging

import numpy as np

from common.surrogates import SurrogateForms

log = logging.getLogger('subproblem')


class SubproblemInfeasible(RuntimeError):
    """No point of the amplitude box satisfies the surrogate power constraint."""

    def __init__(self, min_power: float, P_aris: float):
        self.min_power = min_power
        self.P_aris = P_aris
        super().__init__(f"Surrogate power is at least {min_power:.6g} W in the amplitude box, budget {P_aris:.6g} W")


@dataclass(eq=False)
class SubproblemSolution:
    phi: np.ndarray
    mu: float
    slack: float  # P_aris minus surrogate power
    iterations: int
    kkt: dict = field(default_factory=dict)


def clip_magnitude(z: np.ndarray, a_max: float) -> np.ndarray:
    mag = np.abs(z)
    scale = np.minimum(1.0, a_max / np.maximum(mag, 1e-300))
    return z * scale


def element_solution(forms: SurrogateForms, mu: float, a_max: float) -> np.ndarray:
    """Per-element maximizer of the Lagrangian at multiplier mu."""
    num = forms.f_bar - mu * forms.p_hat
    den = 2.0 * (forms.V + mu * forms.K)
    flat = den <= 0
    phi = np.empty_like(num)
    phi[~flat] = num[~flat] / den[~flat]
    # no curvature: linear term only, the maximizer sits on the cap
    phi[flat] = a_max * np.exp(1j * np.angle(num[flat])) * (np.abs(num[flat]) > 0)
    return clip_magnitude(phi, a_max)


def kkt_residuals(forms: SurrogateForms, phi: np.ndarray, mu: float, P_aris: float, a_max: float) -> dict:
    """
    Relative KKT residuals: stationarity of the Lagrangian projected on the box, complementary slackness
    and primal infeasibility.
    """
    grad = forms.f_bar - mu * forms.p_hat - 2.0 * (forms.V + mu * forms.K) * phi
    mag = np.abs(phi)
    on_cap = mag >= a_max * (1.0 - 1e-9)
    # on the cap an outward radial component is admissible
    radial = np.zeros_like(mag)
    radial[on_cap] = np.real(np.conj(phi[on_cap]) * grad[on_cap]) / mag[on_cap]
    outward = np.maximum(radial, 0.0)
    residual = grad.copy()
    residual[on_cap] -= outward[on_cap] * phi[on_cap] / mag[on_cap]

    scale = max(float(np.max(np.abs(forms.f_bar))), float(np.max(np.abs(mu * forms.p_hat))), 1e-300)
    value = forms.constraint(phi)
    return dict(
        stationarity=float(np.max(np.abs(residual))) / scale,
        complementarity=abs(mu * (P_aris - value)) / max(P_aris, 1e-300),
        primal=max(value - P_aris, 0.0) / max(P_aris, 1e-300),
    )


def solve_subproblem(
        forms: SurrogateForms, P_aris: float, a_max: float,
        tol: float = 1e-8, max_iter: int = 200,
) -> SubproblemSolution:
    """
    Global optimum of the MM subproblem by dual bisection.

    :return: solution on the feasible side of the bisection with slack in [0, tol*P_aris] when the
        constraint is active
    :raises SubproblemInfeasible: if the surrogate power exceeds P_aris everywhere in the box
    """
    if np.any(forms.V < 0) or np.any(forms.K <= 0):
        raise ValueError("Subproblem needs V >= 0 and K > 0")

    phi_min = clip_magnitude(-forms.p_hat / (2.0 * forms.K), a_max)
    min_power = forms.constraint(phi_min)
    if min_power > P_aris * (1.0 + 1e-12):
        raise SubproblemInfeasible(min_power, P_aris)

    def finish(phi, mu, iterations):
        slack = P_aris - forms.constraint(phi)
        return SubproblemSolution(phi=phi, mu=mu, slack=slack, iterations=iterations,
                                  kkt=kkt_residuals(forms, phi, mu, P_aris, a_max))

    phi = element_solution(forms, 0.0, a_max)
    if forms.constraint(phi) <= P_aris:
        return finish(phi, 0.0, 0)

    # bracket: mu where the linear terms balance
    hi = float(np.max(np.abs(forms.f_bar))) / max(float(np.max(np.abs(forms.p_hat) + 2.0 * forms.K * a_max)), 1e-300)
    hi = max(hi, 1e-300)
    iterations = 0
    while forms.constraint(element_solution(forms, hi, a_max)) > P_aris:
        hi *= 2.0
        iterations += 1
        if iterations > 2000:
            log.warning("Multiplier bracket did not close, returning the power-minimizing point")
            return finish(phi_min, np.inf, iterations)
    lo = 0.0

    phi = element_solution(forms, hi, a_max)
    for _ in range(max_iter):
        slack = P_aris - forms.constraint(phi)
        if slack <= tol * P_aris:
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        candidate = element_solution(forms, mid, a_max)
        iterations += 1
        if forms.constraint(candidate) > P_aris:
            lo = mid
        else:
            hi = mid
            phi = candidate

    return finish(phi, hi, iterations)
