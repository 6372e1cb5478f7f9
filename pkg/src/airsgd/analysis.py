"""Convergence-bound calculus for noisy distributed SGD.

Everything here is a deterministic function of the bound parameters: the
sparsification contraction lambda, the measurement-matrix spectral bound
sigma_max, the per-round effective-noise bound, the drift series v(t), the
learning-rate feasibility ceiling, the rate-supermartingale value, and the
final failure-probability bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.typing import NDArray

from .analog import sparsity_lambda
from .channel import PowerSchedule
from .numerics import chi_quantile_rho


class InfeasibleEtaError(ValueError):
    """The supplied learning rate violates the feasibility ceiling."""


@dataclass
class BoundParams:
    """Inputs to the convergence bounds.

    c: strong-convexity constant; epsilon: squared radius of the success
    region; grad_bound: G, the gradient first-moment bound; eta: learning
    rate; delta: tail probability behind rho(delta); noise_std: channel noise
    std; m_devices, dim, s, k: system shape; power: per-round budgets (its
    horizon is the bound horizon T).
    """

    c: float
    epsilon: float
    grad_bound: float
    eta: float
    delta: float
    noise_std: float
    m_devices: int
    dim: int
    s: int
    k: int
    power: PowerSchedule

    def __post_init__(self):
        if min(self.c, self.epsilon, self.grad_bound, self.eta) <= 0:
            raise ValueError("c, epsilon, grad_bound, eta must be positive")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")
        if self.m_devices < 1 or self.dim < 1:
            raise ValueError("m_devices and dim must be positive")
        if self.s < 2:
            raise ValueError("s must be at least 2")
        if not 1 <= self.k <= self.dim:
            raise ValueError("k must lie in [1, dim]")

    @property
    def horizon(self) -> int:
        return self.power.horizon

    @property
    def lam(self) -> float:
        return sparsity_lambda(self.dim, self.k)

    @property
    def sigma_max(self) -> float:
        return math.sqrt(self.dim / (self.s - 1)) + 1.0

    @cached_property
    def rho(self) -> float:
        return chi_quantile_rho(self.delta, self.dim)


def _geometric_sum(lam: float, n_terms: int) -> float:
    """1 + lam + ... + lam^(n_terms-1), with explicit lam -> 0/1 branches."""
    if n_terms <= 0:
        return 0.0
    if lam == 0.0:
        return 1.0
    if lam == 1.0:
        return float(n_terms)
    return (1.0 - lam**n_terms) / (1.0 - lam)


def sigma_omega_bound(t: int, params: BoundParams) -> float:
    """Upper bound on the expected effective AMP noise scale at round t:
    (sigma / (M sqrt(P_t))) * (sigma_max * (1 - lam^(t+1))/(1 - lam) * G + 1).
    """
    p_t = params.power[t]
    if p_t <= 0:
        raise ValueError("P_t must be positive")
    lam = params.lam
    geom = _geometric_sum(lam, t + 1)
    return (
        params.noise_std
        / (params.m_devices * math.sqrt(p_t))
        * (params.sigma_max * geom * params.grad_bound + 1.0)
    )


def v_of_t(t: int, params: BoundParams) -> float:
    """Per-round drift term of the convergence bound:
    lam*((1+lam)(1-lam^t)/(1-lam) + 1)*G + rho(delta) * sigma_omega_bound(t).
    """
    lam = params.lam
    sparsity_term = lam * ((1.0 + lam) * _geometric_sum(lam, t) + 1.0) * params.grad_bound
    return sparsity_term + params.rho * sigma_omega_bound(t, params)


def v_series(params: BoundParams) -> NDArray[np.float64]:
    return np.array([v_of_t(t, params) for t in range(params.horizon)])


def sum_v(params: BoundParams) -> float:
    """Direct summation of v(t) over the horizon."""
    return float(v_series(params).sum())


def sum_v_closed_form(params: BoundParams) -> float:
    """Closed form of sum_{t=0}^{T-1} v(t) for constant power.

    With kappa = rho * sigma / (M sqrt(P)):
      sum = [lam(1+lam)/(1-lam) + lam] G T + kappa (sigma_max G/(1-lam) + 1) T
            - lam(1+lam) G (1-lam^T)/(1-lam)^2
            - kappa sigma_max G lam (1-lam^T)/(1-lam)^2
    using sum(1-lam^t) = T - (1-lam^T)/(1-lam) and
    sum(1-lam^(t+1)) = T - lam(1-lam^T)/(1-lam).
    """
    values = params.power.values
    if not np.all(values == values[0]):
        raise ValueError("closed form requires a constant power schedule")
    p = float(values[0])
    if p <= 0:
        raise ValueError("P must be positive")
    lam = params.lam
    big_t = params.horizon
    g = params.grad_bound
    kappa = params.rho * params.noise_std / (params.m_devices * math.sqrt(p))
    if lam == 0.0:
        return kappa * (params.sigma_max * g + 1.0) * big_t
    tail = (1.0 - lam**big_t) / (1.0 - lam) ** 2
    total = (lam * (1.0 + lam) / (1.0 - lam) + lam) * g * big_t
    total += kappa * (params.sigma_max * g / (1.0 - lam) + 1.0) * big_t
    total -= lam * (1.0 + lam) * g * tail
    total -= kappa * params.sigma_max * g * lam * tail
    return total


def eta_feasible_max(params: BoundParams) -> float:
    """Learning-rate feasibility ceiling 2(c eps T - sqrt(eps) sum v) / (T G^2).
    Can be non-positive, signaling that no learning rate is admissible."""
    big_t = params.horizon
    total_v = sum_v(params)
    return (
        2.0
        * (params.c * params.epsilon * big_t - math.sqrt(params.epsilon) * total_v)
        / (big_t * params.grad_bound**2)
    )


def _curvature_margin(params: BoundParams) -> float:
    # 2 eta c eps - eta^2 G^2: positive for every feasible eta
    return 2.0 * params.eta * params.c * params.epsilon - (params.eta * params.grad_bound) ** 2


def supermartingale_value(
    theta_t: NDArray, t: int, params: BoundParams, theta_star: NDArray
) -> float:
    """W_t = eps/(2 eta c eps - eta^2 G^2) * log(e ||theta_t - theta*||^2 / eps) + t.

    Callers freeze the process once it enters the success region; this just
    evaluates the formula outside it.
    """
    margin = _curvature_margin(params)
    if margin <= 0:
        raise ValueError("2*eta*c*eps - eta^2 G^2 must be positive")
    dist_sq = float(np.sum((np.asarray(theta_t) - np.asarray(theta_star)) ** 2))
    return params.epsilon / margin * math.log(math.e * dist_sq / params.epsilon) + t


@dataclass
class BoundResult:
    v_series: NDArray[np.float64]
    eta_max: float
    failure_probability: float  # raw; can exceed 1, clamp only for display
    lipschitz: float


def failure_probability_bound(params: BoundParams, theta_star_norm_sq: float) -> BoundResult:
    """Probability bound on never entering the success region by time T:

        eps / ((2 eta c eps - eta^2 G^2)(T - eta L sum v)) * log(e ||theta*||^2 / eps)

    with L = 2 sqrt(eps) / (2 eta c eps - eta^2 G^2). Raises InfeasibleEtaError
    when eta is at or above the feasibility ceiling.
    """
    if theta_star_norm_sq <= 0:
        raise ValueError("theta_star_norm_sq must be positive")
    series = v_series(params)
    total_v = float(series.sum())
    eta_max = eta_feasible_max(params)
    if params.eta >= eta_max:
        raise InfeasibleEtaError(f"eta={params.eta} is not below the ceiling {eta_max}")
    margin = _curvature_margin(params)
    if margin <= 0:  # unreachable once eta < eta_max <= 2 c eps / G^2; kept as a guard
        raise ValueError("curvature margin non-positive")
    lipschitz = 2.0 * math.sqrt(params.epsilon) / margin
    denom = params.horizon - params.eta * lipschitz * total_v
    if denom <= 0:
        raise ValueError("horizon term non-positive; bound undefined")
    probability = (
        params.epsilon
        / (margin * denom)
        * math.log(math.e * theta_star_norm_sq / params.epsilon)
    )
    return BoundResult(
        v_series=series,
        eta_max=eta_max,
        failure_probability=probability,
        lipschitz=lipschitz,
    )
