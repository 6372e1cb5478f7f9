"""Approximate message passing: sparse recovery from noisy linear
measurements by iterative soft thresholding with the Onsager correction.

The solver works against any projection object exposing `rows`, `cols`,
`project(dense)` and `back_project(residual)`; the threshold tracks a robust
estimate of the residual scale, so the iteration is scale-equivariant.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from . import kernels

_MEDIAN_TO_STD = 0.6745  # normal-consistency constant for the median of |N(0,s)|
_DIVERGENCE_FACTOR = 10.0
_OSCILLATION_DAMPING = 0.5


@dataclass
class AmpConfig:
    max_iterations: int = 30
    tolerance: float = 1e-6  # residual-norm change relative to the observation norm
    sigma_tolerance: float = 1e-3  # plateau detection on the residual-scale estimate
    threshold_multiplier: float = 1.1
    damping: float = 0.0  # raised automatically on detected oscillation

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.tolerance <= 0 or self.sigma_tolerance <= 0:
            raise ValueError("tolerances must be positive")
        if not 0.0 <= self.damping < 1.0:
            raise ValueError("damping must lie in [0, 1)")


@dataclass
class AmpResult:
    estimate: NDArray
    iterations: int
    noise_scale: float  # final residual-scale estimate sigma_hat
    converged: bool
    diverged: bool = False
    noise_scale_history: list[float] = field(default_factory=list)


def soft_threshold(x: NDArray, tau: float) -> NDArray:
    """Elementwise sign(x) * max(|x| - tau, 0)."""
    if tau < 0:
        raise ValueError("tau must be non-negative")
    arr = np.asarray(x)
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float64)
    arr = np.ascontiguousarray(arr)
    out, _ = kernels.soft_threshold_count(arr, float(tau))
    return out


def _residual_scale(r: NDArray) -> float:
    return float(np.median(np.abs(r))) / _MEDIAN_TO_STD


def amp_recover(y: NDArray, projection, config: AmpConfig | None = None) -> AmpResult:
    """Recover a sparse length-d vector from y ~ A x + noise.

    Stops when the residual norm stabilizes (change below tolerance relative
    to ||y||, the exact-recovery regime), when the residual-scale estimate
    plateaus for two consecutive iterations (the noisy fixed point, where the
    residual keeps fluctuating at the noise level), or at the iteration cap.
    A residual blowing up past 10x ||y|| flags divergence and the best
    iterate seen is returned instead of aborting, so one bad round cannot
    take down a long training run.
    """
    cfg = config or AmpConfig()
    dtype = projection.dtype
    y = np.ascontiguousarray(np.asarray(y, dtype=dtype))
    if y.shape != (projection.rows,):
        raise ValueError(f"observation length {y.shape} != projection rows {projection.rows}")
    d = projection.cols
    s = projection.rows
    y_norm = float(np.linalg.norm(y))
    if y_norm == 0.0:
        return AmpResult(
            estimate=np.zeros(d, dtype=dtype),
            iterations=0,
            noise_scale=0.0,
            converged=True,
            noise_scale_history=[0.0],
        )
    x = np.zeros(d, dtype=dtype)
    r = y.copy()
    r_norm = y_norm
    sigma = _residual_scale(r)
    history = [sigma]
    best = (r_norm, x, sigma)
    damping = cfg.damping
    increases = 0
    plateau = 0
    converged = diverged = False
    iterations = 0
    for iterations in range(1, cfg.max_iterations + 1):
        pseudo = x + projection.back_project(r)
        x_new, nnz = kernels.soft_threshold_count(pseudo, cfg.threshold_multiplier * sigma)
        if damping > 0.0:
            x_new = (1.0 - damping) * x_new + damping * x
        r_new = y - projection.project(x_new) + (nnz / s) * r
        if damping > 0.0:
            r_new = (1.0 - damping) * r_new + damping * r
        new_norm = float(np.linalg.norm(r_new))
        prev_sigma = sigma
        sigma = _residual_scale(r_new)
        history.append(sigma)
        x, r = x_new, r_new
        if new_norm < best[0]:
            best = (new_norm, x, sigma)
        if new_norm > _DIVERGENCE_FACTOR * y_norm:
            diverged = True
            break
        if abs(new_norm - r_norm) <= cfg.tolerance * y_norm:
            converged = True
            break
        plateau = plateau + 1 if abs(sigma - prev_sigma) <= cfg.sigma_tolerance * sigma else 0
        if plateau >= 2:
            converged = True
            break
        if new_norm > r_norm:
            increases += 1
            if increases >= 2 and damping == 0.0:
                damping = _OSCILLATION_DAMPING
        r_norm = new_norm
    if diverged:
        _, x, sigma = best
    return AmpResult(
        estimate=x,
        iterations=iterations,
        noise_scale=sigma,
        converged=converged,
        diverged=diverged,
        noise_scale_history=history,
    )
