"""Gaussian multiple-access channel and transmit-power schedules.

Each round, every device sends a length-s real vector; the server observes
the coordinate-wise sum plus i.i.d. zero-mean Gaussian noise. Power schedules
assign a per-round budget P_t whose average over the horizon must not exceed
the long-term budget.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .numerics import SeededRng, sample_gaussian

_AVG_POWER_RTOL = 1e-9

SCHEDULE_KINDS = ("constant", "linear_stair", "step_lh", "step_hl")


@dataclass
class ChannelConfig:
    s: int  # channel uses per round
    noise_variance: float = 1.0

    def __post_init__(self):
        if self.s <= 0:
            raise ValueError("s must be positive")
        if self.noise_variance < 0:
            raise ValueError("noise variance must be non-negative")


@dataclass
class ChannelFrame:
    """One round on the wire: stacked inputs, additive noise, observed sum."""

    inputs: NDArray[np.float64]  # (m_devices, s)
    noise: NDArray[np.float64]  # (s,)
    output: NDArray[np.float64]  # (s,)

    def input_powers(self) -> NDArray[np.float64]:
        return np.einsum("ms,ms->m", self.inputs, self.inputs)


def transmit(inputs: NDArray, config: ChannelConfig, rng: SeededRng) -> ChannelFrame:
    """Superpose all device inputs and add channel noise."""
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2:
        raise ValueError("inputs must be (m_devices, s)")
    if inputs.shape[1] != config.s:
        raise ValueError(f"input length {inputs.shape[1]} != channel s={config.s}")
    noise = sample_gaussian(rng, config.s, config.noise_variance)
    output = inputs.sum(axis=0) + noise
    return ChannelFrame(inputs=inputs, noise=noise, output=output)


@dataclass
class PowerSchedule:
    """Per-round power budgets P_1..P_T with average at most p_bar."""

    kind: str
    p_bar: float
    values: NDArray[np.float64]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1 or len(self.values) == 0:
            raise ValueError("schedule needs at least one round")
        if np.any(self.values < 0):
            raise ValueError("negative round power")
        mean = float(self.values.mean())
        if mean > self.p_bar * (1.0 + _AVG_POWER_RTOL):
            raise ValueError(
                f"average power {mean} exceeds budget {self.p_bar} ({self.kind})"
            )

    @property
    def horizon(self) -> int:
        return len(self.values)

    def __getitem__(self, t: int) -> float:
        return float(self.values[t])


def schedule_power(kind: str, p_bar: float, horizon: int) -> PowerSchedule:
    """Build a named schedule.

    constant:      P_t = p_bar.
    linear_stair:  P_t climbs linearly from p_bar/2 to 3*p_bar/2.
    step_lh:       thirds at p_bar/2, p_bar, 3*p_bar/2 (low first); when the
                   horizon is not divisible by 3 the remainder stays in the
                   low-power third so the average never exceeds p_bar.
    step_hl:       the same thirds, high first.
    """
    if p_bar <= 0:
        raise ValueError("p_bar must be positive")
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    t = np.arange(1, horizon + 1, dtype=np.float64)
    if kind == "constant":
        values = np.full(horizon, p_bar)
    elif kind == "linear_stair":
        if horizon == 1:
            values = np.array([p_bar])
        else:
            values = 0.5 * p_bar * (1.0 + 2.0 * (t - 1.0) / (horizon - 1.0))
    elif kind in ("step_lh", "step_hl"):
        third = horizon // 3
        n_low = horizon - 2 * third
        steps = np.concatenate(
            [
                np.full(n_low, 0.5 * p_bar),
                np.full(third, p_bar),
                np.full(third, 1.5 * p_bar),
            ]
        )
        values = steps if kind == "step_lh" else steps[::-1].copy()
    else:
        raise ValueError(f"unknown schedule kind: {kind!r}")
    return PowerSchedule(kind=kind, p_bar=p_bar, values=values)


@dataclass
class PowerAuditReport:
    per_device_mean: NDArray[np.float64]
    p_bar: float
    passed: bool


def audit_power(power_history: NDArray, p_bar: float, rtol: float = _AVG_POWER_RTOL) -> PowerAuditReport:
    """Check the long-term average-power constraint from logged per-round
    transmit powers, shape (rounds, m_devices)."""
    history = np.asarray(power_history, dtype=np.float64)
    if history.ndim != 2:
        raise ValueError("power history must be (rounds, m_devices)")
    means = history.mean(axis=0)
    passed = bool(np.all(means <= p_bar * (1.0 + rtol)))
    return PowerAuditReport(per_device_mean=means, p_bar=p_bar, passed=passed)
