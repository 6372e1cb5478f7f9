"""Analog (over-the-air) gradient transmission.

Devices re-add their error memory, keep the k largest-magnitude entries,
project through a shared random matrix, and scale so every channel input
spends exactly this round's power budget. A trailing header symbol carries
the scale (and, in mean-removal mode, a second header carries the projected
mean), letting the parameter server undo the scaling before sparse recovery.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from . import kernels
from .amp import AmpConfig, AmpResult, amp_recover
from .channel import ChannelConfig, ChannelFrame, transmit
from .numerics import (
    PURPOSE_NOISE,
    PURPOSE_PROJECTION,
    SeededRng,
    top_k_magnitude_indices,
)

_YS_GUARD_FACTOR = 1e-6  # unusable-round threshold on the header symbol


class UnusableRoundError(RuntimeError):
    """The received header symbol is too close to zero to divide by."""


def sparsity_lambda(d: int, k: int) -> float:
    """Worst-case relative energy left behind by keeping k of d entries:
    ||v - sp_k(v)|| <= sqrt((d-k)/d) * ||v||."""
    if not 1 <= k <= d:
        raise ValueError(f"require 1 <= k <= d, got k={k}, d={d}")
    return math.sqrt((d - k) / d)


@dataclass
class SparsifierConfig:
    k: int
    d: int

    @property
    def lam(self) -> float:
        return sparsity_lambda(self.d, self.k)


@dataclass
class SparseVector:
    """Top-k slice of a dense vector: `values` at `indices`, zero elsewhere."""

    indices: NDArray[np.int64]
    values: NDArray[np.float64]
    dim: int

    def dense(self) -> NDArray[np.float64]:
        out = np.zeros(self.dim)
        if len(self.indices):
            out[self.indices] = self.values
        return out


def sparsify_with_memory(
    g: NDArray, memory: NDArray, k: int
) -> tuple[SparseVector, NDArray[np.float64]]:
    """Keep the k largest-magnitude entries of v = g + memory; the remainder
    becomes the new memory, so output + memory_new == g + memory_old exactly."""
    if memory.shape != g.shape:
        raise ValueError("memory/gradient shape mismatch")
    d = g.shape[0]
    if not 1 <= k <= d:
        raise ValueError(f"require 1 <= k <= d, got k={k}, d={d}")
    v = g + memory
    indices = top_k_magnitude_indices(v, k)
    new_memory = v.copy()
    new_memory[indices] = 0.0
    return SparseVector(indices=indices, values=v[indices], dim=d), new_memory


class ProjectionMatrix:
    """Random measurement matrix A with i.i.d. N(0, 1/rows) entries, shared
    between the parameter server and all devices through its seed.

    Stored transposed (cols x rows, C-order): forward and adjoint products
    are then both contiguous matrix-vector products, and projecting a sparse
    vector touches only the support's rows.
    """

    def __init__(self, seed: int, rows: int, cols: int, dtype=np.float64):
        if rows < 1 or cols < 1:
            raise ValueError("rows and cols must be positive")
        self._seed = int(seed)
        self._rows = rows
        self._cols = cols
        # stream keyed by the row count so the plain and mean-removal
        # matrices of one run are independent draws from the same seed
        gen = SeededRng(seed).stream(PURPOSE_PROJECTION, iteration=rows).generator
        scale = dtype(1.0) / dtype(math.sqrt(rows))
        self._basis_t = gen.standard_normal((cols, rows), dtype=dtype) * scale

    @property
    def seed(self) -> int:
        return self._seed

    @property
    def rows(self) -> int:
        return self._rows

    @property
    def cols(self) -> int:
        return self._cols

    @property
    def dtype(self):
        return self._basis_t.dtype.type

    def project(self, x: NDArray) -> NDArray:
        """A @ x for dense x of length cols."""
        return np.asarray(x, dtype=self._basis_t.dtype) @ self._basis_t

    def project_sparse(self, indices: NDArray, values: NDArray) -> NDArray:
        """A @ x for x given by (indices, values)."""
        return kernels.sparse_project(
            self._basis_t,
            np.ascontiguousarray(indices, dtype=np.int64),
            np.ascontiguousarray(values, dtype=self._basis_t.dtype),
        )

    def back_project(self, r: NDArray) -> NDArray:
        """A.T @ r for r of length rows."""
        return self._basis_t @ np.asarray(r, dtype=self._basis_t.dtype)

    def to_dense(self) -> NDArray:
        """The logical (rows x cols) matrix, as a transposed view."""
        return self._basis_t.T


@dataclass
class AnalogPayload:
    projected: NDArray[np.float64]  # g-tilde, length s-1 (plain) or s-2 (mean removal)
    alpha: float
    mean: float | None = None  # projected-domain mean, mean-removal mode only


def encode_plain(
    sparse: SparseVector, projection: ProjectionMatrix, p_t: float
) -> tuple[AnalogPayload, NDArray[np.float64]]:
    """Scale the projected sparse vector so the channel input spends exactly
    p_t: alpha = p_t / (||g~||^2 + 1), input = [sqrt(alpha)*g~ ; sqrt(alpha)]."""
    if p_t <= 0:
        raise ValueError("p_t must be positive")
    g_tilde = np.asarray(
        projection.project_sparse(sparse.indices, sparse.values), dtype=np.float64
    )
    alpha = p_t / (float(g_tilde @ g_tilde) + 1.0)
    root = math.sqrt(alpha)
    x = np.empty(projection.rows + 1)
    x[:-1] = root * g_tilde
    x[-1] = root
    return AnalogPayload(projected=g_tilde, alpha=alpha), x


def encode_mean_removed(
    sparse: SparseVector, projection: ProjectionMatrix, p_t: float
) -> tuple[AnalogPayload, NDArray[np.float64]]:
    """Mean-removal variant: subtract the projected mean, carry it on its own
    header symbol, and spend the saved power on the payload.

    alpha = p_t / (||g~||^2 - (s-3) mu^2 + 1); with s~ = s-2 rows that
    denominator equals ||g~ - mu||^2 + mu^2 + 1, which is the form computed
    (algebraically identical, immune to cancellation).
    """
    if p_t <= 0:
        raise ValueError("p_t must be positive")
    g_tilde = np.asarray(
        projection.project_sparse(sparse.indices, sparse.values), dtype=np.float64
    )
    mu = float(g_tilde.mean())
    centered = g_tilde - mu
    denom = float(centered @ centered) + mu * mu + 1.0
    alpha = p_t / denom
    root = math.sqrt(alpha)
    x = np.empty(projection.rows + 2)
    x[:-2] = root * centered
    x[-2] = root * mu
    x[-1] = root
    return AnalogPayload(projected=g_tilde, alpha=alpha, mean=mu), x


def ys_guard(m_devices: int, p_t: float) -> float:
    return _YS_GUARD_FACTOR * math.sqrt(m_devices * p_t)


def ps_descale_plain(
    y: NDArray, guard: float = 0.0, noise_std: float = 1.0
) -> tuple[NDArray[np.float64], float]:
    """Divide out the superposed scale header: returns (y[:-1]/y_s, effective
    noise std after division). Raises UnusableRoundError when |y_s| <= guard."""
    y_s = float(y[-1])
    if abs(y_s) <= guard or y_s == 0.0:
        raise UnusableRoundError(f"header symbol {y_s} below guard {guard}")
    return np.asarray(y[:-1], dtype=np.float64) / y_s, noise_std / abs(y_s)


def ps_descale_mean_removed(
    y: NDArray, guard: float = 0.0, noise_std: float = 1.0
) -> tuple[NDArray[np.float64], float]:
    """Re-add the transmitted mean and divide out the scale header:
    (y[:-2] + y[-2]) / y_s. Two noise components add per coordinate, hence
    the sqrt(2) on the effective noise std."""
    y_s = float(y[-1])
    if abs(y_s) <= guard or y_s == 0.0:
        raise UnusableRoundError(f"header symbol {y_s} below guard {guard}")
    obs = (np.asarray(y[:-2], dtype=np.float64) + float(y[-2])) / y_s
    return obs, noise_std * math.sqrt(2.0) / abs(y_s)


@dataclass
class AnalogRoundResult:
    g_hat: NDArray[np.float64]
    frame: ChannelFrame
    amp: AmpResult | None
    unusable: bool = False


def analog_round(
    gradients: NDArray,
    memories: list[NDArray],
    projection: ProjectionMatrix,
    k: int,
    p_t: float,
    channel: ChannelConfig,
    rng: SeededRng,
    iteration: int = 0,
    mean_removal: bool = False,
    amp_config: AmpConfig | None = None,
) -> AnalogRoundResult:
    """One over-the-air round: sparsify+encode per device, superpose on the
    channel, descale, and recover the averaged gradient estimate with AMP.

    `projection` must have s-1 rows (plain) or s-2 (mean removal) for the
    channel's s. An unusable header or non-finite recovery yields g_hat = 0
    with the `unusable` flag set rather than an exception.
    """
    m_devices, d = gradients.shape
    expect_rows = channel.s - (2 if mean_removal else 1)
    if projection.rows != expect_rows or projection.cols != d:
        raise ValueError(
            f"projection is {projection.rows}x{projection.cols}, "
            f"need {expect_rows}x{d} for s={channel.s}"
        )
    inputs = np.empty((m_devices, channel.s))
    for m in range(m_devices):
        sparse, memories[m] = sparsify_with_memory(gradients[m], memories[m], k)
        if mean_removal:
            _, inputs[m] = encode_mean_removed(sparse, projection, p_t)
        else:
            _, inputs[m] = encode_plain(sparse, projection, p_t)
    frame = transmit(inputs, channel, rng.stream(PURPOSE_NOISE, iteration=iteration))
    guard = ys_guard(m_devices, p_t)
    descale = ps_descale_mean_removed if mean_removal else ps_descale_plain
    try:
        observation, _ = descale(frame.output, guard, math.sqrt(channel.noise_variance))
    except UnusableRoundError:
        return AnalogRoundResult(g_hat=np.zeros(d), frame=frame, amp=None, unusable=True)
    result = amp_recover(observation, projection, amp_config)
    g_hat = np.asarray(result.estimate, dtype=np.float64)
    if not np.all(np.isfinite(g_hat)):
        return AnalogRoundResult(g_hat=np.zeros(d), frame=frame, amp=result, unusable=True)
    return AnalogRoundResult(g_hat=g_hat, frame=frame, amp=result)
