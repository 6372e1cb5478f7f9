"""Digital gradient transmission: capacity budgeting, the two-sided-mean
quantizer with error accumulation, and the sign/multi-level baselines.

Transmission itself is idealized: a round delivers any payload whose bit cost
r_t stays within the multiple-access sum-capacity share R_t, so payloads are
accounting objects, never actual bitstreams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .numerics import PURPOSE_QSGD, SeededRng, log2_binomial, top_k_magnitude_indices

SCHEME_DDSGD = "d_dsgd"
SCHEME_SIGNSGD = "sign_sgd"
SCHEME_QSGD = "qsgd"

DEFAULT_LEVEL_BITS = 2  # quantization levels = 2**level_bits


def mac_capacity_bits(s: int, m_devices: int, p_t: float, noise_variance: float) -> float:
    """Per-device bit budget for one round: the equal share of the Gaussian
    MAC sum capacity over s channel uses,

        R_t = (s / 2M) * log2(1 + M * P_t / (s * sigma^2)).
    """
    if s <= 0 or m_devices <= 0 or noise_variance <= 0:
        raise ValueError("s, m_devices, noise_variance must be positive")
    if p_t < 0:
        raise ValueError("p_t must be non-negative")
    return (s / (2.0 * m_devices)) * math.log2(1.0 + m_devices * p_t / (s * noise_variance))


# --- bit-cost formulas -------------------------------------------------------


def ddsgd_bit_cost(d: int, q: int) -> float:
    """Positions (enumerative code) + 32-bit magnitude + 1 sign bit."""
    return log2_binomial(d, q) + 33.0


def signsgd_bit_cost(d: int, q: int) -> float:
    """Positions + one sign bit per kept entry."""
    return log2_binomial(d, q) + float(q)


def qsgd_bit_cost(d: int, q: int, level_bits: int = DEFAULT_LEVEL_BITS) -> float:
    """32-bit norm header + positions + (sign + level) bits per kept entry."""
    return 32.0 + log2_binomial(d, q) + (1.0 + level_bits) * q


_GOLDEN_RATIO_CONJ = (math.sqrt(5.0) - 1.0) / 2.0


def golomb_bit_cost(q_t: float, d: float = 1.0) -> float:
    """Golomb run-length cost per encoded distance at success probability
    p = q_t / d (pass d=1 to supply p directly).

    b* = 1 + floor(log2(log((sqrt(5)-1)/2) / log(1-p))), clamped at 0 so the
    code length stays meaningful as p -> 1. Exposed for cost comparison only;
    budgeting uses the enumerative position cost.
    """
    p = q_t / d
    if not 0.0 < p < 1.0:
        raise ValueError("success probability must lie in (0, 1)")
    b_star = 1 + math.floor(math.log2(math.log(_GOLDEN_RATIO_CONJ) / math.log(1.0 - p)))
    b_star = max(b_star, 0)
    return b_star + 1.0 / (1.0 - (1.0 - p) ** (2.0**b_star))


# --- budget selection --------------------------------------------------------


@dataclass
class DigitalBudget:
    """Budget R_t, chosen sparsity q_t, and the bits actually spent r_t."""

    R_t: float
    q_t: int
    r_t: float

    def __post_init__(self):
        if self.r_t > self.R_t:
            raise ValueError(f"bit cost {self.r_t} exceeds budget {self.R_t}")


def _cost_fn(scheme: str, d: int, level_bits: int):
    if scheme == SCHEME_DDSGD:
        return lambda q: ddsgd_bit_cost(d, q)
    if scheme == SCHEME_SIGNSGD:
        return lambda q: signsgd_bit_cost(d, q)
    if scheme == SCHEME_QSGD:
        return lambda q: qsgd_bit_cost(d, q, level_bits)
    raise ValueError(f"unknown digital scheme: {scheme!r}")


def select_q(d: int, budget_bits: float, scheme: str, level_bits: int = DEFAULT_LEVEL_BITS) -> int:
    """Largest q whose scheme bit cost fits the budget; 0 when even q=1
    does not fit. The two-sided quantizer additionally caps q at d/2."""
    if budget_bits < 0:
        raise ValueError("budget must be non-negative")
    cost = _cost_fn(scheme, d, level_bits)
    if scheme == SCHEME_DDSGD:
        cap = d // 2
    else:
        cap = d
        if cost(cap) <= budget_bits:
            return cap
        # position+payload cost rises then falls with q; past the turnover
        # every cost is >= cost(d) > budget, so search the rising branch only
        per_entry = 1.0 if scheme == SCHEME_SIGNSGD else 1.0 + level_bits
        ratio = 2.0**-per_entry
        cap = min(cap, int((d - ratio) / (1.0 + ratio)) + 1)
    if cap < 1 or cost(1) > budget_bits:
        return 0
    lo, hi = 1, cap  # invariant: cost(lo) <= budget < cost(hi+1) once narrowed
    if cost(cap) <= budget_bits:
        return cap
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if cost(mid) <= budget_bits:
            lo = mid
        else:
            hi = mid
    return lo


# --- payloads ----------------------------------------------------------------


@dataclass
class QuantizedGradient:
    """Sparse one-value payload: sign*magnitude on `support`, zero elsewhere."""

    support: NDArray[np.int64]
    magnitude: float
    sign: int
    bit_cost: float
    dim: int

    def dense(self) -> NDArray[np.float64]:
        out = np.zeros(self.dim)
        if len(self.support):
            out[self.support] = self.sign * self.magnitude
        return out


@dataclass
class BaselinePayload:
    """Decoded dense vector plus accounting for the sign/multi-level codes."""

    dense: NDArray[np.float64]
    q: int
    bit_cost: float


def _zero_quantized(d: int) -> QuantizedGradient:
    return QuantizedGradient(
        support=np.empty(0, dtype=np.int64), magnitude=0.0, sign=1, bit_cost=0.0, dim=d
    )


def ddsgd_quantize(
    g: NDArray, memory: NDArray, q_t: int
) -> tuple[QuantizedGradient, NDArray[np.float64]]:
    """Two-sided mean quantizer with error feedback.

    On v = g + memory, look at the q_t largest and the q_t smallest entries
    by value; average the positive members of the top group (mu+) and the
    negative members of the bottom group (mu-); transmit whichever group has
    the larger mean magnitude, every member set to that mean (ties keep the
    positives; a group without members of its sign cedes to the other). The
    untransmitted remainder of v is carried in the returned memory, so
    output + memory_new == g + memory_old exactly.
    """
    d = g.shape[0]
    if not 1 <= q_t <= d // 2:
        raise ValueError(f"require 1 <= q_t <= d/2, got q_t={q_t}, d={d}")
    if memory.shape != g.shape:
        raise ValueError("memory/gradient shape mismatch")
    v = g + memory
    order = np.lexsort((np.arange(d), -v))  # by value, descending; ties to low index
    top = order[:q_t]
    bottom = order[d - q_t :]
    pos = top[v[top] > 0]
    neg = bottom[v[bottom] < 0]
    mu_pos = float(v[pos].mean()) if len(pos) else None
    mu_neg = float(v[neg].mean()) if len(neg) else None
    if mu_pos is None and mu_neg is None:
        payload = _zero_quantized(d)
    elif mu_neg is None or (mu_pos is not None and mu_pos >= abs(mu_neg)):
        payload = QuantizedGradient(
            support=pos, magnitude=mu_pos, sign=1, bit_cost=ddsgd_bit_cost(d, q_t), dim=d
        )
    else:
        payload = QuantizedGradient(
            support=neg, magnitude=abs(mu_neg), sign=-1, bit_cost=ddsgd_bit_cost(d, q_t), dim=d
        )
    new_memory = v - payload.dense()
    return payload, new_memory


def signsgd_encode(
    g: NDArray, budget_bits: float, memory: NDArray | None = None
) -> tuple[BaselinePayload, NDArray[np.float64] | None]:
    """Sign code: largest-magnitude entries transmitted as bare signs.

    Runs memoryless by default; pass `memory` to opt into error feedback.
    """
    d = g.shape[0]
    v = g if memory is None else g + memory
    q = select_q(d, budget_bits, SCHEME_SIGNSGD)
    if q == 0:
        dense = np.zeros(d)
        cost = 0.0
    else:
        support = top_k_magnitude_indices(v, q)
        dense = np.zeros(d)
        dense[support] = np.sign(v[support])
        cost = signsgd_bit_cost(d, q)
    new_memory = None if memory is None else v - dense
    return BaselinePayload(dense=dense, q=q, bit_cost=cost), new_memory


def qsgd_encode(
    g: NDArray,
    budget_bits: float,
    rng: SeededRng,
    level_bits: int = DEFAULT_LEVEL_BITS,
    memory: NDArray | None = None,
) -> tuple[BaselinePayload, NDArray[np.float64] | None]:
    """Multi-level stochastic quantizer on the largest-magnitude entries.

    Kept entries are scaled by the l2 norm of the kept set and stochastically
    rounded to 2**level_bits levels, which keeps the decoded value unbiased.
    Memoryless by default, like the sign code.
    """
    d = g.shape[0]
    v = g if memory is None else g + memory
    q = select_q(d, budget_bits, SCHEME_QSGD, level_bits)
    dense = np.zeros(d)
    cost = 0.0
    if q > 0:
        support = top_k_magnitude_indices(v, q)
        selected = v[support]
        norm = float(np.linalg.norm(selected))
        if norm > 0.0:
            levels = 2**level_bits
            u = np.abs(selected) / norm * levels
            lower = np.floor(u)
            frac = u - lower
            bump = rng.generator.random(q) < frac
            dense[support] = np.sign(selected) * norm * (lower + bump) / levels
        cost = qsgd_bit_cost(d, q, level_bits)
    new_memory = None if memory is None else v - dense
    return BaselinePayload(dense=dense, q=q, bit_cost=cost), new_memory


# --- round orchestration -----------------------------------------------------


@dataclass
class DigitalRoundResult:
    g_hat: NDArray[np.float64]
    budget: DigitalBudget
    per_device_bits: list[float] = field(default_factory=list)


def digital_round(
    gradients: NDArray,
    scheme: str,
    s: int,
    p_t: float,
    noise_variance: float,
    memories: list[NDArray] | None,
    rng: SeededRng | None = None,
    iteration: int = 0,
    level_bits: int = DEFAULT_LEVEL_BITS,
) -> DigitalRoundResult:
    """One digital round: budget, per-device encode, error-free delivery of
    r_t <= R_t bits, and the parameter-server average of the decoded vectors.

    `gradients` is (m_devices, d). `memories` holds each device's error
    accumulator for the two-sided quantizer (updated in place); baselines pass
    None and run memoryless.
    """
    m_devices, d = gradients.shape
    budget_bits = mac_capacity_bits(s, m_devices, p_t, noise_variance)
    decoded = np.zeros((m_devices, d))
    bits = []
    if scheme == SCHEME_DDSGD:
        if memories is None:
            raise ValueError("the two-sided quantizer requires error memories")
        q_t = select_q(d, budget_bits, scheme)
        for m in range(m_devices):
            if q_t == 0:
                # nothing affordable: the whole update accumulates locally
                memories[m] = memories[m] + gradients[m]
                bits.append(0.0)
                continue
            payload, memories[m] = ddsgd_quantize(gradients[m], memories[m], q_t)
            decoded[m] = payload.dense()
            bits.append(payload.bit_cost)
    elif scheme == SCHEME_SIGNSGD:
        q_t = select_q(d, budget_bits, scheme)
        for m in range(m_devices):
            payload, _ = signsgd_encode(gradients[m], budget_bits)
            decoded[m] = payload.dense
            bits.append(payload.bit_cost)
    elif scheme == SCHEME_QSGD:
        if rng is None:
            raise ValueError("the multi-level quantizer draws rounding bits from rng")
        q_t = select_q(d, budget_bits, scheme, level_bits)
        for m in range(m_devices):
            payload, _ = qsgd_encode(
                gradients[m],
                budget_bits,
                rng.stream(PURPOSE_QSGD, device=m, iteration=iteration),
                level_bits,
            )
            decoded[m] = payload.dense
            bits.append(payload.bit_cost)
    else:
        raise ValueError(f"unknown digital scheme: {scheme!r}")
    budget = DigitalBudget(R_t=budget_bits, q_t=q_t, r_t=max(bits) if bits else 0.0)
    return DigitalRoundResult(g_hat=decoded.mean(axis=0), budget=budget, per_device_bits=bits)
