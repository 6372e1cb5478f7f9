"""Shared numeric primitives: counter-based RNG streams, combinatorics,
chi-square tail quantiles, magnitude selection, spectral-norm estimation.

Everything here is deterministic given its inputs; randomness only enters
through an explicit `SeededRng`.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.typing import NDArray

# Stream purposes. Packed into the Philox key so that every (purpose, device,
# iteration) triple gets an independent, replayable stream.
PURPOSE_GENERIC = 0
PURPOSE_NOISE = 1
PURPOSE_PROJECTION = 2
PURPOSE_PARTITION = 3
PURPOSE_QSGD = 4
PURPOSE_DATASET = 5
PURPOSE_INIT = 6

_MAX_DEVICE = 1 << 20
_MAX_ITERATION = 1 << 28


def pack_stream_id(purpose: int, device: int = 0, iteration: int = 0) -> int:
    """Pack (purpose, device, iteration) into a single 64-bit stream id."""
    if not 0 <= purpose < 256:
        raise ValueError(f"purpose out of range: {purpose}")
    if not 0 <= device < _MAX_DEVICE:
        raise ValueError(f"device out of range: {device}")
    if not 0 <= iteration < _MAX_ITERATION:
        raise ValueError(f"iteration out of range: {iteration}")
    return (purpose << 48) | (device << 28) | iteration


class SeededRng:
    """Counter-based random stream keyed by (seed, stream_id).

    Thin wrapper over numpy's Philox generator. Distinct stream ids under the
    same seed give statistically independent streams, so components can draw
    in any order without perturbing each other.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        self._seed = int(seed)
        self._stream_id = int(stream_id)
        self._generator = np.random.Generator(
            np.random.Philox(key=np.array([self._seed, self._stream_id], dtype=np.uint64))
        )

    @property
    def seed(self) -> int:
        return self._seed

    @property
    def stream_id(self) -> int:
        return self._stream_id

    @property
    def generator(self) -> np.random.Generator:
        return self._generator

    def stream(self, purpose: int, device: int = 0, iteration: int = 0) -> "SeededRng":
        """Derive an independent stream for (purpose, device, iteration)."""
        return SeededRng(self._seed, pack_stream_id(purpose, device, iteration))

    def __repr__(self):  # pragma: no cover
        return f"SeededRng(seed={self._seed}, stream_id={self._stream_id})"


def sample_gaussian(rng: SeededRng, n: int, variance: float) -> NDArray[np.float64]:
    """Draw n i.i.d. zero-mean Gaussian samples with the given variance.

    variance == 0 returns exact zeros (noiseless channel mode).
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    if variance < 0:
        raise ValueError("variance must be non-negative")
    if variance == 0.0:
        return np.zeros(n)
    return rng.generator.standard_normal(n) * math.sqrt(variance)


def log2_binomial(d: int, q: int) -> float:
    """log2 of the binomial coefficient C(d, q), via log-gamma.

    Exact enough for bit-budget arithmetic at d ~ 1e4 (abs error << 1e-9 bits).
    """
    if q < 0 or q > d:
        raise ValueError(f"require 0 <= q <= d, got q={q}, d={d}")
    if q == 0 or q == d:
        return 0.0
    ln = math.lgamma(d + 1) - math.lgamma(q + 1) - math.lgamma(d - q + 1)
    return ln / math.log(2.0)


# --- regularized lower incomplete gamma -------------------------------------
# P(a, x) = gamma(a, x) / Gamma(a). Series expansion for x < a + 1, Lentz
# continued fraction for the complement otherwise. Built rather than bought so
# the bound calculus carries no scipy dependency.

_GAMMA_EPS = 1e-15
_GAMMA_MAX_ITER = 10_000
_TINY = 1e-300


def _lower_gamma_series(a: float, x: float) -> float:
    ap = a
    total = 1.0 / a
    delta = total
    for _ in range(_GAMMA_MAX_ITER):
        ap += 1.0
        delta *= x / ap
        total += delta
        if abs(delta) < abs(total) * _GAMMA_EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _upper_gamma_cf(a: float, x: float) -> float:
    # modified Lentz evaluation of the continued fraction for Q(a, x)
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _GAMMA_MAX_ITER + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _GAMMA_EPS:
            break
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))


def regularized_lower_gamma(a: float, x: float) -> float:
    """P(a, x): CDF of a Gamma(a, 1) variable at x."""
    if a <= 0:
        raise ValueError("a must be positive")
    if x < 0:
        raise ValueError("x must be non-negative")
    if x == 0.0:
        return 0.0
    if x < a + 1.0:
        return _lower_gamma_series(a, x)
    return 1.0 - _upper_gamma_cf(a, x)


def chi_square_cdf(x: float, dof: int) -> float:
    """CDF of the chi-square distribution with `dof` degrees of freedom."""
    if dof <= 0:
        raise ValueError("dof must be positive")
    if x <= 0:
        return 0.0
    return regularized_lower_gamma(dof / 2.0, x / 2.0)


def chi_quantile_rho(delta: float, dof: int) -> float:
    """rho(delta): radius such that a standard Gaussian vector in R^dof has
    norm <= rho with probability 1 - delta.

    Equivalently sqrt of the (1 - delta) quantile of chi-square(dof). Found
    by bisection on the regularized lower incomplete gamma.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must be in (0, 1)")
    if dof <= 0:
        raise ValueError("dof must be positive")
    target = 1.0 - delta
    # bracket: chi-square mean is dof, tail decays fast past it
    lo, hi = 0.0, float(dof) + 10.0
    while chi_square_cdf(hi, dof) < target:
        hi *= 2.0
        if hi > 1e12:  # pragma: no cover - unreachable for delta in (0,1)
            raise RuntimeError("quantile bracket failed")
    while hi - lo > 1e-10 * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if chi_square_cdf(mid, dof) < target:
            lo = mid
        else:
            hi = mid
    return math.sqrt(0.5 * (lo + hi))


def top_k_magnitude_indices(x: NDArray, k: int) -> NDArray[np.int64]:
    """Indices of the k largest-magnitude entries of x, ties broken toward the
    lower index. Returned sorted ascending (set semantics)."""
    n = x.shape[0]
    if not 0 <= k <= n:
        raise ValueError(f"require 0 <= k <= len(x), got k={k}, n={n}")
    if k == 0:
        return np.empty(0, dtype=np.int64)
    # lexsort: primary key is the last one; -|x| ascending = |x| descending,
    # ties fall back to index ascending
    order = np.lexsort((np.arange(n), -np.abs(x)))
    return np.sort(order[:k]).astype(np.int64)


class SpectralNormError(RuntimeError):
    """Power iteration failed to stabilize within the iteration cap."""


def estimate_spectral_norm(
    a: NDArray,
    tol: float = 1e-6,
    max_iterations: int = 500,
    rng: SeededRng | None = None,
) -> float:
    """Largest singular value of `a` by power iteration on A^T A.

    The start vector is random (from `rng`, or a fixed internal seed) to avoid
    pathological orthogonal starts. Raises SpectralNormError if the estimate
    has not stabilized to `tol` relative change within the cap.
    """
    if a.ndim != 2:
        raise ValueError("expected a 2-d array")
    gen = (rng or SeededRng(0x5EC7)).generator
    v = gen.standard_normal(a.shape[1])
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(max_iterations):
        av = a @ v
        sigma_new = float(np.linalg.norm(av))
        if sigma_new == 0.0:
            return 0.0  # zero matrix (or v in the null space of a rank-deficient A)
        w = a.T @ av
        v = w / np.linalg.norm(w)
        if abs(sigma_new - sigma) <= tol * sigma_new:
            return sigma_new
        sigma = sigma_new
    raise SpectralNormError(
        f"power iteration did not stabilize to tol={tol} in {max_iterations} iterations"
    )
