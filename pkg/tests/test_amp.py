"""Sparse recovery solver: thresholding, convergence, robustness flags."""

import math

import numpy as np
import pytest

from airsgd.amp import AmpConfig, amp_recover, soft_threshold
from airsgd.analog import ProjectionMatrix


def _sparse_problem(seed, d=200, k=5, rows=100, noise_std=0.0, amplitude=3.0):
    rng = np.random.default_rng(seed)
    projection = ProjectionMatrix(seed=seed, rows=rows, cols=d)
    x = np.zeros(d)
    support = rng.choice(d, size=k, replace=False)
    x[support] = amplitude * rng.standard_normal(k)
    y = projection.project(x)
    if noise_std > 0:
        y = y + noise_std * rng.standard_normal(rows)
    return projection, x, support, y


def _ls_on_support(projection, support, y):
    cols = projection.to_dense()[:, support]
    coef, *_ = np.linalg.lstsq(cols, y, rcond=None)
    out = np.zeros(projection.cols)
    out[support] = coef
    return out


def test_soft_threshold_hand_values():
    x = np.array([3.0, -2.0, 0.5, 0.0, -1.0])
    np.testing.assert_array_equal(soft_threshold(x, 1.0), [2.0, -1.0, 0.0, 0.0, 0.0])
    np.testing.assert_array_equal(soft_threshold(x, 0.0), x)


def test_soft_threshold_upcasts_integers():
    out = soft_threshold(np.array([5, -4, 1]), 2.0)
    assert out.dtype == np.float64
    np.testing.assert_array_equal(out, [3.0, -2.0, 0.0])


def test_soft_threshold_rejects_negative_tau():
    with pytest.raises(ValueError, match="non-negative"):
        soft_threshold(np.ones(3), -0.5)


def test_config_validation():
    with pytest.raises(ValueError, match="max_iterations"):
        AmpConfig(max_iterations=0)
    with pytest.raises(ValueError, match="tolerance"):
        AmpConfig(tolerance=0.0)
    with pytest.raises(ValueError, match="damping"):
        AmpConfig(damping=1.0)
    with pytest.raises(ValueError, match="damping"):
        AmpConfig(damping=-0.1)
    assert AmpConfig(damping=0.99).damping == 0.99


def test_zero_observation_short_circuits():
    projection = ProjectionMatrix(seed=1, rows=10, cols=25)
    result = amp_recover(np.zeros(10), projection)
    np.testing.assert_array_equal(result.estimate, np.zeros(25))
    assert result.iterations == 0
    assert result.converged
    assert not result.diverged
    assert result.noise_scale == 0.0
    assert result.noise_scale_history == [0.0]


def test_observation_length_mismatch():
    projection = ProjectionMatrix(seed=1, rows=10, cols=25)
    with pytest.raises(ValueError, match="observation length"):
        amp_recover(np.zeros(9), projection)


def test_noiseless_recovery_matches_support_oracle():
    projection, x, support, y = _sparse_problem(seed=42)
    result = amp_recover(y, projection)
    nmse = np.sum((result.estimate - x) ** 2) / np.sum(x**2)
    assert nmse <= 1e-4
    oracle = _ls_on_support(projection, support, y)
    oracle_nmse = np.sum((oracle - x) ** 2) / np.sum(x**2)
    assert oracle_nmse <= 1e-20  # exact problem: the oracle nails it
    assert not result.diverged


def test_noiseless_recovery_batch():
    hits = 0
    for seed in range(10):
        projection, x, _, y = _sparse_problem(seed=seed)
        result = amp_recover(y, projection)
        nmse = np.sum((result.estimate - x) ** 2) / np.sum(x**2)
        hits += nmse <= 1e-4
    assert hits >= 9


def test_scale_equivariance():
    # power-of-two scaling is exact in floating point, so the whole
    # iteration commutes with it bit for bit
    projection, _, _, y = _sparse_problem(seed=7, noise_std=0.05)
    base = amp_recover(y, projection)
    scaled = amp_recover(8.0 * y, projection)
    np.testing.assert_array_equal(scaled.estimate, 8.0 * base.estimate)
    assert scaled.iterations == base.iterations
    assert scaled.noise_scale == 8.0 * base.noise_scale


def test_noise_scale_tracks_true_sigma():
    sigma = 0.05
    projection, _, _, y = _sparse_problem(seed=3, noise_std=sigma)
    result = amp_recover(y, projection)
    assert sigma / 2 <= result.noise_scale <= sigma * 2


def test_noise_scale_shrinks_from_start():
    shrunk = 0
    for seed in range(20):
        projection, _, _, y = _sparse_problem(seed=100 + seed, noise_std=0.02)
        result = amp_recover(y, projection)
        hist = result.noise_scale_history
        shrunk += hist[-1] <= hist[0]
    assert shrunk >= 19


def test_iteration_cap_respected():
    projection, _, _, y = _sparse_problem(seed=5, noise_std=0.5)
    result = amp_recover(y, projection, AmpConfig(max_iterations=1, tolerance=1e-12))
    assert result.iterations == 1
    assert not result.converged


def test_divergence_returns_best_iterate():
    class ExplodingProjection:
        """Adjoint far too large for the forward map: iterates blow up."""

        def __init__(self, inner):
            self.inner = inner
            self.rows = inner.rows
            self.cols = inner.cols
            self.dtype = inner.dtype

        def project(self, x):
            return self.inner.project(x)

        def back_project(self, r):
            return 50.0 * self.inner.back_project(r)

    inner = ProjectionMatrix(seed=6, rows=40, cols=80)
    rng = np.random.default_rng(6)
    y = rng.standard_normal(40)
    result = amp_recover(y, ExplodingProjection(inner), AmpConfig(max_iterations=30))
    assert result.diverged
    assert not result.converged
    assert np.all(np.isfinite(result.estimate))


def test_damped_recovery_still_accurate():
    projection, x, _, y = _sparse_problem(seed=9)
    result = amp_recover(y, projection, AmpConfig(damping=0.3))
    nmse = np.sum((result.estimate - x) ** 2) / np.sum(x**2)
    assert nmse <= 1e-3


def test_history_length_matches_iterations():
    projection, _, _, y = _sparse_problem(seed=12, noise_std=0.01)
    result = amp_recover(y, projection)
    # initial scale plus one entry per completed iteration
    assert len(result.noise_scale_history) == result.iterations + 1
    assert result.noise_scale == result.noise_scale_history[-1]
