"""Softmax-regression model and the parameter-server update.

The parameter vector theta packs the weight matrix (dim x classes, row-major)
followed by the bias (classes,), giving 784*10 + 10 = 7850 for the standard
image task. Devices compute full-shard gradients; the server applies ADAM
(or plain SGD for the analysis contracts) to the aggregated estimate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .data import Dataset

N_CLASSES = 10


def model_dim(feature_dim: int, n_classes: int = N_CLASSES) -> int:
    return feature_dim * n_classes + n_classes


@dataclass
class ModelState:
    """Server-side parameters plus ADAM moment accumulators."""

    theta: NDArray[np.float64]
    adam_m: NDArray[np.float64] = field(default=None)  # type: ignore[assignment]
    adam_v: NDArray[np.float64] = field(default=None)  # type: ignore[assignment]
    step: int = 0

    def __post_init__(self):
        if self.adam_m is None:
            self.adam_m = np.zeros_like(self.theta)
        if self.adam_v is None:
            self.adam_v = np.zeros_like(self.theta)


def init_model(feature_dim: int, n_classes: int = N_CLASSES) -> ModelState:
    # theta_0 = 0: deterministic start shared by every scheme
    return ModelState(theta=np.zeros(model_dim(feature_dim, n_classes)))


def _unpack(theta: NDArray, feature_dim: int, n_classes: int):
    w = theta[: feature_dim * n_classes].reshape(feature_dim, n_classes)
    b = theta[feature_dim * n_classes :]
    return w, b


def _log_softmax(logits: NDArray) -> NDArray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def loss(theta: NDArray, features: NDArray, labels: NDArray, n_classes: int = N_CLASSES) -> float:
    """Mean cross-entropy of the softmax model on the given batch."""
    w, b = _unpack(theta, features.shape[1], n_classes)
    logp = _log_softmax(features @ w + b)
    return float(-logp[np.arange(len(labels)), labels].mean())


def loss_and_gradient(
    theta: NDArray, features: NDArray, labels: NDArray, n_classes: int = N_CLASSES
) -> tuple[float, NDArray[np.float64]]:
    """Mean cross-entropy and its gradient w.r.t. the packed theta."""
    n, feature_dim = features.shape
    w, b = _unpack(theta, feature_dim, n_classes)
    logp = _log_softmax(features @ w + b)
    value = float(-logp[np.arange(n), labels].mean())
    resid = np.exp(logp)
    resid[np.arange(n), labels] -= 1.0
    resid /= n
    grad = np.empty_like(theta)
    grad[: feature_dim * n_classes] = (features.T @ resid).ravel()
    grad[feature_dim * n_classes :] = resid.sum(axis=0)
    return value, grad


def local_gradient(theta: NDArray, dataset: Dataset, shard: NDArray[np.int64]) -> NDArray[np.float64]:
    """Full-batch gradient on one device's shard."""
    _, grad = loss_and_gradient(theta, dataset.features[shard], dataset.labels[shard])
    return grad


def server_update(
    state: ModelState,
    gradient_estimate: NDArray,
    lr: float,
    optimizer: str = "adam",
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """Apply one optimizer step in place. Rejects non-finite estimates."""
    if not np.all(np.isfinite(gradient_estimate)):
        raise ValueError("gradient estimate contains non-finite entries")
    if optimizer == "sgd":
        state.theta -= lr * gradient_estimate
        state.step += 1
        return
    if optimizer != "adam":
        raise ValueError(f"unknown optimizer: {optimizer!r}")
    state.step += 1
    t = state.step
    state.adam_m *= beta1
    state.adam_m += (1.0 - beta1) * gradient_estimate
    state.adam_v *= beta2
    state.adam_v += (1.0 - beta2) * np.square(gradient_estimate)
    m_hat = state.adam_m / (1.0 - beta1**t)
    v_hat = state.adam_v / (1.0 - beta2**t)
    state.theta -= lr * m_hat / (np.sqrt(v_hat) + eps)


def test_accuracy(theta: NDArray, dataset: Dataset, n_classes: int = N_CLASSES) -> float:
    """Top-1 accuracy; argmax ties resolve to the lowest class index."""
    w, b = _unpack(theta, dataset.dim, n_classes)
    predictions = np.argmax(dataset.features @ w + b, axis=1)
    return float(np.mean(predictions == dataset.labels))
