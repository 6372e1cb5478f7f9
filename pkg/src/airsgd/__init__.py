"""Distributed SGD over a bandwidth-limited Gaussian multiple-access channel.

Devices compress local gradients under a per-round power budget — either
digitally (quantize + budget bits against the MAC sum capacity) or in analog
(sparsify, randomly project, and let the channel superpose the transmissions)
— and a parameter server recovers the averaged gradient, via direct decoding
or approximate message passing, to train a shared model.
"""

from .amp import AmpConfig, AmpResult, amp_recover, soft_threshold
from .analog import (
    AnalogPayload,
    ProjectionMatrix,
    SparseVector,
    UnusableRoundError,
    analog_round,
    encode_mean_removed,
    encode_plain,
    ps_descale_mean_removed,
    ps_descale_plain,
    sparsify_with_memory,
    sparsity_lambda,
)
from .analysis import (
    BoundParams,
    BoundResult,
    InfeasibleEtaError,
    eta_feasible_max,
    failure_probability_bound,
    sigma_omega_bound,
    sum_v,
    sum_v_closed_form,
    supermartingale_value,
    v_of_t,
)
from .channel import ChannelConfig, ChannelFrame, PowerSchedule, audit_power, schedule_power, transmit
from .data import Dataset, load_mnist_dir, partition, synthetic_blobs
from .digital import (
    DigitalBudget,
    QuantizedGradient,
    ddsgd_bit_cost,
    ddsgd_quantize,
    digital_round,
    golomb_bit_cost,
    mac_capacity_bits,
    qsgd_bit_cost,
    qsgd_encode,
    select_q,
    signsgd_bit_cost,
    signsgd_encode,
)
from .harness import ExperimentConfig, ExperimentResult, run_experiment, run_sweep
from .kernels import BACKEND as KERNEL_BACKEND
from .model import ModelState, init_model, server_update, test_accuracy
from .numerics import SeededRng, chi_quantile_rho, log2_binomial, top_k_magnitude_indices

__version__ = "0.1.0"

__all__ = [
    "AmpConfig",
    "AmpResult",
    "AnalogPayload",
    "BoundParams",
    "BoundResult",
    "ChannelConfig",
    "ChannelFrame",
    "Dataset",
    "DigitalBudget",
    "ExperimentConfig",
    "ExperimentResult",
    "InfeasibleEtaError",
    "KERNEL_BACKEND",
    "ModelState",
    "PowerSchedule",
    "ProjectionMatrix",
    "QuantizedGradient",
    "SeededRng",
    "SparseVector",
    "UnusableRoundError",
    "amp_recover",
    "analog_round",
    "audit_power",
    "chi_quantile_rho",
    "ddsgd_bit_cost",
    "ddsgd_quantize",
    "digital_round",
    "encode_mean_removed",
    "encode_plain",
    "eta_feasible_max",
    "failure_probability_bound",
    "golomb_bit_cost",
    "init_model",
    "load_mnist_dir",
    "log2_binomial",
    "mac_capacity_bits",
    "partition",
    "ps_descale_mean_removed",
    "ps_descale_plain",
    "qsgd_bit_cost",
    "qsgd_encode",
    "run_experiment",
    "run_sweep",
    "schedule_power",
    "select_q",
    "server_update",
    "sigma_omega_bound",
    "signsgd_bit_cost",
    "signsgd_encode",
    "soft_threshold",
    "sparsify_with_memory",
    "sparsity_lambda",
    "sum_v",
    "sum_v_closed_form",
    "supermartingale_value",
    "synthetic_blobs",
    "test_accuracy",
    "top_k_magnitude_indices",
    "transmit",
    "v_of_t",
]
