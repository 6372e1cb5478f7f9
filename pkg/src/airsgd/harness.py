"""Experiment orchestration: configuration, the training loop, metrics CSV,
grids, the bound report, and the built-in property self-test.

A run is fully determined by its config (including the seed): the metrics
CSV is byte-identical across repeats except for the wall-clock column.
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import itertools
import json
import math
import os
import time
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import analysis, data
from .amp import AmpConfig
from .analog import ProjectionMatrix, analog_round, sparsify_with_memory
from .channel import ChannelConfig, PowerSchedule, audit_power, schedule_power
from .digital import DEFAULT_LEVEL_BITS, digital_round
from .model import init_model, local_gradient, loss, model_dim, server_update, test_accuracy
from .numerics import SeededRng

MNIST_DIR_ENV = "AIRSGD_MNIST_DIR"

SCHEMES = ("error_free", "a_dsgd", "d_dsgd", "sign_sgd", "qsgd")

METRICS_VERSION = "airsgd-metrics v1"
METRICS_COLUMNS = (
    "iteration",
    "accuracy",
    "train_loss",
    "bit_budget",
    "bits_used",
    "transmit_power",
    "amp_iterations",
    "amp_converged",
    "wall_ms",
)


@dataclass
class ExperimentConfig:
    """One experiment cell. All fields have defaults; JSON round-trips."""

    scheme: str = "error_free"
    m_devices: int = 25
    shard_size: int = 1000
    rounds: int = 300
    p_bar: float = 500.0
    power_schedule: str = "constant"
    noise_variance: float = 1.0
    s: int | None = None  # absolute channel uses; None -> s_fraction of d
    s_fraction: float = 0.5
    k: int | None = None  # absolute sparsity; None -> k_fraction of s
    k_fraction: float = 0.5
    data_mode: str = "iid"  # iid | non_iid
    dataset: str = "auto"  # auto | synthetic | mnist
    mnist_dir: str | None = None  # overrides the environment variable
    n_train: int = 60_000
    n_test: int = 10_000
    data_seed: int = 2024  # dataset generation; deliberately not the run seed
    seed: int = 1
    optimizer: str = "adam"
    lr: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    level_bits: int = DEFAULT_LEVEL_BITS
    mean_removal_rounds: int = 20  # 0 disables mean removal
    amp_max_iterations: int = 30
    amp_tolerance: float = 1e-6
    amp_threshold_multiplier: float = 1.1
    dtype: str = "float32"  # projection/AMP arithmetic; headers stay float64

    def resolve_s(self, d: int) -> int:
        return self.s if self.s is not None else int(d * self.s_fraction)

    def resolve_k(self, s: int) -> int:
        return self.k if self.k is not None else int(s * self.k_fraction)

    def validate(self, d: int) -> None:
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; pick one of {SCHEMES}")
        if self.rounds < 0:
            raise ValueError("rounds must be non-negative")
        if self.data_mode not in ("iid", "non_iid"):
            raise ValueError(f"unknown data mode {self.data_mode!r}")
        if self.dataset not in ("auto", "synthetic", "mnist"):
            raise ValueError(f"unknown dataset {self.dataset!r}")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")
        s = self.resolve_s(d)
        k = self.resolve_k(s)
        if s < 2 or s > d:
            raise ValueError(f"resolved s={s} outside [2, d={d}]")
        if self.scheme == "a_dsgd" and not 1 <= k < s - 1:
            raise ValueError(f"analog scheme needs 1 <= k < s-1, got k={k}, s={s}")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        payload = json.loads(text)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(payload) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**payload)

    def config_hash(self) -> str:
        canonical = json.dumps(asdict(self), sort_keys=True)
        return hashlib.sha256(canonical.encode()).hexdigest()[:12]


@dataclass
class MetricsRow:
    iteration: int
    accuracy: float
    train_loss: float
    bit_budget: float  # R_t (digital schemes; 0 otherwise)
    bits_used: float  # r_t
    transmit_power: float  # mean measured ||x_m||^2 (analog) or the budget P_t
    amp_iterations: int
    amp_converged: int  # 1/0; 1 for non-analog rounds
    wall_ms: float


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: list[MetricsRow]
    final_theta: np.ndarray
    final_accuracy: float
    audits: dict

    def to_csv(self, path: str) -> None:
        write_metrics_csv(path, self.config, self.rows)


def _fmt(value) -> str:
    # shortest-round-trip decimal so identical runs give identical bytes
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_metrics_csv(path: str, config: ExperimentConfig, rows: list[MetricsRow]) -> None:
    lines = [f"# {METRICS_VERSION}", f"# config {config.config_hash()}", ",".join(METRICS_COLUMNS)]
    for row in rows:
        lines.append(
            ",".join(
                (
                    str(row.iteration),
                    _fmt(row.accuracy),
                    _fmt(row.train_loss),
                    _fmt(row.bit_budget),
                    _fmt(row.bits_used),
                    _fmt(row.transmit_power),
                    str(row.amp_iterations),
                    str(row.amp_converged),
                    _fmt(row.wall_ms),
                )
            )
        )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_dataset(config: ExperimentConfig) -> tuple[data.Dataset, data.Dataset]:
    """Resolve the train/test pair: IDX files when requested or discoverable,
    otherwise the synthetic generator at the configured scale."""
    mnist_dir = config.mnist_dir or os.environ.get(MNIST_DIR_ENV)
    if config.dataset == "mnist" or (config.dataset == "auto" and mnist_dir):
        if not mnist_dir:
            raise FileNotFoundError(
                f"dataset 'mnist' requested but no directory given; set {MNIST_DIR_ENV}"
            )
        return data.load_mnist_dir(mnist_dir)
    return data.synthetic_blobs(config.n_train, config.n_test, SeededRng(config.data_seed))


def run_experiment(
    config: ExperimentConfig,
    dataset_pair: tuple[data.Dataset, data.Dataset] | None = None,
) -> ExperimentResult:
    """Run T rounds of the configured scheme and return metrics + final model.

    Round structure: broadcast theta (lossless), per-device full-shard
    gradient, scheme-specific encode/transmit/decode into the gradient
    estimate, one server optimizer step, then evaluation. The error-free
    scheme skips the channel and averages the exact gradients.
    """
    train, test = dataset_pair if dataset_pair is not None else load_dataset(config)
    d = model_dim(train.dim)
    config.validate(d)
    s = config.resolve_s(d)
    k = config.resolve_k(s)
    dtype = np.float32 if config.dtype == "float32" else np.float64

    rng = SeededRng(config.seed)
    shards = data.partition(train, config.m_devices, config.shard_size, config.data_mode, rng).shards
    eval_features = train.features[np.concatenate(shards)]
    eval_labels = train.labels[np.concatenate(shards)]
    state = init_model(train.dim)
    schedule = schedule_power(config.power_schedule, config.p_bar, max(config.rounds, 1))
    channel = ChannelConfig(s=s, noise_variance=config.noise_variance)
    amp_config = AmpConfig(
        max_iterations=config.amp_max_iterations,
        tolerance=config.amp_tolerance,
        threshold_multiplier=config.amp_threshold_multiplier,
    )

    needs_memory = config.scheme in ("a_dsgd", "d_dsgd")
    memories = [np.zeros(d) for _ in range(config.m_devices)] if needs_memory else None
    proj_plain = proj_mean = None
    if config.scheme == "a_dsgd":
        proj_plain = ProjectionMatrix(config.seed, s - 1, d, dtype=dtype)
        if config.mean_removal_rounds > 0:
            proj_mean = ProjectionMatrix(config.seed, s - 2, d, dtype=dtype)

    rows: list[MetricsRow] = []
    power_log = []  # analog: measured per-device powers, one row per round
    unusable_rounds = 0
    for t in range(config.rounds):
        started = time.perf_counter()
        p_t = schedule[t]
        gradients = np.stack(
            [local_gradient(state.theta, train, shard) for shard in shards]
        )
        bit_budget = bits_used = 0.0
        transmit_power = 0.0
        amp_iterations = 0
        amp_converged = 1
        if config.scheme == "error_free":
            g_hat = gradients.mean(axis=0)
        elif config.scheme == "a_dsgd":
            mean_removal = t < config.mean_removal_rounds
            projection = proj_mean if mean_removal else proj_plain
            outcome = analog_round(
                gradients,
                memories,
                projection,
                k,
                p_t,
                channel,
                rng,
                iteration=t,
                mean_removal=mean_removal,
                amp_config=amp_config,
            )
            g_hat = outcome.g_hat
            powers = outcome.frame.input_powers()
            power_log.append(powers)
            transmit_power = float(powers.mean())
            if outcome.unusable:
                unusable_rounds += 1
                amp_converged = 0
            elif outcome.amp is not None:
                amp_iterations = outcome.amp.iterations
                amp_converged = int(outcome.amp.converged)
        else:
            outcome = digital_round(
                gradients,
                config.scheme,
                s,
                p_t,
                config.noise_variance,
                memories,
                rng=rng,
                iteration=t,
                level_bits=config.level_bits,
            )
            g_hat = outcome.g_hat
            bit_budget = outcome.budget.R_t
            bits_used = outcome.budget.r_t
            transmit_power = p_t  # idealized coding transmits at the round budget
        server_update(
            state,
            g_hat,
            config.lr,
            optimizer=config.optimizer,
            beta1=config.adam_beta1,
            beta2=config.adam_beta2,
            eps=config.adam_eps,
        )
        rows.append(
            MetricsRow(
                iteration=t,
                accuracy=test_accuracy(state.theta, test),
                train_loss=loss(state.theta, eval_features, eval_labels),
                bit_budget=bit_budget,
                bits_used=bits_used,
                transmit_power=transmit_power,
                amp_iterations=amp_iterations,
                amp_converged=amp_converged,
                wall_ms=(time.perf_counter() - started) * 1e3,
            )
        )
    audits = _final_audits(config, schedule, rows, power_log, unusable_rounds)
    return ExperimentResult(
        config=config,
        rows=rows,
        final_theta=state.theta,
        final_accuracy=test_accuracy(state.theta, test),
        audits=audits,
    )


def _final_audits(config, schedule: PowerSchedule, rows, power_log, unusable_rounds) -> dict:
    audits = {
        "bit_budget_ok": all(r.bits_used <= r.bit_budget + 1e-12 for r in rows),
        "unusable_rounds": unusable_rounds,
    }
    # average-power constraint on the schedule actually used
    used = schedule.values[: len(rows)] if rows else schedule.values[:0]
    audits["avg_power_ok"] = bool(len(used) == 0 or used.mean() <= config.p_bar * (1 + 1e-9))
    if power_log:
        history = np.asarray(power_log)
        budgets = schedule.values[: len(history)][:, None]
        audits["round_power_ok"] = bool(
            np.all(np.abs(history - budgets) <= 1e-9 * budgets)
        )
        audits["avg_power_ok"] = audits["avg_power_ok"] and audit_power(
            history, config.p_bar
        ).passed
    return audits


# --- sweeps -------------------------------------------------------------------


def _run_cell(args):
    index, config, out_dir = args
    try:
        result = run_experiment(config)
        path = os.path.join(out_dir, f"metrics_{config.config_hash()}.csv")
        result.to_csv(path)
        return {
            "cell": index,
            "status": "ok",
            "final_accuracy": result.final_accuracy,
            "path": path,
            "audits": result.audits,
        }
    except Exception as exc:  # sweep must survive bad cells
        return {"cell": index, "status": f"error: {exc}", "final_accuracy": "", "path": ""}


def expand_grid(base: ExperimentConfig, grid: dict[str, list]) -> list[ExperimentConfig]:
    """Cross product of the grid values over the base config; each cell's
    seed is derived from (base seed, cell index)."""
    if not grid:
        return []
    for key in grid:
        if key not in ExperimentConfig.__dataclass_fields__:
            raise ValueError(f"unknown grid field: {key}")
    keys = sorted(grid)
    cells = []
    for index, combo in enumerate(itertools.product(*(grid[k] for k in keys))):
        overrides = dict(zip(keys, combo))
        cell = replace(base, **overrides)
        if "seed" not in overrides:
            cell = replace(cell, seed=base.seed + index)
        cells.append(cell)
    return cells


def run_sweep(
    base: ExperimentConfig,
    grid: dict[str, list],
    out_dir: str,
    parallelism: int = 1,
) -> list[dict]:
    """Run every grid cell, one metrics CSV each plus a summary CSV.

    Failures are recorded in the summary and do not stop other cells.
    """
    os.makedirs(out_dir, exist_ok=True)
    cells = expand_grid(base, grid)
    jobs = [(i, cell, out_dir) for i, cell in enumerate(cells)]
    if parallelism > 1 and len(jobs) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=parallelism) as pool:
            outcomes = list(pool.map(_run_cell, jobs))
    else:
        outcomes = [_run_cell(job) for job in jobs]
    summary_path = os.path.join(out_dir, "summary.csv")
    with open(summary_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# {METRICS_VERSION} sweep\n")
        fh.write("cell,status,final_accuracy,path\n")
        for row in outcomes:
            acc = _fmt(row["final_accuracy"]) if row["final_accuracy"] != "" else ""
            fh.write(f"{row['cell']},{row['status']},{acc},{row['path']}\n")
    return outcomes


# --- bound report --------------------------------------------------------------


def emit_bound_report(
    params: analysis.BoundParams, theta_star_norm_sq: float, path: str
) -> None:
    """CSV of the drift series and the convergence bound: one row per round
    with columns (t, v_t, cum_v, eta_max, bound, status); an infeasible
    learning rate produces a single flagged row instead."""
    lines = [f"# {METRICS_VERSION} bounds", "t,v_t,cum_v,eta_max,bound,status"]
    try:
        result = analysis.failure_probability_bound(params, theta_star_norm_sq)
    except analysis.InfeasibleEtaError:
        eta_max = analysis.eta_feasible_max(params)
        lines.append(f"0,,,{_fmt(eta_max)},,infeasible")
    else:
        cum = 0.0
        for t, v_t in enumerate(result.v_series):
            cum += float(v_t)
            bound = _fmt(result.failure_probability) if t == params.horizon - 1 else ""
            lines.append(
                f"{t},{_fmt(v_t)},{_fmt(cum)},{_fmt(result.eta_max)},{bound},ok"
            )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


# --- selftest -------------------------------------------------------------------


def selftest(verbose: bool = True) -> int:
    """Small built-in property suite (the full suite lives in the test tree).
    Returns a process exit code."""
    from .digital import ddsgd_quantize

    failures = []

    def check(name, fn):
        try:
            fn()
            if verbose:
                print(f"ok      {name}")
        except Exception as exc:
            failures.append((name, exc))
            if verbose:
                print(f"FAILED  {name}: {exc}")

    def conservation():
        gen = SeededRng(7).generator
        for _ in range(500):
            g = gen.standard_normal(64)
            mem = gen.standard_normal(64)
            payload, new_mem = ddsgd_quantize(g, mem, 8)
            assert np.max(np.abs(payload.dense() + new_mem - (g + mem))) <= 1e-12
            sparse, new_mem2 = sparsify_with_memory(g, mem, 8)
            assert np.max(np.abs(sparse.dense() + new_mem2 - (g + mem))) <= 1e-12

    def top_k_energy():
        from .analog import sparsity_lambda

        gen = SeededRng(8).generator
        for _ in range(200):
            v = gen.standard_normal(128)
            sparse, _ = sparsify_with_memory(v, np.zeros(128), 32)
            left = np.linalg.norm(v - sparse.dense())
            assert left <= sparsity_lambda(128, 32) * np.linalg.norm(v) + 1e-12

    def harmonic_arithmetic():
        gen = SeededRng(9).generator
        for _ in range(1000):
            n = int(gen.integers(2, 51))
            a = gen.random(n) + 1e-3
            assert 1.0 / np.sum(1.0 / a) <= np.sum(a) / n**2 + 1e-12

    def schedules():
        for kind in ("constant", "linear_stair", "step_lh", "step_hl"):
            for horizon in (1, 2, 3, 10, 300, 301):
                sched = schedule_power(kind, 200.0, horizon)
                assert sched.values.mean() <= 200.0 * (1 + 1e-9)

    def amp_noiseless():
        from .amp import amp_recover

        gen = SeededRng(10).generator
        proj = ProjectionMatrix(11, 100, 200)
        for trial in range(5):
            x = np.zeros(200)
            support = gen.choice(200, 5, replace=False)
            x[support] = gen.choice([-1.0, 1.0], 5)
            y = proj.project(x)
            est = amp_recover(y, proj).estimate
            nmse = np.sum((est - x) ** 2) / np.sum(x**2)
            assert nmse <= 1e-4, f"trial {trial}: NMSE {nmse}"

    def closed_form():
        for lam_k in (1962, 3925, 7850):
            params = analysis.BoundParams(
                c=0.1,
                epsilon=0.01,
                grad_bound=1.0,
                eta=1e-4,
                delta=0.05,
                noise_std=1.0,
                m_devices=25,
                dim=7850,
                s=3925,
                k=lam_k,
                power=schedule_power("constant", 500.0, 10),
            )
            direct = analysis.sum_v(params)
            closed = analysis.sum_v_closed_form(params)
            assert abs(direct - closed) <= 1e-10 * max(1.0, abs(direct))

    def determinism():
        config = ExperimentConfig(
            scheme="a_dsgd",
            m_devices=3,
            shard_size=30,
            rounds=3,
            p_bar=100.0,
            n_train=600,
            n_test=100,
            s=40,
            k=10,
            mean_removal_rounds=1,
            dtype="float64",
        )
        a = run_experiment(config)
        b = run_experiment(config)
        for ra, rb in zip(a.rows, b.rows):
            assert (ra.accuracy, ra.train_loss, ra.transmit_power) == (
                rb.accuracy,
                rb.train_loss,
                rb.transmit_power,
            )

    check("error-feedback conservation", conservation)
    check("top-k residual energy bound", top_k_energy)
    check("harmonic-arithmetic inequality", harmonic_arithmetic)
    check("power schedule constraint", schedules)
    check("amp noiseless recovery", amp_noiseless)
    check("drift-sum closed form", closed_form)
    check("run determinism", determinism)
    if failures:
        print(f"{len(failures)} selftest suite(s) failed")
        return 1
    if verbose:
        print("all selftest suites passed")
    return 0
