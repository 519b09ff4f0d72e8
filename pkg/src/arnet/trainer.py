"""Training orchestration.

Each iteration follows a fixed phase order: forward, memory read (pseudo
labels), transport-target update over the feature cache, one joint Adam step
on encoder/classifier/prototypes, prototype renormalization, and finally the
momentum write of prototype soft labels. The baseline methods (ce, bootstrap,
elr) skip the memory phases. Runs are bit-reproducible for a fixed config and
seed: batch order is a pure function of (seed, epoch), and model, memory, and
data use independent derived streams.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .datagen import NoisyDataset, batches
from .errors import ConfigError, DataError, NumericError
from .memory import (
    Memory,
    cache_push,
    read,
    renormalize_prototypes,
    sinkhorn_targets,
    write_labels,
)
from .model import (
    PARAM_NAMES,
    ForwardTrace,
    ModelDims,
    ModelParams,
    backward,
    forward,
    init_params,
)
from .numkernel import AdamState, adam_step, cosine_similarity_vjp, l2_normalize_rows, seeded_rng
from .objective import METHODS, bootstrap_targets, combined_loss
from .evaluation import metrics_from_predictions, purity
from .validation import check_at_least, check_positive, check_unit_interval

LOG_COLUMNS = (
    "epoch", "total", "ce", "reg", "cluster",
    "train_acc", "test_acc", "test_f1", "purity", "seconds",
)

PHASES = ("read", "targets", "update", "write")


@dataclass
class TrainConfig:
    """Every knob of the training loop; defaults follow the reference recipe."""

    method: str = "arnet"
    lam: float = 0.8            # pseudo-label mix toward the memory read
    beta: float = 0.8           # prototype-label momentum
    alpha: float = 3.0          # regularizer weight
    xi: float = 0.05            # transport entropy regularizer
    tau: float = 1.0            # assignment softmax temperature
    n_slots: int = 64
    sinkhorn_iters: int = 3
    cache_capacity: int = 1024
    lr: float = 1e-4
    epochs: int = 50
    batch_size: int = 128
    seed: int = 0
    hidden_dim: int = 32
    latent_dim: int = 16
    cluster_enabled: bool = True
    cluster_to_encoder: bool = True
    bootstrap_mix: float = 0.2
    elr_momentum: float = 0.7
    write_post_update: bool = False

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; expected one of {METHODS}")
        check_unit_interval(self.lam, "lam")
        check_unit_interval(self.beta, "beta")
        check_unit_interval(self.bootstrap_mix, "bootstrap_mix")
        check_unit_interval(self.elr_momentum, "elr_momentum")
        if self.alpha < 0:
            raise ConfigError(f"alpha must be >= 0, got {self.alpha}")
        check_positive(self.xi, "xi")
        check_positive(self.tau, "tau")
        check_positive(self.lr, "lr")
        check_at_least(self.n_slots, 1, "n_slots")
        check_at_least(self.sinkhorn_iters, 1, "sinkhorn_iters")
        check_at_least(self.cache_capacity, 1, "cache_capacity")
        check_at_least(self.epochs, 1, "epochs")
        check_at_least(self.batch_size, 1, "batch_size")
        check_at_least(self.hidden_dim, 1, "hidden_dim")
        check_at_least(self.latent_dim, 1, "latent_dim")
        check_at_least(self.seed, 0, "seed")
        if self.method == "arnet" and self.cache_capacity < self.batch_size:
            raise ConfigError("cache_capacity must be >= batch_size so the cache covers the batch")


@dataclass
class EpochRecord:
    epoch: int
    total: float
    ce: float
    reg: float
    cluster: float
    train_acc: float
    test_acc: float
    test_f1: float
    purity: float
    seconds: float

    def row(self) -> list:
        return [getattr(self, c) for c in LOG_COLUMNS]


@dataclass
class TrainLog:
    records: list[EpochRecord] = field(default_factory=list)

    def append(self, record: EpochRecord) -> None:
        self.records.append(record)

    def rows(self) -> list[list]:
        return [r.row() for r in self.records]

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(LOG_COLUMNS) + "\n")
            for rec in self.records:
                cells = [str(rec.epoch)]
                cells += [f"{v:.6f}" for v in rec.row()[1:]]
                fh.write(",".join(cells) + "\n")

    @classmethod
    def from_rows(cls, rows) -> "TrainLog":
        log = cls()
        for row in rows:
            log.append(EpochRecord(int(row[0]), *[float(v) for v in row[1:]]))
        return log


@dataclass
class TrainerState:
    """Everything needed to resume training exactly where it stopped."""

    config: TrainConfig
    params: ModelParams
    memory: Memory | None
    log: TrainLog
    adam: dict[str, AdamState]
    elr_targets: np.ndarray | None
    epochs_done: int


def initial_state(cfg: TrainConfig, ds: NoisyDataset) -> TrainerState:
    """Freshly seeded trainer state: params, memory, optimizer buffers.

    Model, memory, and batch shuffling draw from independent streams derived
    from the config seed, so e.g. disabling the memory does not perturb the
    data order.
    """
    cfg.validate()
    n_train = ds.indices_for("train").size
    if n_train == 0:
        raise DataError("dataset has no training rows")
    dims = ModelDims(ds.n_features, cfg.hidden_dim, cfg.latent_dim, ds.n_classes)
    params = init_params(seeded_rng(cfg.seed, "model"), dims)
    memory = None
    if cfg.method == "arnet":
        memory = Memory.initialize(
            seeded_rng(cfg.seed, "memory"),
            cfg.n_slots,
            cfg.latent_dim,
            ds.n_classes,
            cfg.cache_capacity,
        )
    adam = {name: AdamState.for_param(t) for name, t in params.tensors().items()}
    if memory is not None:
        adam["prototypes"] = AdamState.for_param(memory.prototypes)
    elr_targets = np.zeros((n_train, ds.n_classes)) if cfg.method == "elr" else None
    return TrainerState(cfg, params, memory, TrainLog(), adam, elr_targets, 0)


def _check_memory_invariants(memory: Memory, epoch: int) -> None:
    label_dev = float(np.abs(memory.soft_labels.sum(axis=1) - 1.0).max())
    norm_dev = float(np.abs(np.linalg.norm(memory.prototypes, axis=1) - 1.0).max())
    if label_dev > 1e-6:
        raise NumericError(f"epoch {epoch}: prototype label rows off the simplex by {label_dev:.3g}")
    if norm_dev > 1e-6:
        raise NumericError(f"epoch {epoch}: prototype norms deviate from 1 by {norm_dev:.3g}")


def _epoch_targets(
    cfg: TrainConfig,
    state: TrainerState,
    trace: ForwardTrace,
    y_noisy_train: np.ndarray,
) -> np.ndarray:
    """Current refined targets for every training row, for the purity metric."""
    if cfg.method == "arnet":
        pseudo, _, _ = read(state.memory, trace.latents, trace.probs, cfg.lam, cfg.tau)
        return pseudo
    if cfg.method == "elr":
        return state.elr_targets
    if cfg.method == "bootstrap":
        return bootstrap_targets(trace.probs, y_noisy_train, cfg.bootstrap_mix)
    return trace.probs


def train(
    cfg: TrainConfig,
    ds: NoisyDataset,
    *,
    start: TrainerState | None = None,
    phase_hook=None,
) -> tuple[ModelParams, Memory | None, TrainLog]:
    """Run the training loop and return final parameters, memory, and log.

    `start` resumes from a checkpointed state; `phase_hook`, when given, is
    called with the phase name at each step of every iteration (used to audit
    the step order). Aborts with a diagnostic NumericError if the loss stops
    being finite.
    """
    cfg.validate()
    train_idx = ds.indices_for("train")
    if train_idx.size == 0:
        raise DataError("dataset has no training rows")
    test_idx = ds.indices_for("test")

    if start is None:
        state = initial_state(cfg, ds)
    else:
        state = start
        got = state.params.dims
        want = ModelDims(ds.n_features, cfg.hidden_dim, cfg.latent_dim, ds.n_classes)
        if got != want:
            raise ConfigError(f"resume state dims {got} do not match configured dims {want}")

    # position of each dataset row within the training block (for elr targets)
    pos_of_row = np.full(ds.n_rows, -1, dtype=np.int64)
    pos_of_row[train_idx] = np.arange(train_idx.size)

    hook = phase_hook if phase_hook is not None else (lambda phase: None)

    for epoch in range(state.epochs_done + 1, cfg.epochs + 1):
        tic = time.perf_counter()
        term_sums = np.zeros(4)  # total, ce, reg, cluster
        n_batches = 0
        for batch in batches(ds, cfg.batch_size, cfg.seed, epoch):
            x = ds.features[batch]
            y = ds.y_noisy[batch]
            trace = forward(state.params, x)

            pseudo = None
            assign = None
            q_batch = None
            if cfg.method == "arnet":
                hook("read")
                pseudo, _, assign = read(state.memory, trace.latents, trace.probs, cfg.lam, cfg.tau)
                hook("targets")
                cache_push(state.memory, l2_normalize_rows(trace.latents), trace.probs)
                q_all = sinkhorn_targets(
                    state.memory, state.memory.cached_latents, cfg.xi, cfg.sinkhorn_iters
                )
                q_batch = q_all[-batch.size:]
            elif cfg.method == "elr":
                hook("read")
                rows = pos_of_row[batch]
                state.elr_targets[rows] = (
                    cfg.elr_momentum * state.elr_targets[rows]
                    + (1.0 - cfg.elr_momentum) * trace.probs
                )
                pseudo = state.elr_targets[rows]
                hook("targets")
            else:
                hook("read")
                hook("targets")

            hook("update")
            report, d_logits, d_scores = combined_loss(
                cfg.method,
                trace.probs,
                y,
                pseudo=pseudo,
                assign=assign,
                targets_batch=q_batch,
                alpha=cfg.alpha,
                bootstrap_mix=cfg.bootstrap_mix,
                cluster_enabled=cfg.cluster_enabled,
            )
            if not np.isfinite(report.total):
                raise NumericError(
                    f"non-finite loss at epoch {epoch}, batch {n_batches}: "
                    f"total={report.total} ce={report.ce_term} "
                    f"reg={report.reg_term} cluster={report.cluster_term}"
                )

            d_proto = None
            d_latents = np.zeros_like(trace.latents)
            if d_scores is not None:
                d_sim = d_scores / cfg.tau
                d_lat, d_proto = cosine_similarity_vjp(
                    trace.latents, state.memory.prototypes, d_sim
                )
                if cfg.cluster_to_encoder:
                    d_latents = d_lat
            grads = backward(state.params, trace, d_logits, d_latents)
            for name in PARAM_NAMES:
                updated = adam_step(getattr(state.params, name), grads[name], state.adam[name], cfg.lr)
                setattr(state.params, name, updated)
            if d_proto is not None:
                state.memory.prototypes = adam_step(
                    state.memory.prototypes, d_proto, state.adam["prototypes"], cfg.lr
                )
            if cfg.method == "arnet":
                renormalize_prototypes(state.memory)
                hook("write")
                if cfg.write_post_update:
                    preds_for_write = forward(state.params, x).probs
                else:
                    preds_for_write = trace.probs
                write_labels(state.memory, q_batch, preds_for_write, cfg.beta)
            else:
                hook("write")

            term_sums += (report.total, report.ce_term, report.reg_term, report.cluster_term)
            n_batches += 1

        if cfg.method == "arnet":
            _check_memory_invariants(state.memory, epoch)
            if state.memory.cached_latents.shape[0] > cfg.cache_capacity:
                raise NumericError(f"epoch {epoch}: cache exceeded capacity")

        train_trace = forward(state.params, ds.features[train_idx])
        train_acc = float(
            (np.argmax(train_trace.probs, axis=1) == ds.y_noisy[train_idx]).mean()
        )
        targets_full = _epoch_targets(cfg, state, train_trace, ds.y_noisy[train_idx])
        pur = purity(targets_full, ds.y_clean[train_idx])
        if test_idx.size > 0:
            test_probs = forward(state.params, ds.features[test_idx]).probs
            test_metrics = metrics_from_predictions(
                ds.y_clean[test_idx], np.argmax(test_probs, axis=1), ds.n_classes
            )
            test_acc, test_f1 = test_metrics.accuracy, test_metrics.macro_f1
        else:
            test_acc, test_f1 = float("nan"), float("nan")

        means = term_sums / max(n_batches, 1)
        state.log.append(
            EpochRecord(
                epoch=epoch,
                total=float(means[0]),
                ce=float(means[1]),
                reg=float(means[2]),
                cluster=float(means[3]),
                train_acc=train_acc,
                test_acc=test_acc,
                test_f1=test_f1,
                purity=pur,
                seconds=time.perf_counter() - tic,
            )
        )
        state.epochs_done = epoch

    return state.params, state.memory, state.log
