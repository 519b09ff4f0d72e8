"""External prototype memory: attention reads, transport targets, label writes.

The memory holds `n_slots` unit-norm prototype vectors with one soft label
each, plus a FIFO feature cache that widens the entropic-transport assignment
beyond a single minibatch. Prototypes are trained by gradient descent through
the assignment softmax; soft labels are maintained by momentum aggregation of
the predictions assigned to each slot.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DegenerateRowWarning, NumericError, ShapeError
from .numkernel import (
    NORM_FLOOR,
    cosine_similarity,
    l2_normalize_rows,
    orthogonal_init,
    row_norms,
    softmax_rows,
)
from .validation import as_matrix, check_prob_rows, check_same_shape, check_unit_interval


@dataclass
class Memory:
    """Prototype vectors with soft labels and a detached feature cache.

    Invariants kept by the write operations: `soft_labels` rows stay on the
    probability simplex, `prototypes` rows stay unit-norm, and the cache never
    exceeds `cache_capacity` rows.
    """

    prototypes: np.ndarray  # (n_slots, latent_dim), unit rows
    soft_labels: np.ndarray  # (n_slots, n_classes), simplex rows
    cache_capacity: int = 1024
    rng: np.random.Generator | None = None
    cached_latents: np.ndarray = field(default=None)  # type: ignore[assignment]
    cached_preds: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.cached_latents is None:
            self.cached_latents = np.zeros((0, self.prototypes.shape[1]))
        if self.cached_preds is None:
            self.cached_preds = np.zeros((0, self.soft_labels.shape[1]))

    @classmethod
    def initialize(
        cls,
        rng: np.random.Generator,
        n_slots: int,
        latent_dim: int,
        n_classes: int,
        cache_capacity: int = 1024,
    ) -> "Memory":
        """Orthogonally initialized prototypes, uniform soft labels."""
        if n_slots < 1 or cache_capacity < 1:
            raise ConfigError("n_slots and cache_capacity must be >= 1")
        protos = orthogonal_init(rng, n_slots, latent_dim)
        labels = np.full((n_slots, n_classes), 1.0 / n_classes)
        return cls(prototypes=protos, soft_labels=labels, cache_capacity=cache_capacity, rng=rng)

    @property
    def n_slots(self) -> int:
        return self.prototypes.shape[0]

    @property
    def latent_dim(self) -> int:
        return self.prototypes.shape[1]

    @property
    def n_classes(self) -> int:
        return self.soft_labels.shape[1]

    def copy(self) -> "Memory":
        return Memory(
            prototypes=self.prototypes.copy(),
            soft_labels=self.soft_labels.copy(),
            cache_capacity=self.cache_capacity,
            rng=self.rng,
            cached_latents=self.cached_latents.copy(),
            cached_preds=self.cached_preds.copy(),
        )


def read(
    mem: Memory,
    latents: np.ndarray,
    preds: np.ndarray,
    lam: float,
    tau: float = 1.0,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Attention-addressed memory read producing refined pseudo labels.

    Returns `(pseudo, retrieved, assign)` where `assign` is the softmax of
    cosine similarities over prototypes (temperature `tau`), `retrieved` is
    the attention-weighted mix of prototype soft labels, and
    `pseudo = (1 - lam) * preds + lam * retrieved`. The pseudo labels are
    constant targets: no gradient flows back through them.
    """
    check_unit_interval(lam, "lam")
    if tau <= 0:
        raise ConfigError(f"tau must be > 0, got {tau}")
    latents = as_matrix(latents, "latents")
    preds = as_matrix(preds, "preds")
    if latents.shape[1] != mem.latent_dim:
        raise ShapeError(f"latents width {latents.shape[1]} != memory dim {mem.latent_dim}")
    if preds.shape[1] != mem.n_classes:
        raise ShapeError(f"preds width {preds.shape[1]} != memory classes {mem.n_classes}")
    if latents.shape[0] != preds.shape[0]:
        raise ShapeError("latents and preds batch sizes differ")

    assign = softmax_rows(cosine_similarity(latents, mem.prototypes) / tau)
    retrieved = assign @ mem.soft_labels
    if lam == 0.0:
        pseudo = preds.copy()
    elif lam == 1.0:
        pseudo = retrieved.copy()
    else:
        pseudo = (1.0 - lam) * preds + lam * retrieved
    return pseudo, retrieved, assign


def sinkhorn_scaling(scores: np.ndarray, reg: float, n_iters: int) -> np.ndarray:
    """Raw entropic-transport plan over the uniform-marginal polytope.

    Returns diag(u) * exp(scores / reg) * diag(v) after `n_iters` rounds of
    column-then-row scaling toward row mass 1/n_rows and column mass 1/n_cols.
    Row scaling runs last, so row marginals are exact and column marginals
    converge with the iteration count.
    """
    scores = as_matrix(scores, "transport scores")
    if reg <= 0:
        raise ConfigError(f"entropy regularizer must be > 0, got {reg}")
    if n_iters < 1:
        raise ConfigError(f"n_iters must be >= 1, got {n_iters}")
    n_rows, n_cols = scores.shape
    # a global shift is absorbed into the row scaling, keeping the factored form
    kern = np.exp((scores - scores.max()) / reg)
    u = np.full(n_rows, 1.0 / n_rows)
    v = np.full(n_cols, 1.0 / n_cols)
    for _ in range(n_iters):
        v = (1.0 / n_cols) / (kern.T @ u)
        u = (1.0 / n_rows) / (kern @ v)
    plan = u[:, None] * kern * v[None, :]
    if not np.all(np.isfinite(plan)):
        raise NumericError("transport scaling produced non-finite entries")
    return plan


def sinkhorn_targets(mem: Memory, latents_all: np.ndarray, reg: float, n_iters: int) -> np.ndarray:
    """Target assignment of samples to prototypes, one simplex row per sample.

    `latents_all` must already be row-normalized (cache plus current batch).
    The transport plan is solved on cosine scores against the prototypes and
    then row-renormalized; it is a constant with respect to gradients.
    """
    latents_all = as_matrix(latents_all, "latents")
    if latents_all.shape[1] != mem.latent_dim:
        raise ShapeError(f"latents width {latents_all.shape[1]} != memory dim {mem.latent_dim}")
    plan = sinkhorn_scaling(latents_all @ mem.prototypes.T, reg, n_iters)
    return plan / plan.sum(axis=1, keepdims=True)


def clustering_loss(assign: np.ndarray, targets_batch: np.ndarray) -> tuple[float, np.ndarray]:
    """Cross-entropy pulling the soft assignment toward the transport targets.

    Returns the scalar loss and its gradient with respect to the pre-softmax
    similarity scores, which is (assign - targets) / batch by the
    softmax-cross-entropy identity. The caller routes that gradient into both
    the prototypes and the encoder latents via the cosine-similarity Jacobian.
    """
    assign = as_matrix(assign, "assignment")
    targets_batch = as_matrix(targets_batch, "targets")
    check_same_shape(assign, targets_batch, "assignment", "targets")
    if np.any(assign <= 0.0):
        raise NumericError("assignment has non-positive entries; expected softmax output")
    batch = assign.shape[0]
    loss = float(-(targets_batch * np.log(assign)).sum() / batch)
    d_scores = (assign - targets_batch) / batch
    return loss, d_scores


def write_labels(mem: Memory, targets_batch: np.ndarray, preds: np.ndarray, momentum: float) -> np.ndarray:
    """Momentum update of prototype soft labels from assigned predictions.

    Each slot's aggregated term is the target-weighted average of batch
    predictions, normalized by the slot's assigned mass so the update stays on
    the simplex; slots with mass below 1e-8 keep their previous label.
    """
    check_unit_interval(momentum, "momentum")
    targets_batch = as_matrix(targets_batch, "targets")
    preds = as_matrix(preds, "preds")
    if targets_batch.shape[0] != preds.shape[0]:
        raise ShapeError("targets and preds batch sizes differ")
    if targets_batch.shape[1] != mem.n_slots:
        raise ShapeError(f"targets width {targets_batch.shape[1]} != n_slots {mem.n_slots}")
    if preds.shape[1] != mem.n_classes:
        raise ShapeError(f"preds width {preds.shape[1]} != n_classes {mem.n_classes}")
    check_prob_rows(preds, "preds")
    if momentum == 1.0:
        return mem.soft_labels

    mass = targets_batch.sum(axis=0)
    agg = targets_batch.T @ preds
    updated = mem.soft_labels.copy()
    active = mass >= 1e-8
    if active.any():
        normalized = agg[active] / mass[active, None]
        updated[active] = momentum * updated[active] + (1.0 - momentum) * normalized
        updated[active] /= updated[active].sum(axis=1, keepdims=True)
    mem.soft_labels = updated
    return mem.soft_labels


def cache_push(mem: Memory, latents: np.ndarray, preds: np.ndarray | None = None) -> None:
    """Append detached feature rows FIFO, evicting the oldest past capacity.

    Cached rows carry their most recent predictions; when none are supplied a
    uniform placeholder is stored (the training loop always supplies them).
    """
    latents = as_matrix(latents, "latents")
    if latents.shape[1] != mem.latent_dim:
        raise ShapeError(f"latents width {latents.shape[1]} != memory dim {mem.latent_dim}")
    if preds is None:
        preds = np.full((latents.shape[0], mem.n_classes), 1.0 / mem.n_classes)
    else:
        preds = as_matrix(preds, "preds")
        if preds.shape != (latents.shape[0], mem.n_classes):
            raise ShapeError(f"preds must be {(latents.shape[0], mem.n_classes)}, got {preds.shape}")
    mem.cached_latents = np.vstack([mem.cached_latents, latents])[-mem.cache_capacity:]
    mem.cached_preds = np.vstack([mem.cached_preds, preds])[-mem.cache_capacity:]


def renormalize_prototypes(mem: Memory) -> None:
    """Rescale every prototype row to unit norm.

    A zero row would make cosine attention meaningless, so it is reseeded
    with a fresh random unit direction and reported via a warning.
    """
    norms = row_norms(mem.prototypes)
    degenerate = norms < NORM_FLOOR
    if degenerate.any():
        warnings.warn(
            f"reseeding {int(degenerate.sum())} collapsed prototype slot(s)",
            DegenerateRowWarning,
            stacklevel=2,
        )
        rng = mem.rng if mem.rng is not None else np.random.default_rng(0)
        fresh = rng.standard_normal((int(degenerate.sum()), mem.latent_dim))
        fresh = l2_normalize_rows(fresh)
        mem.prototypes[degenerate] = fresh
        norms = row_norms(mem.prototypes)
    mem.prototypes = mem.prototypes / norms[:, None]


def write_snapshot_csv(mem: Memory, path) -> None:
    """Export prototypes and soft labels as CSV, floats at 6 decimals."""
    header = (
        ["slot"]
        + [f"dim_{i}" for i in range(mem.latent_dim)]
        + [f"label_{k}" for k in range(mem.n_classes)]
    )
    lines = [",".join(header)]
    for j in range(mem.n_slots):
        cells = [str(j)]
        cells += [f"{x:.6f}" for x in mem.prototypes[j]]
        cells += [f"{x:.6f}" for x in mem.soft_labels[j]]
        lines.append(",".join(cells))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
