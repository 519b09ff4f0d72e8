"""Scalar losses and their analytic gradients.

All classification gradients are returned in logit space (the softmax
Jacobian is already folded in), ready for `model.backward`. The clustering
term's gradient is returned in similarity-score space and is routed through
the cosine Jacobian by the trainer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericError, ShapeError
from .memory import clustering_loss
from .validation import as_labels, as_matrix, check_same_shape, check_unit_interval

PROB_FLOOR = 1e-12
AGREEMENT_CLAMP = 1e-8

METHODS = ("ce", "bootstrap", "elr", "arnet")


@dataclass
class LossReport:
    """Per-batch loss decomposition; total = ce + alpha * reg + cluster."""

    total: float
    ce_term: float
    reg_term: float
    cluster_term: float
    reg_per_sample: np.ndarray


def one_hot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    eye = np.eye(n_classes)
    return eye[labels]


def cross_entropy(probs: np.ndarray, labels) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood and its gradient w.r.t. the logits.

    The gradient uses the exact softmax-cross-entropy identity
    (probs - onehot) / batch; the probability floor only guards the log.
    """
    probs = as_matrix(probs, "predictions")
    labels = as_labels(labels, probs.shape[1], "labels")
    if labels.shape[0] != probs.shape[0]:
        raise ShapeError("labels length != batch size")
    batch = probs.shape[0]
    picked = probs[np.arange(batch), labels]
    loss = float(-np.log(np.maximum(picked, PROB_FLOOR)).mean())
    d_logits = (probs - one_hot(labels, probs.shape[1])) / batch
    return loss, d_logits


def soft_cross_entropy(probs: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Cross-entropy against constant soft targets, gradient in logit space."""
    probs = as_matrix(probs, "predictions")
    targets = as_matrix(targets, "targets")
    check_same_shape(probs, targets, "predictions", "targets")
    batch = probs.shape[0]
    loss = float(-(targets * np.log(np.maximum(probs, PROB_FLOOR))).sum() / batch)
    d_logits = (probs - targets) / batch
    return loss, d_logits


def elr_regularizer(probs: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """Early-learning regularizer log(1 - <r, t>) with detached targets.

    Returns (mean value, gradient w.r.t. logits, per-sample values). The
    agreement 1 - <r, t> is clamped at 1e-8 in both the log and the gradient
    denominator, keeping training total when predictions saturate. Targets may
    be sub-simplex rows (the momentum targets start at zero).
    """
    probs = as_matrix(probs, "predictions")
    targets = as_matrix(targets, "targets")
    check_same_shape(probs, targets, "predictions", "targets")
    if np.any(targets < 0):
        raise NumericError("targets must be nonnegative")
    batch = probs.shape[0]
    agreement = (probs * targets).sum(axis=1)
    gap = np.maximum(1.0 - agreement, AGREEMENT_CLAMP)
    per_sample = np.log(gap)
    reg = float(per_sample.mean())
    d_logits = -(probs * (targets - agreement[:, None])) / gap[:, None] / batch
    return reg, d_logits, per_sample


def bootstrap_targets(probs: np.ndarray, labels: np.ndarray, mix: float) -> np.ndarray:
    """Soft-bootstrap target: (1 - mix) * onehot(labels) + mix * probs."""
    check_unit_interval(mix, "bootstrap mix")
    return (1.0 - mix) * one_hot(labels, probs.shape[1]) + mix * probs


def combined_loss(
    method: str,
    probs: np.ndarray,
    labels,
    *,
    pseudo: np.ndarray | None = None,
    assign: np.ndarray | None = None,
    targets_batch: np.ndarray | None = None,
    alpha: float = 3.0,
    bootstrap_mix: float = 0.2,
    cluster_enabled: bool = True,
) -> tuple[LossReport, np.ndarray, np.ndarray | None]:
    """Assemble the per-step objective for the selected training method.

    Returns (report, d_logits, d_scores). `d_scores` is the clustering
    gradient w.r.t. the pre-softmax similarity scores, or None when the
    clustering term is inactive. Pseudo labels and transport targets are
    treated as constants throughout.
    """
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}; expected one of {METHODS}")
    if alpha < 0:
        raise ConfigError(f"alpha must be >= 0, got {alpha}")
    probs = as_matrix(probs, "predictions")
    labels = as_labels(labels, probs.shape[1], "labels")
    batch = probs.shape[0]
    zeros_b = np.zeros(batch)

    if method == "ce":
        ce, d_logits = cross_entropy(probs, labels)
        return LossReport(ce, ce, 0.0, 0.0, zeros_b), d_logits, None

    if method == "bootstrap":
        mixed = bootstrap_targets(probs, labels, bootstrap_mix)
        ce, d_logits = soft_cross_entropy(probs, mixed)
        return LossReport(ce, ce, 0.0, 0.0, zeros_b), d_logits, None

    if pseudo is None:
        raise ConfigError(f"method {method!r} requires pseudo-label targets")
    ce, d_ce = cross_entropy(probs, labels)
    if alpha == 0.0:
        # a zero weight disables the term outright, keeping the reduction to
        # plain cross-entropy exact in both the gradients and the report
        reg, per_sample = 0.0, zeros_b
        d_logits = d_ce
    else:
        reg, d_reg, per_sample = elr_regularizer(probs, pseudo)
        d_logits = d_ce + alpha * d_reg

    if method == "elr":
        total = ce + alpha * reg
        return LossReport(total, ce, reg, 0.0, per_sample), d_logits, None

    # arnet
    cluster = 0.0
    d_scores = None
    if cluster_enabled:
        if assign is None or targets_batch is None:
            raise ConfigError("arnet with clustering enabled requires assign and targets")
        cluster, d_scores = clustering_loss(assign, targets_batch)
    total = ce + alpha * reg + cluster
    return LossReport(total, ce, reg, cluster, per_sample), d_logits, d_scores
