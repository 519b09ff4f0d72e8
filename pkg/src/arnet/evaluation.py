"""Classification metrics, pseudo-label purity, and benchmark aggregation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datagen import NoisyDataset
from .errors import DataError
from .model import ModelParams, forward
from .validation import as_labels, as_matrix


@dataclass
class Metrics:
    """Accuracy, macro F1, and per-class diagnostics for one evaluation."""

    accuracy: float
    macro_f1: float
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    confusion: np.ndarray


def confusion_counts(y_true, y_pred, n_classes: int) -> np.ndarray:
    y_true = as_labels(y_true, n_classes, "y_true")
    y_pred = as_labels(y_pred, n_classes, "y_pred")
    if y_true.shape != y_pred.shape:
        raise DataError("y_true and y_pred lengths differ")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


def metrics_from_predictions(y_true, y_pred, n_classes: int) -> Metrics:
    """Metrics from hard predictions. Zero denominators yield 0 (precision,
    recall, and F1 alike), so absent classes contribute F1 = 0 to the macro
    average."""
    cm = confusion_counts(y_true, y_pred, n_classes)
    tp = np.diag(cm).astype(np.float64)
    pred_total = cm.sum(axis=0).astype(np.float64)
    true_total = cm.sum(axis=1).astype(np.float64)
    precision = np.divide(tp, pred_total, out=np.zeros(n_classes), where=pred_total > 0)
    recall = np.divide(tp, true_total, out=np.zeros(n_classes), where=true_total > 0)
    denom = precision + recall
    f1 = np.divide(2.0 * precision * recall, denom, out=np.zeros(n_classes), where=denom > 0)
    accuracy = float(tp.sum() / cm.sum())
    return Metrics(
        accuracy=accuracy,
        macro_f1=float(f1.mean()),
        precision=precision,
        recall=recall,
        f1=f1,
        confusion=cm,
    )


def evaluate(params: ModelParams, ds: NoisyDataset, split_tag: str = "test") -> Metrics:
    """Argmax predictions against clean labels on the requested split."""
    idx = ds.indices_for(split_tag)
    if idx.size == 0:
        raise DataError(f"dataset has no {split_tag!r} rows")
    probs = forward(params, ds.features[idx]).probs
    preds = np.argmax(probs, axis=1)
    return metrics_from_predictions(ds.y_clean[idx], preds, ds.n_classes)


def purity(pseudo: np.ndarray, y_clean) -> float:
    """Fraction of rows whose pseudo-label argmax matches the clean label.

    Ties break toward the lowest class index (np.argmax convention).
    """
    pseudo = as_matrix(pseudo, "pseudo labels")
    y_clean = as_labels(y_clean, pseudo.shape[1], "y_clean")
    if y_clean.shape[0] != pseudo.shape[0]:
        raise DataError("pseudo labels and y_clean lengths differ")
    return float((np.argmax(pseudo, axis=1) == y_clean).mean())


def aggregate_runs(runs: list[Metrics]) -> dict[str, float]:
    """Unweighted mean and population standard deviation over runs."""
    if not runs:
        raise DataError("aggregate_runs needs at least one run")
    acc = np.array([m.accuracy for m in runs])
    f1 = np.array([m.macro_f1 for m in runs])
    return {
        "accuracy_mean": float(acc.mean()),
        "accuracy_sd": float(acc.std()),
        "macro_f1_mean": float(f1.mean()),
        "macro_f1_sd": float(f1.std()),
    }


def slot_sweep(cfg, ds: NoisyDataset, slot_list, n_seeds: int = 3) -> list[dict]:
    """Train one model per slot count (n_seeds derived seeds each) and report
    aggregated test metrics, one row per slot count."""
    from dataclasses import replace

    from .numkernel import derive_seed
    from .trainer import train

    slot_list = [int(s) for s in slot_list]
    if not slot_list:
        raise DataError("slot_list must be nonempty")
    rows = []
    for n_slots in slot_list:
        metrics = []
        for run in range(n_seeds):
            run_cfg = replace(cfg, n_slots=n_slots, seed=derive_seed(cfg.seed, "slots", n_slots, run))
            params, _, _ = train(run_cfg, ds)
            metrics.append(evaluate(params, ds, "test"))
        agg = aggregate_runs(metrics)
        rows.append({"slots": n_slots, **agg})
    return rows


def metrics_report_text(metrics: Metrics) -> str:
    """Flat `key = value` report, floats at 6 decimals."""
    lines = [
        f"accuracy = {metrics.accuracy:.6f}",
        f"macro_f1 = {metrics.macro_f1:.6f}",
    ]
    for k in range(metrics.confusion.shape[0]):
        lines.append(f"precision_{k} = {metrics.precision[k]:.6f}")
        lines.append(f"recall_{k} = {metrics.recall[k]:.6f}")
        lines.append(f"f1_{k} = {metrics.f1[k]:.6f}")
    for k in range(metrics.confusion.shape[0]):
        row = ",".join(str(int(v)) for v in metrics.confusion[k])
        lines.append(f"confusion_{k} = {row}")
    return "\n".join(lines) + "\n"
