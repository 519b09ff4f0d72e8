"""Synthetic dataset generators, label-noise injection, splits, and CSV IO.

Two noise scenarios are supported: independent symmetric flips, and a "weak
agent" that relabels the training set with an under-trained linear
classifier, producing feature-correlated mistakes. Injectors only ever touch
rows tagged as training data.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DataError, ParseError, ShapeError
from .numkernel import seeded_rng, softmax_rows
from .validation import as_labels, as_matrix, check_unit_interval

SPLIT_TAGS = ("train", "val", "test")


@dataclass
class NoiseSpec:
    """How (and whether) training labels were corrupted."""

    kind: str = "none"  # none | symmetric | agent
    epsilon: float = 0.0
    exact_count: bool = False
    agent_clean_fraction: float = 0.1
    agent_budget: int = 1
    seed: int = 0

    def validate(self) -> None:
        if self.kind not in ("none", "symmetric", "agent"):
            raise ConfigError(f"unknown noise kind {self.kind!r}")
        check_unit_interval(self.epsilon, "epsilon")
        if self.kind == "agent":
            if not (0.0 < self.agent_clean_fraction < 1.0):
                raise ConfigError(
                    f"agent_clean_fraction must lie in (0, 1), got {self.agent_clean_fraction}"
                )
            if self.agent_budget < 1:
                raise ConfigError(f"agent_budget must be >= 1, got {self.agent_budget}")


@dataclass
class NoisyDataset:
    """Feature matrix with clean labels, possibly-corrupted labels, and split tags."""

    features: np.ndarray
    y_clean: np.ndarray
    y_noisy: np.ndarray
    n_classes: int
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    split: np.ndarray = field(default=None)  # type: ignore[assignment]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = as_matrix(self.features, "features")
        self.y_clean = as_labels(self.y_clean, self.n_classes, "y_clean")
        self.y_noisy = as_labels(self.y_noisy, self.n_classes, "y_noisy")
        n = self.features.shape[0]
        if self.y_clean.shape[0] != n or self.y_noisy.shape[0] != n:
            raise ShapeError("labels length != number of rows")
        if self.split is None:
            self.split = np.full(n, "train", dtype="<U5")
        else:
            self.split = np.asarray(self.split, dtype="<U5")
            if self.split.shape != (n,):
                raise ShapeError("split tags length != number of rows")
            bad = set(self.split.tolist()) - set(SPLIT_TAGS)
            if bad:
                raise DataError(f"unknown split tags {sorted(bad)}")

    @classmethod
    def from_arrays(cls, features, labels, n_classes: int | None = None) -> "NoisyDataset":
        """Clean dataset where the given labels serve as both clean and noisy."""
        labels = np.asarray(labels)
        if n_classes is None:
            n_classes = int(labels.max()) + 1
        return cls(features=features, y_clean=labels, y_noisy=labels.copy(), n_classes=n_classes)

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def indices_for(self, tag: str) -> np.ndarray:
        if tag not in SPLIT_TAGS:
            raise DataError(f"unknown split tag {tag!r}")
        return np.flatnonzero(self.split == tag)

    def copy(self) -> "NoisyDataset":
        return NoisyDataset(
            features=self.features.copy(),
            y_clean=self.y_clean.copy(),
            y_noisy=self.y_noisy.copy(),
            n_classes=self.n_classes,
            noise=replace(self.noise),
            split=self.split.copy(),
            meta=dict(self.meta),
        )


def _balanced_labels(n_samples: int, n_classes: int) -> np.ndarray:
    return np.arange(n_samples, dtype=np.int64) % n_classes


def _class_means(n_classes: int, n_features: int) -> np.ndarray:
    """Class centers on the scaled standard basis, or a circle when 2-D."""
    if n_features >= n_classes:
        return np.eye(n_classes, n_features)
    angles = 2.0 * np.pi * np.arange(n_classes) / n_classes
    means = np.zeros((n_classes, n_features))
    means[:, 0] = np.cos(angles)
    means[:, 1 % n_features] = np.sin(angles)
    return means


def gen_blobs(
    rng: np.random.Generator,
    n_samples: int,
    n_classes: int,
    n_features: int,
    separation: float,
) -> NoisyDataset:
    """Gaussian clusters with per-class counts balanced within one row.

    Cluster spread is 1/separation, so large separation values make the
    classes linearly separable.
    """
    if n_samples < n_classes:
        raise ConfigError("n_samples must be >= n_classes")
    if separation <= 0:
        raise ConfigError(f"separation must be > 0, got {separation}")
    labels = _balanced_labels(n_samples, n_classes)
    means = _class_means(n_classes, n_features)
    features = means[labels] + rng.standard_normal((n_samples, n_features)) / separation
    return NoisyDataset.from_arrays(features, labels, n_classes)


def gen_rings(
    rng: np.random.Generator,
    n_samples: int,
    n_classes: int,
    noise_sd: float,
) -> NoisyDataset:
    """Concentric 2-D annuli (radius 1, 2, ...) with radial Gaussian jitter.

    Not linearly separable for n_classes >= 2, so the encoder has to earn its
    keep.
    """
    if n_samples < n_classes:
        raise ConfigError("n_samples must be >= n_classes")
    if noise_sd < 0:
        raise ConfigError(f"noise_sd must be >= 0, got {noise_sd}")
    labels = _balanced_labels(n_samples, n_classes)
    angles = rng.uniform(0.0, 2.0 * np.pi, size=n_samples)
    radii = (labels + 1.0) + rng.standard_normal(n_samples) * noise_sd
    features = np.stack([radii * np.cos(angles), radii * np.sin(angles)], axis=1)
    return NoisyDataset.from_arrays(features, labels, n_classes)


def inject_symmetric(ds: NoisyDataset, epsilon: float, rng: np.random.Generator) -> NoisyDataset:
    """Flip each training label with probability epsilon to a uniformly random
    different class; validation and test rows are untouched.

    With `ds.noise.exact_count` set, exactly floor(epsilon * n_train) rows are
    flipped instead (reproducibility-study variant).
    """
    check_unit_interval(epsilon, "epsilon")
    out = ds.copy()
    train_idx = out.indices_for("train")
    if epsilon > 0 and train_idx.size > 0 and out.n_classes > 1:
        if ds.noise.exact_count:
            n_flip = int(np.floor(epsilon * train_idx.size))
            chosen = rng.choice(train_idx, size=n_flip, replace=False)
        else:
            chosen = train_idx[rng.random(train_idx.size) < epsilon]
        offsets = rng.integers(1, out.n_classes, size=chosen.size)
        out.y_noisy[chosen] = (out.y_clean[chosen] + offsets) % out.n_classes
    out.noise = replace(out.noise, kind="symmetric", epsilon=float(epsilon))
    return out


def _train_agent(
    features: np.ndarray,
    labels: np.ndarray,
    n_classes: int,
    budget: int,
    lr: float = 0.5,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Multinomial-logistic weights after `budget` full-batch GD epochs.

    Features are standardized internally so the fixed learning rate behaves
    across datasets; returns (weights, bias, mean, scale).
    """
    mean = features.mean(axis=0)
    scale = features.std(axis=0)
    scale[scale < 1e-8] = 1.0
    z = (features - mean) / scale
    n, d = z.shape
    w = np.zeros((d, n_classes))
    b = np.zeros(n_classes)
    onehot = np.eye(n_classes)[labels]
    for _ in range(budget):
        probs = softmax_rows(z @ w + b)
        d_logits = (probs - onehot) / n
        w -= lr * (z.T @ d_logits)
        b -= lr * d_logits.sum(axis=0)
    return w, b, mean, scale


def inject_agent(
    ds: NoisyDataset,
    clean_fraction: float,
    budget: int,
    rng: np.random.Generator,
) -> NoisyDataset:
    """Relabel all training rows with a deliberately weak linear classifier.

    The agent is a multinomial-logistic model trained on a `clean_fraction`
    subsample of the training rows for `budget` epochs, then applied to every
    training row (argmax, ties to the lowest class). Its training accuracy is
    recorded in the dataset metadata. A subsample missing a class is redrawn
    up to 5 times before failing.
    """
    if not (0.0 < clean_fraction < 1.0):
        raise ConfigError(f"clean_fraction must lie in (0, 1), got {clean_fraction}")
    if budget < 1:
        raise ConfigError(f"budget must be >= 1, got {budget}")
    out = ds.copy()
    train_idx = out.indices_for("train")
    if train_idx.size == 0:
        raise DataError("dataset has no training rows to relabel")
    n_sub = max(out.n_classes, int(round(clean_fraction * train_idx.size)))
    n_sub = min(n_sub, train_idx.size)

    subsample = None
    for _ in range(5):
        candidate = rng.choice(train_idx, size=n_sub, replace=False)
        if np.unique(out.y_clean[candidate]).size == out.n_classes:
            subsample = candidate
            break
    if subsample is None:
        raise DataError("agent subsample kept missing a class after 5 attempts")

    w, b, mean, scale = _train_agent(
        out.features[subsample], out.y_clean[subsample], out.n_classes, budget
    )
    z = (out.features[train_idx] - mean) / scale
    preds = np.argmax(z @ w + b, axis=1)
    out.y_noisy[train_idx] = preds
    agent_acc = float((preds == out.y_clean[train_idx]).mean())
    out.meta["agent_accuracy"] = agent_acc
    out.noise = replace(
        out.noise,
        kind="agent",
        agent_clean_fraction=float(clean_fraction),
        agent_budget=int(budget),
    )
    return out


def split_dataset(ds: NoisyDataset, fractions, rng: np.random.Generator) -> NoisyDataset:
    """Stratified split into train/test or train/val/test by clean class.

    Per-class allocation uses largest remainders, so overall proportions match
    the requested fractions within rounding.
    """
    fractions = [float(f) for f in fractions]
    if len(fractions) not in (2, 3):
        raise ConfigError("fractions must have 2 (train/test) or 3 (train/val/test) entries")
    if any(f < 0 for f in fractions):
        raise ConfigError("fractions must be nonnegative")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"fractions must sum to 1, got {sum(fractions)}")
    if fractions[0] <= 0:
        raise ConfigError("train fraction must be positive")
    tags = ("train", "test") if len(fractions) == 2 else ("train", "val", "test")
    active = [(tag, f) for tag, f in zip(tags, fractions) if f > 0]

    out = ds.copy()
    for c in range(out.n_classes):
        rows = np.flatnonzero(out.y_clean == c)
        if rows.size < len(active):
            raise DataError(f"class {c} has {rows.size} rows, fewer than {len(active)} splits")
        rows = rng.permutation(rows)
        targets = np.array([f * rows.size for _, f in active])
        counts = np.floor(targets).astype(int)
        remainder = rows.size - counts.sum()
        order = np.argsort(-(targets - counts), kind="stable")
        for i in range(remainder):
            counts[order[i % len(active)]] += 1
        start = 0
        for (tag, _), cnt in zip(active, counts):
            out.split[rows[start:start + cnt]] = tag
            start += cnt
    return out


def batches(ds: NoisyDataset, batch_size: int, seed: int, epoch: int) -> list[np.ndarray]:
    """Seeded per-epoch permutation of training rows, chunked; the final short
    batch is kept. A pure function of (seed, epoch), so resumed runs replay
    the exact same order.
    """
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    train_idx = ds.indices_for("train")
    if train_idx.size == 0:
        raise DataError("dataset has no training rows")
    order = seeded_rng(seed, "shuffle", epoch).permutation(train_idx)
    return [order[i:i + batch_size] for i in range(0, order.size, batch_size)]


# ---------------------------------------------------------------------------
# CSV schema: f_0,...,f_{dx-1},y_clean,y_noisy plus a `.meta` sidecar with
# `key = value` lines (n_rows, n_features, n_classes, noise fields, seed).
# ---------------------------------------------------------------------------

def _meta_path(path: str) -> str:
    base, _ = os.path.splitext(path)
    return base + ".meta"


def save_csv(ds: NoisyDataset, path: str) -> None:
    """Write the dataset CSV (floats at 6 decimals) and its metadata sidecar."""
    header = [f"f_{j}" for j in range(ds.n_features)] + ["y_clean", "y_noisy"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(ds.n_rows):
            cells = [f"{x:.6f}" for x in ds.features[i]]
            cells.append(str(int(ds.y_clean[i])))
            cells.append(str(int(ds.y_noisy[i])))
            fh.write(",".join(cells) + "\n")
    spec = ds.noise
    meta_lines = [
        f"n_rows = {ds.n_rows}",
        f"n_features = {ds.n_features}",
        f"n_classes = {ds.n_classes}",
        f"noise_kind = {spec.kind}",
        f"epsilon = {spec.epsilon:.6f}",
        f"exact_count = {str(spec.exact_count).lower()}",
        f"agent_clean_fraction = {spec.agent_clean_fraction:.6f}",
        f"agent_budget = {spec.agent_budget}",
        f"seed = {spec.seed}",
    ]
    for key, value in sorted(ds.meta.items()):
        meta_lines.append(f"{key} = {value:.6f}" if isinstance(value, float) else f"{key} = {value}")
    with open(_meta_path(path), "w", encoding="utf-8") as fh:
        fh.write("\n".join(meta_lines) + "\n")


def _parse_meta(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ParseError(f"expected 'key = value', got {line!r}", line=lineno)
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
    return values


def load_csv(path: str) -> NoisyDataset:
    """Load a dataset CSV written by `save_csv`; all rows come back tagged
    train (splits are reassigned by the caller)."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("file is empty", line=1) from None
        header = [h.strip() for h in header]
        if len(header) < 3 or header[-2:] != ["y_clean", "y_noisy"]:
            missing = [c for c in ("y_clean", "y_noisy") if c not in header]
            if missing:
                raise ParseError(f"missing column {missing[0]!r}", line=1)
            raise ParseError("label columns must be the final two columns", line=1)
        n_features = len(header) - 2
        expected = [f"f_{j}" for j in range(n_features)]
        for j, (got, want) in enumerate(zip(header[:-2], expected)):
            if got != want:
                raise ParseError(f"expected column {want!r}, got {got!r}", line=1)

        feats: list[list[float]] = []
        clean: list[int] = []
        noisy: list[int] = []
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != n_features + 2:
                raise ParseError(
                    f"expected {n_features + 2} cells, got {len(row)}", line=lineno
                )
            try:
                feats.append([float(c) for c in row[:n_features]])
                clean.append(int(row[n_features]))
                noisy.append(int(row[n_features + 1]))
            except ValueError as exc:
                raise ParseError(f"unparsable cell: {exc}", line=lineno) from None
    if not feats:
        raise ParseError("file contains a header but no data rows", line=2)

    meta_file = _meta_path(path)
    spec = NoiseSpec()
    meta: dict = {}
    n_classes = max(max(clean), max(noisy)) + 1
    if os.path.exists(meta_file):
        raw = _parse_meta(meta_file)
        n_classes = int(raw.get("n_classes", n_classes))
        spec = NoiseSpec(
            kind=raw.get("noise_kind", "none"),
            epsilon=float(raw.get("epsilon", 0.0)),
            exact_count=raw.get("exact_count", "false") == "true",
            agent_clean_fraction=float(raw.get("agent_clean_fraction", 0.1)),
            agent_budget=int(raw.get("agent_budget", 1)),
            seed=int(raw.get("seed", 0)),
        )
        if "agent_accuracy" in raw:
            meta["agent_accuracy"] = float(raw["agent_accuracy"])
    return NoisyDataset(
        features=np.asarray(feats),
        y_clean=np.asarray(clean),
        y_noisy=np.asarray(noisy),
        n_classes=n_classes,
        noise=spec,
        meta=meta,
    )
