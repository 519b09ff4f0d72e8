"""scikit-learn estimator facade over the training loop."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .datagen import NoisyDataset
from .model import forward
from .trainer import TrainConfig, train


class ArNetClassifier(ClassifierMixin, TransformerMixin, BaseEstimator):
    """Noise-robust classifier with an attention-addressed prototype memory.

    A small tanh MLP encoder feeds a linear softmax classifier. During
    training, attention reads over learned prototypes produce refined pseudo
    labels that regularize the fit (``method="arnet"``); plain cross-entropy,
    soft bootstrapping, and early-learning regularization are available as
    baseline methods. ``transform`` exposes the latent embedding, so the
    estimator composes as either a classifier or a feature extractor.

    Parameters mirror the training configuration: `lam` mixes the memory read
    into the pseudo label, `beta` is the prototype-label momentum, `alpha`
    weights the agreement regularizer, `xi` and `sinkhorn_iters` control the
    entropic transport assignment, and `tau` is the assignment softmax
    temperature.
    """

    def __init__(
        self,
        method: str = "arnet",
        n_slots: int = 64,
        lam: float = 0.8,
        beta: float = 0.8,
        alpha: float = 3.0,
        xi: float = 0.05,
        tau: float = 1.0,
        sinkhorn_iters: int = 3,
        cache_capacity: int = 1024,
        lr: float = 1e-4,
        epochs: int = 50,
        batch_size: int = 128,
        hidden_dim: int = 32,
        latent_dim: int = 16,
        cluster_enabled: bool = True,
        cluster_to_encoder: bool = True,
        bootstrap_mix: float = 0.2,
        elr_momentum: float = 0.7,
        random_state: int = 0,
    ):
        self.method = method
        self.n_slots = n_slots
        self.lam = lam
        self.beta = beta
        self.alpha = alpha
        self.xi = xi
        self.tau = tau
        self.sinkhorn_iters = sinkhorn_iters
        self.cache_capacity = cache_capacity
        self.lr = lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.hidden_dim = hidden_dim
        self.latent_dim = latent_dim
        self.cluster_enabled = cluster_enabled
        self.cluster_to_encoder = cluster_to_encoder
        self.bootstrap_mix = bootstrap_mix
        self.elr_momentum = elr_momentum
        self.random_state = random_state

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            method=self.method,
            lam=self.lam,
            beta=self.beta,
            alpha=self.alpha,
            xi=self.xi,
            tau=self.tau,
            n_slots=self.n_slots,
            sinkhorn_iters=self.sinkhorn_iters,
            cache_capacity=max(self.cache_capacity, self.batch_size),
            lr=self.lr,
            epochs=self.epochs,
            batch_size=self.batch_size,
            seed=self.random_state,
            hidden_dim=self.hidden_dim,
            latent_dim=self.latent_dim,
            cluster_enabled=self.cluster_enabled,
            cluster_to_encoder=self.cluster_to_encoder,
            bootstrap_mix=self.bootstrap_mix,
            elr_momentum=self.elr_momentum,
        )

    def fit(self, X, y):
        """Fit on (possibly noisy) integer or string labels."""
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_, y_idx = np.unique(y, return_inverse=True)
        if self.classes_.size < 2:
            raise ValueError("fit requires at least two classes")
        ds = NoisyDataset.from_arrays(X, y_idx.astype(np.int64), n_classes=self.classes_.size)
        params, memory, log = train(self._train_config(), ds)
        self.model_ = params
        self.memory_ = memory
        self.log_ = log
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        return forward(self.model_, X).probs

    def predict(self, X) -> np.ndarray:
        proba = self.predict_proba(X)
        return self.classes_[np.argmax(proba, axis=1)]

    def transform(self, X) -> np.ndarray:
        """Latent embeddings from the fitted encoder."""
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        return forward(self.model_, X).latents
