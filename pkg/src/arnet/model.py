"""Two-layer tanh encoder plus a linear softmax classifier.

Forward and backward passes are hand-derived; `backward` consumes upstream
gradients in logit space (for the classification losses) and in latent space
(for the prototype clustering loss) and composes both into parameter
gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .numkernel import softmax_rows
from .validation import as_matrix, check_cols, check_same_shape

PARAM_NAMES = ("w1", "b1", "w2", "b2", "wc", "bc")


@dataclass(frozen=True)
class ModelDims:
    n_features: int
    hidden_dim: int
    latent_dim: int
    n_classes: int

    def validate(self) -> None:
        for name in ("n_features", "hidden_dim", "latent_dim", "n_classes"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")


@dataclass
class ModelParams:
    """Encoder weights (w1, b1, w2, b2) and classifier weights (wc, bc)."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    wc: np.ndarray
    bc: np.ndarray

    @property
    def dims(self) -> ModelDims:
        return ModelDims(
            n_features=self.w1.shape[0],
            hidden_dim=self.w1.shape[1],
            latent_dim=self.w2.shape[1],
            n_classes=self.wc.shape[1],
        )

    def tensors(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self) -> "ModelParams":
        return ModelParams(*(getattr(self, name).copy() for name in PARAM_NAMES))


@dataclass
class ForwardTrace:
    """Batch intermediates retained for the backward pass.

    `probs` rows are probability vectors; all arrays share the batch size of
    the inputs that produced them.
    """

    inputs: np.ndarray
    hidden: np.ndarray
    latents: np.ndarray
    logits: np.ndarray
    probs: np.ndarray


def init_params(rng: np.random.Generator, dims: ModelDims) -> ModelParams:
    """Seeded scaled-Gaussian weights (std 1/sqrt(fan_in)), zero biases."""
    dims.validate()

    def scaled(shape, fan_in):
        return rng.standard_normal(shape) / np.sqrt(fan_in)

    return ModelParams(
        w1=scaled((dims.n_features, dims.hidden_dim), dims.n_features),
        b1=np.zeros(dims.hidden_dim),
        w2=scaled((dims.hidden_dim, dims.latent_dim), dims.hidden_dim),
        b2=np.zeros(dims.latent_dim),
        wc=scaled((dims.latent_dim, dims.n_classes), dims.latent_dim),
        bc=np.zeros(dims.n_classes),
    )


def forward(params: ModelParams, x) -> ForwardTrace:
    """Encode a batch and classify it; keeps intermediates for backward."""
    x = as_matrix(x, "inputs")
    check_cols(x, params.w1.shape[0], "inputs")
    hidden = np.tanh(x @ params.w1 + params.b1)
    latents = np.tanh(hidden @ params.w2 + params.b2)
    logits = latents @ params.wc + params.bc
    probs = softmax_rows(logits)
    return ForwardTrace(inputs=x, hidden=hidden, latents=latents, logits=logits, probs=probs)


def backward(
    params: ModelParams,
    trace: ForwardTrace,
    d_logits: np.ndarray,
    d_latents: np.ndarray,
) -> dict[str, np.ndarray]:
    """Exact parameter gradients for the composed upstream signals.

    `d_logits` carries the classification losses (already folded through the
    softmax Jacobian); `d_latents` carries the loss routed directly into the
    encoder output, e.g. the clustering term.
    """
    d_logits = as_matrix(d_logits, "d_logits")
    d_latents = as_matrix(d_latents, "d_latents")
    check_same_shape(d_logits, trace.logits, "d_logits", "logits")
    check_same_shape(d_latents, trace.latents, "d_latents", "latents")

    d_wc = trace.latents.T @ d_logits
    d_bc = d_logits.sum(axis=0)
    d_lat_total = d_logits @ params.wc.T + d_latents
    d_z2 = d_lat_total * (1.0 - trace.latents ** 2)
    d_w2 = trace.hidden.T @ d_z2
    d_b2 = d_z2.sum(axis=0)
    d_hidden = d_z2 @ params.w2.T
    d_z1 = d_hidden * (1.0 - trace.hidden ** 2)
    d_w1 = trace.inputs.T @ d_z1
    d_b1 = d_z1.sum(axis=0)
    return {"w1": d_w1, "b1": d_b1, "w2": d_w2, "b2": d_b2, "wc": d_wc, "bc": d_bc}
