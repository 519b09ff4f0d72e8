"""Dense numeric kernel used by every other module.

All operations act on plain 2-D float64 arrays with samples as rows and are
deterministic given a seeded generator. Gradient-bearing modules build on the
primitives here; `finite_diff_grad` is the independent oracle used to check
their hand-derived gradients.
"""

from __future__ import annotations

import warnings
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateRowWarning, ShapeError
from .validation import as_matrix, check_positive

NORM_FLOOR = 1e-12


def _entropy_words(seed: int, stream) -> list[int]:
    words = [int(seed)]
    for part in stream:
        if isinstance(part, str):
            words.append(zlib.crc32(part.encode("utf-8")))
        else:
            words.append(int(part))
    return words


def seeded_rng(seed: int, *stream) -> np.random.Generator:
    """Independent PCG64 generator keyed by (seed, *stream).

    The same key always yields the same draw sequence, and distinct stream
    tags give statistically independent streams, so e.g. batch shuffling and
    memory initialization never perturb each other.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(_entropy_words(seed, stream))))


def derive_seed(seed: int, *stream) -> int:
    """Deterministically derive a child seed from (seed, *stream)."""
    seq = np.random.SeedSequence(_entropy_words(seed, stream))
    return int(seq.generate_state(1, np.uint64)[0])


def softmax_rows(m) -> np.ndarray:
    """Row-wise softmax with per-row max subtraction for stability."""
    m = as_matrix(m, "softmax input")
    shifted = m - m.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def row_norms(m: np.ndarray) -> np.ndarray:
    return np.linalg.norm(m, axis=1)


def l2_normalize_rows(m) -> np.ndarray:
    """Scale each row to unit L2 norm; rows below the norm floor stay zero.

    A near-zero row signals a collapsed representation, so it is reported via
    a `DegenerateRowWarning` rather than raising.
    """
    m = as_matrix(m, "l2_normalize input")
    norms = row_norms(m)
    degenerate = norms < NORM_FLOOR
    if degenerate.any():
        warnings.warn(
            f"{int(degenerate.sum())} row(s) with near-zero norm left unnormalized",
            DegenerateRowWarning,
            stacklevel=2,
        )
    safe = np.where(degenerate, 1.0, norms)
    return m / safe[:, None]


def cosine_similarity(a, b) -> np.ndarray:
    """Pairwise cosine similarity between rows of `a` and rows of `b`.

    Zero-norm rows contribute similarity 0 (consistent with
    `l2_normalize_rows`, which warns and leaves them at zero).
    """
    a = as_matrix(a, "cosine a")
    b = as_matrix(b, "cosine b")
    if a.shape[1] != b.shape[1]:
        raise ShapeError(f"cosine operands need equal widths, got {a.shape[1]} and {b.shape[1]}")
    return l2_normalize_rows(a) @ l2_normalize_rows(b).T


def cosine_similarity_vjp(a, b, d_sim) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of sum(d_sim * cosine_similarity(a, b)) w.r.t. `a` and `b`.

    Rows below the norm floor receive zero gradient, matching the constant
    zero similarity assigned to them in the forward pass.
    """
    a = as_matrix(a, "cosine a")
    b = as_matrix(b, "cosine b")
    d_sim = as_matrix(d_sim, "upstream similarity gradient")
    if a.shape[1] != b.shape[1]:
        raise ShapeError(f"cosine operands need equal widths, got {a.shape[1]} and {b.shape[1]}")
    if d_sim.shape != (a.shape[0], b.shape[0]):
        raise ShapeError(
            f"upstream gradient must be {(a.shape[0], b.shape[0])}, got {d_sim.shape}"
        )
    na = row_norms(a)
    nb = row_norms(b)
    an = a / np.where(na < NORM_FLOOR, 1.0, na)[:, None]
    bn = b / np.where(nb < NORM_FLOOR, 1.0, nb)[:, None]
    sim = an @ bn.T
    row_dot = (d_sim * sim).sum(axis=1, keepdims=True)
    col_dot = (d_sim * sim).sum(axis=0)[:, None]
    # zero rows: divide by inf -> exact zero gradient
    div_a = np.where(na < NORM_FLOOR, np.inf, na)[:, None]
    div_b = np.where(nb < NORM_FLOOR, np.inf, nb)[:, None]
    da = (d_sim @ bn - row_dot * an) / div_a
    db = (d_sim.T @ an - col_dot * bn) / div_b
    return da, db


def orthogonal_init(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    """Seeded random matrix whose row blocks are orthonormal.

    For rows <= cols the rows form a single orthonormal set; for rows > cols
    each consecutive block of up to `cols` rows is orthonormal (full mutual
    orthogonality is impossible beyond the ambient dimension).
    """
    if rows < 1 or cols < 1:
        raise ShapeError(f"rows and cols must be >= 1, got ({rows}, {cols})")
    blocks = []
    remaining = rows
    while remaining > 0:
        b = min(cols, remaining)
        gauss = rng.standard_normal((cols, b))
        q, r = np.linalg.qr(gauss)
        signs = np.sign(np.diag(r))
        signs[signs == 0] = 1.0
        blocks.append((q * signs).T)
        remaining -= b
    return np.vstack(blocks)


@dataclass
class AdamState:
    """Per-parameter Adam moment buffers and step counter."""

    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_param(cls, param, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        z = np.zeros_like(np.asarray(param, dtype=np.float64))
        return cls(z, z.copy(), 0, beta1, beta2, eps)

    def copy(self) -> "AdamState":
        return AdamState(
            self.first_moment.copy(), self.second_moment.copy(),
            self.step_count, self.beta1, self.beta2, self.eps,
        )


def adam_step(param, grad, state: AdamState, lr: float) -> np.ndarray:
    """One bias-corrected Adam update; returns the new parameter value.

    `state` is advanced in place (single-owner mutable, like the optimizer it
    replaces); `param` itself is not modified.
    """
    check_positive(lr, "learning rate")
    param = np.asarray(param, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if param.shape != grad.shape:
        raise ShapeError(f"param shape {param.shape} != grad shape {grad.shape}")
    if state.first_moment.shape != param.shape:
        raise ShapeError(f"Adam state shape {state.first_moment.shape} != param shape {param.shape}")
    state.step_count += 1
    t = state.step_count
    state.first_moment = state.beta1 * state.first_moment + (1.0 - state.beta1) * grad
    state.second_moment = state.beta2 * state.second_moment + (1.0 - state.beta2) * grad * grad
    m_hat = state.first_moment / (1.0 - state.beta1 ** t)
    v_hat = state.second_moment / (1.0 - state.beta2 ** t)
    return param - lr * m_hat / (np.sqrt(v_hat) + state.eps)


def finite_diff_grad(loss_fn, at, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient estimate of a scalar function, entrywise.

    Independent verification oracle: intentionally brute force, never used to
    compute a training gradient.
    """
    if h <= 0:
        raise ConfigError(f"finite-difference step must be > 0, got {h}")
    at = np.asarray(at, dtype=np.float64)
    flat = at.ravel().copy()
    grad = np.zeros_like(flat)
    for i in range(flat.size):
        plus = flat.copy()
        plus[i] += h
        minus = flat.copy()
        minus[i] -= h
        grad[i] = (loss_fn(plus.reshape(at.shape)) - loss_fn(minus.reshape(at.shape))) / (2.0 * h)
    return grad.reshape(at.shape)
