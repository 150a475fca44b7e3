"""Projected discrete-prompt optimization over a vocabulary embedding table.

The optimizer keeps a continuous token-embedding matrix, projects each row
to its Euclidean-nearest vocabulary embedding, evaluates a caller-supplied
differentiable loss at the *projected* matrix, and applies the gradient to
the *continuous* matrix. Every projection is scored and the lowest-loss
iterate wins, so the reported result can only improve with more iterations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..errors import InvalidRangeError
from .tokenizer import TokenSequence, Vocabulary

# loss(projected_rows, step) -> (value, gradient w.r.t. projected_rows)
PfoLoss = Callable[[np.ndarray, int], tuple[float, np.ndarray]]


@dataclass(frozen=True)
class PfoConfig:
    learning_rate: float = 0.3
    iterations: int = 50
    loss_weight: float = 1.0
    aux_weight: float = 0.0
    step_pool: tuple[int, ...] = (1,)

    def __post_init__(self):
        if self.aux_weight < 0:
            raise InvalidRangeError(f"aux_weight must be >= 0, got {self.aux_weight}")
        if self.iterations < 1:
            raise InvalidRangeError(f"iterations must be >= 1, got {self.iterations}")
        if not self.step_pool:
            raise InvalidRangeError("step_pool must be nonempty")


@dataclass
class PfoResult:
    tokens: TokenSequence
    loss: float
    final_tokens: TokenSequence
    history: list[float] = field(default_factory=list)


def project_embeddings(
    rows: np.ndarray, vocab: Vocabulary
) -> tuple[np.ndarray, TokenSequence]:
    """Snap each row to the nearest vocabulary embedding (ties: lowest index)."""
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    table = vocab.embeddings
    if rows.shape[1] != table.shape[1]:
        raise InvalidRangeError(
            f"row dim {rows.shape[1]} != vocabulary embedding dim {table.shape[1]}"
        )
    d2 = (
        np.sum(rows**2, axis=1, keepdims=True)
        - 2.0 * rows @ table.T
        + np.sum(table**2, axis=1)
    )
    idx = np.argmin(d2, axis=1)
    return table[idx].copy(), [int(i) for i in idx]


def aux_loss(projected: np.ndarray, target: np.ndarray) -> float:
    """One minus cosine similarity of mean-pooled rows against a target vector."""
    return _aux_loss_grad(projected, target)[0]


def _aux_loss_grad(projected: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    rows = np.atleast_2d(np.asarray(projected, dtype=np.float64))
    target = np.asarray(target, dtype=np.float64)
    pooled = rows.mean(axis=0)
    np_norm = np.linalg.norm(pooled)
    nt_norm = np.linalg.norm(target)
    if np_norm == 0.0 or nt_norm == 0.0:
        raise InvalidRangeError("cosine similarity undefined for a zero vector")
    cos = float(pooled @ target / (np_norm * nt_norm))
    d_pooled = -(target / (np_norm * nt_norm) - cos * pooled / np_norm**2)
    grad = np.broadcast_to(d_pooled / rows.shape[0], rows.shape).copy()
    return 1.0 - cos, grad


def composite_loss(
    base_loss: PfoLoss, cfg: PfoConfig, aux_target: np.ndarray | None = None
) -> PfoLoss:
    """Weighted base loss plus the optional pooled-cosine auxiliary term."""

    def fn(projected: np.ndarray, step: int) -> tuple[float, np.ndarray]:
        value, grad = base_loss(projected, step)
        value *= cfg.loss_weight
        grad = cfg.loss_weight * np.asarray(grad, dtype=np.float64)
        if cfg.aux_weight > 0.0 and aux_target is not None:
            aux_val, aux_grad = _aux_loss_grad(projected, aux_target)
            value += cfg.aux_weight * aux_val
            grad = grad + cfg.aux_weight * aux_grad
        return value, grad

    return fn


def pfo_optimize(
    init: TokenSequence | Sequence[int],
    loss: PfoLoss,
    vocab: Vocabulary,
    cfg: PfoConfig,
    rng: np.random.Generator | None = None,
) -> PfoResult:
    """Optimize a discrete token sequence through its continuous embeddings.

    Each iteration projects, draws a step from the pool, differentiates the
    loss at the projected rows, and descends on the continuous rows. The
    returned tokens are the best-scoring projection seen (the final
    projection is also reported).
    """
    rng = rng or np.random.default_rng(0)
    rows = vocab.embeddings[list(init)].astype(np.float64).copy()

    best_tokens: TokenSequence = list(init)
    best_loss = np.inf
    history: list[float] = []
    tokens: TokenSequence = list(init)
    for iteration in range(cfg.iterations):
        projected, tokens = project_embeddings(rows, vocab)
        step = int(rng.choice(cfg.step_pool))
        value, grad = loss(projected, step)
        if not np.isfinite(value):
            raise InvalidRangeError(
                f"non-finite loss {value} at iteration {iteration} (tokens {tokens})"
            )
        history.append(float(value))
        if value < best_loss:
            best_loss = float(value)
            best_tokens = list(tokens)
        grad = np.asarray(grad, dtype=np.float64)
        if grad.shape != rows.shape:
            raise InvalidRangeError(
                f"loss gradient shape {grad.shape} != rows {rows.shape}"
            )
        rows -= cfg.learning_rate * grad
    projected, final_tokens = project_embeddings(rows, vocab)
    return PfoResult(
        tokens=best_tokens,
        loss=float(best_loss),
        final_tokens=final_tokens,
        history=history,
    )
