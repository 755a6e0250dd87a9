"""Bernoulli Bregman divergence (logistic loss) for one observation row.

For a signed row x* in {-1,+1}^P, scores a (length r) and loadings V (P x r)

    h(a, V) = sum_j log(1 + exp(-x*_j <a, v_j>))

The loss is symmetric in the roles of a and V: a column of the data matrix
against the score matrix is the same function, which is how the batch
solver reuses these routines for the loading step.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .model import DomainError


def _check_dims(x_signed, scores, loadings):
    x = np.asarray(x_signed, dtype=np.float64)
    a = np.asarray(scores, dtype=np.float64).reshape(-1)
    v = np.asarray(loadings, dtype=np.float64)
    if v.ndim == 1:
        v = v.reshape(-1, 1)
    if x.ndim != 1 or v.shape != (x.shape[0], a.shape[0]):
        raise DomainError(
            f"dimension mismatch: row {x.shape}, scores {a.shape}, loadings {v.shape}"
        )
    return x, a, v


def bregman_loss(x_signed, theta):
    """log(1 + exp(-x* theta)), stable for any finite theta."""
    theta = np.asarray(theta, dtype=np.float64)
    if not np.all(np.isfinite(theta)):
        raise DomainError("theta must be finite")
    x = np.asarray(x_signed, dtype=np.float64)
    if not np.all(np.abs(x) == 1.0):
        raise DomainError("x_signed must take values in {-1, +1}")
    out = np.logaddexp(0.0, -x * theta)
    return float(out) if out.ndim == 0 else out


def row_loss(x_signed, scores, loadings) -> float:
    x, a, v = _check_dims(x_signed, scores, loadings)
    return float(np.sum(np.logaddexp(0.0, -x * (v @ a))))


def hessian_weights(x_signed, theta) -> np.ndarray:
    """sigma_j (1 - sigma_j), formed as sigma(z) sigma(-z) so it stays accurate at saturation."""
    z = np.asarray(x_signed) * np.asarray(theta)
    return expit(z) * expit(-z)


@dataclass(frozen=True)
class RowLossGradients:
    loss: float
    grad_scores: np.ndarray
    grad_loadings: np.ndarray
    hessian_scores: np.ndarray


def row_gradients(x_signed, scores, loadings, gamma: float = 0.0) -> RowLossGradients:
    """Loss, gradients in both blocks and the score Hessian of one row.

    ``gamma`` adds the ridge term gamma * ||a||^2 / 2 to the score gradient and
    Hessian only; the reported loss and loading gradient are always the bare
    logistic loss.
    """
    x, a, v = _check_dims(x_signed, scores, loadings)
    theta = v @ a
    z = x * theta
    # d/dtheta_j of log(1 + exp(-x_j theta_j))
    w = -x * expit(-z)
    curv = expit(z) * expit(-z)
    loss = float(np.sum(np.logaddexp(0.0, -z)))
    grad_loadings = np.outer(w, a)
    grad_scores = v.T @ w + gamma * a
    hess = (v.T * curv) @ v + gamma * np.eye(a.shape[0])
    return RowLossGradients(loss, grad_scores, grad_loadings, hess)


def regularized_row_objective(x_signed, scores, loadings, gamma: float) -> float:
    a = np.asarray(scores, dtype=np.float64).reshape(-1)
    return row_loss(x_signed, a, loadings) + 0.5 * gamma * float(a @ a)


@dataclass(frozen=True)
class SurrogateAnchor:
    """Quadratic upper model of h(a, .) around ``anchor_loadings``."""

    anchor_loadings: np.ndarray
    anchor_loss: float
    anchor_gradient: np.ndarray
    curvature: float

    @classmethod
    def at(cls, x_signed, scores, anchor_loadings, curvature=None) -> "SurrogateAnchor":
        g = row_gradients(x_signed, scores, anchor_loadings)
        if curvature is None:
            curvature = default_curvature(scores)
        return cls(np.asarray(anchor_loadings, dtype=np.float64), g.loss, g.grad_loadings, float(curvature))


def surrogate_value(anchor: SurrogateAnchor, loadings) -> float:
    v = np.asarray(loadings, dtype=np.float64)
    if v.ndim == 1:
        v = v.reshape(-1, 1)
    if v.shape != anchor.anchor_loadings.shape:
        raise DomainError(f"loadings shape {v.shape} does not match anchor {anchor.anchor_loadings.shape}")
    d = v - anchor.anchor_loadings
    return float(
        anchor.anchor_loss
        + np.sum(anchor.anchor_gradient * d)
        + 0.5 * anchor.curvature * np.sum(d * d)
    )


def default_curvature(scores) -> float:
    """||a||^2 / 4, which bounds the operator norm of the loading Hessian."""
    a = np.asarray(scores, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(a)):
        raise DomainError("scores must be finite")
    return 0.25 * float(a @ a)
