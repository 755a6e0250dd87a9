"""Batch logistic PCA by alternating exact minimization over scores and loadings."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .model import BinaryMatrix, DomainError, FactorModel, Hyperparams
from .newton import solve_rows

log = logging.getLogger(__name__)

INIT_SCALE = 1e-2


@dataclass(frozen=True)
class BatchFitReport:
    model: FactorModel
    objective_history: list
    batch_loss: float
    alternations: int
    converged: bool
    # largest gradient norm left by any row / loading-row Newton solve in the last alternation
    row_residual: float = float("nan")
    solver_converged: bool = True
    hyperparams: Hyperparams = field(default_factory=Hyperparams)


def _losses(xs, a, v):
    return np.logaddexp(0.0, -xs * (a @ v.T)).sum(axis=1)


def full_objective(data: BinaryMatrix, scores, loadings, gamma: float, lam: float) -> float:
    """Sum of row losses plus both ridge penalties."""
    a = np.asarray(scores, dtype=np.float64)
    v = np.asarray(loadings, dtype=np.float64)
    return float(_losses(data.signed, a, v).sum() + 0.5 * gamma * np.sum(a * a) + 0.5 * lam * np.sum(v * v))


def batch_loss(model: FactorModel, data: BinaryMatrix) -> float:
    """Average unregularized row loss (1/N) sum_t h_t(a_t, V)."""
    if model.scores.shape[0] != data.n or model.loadings.shape[0] != data.p:
        raise DomainError(
            f"model shape ({model.scores.shape[0]} x {model.loadings.shape[0]}) does not match data {data.values.shape}"
        )
    return float(_losses(data.signed, model.scores, model.loadings).mean())


def canonicalize(scores, loadings):
    """Flip factor columns so the first nonzero loading entry of each is positive."""
    a = np.array(scores, dtype=np.float64)
    v = np.array(loadings, dtype=np.float64)
    for k in range(v.shape[1]):
        nz = np.flatnonzero(v[:, k])
        if nz.size and v[nz[0], k] < 0:
            v[:, k] *= -1
            a[:, k] *= -1
    return a, v


def fit_batch(
    data: BinaryMatrix,
    r: int = 1,
    params: Hyperparams = Hyperparams(),
    max_alternations: int = 500,
    tol: float = 1e-8,
    seed: int = 0,
) -> BatchFitReport:
    """Alternate exact score and loading solves until the objective stalls.

    Loadings start uniform in [-0.01, 0.01]; starting at zero would sit on the
    saddle where every score gradient vanishes. Each half-step warm-starts
    its Newton solves from the current factors, so the objective can only go
    down.
    """
    if not 1 <= r <= min(data.n, data.p):
        raise DomainError(f"rank {r} outside [1, min(N, P)] for data {data.values.shape}")
    if not params.lam > 0:
        raise DomainError("batch fitting needs lambda > 0 for a strictly convex loading step")
    xs = data.signed
    rng = np.random.default_rng(seed)
    v = rng.uniform(-INIT_SCALE, INIT_SCALE, size=(data.p, r))
    a = np.zeros((data.n, r))
    history = [full_objective(data, a, v, params.gamma, params.lam)]
    converged = False
    residual = np.inf
    solver_ok = True
    k = 0
    for k in range(1, max_alternations + 1):
        rep_a = solve_rows(xs, v, params.gamma, params, start=a)
        a = rep_a.solutions
        # loading row j sees column j of the data against the score matrix
        rep_v = solve_rows(xs.T, a, params.lam, params, start=v)
        v = rep_v.solutions
        residual = float(max(rep_a.gradient_norms.max(), rep_v.gradient_norms.max()))
        solver_ok = bool(rep_a.converged.all() and rep_v.converged.all())
        obj = full_objective(data, a, v, params.gamma, params.lam)
        prev = history[-1]
        history.append(obj)
        log.debug("alternation %d: objective %.12g", k, obj)
        if prev - obj <= tol * max(abs(prev), 1e-300):
            converged = True
            break

    a, v = canonicalize(a, v)
    model = FactorModel(a, v)
    return BatchFitReport(
        model=model,
        objective_history=history,
        batch_loss=batch_loss(model, data),
        alternations=k,
        converged=converged,
        row_residual=residual,
        solver_converged=solver_ok,
        hyperparams=params,
    )
