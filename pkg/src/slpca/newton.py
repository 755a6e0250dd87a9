"""Damped Newton solver for the ridge-regularized row problem

    l(a) = h(a, V) + gamma * ||a||^2 / 2

which is strictly convex for gamma > 0. Steps are the Newton direction,
shortened by Armijo backtracking on objective values, and the loop stops
once half the Newton decrement g' H^-1 g drops to ``newton_tol``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.special import expit

from .loss import regularized_row_objective, row_gradients
from .model import DomainError, Hyperparams

MAX_NEWTON_ITER = 100
MAX_BACKTRACK = 60


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class NewtonReport:
    solution: np.ndarray
    iterations: int
    final_decrement: float
    converged: bool
    objective: float
    gradient_norm: float
    objective_history: list = field(default_factory=list, repr=False)


def _objective_change(z, dz, a, da, gamma):
    """l(a + da) - l(a), evaluated without cancellation.

    Uses softplus(-z - dz) - softplus(-z) = log1p(sigmoid(-z) * expm1(-dz)) per
    coordinate, so Armijo tests keep resolving progress long after the
    objective itself has stopped changing in floating point.
    """
    small = np.abs(dz) <= 1.0
    # large coordinate moves: the log1p argument can cancel, difference directly
    dz_s = np.where(small, dz, 0.0)
    near = np.log1p(expit(-z) * np.expm1(-dz_s))
    far = np.logaddexp(0.0, -(z + dz)) - np.logaddexp(0.0, -z)
    loss = np.sum(np.where(small, near, far), axis=-1)
    return loss + 0.5 * gamma * np.sum(da * (2.0 * a + da), axis=-1)


def _factor(hess):
    try:
        return cho_factor(hess, lower=True, check_finite=True)
    except (LinAlgError, ValueError) as exc:
        cond = np.linalg.cond(hess)
        raise SolverError(f"Newton system not positive definite (condition estimate {cond:.3e})") from exc


def solve_row(
    x_signed,
    loadings,
    gamma: float,
    params: Hyperparams = Hyperparams(),
    start=None,
    max_iter: int = MAX_NEWTON_ITER,
    max_backtrack: int = MAX_BACKTRACK,
) -> NewtonReport:
    if not gamma > 0:
        raise DomainError(f"gamma must be > 0 for a strictly convex row problem, got {gamma}")
    x = np.asarray(x_signed, dtype=np.float64)
    v = np.asarray(loadings, dtype=np.float64)
    if v.ndim == 1:
        v = v.reshape(-1, 1)
    if x.ndim != 1 or v.shape[0] != x.shape[0]:
        raise DomainError(f"dimension mismatch: row {x.shape}, loadings {v.shape}")
    if not np.all(np.isfinite(v)):
        raise DomainError("loadings must be finite")
    r = v.shape[1]
    a = np.zeros(r) if start is None else np.array(start, dtype=np.float64).reshape(r)

    obj = regularized_row_objective(x, a, v, gamma)
    history = [obj]
    iterations = 0
    converged = False
    while True:
        g = row_gradients(x, a, v, gamma)
        factor = _factor(g.hessian_scores)
        step = -cho_solve(factor, g.grad_scores)
        slope = float(g.grad_scores @ step)
        decrement = -slope
        if decrement / 2 <= params.newton_tol:
            converged = True
            break
        if iterations >= max_iter:
            break
        z = x * (v @ a)
        dz = x * (v @ step)
        d = params.initial_step
        for _ in range(max_backtrack):
            change = _objective_change(z, d * dz, a, d * step, gamma)
            if change <= params.armijo_alpha * d * slope:
                break
            d *= params.armijo_beta
        else:
            break
        a = a + d * step
        obj = obj + change
        history.append(obj)
        iterations += 1

    return NewtonReport(
        solution=a,
        iterations=iterations,
        final_decrement=decrement,
        converged=converged,
        objective=obj,
        gradient_norm=float(np.linalg.norm(g.grad_scores)),
        objective_history=history,
    )


@dataclass(frozen=True)
class BatchNewtonReport:
    solutions: np.ndarray
    iterations: np.ndarray
    final_decrements: np.ndarray
    converged: np.ndarray
    objectives: np.ndarray
    gradient_norms: np.ndarray


def _objectives(xs, a, v, gamma):
    return np.logaddexp(0.0, -xs * (a @ v.T)).sum(axis=1) + 0.5 * gamma * np.einsum("mi,mi->m", a, a)


def solve_rows(
    x_signed,
    loadings,
    gamma: float,
    params: Hyperparams = Hyperparams(),
    start=None,
    max_iter: int = MAX_NEWTON_ITER,
    max_backtrack: int = MAX_BACKTRACK,
) -> BatchNewtonReport:
    """Vectorized ``solve_row`` over the rows of ``x_signed`` (M x P), all against one V.

    Each row runs its own Newton iteration and line search; rows that have
    converged are frozen while the rest continue.
    """
    if not gamma > 0:
        raise DomainError(f"gamma must be > 0 for a strictly convex row problem, got {gamma}")
    xs = np.asarray(x_signed, dtype=np.float64)
    v = np.asarray(loadings, dtype=np.float64)
    if xs.ndim != 2 or v.ndim != 2 or v.shape[0] != xs.shape[1]:
        raise DomainError(f"dimension mismatch: rows {xs.shape}, loadings {v.shape}")
    m, r = xs.shape[0], v.shape[1]
    a = np.zeros((m, r)) if start is None else np.array(start, dtype=np.float64).reshape(m, r)
    eye = np.eye(r)

    obj = _objectives(xs, a, v, gamma)
    iterations = np.zeros(m, dtype=int)
    decrement = np.full(m, np.inf)
    gnorm = np.full(m, np.inf)
    converged = np.zeros(m, dtype=bool)
    active = np.ones(m, dtype=bool)

    for _ in range(max_iter + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        xa, aa = xs[idx], a[idx]
        z = xa * (aa @ v.T)
        w = -xa * expit(-z)
        c = expit(z) * expit(-z)
        grad = w @ v + gamma * aa
        hess = np.einsum("mp,pi,pj->mij", c, v, v) + gamma * eye
        try:
            chol = np.linalg.cholesky(hess)
        except np.linalg.LinAlgError as exc:
            cond = np.max(np.linalg.cond(hess))
            raise SolverError(f"Newton system not positive definite (condition estimate {cond:.3e})") from exc
        y = np.linalg.solve(chol, grad[..., None])
        step = -np.linalg.solve(np.swapaxes(chol, 1, 2), y)[..., 0]
        slope = np.einsum("mi,mi->m", grad, step)
        decrement[idx] = -slope
        gnorm[idx] = np.linalg.norm(grad, axis=1)

        done = -slope / 2 <= params.newton_tol
        converged[idx[done]] = True
        capped = iterations[idx] >= max_iter
        stop = done | capped
        active[idx[stop]] = False
        keep = ~stop
        idx, step, slope = idx[keep], step[keep], slope[keep]
        if idx.size == 0:
            break

        z = z[keep]
        dz = xs[idx] * (step @ v.T)
        d = np.full(idx.size, params.initial_step)
        accepted = np.zeros(idx.size, dtype=bool)
        new_obj = np.empty(idx.size)
        for _ in range(max_backtrack):
            pend = ~accepted
            change = _objective_change(
                z[pend], d[pend, None] * dz[pend], a[idx[pend]], d[pend, None] * step[pend], gamma
            )
            ok = change <= params.armijo_alpha * d[pend] * slope[pend]
            pidx = np.flatnonzero(pend)
            new_obj[pidx[ok]] = obj[idx[pend]][ok] + change[ok]
            accepted[pidx[ok]] = True
            d[pidx[~ok]] *= params.armijo_beta
            if accepted.all():
                break
        # rows whose line search failed stop unconverged
        active[idx[~accepted]] = False
        good = idx[accepted]
        a[good] += d[accepted, None] * step[accepted]
        obj[good] = new_obj[accepted]
        iterations[good] += 1

    return BatchNewtonReport(a, iterations, decrement, converged, obj, gnorm)
