"""Sequential logistic PCA.

Each arriving row gets its own score by an exact ridge-regularized Newton
solve against the current loadings; the loadings then take one gradient step
on that row's loss:

    a_t = argmin_a h_t(a, V^{t-1}) + gamma ||a||^2 / 2
    V^t = V^{t-1} - eta_t * grad_V h_t(a_t, V^{t-1})

No ridge shrinkage is applied to V in the loading step.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .loss import default_curvature, hessian_weights, row_gradients, row_loss
from .model import BinaryMatrix, DomainError, Hyperparams, StepSchedule, as_binary_array, step_size
from .newton import solve_row

INIT_SCALE = 1e-2


@dataclass(frozen=True)
class StreamState:
    loadings: np.ndarray
    step_index: int
    schedule: StepSchedule
    params: Hyperparams

    @property
    def p(self) -> int:
        return self.loadings.shape[0]

    @property
    def rank(self) -> int:
        return self.loadings.shape[1]


@dataclass(frozen=True)
class TraceRecord:
    t: int
    eta: float
    score: np.ndarray
    score_norm: float
    loss_at_anchor: float
    post_update_loss: float
    grad_norm: float
    loading_norm_sq: float
    loading_delta_norm: float
    curvature: float
    # max_j sigma_j (1 - sigma_j) ||a_t||^2, the operator norm of the loading Hessian
    hessian_norm: float
    # <V^{t-1}, V^t - V^{t-1}>
    anchor_inner: float
    newton_iterations: int
    converged: bool
    anchor_loadings: Optional[np.ndarray] = None
    anchor_gradient: Optional[np.ndarray] = None


SCALAR_FIELDS = (
    "t", "eta", "score_norm", "loss_at_anchor", "post_update_loss", "grad_norm",
    "loading_norm_sq", "loading_delta_norm", "curvature", "hessian_norm", "anchor_inner",
    "newton_iterations", "converged",
)


@dataclass
class StreamTrace:
    """Per-step history of a stream run."""

    initial_loadings: np.ndarray
    records: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def has_snapshots(self) -> bool:
        return bool(self.records) and all(r.anchor_loadings is not None for r in self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    @property
    def scores(self) -> np.ndarray:
        r = self.initial_loadings.shape[1]
        if not self.records:
            return np.zeros((0, r))
        return np.stack([rec.score for rec in self.records])

    @property
    def omega_hat(self) -> float:
        return float(self.column("score_norm").max()) if self.records else 0.0

    def anchors(self) -> np.ndarray:
        """Stacked V^{t-1} for t = 1..N (requires snapshots)."""
        if not self.has_snapshots:
            raise DomainError("trace has no loading snapshots; re-run the stream with snapshots enabled")
        return np.stack([rec.anchor_loadings for rec in self.records])

    def loadings_after(self, final_loadings) -> np.ndarray:
        """Stacked V^t for t = 1..N: each anchor shifted by one, ending at the final loadings."""
        anchors = self.anchors()
        return np.concatenate([anchors[1:], np.asarray(final_loadings, dtype=float)[None]], axis=0)


def init_stream(
    p: int,
    r: int = 1,
    schedule: StepSchedule = StepSchedule(),
    params: Hyperparams = Hyperparams(),
    seed: int = 0,
    scale: float = INIT_SCALE,
) -> StreamState:
    """Loadings uniform in [-scale, scale]: close to, but not at, the zero saddle."""
    if p < 1 or r < 1:
        raise DomainError(f"need P >= 1 and r >= 1, got P={p}, r={r}")
    rng = np.random.default_rng(seed)
    v = rng.uniform(-scale, scale, size=(p, r))
    return StreamState(v, 0, schedule, params)


def process_row(state: StreamState, x, snapshot: bool = False):
    row = as_binary_array(x, "row")
    if row.shape != (state.p,):
        raise DomainError(f"row has shape {row.shape}, expected ({state.p},)")
    xs = 2.0 * row - 1.0
    v_prev = state.loadings
    t = state.step_index + 1
    params = state.params

    rep = solve_row(xs, v_prev, params.gamma, params)
    a = rep.solution
    grads = row_gradients(xs, a, v_prev)
    eta = step_size(state.schedule, t)
    delta = -eta * grads.grad_loadings
    v_new = v_prev + delta

    a_sq = float(a @ a)
    rec = TraceRecord(
        t=t,
        eta=eta,
        score=a.copy(),
        score_norm=float(np.sqrt(a_sq)),
        loss_at_anchor=grads.loss,
        post_update_loss=row_loss(xs, a, v_new),
        grad_norm=float(np.linalg.norm(grads.grad_loadings)),
        loading_norm_sq=float(np.sum(v_new * v_new)),
        loading_delta_norm=float(np.linalg.norm(delta)),
        curvature=default_curvature(a),
        hessian_norm=float(hessian_weights(xs, v_prev @ a).max() * a_sq),
        anchor_inner=float(np.sum(v_prev * delta)),
        newton_iterations=rep.iterations,
        converged=rep.converged,
        anchor_loadings=v_prev.copy() if snapshot else None,
        anchor_gradient=grads.grad_loadings if snapshot else None,
    )
    return replace(state, loadings=v_new, step_index=t), rec


def run_stream(state: StreamState, data: BinaryMatrix | np.ndarray, snapshots: bool = False):
    values = data.values if isinstance(data, BinaryMatrix) else np.asarray(data)
    if values.ndim != 2 or (values.shape[0] and values.shape[1] != state.p):
        raise DomainError(f"data shape {values.shape} does not match P={state.p}")
    trace = StreamTrace(initial_loadings=state.loadings.copy())
    for row in values:
        state, rec = process_row(state, row, snapshot=snapshots)
        trace.records.append(rec)
    return state, trace
