"""Binary reconstructions through the logistic link under the three factor pairings."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import expit

from .model import BinaryMatrix, DomainError, FactorModel, as_binary_array
from .stream import StreamTrace


class Pairing(str, Enum):
    BATCH = "batch"
    SEQUENTIAL_FINAL = "sequential_final"
    REGRET = "regret"


@dataclass(frozen=True)
class ReconstructionSeries:
    probabilities: np.ndarray
    states: np.ndarray
    aggregate: np.ndarray
    pairing: Pairing


def reconstruct(theta, pairing: Pairing) -> ReconstructionSeries:
    """States are 1 where sigmoid(theta) >= 0.5, so theta == 0 maps to 1."""
    theta = np.asarray(theta, dtype=float)
    prob = expit(theta)
    states = (prob >= 0.5).astype(np.int8)
    return ReconstructionSeries(prob, states, states.sum(axis=1).astype(int), Pairing(pairing))


def batch_theta(model: FactorModel) -> np.ndarray:
    return model.theta()


def sequential_theta(trace: StreamTrace, final_loadings) -> np.ndarray:
    return trace.scores @ np.asarray(final_loadings, dtype=float).T


def regret_theta(trace: StreamTrace, final_loadings) -> np.ndarray:
    """theta_tj = <a_t, v_j^t>, each score against the loadings its own update produced."""
    if not trace.has_snapshots:
        raise DomainError("regret pairing needs per-step loadings; re-run the stream with snapshots enabled")
    after = trace.loadings_after(final_loadings)
    return np.einsum("tr,tpr->tp", trace.scores, after)


def reconstruct_all(batch_model: FactorModel, trace: StreamTrace, final_loadings) -> dict:
    return {
        Pairing.BATCH: reconstruct(batch_theta(batch_model), Pairing.BATCH),
        Pairing.SEQUENTIAL_FINAL: reconstruct(sequential_theta(trace, final_loadings), Pairing.SEQUENTIAL_FINAL),
        Pairing.REGRET: reconstruct(regret_theta(trace, final_loadings), Pairing.REGRET),
    }


def hamming_error(states, reference) -> float:
    s = as_binary_array(states, "states")
    ref = reference.values if isinstance(reference, BinaryMatrix) else as_binary_array(reference, "reference")
    if s.shape != ref.shape:
        raise DomainError(f"shape mismatch: {s.shape} vs {ref.shape}")
    return float(np.mean(s != ref))


def autocorrelation(series, max_lag: int) -> np.ndarray:
    """Sample autocorrelation at lags 0..max_lag (biased estimator)."""
    x = np.asarray(series, dtype=float)
    x = x - x.mean()
    denom = float(x @ x)
    if denom == 0:
        return np.zeros(max_lag + 1)
    return np.array([float(x[: x.size - k] @ x[k:]) / denom for k in range(max_lag + 1)])


def dominant_period(series, max_lag: int) -> int | None:
    """Lag of the highest autocorrelation peak beyond the first zero crossing.

    Returns None for a constant series or when the autocorrelation never
    turns negative within ``max_lag``.
    """
    ac = autocorrelation(series, max_lag)
    neg = np.flatnonzero(ac < 0)
    if ac[0] == 0 or neg.size == 0:
        return None
    start = int(neg[0])
    return int(start + np.argmax(ac[start:]))
