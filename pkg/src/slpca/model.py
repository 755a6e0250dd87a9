"""Core containers: binary data, factor models, hyperparameters and step schedules."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np


class DomainError(ValueError):
    """Raised when an input falls outside the domain an operation accepts."""


def as_binary_array(x, name: str = "x") -> np.ndarray:
    arr = np.asarray(x)
    if arr.dtype == bool:
        return arr.astype(np.int8)
    bad = np.flatnonzero(~np.isin(arr.ravel(), (0, 1)))
    if bad.size:
        idx = np.unravel_index(bad[0], arr.shape)
        idx = idx[0] if len(idx) == 1 else tuple(int(i) for i in idx)
        raise DomainError(f"{name} has a non-binary entry {arr[idx]!r} at index {idx}")
    return arr.astype(np.int8)


def signed_transform(x) -> np.ndarray:
    """Map a {0,1} row (or matrix) to {-1,+1} via 2x - 1."""
    return 2.0 * as_binary_array(x).astype(np.float64) - 1.0


@dataclass(frozen=True)
class BinaryMatrix:
    """N x P matrix of 0/1 observations, with optional per-row timestamps."""

    values: np.ndarray
    timestamps: Optional[Sequence[str]] = None
    columns: Optional[Sequence[str]] = None

    def __post_init__(self):
        arr = as_binary_array(self.values, "data")
        if arr.ndim != 2:
            raise DomainError(f"data must be 2-D, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DomainError(f"data must have N >= 1 and P >= 1, got shape {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)
        if self.timestamps is not None and len(self.timestamps) != arr.shape[0]:
            raise DomainError("timestamps length does not match row count")
        if self.columns is not None and len(self.columns) != arr.shape[1]:
            raise DomainError("column names do not match column count")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    @property
    def signed(self) -> np.ndarray:
        return 2.0 * self.values - 1.0

    def head(self, t: int) -> "BinaryMatrix":
        ts = None if self.timestamps is None else list(self.timestamps)[:t]
        return BinaryMatrix(self.values[:t], ts, self.columns)


@dataclass(frozen=True)
class FactorModel:
    """Theta = scores @ loadings.T with scores N x r and loadings P x r."""

    scores: np.ndarray
    loadings: np.ndarray

    def __post_init__(self):
        a = np.array(self.scores, dtype=np.float64, ndmin=2)
        v = np.array(self.loadings, dtype=np.float64, ndmin=2)
        if a.shape[1] != v.shape[1]:
            raise DomainError(f"rank mismatch: scores {a.shape}, loadings {v.shape}")
        r = a.shape[1]
        if not 1 <= r <= min(a.shape[0], v.shape[0]):
            raise DomainError(f"rank {r} outside [1, min(N, P)] for N={a.shape[0]}, P={v.shape[0]}")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(v))):
            raise DomainError("factor entries must be finite")
        a.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "scores", a)
        object.__setattr__(self, "loadings", v)

    @property
    def rank(self) -> int:
        return self.scores.shape[1]

    def theta(self) -> np.ndarray:
        return self.scores @ self.loadings.T

    def natural_parameters(self, t: int) -> np.ndarray:
        if not 0 <= t < self.scores.shape[0]:
            raise IndexError(f"row index {t} out of range for N={self.scores.shape[0]}")
        return self.loadings @ self.scores[t]


def natural_parameters(model: FactorModel, t: int) -> np.ndarray:
    return model.natural_parameters(t)


@dataclass(frozen=True)
class Hyperparams:
    gamma: float = 0.1
    lam: float = 0.1
    newton_tol: float = 1e-20
    armijo_alpha: float = 0.3
    armijo_beta: float = 0.5
    initial_step: float = 1.0
    schedule_constant: float = 0.2

    def __post_init__(self):
        if not self.gamma > 0:
            raise DomainError(f"gamma must be > 0, got {self.gamma}")
        if not self.lam >= 0:
            raise DomainError(f"lambda must be >= 0, got {self.lam}")
        if not self.newton_tol > 0:
            raise DomainError(f"newton_tol must be > 0, got {self.newton_tol}")
        for name in ("armijo_alpha", "armijo_beta"):
            val = getattr(self, name)
            if not 0 < val < 1:
                raise DomainError(f"{name} must lie strictly inside (0, 1), got {val}")
        if not self.initial_step > 0:
            raise DomainError(f"initial_step must be > 0, got {self.initial_step}")
        if not self.schedule_constant > 0:
            raise DomainError(f"schedule_constant must be > 0, got {self.schedule_constant}")


class ScheduleKind(str, Enum):
    DIMINISHING = "diminishing"
    CONSTANT = "constant"


@dataclass(frozen=True)
class StepSchedule:
    kind: ScheduleKind = ScheduleKind.DIMINISHING
    constant: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "kind", ScheduleKind(self.kind))
        if not (self.constant > 0 and math.isfinite(self.constant)):
            raise DomainError(f"schedule constant must be positive and finite, got {self.constant}")

    def __call__(self, t: int) -> float:
        return step_size(self, t)


def step_size(schedule: StepSchedule, t: int) -> float:
    """eta_t: C / sqrt(t) for the diminishing schedule, C for the constant one."""
    if t < 1:
        raise DomainError(f"step index must be >= 1, got {t}")
    if schedule.kind is ScheduleKind.DIMINISHING:
        return schedule.constant / math.sqrt(t)
    return schedule.constant
