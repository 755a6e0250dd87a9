"""Synthetic binary data: correlated Bernoulli streams, planted low-rank
logistic data, and a periodic day/night usage stream."""
from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timedelta

import numpy as np
from scipy.special import expit

from .model import BinaryMatrix, DomainError, FactorModel

SIM_EPOCH = datetime(2024, 1, 1)


def _check_prob(name, p):
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"{name} must lie in [0, 1], got {p}")


@dataclass(frozen=True)
class CorrelatedBernoulliSpec:
    dims: int = 8
    length: int = 1000
    marginal_p: float = 0.5
    mixing_prob: float = 0.7
    seed: int = 0

    def __post_init__(self):
        _check_prob("marginal_p", self.marginal_p)
        _check_prob("mixing_prob", self.mixing_prob)
        if self.dims < 1 or self.length < 1:
            raise DomainError("dims and length must be >= 1")


def gen_correlated_bernoulli(spec: CorrelatedBernoulliSpec) -> BinaryMatrix:
    """Common-variable mixture X_j = U_j Z + (1 - U_j) Y_j.

    Z is shared across columns, U_j ~ Bernoulli(mixing_prob) picks it, and
    Y_j is an independent draw with the same marginal. Every column keeps
    the Bernoulli(marginal_p) marginal and any two columns have correlation
    mixing_prob ** 2.
    """
    rng = np.random.default_rng(spec.seed)
    n, p = spec.length, spec.dims
    z = rng.random(n) < spec.marginal_p
    u = rng.random((n, p)) < spec.mixing_prob
    y = rng.random((n, p)) < spec.marginal_p
    return BinaryMatrix(np.where(u, z[:, None], y).astype(np.int8))


def gen_planted_lowrank(
    n: int,
    p: int,
    r: int = 1,
    magnitude: float = 4.0,
    seed: int = 0,
    fraction: float = 1.0,
):
    """Sample x_tj ~ Bernoulli(sigmoid(theta_tj)) from a planted rank-r theta.

    Factor rows are drawn unit-norm; theta is then scaled so that at least
    ``fraction`` of its cells have |theta| >= magnitude. For r = 1 the unit
    rows are +-1, so every cell sits at exactly +-magnitude.
    """
    if magnitude < 0:
        raise DomainError(f"magnitude must be >= 0, got {magnitude}")
    if not 0 < fraction <= 1:
        raise DomainError(f"fraction must lie in (0, 1], got {fraction}")
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, r))
    v = rng.standard_normal((p, r))
    a /= np.linalg.norm(a, axis=1, keepdims=True)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    base = np.abs(a @ v.T)
    q = np.quantile(base, 1.0 - fraction) if fraction < 1 else base.min()
    scale = magnitude / q if magnitude > 0 else 0.0
    # split the scale evenly between the two factors
    a *= np.sqrt(scale)
    v *= np.sqrt(scale)
    theta = a @ v.T
    x = (rng.random((n, p)) < expit(theta)).astype(np.int8)
    return BinaryMatrix(x), FactorModel(a, v)


@dataclass(frozen=True)
class DayNightSpec:
    dims: int = 6
    period: int = 144
    day_on_prob: float = 0.8
    night_on_prob: float = 0.05
    day_fraction: float = 0.4
    length: int = 2016
    seed: int = 0

    def __post_init__(self):
        _check_prob("day_on_prob", self.day_on_prob)
        _check_prob("night_on_prob", self.night_on_prob)
        if not 0 < self.day_fraction < 1:
            raise DomainError(f"day_fraction must lie in (0, 1), got {self.day_fraction}")
        if self.dims < 1 or self.length < 1 or self.period < 1:
            raise DomainError("dims, length and period must be >= 1")


def day_mask(spec: DayNightSpec) -> np.ndarray:
    t = np.arange(spec.length)
    return (t % spec.period) / spec.period < spec.day_fraction


def gen_day_night(spec: DayNightSpec) -> BinaryMatrix:
    """Synthetic stand-in for a fleet of monitors sampled every 10 minutes.

    All columns share the day/night phase; within a phase cells are
    independent Bernoulli draws.
    """
    rng = np.random.default_rng(spec.seed)
    prob = np.where(day_mask(spec), spec.day_on_prob, spec.night_on_prob)
    x = (rng.random((spec.length, spec.dims)) < prob[:, None]).astype(np.int8)
    cadence = timedelta(days=1) / spec.period
    stamps = [(SIM_EPOCH + k * cadence).isoformat(timespec="minutes") for k in range(spec.length)]
    return BinaryMatrix(x, timestamps=stamps, columns=[f"m{j + 1}" for j in range(spec.dims)])
