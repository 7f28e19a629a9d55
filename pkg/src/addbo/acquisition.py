"""UCB, additive UCB and expected-improvement acquisitions, plus beta schedules."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .gp import PosteriorState, posterior_full, posterior_group

BETA_KINDS = ("theoretical_add", "theoretical_full", "practical")


@dataclass(frozen=True)
class BetaSchedule:
    """Exploration weight beta_t as a function of the (1-based) UCB step.

    ``theoretical_add``: 2 log(M pi^2 t^2 / (2 delta)) + 2 d log(D t^3)
    ``theoretical_full``: 2 log(2 pi^2 t^2 / delta) + 2 D log(D t^3)
    ``practical``: coeff * d * log(2 t)
    """

    kind: str = "practical"
    delta: float = 0.1
    coeff: float = 0.2
    D: int = 1
    d: int = 1
    M: int = 1

    def __post_init__(self):
        if self.kind not in BETA_KINDS:
            raise ValueError(f"unknown beta schedule {self.kind!r}")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if not self.coeff > 0:
            raise ValueError(f"coeff must be positive, got {self.coeff}")
        if min(self.D, self.d, self.M) < 1:
            raise ValueError("dimensions must be positive")


def beta(schedule: BetaSchedule, t: int) -> float:
    if t < 1:
        raise ValueError(f"step index must be >= 1, got {t}")
    s = schedule
    if s.kind == "practical":
        return s.coeff * s.d * math.log(2.0 * t)
    if s.kind == "theoretical_add":
        return 2.0 * math.log(s.M * math.pi**2 * t**2 / (2.0 * s.delta)) + 2.0 * s.d * math.log(s.D * t**3)
    return 2.0 * math.log(2.0 * t**2 * math.pi**2 / s.delta) + 2.0 * s.D * math.log(s.D * t**3)


@dataclass(frozen=True)
class AcquisitionQuery:
    state: PosteriorState
    t: int
    beta: BetaSchedule

    def __post_init__(self):
        if self.t < 1:
            raise ValueError(f"step index must be >= 1, got {self.t}")

    @property
    def beta_t(self) -> float:
        return beta(self.beta, self.t)


def ucb(q: AcquisitionQuery, x):
    mean, var = posterior_full(q.state, x)
    return mean + math.sqrt(q.beta_t) * np.sqrt(var)


def add_ucb_group(q: AcquisitionQuery, j: int, z):
    mean, var = posterior_group(q.state, j, z)
    return mean + math.sqrt(q.beta_t) * np.sqrt(var)


def add_ucb(q: AcquisitionQuery, x):
    """Sum of the group acquisitions at the projections of ``x``."""
    x = np.asarray(x, dtype=float)
    X = np.atleast_2d(x)
    total = sum(add_ucb_group(q, j, g.project(X)) for j, g in enumerate(q.state.kernel.groups))
    return float(total[0]) if x.ndim == 1 else total


def expected_improvement(mean, std, incumbent: float):
    """EI for maximization; an infinite incumbent falls back to ``std``."""
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    if not np.isfinite(incumbent):
        return std.copy() if std.ndim else float(std)
    imp = mean - incumbent
    safe = np.where(std > 0, std, 1.0)
    u = imp / safe
    val = np.where(std > 0, imp * stats.norm.cdf(u) + std * stats.norm.pdf(u), np.maximum(imp, 0.0))
    val = np.maximum(val, 0.0)
    return float(val) if val.ndim == 0 else val


def ei(state: PosteriorState, x, incumbent: float):
    mean, var = posterior_full(state, x)
    return expected_improvement(mean, np.sqrt(var), incumbent)
