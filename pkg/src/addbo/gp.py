"""Exact GP inference over an additive kernel.

A :class:`PosteriorState` caches one Cholesky factor of
``K = k(X, X) + eta^2 I`` and answers both full-function queries and
per-group queries from it, so the factor is computed once per fit no matter
how many groups the kernel has.
"""

from __future__ import annotations

import logging
import math
import warnings
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import linalg

from .kernels import AdditiveKernel, BaseKernel, GroupKernel, gram

logger = logging.getLogger(__name__)

#: Instrumentation. ``fit`` counts posterior factorizations, ``lml`` counts
#: factorizations done while scoring hyperparameters, ``negative_variance``
#: counts clamps of variances below ``-VARIANCE_WARN``.
COUNTERS: Counter = Counter()

JITTER_START = 1e-10
JITTER_MAX = 1e-4
VARIANCE_WARN = 1e-6


class FactorizationError(np.linalg.LinAlgError):
    def __init__(self, jitter: float):
        super().__init__(f"covariance matrix not positive definite even with relative jitter {jitter:g}")
        self.jitter = jitter


class NumericalHealthWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        Y = np.asarray(self.Y, dtype=float).ravel()
        if X.ndim == 1:
            X = X.reshape(len(Y), -1) if len(Y) else X.reshape(0, 0)
        if X.shape[0] != Y.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows but Y has {Y.shape[0]} entries")
        if X.size and (X.min() < 0.0 or X.max() > 1.0):
            raise ValueError("query points must lie in the unit cube")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @property
    def n(self) -> int:
        return self.Y.shape[0]

    @classmethod
    def empty(cls, dim: int) -> "Dataset":
        return cls(np.zeros((0, dim)), np.zeros(0))

    def append(self, x, y: float) -> "Dataset":
        x = np.asarray(x, dtype=float).reshape(1, -1)
        return Dataset(np.vstack([self.X.reshape(-1, x.shape[1]), x]), np.append(self.Y, y))


@dataclass(frozen=True)
class NoiseModel:
    eta: float

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError(f"noise standard deviation must be positive, got {self.eta}")

    @property
    def variance(self) -> float:
        return self.eta**2


@dataclass(frozen=True)
class PosteriorState:
    data: Dataset
    kernel: AdditiveKernel
    noise: NoiseModel
    chol: np.ndarray | None
    alpha: np.ndarray | None
    offset: float = 0.0
    jitter: float = 0.0

    @property
    def n(self) -> int:
        return self.data.n

    @property
    def is_prior(self) -> bool:
        return self.chol is None

    def covariance_matrix(self) -> np.ndarray:
        """``K`` including the noise and any jitter that was needed."""
        K = gram(self.kernel, self.data.X) + self.noise.variance * np.eye(self.n)
        return K + self.jitter * np.mean(np.diag(K)) * np.eye(self.n)


def _factorize(K: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor, escalating a relative diagonal jitter on failure."""
    scale = float(np.mean(np.diag(K))) if K.size else 1.0
    jitter = 0.0
    while True:
        try:
            L = linalg.cholesky(K + jitter * scale * np.eye(K.shape[0]), lower=True, check_finite=True)
            return L, jitter
        except (np.linalg.LinAlgError, linalg.LinAlgError):
            if jitter >= JITTER_MAX:
                raise FactorizationError(jitter) from None
            jitter = JITTER_START if jitter == 0.0 else jitter * 10.0
            jitter = min(jitter, JITTER_MAX)


def fit(data: Dataset, kernel: AdditiveKernel, noise: NoiseModel, center: bool = False) -> PosteriorState:
    """Factor ``K`` once and cache ``alpha = K^{-1} (Y - offset)``.

    With ``center=True`` the observations are shifted by their mean before
    solving and the mean is added back to every posterior mean.
    """
    if data.n == 0:
        return PosteriorState(data, kernel, noise, None, None)
    if data.X.shape[1] != kernel.ambient_dim:
        raise ValueError(f"data has {data.X.shape[1]} columns, kernel expects {kernel.ambient_dim}")
    offset = float(np.mean(data.Y)) if center else 0.0
    K = gram(kernel, data.X) + noise.variance * np.eye(data.n)
    L, jitter = _factorize(K)
    COUNTERS["fit"] += 1
    if jitter:
        logger.debug("factorization needed relative jitter %g", jitter)
    alpha = linalg.cho_solve((L, True), data.Y - offset)
    return PosteriorState(data, kernel, noise, L, alpha, offset, jitter)


def _clamp(var: np.ndarray) -> np.ndarray:
    bad = var < -VARIANCE_WARN
    if np.any(bad):
        COUNTERS["negative_variance"] += int(np.sum(bad))
        warnings.warn(f"posterior variance {var.min():.3g} clamped to 0", NumericalHealthWarning, stacklevel=3)
    return np.maximum(var, 0.0)


def _moments(state: PosteriorState, kx: np.ndarray, prior: np.ndarray, offset: float):
    # kx: m x n cross-covariance, prior: m prior variances
    if state.is_prior:
        return np.full(prior.shape, offset), np.maximum(prior, 0.0)
    mean = kx @ state.alpha + offset
    v = linalg.solve_triangular(state.chol, kx.T, lower=True, check_finite=False)
    var = prior - np.einsum("ij,ij->j", v, v)
    return mean, _clamp(var)


def _maybe_scalar(x: np.ndarray, mean: np.ndarray, var: np.ndarray):
    if x.ndim == 1:
        return float(mean[0]), float(var[0])
    return mean, var


def posterior_full(state: PosteriorState, x):
    """Posterior mean and variance of f at ``x`` (a D-vector or an m x D batch)."""
    x = np.asarray(x, dtype=float)
    X = np.atleast_2d(x)
    if X.shape[1] != state.kernel.ambient_dim:
        raise ValueError(f"dimension mismatch: expected {state.kernel.ambient_dim}, got {X.shape[1]}")
    prior = state.kernel.diag(X)
    kx = state.kernel.matrix(X, state.data.X) if not state.is_prior else None
    mean, var = _moments(state, kx, prior, state.offset)
    return _maybe_scalar(x, mean, var)


def posterior_group(state: PosteriorState, j: int, z):
    """Posterior of the group-``j`` component at group-space point(s) ``z``.

    Uses the full additive ``K`` from the fit. When the state is centered,
    each group mean carries ``offset / M`` so the group means still sum to
    the full posterior mean.
    """
    k = state.kernel
    g = k._group(j)
    z = np.asarray(z, dtype=float)
    Z = np.atleast_2d(z)
    if Z.shape[1] != g.dim:
        raise ValueError(f"group {j} has {g.dim} coordinates, got {Z.shape[1]}")
    prior = k.group_diag(j, Z)
    kx = k.group_matrix(j, Z, state.data.X) if not state.is_prior else None
    mean, var = _moments(state, kx, prior, state.offset / k.num_groups)
    return _maybe_scalar(z, mean, var)


def log_marginal_likelihood(data: Dataset, kernel: AdditiveKernel, noise: NoiseModel, center: bool = False) -> float:
    if data.n == 0:
        raise ValueError("marginal likelihood needs at least one observation")
    K = gram(kernel, data.X) + noise.variance * np.eye(data.n)
    L, _ = _factorize(K)
    COUNTERS["lml"] += 1
    y = data.Y - (np.mean(data.Y) if center else 0.0)
    a = linalg.solve_triangular(L, y, lower=True, check_finite=False)
    return float(-0.5 * a @ a - np.sum(np.log(np.diag(L))) - 0.5 * data.n * math.log(2.0 * math.pi))


@dataclass(frozen=True)
class SearchSpace:
    """Log-uniform grid bounds for the shared scale and bandwidth.

    With ``relative_scale`` the scale bounds multiply ``var(Y) / M`` so that
    the grid follows the magnitude of the observations.
    """

    sigma_min: float = 0.01
    sigma_max: float = 10.0
    h_min: float = 0.01
    h_max: float = 1.0
    grid: int = 10
    relative_scale: bool = True

    def __post_init__(self):
        if not (0 < self.sigma_min <= self.sigma_max and 0 < self.h_min <= self.h_max):
            raise ValueError("search bounds must be positive and ordered")
        if self.grid < 1:
            raise ValueError("grid size must be at least 1")

    def scale_grid(self, data: Dataset, num_groups: int) -> np.ndarray:
        base = 1.0
        if self.relative_scale and data.n > 1:
            v = float(np.var(data.Y))
            base = v / num_groups if v > 0 else 1.0
        return base * np.geomspace(self.sigma_min, self.sigma_max, self.grid)

    def bandwidth_grid(self) -> np.ndarray:
        return np.geomspace(self.h_min, self.h_max, self.grid)


def with_shared_params(kernel: AdditiveKernel, scale: float, bandwidth: float) -> AdditiveKernel:
    """Every group gets the same base kernel with the given scale and bandwidth."""
    groups = tuple(GroupKernel(g.base.with_params(scale=scale, bandwidth=bandwidth), g.indices) for g in kernel.groups)
    return AdditiveKernel(groups, kernel.ambient_dim)


def with_groups(kernel: AdditiveKernel, groups: Sequence[Sequence[int]]) -> AdditiveKernel:
    """Same base kernel as the first group of ``kernel`` over a new partition."""
    base: BaseKernel = kernel.groups[0].base
    return AdditiveKernel.from_groups(base, groups, kernel.ambient_dim)


def optimize_hyperparams(
    data: Dataset,
    kernel_template: AdditiveKernel,
    noise: NoiseModel,
    search_space: SearchSpace | None = None,
    budget: int | None = None,
    seed: int = 0,
    center: bool = True,
) -> tuple[AdditiveKernel, NoiseModel]:
    """Grid search over a shared (scale, bandwidth) maximizing the marginal likelihood.

    The template itself is always the first candidate. ``budget`` caps the
    number of candidates scored; when it is smaller than the grid the grid
    points are subsampled with ``seed``.
    """
    space = search_space or SearchSpace()
    first = kernel_template.groups[0].base
    grid = [(s, h) for s in space.scale_grid(data, kernel_template.num_groups) for h in space.bandwidth_grid()]
    if budget is not None:
        if budget < 1:
            raise ValueError("budget must be at least 1")
        if budget - 1 < len(grid):
            rng = np.random.default_rng(seed)
            keep = np.sort(rng.choice(len(grid), size=budget - 1, replace=False))
            grid = [grid[i] for i in keep]
    candidates = [(first.scale, first.bandwidth)] + grid

    best, best_ll = None, -np.inf
    for scale, h in candidates:
        k = with_shared_params(kernel_template, scale, h)
        try:
            ll = log_marginal_likelihood(data, k, noise, center=center)
        except FactorizationError:
            continue
        if ll > best_ll:
            best, best_ll = k, ll
    if best is None:
        raise FactorizationError(JITTER_MAX)
    return best, noise
