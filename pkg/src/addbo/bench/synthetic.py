"""Synthetic additive test functions built from a three-bump log-density."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import optimize
from scipy.special import logsumexp

MODE_WEIGHTS = (0.1, 0.1, 0.8)
CENTER_LOW, CENTER_HIGH = 0.15, 0.85
MIN_SEPARATION = 10.0  # in bandwidths
UNUSED_COORD = 0.5


def bump_bandwidth(dtilde: int) -> float:
    return 0.01 * dtilde**0.1


@dataclass(frozen=True)
class SyntheticSpec:
    ambient_dim: int
    group_dim: int
    num_groups: int
    seed: int = 0
    centers: tuple[tuple[float, ...], ...] | None = None

    def __post_init__(self):
        if min(self.ambient_dim, self.group_dim, self.num_groups) < 1:
            raise ValueError("dimensions must be positive")
        if self.group_dim * self.num_groups > self.ambient_dim:
            raise ValueError(
                f"{self.num_groups} groups of size {self.group_dim} do not fit in {self.ambient_dim} dimensions"
            )
        if self.centers is not None:
            c = np.asarray(self.centers, dtype=float)
            if c.shape != (3, self.group_dim) or c.min() < 0 or c.max() > 1:
                raise ValueError("centers must be three points in the unit cube of the group dimension")
            object.__setattr__(self, "centers", tuple(tuple(float(v) for v in row) for row in c))

    @property
    def bandwidth(self) -> float:
        return bump_bandwidth(self.group_dim)


def _draw(spec: SyntheticSpec) -> tuple[np.ndarray, list[tuple[int, ...]]]:
    rng = np.random.default_rng(spec.seed)
    if spec.centers is not None:
        centers = np.asarray(spec.centers)
    else:
        sep = MIN_SEPARATION * spec.bandwidth
        while True:
            centers = rng.uniform(CENTER_LOW, CENTER_HIGH, size=(3, spec.group_dim))
            dists = [np.linalg.norm(centers[a] - centers[b]) for a, b in ((0, 1), (0, 2), (1, 2))]
            if min(dists) >= sep:
                break
    perm = rng.permutation(spec.ambient_dim)
    d = spec.group_dim
    groups = [tuple(sorted(int(i) for i in perm[j * d : (j + 1) * d])) for j in range(spec.num_groups)]
    return centers, groups


class BumpFunction:
    """log(sum_i w_i h^-d exp(-|x - v_i|^2 / (2 h^2))) on [0, 1]^d, evaluated in log space."""

    def __init__(self, centers: np.ndarray, bandwidth: float, weights: Sequence[float] = MODE_WEIGHTS):
        self.centers = np.asarray(centers, dtype=float)
        self.bandwidth = float(bandwidth)
        self.weights = np.asarray(weights, dtype=float)
        self.dim = self.centers.shape[1]
        self._logw = np.log(self.weights) - self.dim * np.log(self.bandwidth)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        X = np.atleast_2d(x)
        sq = ((X[:, None, :] - self.centers[None, :, :]) ** 2).sum(-1)
        vals = logsumexp(self._logw[None, :] - sq / (2.0 * self.bandwidth**2), axis=1)
        return float(vals[0]) if x.ndim == 1 else vals

    def gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        sq = ((x[None, :] - self.centers) ** 2).sum(-1)
        a = self._logw - sq / (2.0 * self.bandwidth**2)
        w = np.exp(a - logsumexp(a))
        return -(w[:, None] * (x[None, :] - self.centers)).sum(0) / self.bandwidth**2

    def maximize(self) -> tuple[np.ndarray, float]:
        """Local refinement from the heaviest mode."""
        start = self.centers[int(np.argmax(self.weights))]
        res = optimize.minimize(
            lambda z: -self(z),
            start,
            jac=lambda z: -self.gradient(z),
            method="L-BFGS-B",
            bounds=[(0.0, 1.0)] * self.dim,
            options={"ftol": 1e-15, "gtol": 1e-12},
        )
        x = res.x if -res.fun >= self(start) else start
        return np.asarray(x, dtype=float), float(self(x))


def build_fdtilde(spec: SyntheticSpec) -> BumpFunction:
    centers, _ = _draw(spec)
    return BumpFunction(centers, spec.bandwidth)


class CompositeFunction:
    """Sum of one bump function per assigned coordinate group; other coordinates are ignored."""

    def __init__(self, spec: SyntheticSpec):
        self.spec = spec
        centers, groups = _draw(spec)
        self.component = BumpFunction(centers, spec.bandwidth)
        self.groups = groups
        self.dim = spec.ambient_dim
        z_opt, f_opt = self.component.maximize()
        x_star = np.full(self.dim, UNUSED_COORD)
        for g in groups:
            x_star[list(g)] = z_opt
        self.x_star = x_star
        self.f_star = float(self(x_star))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        X = np.atleast_2d(x)
        if X.shape[1] != self.dim:
            raise ValueError(f"expected {self.dim} coordinates, got {X.shape[1]}")
        total = sum(self.component(X[:, list(g)]) for g in self.groups)
        return float(total[0]) if x.ndim == 1 else total

    @property
    def unused(self) -> list[int]:
        used = {i for g in self.groups for i in g}
        return [i for i in range(self.dim) if i not in used]

    def fixture(self) -> dict:
        return {
            "D": self.dim,
            "dtilde": self.spec.group_dim,
            "Mtilde": self.spec.num_groups,
            "seed": self.spec.seed,
            "bandwidth": self.spec.bandwidth,
            "centers": self.component.centers.tolist(),
            "groups": [list(g) for g in self.groups],
            "x_star": self.x_star.tolist(),
            "f_star": self.f_star,
        }


def build_composite(spec: SyntheticSpec) -> CompositeFunction:
    return CompositeFunction(spec)
